#ifndef POINTSENTINEL_IMAGE_HPP
#define POINTSENTINEL_IMAGE_HPP

#include <vector>

#include "pointsentinel/common.hpp"

namespace ps {

// Grayscale image, row-major floats in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0f) {}

  float at(int y, int x) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  float& at(int y, int x) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const { return pixels.size(); }
};

}  // namespace ps

#endif  // POINTSENTINEL_IMAGE_HPP
