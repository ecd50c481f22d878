#ifndef POINTSENTINEL_LOSSES_HPP
#define POINTSENTINEL_LOSSES_HPP

#include <map>
#include <string>
#include <vector>

#include "pointsentinel/tensor.hpp"

namespace ps::loss {

// Training objectives. All return a graph-attached scalar so callers can run
// backward() through the model.

struct LossValue {
  ad::Tensor scalar;
  std::map<std::string, float> diagnostics;
};

// Softmax over all spatial positions of a [h,w] logit map.
ad::Tensor spatial_softmax(const ad::Tensor& logits);

// loss = (1 / (h*w)) * (-log softmax(logits) at the single target cell).
// target is a row-major one-hot grid of the same size as logits.
LossValue spatial_softmax_nll(const ad::Tensor& logits, const std::vector<float>& target);

// Class-balanced pixel-wise binary cross-entropy: the positive set and the
// negative set each contribute total weight 0.5 regardless of their sizes.
// sigmoid_map holds per-cell probabilities in (0,1); probabilities are clamped
// to [1e-7, 1-1e-7] before the logs.
LossValue balanced_bce_loss(const ad::Tensor& sigmoid_map, const std::vector<float>& target);

// loss = ((x̂-x)² + (ŷ-ŷ_t)²) / 2 on normalized coordinates in [0,1]².
// pred is a 2-element tensor (x, y).
LossValue mse_point_loss(const ad::Tensor& pred, float target_x, float target_y);

// Validates a one-hot grid and returns the index of its single 1.
std::size_t one_hot_index(const std::vector<float>& target);

}  // namespace ps::loss

#endif  // POINTSENTINEL_LOSSES_HPP
