#ifndef POINTSENTINEL_MODEL_HPP
#define POINTSENTINEL_MODEL_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pointsentinel/image.hpp"
#include "pointsentinel/tensor.hpp"

namespace ps::nn {

enum class HeadVariant { regression, pixelwise, spatial_softmax };
std::string to_string(HeadVariant v);
HeadVariant head_variant_from_string(const std::string& s);

enum class ActivationKind { logit, sigmoid, spatial_softmax };

// Residual feature extractor. The stem halves the resolution once (4x4/s2
// conv) when output_stride >= 2, each extra power of two adds a 2x2/s2
// downsampling conv, and num_blocks residual blocks (conv-relu-conv + skip)
// run at the final resolution with a constant channel width.
struct BackboneConfig {
  int in_channels = 1;
  int base_channels = 16;
  int num_blocks = 4;
  int output_stride = 4;
};

void validate(const BackboneConfig& cfg);

struct Param {
  std::string name;
  ad::Shape shape;
  std::vector<float> value;
};

// 2-D score map at a known output stride.
struct ActivationMap {
  int h = 0;
  int w = 0;
  int output_stride = 1;
  ActivationKind kind = ActivationKind::logit;
  std::vector<float> scores;
};

struct PredictedPoint {
  float x = 0.0f;
  float y = 0.0f;
  float score = 0.0f;
};

using HeadOutput = std::variant<PredictedPoint, ActivationMap>;

class DetectionModel {
 public:
  DetectionModel(const BackboneConfig& backbone, HeadVariant head, std::uint64_t init_seed);

  // Leaf tensors for every parameter, index-aligned with params(). Bind once
  // per graph; after backward() the leaves hold the parameter gradients.
  struct Binding {
    std::vector<ad::Tensor> leaves;
  };
  Binding bind(ad::Graph& g) const;

  // image: [in_channels, H, W] with H, W divisible by output_stride.
  ad::Tensor features(const Binding& b, const ad::Tensor& image) const;

  // Map heads: per-cell logits as [h, w].
  ad::Tensor map_logits(const Binding& b, const ad::Tensor& image) const;

  // Regression head: 2 sigmoid-squashed values, normalized (x, y) in (0,1).
  ad::Tensor regression_output(const Binding& b, const ad::Tensor& image) const;

  // Dispatches on the head variant given already-extracted features.
  HeadOutput head_forward(const Binding& b, const ad::Tensor& features, int image_h,
                          int image_w) const;

  // Inference conveniences (build and drop a private graph).
  ActivationMap activation_map(const Image& img) const;
  PredictedPoint predict(const Image& img) const;

  ad::Tensor image_leaf(ad::Graph& g, const Image& img) const;

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& mutable_params() { return params_; }
  HeadVariant variant() const { return head_; }
  const BackboneConfig& backbone() const { return backbone_; }

 private:
  BackboneConfig backbone_;
  HeadVariant head_;
  std::vector<Param> params_;
  int stem_index_ = 0;
  int num_downs_ = 0;
  int param_index(const std::string& name) const;
};

// Map decoding (cell-center convention): the argmax cell (i,j) maps to image
// point ((j+0.5)*stride, (i+0.5)*stride); ties break to the lowest row-major
// index.
PredictedPoint decode_argmax(const ActivationMap& map, int image_h, int image_w);

// Max post-activation score; the ROC score for presence classification.
float map_confidence(const ActivationMap& map);

// One-hot target grid: cell (floor(y/stride), floor(x/stride)), clamped to the
// grid. The point must lie inside the stride*map sized image.
std::vector<float> encode_target(float x, float y, int map_h, int map_w, int stride);

// --- checkpoint container -----------------------------------------------------
//
// Layout: 8-byte magic "PSCKPT1\n", uint64 little-endian header length, JSON
// header, then one raw little-endian float32 buffer per header["buffers"]
// entry, in order.

struct NamedBuffer {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;
};

struct CheckpointFile {
  nlohmann::json header;  // "buffers" is filled from the buffer list on save
  std::vector<NamedBuffer> buffers;
};

void save_checkpoint_file(const CheckpointFile& file, const std::string& path);
CheckpointFile load_checkpoint_file(const std::string& path);

void save_model(const DetectionModel& model, const std::string& path);
DetectionModel load_model(const std::string& path);

// (De)serialization helpers shared with the trainer's checkpoint.
nlohmann::json backbone_to_json(const BackboneConfig& cfg);
BackboneConfig backbone_from_json(const nlohmann::json& j);
DetectionModel model_from_header(const nlohmann::json& header,
                                 const std::vector<NamedBuffer>& buffers,
                                 const std::string& param_prefix);
void append_model_buffers(const DetectionModel& model, const std::string& param_prefix,
                          std::vector<NamedBuffer>& buffers);

}  // namespace ps::nn

#endif  // POINTSENTINEL_MODEL_HPP
