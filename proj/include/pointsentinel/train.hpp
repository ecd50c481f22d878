#ifndef POINTSENTINEL_TRAIN_HPP
#define POINTSENTINEL_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pointsentinel/data.hpp"
#include "pointsentinel/losses.hpp"
#include "pointsentinel/model.hpp"

namespace ps::train {

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  nn::HeadVariant head = nn::HeadVariant::spatial_softmax;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.0;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 1;
  nn::BackboneConfig backbone;
  double val_delta_max = 0.15;  // precision-AUC threshold for the val metric
  int threads = 0;              // 0 = hardware concurrency (POINTSENTINEL_THREADS caps both)
};

void validate(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Standard update rules. State buffers must match the parameter size.
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              double lr, double momentum);
void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m,
               std::span<float> v, std::int64_t t, double lr, double beta1, double beta2,
               double eps);

struct OptimizerState {
  std::vector<std::vector<float>> m;  // adam first moment / sgd velocity
  std::vector<std::vector<float>> v;  // adam second moment (unused for sgd)
  std::int64_t step = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_precision_auc = 0.0;
};

// Full training state: current parameters plus the best-validation snapshot,
// so saving and reloading reproduces the identical subsequent trajectory.
struct Checkpoint {
  explicit Checkpoint(const TrainConfig& cfg);

  TrainConfig config;
  nn::DetectionModel model;
  OptimizerState opt;
  int epochs_completed = 0;
  std::vector<EpochStats> history;
  std::vector<std::vector<float>> best_params;
  double best_metric = -1.0;
  int best_epoch = -1;

  // Model with the best-validation parameters (falls back to current).
  nn::DetectionModel best_model() const;
};

using Dataset = std::vector<data::LoadedSample>;

struct TrainHooks {
  // Called after every epoch with the up-to-date checkpoint.
  std::function<void(const Checkpoint&, const EpochStats&)> after_epoch;
};

// Runs cfg.epochs of seeded mini-batch training. Per-sample forward/backward
// passes run on worker threads; gradients reduce in sample order, so the
// result is bitwise independent of the thread count. Throws DivergenceError
// (naming the epoch) when the loss stops being finite.
Checkpoint train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                 const TrainHooks& hooks = {});

// Continues a loaded checkpoint up to config.epochs; resumed training matches
// the uninterrupted run exactly.
void continue_training(Checkpoint& ck, const Dataset& train_set, const Dataset& val_set,
                       const TrainHooks& hooks = {});

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Graph-building loss for one sample under the given head.
loss::LossValue sample_loss(const nn::DetectionModel& model, const nn::DetectionModel::Binding& b,
                            ad::Graph& g, const data::LoadedSample& sample);

// Deterministic parallel inference.
std::vector<nn::PredictedPoint> predict_all(const nn::DetectionModel& model, const Dataset& set,
                                            int threads);
double val_precision_auc(const nn::DetectionModel& model, const Dataset& set, double delta_max,
                         int threads);

// Max post-activation map score per sample (the presence/ROC score). Map
// heads only.
std::vector<double> presence_scores(const nn::DetectionModel& model, const Dataset& set,
                                    int threads);

// Applies the POINTSENTINEL_THREADS cap; requested == 0 means hardware
// concurrency.
int resolve_threads(int requested);

}  // namespace ps::train

#endif  // POINTSENTINEL_TRAIN_HPP
