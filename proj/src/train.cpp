#include "pointsentinel/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "pointsentinel/eval.hpp"

namespace ps::train {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ValidationError(format_msg("unknown optimizer '", s, "'"));
}

void validate(const TrainConfig& cfg) {
  PS_CHECK(cfg.learning_rate > 0.0, "train config: learning_rate must be positive");
  PS_CHECK(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
  PS_CHECK(cfg.epochs >= 0, "train config: epochs must be >= 0");
  PS_CHECK(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
           "train config: adam betas must be in [0,1)");
  PS_CHECK(cfg.eps > 0.0, "train config: eps must be positive");
  PS_CHECK(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "train config: momentum must be in [0,1)");
  PS_CHECK(cfg.val_delta_max > 0.0, "train config: val_delta_max must be positive");
  PS_CHECK(cfg.threads >= 0, "train config: threads must be >= 0");
  nn::validate(cfg.backbone);
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"head", nn::to_string(cfg.head)},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", to_string(cfg.optimizer)},
          {"momentum", cfg.momentum},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"backbone", nn::backbone_to_json(cfg.backbone)},
          {"val_delta_max", cfg.val_delta_max},
          {"threads", cfg.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.contains("head")) cfg.head = nn::head_variant_from_string(j.at("head").get<std::string>());
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  if (j.contains("optimizer")) {
    cfg.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  }
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("backbone")) cfg.backbone = nn::backbone_from_json(j.at("backbone"));
  cfg.val_delta_max = j.value("val_delta_max", cfg.val_delta_max);
  cfg.threads = j.value("threads", cfg.threads);
  validate(cfg);
  return cfg;
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              double lr, double momentum) {
  PS_CHECK(param.size() == grad.size() && param.size() == velocity.size(),
           "sgd_step: size mismatch (param ", param.size(), ", grad ", grad.size(),
           ", velocity ", velocity.size(), ")");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double vel = momentum * static_cast<double>(velocity[i]) + static_cast<double>(grad[i]);
    velocity[i] = static_cast<float>(vel);
    param[i] = static_cast<float>(static_cast<double>(param[i]) - lr * vel);
  }
}

void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m,
               std::span<float> v, std::int64_t t, double lr, double beta1, double beta2,
               double eps) {
  PS_CHECK(param.size() == grad.size() && param.size() == m.size() && param.size() == v.size(),
           "adam_step: size mismatch (param ", param.size(), ", grad ", grad.size(), ", m ",
           m.size(), ", v ", v.size(), ")");
  PS_CHECK(t >= 1, "adam_step: step index must be >= 1");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    param[i] = static_cast<float>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

// --- checkpoint -----------------------------------------------------------------

namespace {

OptimizerState make_opt_state(const TrainConfig& cfg, const nn::DetectionModel& model) {
  OptimizerState st;
  for (const nn::Param& p : model.params()) {
    st.m.emplace_back(p.value.size(), 0.0f);
    if (cfg.optimizer == OptimizerKind::adam) st.v.emplace_back(p.value.size(), 0.0f);
  }
  return st;
}

}  // namespace

Checkpoint::Checkpoint(const TrainConfig& cfg)
    : config(cfg), model(cfg.backbone, cfg.head, cfg.seed), opt(make_opt_state(cfg, model)) {
  validate(cfg);
}

nn::DetectionModel Checkpoint::best_model() const {
  nn::DetectionModel m = model;
  if (best_epoch >= 0) {
    PS_CHECK(best_params.size() == m.params().size(), "checkpoint: best snapshot out of sync");
    for (std::size_t i = 0; i < best_params.size(); ++i) {
      m.mutable_params()[i].value = best_params[i];
    }
  }
  return m;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nn::CheckpointFile file;
  file.header["kind"] = "train";
  file.header["arch"] = nn::backbone_to_json(ck.config.backbone);
  file.header["head"] = nn::to_string(ck.config.head);
  file.header["train_config"] = train_config_to_json(ck.config);
  file.header["epochs_completed"] = ck.epochs_completed;
  file.header["opt_step"] = ck.opt.step;
  file.header["best_metric"] = ck.best_metric;
  file.header["best_epoch"] = ck.best_epoch;
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochStats& e : ck.history) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_precision_auc", e.val_precision_auc}});
  }
  file.header["history"] = hist;

  nn::append_model_buffers(ck.model, "", file.buffers);
  const auto& params = ck.model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.buffers.push_back({"opt.m." + params[i].name, params[i].shape, ck.opt.m[i]});
  }
  if (ck.config.optimizer == OptimizerKind::adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      file.buffers.push_back({"opt.v." + params[i].name, params[i].shape, ck.opt.v[i]});
    }
  }
  if (ck.best_epoch >= 0) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      file.buffers.push_back({"best." + params[i].name, params[i].shape, ck.best_params[i]});
    }
  }
  save_checkpoint_file(file, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const nn::CheckpointFile file = nn::load_checkpoint_file(path);
  PS_CHECK(file.header.value("kind", "") == "train", "checkpoint '", path,
           "': not a training checkpoint");
  Checkpoint ck(train_config_from_json(file.header.at("train_config")));

  auto find_buffer = [&](const std::string& name) -> const nn::NamedBuffer& {
    for (const nn::NamedBuffer& b : file.buffers) {
      if (b.name == name) return b;
    }
    throw ValidationError(format_msg("checkpoint '", path, "': missing buffer '", name, "'"));
  };

  auto& params = ck.model.mutable_params();
  for (nn::Param& p : params) {
    const nn::NamedBuffer& b = find_buffer(p.name);
    PS_CHECK(b.shape == p.shape, "checkpoint '", path, "': buffer '", p.name,
             "' shape mismatch");
    p.value = b.data;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.opt.m[i] = find_buffer("opt.m." + params[i].name).data;
    if (ck.config.optimizer == OptimizerKind::adam) {
      ck.opt.v[i] = find_buffer("opt.v." + params[i].name).data;
    }
  }
  ck.opt.step = file.header.value("opt_step", std::int64_t{0});
  ck.epochs_completed = file.header.value("epochs_completed", 0);
  ck.best_metric = file.header.value("best_metric", -1.0);
  ck.best_epoch = file.header.value("best_epoch", -1);
  if (ck.best_epoch >= 0) {
    ck.best_params.clear();
    for (const nn::Param& p : params) {
      ck.best_params.push_back(find_buffer("best." + p.name).data);
    }
  }
  for (const auto& ej : file.header.value("history", nlohmann::json::array())) {
    ck.history.push_back({ej.at("epoch").get<int>(), ej.at("train_loss").get<double>(),
                          ej.at("val_precision_auc").get<double>()});
  }
  return ck;
}

// --- training loop ----------------------------------------------------------------

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("POINTSENTINEL_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1) n = std::min(n, c);
  }
  return n;
}

loss::LossValue sample_loss(const nn::DetectionModel& model, const nn::DetectionModel::Binding& b,
                            ad::Graph& g, const data::LoadedSample& sample) {
  PS_CHECK(sample.record.point.has_value(), "training sample '", sample.record.case_id,
           "' has no ground-truth point");
  const float x = sample.record.point->x;
  const float y = sample.record.point->y;
  ad::Tensor img = model.image_leaf(g, sample.image);
  switch (model.variant()) {
    case nn::HeadVariant::regression: {
      ad::Tensor out = model.regression_output(b, img);
      return loss::mse_point_loss(out, x / static_cast<float>(sample.image.width),
                                  y / static_cast<float>(sample.image.height));
    }
    case nn::HeadVariant::pixelwise: {
      ad::Tensor logits = model.map_logits(b, img);
      const ad::Shape& s = logits.shape();
      const std::vector<float> target =
          nn::encode_target(x, y, s[0], s[1], model.backbone().output_stride);
      return loss::balanced_bce_loss(ad::sigmoid(logits), target);
    }
    case nn::HeadVariant::spatial_softmax:
    default: {
      ad::Tensor logits = model.map_logits(b, img);
      const ad::Shape& s = logits.shape();
      const std::vector<float> target =
          nn::encode_target(x, y, s[0], s[1], model.backbone().output_stride);
      return loss::spatial_softmax_nll(logits, target);
    }
  }
}

namespace {

// Runs fn(i) for i in [0, n) across `threads` workers (strided assignment).
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void run_epochs(Checkpoint& ck, const Dataset& train_set, const Dataset& val_set,
                const TrainHooks& hooks) {
  const TrainConfig& cfg = ck.config;
  PS_CHECK(!train_set.empty() && !val_set.empty(), "train: empty dataset");
  const int threads = resolve_threads(cfg.threads);
  const int n = static_cast<int>(train_set.size());
  auto& params = ck.model.mutable_params();
  const std::size_t n_params = params.size();

  // Per-sample gradient slots, reduced in sample order after each batch so
  // the result is independent of thread scheduling.
  const int max_batch = std::min(cfg.batch_size, n);
  std::vector<std::vector<std::vector<float>>> sample_grads(
      static_cast<std::size_t>(max_batch));
  std::vector<double> sample_losses(static_cast<std::size_t>(max_batch));

  for (int epoch = ck.epochs_completed; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xE9000000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int epoch_count = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bn = std::min(cfg.batch_size, n - start);

      parallel_for(bn, threads, [&](int s) {
        ad::Graph g;
        nn::DetectionModel::Binding bind = ck.model.bind(g);
        const data::LoadedSample& sample =
            train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(start + s)])];
        loss::LossValue lv = sample_loss(ck.model, bind, g, sample);
        g.backward(lv.scalar);
        sample_losses[static_cast<std::size_t>(s)] = lv.scalar.item();
        auto& slots = sample_grads[static_cast<std::size_t>(s)];
        slots.resize(n_params);
        for (std::size_t p = 0; p < n_params; ++p) {
          auto grad = bind.leaves[p].grad();
          slots[p].assign(grad.begin(), grad.end());
        }
      });

      double batch_loss = 0.0;
      for (int s = 0; s < bn; ++s) batch_loss += sample_losses[static_cast<std::size_t>(s)];
      batch_loss /= bn;
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError(
            format_msg("training diverged (non-finite loss) at epoch ", epoch), epoch);
      }
      epoch_loss += batch_loss;
      ++epoch_count;

      // Mean gradient in fixed sample order.
      const double inv_bn = 1.0 / static_cast<double>(bn);
      ck.opt.step += 1;
      std::vector<float> grad_acc;
      for (std::size_t p = 0; p < n_params; ++p) {
        const std::size_t len = params[p].value.size();
        grad_acc.assign(len, 0.0f);
        for (int s = 0; s < bn; ++s) {
          const std::vector<float>& gs = sample_grads[static_cast<std::size_t>(s)][p];
          for (std::size_t k = 0; k < len; ++k) grad_acc[k] += gs[k];
        }
        for (std::size_t k = 0; k < len; ++k) {
          grad_acc[k] = static_cast<float>(static_cast<double>(grad_acc[k]) * inv_bn);
        }
        if (cfg.optimizer == OptimizerKind::sgd) {
          sgd_step(params[p].value, grad_acc, ck.opt.m[p], cfg.learning_rate, cfg.momentum);
        } else {
          adam_step(params[p].value, grad_acc, ck.opt.m[p], ck.opt.v[p], ck.opt.step,
                    cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / std::max(1, epoch_count);
    stats.val_precision_auc = val_precision_auc(ck.model, val_set, cfg.val_delta_max, threads);
    ck.history.push_back(stats);
    ck.epochs_completed = epoch + 1;

    if (stats.val_precision_auc > ck.best_metric) {
      ck.best_metric = stats.val_precision_auc;
      ck.best_epoch = epoch;
      ck.best_params.clear();
      for (const nn::Param& p : params) ck.best_params.push_back(p.value);
    }
    if (hooks.after_epoch) hooks.after_epoch(ck, stats);
  }
}

}  // namespace

Checkpoint train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                 const TrainHooks& hooks) {
  Checkpoint ck(cfg);
  run_epochs(ck, train_set, val_set, hooks);
  return ck;
}

void continue_training(Checkpoint& ck, const Dataset& train_set, const Dataset& val_set,
                       const TrainHooks& hooks) {
  run_epochs(ck, train_set, val_set, hooks);
}

std::vector<nn::PredictedPoint> predict_all(const nn::DetectionModel& model, const Dataset& set,
                                            int threads) {
  std::vector<nn::PredictedPoint> out(set.size());
  parallel_for(static_cast<int>(set.size()), resolve_threads(threads), [&](int i) {
    out[static_cast<std::size_t>(i)] = model.predict(set[static_cast<std::size_t>(i)].image);
  });
  return out;
}

std::vector<double> presence_scores(const nn::DetectionModel& model, const Dataset& set,
                                    int threads) {
  std::vector<double> out(set.size());
  parallel_for(static_cast<int>(set.size()), resolve_threads(threads), [&](int i) {
    out[static_cast<std::size_t>(i)] = static_cast<double>(
        nn::map_confidence(model.activation_map(set[static_cast<std::size_t>(i)].image)));
  });
  return out;
}

double val_precision_auc(const nn::DetectionModel& model, const Dataset& set, double delta_max,
                         int threads) {
  const std::vector<nn::PredictedPoint> preds = predict_all(model, set, threads);
  std::vector<double> errors;
  errors.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    errors.push_back(eval::localization_error(preds[i], set[i].record).relative);
  }
  return eval::precision_auc(errors, delta_max);
}

}  // namespace ps::train
