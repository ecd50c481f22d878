#include "pointsentinel/synth.hpp"

#include <algorithm>
#include <cmath>

namespace ps::synth {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void validate(const SceneConfig& cfg) {
  PS_CHECK(cfg.height >= 16 && cfg.width >= 16, "scene config: image must be at least 16x16");
  PS_CHECK(cfg.noise_std >= 0.0f, "scene config: noise_std must be >= 0");
  PS_CHECK(cfg.tube_width_px >= 1, "scene config: tube_width_px must be >= 1");
  PS_CHECK(cfg.ett_min_len_frac > 0.0f && cfg.ett_min_len_frac <= 1.0f &&
               cfg.ett_max_len_frac > 0.0f && cfg.ett_max_len_frac <= 1.0f,
           "scene config: tube length fractions must be in (0,1]");
  PS_CHECK(cfg.ett_min_len_frac <= cfg.ett_max_len_frac,
           "scene config: ett_min_len_frac > ett_max_len_frac");
  PS_CHECK(cfg.tt_len_frac > 0.0f && cfg.tt_len_frac <= 0.5f,
           "scene config: tt_len_frac must be in (0, 0.5]");
  PS_CHECK(cfg.distractor_prob >= 0.0f && cfg.distractor_prob <= 1.0f,
           "scene config: distractor_prob must be in [0,1]");
  PS_CHECK(cfg.carina_branch_angle_deg > 0.0f && cfg.carina_branch_angle_deg < 180.0f,
           "scene config: carina_branch_angle_deg must be in (0,180)");
  if (cfg.pixel_spacing_mm) {
    PS_CHECK(*cfg.pixel_spacing_mm > 0.0f, "scene config: pixel_spacing_mm must be positive");
  }
}

nlohmann::json scene_config_to_json(const SceneConfig& cfg) {
  nlohmann::json j{{"height", cfg.height},
                   {"width", cfg.width},
                   {"noise_std", cfg.noise_std},
                   {"tube_width_px", cfg.tube_width_px},
                   {"ett_min_len_frac", cfg.ett_min_len_frac},
                   {"ett_max_len_frac", cfg.ett_max_len_frac},
                   {"tt_len_frac", cfg.tt_len_frac},
                   {"distractor_prob", cfg.distractor_prob},
                   {"target_class", data::to_string(cfg.target_class)},
                   {"carina_branch_angle_deg", cfg.carina_branch_angle_deg},
                   {"seed", cfg.seed},
                   {"tip_bias_frac_x", cfg.tip_bias_frac_x},
                   {"tip_bias_frac_y", cfg.tip_bias_frac_y}};
  if (cfg.pixel_spacing_mm) j["pixel_spacing_mm"] = *cfg.pixel_spacing_mm;
  return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig cfg;
  cfg.height = j.value("height", cfg.height);
  cfg.width = j.value("width", cfg.width);
  cfg.noise_std = j.value("noise_std", cfg.noise_std);
  cfg.tube_width_px = j.value("tube_width_px", cfg.tube_width_px);
  cfg.ett_min_len_frac = j.value("ett_min_len_frac", cfg.ett_min_len_frac);
  cfg.ett_max_len_frac = j.value("ett_max_len_frac", cfg.ett_max_len_frac);
  cfg.tt_len_frac = j.value("tt_len_frac", cfg.tt_len_frac);
  cfg.distractor_prob = j.value("distractor_prob", cfg.distractor_prob);
  if (j.contains("target_class")) {
    cfg.target_class = data::target_class_from_string(j.at("target_class").get<std::string>());
  }
  cfg.carina_branch_angle_deg = j.value("carina_branch_angle_deg", cfg.carina_branch_angle_deg);
  if (j.contains("pixel_spacing_mm") && !j.at("pixel_spacing_mm").is_null()) {
    cfg.pixel_spacing_mm = j.at("pixel_spacing_mm").get<float>();
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.tip_bias_frac_x = j.value("tip_bias_frac_x", cfg.tip_bias_frac_x);
  cfg.tip_bias_frac_y = j.value("tip_bias_frac_y", cfg.tip_bias_frac_y);
  validate(cfg);
  return cfg;
}

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

double dist_to_segment(double px, double py, const Seg& s) {
  const double dx = s.x1 - s.x0;
  const double dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0);
  const double cx = s.x0 + t * dx;
  const double cy = s.y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

// Bright-line layer: flat core of radius tube_width/2 with a Gaussian falloff
// (sigma 1 px, ~2 px visible reach). Overlapping segments combine by max so
// polyline joints do not glow.
void render_segments(std::vector<float>& layer, int h, int w, const std::vector<Seg>& segs,
                     double core_radius) {
  constexpr double kSigma = 1.0;
  const double reach = core_radius + 3.0 * kSigma;
  for (const Seg& s : segs) {
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - reach)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + reach)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - reach)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + reach)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d = dist_to_segment(static_cast<double>(x), static_cast<double>(y), s);
        double v;
        if (d <= core_radius) {
          v = 1.0;
        } else {
          const double e = (d - core_radius) / kSigma;
          if (e > 3.0) continue;
          v = std::exp(-0.5 * e * e);
        }
        float& cell = layer[static_cast<std::size_t>(y) * w + x];
        cell = std::max(cell, static_cast<float>(v));
      }
    }
  }
}

}  // namespace

SyntheticScene generate_scene(const SceneConfig& cfg, std::int64_t index, SceneContent content) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  const int h = cfg.height, w = cfg.width;
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);

  // Fixed draw order regardless of what gets rendered, so the same (cfg,
  // index) always yields the same geometry.
  const double bg_base = rng.uniform(0.30, 0.42);
  const double bg_gx = rng.uniform(-0.15, 0.15);
  const double bg_gy = rng.uniform(-0.15, 0.15);
  const double amplitude = rng.uniform(0.45, 0.60);

  const double margin_x = std::max<double>(cfg.tube_width_px, fw / 8.0);
  double tip_x = rng.uniform(margin_x, fw - margin_x);
  double tip_y = rng.uniform(cfg.ett_min_len_frac * fh, cfg.ett_max_len_frac * fh);
  tip_x += static_cast<double>(cfg.tip_bias_frac_x) * fw;
  tip_y += static_cast<double>(cfg.tip_bias_frac_y) * fh;
  PS_CHECK(tip_x >= 0.0 && tip_x < fw && tip_y >= 0.0 && tip_y < fh,
           "generate_scene: tip bias pushes tips outside the image");

  constexpr int kCtrl = 5;
  double jitter[kCtrl];
  const double jitter_scale = 0.05 * fw;
  for (double& j : jitter) j = rng.uniform(-jitter_scale, jitter_scale);

  const double distractor_coin = rng.uniform();
  const double tt_start_x = rng.uniform(margin_x, fw - margin_x);
  const double tt_start_y = rng.uniform(0.12, 0.30) * fh;
  const double tt_bow = rng.uniform(0.06, 0.12) * fw * (rng.uniform() < 0.5 ? -1.0 : 1.0);

  bool draw_target = content == SceneContent::standard || content == SceneContent::target_only;
  bool draw_distractor = content == SceneContent::distractor_only ||
                         (content == SceneContent::standard &&
                          distractor_coin < static_cast<double>(cfg.distractor_prob));

  std::vector<Seg> segs;
  if (draw_target) {
    if (cfg.target_class == data::TargetClass::ett_tip) {
      // Near-vertical polyline from the top edge down to the tip; jitter
      // tapers to zero so the last point is exactly the tip.
      double px = tip_x + jitter[0];
      double py = 0.0;
      for (int i = 1; i < kCtrl; ++i) {
        const double t = static_cast<double>(i) / (kCtrl - 1);
        const double nx = tip_x + jitter[i] * (1.0 - t);
        const double ny = tip_y * t;
        segs.push_back({px, py, nx, ny});
        px = nx;
        py = ny;
      }
    } else {
      // Carina analog: trachea line from the top plus two branches descending
      // from the junction.
      double px = tip_x + jitter[0];
      double py = 0.0;
      for (int i = 1; i < kCtrl; ++i) {
        const double t = static_cast<double>(i) / (kCtrl - 1);
        const double nx = tip_x + jitter[i] * (1.0 - t);
        const double ny = tip_y * t;
        segs.push_back({px, py, nx, ny});
        px = nx;
        py = ny;
      }
      const double half = 0.5 * cfg.carina_branch_angle_deg * kPi / 180.0;
      const double blen = 0.18 * fh;
      segs.push_back({tip_x, tip_y, tip_x - blen * std::sin(half), tip_y + blen * std::cos(half)});
      segs.push_back({tip_x, tip_y, tip_x + blen * std::sin(half), tip_y + blen * std::cos(half)});
    }
  }

  data::Point tt_tip{0.0f, 0.0f};
  if (draw_distractor) {
    const double len = cfg.tt_len_frac * fh;
    constexpr int kArc = 6;
    double px = tt_start_x;
    double py = tt_start_y;
    for (int i = 1; i <= kArc; ++i) {
      const double t = static_cast<double>(i) / kArc;
      const double nx = tt_start_x + tt_bow * std::sin(kPi * t);
      const double ny = tt_start_y + len * t;
      segs.push_back({px, py, nx, ny});
      px = nx;
      py = ny;
    }
    tt_tip = data::Point{static_cast<float>(px), static_cast<float>(py)};
  }

  std::vector<float> layer(static_cast<std::size_t>(h) * w, 0.0f);
  render_segments(layer, h, w, segs, 0.5 * cfg.tube_width_px);

  SyntheticScene scene;
  scene.image = Image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bg = bg_base + bg_gx * (static_cast<double>(x) / fw - 0.5) +
                        bg_gy * (static_cast<double>(y) / fh - 0.5) +
                        rng.normal() * static_cast<double>(cfg.noise_std);
      const double v = bg + amplitude * layer[static_cast<std::size_t>(y) * w + x];
      scene.image.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  scene.has_target = draw_target;
  scene.has_distractor = draw_distractor;
  if (draw_distractor) scene.distractor_tip = tt_tip;

  char case_id[32];
  std::snprintf(case_id, sizeof(case_id), "c%06lld", static_cast<long long>(index));
  scene.record.case_id = case_id;
  scene.record.patient_id = case_id;
  scene.record.target_class = cfg.target_class;
  scene.record.height = h;
  scene.record.width = w;
  scene.record.pixel_spacing_mm = cfg.pixel_spacing_mm;
  if (draw_target) {
    scene.record.point = data::Point{static_cast<float>(tip_x), static_cast<float>(tip_y)};
  }
  return scene;
}

std::vector<SyntheticScene> generate_dataset(const SceneConfig& cfg, int n,
                                             int patient_group_size) {
  PS_CHECK(n >= 1, "generate_dataset: n must be >= 1");
  PS_CHECK(patient_group_size >= 1, "generate_dataset: patient_group_size must be >= 1");
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticScene s = generate_scene(cfg, i, SceneContent::standard);
    char pid[32];
    std::snprintf(pid, sizeof(pid), "p%05d", i / patient_group_size);
    s.record.patient_id = pid;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticScene> make_presence_set(const SceneConfig& cfg, int n_pos, int n_neg) {
  PS_CHECK(n_pos >= 1 && n_neg >= 1, "make_presence_set: need at least one of each class");
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(n_pos + n_neg));
  for (int i = 0; i < n_pos; ++i) {
    out.push_back(generate_scene(cfg, i, SceneContent::standard));
  }
  for (int i = 0; i < n_neg; ++i) {
    out.push_back(generate_scene(cfg, n_pos + i, SceneContent::distractor_only));
  }
  return out;
}

}  // namespace ps::synth
