#ifndef POINTSENTINEL_SYNTH_HPP
#define POINTSENTINEL_SYNTH_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "pointsentinel/data.hpp"

namespace ps::synth {

// Deterministic radiograph-analog scenes with at most one annotated target
// point. The ETT analog is a bright near-vertical polyline entering from the
// top edge and ending at the target tip; the carina analog is a V-shaped
// bifurcation whose junction is the target; the TT analog is a short curved
// distractor starting mid-image with the same width and intensity as the ETT
// line, so only the global context (top-edge entry) separates the two.

struct SceneConfig {
  int height = 64;
  int width = 64;
  float noise_std = 0.06f;
  int tube_width_px = 3;
  // Tube length as a fraction of H; the tube enters from the top edge, so the
  // tip's y coordinate is uniform in [min, max] * H.
  float ett_min_len_frac = 0.30f;
  float ett_max_len_frac = 0.70f;
  float tt_len_frac = 0.25f;
  float distractor_prob = 0.5f;
  data::TargetClass target_class = data::TargetClass::ett_tip;
  float carina_branch_angle_deg = 55.0f;
  std::optional<float> pixel_spacing_mm;
  std::uint64_t seed = 0;
  // Constant shift of the sampled tip, as a fraction of W/H. Two configs that
  // differ only here yield annotation-shifted datasets.
  float tip_bias_frac_x = 0.0f;
  float tip_bias_frac_y = 0.0f;
};

void validate(const SceneConfig& cfg);
nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct SyntheticScene {
  Image image;
  data::SampleRecord record;
  bool has_target = false;
  bool has_distractor = false;
  std::optional<data::Point> distractor_tip;
};

enum class SceneContent {
  standard,         // target, distractor with probability distractor_prob
  target_only,      // target, never a distractor
  distractor_only,  // TT analog only; record has no point
  background_only,  // noise + gradient only
};

// Pure function of (cfg, index, content); scenes may be generated in parallel.
SyntheticScene generate_scene(const SceneConfig& cfg, std::int64_t index,
                              SceneContent content = SceneContent::standard);

// n scenes with patient ids assigned in consecutive groups of
// patient_group_size, so patient-level split logic can be exercised.
std::vector<SyntheticScene> generate_dataset(const SceneConfig& cfg, int n,
                                             int patient_group_size);

// n_pos target scenes followed by n_neg distractor-only scenes, for presence
// (ROC) evaluation.
std::vector<SyntheticScene> make_presence_set(const SceneConfig& cfg, int n_pos, int n_neg);

}  // namespace ps::synth

#endif  // POINTSENTINEL_SYNTH_HPP
