#ifndef POINTSENTINEL_EVAL_HPP
#define POINTSENTINEL_EVAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointsentinel/data.hpp"
#include "pointsentinel/model.hpp"

namespace ps::eval {

// Localization metrics, precision plots, bootstrap CIs, ROC AUC and the
// DeLong test. Everything here is pure and computed in double precision.

struct LocalizationError {
  std::string case_id;
  double relative = 0.0;                 // Euclidean error / image diagonal
  std::optional<double> absolute_mm;     // Euclidean pixel error * pixel spacing
};

LocalizationError localization_error(const nn::PredictedPoint& pred,
                                     const data::SampleRecord& record);

struct PrecisionCurve {
  double delta_max = 0.0;
  std::vector<double> thresholds;  // evenly spaced over [0, delta_max]
  std::vector<double> fractions;   // fraction of errors <= threshold
  double auc = 0.0;                // exact integral of the step function, in [0,1]
};

PrecisionCurve precision_curve(const std::vector<double>& errors, double delta_max,
                               int n_thresholds);

// Closed-form precision AUC without materializing the curve.
double precision_auc(const std::vector<double>& errors, double delta_max);

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n_resamples = 0;
  std::uint64_t seed = 0;
};

// Percentile interval over case-level resamples of the precision AUC. The
// r-th resample uses an RNG derived from (seed, r), so results do not depend
// on evaluation order.
BootstrapCI bootstrap_auc_ci(const std::vector<double>& errors, double delta_max,
                             int n_resamples, double alpha, std::uint64_t seed);

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  double min = 0.0;
  double std = 0.0;  // population (divide by N)
  double q1 = 0.0;   // linear interpolation between closest ranks
  double q3 = 0.0;
};

ErrorStats error_stats(const std::vector<double>& errors);

// Quantile with linear interpolation on an already-sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q);

struct RocResult {
  double auc = 0.0;
  double variance = 0.0;  // DeLong structural-components variance of the AUC
  int n_pos = 0;
  int n_neg = 0;
};

// Mann-Whitney AUC (ties count 1/2) with DeLong variance.
RocResult roc_auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
};

// Paired DeLong comparison of two models scored on the same cases.
// labels[i] != 0 marks case i as positive.
DelongResult delong_test(const std::vector<double>& model_a_scores,
                         const std::vector<double>& model_b_scores,
                         const std::vector<int>& labels);

// Distance between the mean points of two sets, relative to the image diagonal.
double mean_point_offset(const std::vector<data::Point>& set_a,
                         const std::vector<data::Point>& set_b, int image_h, int image_w);

}  // namespace ps::eval

#endif  // POINTSENTINEL_EVAL_HPP
