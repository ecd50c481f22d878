#include "pointsentinel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ps::eval {

LocalizationError localization_error(const nn::PredictedPoint& pred,
                                     const data::SampleRecord& record) {
  PS_CHECK(record.point.has_value(), "localization_error: record '", record.case_id,
           "' has no ground-truth point");
  const double dx = static_cast<double>(pred.x) - record.point->x;
  const double dy = static_cast<double>(pred.y) - record.point->y;
  const double dist = std::hypot(dx, dy);
  LocalizationError e;
  e.case_id = record.case_id;
  const double diag = std::hypot(static_cast<double>(record.height),
                                 static_cast<double>(record.width));
  e.relative = dist / diag;
  if (record.pixel_spacing_mm) e.absolute_mm = dist * *record.pixel_spacing_mm;
  return e;
}

double precision_auc(const std::vector<double>& errors, double delta_max) {
  PS_CHECK(!errors.empty(), "precision_auc: empty error list");
  PS_CHECK(delta_max > 0.0, "precision_auc: delta_max must be positive");
  double acc = 0.0;
  for (double e : errors) {
    PS_CHECK(e >= 0.0 && std::isfinite(e), "precision_auc: bad error value ", e);
    acc += std::max(0.0, delta_max - e);
  }
  return acc / (static_cast<double>(errors.size()) * delta_max);
}

PrecisionCurve precision_curve(const std::vector<double>& errors, double delta_max,
                               int n_thresholds) {
  PS_CHECK(n_thresholds >= 2, "precision_curve: need at least 2 thresholds");
  PrecisionCurve c;
  c.delta_max = delta_max;
  c.auc = precision_auc(errors, delta_max);

  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  c.thresholds.reserve(static_cast<std::size_t>(n_thresholds));
  c.fractions.reserve(static_cast<std::size_t>(n_thresholds));
  for (int i = 0; i < n_thresholds; ++i) {
    const double t = delta_max * static_cast<double>(i) / (n_thresholds - 1);
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    c.thresholds.push_back(t);
    c.fractions.push_back(static_cast<double>(it - sorted.begin()) / n);
  }
  return c;
}

BootstrapCI bootstrap_auc_ci(const std::vector<double>& errors, double delta_max,
                             int n_resamples, double alpha, std::uint64_t seed) {
  PS_CHECK(!errors.empty(), "bootstrap_auc_ci: empty error list");
  PS_CHECK(n_resamples >= 100, "bootstrap_auc_ci: need at least 100 resamples, got ",
           n_resamples);
  PS_CHECK(alpha > 0.0 && alpha < 1.0, "bootstrap_auc_ci: alpha must be in (0,1)");

  const std::size_t n = errors.size();
  std::vector<double> aucs(static_cast<std::size_t>(n_resamples));
  std::vector<double> resample(n);
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < n; ++i) resample[i] = errors[rng.index(n)];
    aucs[static_cast<std::size_t>(r)] = precision_auc(resample, delta_max);
  }
  std::sort(aucs.begin(), aucs.end());

  BootstrapCI ci;
  ci.point = precision_auc(errors, delta_max);
  ci.lo = std::min(quantile_sorted(aucs, alpha / 2.0), ci.point);
  ci.hi = std::max(quantile_sorted(aucs, 1.0 - alpha / 2.0), ci.point);
  ci.n_resamples = n_resamples;
  ci.seed = seed;
  return ci;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  PS_CHECK(!sorted.empty(), "quantile: empty vector");
  PS_CHECK(q >= 0.0 && q <= 1.0, "quantile: q must be in [0,1], got ", q);
  if (sorted.size() == 1) return sorted[0];
  const double h = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ErrorStats error_stats(const std::vector<double>& errors) {
  PS_CHECK(!errors.empty(), "error_stats: empty error list");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());

  ErrorStats s;
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = quantile_sorted(sorted, 0.5);
  s.q1 = quantile_sorted(sorted, 0.25);
  s.q3 = quantile_sorted(sorted, 0.75);
  double acc = 0.0;
  for (double v : sorted) acc += v;
  s.mean = acc / static_cast<double>(sorted.size());
  double var = 0.0;
  for (double v : sorted) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(sorted.size()));
  return s;
}

// --- ROC / DeLong -----------------------------------------------------------------

namespace {

// Midranks: ties get the average of the ranks they span (1-based).
std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  return rank;
}

struct Components {
  std::vector<double> v10;  // one per positive
  std::vector<double> v01;  // one per negative
  double auc = 0.0;
};

// DeLong structural components via midranks (O(n log n)).
Components delong_components(const std::vector<double>& pos, const std::vector<double>& neg) {
  const std::size_t m = pos.size();
  const std::size_t n = neg.size();
  std::vector<double> combined;
  combined.reserve(m + n);
  combined.insert(combined.end(), pos.begin(), pos.end());
  combined.insert(combined.end(), neg.begin(), neg.end());

  const std::vector<double> tz = midranks(combined);
  const std::vector<double> tx = midranks(pos);
  const std::vector<double> ty = midranks(neg);

  Components c;
  c.v10.resize(m);
  c.v01.resize(n);
  for (std::size_t i = 0; i < m; ++i) {
    c.v10[i] = (tz[i] - tx[i]) / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < n; ++j) {
    c.v01[j] = 1.0 - (tz[m + j] - ty[j]) / static_cast<double>(m);
  }
  double acc = 0.0;
  for (double v : c.v10) acc += v;
  c.auc = acc / static_cast<double>(m);
  return c;
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (a[i] - ma) * (b[i] - mb);
  return acc / static_cast<double>(n - 1);
}

void check_scores_finite(const std::vector<double>& scores, const char* what) {
  for (double s : scores) {
    PS_CHECK(std::isfinite(s), what, ": non-finite score ", s);
  }
}

}  // namespace

RocResult roc_auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores) {
  PS_CHECK(!pos_scores.empty(), "roc_auc: no positive scores");
  PS_CHECK(!neg_scores.empty(), "roc_auc: no negative scores");
  check_scores_finite(pos_scores, "roc_auc");
  check_scores_finite(neg_scores, "roc_auc");

  const Components c = delong_components(pos_scores, neg_scores);
  RocResult r;
  r.auc = c.auc;
  r.n_pos = static_cast<int>(pos_scores.size());
  r.n_neg = static_cast<int>(neg_scores.size());
  r.variance = sample_cov(c.v10, c.v10) / static_cast<double>(r.n_pos) +
               sample_cov(c.v01, c.v01) / static_cast<double>(r.n_neg);
  return r;
}

DelongResult delong_test(const std::vector<double>& model_a_scores,
                         const std::vector<double>& model_b_scores,
                         const std::vector<int>& labels) {
  PS_CHECK(model_a_scores.size() == model_b_scores.size() &&
               model_a_scores.size() == labels.size(),
           "delong_test: score/label lengths differ (", model_a_scores.size(), ", ",
           model_b_scores.size(), ", ", labels.size(), ")");
  std::vector<double> pos_a, neg_a, pos_b, neg_b;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      pos_a.push_back(model_a_scores[i]);
      pos_b.push_back(model_b_scores[i]);
    } else {
      neg_a.push_back(model_a_scores[i]);
      neg_b.push_back(model_b_scores[i]);
    }
  }
  PS_CHECK(!pos_a.empty() && !neg_a.empty(), "delong_test: need both classes present");
  check_scores_finite(model_a_scores, "delong_test");
  check_scores_finite(model_b_scores, "delong_test");

  const Components ca = delong_components(pos_a, neg_a);
  const Components cb = delong_components(pos_b, neg_b);
  const double m = static_cast<double>(pos_a.size());
  const double n = static_cast<double>(neg_a.size());

  const double s10 = sample_cov(ca.v10, ca.v10) + sample_cov(cb.v10, cb.v10) -
                     2.0 * sample_cov(ca.v10, cb.v10);
  const double s01 = sample_cov(ca.v01, ca.v01) + sample_cov(cb.v01, cb.v01) -
                     2.0 * sample_cov(ca.v01, cb.v01);
  const double var = s10 / m + s01 / n;

  DelongResult r;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  if (var <= 0.0) {
    PS_CHECK(ca.auc == cb.auc,
             "delong_test: degenerate variance with different AUCs (", ca.auc, " vs ", cb.auc,
             ")");
    r.z = 0.0;
    r.p_two_sided = 1.0;
    return r;
  }
  r.z = (ca.auc - cb.auc) / std::sqrt(var);
  r.p_two_sided = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

double mean_point_offset(const std::vector<data::Point>& set_a,
                         const std::vector<data::Point>& set_b, int image_h, int image_w) {
  PS_CHECK(!set_a.empty() && !set_b.empty(), "mean_point_offset: empty point set");
  auto mean_of = [](const std::vector<data::Point>& pts) {
    double mx = 0.0, my = 0.0;
    for (const data::Point& p : pts) {
      mx += p.x;
      my += p.y;
    }
    const double n = static_cast<double>(pts.size());
    return std::pair<double, double>{mx / n, my / n};
  };
  const auto [ax, ay] = mean_of(set_a);
  const auto [bx, by] = mean_of(set_b);
  const double diag = std::hypot(static_cast<double>(image_h), static_cast<double>(image_w));
  return std::hypot(ax - bx, ay - by) / diag;
}

}  // namespace ps::eval
