#ifndef POINTSENTINEL_TESTS_REFERENCE_HPP
#define POINTSENTINEL_TESTS_REFERENCE_HPP

// Test-side oracles, kept independent of the library's implementation paths:
// straightforward double-precision re-implementations of every op's math, a
// central-difference gradient checker that differentiates those references,
// and brute-force counterparts for the metrics.

#include <cstdint>
#include <functional>
#include <vector>

#include "pointsentinel/tensor.hpp"

namespace ref {

using dvec = std::vector<double>;

// --- double-precision forward references (direct loops, no im2col) ----------
dvec conv2d(const dvec& x, int c_in, int h, int w, const dvec& k, int c_out, int kh, int kw,
            int stride, int pad);
dvec matmul(const dvec& a, int m, int k, const dvec& b, int n);
dvec bias_add(const dvec& x, int c, int hw, const dvec& b);
dvec avgpool2d(const dvec& x, int c, int h, int w, int k, int stride);
dvec global_avgpool(const dvec& x, int c, int hw);
dvec softmax(const dvec& logits);
double softmax_nll(const dvec& logits, std::size_t target, std::size_t hw);
double balanced_bce(const dvec& probs, const dvec& target);
double mse_point(const dvec& pred, double tx, double ty);

// --- gradient checking -------------------------------------------------------
//
// build: constructs a scalar loss from graph leaves made of `inputs`.
// forward: evaluates the same function in double on perturbed copies.
// Returns the max relative error between analytic and central-difference
// gradients, using denominator max(|a|, |fd|) clamped below at `denom_clamp`.
// `skip(which_input, index)` may exclude elements sitting on kinks.

struct GradCheck {
  double h = 1e-3;
  double denom_clamp = 1e-6;
  std::function<bool(std::size_t, std::size_t)> skip;  // optional
};

double max_grad_rel_error(
    const std::vector<std::vector<float>>& inputs, const std::vector<ps::ad::Shape>& shapes,
    const std::function<ps::ad::Tensor(ps::ad::Graph&, std::vector<ps::ad::Tensor>&)>& build,
    const std::function<double(const std::vector<dvec>&)>& forward, const GradCheck& opts = {});

// --- metric oracles -----------------------------------------------------------
// Trapezoid integration of the empirical fraction-within-threshold curve.
double precision_auc_trapezoid(const std::vector<double>& errors, double delta_max,
                               int n_points);
// Exhaustive pair counting (ties count 1/2).
double roc_auc_pairs(const std::vector<double>& pos, const std::vector<double>& neg);
// Paired sign-flip permutation test on the AUC difference; returns the
// two-sided p estimate over n_perm permutations.
double delong_permutation_p(const std::vector<double>& a, const std::vector<double>& b,
                            const std::vector<int>& labels, int n_perm, std::uint64_t seed);

// Minimal well-formedness check for the SVG subset this project emits
// (matched tags, quoted attributes; no comments/CDATA).
bool xml_well_formed(const std::string& text);

}  // namespace ref

#endif  // POINTSENTINEL_TESTS_REFERENCE_HPP
