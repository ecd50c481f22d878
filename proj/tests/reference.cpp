#include "reference.hpp"

#include <algorithm>
#include <cmath>

#include "pointsentinel/common.hpp"
#include "pointsentinel/eval.hpp"

namespace ref {

dvec conv2d(const dvec& x, int c_in, int h, int w, const dvec& k, int c_out, int kh, int kw,
            int stride, int pad) {
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  dvec out(static_cast<std::size_t>(c_out) * oh * ow, 0.0);
  for (int co = 0; co < c_out; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int ci = 0; ci < c_in; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int y = oy * stride - pad + ky;
              const int xx = ox * stride - pad + kx;
              if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
              acc += x[(static_cast<std::size_t>(ci) * h + y) * w + xx] *
                     k[((static_cast<std::size_t>(co) * c_in + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return out;
}

dvec matmul(const dvec& a, int m, int k, const dvec& b, int n) {
  dvec out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      }
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
  return out;
}

dvec bias_add(const dvec& x, int c, int hw, const dvec& b) {
  dvec out(x.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < hw; ++i) {
      out[static_cast<std::size_t>(ch) * hw + i] =
          x[static_cast<std::size_t>(ch) * hw + i] + b[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

dvec avgpool2d(const dvec& x, int c, int h, int w, int k, int stride) {
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  dvec out(static_cast<std::size_t>(c) * oh * ow, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            acc += x[(static_cast<std::size_t>(ch) * h + oy * stride + ky) * w + ox * stride + kx];
          }
        }
        out[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] = acc / (k * k);
      }
    }
  }
  return out;
}

dvec global_avgpool(const dvec& x, int c, int hw) {
  dvec out(static_cast<std::size_t>(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += x[static_cast<std::size_t>(ch) * hw + i];
    out[static_cast<std::size_t>(ch)] = acc / hw;
  }
  return out;
}

dvec softmax(const dvec& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  dvec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - m) / s;
  return out;
}

double softmax_nll(const dvec& logits, std::size_t target, std::size_t hw) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  const double logp = logits[target] - m - std::log(s);
  return -logp / static_cast<double>(hw);
}

double balanced_bce(const dvec& probs, const dvec& target) {
  constexpr double eps = 1e-7;
  double pos = 0.0, neg = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    const double q = std::clamp(1.0 - probs[i], eps, 1.0 - eps);
    if (target[i] > 0.5) {
      pos += -std::log(p);
      ++n_pos;
    } else {
      neg += -std::log(q);
      ++n_neg;
    }
  }
  return 0.5 * pos / static_cast<double>(n_pos) + 0.5 * neg / static_cast<double>(n_neg);
}

double mse_point(const dvec& pred, double tx, double ty) {
  return ((pred[0] - tx) * (pred[0] - tx) + (pred[1] - ty) * (pred[1] - ty)) / 2.0;
}

double max_grad_rel_error(
    const std::vector<std::vector<float>>& inputs, const std::vector<ps::ad::Shape>& shapes,
    const std::function<ps::ad::Tensor(ps::ad::Graph&, std::vector<ps::ad::Tensor>&)>& build,
    const std::function<double(const std::vector<dvec>&)>& forward, const GradCheck& opts) {
  // Analytic gradients from the implementation.
  ps::ad::Graph g;
  std::vector<ps::ad::Tensor> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(g.leaf(shapes[i], inputs[i], true));
  }
  ps::ad::Tensor loss = build(g, leaves);
  g.backward(loss);

  std::vector<dvec> base(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    base[i].assign(inputs[i].begin(), inputs[i].end());
  }

  double max_rel = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    auto grad = leaves[which].grad();
    for (std::size_t idx = 0; idx < inputs[which].size(); ++idx) {
      if (opts.skip && opts.skip(which, idx)) continue;
      std::vector<dvec> plus = base, minus = base;
      plus[which][idx] += opts.h;
      minus[which][idx] -= opts.h;
      const double fd = (forward(plus) - forward(minus)) / (2.0 * opts.h);
      const double an = static_cast<double>(grad[idx]);
      const double denom = std::max(opts.denom_clamp, std::max(std::abs(an), std::abs(fd)));
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  }
  return max_rel;
}

double precision_auc_trapezoid(const std::vector<double>& errors, double delta_max,
                               int n_points) {
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto frac = [&](double t) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    return static_cast<double>(it - sorted.begin()) / n;
  };
  const double dt = delta_max / static_cast<double>(n_points - 1);
  double acc = 0.5 * (frac(0.0) + frac(delta_max));
  for (int i = 1; i < n_points - 1; ++i) acc += frac(dt * i);
  return acc * dt / delta_max;
}

double roc_auc_pairs(const std::vector<double>& pos, const std::vector<double>& neg) {
  double acc = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) acc += 1.0;
      else if (p == q) acc += 0.5;
    }
  }
  return acc / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

namespace {

double auc_diff(const std::vector<double>& a, const std::vector<double>& b,
                const std::vector<int>& labels) {
  std::vector<double> pa, na, pb, nb;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      pa.push_back(a[i]);
      pb.push_back(b[i]);
    } else {
      na.push_back(a[i]);
      nb.push_back(b[i]);
    }
  }
  return roc_auc_pairs(pa, na) - roc_auc_pairs(pb, nb);
}

}  // namespace

double delong_permutation_p(const std::vector<double>& a, const std::vector<double>& b,
                            const std::vector<int>& labels, int n_perm, std::uint64_t seed) {
  const double observed = std::abs(auc_diff(a, b, labels));
  std::vector<double> pa = a, pb = b;
  int hits = 0;
  for (int r = 0; r < n_perm; ++r) {
    ps::Rng rng(ps::derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (rng.uniform() < 0.5) {
        pa[i] = b[i];
        pb[i] = a[i];
      } else {
        pa[i] = a[i];
        pb[i] = b[i];
      }
    }
    if (std::abs(auc_diff(pa, pb, labels)) >= observed - 1e-12) ++hits;
  }
  return (hits + 1.0) / (n_perm + 1.0);
}

bool xml_well_formed(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  const std::size_t n = text.size();
  // Skip the declaration if present.
  if (text.rfind("<?xml", 0) == 0) {
    i = text.find("?>");
    if (i == std::string::npos) return false;
    i += 2;
  }
  bool seen_root = false;
  bool root_closed = false;
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    if (text[i] != '<') {
      // Text content is only valid inside an element.
      if (stack.empty()) return false;
      while (i < n && text[i] != '<') ++i;
      continue;
    }
    const std::size_t close = text.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = text.substr(i + 1, close - i - 1);
    if (tag.empty()) return false;
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      if (stack.empty()) root_closed = true;
    } else {
      if (root_closed) return false;  // content after the root element
      const bool self_closing = tag.back() == '/';
      if (self_closing) tag.pop_back();
      // Attribute quotes must be balanced.
      int quotes = 0;
      for (char c : tag) {
        if (c == '"') ++quotes;
      }
      if (quotes % 2 != 0) return false;
      const std::size_t sp = tag.find_first_of(" \t\n");
      const std::string name = sp == std::string::npos ? tag : tag.substr(0, sp);
      if (name.empty()) return false;
      if (stack.empty() && seen_root && !self_closing) return false;
      if (!self_closing) {
        stack.push_back(name);
        seen_root = true;
      } else if (stack.empty()) {
        if (seen_root) return false;
        seen_root = true;
        root_closed = true;
      }
    }
    i = close + 1;
  }
  return stack.empty() && seen_root;
}

}  // namespace ref
