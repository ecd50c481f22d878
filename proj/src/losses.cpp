#include "pointsentinel/losses.hpp"

#include <cmath>
#include <memory>

namespace ps::loss {

std::size_t one_hot_index(const std::vector<float>& target) {
  std::size_t idx = target.size();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const float v = target[i];
    PS_CHECK(v == 0.0f || v == 1.0f, "target grid must be one-hot, found value ", v);
    if (v == 1.0f) {
      PS_CHECK(idx == target.size(),
               "target grid must contain exactly one positive cell, found several");
      idx = i;
    }
  }
  PS_CHECK(idx != target.size(), "target grid must contain exactly one positive cell, found none");
  return idx;
}

ad::Tensor spatial_softmax(const ad::Tensor& logits) { return ad::spatial_softmax_op(logits); }

LossValue spatial_softmax_nll(const ad::Tensor& logits, const std::vector<float>& target) {
  ad::Graph& g = *logits.graph();
  const ad::Node& nl = g.node(logits.id());
  PS_CHECK(nl.shape.size() == 2, "spatial_softmax_nll: logits must be [h,w], got ",
           ad::shape_str(nl.shape));
  PS_CHECK(target.size() == nl.values.size(), "spatial_softmax_nll: target size ",
           target.size(), " does not match logits size ", nl.values.size());
  const std::size_t t = one_hot_index(target);
  const std::size_t n = nl.values.size();

  // Fused log-softmax in double with max-subtraction; keeps the loss and its
  // gradient stable for arbitrary float32 logits.
  double m = nl.values[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, static_cast<double>(nl.values[i]));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<double>(nl.values[i]) - m);
  const double lse = m + std::log(s);
  const double logp_t = static_cast<double>(nl.values[t]) - lse;
  const double inv_hw = 1.0 / static_cast<double>(n);

  auto probs = std::make_shared<std::vector<float>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*probs)[i] = static_cast<float>(std::exp(static_cast<double>(nl.values[i]) - lse));
  }

  ad::Node out;
  out.shape = {1};
  out.op = "spatial_softmax_nll";
  out.requires_grad = nl.requires_grad;
  out.values = {static_cast<float>(-logp_t * inv_hw)};
  if (out.requires_grad) {
    const int il = logits.id();
    out.backward_fn = [il, t, inv_hw, probs](ad::Graph& gr, const ad::Node& self) {
      ad::Node& pl = gr.node(il);
      const double go = static_cast<double>(self.grad[0]) * inv_hw;
      for (std::size_t i = 0; i < probs->size(); ++i) {
        const double delta = (i == t) ? 1.0 : 0.0;
        pl.grad[i] += static_cast<float>(go * (static_cast<double>((*probs)[i]) - delta));
      }
    };
  }

  LossValue lv;
  lv.scalar = g.emplace(std::move(out));
  lv.diagnostics["p_target"] = (*probs)[t];
  return lv;
}

LossValue balanced_bce_loss(const ad::Tensor& sigmoid_map, const std::vector<float>& target) {
  ad::Graph& g = *sigmoid_map.graph();
  const ad::Node& nm = g.node(sigmoid_map.id());
  PS_CHECK(target.size() == nm.values.size(), "balanced_bce_loss: target size ",
           target.size(), " does not match map size ", nm.values.size());

  std::size_t n_pos = 0;
  for (float v : target) {
    PS_CHECK(v == 0.0f || v == 1.0f, "balanced_bce_loss: target must be 0/1, found ", v);
    if (v == 1.0f) ++n_pos;
  }
  const std::size_t n_neg = target.size() - n_pos;
  PS_CHECK(n_pos >= 1 && n_neg >= 1,
           "balanced_bce_loss: target needs at least one positive and one negative cell");

  constexpr float kEps = 1e-7f;
  std::vector<float> neg_mask(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) neg_mask[i] = 1.0f - target[i];

  ad::Tensor pos_mask_t = g.leaf({static_cast<int>(target.size())}, target);
  ad::Tensor neg_mask_t = g.leaf({static_cast<int>(target.size())}, std::move(neg_mask));
  ad::Tensor flat = ad::reshape(sigmoid_map, {static_cast<int>(target.size())});

  ad::Tensor log_p = ad::log(ad::clamp(flat, kEps, 1.0f - kEps));
  ad::Tensor log_q = ad::log(ad::clamp(ad::sub(1.0f, flat), kEps, 1.0f - kEps));
  ad::Tensor pos_term = ad::sum(ad::mul(log_p, pos_mask_t));
  ad::Tensor neg_term = ad::sum(ad::mul(log_q, neg_mask_t));

  const float wp = -0.5f / static_cast<float>(n_pos);
  const float wn = -0.5f / static_cast<float>(n_neg);
  LossValue lv;
  lv.scalar = ad::add(ad::mul(pos_term, wp), ad::mul(neg_term, wn));
  lv.diagnostics["pos_term"] = wp * pos_term.item();
  lv.diagnostics["neg_term"] = wn * neg_term.item();
  return lv;
}

LossValue mse_point_loss(const ad::Tensor& pred, float target_x, float target_y) {
  ad::Graph& g = *pred.graph();
  PS_CHECK(pred.size() == 2, "mse_point_loss: prediction must have 2 elements, got ",
           pred.size());
  PS_CHECK(target_x >= 0.0f && target_x <= 1.0f && target_y >= 0.0f && target_y <= 1.0f,
           "mse_point_loss: target (", target_x, ",", target_y, ") outside [0,1]^2");

  ad::Tensor t = g.leaf({2}, {target_x, target_y});
  ad::Tensor flat = ad::reshape(pred, {2});
  ad::Tensor diff = ad::sub(flat, t);
  LossValue lv;
  lv.scalar = ad::mul(ad::sum(ad::mul(diff, diff)), 0.5f);
  lv.diagnostics["dx"] = flat.values()[0] - target_x;
  lv.diagnostics["dy"] = flat.values()[1] - target_y;
  return lv;
}

}  // namespace ps::loss
