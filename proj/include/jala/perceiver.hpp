#pragma once

#include <string>
#include <vector>

#include "jala/attention.hpp"
#include "jala/motion.hpp"

namespace jala {

struct PerceiverConfig {
  int layers = 2;
  int dim = 32;        // latent and output width, matches the backbone
  int heads = 4;
  int kv_dim = 24;     // per-frame feature width
  int latents = 16;    // K, one latent per motion token of a chunk
  int head_hidden = 64;

  void validate() const {
    check(dim % heads == 0, "perceiver config: dim not divisible by heads");
    check(layers >= 1 && latents >= 1, "perceiver config: bad geometry");
  }
};

// Parameters split exactly the way the decoupled update treats them: the
// trunk (cross/self attention, projections and the two-head output MLP) and
// the learnable query vectors. The action and state roles hold isomorphic
// copies of this structure.
template <class T>
struct PerceiverParams {
  ParamSet<T> backbone;  // trunk + heads
  ParamSet<T> queries;   // the K learnable query vectors

  static PerceiverParams init(const PerceiverConfig& cfg, Rng& rng) {
    cfg.validate();
    PerceiverParams p;
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.kv_dim)));
    p.backbone.add("kv_proj.w", Tensor<T>::randn({cfg.kv_dim, cfg.dim}, rng, s));
    p.backbone.add("kv_proj.b", Tensor<T>::zeros({cfg.dim}, true));
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string prefix = "layer" + std::to_string(l);
      LayerNormWeights<T>::init(cfg.dim, p.backbone, prefix + ".ln_cross");
      AttentionWeights<T>::init(cfg.dim, rng, p.backbone, prefix + ".cross");
      LayerNormWeights<T>::init(cfg.dim, p.backbone, prefix + ".ln_self");
      AttentionWeights<T>::init(cfg.dim, rng, p.backbone, prefix + ".self");
    }
    LayerNormWeights<T>::init(cfg.dim, p.backbone, "ln_out");
    // Two-head MLP: final width doubled, split into left/right halves.
    MlpWeights<T>::init(cfg.dim, cfg.head_hidden, 2 * cfg.dim, rng, p.backbone, "head");
    p.queries.add("q", Tensor<T>::randn({cfg.latents, cfg.dim}, rng, T(0.5)));
    return p;
  }

  PerceiverParams clone() const { return {backbone.clone(), queries.clone()}; }
};

// Gradient-routing view: either half can be consumed through detached
// handles, so stop-gradient is enforced at the graph boundary rather than by
// zeroing afterwards.
template <class T>
struct PerceiverView {
  std::vector<Tensor<T>> backbone;  // same order as the ParamSet
  Tensor<T> queries;

  static PerceiverView of(const PerceiverParams<T>& p, bool backbone_live, bool queries_live) {
    PerceiverView v;
    v.backbone.reserve(p.backbone.items.size());
    for (const auto& [name, t] : p.backbone.items)
      v.backbone.push_back(backbone_live ? t : t.detached());
    v.queries = queries_live ? p.queries.items[0].second : p.queries.items[0].second.detached();
    return v;
  }
};

namespace detail_perc {

template <class T>
struct Cursor {
  const std::vector<Tensor<T>>* tensors;
  std::size_t pos = 0;
  Tensor<T> next() { return (*tensors)[pos++]; }
};

template <class T>
LayerNormWeights<T> next_ln(Cursor<T>& c) {
  LayerNormWeights<T> w;
  w.gamma = c.next();
  w.beta = c.next();
  return w;
}

template <class T>
AttentionWeights<T> next_attn(Cursor<T>& c) {
  AttentionWeights<T> w;
  w.wq = c.next();
  w.bq = c.next();
  w.wk = c.next();
  w.bk = c.next();
  w.wv = c.next();
  w.bv = c.next();
  w.wo = c.next();
  w.bo = c.next();
  return w;
}

template <class T>
MlpWeights<T> next_mlp(Cursor<T>& c) {
  MlpWeights<T> w;
  w.w1 = c.next();
  w.b1 = c.next();
  w.w2 = c.next();
  w.b2 = c.next();
  return w;
}

}  // namespace detail_perc

// Shared forward pass for both roles: learnable queries cross-attend to the
// two projected frame-feature rows, self-attend among themselves, and the
// two-head MLP projects into the backbone embedding space with the half
// selected by hand side. The state role is this same function on a
// duplicated initial frame.
template <class T>
Tensor<T> lap_forward(const PerceiverConfig& cfg, const PerceiverView<T>& view,
                      const std::vector<double>& frame_a, const std::vector<double>& frame_b,
                      HandSide side) {
  check(frame_a.size() == frame_b.size(), "lap_forward: boundary frames differ in shape");
  check(static_cast<int>(frame_a.size()) == cfg.kv_dim, "lap_forward: feature width mismatch");
  std::vector<T> kv_values;
  kv_values.reserve(2 * frame_a.size());
  for (double v : frame_a) kv_values.push_back(static_cast<T>(v));
  for (double v : frame_b) kv_values.push_back(static_cast<T>(v));
  Tensor<T> features = Tensor<T>::from_values({2, cfg.kv_dim}, std::move(kv_values));

  detail_perc::Cursor<T> cur{&view.backbone};
  Tensor<T> kv_w = cur.next();
  Tensor<T> kv_b = cur.next();
  Tensor<T> kv = linear(features, kv_w, kv_b);
  Tensor<T> x = view.queries;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerNormWeights<T> ln_cross = detail_perc::next_ln(cur);
    AttentionWeights<T> cross = detail_perc::next_attn(cur);
    LayerNormWeights<T> ln_self = detail_perc::next_ln(cur);
    AttentionWeights<T> self = detail_perc::next_attn(cur);
    x = add(x, multihead_attention(cross, ln_cross.forward(x), kv, cfg.heads));
    Tensor<T> normed = ln_self.forward(x);
    x = add(x, multihead_attention(self, normed, normed, cfg.heads));
  }
  LayerNormWeights<T> ln_out = detail_perc::next_ln(cur);
  MlpWeights<T> head = detail_perc::next_mlp(cur);
  Tensor<T> both = head.forward(ln_out.forward(x));
  return slice_cols(both, side == HandSide::left ? 0 : cfg.dim, cfg.dim);
}

template <class T>
Tensor<T> lsp_forward(const PerceiverConfig& cfg, const PerceiverView<T>& view,
                      const std::vector<double>& frame, HandSide side) {
  return lap_forward(cfg, view, frame, frame, side);
}

// Mean absolute difference between predictive embeddings and latent actions,
// averaged over positions and dimensions.
template <class T>
Tensor<T> align_loss(const Tensor<T>& h, const Tensor<T>& z) {
  check_same_shape(h, z, "align_loss");
  return l1_loss(h, z);
}

// Asymmetric update: trunk weights flow state->action, query weights flow
// action->state. Everything else is untouched, and alpha in [0,1).
template <class T>
void decoupled_ema_update(PerceiverParams<T>& lap, PerceiverParams<T>& lsp, double alpha) {
  check(alpha >= 0.0 && alpha < 1.0, "decoupled_ema_update: alpha must be in [0,1)");
  check(lap.backbone.items.size() == lsp.backbone.items.size() &&
            lap.queries.items.size() == lsp.queries.items.size(),
        "decoupled_ema_update: parameter trees are not isomorphic");
  const T a = static_cast<T>(alpha);
  for (std::size_t i = 0; i < lap.backbone.items.size(); ++i) {
    auto& dst = lap.backbone.items[i].second.values();
    const auto& src = lsp.backbone.items[i].second.values();
    check(dst.size() == src.size(), "decoupled_ema_update: shape mismatch");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = a * dst[j] + (T(1) - a) * src[j];
  }
  for (std::size_t i = 0; i < lap.queries.items.size(); ++i) {
    auto& dst = lsp.queries.items[i].second.values();
    const auto& src = lap.queries.items[i].second.values();
    check(dst.size() == src.size(), "decoupled_ema_update: shape mismatch");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = a * dst[j] + (T(1) - a) * src[j];
  }
}

// Spread of latent vectors across a batch: per-coordinate standard deviation
// over rows, averaged. The anti-collapse check tracks this against its value
// at the start of training.
template <class T>
double latent_batch_stddev(const std::vector<Tensor<T>>& zs) {
  if (zs.empty()) return 0.0;
  const int rows_each = zs[0].rows();
  const int cols = zs[0].cols();
  const std::size_t n = zs.size() * static_cast<std::size_t>(rows_each);
  double acc = 0.0;
  for (int c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (const auto& z : zs)
      for (int r = 0; r < rows_each; ++r)
        mean += static_cast<double>(z.values()[static_cast<std::size_t>(r) * cols + c]);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& z : zs)
      for (int r = 0; r < rows_each; ++r) {
        const double d = static_cast<double>(z.values()[static_cast<std::size_t>(r) * cols + c]) - mean;
        var += d * d;
      }
    var /= static_cast<double>(n);
    acc += std::sqrt(var);
  }
  return acc / cols;
}

}  // namespace jala
