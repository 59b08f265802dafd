#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jala/attention.hpp"

namespace jala {

struct FlowConfig {
  int denoise_steps = 4;
  int depth = 4;
  int dim = 32;
  int heads = 4;
  int horizon = 8;      // action rows per chunk
  int action_dim = 6;
  int proprio_dim = 4;
  int h_dim = 32;       // width of the conditioning embeddings
  // The regression target is noise minus data; the sampler compensates by
  // stepping against the predicted field. Flipping this trains the
  // conventional data-minus-noise velocity instead.
  bool target_noise_minus_data = true;

  void validate() const {
    check(denoise_steps >= 1, "flow config: denoise steps must be >= 1");
    check(dim % heads == 0, "flow config: dim not divisible by heads");
    check(horizon >= 1 && action_dim >= 1, "flow config: bad action geometry");
  }
};

// tau * A + (1 - tau) * eps, the straight interpolation path.
template <class T>
std::vector<T> noise_action(const std::vector<T>& action, double tau, const std::vector<T>& eps) {
  check(action.size() == eps.size(), "noise_action: shape mismatch");
  check(tau >= 0.0 && tau <= 1.0, "noise_action: tau outside [0,1]");
  std::vector<T> out(action.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(tau) * action[i] + (T(1) - static_cast<T>(tau)) * eps[i];
  return out;
}

// Action head: alternating self-attention over [proprio; noised action
// tokens] and cross-attention to the predictive embeddings, with the
// interpolation time injected as a sinusoidal embedding on action tokens.
template <class T>
class FlowHead {
 public:
  static FlowHead init(const FlowConfig& cfg, Rng& rng) {
    cfg.validate();
    FlowHead f;
    f.cfg_ = cfg;
    const int d = cfg.dim;
    auto& P = f.params_;
    const T sa = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.action_dim)));
    const T sq = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.proprio_dim)));
    const T sh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.h_dim)));
    const T sd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    f.action_in_w_ = P.add("action_in.w", Tensor<T>::randn({cfg.action_dim, d}, rng, sa));
    f.action_in_b_ = P.add("action_in.b", Tensor<T>::zeros({d}, true));
    f.proprio_in_w_ = P.add("proprio_in.w", Tensor<T>::randn({cfg.proprio_dim, d}, rng, sq));
    f.proprio_in_b_ = P.add("proprio_in.b", Tensor<T>::zeros({d}, true));
    f.cond_in_w_ = P.add("cond_in.w", Tensor<T>::randn({cfg.h_dim, d}, rng, sh));
    f.cond_in_b_ = P.add("cond_in.b", Tensor<T>::zeros({d}, true));
    f.blocks_.resize(static_cast<std::size_t>(cfg.depth));
    for (int l = 0; l < cfg.depth; ++l) {
      auto& b = f.blocks_[static_cast<std::size_t>(l)];
      const std::string p = "block" + std::to_string(l);
      b.ln_self = LayerNormWeights<T>::init(d, P, p + ".ln_self");
      b.self_attn = AttentionWeights<T>::init(d, rng, P, p + ".self");
      b.ln_cross = LayerNormWeights<T>::init(d, P, p + ".ln_cross");
      b.cross_attn = AttentionWeights<T>::init(d, rng, P, p + ".cross");
      b.ln_mlp = LayerNormWeights<T>::init(d, P, p + ".ln_mlp");
      b.mlp = MlpWeights<T>::init(d, 4 * d, d, rng, P, p + ".mlp");
    }
    f.ln_out_ = LayerNormWeights<T>::init(d, P, "ln_out");
    f.out_w_ = P.add("out.w", Tensor<T>::randn({d, cfg.action_dim}, rng, sd));
    f.out_b_ = P.add("out.b", Tensor<T>::zeros({cfg.action_dim}, true));
    return f;
  }

  const FlowConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }

  // Predicted field at (noised action, tau), conditioned on the predictive
  // embeddings and proprioception. noised is [horizon, action_dim]; h is
  // [*, h_dim]; q is a flat proprio vector.
  Tensor<T> predict(const Tensor<T>& h, const Tensor<T>& noised, const std::vector<double>& q,
                    double tau) const {
    check(noised.rows() == cfg_.horizon && noised.cols() == cfg_.action_dim,
          "flow predict: bad action shape");
    check(static_cast<int>(q.size()) == cfg_.proprio_dim, "flow predict: bad proprio shape");
    check(h.cols() == cfg_.h_dim, "flow predict: bad conditioning width");
    std::vector<T> qv(q.begin(), q.end());
    Tensor<T> q_row = Tensor<T>::from_values({1, cfg_.proprio_dim}, std::move(qv));
    Tensor<T> tokens = concat_rows<T>({linear(q_row, proprio_in_w_, proprio_in_b_),
                                       add(linear(noised, action_in_w_, action_in_b_),
                                           time_embedding(tau))});
    Tensor<T> cond = linear(h, cond_in_w_, cond_in_b_);
    Tensor<T> x = tokens;
    for (const auto& b : blocks_) {
      Tensor<T> normed = b.ln_self.forward(x);
      x = add(x, multihead_attention(b.self_attn, normed, normed, cfg_.heads));
      x = add(x, multihead_attention(b.cross_attn, b.ln_cross.forward(x), cond, cfg_.heads));
      x = add(x, b.mlp.forward(b.ln_mlp.forward(x)));
    }
    Tensor<T> action_rows = gather_rows(ln_out_.forward(x), action_row_indices());
    return linear(action_rows, out_w_, out_b_);
  }

  // Squared error against the configured regression target for one
  // (tau, eps) draw.
  Tensor<T> fm_loss(const Tensor<T>& h, const std::vector<T>& action, const std::vector<double>& q,
                    double tau, const std::vector<T>& eps) const {
    check(action.size() == static_cast<std::size_t>(cfg_.horizon) * cfg_.action_dim,
          "fm_loss: bad action size");
    std::vector<T> noised = noise_action(action, tau, eps);
    Tensor<T> noised_t = Tensor<T>::from_values({cfg_.horizon, cfg_.action_dim}, std::move(noised));
    std::vector<T> target(action.size());
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = cfg_.target_noise_minus_data ? eps[i] - action[i] : action[i] - eps[i];
    Tensor<T> target_t = Tensor<T>::from_values({cfg_.horizon, cfg_.action_dim}, std::move(target));
    return mse_loss(predict(h, noised_t, q, tau), target_t);
  }

  using Field = std::function<std::vector<T>(const std::vector<T>& noised, double tau)>;

  Field field(const Tensor<T>& h, const std::vector<double>& q) const {
    return [this, h, q](const std::vector<T>& noised, double tau) {
      Tensor<T> noised_t =
          Tensor<T>::from_values({cfg_.horizon, cfg_.action_dim}, std::vector<T>(noised));
      return predict(h, noised_t, q, tau).values();
    };
  }

  // Forward Euler from pure noise at tau=0 to an action chunk at tau=1 in a
  // fixed number of steps. With the noise-minus-data target the integrator
  // subtracts the field; with the velocity convention it adds it.
  static std::vector<T> sample_actions(const Field& field, const FlowConfig& cfg, Rng& rng) {
    check(cfg.denoise_steps >= 1, "sample_actions: denoise steps must be >= 1");
    std::vector<T> a(static_cast<std::size_t>(cfg.horizon) * cfg.action_dim);
    for (auto& v : a) v = static_cast<T>(rng.normal());
    const double dt = 1.0 / cfg.denoise_steps;
    for (int n = 0; n < cfg.denoise_steps; ++n) {
      const double tau = n * dt;
      const std::vector<T> v = field(a, tau);
      check(v.size() == a.size(), "sample_actions: field returned wrong shape");
      const T step = static_cast<T>(cfg.target_noise_minus_data ? -dt : dt);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += step * v[i];
    }
    return a;
  }

 private:
  struct Block {
    LayerNormWeights<T> ln_self, ln_cross, ln_mlp;
    AttentionWeights<T> self_attn, cross_attn;
    MlpWeights<T> mlp;
  };

  std::vector<int> action_row_indices() const {
    std::vector<int> idx(static_cast<std::size_t>(cfg_.horizon));
    for (int i = 0; i < cfg_.horizon; ++i) idx[static_cast<std::size_t>(i)] = 1 + i;
    return idx;
  }

  // Sinusoidal embedding of tau, one row broadcast over the action tokens.
  Tensor<T> time_embedding(double tau) const {
    std::vector<T> row(static_cast<std::size_t>(cfg_.horizon) * cfg_.dim);
    for (int j = 0; j < cfg_.dim / 2; ++j) {
      const double freq = std::pow(100.0, -2.0 * j / cfg_.dim);
      const T s = static_cast<T>(std::sin(tau * freq * 6.283185307179586));
      const T c = static_cast<T>(std::cos(tau * freq * 6.283185307179586));
      for (int i = 0; i < cfg_.horizon; ++i) {
        row[static_cast<std::size_t>(i) * cfg_.dim + 2 * j] = s;
        row[static_cast<std::size_t>(i) * cfg_.dim + 2 * j + 1] = c;
      }
    }
    return Tensor<T>::from_values({cfg_.horizon, cfg_.dim}, std::move(row));
  }

  FlowConfig cfg_;
  ParamSet<T> params_;
  Tensor<T> action_in_w_, action_in_b_, proprio_in_w_, proprio_in_b_, cond_in_w_, cond_in_b_;
  std::vector<Block> blocks_;
  LayerNormWeights<T> ln_out_;
  Tensor<T> out_w_, out_b_;
};

}  // namespace jala
