#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jala/ops.hpp"
#include "jala/params.hpp"

namespace jala {

// Additive attention bias: 0 where attention is allowed, a large negative
// constant where it is not. The constant is far below any real logit, so the
// masked terms underflow to exactly zero probability and contribute nothing
// to the weighted sum, bit for bit.
template <class T>
inline constexpr T kAttentionNegInf = T(-1e30);

template <class T>
Tensor<T> attention_bias_from_allowed(const std::vector<std::vector<bool>>& allowed) {
  const int rows = static_cast<int>(allowed.size());
  const int cols = rows > 0 ? static_cast<int>(allowed[0].size()) : 0;
  std::vector<T> bias(static_cast<std::size_t>(rows) * cols, T(0));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (!allowed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
        bias[static_cast<std::size_t>(i) * cols + j] = kAttentionNegInf<T>;
  return Tensor<T>::from_values({rows, cols}, std::move(bias));
}

template <class T>
struct LayerNormWeights {
  Tensor<T> gamma, beta;

  static LayerNormWeights init(int dim, ParamSet<T>& params, const std::string& prefix) {
    LayerNormWeights w;
    w.gamma = params.add(prefix + ".gamma", Tensor<T>::filled({dim}, T(1), true));
    w.beta = params.add(prefix + ".beta", Tensor<T>::zeros({dim}, true));
    return w;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm_rows(x, gamma, beta); }

  LayerNormWeights detached() const { return {gamma.detached(), beta.detached()}; }
};

template <class T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionWeights init(int dim, Rng& rng, ParamSet<T>& params, const std::string& prefix) {
    AttentionWeights w;
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dim)));
    w.wq = params.add(prefix + ".wq", Tensor<T>::randn({dim, dim}, rng, s));
    w.bq = params.add(prefix + ".bq", Tensor<T>::zeros({dim}, true));
    w.wk = params.add(prefix + ".wk", Tensor<T>::randn({dim, dim}, rng, s));
    w.bk = params.add(prefix + ".bk", Tensor<T>::zeros({dim}, true));
    w.wv = params.add(prefix + ".wv", Tensor<T>::randn({dim, dim}, rng, s));
    w.bv = params.add(prefix + ".bv", Tensor<T>::zeros({dim}, true));
    w.wo = params.add(prefix + ".wo", Tensor<T>::randn({dim, dim}, rng, s));
    w.bo = params.add(prefix + ".bo", Tensor<T>::zeros({dim}, true));
    return w;
  }

  AttentionWeights detached() const {
    return {wq.detached(), bq.detached(), wk.detached(), bk.detached(),
            wv.detached(), bv.detached(), wo.detached(), bo.detached()};
  }
};

// Multi-head attention from q_in rows to kv_in rows. bias, when given, is an
// additive [nq, nk] matrix applied to every head's logits.
template <class T>
Tensor<T> multihead_attention(const AttentionWeights<T>& w, const Tensor<T>& q_in,
                              const Tensor<T>& kv_in, int heads, const Tensor<T>* bias = nullptr) {
  const int dim = q_in.cols();
  check(dim % heads == 0, "attention: dim must be divisible by heads");
  const int hd = dim / heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor<T> q = linear(q_in, w.wq, w.bq);
  Tensor<T> k = linear(kv_in, w.wk, w.bk);
  Tensor<T> v = linear(kv_in, w.wv, w.bv);
  std::vector<Tensor<T>> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor<T> qh = slice_cols(q, h * hd, hd);
    Tensor<T> kh = slice_cols(k, h * hd, hd);
    Tensor<T> vh = slice_cols(v, h * hd, hd);
    Tensor<T> scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (bias != nullptr) scores = add(scores, *bias);
    head_outputs.push_back(matmul(softmax_rows(scores), vh));
  }
  return linear(concat_cols(head_outputs), w.wo, w.bo);
}

template <class T>
struct MlpWeights {
  Tensor<T> w1, b1, w2, b2;

  static MlpWeights init(int dim, int hidden, int out, Rng& rng, ParamSet<T>& params,
                         const std::string& prefix) {
    MlpWeights w;
    const T s1 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dim)));
    const T s2 = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hidden)));
    w.w1 = params.add(prefix + ".w1", Tensor<T>::randn({dim, hidden}, rng, s1));
    w.b1 = params.add(prefix + ".b1", Tensor<T>::zeros({hidden}, true));
    w.w2 = params.add(prefix + ".w2", Tensor<T>::randn({hidden, out}, rng, s2));
    w.b2 = params.add(prefix + ".b2", Tensor<T>::zeros({out}, true));
    return w;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return linear(gelu(linear(x, w1, b1)), w2, b2); }

  MlpWeights detached() const {
    return {w1.detached(), b1.detached(), w2.detached(), b2.detached()};
  }
};

}  // namespace jala
