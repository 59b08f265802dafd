#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "jala/tensor.hpp"

// Differentiable operations over Tensor<T>. Each op builds one graph node with
// a backward closure; evaluation order inside every loop is fixed, which is
// what makes whole-run determinism and the bitwise causality checks possible.
namespace jala {

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  check(a.shape() == b.shape(), std::string(what) + ": shape mismatch");
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        detail::accumulate(*n.parents[1], n.grad);
      });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        std::vector<T> neg(n.grad.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -n.grad[i];
        detail::accumulate(*n.parents[1], neg);
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_result<T>(
      a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
        const auto& av = *n.parents[0]->data;
        const auto& bv2 = *n.parents[1]->data;
        std::vector<T> da(n.grad.size()), db(n.grad.size());
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          da[i] = n.grad[i] * bv2[i];
          db[i] = n.grad[i] * av[i];
        }
        detail::accumulate(*n.parents[0], da);
        detail::accumulate(*n.parents[1], db);
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.values());
  for (auto& v : out) v *= c;
  return detail::make_result<T>(
      a.shape(), std::move(out), {a}, [c](TensorNode<T>& n) {
        std::vector<T> da(n.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = n.grad[i] * c;
        detail::accumulate(*n.parents[0], da);
      });
}

// C[m,n] = A[m,k] * B[k,n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2, "matmul: rank-2 only");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  check(b.rows() == k, "matmul: inner dimension mismatch");
  std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
  {
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    T* pc = out.data();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const T av = pa[i * k + p];
        const T* pbrow = pb + static_cast<std::size_t>(p) * n;
        T* pcrow = pc + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) pcrow[j] += av * pbrow[j];
      }
  }
  return detail::make_result<T>(
      {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode<T>& node) {
        const auto& av = *node.parents[0]->data;
        const auto& bv = *node.parents[1]->data;
        const auto& g = node.grad;
        // dA = dC * B^T
        std::vector<T> da(static_cast<std::size_t>(m) * k, T(0));
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T gv = g[static_cast<std::size_t>(i) * n + j];
            for (int p = 0; p < k; ++p)
              da[static_cast<std::size_t>(i) * k + p] += gv * bv[static_cast<std::size_t>(p) * n + j];
          }
        detail::accumulate(*node.parents[0], da);
        // dB = A^T * dC
        std::vector<T> db(static_cast<std::size_t>(k) * n, T(0));
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const T av2 = av[static_cast<std::size_t>(i) * k + p];
            for (int j = 0; j < n; ++j)
              db[static_cast<std::size_t>(p) * n + j] += av2 * g[static_cast<std::size_t>(i) * n + j];
          }
        detail::accumulate(*node.parents[1], db);
      });
}

// C[m,n] = A[m,k] * B[n,k]^T. Used for attention scores without materializing
// a transpose.
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2, "matmul_nt: rank-2 only");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  check(b.cols() == k, "matmul_nt: inner dimension mismatch");
  std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
  {
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T acc = T(0);
        const T* ra = pa + static_cast<std::size_t>(i) * k;
        const T* rb = pb + static_cast<std::size_t>(j) * k;
        for (int p = 0; p < k; ++p) acc += ra[p] * rb[p];
        out[static_cast<std::size_t>(i) * n + j] = acc;
      }
  }
  return detail::make_result<T>(
      {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode<T>& node) {
        const auto& av = *node.parents[0]->data;
        const auto& bv = *node.parents[1]->data;
        const auto& g = node.grad;
        // dA = dC * B
        std::vector<T> da(static_cast<std::size_t>(m) * k, T(0));
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T gv = g[static_cast<std::size_t>(i) * n + j];
            for (int p = 0; p < k; ++p)
              da[static_cast<std::size_t>(i) * k + p] += gv * bv[static_cast<std::size_t>(j) * k + p];
          }
        detail::accumulate(*node.parents[0], da);
        // dB = dC^T * A
        std::vector<T> db(static_cast<std::size_t>(n) * k, T(0));
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T gv = g[static_cast<std::size_t>(i) * n + j];
            for (int p = 0; p < k; ++p)
              db[static_cast<std::size_t>(j) * k + p] += gv * av[static_cast<std::size_t>(i) * k + p];
          }
        detail::accumulate(*node.parents[1], db);
      });
}

template <class T>
Tensor<T> add_row_bias(const Tensor<T>& m, const Tensor<T>& bias) {
  check(m.shape().size() == 2, "add_row_bias: rank-2 input");
  check(bias.shape().size() == 1 && bias.dim(0) == m.cols(), "add_row_bias: bias length");
  const int rows = m.rows(), cols = m.cols();
  std::vector<T> out(m.values());
  const auto& bv = bias.values();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] += bv[j];
  return detail::make_result<T>(
      m.shape(), std::move(out), {m, bias}, [rows, cols](TensorNode<T>& n) {
        detail::accumulate(*n.parents[0], n.grad);
        std::vector<T> db(static_cast<std::size_t>(cols), T(0));
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) db[j] += n.grad[static_cast<std::size_t>(i) * cols + j];
        detail::accumulate(*n.parents[1], db);
      });
}

// Row-wise softmax, numerically stable. Masked entries arrive as large
// negative logits and underflow to exactly zero probability.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
  check(m.shape().size() == 2, "softmax_rows: rank-2 input");
  const int rows = m.rows(), cols = m.cols();
  std::vector<T> out(m.values().size());
  const auto& x = m.values();
  for (int i = 0; i < rows; ++i) {
    const T* xr = x.data() + static_cast<std::size_t>(i) * cols;
    T* yr = out.data() + static_cast<std::size_t>(i) * cols;
    T mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < cols; ++j) yr[j] /= sum;
  }
  return detail::make_result<T>(
      m.shape(), std::move(out), {m}, [rows, cols](TensorNode<T>& n) {
        const auto& y = *n.data;
        std::vector<T> dx(n.grad.size());
        for (int i = 0; i < rows; ++i) {
          const T* yr = y.data() + static_cast<std::size_t>(i) * cols;
          const T* gr = n.grad.data() + static_cast<std::size_t>(i) * cols;
          T dot = T(0);
          for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
          T* dr = dx.data() + static_cast<std::size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) dr[j] = (gr[j] - dot) * yr[j];
        }
        detail::accumulate(*n.parents[0], dx);
      });
}

template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& m) {
  check(m.shape().size() == 2, "log_softmax_rows: rank-2 input");
  const int rows = m.rows(), cols = m.cols();
  std::vector<T> out(m.values().size());
  const auto& x = m.values();
  for (int i = 0; i < rows; ++i) {
    const T* xr = x.data() + static_cast<std::size_t>(i) * cols;
    T* yr = out.data() + static_cast<std::size_t>(i) * cols;
    T mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const T lse = mx + std::log(sum);
    for (int j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  }
  return detail::make_result<T>(
      m.shape(), std::move(out), {m}, [rows, cols](TensorNode<T>& n) {
        const auto& y = *n.data;
        std::vector<T> dx(n.grad.size());
        for (int i = 0; i < rows; ++i) {
          const T* yr = y.data() + static_cast<std::size_t>(i) * cols;
          const T* gr = n.grad.data() + static_cast<std::size_t>(i) * cols;
          T gsum = T(0);
          for (int j = 0; j < cols; ++j) gsum += gr[j];
          T* dr = dx.data() + static_cast<std::size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) dr[j] = gr[j] - std::exp(yr[j]) * gsum;
        }
        detail::accumulate(*n.parents[0], dx);
      });
}

// Row-wise layer normalization with affine rescale. The normalized activations
// (pre-affine) have zero mean and unit variance per row up to eps.
template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& m, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5)) {
  check(m.shape().size() == 2, "layer_norm_rows: rank-2 input");
  const int rows = m.rows(), cols = m.cols();
  check(gamma.size() == cols && beta.size() == cols, "layer_norm_rows: affine size");
  std::vector<T> out(m.values().size());
  std::vector<T> xhat(m.values().size());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const auto& x = m.values();
  const auto& g = gamma.values();
  const auto& b = beta.values();
  for (int i = 0; i < rows; ++i) {
    const T* xr = x.data() + static_cast<std::size_t>(i) * cols;
    T mean = T(0);
    for (int j = 0; j < cols; ++j) mean += xr[j];
    mean /= T(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(i)] = rs;
    for (int j = 0; j < cols; ++j) {
      const T xh = (xr[j] - mean) * rs;
      xhat[static_cast<std::size_t>(i) * cols + j] = xh;
      out[static_cast<std::size_t>(i) * cols + j] = g[j] * xh + b[j];
    }
  }
  return detail::make_result<T>(
      m.shape(), std::move(out), {m, gamma, beta},
      [rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](TensorNode<T>& n) {
        const auto& g = *n.parents[1]->data;
        std::vector<T> dx(n.grad.size());
        std::vector<T> dgamma(static_cast<std::size_t>(cols), T(0));
        std::vector<T> dbeta(static_cast<std::size_t>(cols), T(0));
        for (int i = 0; i < rows; ++i) {
          const T* gr = n.grad.data() + static_cast<std::size_t>(i) * cols;
          const T* xh = xhat.data() + static_cast<std::size_t>(i) * cols;
          T mean_dy = T(0), mean_dyxh = T(0);
          for (int j = 0; j < cols; ++j) {
            const T dyh = gr[j] * g[j];
            mean_dy += dyh;
            mean_dyxh += dyh * xh[j];
            dgamma[j] += gr[j] * xh[j];
            dbeta[j] += gr[j];
          }
          mean_dy /= T(cols);
          mean_dyxh /= T(cols);
          T* dr = dx.data() + static_cast<std::size_t>(i) * cols;
          const T rs = rstd[static_cast<std::size_t>(i)];
          for (int j = 0; j < cols; ++j) {
            const T dyh = gr[j] * g[j];
            dr[j] = rs * (dyh - mean_dy - xh[j] * mean_dyxh);
          }
        }
        detail::accumulate(*n.parents[0], dx);
        detail::accumulate(*n.parents[1], dgamma);
        detail::accumulate(*n.parents[2], dbeta);
      });
}

template <class T>
Tensor<T> tanh_t(const Tensor<T>& a) {
  std::vector<T> out(a.values());
  for (auto& v : out) v = std::tanh(v);
  return detail::make_result<T>(
      a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
        const auto& y = *n.data;
        std::vector<T> dx(n.grad.size());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = n.grad[i] * (T(1) - y[i] * y[i]);
        detail::accumulate(*n.parents[0], dx);
      });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  std::vector<T> out(a.values());
  for (auto& v : out) {
    const T x = v;
    v = T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
  }
  return detail::make_result<T>(
      a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
        const auto& x = *n.parents[0]->data;
        std::vector<T> dx(n.grad.size());
        constexpr T inv_sqrt2 = T(0.7071067811865476);
        constexpr T inv_sqrt2pi = T(0.3989422804014327);
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
          const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
          dx[i] = n.grad[i] * (cdf + x[i] * pdf);
        }
        detail::accumulate(*n.parents[0], dx);
      });
}

template <class T>
Tensor<T> abs_t(const Tensor<T>& a) {
  std::vector<T> out(a.values());
  for (auto& v : out) v = std::abs(v);
  return detail::make_result<T>(
      a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
        const auto& x = *n.parents[0]->data;
        std::vector<T> dx(n.grad.size());
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
          dx[i] = n.grad[i] * s;
        }
        detail::accumulate(*n.parents[0], dx);
      });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  return detail::make_result<T>(
      {1}, {acc}, {a}, [](TensorNode<T>& n) {
        std::vector<T> dx(n.parents[0]->data->size(), n.grad[0]);
        detail::accumulate(*n.parents[0], dx);
      });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  const std::size_t n = a.values().size();
  check(n > 0, "mean_all: empty tensor");
  T acc = T(0);
  for (T v : a.values()) acc += v;
  acc /= T(n);
  return detail::make_result<T>(
      {1}, {acc}, {a}, [n](TensorNode<T>& node) {
        std::vector<T> dx(node.parents[0]->data->size(), node.grad[0] / T(n));
        detail::accumulate(*node.parents[0], dx);
      });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_rows: no inputs");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const auto& p : parts) {
    check(p.shape().size() == 2 && p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result<T>(
      {rows, cols}, std::move(out), parts, [](TensorNode<T>& n) {
        std::size_t offset = 0;
        for (auto& parent : n.parents) {
          const std::size_t len = parent->data->size();
          std::vector<T> slice(n.grad.begin() + offset, n.grad.begin() + offset + len);
          detail::accumulate(*parent, slice);
          offset += len;
        }
      });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const auto& p : parts) {
    check(p.shape().size() == 2 && p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  int col_off = 0;
  for (const auto& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < pc; ++j)
        out[static_cast<std::size_t>(i) * cols + col_off + j] =
            p.values()[static_cast<std::size_t>(i) * pc + j];
    col_off += pc;
  }
  return detail::make_result<T>(
      {rows, cols}, std::move(out), parts, [rows, cols](TensorNode<T>& n) {
        int col_off2 = 0;
        for (auto& parent : n.parents) {
          const int pc = parent->shape[1];
          std::vector<T> slice(static_cast<std::size_t>(rows) * pc);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j)
              slice[static_cast<std::size_t>(i) * pc + j] =
                  n.grad[static_cast<std::size_t>(i) * cols + col_off2 + j];
          detail::accumulate(*parent, slice);
          col_off2 += pc;
        }
      });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& m, int start, int len) {
  check(m.shape().size() == 2, "slice_cols: rank-2 input");
  const int rows = m.rows(), cols = m.cols();
  check(start >= 0 && len > 0 && start + len <= cols, "slice_cols: out of range");
  std::vector<T> out(static_cast<std::size_t>(rows) * len);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<std::size_t>(i) * len + j] =
          m.values()[static_cast<std::size_t>(i) * cols + start + j];
  return detail::make_result<T>(
      {rows, len}, std::move(out), {m}, [rows, cols, start, len](TensorNode<T>& n) {
        std::vector<T> dx(static_cast<std::size_t>(rows) * cols, T(0));
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < len; ++j)
            dx[static_cast<std::size_t>(i) * cols + start + j] =
                n.grad[static_cast<std::size_t>(i) * len + j];
        detail::accumulate(*n.parents[0], dx);
      });
}

// Rows of m selected by index; duplicate indices accumulate gradient, which is
// exactly what embedding lookups need.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& m, const std::vector<int>& idx) {
  check(m.shape().size() == 2, "gather_rows: rank-2 input");
  const int rows = m.rows(), cols = m.cols();
  std::vector<T> out(idx.size() * static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < rows, "gather_rows: index out of range");
    std::copy_n(m.values().data() + static_cast<std::size_t>(idx[i]) * cols, cols,
                out.data() + i * cols);
  }
  return detail::make_result<T>(
      {static_cast<int>(idx.size()), cols}, std::move(out), {m},
      [rows, cols, idx](TensorNode<T>& n) {
        std::vector<T> dx(static_cast<std::size_t>(rows) * cols, T(0));
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (int j = 0; j < cols; ++j)
            dx[static_cast<std::size_t>(idx[i]) * cols + j] += n.grad[i * cols + j];
        detail::accumulate(*n.parents[0], dx);
      });
}

// out[i] = m[i, ids[i]]
template <class T>
Tensor<T> pick_cols(const Tensor<T>& m, const std::vector<int>& ids) {
  check(m.shape().size() == 2, "pick_cols: rank-2 input");
  check(static_cast<int>(ids.size()) == m.rows(), "pick_cols: one index per row");
  const int cols = m.cols();
  std::vector<T> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < cols, "pick_cols: index out of range");
    out[i] = m.values()[i * static_cast<std::size_t>(cols) + ids[i]];
  }
  return detail::make_result<T>(
      {static_cast<int>(ids.size())}, std::move(out), {m}, [cols, ids](TensorNode<T>& n) {
        std::vector<T> dx(n.parents[0]->data->size(), T(0));
        for (std::size_t i = 0; i < ids.size(); ++i)
          dx[i * static_cast<std::size_t>(cols) + ids[i]] += n.grad[i];
        detail::accumulate(*n.parents[0], dx);
      });
}

// ---- compositions used throughout the models ----

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_row_bias(matmul(x, w), b);
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  Tensor<T> d = sub(pred, target);
  return mean_all(mul(d, d));
}

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return mean_all(abs_t(sub(pred, target)));
}

}  // namespace jala
