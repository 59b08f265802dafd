#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <vector>

#include "jala/params.hpp"

namespace jala {

// Linear warmup to base over the first ceil(warmup_frac * total) steps, then
// cosine decay to zero at `total`.
inline double lr_schedule(std::int64_t step, std::int64_t total, double base_lr,
                          double warmup_frac) {
  check(step >= 0 && step <= total, "lr_schedule: step out of range");
  const std::int64_t warmup = static_cast<std::int64_t>(
      std::ceil(warmup_frac * static_cast<double>(total)));
  if (warmup > 0 && step < warmup)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return base_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Scales every gradient so the global norm does not exceed max_norm.
// Returns the pre-clip norm.
template <class T>
double clip_global_norm(ParamSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.items) {
    if (!t.has_grad()) continue;
    for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [name, t] : params.items) {
      if (!t.has_grad()) continue;
      for (T& g : t.grad()) g *= factor;
    }
  }
  return norm;
}

// AdamW with decoupled weight decay: the decay multiplies the parameter
// directly and never enters the moment estimates.
template <class T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double weight_decay, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

  void attach(const ParamSet<T>& params) {
    m_.clear();
    v_.clear();
    for (const auto& [name, t] : params.items) {
      m_.emplace_back(t.values().size(), T(0));
      v_.emplace_back(t.values().size(), T(0));
    }
    step_count_ = 0;
  }

  void step(ParamSet<T>& params, double lr) {
    check(m_.size() == params.items.size(), "AdamW: not attached to this parameter set");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params.items.size(); ++p) {
      auto& t = params.items[p].second;
      auto& vals = t.values();
      const bool has_grad = t.has_grad();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double g = has_grad ? static_cast<double>(t.grad()[i]) : 0.0;
        double m = static_cast<double>(m_[p][i]);
        double v = static_cast<double>(v_[p][i]);
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        m_[p][i] = static_cast<T>(m);
        v_[p][i] = static_cast<T>(v);
        double x = static_cast<double>(vals[i]);
        x -= lr * weight_decay_ * x;
        x -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        vals[i] = static_cast<T>(x);
      }
    }
  }

  std::int64_t step_count() const { return step_count_; }

  void save(std::ostream& os) const {
    io::put_u64(os, static_cast<std::uint64_t>(step_count_));
    io::put_f64(os, beta1_);
    io::put_f64(os, beta2_);
    io::put_f64(os, weight_decay_);
    io::put_f64(os, eps_);
    io::put_u64(os, m_.size());
    for (std::size_t p = 0; p < m_.size(); ++p) {
      io::put_vector(os, m_[p]);
      io::put_vector(os, v_[p]);
    }
  }

  void load(std::istream& is) {
    step_count_ = static_cast<std::int64_t>(io::get_u64(is));
    beta1_ = io::get_f64(is);
    beta2_ = io::get_f64(is);
    weight_decay_ = io::get_f64(is);
    eps_ = io::get_f64(is);
    const std::uint64_t n = io::get_u64(is);
    m_.assign(n, {});
    v_.assign(n, {});
    for (std::size_t p = 0; p < n; ++p) {
      m_[p] = io::get_vector<T>(is);
      v_[p] = io::get_vector<T>(is);
    }
  }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.95;
  double weight_decay_ = 0.0;
  double eps_ = 1e-8;
  std::int64_t step_count_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace jala
