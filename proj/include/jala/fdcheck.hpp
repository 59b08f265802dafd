#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jala/tensor.hpp"

namespace jala {

// Central-difference gradient oracle. Kept independent of the reverse-mode
// path: it only ever calls f on perturbed copies of the parameter vector.
// Every loss in the repo is validated against this.
template <class T, class F>
std::vector<T> finite_difference_gradient(F&& f, std::vector<T> params, T eps) {
  check(eps > T(0), "finite_difference_gradient: eps must be positive");
  std::vector<T> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T saved = params[i];
    const T step = eps * (T(1) + std::abs(saved));
    params[i] = saved + step;
    const T fp = static_cast<T>(f(params));
    params[i] = saved - step;
    const T fm = static_cast<T>(f(params));
    params[i] = saved;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      fail("finite_difference_gradient: non-finite objective at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (T(2) * step);
  }
  return grad;
}

template <class T, class F>
Tensor<T> finite_difference_gradient(F&& f, const Tensor<T>& params, T eps) {
  auto wrapped = [&f, &params](const std::vector<T>& v) {
    Tensor<T> p = Tensor<T>::from_values(params.shape(), v);
    return f(p);
  };
  std::vector<T> g = finite_difference_gradient<T>(wrapped, params.values(), eps);
  return Tensor<T>::from_values(params.shape(), std::move(g));
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
template <class T>
T max_relative_error(const std::vector<T>& a, const std::vector<T>& b, T floor = T(1e-6)) {
  check(a.size() == b.size(), "max_relative_error: length mismatch");
  T worst = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace jala
