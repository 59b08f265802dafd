#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "jala/common.hpp"

// Small dense helpers with no autodiff involvement: rotations for the toy
// kinematics, a cyclic Jacobi eigensolver for Procrustes alignment and the
// 2-component projection, and an SPD solve for the ridge-regression checks.
namespace jala {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 matvec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

// Rodrigues formula; the axis-angle vector's norm is the rotation angle.
inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = norm(aa);
  Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (angle < 1e-12) return r;
  const Vec3 u = (1.0 / angle) * aa;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  r[0] = {c + u[0] * u[0] * t, u[0] * u[1] * t - u[2] * s, u[0] * u[2] * t + u[1] * s};
  r[1] = {u[1] * u[0] * t + u[2] * s, c + u[1] * u[1] * t, u[1] * u[2] * t - u[0] * s};
  r[2] = {u[2] * u[0] * t - u[1] * s, u[2] * u[1] * t + u[0] * s, c + u[2] * u[2] * t};
  return r;
}

// Wraps an axis-angle vector so its magnitude lies in [0, pi].
inline Vec3 canonicalize_axis_angle(const Vec3& aa) {
  constexpr double pi = 3.14159265358979323846;
  double angle = norm(aa);
  if (angle <= pi || angle < 1e-12) return aa;
  double wrapped = std::fmod(angle, 2.0 * pi);
  if (wrapped > pi) wrapped -= 2.0 * pi;
  return (wrapped / angle) * aa;
}

// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major, n*n).
// Returns eigenvalues descending; eigenvectors fill the columns of `vecs`.
inline void symmetric_eigen(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                            std::vector<double>& vecs) {
  check(static_cast<int>(a.size()) == n * n, "symmetric_eigen: size mismatch");
  vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  auto vt = [&](int i, int j) -> double& { return vecs[static_cast<std::size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-26) break;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vt(k, p), vkq = vt(k, q);
          vt(k, p) = c * vkp - s * vkq;
          vt(k, q) = s * vkp + c * vkq;
        }
      }
  }
  eigenvalues.resize(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    eigenvalues[static_cast<std::size_t>(i)] = at(i, i);
    order[static_cast<std::size_t>(i)] = i;
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (eigenvalues[static_cast<std::size_t>(order[j])] >
          eigenvalues[static_cast<std::size_t>(order[i])])
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  std::vector<double> ev_sorted(static_cast<std::size_t>(n));
  std::vector<double> vecs_sorted(vecs.size());
  for (int col = 0; col < n; ++col) {
    const int src = order[static_cast<std::size_t>(col)];
    ev_sorted[static_cast<std::size_t>(col)] = eigenvalues[static_cast<std::size_t>(src)];
    for (int row = 0; row < n; ++row)
      vecs_sorted[static_cast<std::size_t>(row) * n + col] = vecs[static_cast<std::size_t>(row) * n + src];
  }
  eigenvalues = std::move(ev_sorted);
  vecs = std::move(vecs_sorted);
}

// Cholesky solve for symmetric positive definite systems, one right-hand side.
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, int n) {
  check(static_cast<int>(a.size()) == n * n && static_cast<int>(b.size()) == n,
        "solve_spd: size mismatch");
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  for (int j = 0; j < n; ++j) {
    double d = at(j, j);
    for (int k = 0; k < j; ++k) d -= at(j, k) * at(j, k);
    check(d > 0.0, "solve_spd: matrix not positive definite");
    at(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double v = at(i, j);
      for (int k = 0; k < j; ++k) v -= at(i, k) * at(j, k);
      at(i, j) = v / at(j, j);
    }
  }
  for (int i = 0; i < n; ++i) {
    double v = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) v -= at(i, k) * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = v / at(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double v = b[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) v -= at(k, i) * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = v / at(i, i);
  }
  return b;
}

}  // namespace jala
