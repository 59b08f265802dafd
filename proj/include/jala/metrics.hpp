#pragma once

#include <cmath>
#include <vector>

#include "jala/linalg.hpp"
#include "jala/motion.hpp"

namespace jala {

// Toy forward kinematics: the wrist point plus one fingertip per finger
// joint. Finger i rests along a fanned direction in the palm plane and curls
// toward the palm normal by its joint angle; the whole hand rigidly follows
// the wrist rotation and translation.
constexpr double kFingerLength = 0.2;

inline std::vector<Vec3> joints_from_pose(const PoseFrame& frame) {
  const int df = static_cast<int>(frame.finger_joints.size());
  std::vector<Vec3> joints;
  joints.reserve(static_cast<std::size_t>(1 + df));
  joints.push_back(frame.wrist_translation);
  const Mat3 r = axis_angle_to_matrix(frame.wrist_rotation);
  for (int i = 0; i < df; ++i) {
    const double fan = df > 1 ? (-0.25 + 0.5 * i / (df - 1)) * 3.14159265358979323846 : 0.0;
    const Vec3 base{std::cos(fan), std::sin(fan), 0.0};
    const double theta = frame.finger_joints[static_cast<std::size_t>(i)];
    const Vec3 local = kFingerLength * Vec3{std::cos(theta) * base[0], std::cos(theta) * base[1],
                                            std::sin(theta)};
    joints.push_back(frame.wrist_translation + matvec(r, local));
  }
  return joints;
}

namespace detail_metrics {

inline void check_lengths(const std::vector<PoseFrame>& pred, const std::vector<PoseFrame>& gt) {
  check(pred.size() == gt.size() && !pred.empty(), "metrics: sequence length mismatch");
}

// Optimal rotation (Horn's quaternion method) mapping centered pred points
// onto centered gt points.
inline Mat3 best_rotation(const std::vector<Vec3>& pred_centered,
                          const std::vector<Vec3>& gt_centered) {
  double s[3][3] = {};
  for (std::size_t i = 0; i < pred_centered.size(); ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s[a][b] += pred_centered[i][static_cast<std::size_t>(a)] *
                                             gt_centered[i][static_cast<std::size_t>(b)];
  std::vector<double> n = {
      s[0][0] + s[1][1] + s[2][2], s[1][2] - s[2][1],          s[2][0] - s[0][2],          s[0][1] - s[1][0],
      s[1][2] - s[2][1],           s[0][0] - s[1][1] - s[2][2], s[0][1] + s[1][0],          s[2][0] + s[0][2],
      s[2][0] - s[0][2],           s[0][1] + s[1][0],          -s[0][0] + s[1][1] - s[2][2], s[1][2] + s[2][1],
      s[0][1] - s[1][0],           s[2][0] + s[0][2],          s[1][2] + s[2][1],          -s[0][0] - s[1][1] + s[2][2]};
  std::vector<double> evals, evecs;
  symmetric_eigen(n, 4, evals, evecs);
  const double w = evecs[0 * 4 + 0], x = evecs[1 * 4 + 0], y = evecs[2 * 4 + 0], z = evecs[3 * 4 + 0];
  Mat3 r;
  r[0] = {w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)};
  r[1] = {2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)};
  r[2] = {2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z};
  return r;
}

inline bool nearly_collinear(const std::vector<Vec3>& centered) {
  std::vector<double> cov(9, 0.0);
  for (const auto& p : centered)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[static_cast<std::size_t>(a) * 3 + b] += p[static_cast<std::size_t>(a)] * p[static_cast<std::size_t>(b)];
  std::vector<double> evals, evecs;
  symmetric_eigen(cov, 3, evals, evecs);
  return evals[1] <= 1e-12 * std::max(evals[0], 1e-300);
}

}  // namespace detail_metrics

// Mean Euclidean distance between predicted and ground-truth joints over all
// frames.
inline double mpjpe(const std::vector<PoseFrame>& pred, const std::vector<PoseFrame>& gt) {
  detail_metrics::check_lengths(pred, gt);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const auto pj = joints_from_pose(pred[t]);
    const auto gj = joints_from_pose(gt[t]);
    check(pj.size() == gj.size(), "mpjpe: joint count mismatch");
    for (std::size_t j = 0; j < pj.size(); ++j) {
      total += norm(pj[j] - gj[j]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// MPJPE after per-frame Procrustes alignment of the prediction onto the
// ground truth. Similarity alignment (rotation, translation, uniform scale)
// by default; collinear joint sets fall back to rotation+translation and
// raise the degenerate flag.
inline double pa_mpjpe(const std::vector<PoseFrame>& pred, const std::vector<PoseFrame>& gt,
                       bool with_scale = true, bool* degenerate_flag = nullptr) {
  detail_metrics::check_lengths(pred, gt);
  if (degenerate_flag != nullptr) *degenerate_flag = false;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const auto pj = joints_from_pose(pred[t]);
    const auto gj = joints_from_pose(gt[t]);
    const std::size_t J = pj.size();
    check(J >= 3, "pa_mpjpe: needs at least three joints");
    Vec3 pc{0, 0, 0}, gc{0, 0, 0};
    for (std::size_t j = 0; j < J; ++j) {
      pc = pc + pj[j];
      gc = gc + gj[j];
    }
    pc = (1.0 / static_cast<double>(J)) * pc;
    gc = (1.0 / static_cast<double>(J)) * gc;
    std::vector<Vec3> p(J), g(J);
    for (std::size_t j = 0; j < J; ++j) {
      p[j] = pj[j] - pc;
      g[j] = gj[j] - gc;
    }
    bool use_scale = with_scale;
    if (detail_metrics::nearly_collinear(p) || detail_metrics::nearly_collinear(g)) {
      use_scale = false;
      if (degenerate_flag != nullptr) *degenerate_flag = true;
    }
    const Mat3 r = detail_metrics::best_rotation(p, g);
    double scale = 1.0;
    if (use_scale) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        num += dot(g[j], matvec(r, p[j]));
        den += dot(p[j], p[j]);
      }
      scale = den > 0.0 ? num / den : 1.0;
    }
    for (std::size_t j = 0; j < J; ++j) {
      total += norm(scale * matvec(r, p[j]) - g[j]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// Mean wrist trajectory offset.
inline double mwte(const std::vector<PoseFrame>& pred, const std::vector<PoseFrame>& gt) {
  detail_metrics::check_lengths(pred, gt);
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    total += norm(pred[t].wrist_translation - gt[t].wrist_translation);
  return total / static_cast<double>(pred.size());
}

enum class MdeMode { displacement, angle };

// Error of the start-to-end wrist displacement: by default the Euclidean
// distance between the two displacement vectors, optionally the angle
// between them.
inline double mde(const std::vector<PoseFrame>& pred, const std::vector<PoseFrame>& gt,
                  MdeMode mode = MdeMode::displacement) {
  detail_metrics::check_lengths(pred, gt);
  check(pred.size() >= 2, "mde: needs at least two frames");
  const Vec3 dp = pred.back().wrist_translation - pred.front().wrist_translation;
  const Vec3 dg = gt.back().wrist_translation - gt.front().wrist_translation;
  if (mode == MdeMode::displacement) return norm(dp - dg);
  const double np = norm(dp), ng = norm(dg);
  if (np < 1e-12 || ng < 1e-12) return 0.0;
  double c = dot(dp, dg) / (np * ng);
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

}  // namespace jala
