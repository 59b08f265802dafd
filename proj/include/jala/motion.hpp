#pragma once

#include <cmath>
#include <vector>

#include "jala/common.hpp"
#include "jala/linalg.hpp"

namespace jala {

enum class HandSide { left, right };

// One pose sample: wrist translation (world units), wrist rotation
// (axis-angle, magnitude <= pi after canonicalization) and finger joint
// angles. Static hand-shape parameters are not modeled.
struct PoseFrame {
  Vec3 wrist_translation{0, 0, 0};
  Vec3 wrist_rotation{0, 0, 0};
  std::vector<double> finger_joints;

  bool finite() const {
    for (double v : wrist_translation)
      if (!std::isfinite(v)) return false;
    for (double v : wrist_rotation)
      if (!std::isfinite(v)) return false;
    for (double v : finger_joints)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void canonicalize() { wrist_rotation = canonicalize_axis_angle(wrist_rotation); }
};

// Fixed-length window of poses, the unit of tokenization.
struct MotionChunk {
  std::vector<PoseFrame> frames;
  HandSide hand_side = HandSide::right;
};

// Splits a pose sequence into consecutive non-overlapping windows of length
// chunk_len; a trailing remainder shorter than chunk_len is dropped.
inline std::vector<MotionChunk> chunk_sequence(const std::vector<PoseFrame>& poses, int chunk_len,
                                               HandSide side = HandSide::right) {
  check(chunk_len > 0, "chunk_sequence: chunk length must be positive");
  check(static_cast<int>(poses.size()) >= chunk_len,
        "chunk_sequence: sequence shorter than one chunk");
  const std::size_t count = poses.size() / static_cast<std::size_t>(chunk_len);
  std::vector<MotionChunk> chunks(count);
  for (std::size_t c = 0; c < count; ++c) {
    chunks[c].hand_side = side;
    chunks[c].frames.assign(poses.begin() + static_cast<std::ptrdiff_t>(c) * chunk_len,
                            poses.begin() + static_cast<std::ptrdiff_t>(c + 1) * chunk_len);
  }
  return chunks;
}

// Flattened views used by the tokenizer: wrist stream is (translation,
// rotation) per frame, finger stream is the joint vector per frame.
inline std::vector<double> wrist_features(const MotionChunk& chunk) {
  std::vector<double> out;
  out.reserve(chunk.frames.size() * 6);
  for (const auto& f : chunk.frames) {
    out.insert(out.end(), f.wrist_translation.begin(), f.wrist_translation.end());
    out.insert(out.end(), f.wrist_rotation.begin(), f.wrist_rotation.end());
  }
  return out;
}

inline std::vector<double> finger_features(const MotionChunk& chunk) {
  std::vector<double> out;
  for (const auto& f : chunk.frames) out.insert(out.end(), f.finger_joints.begin(), f.finger_joints.end());
  return out;
}

}  // namespace jala
