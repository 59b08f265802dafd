#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jala/common.hpp"
#include "jala/motion.hpp"
#include "jala/rng.hpp"
#include "jala/serialize.hpp"

namespace jala {

enum class Split { lab, wild };

struct WorldConfig {
  int finger_dims = 5;
  int episode_frames = 45;
  int chunk_len = 15;
  int target_count = 8;
  int verb_count = 4;
  int obs_embed_dim = 16;
  int nuisance_dim = 8;
  double nuisance_scale_lab = 0.1;
  double nuisance_scale_wild = 2.0;
  double nuisance_dominance = 2.0;  // required variance ratio on the wild split
  double obs_noise = 0.02;
  double wild_time_scale = 0.5;
  int proprio_dim = 4;
  int action_dim = 6;
  int action_horizon = 8;
  int lab_train_count = 512;
  int lab_eval_count = 64;
  int wild_train_count = 512;
  int wild_eval_count = 64;
  double wild_labeled_fraction = 0.10;
  double wild_eval_labeled_fraction = 1.0;
  std::uint64_t seed = 7;

  int obs_dim() const { return obs_embed_dim + nuisance_dim; }
  int pose_dims() const { return 6 + finger_dims; }

  void validate() const {
    check(wild_time_scale > 0, "world config: wild_time_scale must be positive");
    check(lab_train_count >= 1 && lab_eval_count >= 1 && wild_train_count >= 1 &&
              wild_eval_count >= 1,
          "world config: split sizes must be >= 1");
    check(episode_frames >= chunk_len, "world config: episode shorter than one chunk");
    check(wild_labeled_fraction >= 0 && wild_labeled_fraction <= 1,
          "world config: bad labeled fraction");
  }
};

// One synthetic episode. Poses are present iff labeled; observations and
// proprioception are always present.
struct EpisodeSample {
  std::vector<int> instruction_ids;               // [verb, verb_count + target]
  std::vector<std::vector<double>> observations;  // per frame, obs_dim
  std::vector<PoseFrame> poses;                   // empty when unlabeled
  std::vector<std::vector<double>> proprio;       // per frame, proprio_dim
  bool labeled = false;
  Split split = Split::lab;
  std::uint64_t episode_index = 0;  // global seed-range index

  int frames() const { return static_cast<int>(observations.size()); }
};

struct SplitHandle {
  Split split = Split::lab;
  std::string name;
  std::uint64_t base = 0;  // global seed-range offset
  int count = 0;
  double labeled_fraction = 1.0;
};

struct DatasetSplits {
  SplitHandle lab_train, lab_eval, wild_train, wild_eval;
};

// Scripted reach-and-manipulate world. A minimum-jerk wrist trajectory moves
// toward an instruction-selected target while a grasp phase curls the
// fingers; observations are a fixed random tanh embedding of the pose with
// split-specific nuisance noise appended. The embedding weights play the role
// of a frozen pretrained visual encoder and are shared by every split.
class World {
 public:
  explicit World(WorldConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    Rng enc = rng.substream("encoder");
    const int pd = cfg_.pose_dims();
    w_embed_.resize(static_cast<std::size_t>(cfg_.obs_embed_dim) * pd);
    const double es = 0.9 / std::sqrt(static_cast<double>(pd));
    for (auto& v : w_embed_) v = enc.normal() * es;
    b_embed_.resize(static_cast<std::size_t>(cfg_.obs_embed_dim));
    for (auto& v : b_embed_) v = enc.normal() * 0.05;

    Rng pr = rng.substream("proprio");
    w_proprio_.resize(static_cast<std::size_t>(cfg_.proprio_dim) * pd);
    for (auto& v : w_proprio_) v = pr.normal() * es;

    Rng ar = rng.substream("action");
    const int ain = pd + cfg_.proprio_dim;
    w_action_.resize(static_cast<std::size_t>(cfg_.action_dim) * ain);
    const double as = 1.0 / std::sqrt(static_cast<double>(ain));
    for (auto& v : w_action_) v = ar.normal() * as;

    // Target table: points on a circle with alternating heights.
    targets_.resize(static_cast<std::size_t>(cfg_.target_count));
    for (int i = 0; i < cfg_.target_count; ++i) {
      const double ang = 2.0 * 3.14159265358979323846 * i / cfg_.target_count;
      targets_[static_cast<std::size_t>(i)] = {std::cos(ang), std::sin(ang),
                                               0.3 + 0.2 * (i % 2)};
    }
  }

  const WorldConfig& config() const { return cfg_; }

  DatasetSplits make_splits() const {
    constexpr std::uint64_t kRange = 1ull << 20;
    check(cfg_.lab_train_count < static_cast<int>(kRange) &&
              cfg_.lab_eval_count < static_cast<int>(kRange) &&
              cfg_.wild_train_count < static_cast<int>(kRange) &&
              cfg_.wild_eval_count < static_cast<int>(kRange),
          "make_splits: split size exceeds its seed range");
    DatasetSplits s;
    s.lab_train = {Split::lab, "lab_train", 1 * kRange, cfg_.lab_train_count, 1.0};
    s.lab_eval = {Split::lab, "lab_eval", 2 * kRange, cfg_.lab_eval_count, 1.0};
    s.wild_train = {Split::wild, "wild_train", 3 * kRange, cfg_.wild_train_count,
                    cfg_.wild_labeled_fraction};
    s.wild_eval = {Split::wild, "wild_eval", 4 * kRange, cfg_.wild_eval_count,
                   cfg_.wild_eval_labeled_fraction};
    return s;
  }

  // i-th episode of a handle. Labeling spreads the configured fraction evenly:
  // episode i is labeled iff floor((i+1)*f) > floor(i*f).
  EpisodeSample generate(const SplitHandle& handle, int i) const {
    check(i >= 0 && i < handle.count, "generate: episode index out of range");
    const bool labeled =
        std::floor((i + 1) * handle.labeled_fraction) > std::floor(i * handle.labeled_fraction);
    return generate_indexed(handle.split, handle.base + static_cast<std::uint64_t>(i), labeled);
  }

  // Underlying generator, also used directly by tests that need matched-seed
  // lab/wild pairs.
  EpisodeSample generate_indexed(Split split, std::uint64_t global_index, bool labeled) const {
    Rng ep = Rng(cfg_.seed).substream("episode:" + std::to_string(global_index));
    Rng draw = ep.substream("draw");
    Rng noise = ep.substream("noise");

    const int verb = static_cast<int>(draw.below(static_cast<std::uint64_t>(cfg_.verb_count)));
    const int target = static_cast<int>(draw.below(static_cast<std::uint64_t>(cfg_.target_count)));

    Vec3 start{draw.uniform(-1.0, 1.0), draw.uniform(-1.0, 1.0), draw.uniform(0.0, 0.4)};
    Vec3 goal = targets_[static_cast<std::size_t>(target)];
    for (auto& g : goal) g += draw.uniform(-0.05, 0.05);

    Vec3 rot_axis{draw.normal(), draw.normal(), draw.normal()};
    const double axis_norm = std::max(norm(rot_axis), 1e-9);
    rot_axis = (1.0 / axis_norm) * rot_axis;
    // Verb shapes the motion: rotation amount and grasp amount.
    const double rot_amp = (verb == 2 ? 1.2 : 0.4) * draw.uniform(0.6, 1.0);
    const double grasp_amp = (verb == 0 ? 0.1 : (verb == 1 ? 1.2 : 0.7)) * draw.uniform(0.7, 1.0);
    std::vector<double> finger_base(static_cast<std::size_t>(cfg_.finger_dims));
    for (auto& v : finger_base) v = draw.uniform(0.0, 0.2);

    const int frames = cfg_.episode_frames;
    std::vector<PoseFrame> poses(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      const double u = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
      const double m = min_jerk(u);
      PoseFrame& f = poses[static_cast<std::size_t>(t)];
      f.wrist_translation = start + m * (goal - start);
      f.wrist_rotation = (rot_amp * m) * rot_axis;
      const double g = grasp_phase(u);
      f.finger_joints.resize(static_cast<std::size_t>(cfg_.finger_dims));
      for (int d = 0; d < cfg_.finger_dims; ++d)
        f.finger_joints[static_cast<std::size_t>(d)] =
            finger_base[static_cast<std::size_t>(d)] +
            grasp_amp * g * (0.6 + 0.4 * d / std::max(1, cfg_.finger_dims - 1));
      f.canonicalize();
    }

    // The wild split plays the same motion at reduced speed: every per-frame
    // delta shrinks by wild_time_scale.
    if (split == Split::wild) {
      const PoseFrame first = poses.front();
      for (auto& f : poses) {
        f.wrist_translation =
            first.wrist_translation + cfg_.wild_time_scale * (f.wrist_translation - first.wrist_translation);
        f.wrist_rotation =
            first.wrist_rotation + cfg_.wild_time_scale * (f.wrist_rotation - first.wrist_rotation);
        for (int d = 0; d < cfg_.finger_dims; ++d)
          f.finger_joints[static_cast<std::size_t>(d)] =
              first.finger_joints[static_cast<std::size_t>(d)] +
              cfg_.wild_time_scale * (f.finger_joints[static_cast<std::size_t>(d)] -
                                      first.finger_joints[static_cast<std::size_t>(d)]);
      }
    }

    EpisodeSample out;
    out.split = split;
    out.labeled = labeled;
    out.episode_index = global_index;
    out.instruction_ids = {verb, cfg_.verb_count + target};
    const double nuisance_scale =
        split == Split::wild ? cfg_.nuisance_scale_wild : cfg_.nuisance_scale_lab;
    out.observations.resize(static_cast<std::size_t>(frames));
    out.proprio.resize(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      out.observations[static_cast<std::size_t>(t)] =
          observe(poses[static_cast<std::size_t>(t)], nuisance_scale, noise);
      out.proprio[static_cast<std::size_t>(t)] = proprio_of(poses[static_cast<std::size_t>(t)]);
    }
    if (labeled) out.poses = std::move(poses);
    return out;
  }

  // Chunk boundary observation pair (v_t, v_{t+delta}); delta is the chunk
  // span, clamped to the final frame. chunk_index is 0-based.
  static std::pair<std::vector<double>, std::vector<double>> boundary_frames(
      const EpisodeSample& ep, int chunk_index, int chunk_len) {
    const int n_chunks = ep.frames() / chunk_len;
    check(chunk_index >= 0 && chunk_index < n_chunks, "boundary_frames: chunk index out of range");
    const int first = chunk_index * chunk_len;
    const int second = std::min(first + chunk_len, ep.frames() - 1);
    return {ep.observations[static_cast<std::size_t>(first)],
            ep.observations[static_cast<std::size_t>(second)]};
  }

  // Coarse discrete ids standing in for the backbone's own visual tokens:
  // slices of the embedding averaged into a small bucket alphabet.
  static constexpr int kVisualPositions = 8;
  static constexpr int kVisualBuckets = 8;

  std::vector<int> visual_token_ids(const std::vector<double>& observation) const {
    std::vector<int> ids(kVisualPositions);
    const int slice = cfg_.obs_embed_dim / kVisualPositions;
    for (int p = 0; p < kVisualPositions; ++p) {
      double mean = 0.0;
      for (int d = 0; d < slice; ++d) mean += observation[static_cast<std::size_t>(p * slice + d)];
      mean /= slice;
      int bucket = static_cast<int>((mean + 1.0) * 0.5 * kVisualBuckets);
      bucket = std::min(std::max(bucket, 0), kVisualBuckets - 1);
      ids[static_cast<std::size_t>(p)] = p * kVisualBuckets + bucket;
    }
    return ids;
  }

  int visual_vocab() const { return kVisualPositions * kVisualBuckets; }
  int instruction_vocab() const { return cfg_.verb_count + cfg_.target_count; }

  // Ground-truth robot action chunk for post-training: a fixed tanh map of
  // future pose samples and the proprio state at the chunk start.
  std::vector<double> robot_action_chunk(const EpisodeSample& ep, int chunk_index) const {
    check(ep.labeled, "robot_action_chunk: needs a labeled episode");
    const int first = chunk_index * cfg_.chunk_len;
    check(first + cfg_.chunk_len <= ep.frames(), "robot_action_chunk: chunk out of range");
    const auto& q = ep.proprio[static_cast<std::size_t>(first)];
    std::vector<double> actions(static_cast<std::size_t>(cfg_.action_horizon) * cfg_.action_dim);
    const int pd = cfg_.pose_dims();
    for (int j = 0; j < cfg_.action_horizon; ++j) {
      int off = ((j + 1) * cfg_.chunk_len) / cfg_.action_horizon - 1;
      off = std::min(std::max(off, 0), cfg_.chunk_len - 1);
      const int frame = first + off;
      std::vector<double> in(static_cast<std::size_t>(pd) + q.size());
      flatten_pose(ep.poses[static_cast<std::size_t>(frame)], in.data());
      std::copy(q.begin(), q.end(), in.begin() + pd);
      for (int a = 0; a < cfg_.action_dim; ++a) {
        double acc = 0.0;
        for (std::size_t d = 0; d < in.size(); ++d)
          acc += w_action_[static_cast<std::size_t>(a) * in.size() + d] * in[d];
        actions[static_cast<std::size_t>(j) * cfg_.action_dim + a] = std::tanh(acc);
      }
    }
    return actions;
  }

 private:
  static double min_jerk(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }

  static double grasp_phase(double u) {
    const double v = std::min(std::max((u - 0.55) / 0.35, 0.0), 1.0);
    return min_jerk(v);
  }

  void flatten_pose(const PoseFrame& f, double* out) const {
    out[0] = f.wrist_translation[0];
    out[1] = f.wrist_translation[1];
    out[2] = f.wrist_translation[2];
    out[3] = f.wrist_rotation[0];
    out[4] = f.wrist_rotation[1];
    out[5] = f.wrist_rotation[2];
    for (int d = 0; d < cfg_.finger_dims; ++d) out[6 + d] = f.finger_joints[static_cast<std::size_t>(d)];
  }

  std::vector<double> observe(const PoseFrame& pose, double nuisance_scale, Rng& noise) const {
    const int pd = cfg_.pose_dims();
    std::vector<double> x(static_cast<std::size_t>(pd));
    flatten_pose(pose, x.data());
    std::vector<double> v(static_cast<std::size_t>(cfg_.obs_dim()));
    for (int e = 0; e < cfg_.obs_embed_dim; ++e) {
      double acc = b_embed_[static_cast<std::size_t>(e)];
      for (int d = 0; d < pd; ++d) acc += w_embed_[static_cast<std::size_t>(e) * pd + d] * x[static_cast<std::size_t>(d)];
      v[static_cast<std::size_t>(e)] = std::tanh(acc) + cfg_.obs_noise * noise.normal();
    }
    for (int n = 0; n < cfg_.nuisance_dim; ++n)
      v[static_cast<std::size_t>(cfg_.obs_embed_dim + n)] = nuisance_scale * noise.normal();
    return v;
  }

  std::vector<double> proprio_of(const PoseFrame& pose) const {
    const int pd = cfg_.pose_dims();
    std::vector<double> x(static_cast<std::size_t>(pd));
    flatten_pose(pose, x.data());
    std::vector<double> q(static_cast<std::size_t>(cfg_.proprio_dim));
    for (int a = 0; a < cfg_.proprio_dim; ++a) {
      double acc = 0.0;
      for (int d = 0; d < pd; ++d) acc += w_proprio_[static_cast<std::size_t>(a) * pd + d] * x[static_cast<std::size_t>(d)];
      q[static_cast<std::size_t>(a)] = std::tanh(acc);
    }
    return q;
  }

  WorldConfig cfg_;
  std::vector<double> w_embed_, b_embed_;
  std::vector<double> w_proprio_;
  std::vector<double> w_action_;
  std::vector<Vec3> targets_;
};

// ---- episode record stream ----
// Layout per episode: u64 index, u8 split, u8 labeled, i32 frames,
// instruction ids, observations (frame-major), proprio (frame-major),
// poses (only when labeled; 6 + finger_dims doubles per frame).

inline void save_episodes(std::ostream& os, const std::vector<EpisodeSample>& eps, int finger_dims) {
  io::put_u64(os, eps.size());
  for (const auto& e : eps) {
    io::put_u64(os, e.episode_index);
    io::put_u32(os, e.split == Split::lab ? 0u : 1u);
    io::put_u32(os, e.labeled ? 1u : 0u);
    io::put_i32(os, e.frames());
    io::put_int_vector(os, e.instruction_ids);
    io::put_i32(os, e.frames() > 0 ? static_cast<int>(e.observations[0].size()) : 0);
    for (const auto& o : e.observations)
      for (double v : o) io::put_f64(os, v);
    io::put_i32(os, e.frames() > 0 ? static_cast<int>(e.proprio[0].size()) : 0);
    for (const auto& q : e.proprio)
      for (double v : q) io::put_f64(os, v);
    if (e.labeled) {
      for (const auto& p : e.poses) {
        for (double v : p.wrist_translation) io::put_f64(os, v);
        for (double v : p.wrist_rotation) io::put_f64(os, v);
        for (int d = 0; d < finger_dims; ++d) io::put_f64(os, p.finger_joints[static_cast<std::size_t>(d)]);
      }
    }
  }
}

inline std::vector<EpisodeSample> load_episodes(std::istream& is, int finger_dims) {
  const std::uint64_t n = io::get_u64(is);
  std::vector<EpisodeSample> eps(static_cast<std::size_t>(n));
  for (auto& e : eps) {
    e.episode_index = io::get_u64(is);
    e.split = io::get_u32(is) == 0u ? Split::lab : Split::wild;
    e.labeled = io::get_u32(is) == 1u;
    const int frames = io::get_i32(is);
    e.instruction_ids = io::get_int_vector(is);
    const int obs_dim = io::get_i32(is);
    e.observations.assign(static_cast<std::size_t>(frames), std::vector<double>(static_cast<std::size_t>(obs_dim)));
    for (auto& o : e.observations)
      for (auto& v : o) v = io::get_f64(is);
    const int q_dim = io::get_i32(is);
    e.proprio.assign(static_cast<std::size_t>(frames), std::vector<double>(static_cast<std::size_t>(q_dim)));
    for (auto& q : e.proprio)
      for (auto& v : q) v = io::get_f64(is);
    if (e.labeled) {
      e.poses.resize(static_cast<std::size_t>(frames));
      for (auto& p : e.poses) {
        for (auto& v : p.wrist_translation) v = io::get_f64(is);
        for (auto& v : p.wrist_rotation) v = io::get_f64(is);
        p.finger_joints.resize(static_cast<std::size_t>(finger_dims));
        for (auto& v : p.finger_joints) v = io::get_f64(is);
      }
    }
  }
  return eps;
}

}  // namespace jala
