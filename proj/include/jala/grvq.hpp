#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "jala/common.hpp"
#include "jala/rng.hpp"
#include "jala/serialize.hpp"

namespace jala {

enum class MotionPart { wrist, finger };

// Grouped residual vector quantizer. The input vector is split channel-wise
// into `groups`; within each group the residual is quantized through `levels`
// sequential nearest-neighbor lookups, each level holding `entries` codewords.
// Entry 0 of every level is pinned to the zero vector and never trained, so a
// deeper quantizer can never increase the residual norm.
struct Codebook {
  MotionPart part = MotionPart::wrist;
  int groups = 1;
  int levels = 1;
  int entries = 64;
  int code_dim = 16;
  std::vector<double> codewords;  // [group][level][entry][sub_dim]

  int sub_dim() const { return code_dim / groups; }
  int ids_per_vector() const { return groups * levels; }

  double* entry(int g, int l, int e) {
    return codewords.data() +
           ((static_cast<std::size_t>(g) * levels + l) * entries + e) * sub_dim();
  }
  const double* entry(int g, int l, int e) const {
    return codewords.data() +
           ((static_cast<std::size_t>(g) * levels + l) * entries + e) * sub_dim();
  }

  static Codebook init(MotionPart part, int groups, int levels, int entries, int code_dim,
                       Rng& rng, double scale = 0.1) {
    check(code_dim % groups == 0, "Codebook: code_dim must be divisible by groups");
    check(entries >= 1 && levels >= 1 && groups >= 1, "Codebook: bad geometry");
    Codebook cb;
    cb.part = part;
    cb.groups = groups;
    cb.levels = levels;
    cb.entries = entries;
    cb.code_dim = code_dim;
    cb.codewords.assign(static_cast<std::size_t>(groups) * levels * entries * cb.sub_dim(), 0.0);
    for (int g = 0; g < groups; ++g)
      for (int l = 0; l < levels; ++l)
        for (int e = 1; e < entries; ++e) {  // entry 0 stays zero
          double* w = cb.entry(g, l, e);
          for (int d = 0; d < cb.sub_dim(); ++d) w[d] = rng.normal() * scale;
        }
    return cb;
  }

  bool finite() const {
    for (double v : codewords)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void save(std::ostream& os) const {
    io::put_u32(os, part == MotionPart::wrist ? 0u : 1u);
    io::put_i32(os, groups);
    io::put_i32(os, levels);
    io::put_i32(os, entries);
    io::put_i32(os, code_dim);
    io::put_vector(os, codewords);
  }

  static Codebook load(std::istream& is) {
    Codebook cb;
    cb.part = io::get_u32(is) == 0u ? MotionPart::wrist : MotionPart::finger;
    cb.groups = io::get_i32(is);
    cb.levels = io::get_i32(is);
    cb.entries = io::get_i32(is);
    cb.code_dim = io::get_i32(is);
    cb.codewords = io::get_vector<double>(is);
    check(static_cast<int>(cb.codewords.size()) ==
              cb.groups * cb.levels * cb.entries * cb.sub_dim(),
          "Codebook::load: corrupt payload");
    return cb;
  }
};

struct QuantizeResult {
  std::vector<int> indices;       // groups*levels ids, group-major then level
  std::vector<double> quantized;  // code_dim reconstruction
  double residual_norm = 0.0;
};

// Nearest codeword at one level; ties break to the lowest index.
inline int nearest_entry(const Codebook& cb, int g, int l, const double* residual) {
  int best = 0;
  double best_d2 = 0.0;
  for (int e = 0; e < cb.entries; ++e) {
    const double* w = cb.entry(g, l, e);
    double d2 = 0.0;
    for (int d = 0; d < cb.sub_dim(); ++d) {
      const double diff = residual[d] - w[d];
      d2 += diff * diff;
    }
    if (e == 0 || d2 < best_d2) {
      best = e;
      best_d2 = d2;
    }
  }
  return best;
}

inline QuantizeResult grvq_quantize(const std::vector<double>& vec, const Codebook& cb) {
  check(static_cast<int>(vec.size()) == cb.code_dim, "grvq_quantize: dimension mismatch");
  QuantizeResult out;
  out.indices.reserve(static_cast<std::size_t>(cb.ids_per_vector()));
  out.quantized.assign(vec.size(), 0.0);
  const int sd = cb.sub_dim();
  double total = 0.0;
  for (int g = 0; g < cb.groups; ++g) {
    std::vector<double> residual(vec.begin() + static_cast<std::ptrdiff_t>(g) * sd,
                                 vec.begin() + static_cast<std::ptrdiff_t>(g + 1) * sd);
    for (int l = 0; l < cb.levels; ++l) {
      const int e = nearest_entry(cb, g, l, residual.data());
      out.indices.push_back(e);
      const double* w = cb.entry(g, l, e);
      for (int d = 0; d < sd; ++d) {
        residual[d] -= w[d];
        out.quantized[static_cast<std::size_t>(g) * sd + d] += w[d];
      }
    }
    for (int d = 0; d < sd; ++d) total += residual[d] * residual[d];
  }
  out.residual_norm = std::sqrt(total);
  return out;
}

// EMA codebook learning state: decayed counts and vector sums per codeword.
// Entry 0 is excluded from updates so the reserved zero codeword survives.
struct CodebookTrainer {
  double decay = 0.99;
  double eps = 1e-5;
  std::vector<double> ema_count;  // per (g, l, e)
  std::vector<double> ema_sum;    // per (g, l, e, d)
  std::vector<std::int64_t> epoch_hits;  // assignments this epoch, for utilization

  void init(const Codebook& cb) {
    ema_count.assign(static_cast<std::size_t>(cb.groups) * cb.levels * cb.entries, 0.0);
    ema_sum.assign(cb.codewords.size(), 0.0);
    epoch_hits.assign(ema_count.size(), 0);
  }

  std::size_t slot(const Codebook& cb, int g, int l, int e) const {
    return (static_cast<std::size_t>(g) * cb.levels + l) * cb.entries + e;
  }

  // Accumulate one batch of assignments: residual vectors paired with the
  // chosen entry at each (group, level).
  void observe(const Codebook& cb, int g, int l, int e, const double* target_vec) {
    const std::size_t s = slot(cb, g, l, e);
    epoch_hits[s] += 1;
    ema_count[s] = decay * ema_count[s] + (1.0 - decay);
    double* sum = ema_sum.data() + s * static_cast<std::size_t>(cb.sub_dim());
    for (int d = 0; d < cb.sub_dim(); ++d)
      sum[d] = decay * sum[d] + (1.0 - decay) * target_vec[d];
  }

  // Decay statistics for codewords not hit in this batch pass.
  void decay_unseen(const Codebook& cb, const std::vector<bool>& seen) {
    for (std::size_t s = 0; s < ema_count.size(); ++s) {
      if (seen[s]) continue;
      ema_count[s] *= decay;
      double* sum = ema_sum.data() + s * static_cast<std::size_t>(cb.sub_dim());
      for (int d = 0; d < cb.sub_dim(); ++d) sum[d] *= decay;
    }
  }

  void apply(Codebook& cb) const {
    for (int g = 0; g < cb.groups; ++g)
      for (int l = 0; l < cb.levels; ++l)
        for (int e = 1; e < cb.entries; ++e) {  // keep entry 0 at zero
          const std::size_t s = slot(cb, g, l, e);
          if (ema_count[s] < eps) continue;
          const double* sum = ema_sum.data() + s * static_cast<std::size_t>(cb.sub_dim());
          double* w = cb.entry(g, l, e);
          for (int d = 0; d < cb.sub_dim(); ++d) w[d] = sum[d] / (ema_count[s] + eps);
        }
  }

  void reset_epoch_hits() { epoch_hits.assign(epoch_hits.size(), 0); }
};

// Fraction of non-reserved entries used at least once, per level.
struct UtilizationReport {
  std::vector<double> per_level;          // groups*levels order
  std::vector<std::int64_t> level_total;  // assignments per level
  std::int64_t total_assignments = 0;
};

inline UtilizationReport utilization(const Codebook& cb, const std::vector<std::int64_t>& hits) {
  UtilizationReport rep;
  for (int g = 0; g < cb.groups; ++g)
    for (int l = 0; l < cb.levels; ++l) {
      int used = 0;
      std::int64_t total = 0;
      for (int e = 0; e < cb.entries; ++e) {
        const std::int64_t h = hits[(static_cast<std::size_t>(g) * cb.levels + l) * cb.entries + e];
        if (h > 0) ++used;
        total += h;
      }
      rep.per_level.push_back(static_cast<double>(used) / cb.entries);
      rep.level_total.push_back(total);
      rep.total_assignments += total;
    }
  return rep;
}

}  // namespace jala
