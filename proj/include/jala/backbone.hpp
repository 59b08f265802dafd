#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "jala/attention.hpp"
#include "jala/stream.hpp"

namespace jala {

struct BackboneConfig {
  int layers = 6;
  int align_layer = 4;  // 1-based block whose post-residual output is h
  int model_dim = 32;
  int heads = 4;
  int max_positions = 256;
  double suffix_mask_rate = 0.05;

  // Same relative depth as a 19-of-28 extraction point.
  static int default_align_layer(int layers) {
    return std::max(1, static_cast<int>(std::lround(0.68 * layers)));
  }

  void validate() const {
    check(layers >= 1 && align_layer >= 1 && align_layer <= layers,
          "backbone config: align_layer out of range");
    check(model_dim % heads == 0, "backbone config: model_dim not divisible by heads");
  }
};

// Target-chunk mask ratios: a 0.1-step grid from 0.05 plus the full-mask case.
inline const std::vector<double>& mask_ratio_grid() {
  static const std::vector<double> grid = {0.05, 0.15, 0.25, 0.35, 0.45, 0.55,
                                           0.65, 0.75, 0.85, 0.95, 1.0};
  return grid;
}

struct MaskPlan {
  bool labeled = true;
  std::optional<int> target_chunk;  // absent on unlabeled plans
  double target_ratio = 1.0;        // the drawn grid value (labeled only)
  std::vector<bool> masked;         // per stream position

  int masked_count() const {
    int n = 0;
    for (bool m : masked) n += m ? 1 : 0;
    return n;
  }
};

// Hybrid masking: one chunk is the prediction target with a grid-sampled mask
// ratio (redrawn if no token lands masked), chunks before it stay intact and
// chunks after it are masked at a fixed low rate. Unlabeled streams are fully
// masked with no distinguished target.
inline MaskPlan sample_hybrid_mask(const TokenStream& stream, bool labeled, Rng& rng,
                                   double suffix_rate = 0.05) {
  const int n_chunks = stream.chunk_count();
  check(n_chunks >= 1, "sample_hybrid_mask: stream has no chunks");
  MaskPlan plan;
  plan.masked.assign(static_cast<std::size_t>(stream.length()), false);
  plan.labeled = labeled;
  if (!labeled) {
    for (int p : stream.all_motion_positions()) plan.masked[static_cast<std::size_t>(p)] = true;
    return plan;
  }
  const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_chunks)));
  plan.target_chunk = target;
  const auto& grid = mask_ratio_grid();
  plan.target_ratio = grid[rng.below(grid.size())];
  const auto target_positions = stream.motion_positions(target);
  for (;;) {
    bool any = false;
    for (int p : target_positions) {
      const bool m = rng.bernoulli(plan.target_ratio);
      plan.masked[static_cast<std::size_t>(p)] = m;
      any = any || m;
    }
    if (any) break;  // a target with zero masked tokens has no loss; redraw
  }
  for (int c = target + 1; c < n_chunks; ++c)
    for (int p : stream.motion_positions(c))
      plan.masked[static_cast<std::size_t>(p)] = rng.bernoulli(suffix_rate);
  return plan;
}

namespace detail_bb {

// Chunk id per extended position: -1 marks the bidirectional prefix
// (instruction, visual and any injected context rows).
inline std::vector<std::vector<bool>> allowed_from_chunk_ids(const std::vector<int>& chunk_of) {
  const int n = static_cast<int>(chunk_of.size());
  std::vector<std::vector<bool>> allowed(static_cast<std::size_t>(n),
                                         std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int ci = chunk_of[static_cast<std::size_t>(i)];
      const int cj = chunk_of[static_cast<std::size_t>(j)];
      allowed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          ci < 0 ? cj < 0 : (cj < 0 || cj <= ci);
    }
  return allowed;
}

inline void validate_stream_tags(const TokenStream& stream) {
  int last_chunk = -1;
  bool seen_chunk = false;
  for (const auto& t : stream.tags) {
    if (t.chunk_index < 0) {
      check(!seen_chunk, "stream tags: prefix position after a chunk");
      continue;
    }
    seen_chunk = true;
    check(t.chunk_index == last_chunk || t.chunk_index == last_chunk + 1,
          "stream tags: chunks must be contiguous and ordered");
    last_chunk = t.chunk_index;
  }
}

}  // namespace detail_bb

// Attention structure over the raw stream: instruction/visual positions
// attend bidirectionally among themselves, motion positions attend to the
// prefix, to all earlier chunks and bidirectionally within their own chunk.
// Nothing attends to a later chunk. The mask plan does not alter structure.
inline std::vector<std::vector<bool>> build_attention_mask(const TokenStream& stream,
                                                           const MaskPlan& plan) {
  (void)plan;
  detail_bb::validate_stream_tags(stream);
  std::vector<int> chunk_of(static_cast<std::size_t>(stream.length()));
  for (int p = 0; p < stream.length(); ++p)
    chunk_of[static_cast<std::size_t>(p)] = stream.tags[static_cast<std::size_t>(p)].chunk_index;
  return detail_bb::allowed_from_chunk_ids(chunk_of);
}

template <class T>
struct ForwardResult {
  Tensor<T> logits;        // [stream length, vocab]
  Tensor<T> h;             // [chunks * tokens_per_chunk, model_dim], chunk-major
  Tensor<T> final_hidden;  // pre-head states over the extended layout
  std::vector<int> h_positions;  // stream position of each h row
};

// Chunk-causal transformer over token streams. Continuous context rows
// (the state-perceiver latents) are injected right after the visual prefix
// and share the prefix attention class; they carry position embeddings but
// produce no logits.
template <class T>
class Backbone {
 public:
  static Backbone init(const BackboneConfig& cfg, const Vocab& vocab, Rng& rng) {
    cfg.validate();
    Backbone b;
    b.cfg_ = cfg;
    b.vocab_ = vocab;
    const int d = cfg.model_dim;
    b.tok_embed_ = b.params_.add("tok_embed", Tensor<T>::randn({vocab.total(), d}, rng, T(0.1)));
    b.pos_embed_ = b.params_.add("pos_embed", Tensor<T>::randn({cfg.max_positions, d}, rng, T(0.1)));
    b.layers_.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      auto& layer = b.layers_[static_cast<std::size_t>(l)];
      const std::string p = "layer" + std::to_string(l);
      layer.ln1 = LayerNormWeights<T>::init(d, b.params_, p + ".ln1");
      layer.attn = AttentionWeights<T>::init(d, rng, b.params_, p + ".attn");
      layer.ln2 = LayerNormWeights<T>::init(d, b.params_, p + ".ln2");
      layer.mlp = MlpWeights<T>::init(d, 4 * d, d, rng, b.params_, p + ".mlp");
    }
    b.ln_final_ = LayerNormWeights<T>::init(d, b.params_, "ln_final");
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    b.w_out_ = b.params_.add("w_out", Tensor<T>::randn({d, vocab.total()}, rng, s));
    b.b_out_ = b.params_.add("b_out", Tensor<T>::zeros({vocab.total()}, true));
    return b;
  }

  const BackboneConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  ForwardResult<T> forward(const TokenStream& stream, const MaskPlan& plan,
                           const Tensor<T>* context_rows = nullptr) const {
    detail_bb::validate_stream_tags(stream);
    check(static_cast<int>(plan.masked.size()) == stream.length(),
          "forward: plan does not match stream");
    const int n = stream.length();
    int prefix_len = 0;
    while (prefix_len < n && stream.tags[static_cast<std::size_t>(prefix_len)].chunk_index < 0)
      ++prefix_len;
    const int k_ctx = context_rows != nullptr ? context_rows->rows() : 0;
    const int n_ext = n + k_ctx;
    check(n_ext <= cfg_.max_positions, "forward: stream exceeds max positions");

    // Masked positions read the [MASK] embedding regardless of their true id.
    std::vector<int> ids(stream.ids);
    for (int p = 0; p < n; ++p)
      if (plan.masked[static_cast<std::size_t>(p)]) ids[static_cast<std::size_t>(p)] = Vocab::kMask;

    std::vector<int> chunk_of(static_cast<std::size_t>(n_ext));
    for (int i = 0; i < n_ext; ++i) {
      if (i < prefix_len + k_ctx)
        chunk_of[static_cast<std::size_t>(i)] = -1;
      else
        chunk_of[static_cast<std::size_t>(i)] =
            stream.tags[static_cast<std::size_t>(i - k_ctx)].chunk_index;
    }
    Tensor<T> bias = attention_bias_from_allowed<T>(detail_bb::allowed_from_chunk_ids(chunk_of));

    std::vector<int> prefix_ids(ids.begin(), ids.begin() + prefix_len);
    std::vector<int> rest_ids(ids.begin() + prefix_len, ids.end());
    std::vector<Tensor<T>> rows;
    rows.push_back(gather_rows(tok_embed_, prefix_ids));
    if (k_ctx > 0) rows.push_back(*context_rows);
    rows.push_back(gather_rows(tok_embed_, rest_ids));
    Tensor<T> x = concat_rows(rows);
    std::vector<int> positions(static_cast<std::size_t>(n_ext));
    for (int i = 0; i < n_ext; ++i) positions[static_cast<std::size_t>(i)] = i;
    x = add(x, gather_rows(pos_embed_, positions));

    Tensor<T> x_align;
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& layer = layers_[static_cast<std::size_t>(l)];
      Tensor<T> normed = layer.ln1.forward(x);
      x = add(x, multihead_attention(layer.attn, normed, normed, cfg_.heads, &bias));
      x = add(x, layer.mlp.forward(layer.ln2.forward(x)));
      if (l + 1 == cfg_.align_layer) x_align = x;
    }

    ForwardResult<T> out;
    out.final_hidden = x;
    Tensor<T> logits_full = linear(ln_final_.forward(x), w_out_, b_out_);
    std::vector<int> stream_rows(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p)
      stream_rows[static_cast<std::size_t>(p)] = p < prefix_len ? p : p + k_ctx;
    out.logits = gather_rows(logits_full, stream_rows);

    std::vector<int> h_rows;
    for (int c = 0; c < stream.chunk_count(); ++c)
      for (int p : stream.motion_positions(c)) {
        h_rows.push_back(p + (p < prefix_len ? 0 : k_ctx));
        out.h_positions.push_back(p);
      }
    out.h = gather_rows(x_align, h_rows);
    return out;
  }

  // Mean negative log-likelihood of the true ids over masked motion
  // positions. Only defined for labeled plans; the hybrid objective's
  // indicator is enforced by the caller skipping this term.
  Tensor<T> mcp_loss(const ForwardResult<T>& fwd, const TokenStream& stream,
                     const MaskPlan& plan) const {
    check(plan.labeled, "mcp_loss: plan is unlabeled");
    std::vector<int> rows;
    std::vector<int> targets;
    for (int p = 0; p < stream.length(); ++p) {
      if (!plan.masked[static_cast<std::size_t>(p)]) continue;
      check(stream.tags[static_cast<std::size_t>(p)].modality == Modality::motion,
            "mcp_loss: masked position without a known id");
      rows.push_back(p);
      targets.push_back(stream.ids[static_cast<std::size_t>(p)]);
    }
    check(!rows.empty(), "mcp_loss: no masked motion positions");
    Tensor<T> logp = log_softmax_rows(gather_rows(fwd.logits, rows));
    return scale(mean_all(pick_cols(logp, targets)), T(-1));
  }

  struct DecodeConfig {
    double step_fraction = 0.05;
    int runs = 5;
  };

  // Iterative masked decoding of the final (fully masked) chunk: each pass
  // commits the highest-confidence still-masked slots to their argmax ids
  // within the slot's part range. Runs are ensembled by per-position majority
  // vote with ties resolved from run 1.
  TokenChunk decode_chunk_iterative(const TokenStream& stream, const Tensor<T>* context_rows,
                                    int wrist_tokens, const DecodeConfig& dc, Rng& rng) const {
    (void)rng;  // decoding is deterministic; the seed is part of the interface
    check(dc.runs >= 1, "decode: need at least one run");
    const int target = stream.chunk_count() - 1;
    check(target >= 0, "decode: stream has no chunks");
    const auto positions = stream.motion_positions(target);
    const int k = static_cast<int>(positions.size());
    for (int p : positions)
      check(stream.ids[static_cast<std::size_t>(p)] == Vocab::kMask,
            "decode: target chunk must be fully masked");
    const int commit_per_pass =
        std::max(1, static_cast<int>(std::ceil(dc.step_fraction * k)));
    const int max_passes = static_cast<int>(std::ceil(1.0 / dc.step_fraction));

    std::vector<std::vector<int>> run_ids(static_cast<std::size_t>(dc.runs));
    for (int run = 0; run < dc.runs; ++run) {
      TokenStream work = stream;
      MaskPlan plan;
      plan.labeled = false;
      plan.masked.assign(static_cast<std::size_t>(stream.length()), false);
      std::vector<bool> committed(static_cast<std::size_t>(k), false);
      std::vector<int> ids(static_cast<std::size_t>(k), 0);
      for (int p : positions) plan.masked[static_cast<std::size_t>(p)] = true;
      int remaining = k;
      for (int pass = 0; pass < max_passes && remaining > 0; ++pass) {
        ForwardResult<T> fwd = forward(work, plan, context_rows);
        // Confidence of every still-masked slot.
        std::vector<std::pair<double, int>> ranked;  // (-prob, slot)
        std::vector<int> argmax_global(static_cast<std::size_t>(k), 0);
        for (int slot = 0; slot < k; ++slot) {
          if (committed[static_cast<std::size_t>(slot)]) continue;
          const int p = positions[static_cast<std::size_t>(slot)];
          const bool is_wrist =
              stream.tags[static_cast<std::size_t>(p)].within_chunk < wrist_tokens;
          const int base = is_wrist ? vocab_.wrist_base() : vocab_.finger_base();
          const auto& row = fwd.logits.values();
          const std::size_t off = static_cast<std::size_t>(p) * vocab_.total();
          // Stable softmax over the full vocabulary.
          T mx = row[off];
          for (int j = 1; j < vocab_.total(); ++j) mx = std::max(mx, row[off + j]);
          double denom = 0.0;
          for (int j = 0; j < vocab_.total(); ++j)
            denom += std::exp(static_cast<double>(row[off + j] - mx));
          int best = base;
          for (int j = base; j < base + vocab_.motion_entries; ++j)
            if (row[off + j] > row[off + best]) best = j;
          const double prob = std::exp(static_cast<double>(row[off + best] - mx)) / denom;
          argmax_global[static_cast<std::size_t>(slot)] = best;
          ranked.push_back({-prob, slot});
        }
        std::sort(ranked.begin(), ranked.end());
        const int commits = std::min<int>(commit_per_pass, static_cast<int>(ranked.size()));
        for (int i = 0; i < commits; ++i) {
          const int slot = ranked[static_cast<std::size_t>(i)].second;
          const int p = positions[static_cast<std::size_t>(slot)];
          committed[static_cast<std::size_t>(slot)] = true;
          ids[static_cast<std::size_t>(slot)] = argmax_global[static_cast<std::size_t>(slot)];
          work.ids[static_cast<std::size_t>(p)] = ids[static_cast<std::size_t>(slot)];
          work.tags[static_cast<std::size_t>(p)].modality = Modality::motion;
          plan.masked[static_cast<std::size_t>(p)] = false;
          --remaining;
        }
      }
      check(remaining == 0, "decode: failed to commit every slot");
      run_ids[static_cast<std::size_t>(run)] = std::move(ids);
    }

    // Majority vote per slot; ties fall back to run 1's id.
    std::vector<int> final_ids(static_cast<std::size_t>(k));
    for (int slot = 0; slot < k; ++slot) {
      std::vector<std::pair<int, int>> counts;  // (id, count)
      for (int run = 0; run < dc.runs; ++run) {
        const int id = run_ids[static_cast<std::size_t>(run)][static_cast<std::size_t>(slot)];
        bool found = false;
        for (auto& [cid, cnt] : counts)
          if (cid == id) {
            ++cnt;
            found = true;
          }
        if (!found) counts.push_back({id, 1});
      }
      int best_count = 0;
      for (const auto& [cid, cnt] : counts) best_count = std::max(best_count, cnt);
      const int run1 = run_ids[0][static_cast<std::size_t>(slot)];
      int chosen = -1;
      for (const auto& [cid, cnt] : counts)
        if (cnt == best_count && cid == run1) chosen = cid;
      if (chosen < 0)
        for (const auto& [cid, cnt] : counts)
          if (cnt == best_count && (chosen < 0 || cid < chosen)) chosen = cid;
      final_ids[static_cast<std::size_t>(slot)] = chosen;
    }

    TokenChunk out;
    const int target_first = positions.front();
    out.hand_side = stream.tags[static_cast<std::size_t>(target_first)].hand_side.value_or(HandSide::right);
    for (int slot = 0; slot < k; ++slot) {
      const int p = positions[static_cast<std::size_t>(slot)];
      const bool is_wrist = stream.tags[static_cast<std::size_t>(p)].within_chunk < wrist_tokens;
      const int local = final_ids[static_cast<std::size_t>(slot)] -
                        (is_wrist ? vocab_.wrist_base() : vocab_.finger_base());
      check(local >= 0 && local < vocab_.motion_entries, "decode: id outside part range");
      if (is_wrist)
        out.wrist_ids.push_back(local);
      else
        out.finger_ids.push_back(local);
    }
    return out;
  }

 private:
  struct Layer {
    LayerNormWeights<T> ln1, ln2;
    AttentionWeights<T> attn;
    MlpWeights<T> mlp;
  };

  BackboneConfig cfg_;
  Vocab vocab_;
  ParamSet<T> params_;
  Tensor<T> tok_embed_, pos_embed_;
  std::vector<Layer> layers_;
  LayerNormWeights<T> ln_final_;
  Tensor<T> w_out_, b_out_;
};

}  // namespace jala
