#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jala/metrics.hpp"
#include "jala/train.hpp"

namespace jala {

struct MetricReport {
  std::string split;
  std::string config_hash;
  std::string checkpoint_id;
  int evaluated = 0;
  int skipped_unlabeled = 0;
  double mpjpe = 0;
  double pa_mpjpe = 0;
  double mwte = 0;
  double mde = 0;
};

template <class T>
using ChunkDecoder = std::function<TokenChunk(const TokenStream&, const Tensor<T>*)>;

template <class T>
ChunkDecoder<T> model_decoder(const PretrainModel<T>& model, double step_fraction, int runs,
                              std::uint64_t seed) {
  return [&model, step_fraction, runs, seed](const TokenStream& stream, const Tensor<T>* ctx) {
    typename Backbone<T>::DecodeConfig dc;
    dc.step_fraction = step_fraction;
    dc.runs = runs;
    Rng rng(seed);
    return model.backbone.decode_chunk_iterative(stream, ctx, model.tokenizer_cfg.wrist_tokens,
                                                 dc, rng);
  };
}

// Motion-generation protocol: sequential masked-chunk inference evaluated at
// its final step. The stream carries the instruction, the initial visual
// context and the ground-truth tokens of every chunk before the last; the
// last chunk is fully masked, decoded iteratively, detokenized and scored
// against ground truth. Unlabeled episodes are skipped and counted.
template <class T>
MetricReport eval_motion_generation(const PretrainModel<T>& model, const World& world,
                                    const MotionTokenizer& tokenizer, const SplitHandle& split,
                                    const ChunkDecoder<T>& decoder, int max_episodes = -1) {
  check(split.count > 0, "eval: empty split");
  MetricReport rep;
  rep.split = split.name;
  const int n = max_episodes > 0 ? std::min(max_episodes, split.count) : split.count;
  double sum_mpjpe = 0, sum_pa = 0, sum_mwte = 0, sum_mde = 0;
  for (int i = 0; i < n; ++i) {
    EpisodeSample ep = world.generate(split, i);
    if (!ep.labeled) {
      ++rep.skipped_unlabeled;
      continue;
    }
    auto gt_chunks = chunk_sequence(ep.poses, model.tokenizer_cfg.chunk_len);
    const int target_chunk = static_cast<int>(gt_chunks.size()) - 1;
    std::vector<StreamChunkInput> inputs;
    for (int c = 0; c < target_chunk; ++c) {
      StreamChunkInput in;
      in.tokens = tokenizer.tokenize(gt_chunks[static_cast<std::size_t>(c)]);
      in.hand_side = gt_chunks[static_cast<std::size_t>(c)].hand_side;
      inputs.push_back(std::move(in));
    }
    StreamChunkInput target;
    target.placeholder = true;
    inputs.push_back(target);
    TokenStream stream = format_stream(model.vocab, ep.instruction_ids,
                                       world.visual_token_ids(ep.observations[0]), inputs, false,
                                       model.tokenizer_cfg.wrist_tokens,
                                       model.tokenizer_cfg.finger_tokens);
    PerceiverView<T> lsp_view = PerceiverView<T>::of(model.lsp, false, false);
    Tensor<T> ctx = lsp_forward(model.perceiver_cfg, lsp_view, ep.observations[0], HandSide::right);
    TokenChunk decoded = decoder(stream, &ctx);
    MotionChunk pred = tokenizer.detokenize(decoded);
    const auto& gt = gt_chunks[static_cast<std::size_t>(target_chunk)].frames;
    sum_mpjpe += mpjpe(pred.frames, gt);
    sum_pa += pa_mpjpe(pred.frames, gt);
    sum_mwte += mwte(pred.frames, gt);
    sum_mde += mde(pred.frames, gt);
    ++rep.evaluated;
  }
  check(rep.evaluated > 0, "eval: no labeled episodes in split " + split.name);
  rep.mpjpe = sum_mpjpe / rep.evaluated;
  rep.pa_mpjpe = sum_pa / rep.evaluated;
  rep.mwte = sum_mwte / rep.evaluated;
  rep.mde = sum_mde / rep.evaluated;
  return rep;
}

inline std::string metric_report_csv_header() {
  return "split,evaluated,skipped_unlabeled,mpjpe,pa_mpjpe,mwte,mde,config_hash,checkpoint_id";
}

inline std::string metric_report_csv_row(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%s,%s", r.split.c_str(),
                r.evaluated, r.skipped_unlabeled, r.mpjpe, r.pa_mpjpe, r.mwte, r.mde,
                r.config_hash.c_str(), r.checkpoint_id.c_str());
  return std::string(buf);
}

// ---- joint 2-component projection of predictive embeddings and latents ----

struct EmbeddingSample {
  std::vector<double> vec;
  char source = 'h';  // 'h' or 'z'
  std::string split;
};

struct ProjectionRow {
  double x = 0, y = 0;
  char source = 'h';
  std::string split;
};

struct ProjectionResult {
  std::vector<ProjectionRow> rows;
  int components = 2;
  bool rank_deficient = false;
  double explained_fraction = 0;  // variance captured by the kept components
  double mean_l1 = 0;             // paired h/z distance, NaN when unpaired
};

// Deterministic linear 2D projection of the pooled sample cloud: principal
// components of the joint covariance, eigenvector signs fixed by their
// largest-magnitude coordinate.
inline ProjectionResult project_embeddings(const std::vector<EmbeddingSample>& samples) {
  int n_h = 0, n_z = 0;
  for (const auto& s : samples) (s.source == 'h' ? n_h : n_z)++;
  check(n_h >= 10 && n_z >= 10, "project_embeddings: need at least 10 samples per source");
  const int d = static_cast<int>(samples[0].vec.size());
  for (const auto& s : samples)
    check(static_cast<int>(s.vec.size()) == d, "project_embeddings: inconsistent dimensions");

  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (const auto& s : samples)
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += s.vec[static_cast<std::size_t>(j)];
  for (auto& m : mean) m /= static_cast<double>(samples.size());

  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& s : samples)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        cov[static_cast<std::size_t>(a) * d + b] +=
            (s.vec[static_cast<std::size_t>(a)] - mean[static_cast<std::size_t>(a)]) *
            (s.vec[static_cast<std::size_t>(b)] - mean[static_cast<std::size_t>(b)]);
  for (auto& c : cov) c /= static_cast<double>(samples.size());

  std::vector<double> evals, evecs;
  symmetric_eigen(cov, d, evals, evecs);
  double total_var = 0;
  for (double e : evals) total_var += std::max(e, 0.0);

  ProjectionResult out;
  out.components = 2;
  const double floor = std::max(total_var, 1e-300) * 1e-12;
  if (d < 2 || evals[1] <= floor) {
    out.components = 1;
    out.rank_deficient = true;
  }
  if (evals[0] <= floor) {
    out.components = 0;
    out.rank_deficient = true;
  }

  // Sign convention: the largest-magnitude coordinate of each component is
  // positive.
  std::vector<double> comp(static_cast<std::size_t>(2) * d, 0.0);
  for (int c = 0; c < out.components; ++c) {
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(evecs[static_cast<std::size_t>(j) * d + c]) >
          std::abs(evecs[static_cast<std::size_t>(arg) * d + c]))
        arg = j;
    const double sign = evecs[static_cast<std::size_t>(arg) * d + c] >= 0 ? 1.0 : -1.0;
    for (int j = 0; j < d; ++j)
      comp[static_cast<std::size_t>(c) * d + j] = sign * evecs[static_cast<std::size_t>(j) * d + c];
  }

  for (const auto& s : samples) {
    ProjectionRow row;
    row.source = s.source;
    row.split = s.split;
    for (int c = 0; c < out.components; ++c) {
      double acc = 0;
      for (int j = 0; j < d; ++j)
        acc += comp[static_cast<std::size_t>(c) * d + j] *
               (s.vec[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)]);
      (c == 0 ? row.x : row.y) = acc;
    }
    out.rows.push_back(row);
  }
  out.explained_fraction =
      total_var > 0 ? (std::max(evals[0], 0.0) + (out.components > 1 ? std::max(evals[1], 0.0) : 0.0)) /
                          total_var
                    : 0.0;

  // Paired overlap distance when h and z samples correspond one to one.
  if (n_h == n_z) {
    std::vector<const EmbeddingSample*> hs, zs;
    for (const auto& s : samples) (s.source == 'h' ? hs : zs).push_back(&s);
    double acc = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < hs.size(); ++i)
      for (int j = 0; j < d; ++j) {
        acc += std::abs(hs[i]->vec[static_cast<std::size_t>(j)] - zs[i]->vec[static_cast<std::size_t>(j)]);
        ++cnt;
      }
    out.mean_l1 = acc / static_cast<double>(cnt);
  } else {
    out.mean_l1 = std::nan("");
  }
  return out;
}

// Collects paired (h, z) samples over a split: one vector per motion-token
// position, computed with the chunk fully masked (the pretraining view).
template <class T>
std::vector<EmbeddingSample> collect_embeddings(const PretrainModel<T>& model, const World& world,
                                                const MotionTokenizer& tokenizer,
                                                const SplitHandle& split, int episodes) {
  std::vector<EmbeddingSample> out;
  const int n = std::min(episodes, split.count);
  const std::string split_name = split.split == Split::lab ? "lab" : "wild";
  for (int i = 0; i < n; ++i) {
    EpisodeSample ep = world.generate(split, i);
    PreppedSample s = prep_sample(model, world, tokenizer, std::move(ep));
    MaskPlan plan;
    plan.labeled = false;
    plan.masked.assign(static_cast<std::size_t>(s.stream.length()), false);
    for (int p : s.stream.all_motion_positions()) plan.masked[static_cast<std::size_t>(p)] = true;
    PerceiverView<T> lsp_view = PerceiverView<T>::of(model.lsp, false, false);
    Tensor<T> ctx = lsp_forward(model.perceiver_cfg, lsp_view, s.episode.observations[0],
                                HandSide::right);
    ForwardResult<T> fwd = model.backbone.forward(s.stream, plan, &ctx);
    PerceiverView<T> lap_view = PerceiverView<T>::of(model.lap, false, false);
    const int k = model.tokens_per_chunk();
    for (int c = 0; c < s.chunks; ++c) {
      Tensor<T> z = lap_forward(model.perceiver_cfg, lap_view,
                                s.boundaries[static_cast<std::size_t>(c)].first,
                                s.boundaries[static_cast<std::size_t>(c)].second, HandSide::right);
      for (int r = 0; r < k; ++r) {
        EmbeddingSample hs, zs;
        hs.source = 'h';
        zs.source = 'z';
        hs.split = zs.split = split_name;
        hs.vec.resize(static_cast<std::size_t>(model.backbone_cfg.model_dim));
        zs.vec.resize(static_cast<std::size_t>(model.backbone_cfg.model_dim));
        for (int col = 0; col < model.backbone_cfg.model_dim; ++col) {
          hs.vec[static_cast<std::size_t>(col)] = static_cast<double>(
              fwd.h.values()[static_cast<std::size_t>(c * k + r) * model.backbone_cfg.model_dim + col]);
          zs.vec[static_cast<std::size_t>(col)] = static_cast<double>(
              z.values()[static_cast<std::size_t>(r) * model.backbone_cfg.model_dim + col]);
        }
        out.push_back(std::move(hs));
        out.push_back(std::move(zs));
      }
    }
  }
  return out;
}

}  // namespace jala
