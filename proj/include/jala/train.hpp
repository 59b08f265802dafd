#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "jala/backbone.hpp"
#include "jala/flow.hpp"
#include "jala/metrics.hpp"
#include "jala/optim.hpp"
#include "jala/perceiver.hpp"
#include "jala/tokenizer.hpp"
#include "jala/world.hpp"

namespace jala {

struct TrainConfig {
  double base_lr = 3e-5;   // pretraining
  double post_lr = 1e-4;   // post-training
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double warmup_frac = 0.05;
  double clip_norm = 1.0;
  double lambda_align = 0.5;
  double ema_alpha = 0.999;
  int batch_size = 8;
  int labeled_ratio = 2;  // labeled : unlabeled samples per pretraining batch
  int unlabeled_ratio = 1;
  std::int64_t total_steps = 2000;
  double wild_fraction = 1.0;  // fraction of the wild training pool in use
  bool decoupled_ema = true;   // false: one shared perceiver, no routing, no EMA
  bool apply_ema = true;       // false keeps routing but skips the EMA update
  std::uint64_t seed = 1;

  void validate() const {
    check(warmup_frac > 0 && warmup_frac < 1, "train config: warmup fraction outside (0,1)");
    check(base_lr > 0 && post_lr > 0 && clip_norm > 0, "train config: rates must be positive");
    check(batch_size >= 1 && total_steps >= 1, "train config: bad sizes");
    check(ema_alpha >= 0 && ema_alpha < 1, "train config: ema alpha outside [0,1)");
    check(wild_fraction >= 0 && wild_fraction <= 1, "train config: bad wild fraction");
  }
};

struct StepMetrics {
  std::int64_t step = 0;
  double lr = 0;
  double total = 0;
  double mcp = 0;  // labeled-subset mean; NaN when the batch had no labels
  bool has_mcp = false;
  double align = 0;
  double grad_norm = 0;  // pre-clip global norm
  double z_std = 0;
  double wall_ms = 0;
};

// One prepared training sample: the formatted stream plus the raw inputs the
// perceivers need. Tokenization happens once, up front; the tokenizer is
// frozen during backbone training.
struct PreppedSample {
  EpisodeSample episode;
  TokenStream stream;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> boundaries;  // per chunk
  int chunks = 0;
  bool labeled = false;
};

template <class T>
struct PretrainModel {
  Vocab vocab;
  BackboneConfig backbone_cfg;
  PerceiverConfig perceiver_cfg;
  TokenizerConfig tokenizer_cfg;
  Backbone<T> backbone;
  PerceiverParams<T> lap, lsp;

  int tokens_per_chunk() const {
    return tokenizer_cfg.wrist_tokens + tokenizer_cfg.finger_tokens;
  }
};

template <class T>
PretrainModel<T> init_pretrain_model(const World& world, const MotionTokenizer& tokenizer,
                                     BackboneConfig bb_cfg, PerceiverConfig perc_cfg,
                                     std::uint64_t seed) {
  PretrainModel<T> m;
  m.tokenizer_cfg = tokenizer.config();
  m.vocab.instruction_vocab = world.instruction_vocab();
  m.vocab.visual_vocab = world.visual_vocab();
  m.vocab.motion_entries = m.tokenizer_cfg.entries;
  m.backbone_cfg = bb_cfg;
  m.perceiver_cfg = perc_cfg;
  check(perc_cfg.dim == bb_cfg.model_dim,
        "init model: perceiver width must match the backbone width");
  check(perc_cfg.kv_dim == world.config().obs_dim(),
        "init model: perceiver kv width must match the observation width");
  check(perc_cfg.latents == m.tokens_per_chunk(),
        "init model: one latent per motion token of a chunk");
  Rng rng(seed);
  Rng bb_rng = rng.substream("backbone");
  Rng lap_rng = rng.substream("perceiver");
  m.backbone = Backbone<T>::init(bb_cfg, m.vocab, bb_rng);
  m.lap = PerceiverParams<T>::init(perc_cfg, lap_rng);
  m.lsp = m.lap.clone();  // identical starting point for both roles
  return m;
}

template <class T>
PreppedSample prep_sample(const PretrainModel<T>& model, const World& world,
                          const MotionTokenizer& tokenizer, EpisodeSample ep) {
  PreppedSample s;
  s.labeled = ep.labeled;
  s.chunks = ep.frames() / model.tokenizer_cfg.chunk_len;
  check(s.chunks >= 1, "prep_sample: episode shorter than one chunk");
  std::vector<StreamChunkInput> inputs;
  if (ep.labeled) {
    auto chunks = chunk_sequence(ep.poses, model.tokenizer_cfg.chunk_len);
    for (auto& c : chunks) {
      StreamChunkInput in;
      in.tokens = tokenizer.tokenize(c);
      in.hand_side = c.hand_side;
      inputs.push_back(std::move(in));
    }
  } else {
    for (int c = 0; c < s.chunks; ++c) {
      StreamChunkInput in;
      in.placeholder = true;
      inputs.push_back(in);
    }
  }
  s.stream = format_stream(model.vocab, ep.instruction_ids,
                           world.visual_token_ids(ep.observations[0]), inputs, false,
                           model.tokenizer_cfg.wrist_tokens, model.tokenizer_cfg.finger_tokens);
  for (int c = 0; c < s.chunks; ++c)
    s.boundaries.push_back(World::boundary_frames(ep, c, model.tokenizer_cfg.chunk_len));
  s.episode = std::move(ep);
  return s;
}

// Pretraining loop: hybrid objective over mixed labeled/unlabeled batches,
// gradient routing through detached views, decoupled EMA after each step.
template <class T>
class PretrainTrainer {
 public:
  PretrainTrainer(const World& world, const MotionTokenizer& tokenizer, BackboneConfig bb_cfg,
                  PerceiverConfig perc_cfg, TrainConfig cfg)
      : world_(world),
        tokenizer_(tokenizer),
        cfg_(cfg),
        data_rng_(Rng(cfg.seed).substream("data")),
        mask_rng_(Rng(cfg.seed).substream("mask")),
        noise_rng_(Rng(cfg.seed).substream("noise")) {
    cfg_.validate();
    model_ = std::make_unique<PretrainModel<T>>(
        init_pretrain_model<T>(world, tokenizer, bb_cfg, perc_cfg, cfg.seed));
    if (!cfg_.decoupled_ema) {
      // Directly coupled baseline: one shared perceiver trained by every
      // gradient, no EMA and no stop-gradient between the two roles.
      model_->lsp = model_->lap;
    }
    build_pools();
    build_trainable();
    opt_ = AdamW<T>(cfg_.beta1, cfg_.beta2, cfg_.weight_decay);
    opt_.attach(trainable_);
  }

  PretrainModel<T>& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t step_index() const { return step_; }
  ParamSet<T>& trainable() { return trainable_; }

  std::size_t labeled_pool_size() const { return labeled_pool_.size(); }
  std::size_t unlabeled_pool_size() const { return unlabeled_pool_.size(); }

  StepMetrics step() {
    const auto t0 = std::chrono::steady_clock::now();
    check(!labeled_pool_.empty() || !unlabeled_pool_.empty(), "pretrain: empty batch pools");
    int n_lab = cfg_.batch_size * cfg_.labeled_ratio /
                std::max(1, cfg_.labeled_ratio + cfg_.unlabeled_ratio);
    if (labeled_pool_.empty()) n_lab = 0;
    if (unlabeled_pool_.empty()) n_lab = cfg_.batch_size;
    const int n_unlab = cfg_.batch_size - n_lab;

    trainable_.zero_grads();
    std::vector<Tensor<T>> totals;
    std::vector<Tensor<T>> zs;
    double mcp_sum = 0.0;
    int mcp_count = 0;
    double align_sum = 0.0;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const bool labeled = b < n_lab;
      const auto& pool = labeled ? labeled_pool_ : unlabeled_pool_;
      const PreppedSample& s = pool[data_rng_.below(pool.size())];
      totals.push_back(sample_loss(s, &zs, &mcp_sum, &mcp_count, &align_sum));
    }
    Tensor<T> batch_loss = scale(sum_of(totals), static_cast<T>(1.0 / cfg_.batch_size));
    batch_loss.backward();
    const double grad_norm = clip_global_norm(trainable_, cfg_.clip_norm);
    // 1-based schedule index: the very first step already warms up.
    const double lr = lr_schedule(step_ + 1, cfg_.total_steps, cfg_.base_lr, cfg_.warmup_frac);
    opt_.step(trainable_, lr);
    if (cfg_.decoupled_ema && cfg_.apply_ema)
      decoupled_ema_update(model_->lap, model_->lsp, cfg_.ema_alpha);
    ++step_;

    StepMetrics m;
    m.step = step_;
    m.lr = lr;
    m.total = static_cast<double>(batch_loss.item());
    m.has_mcp = mcp_count > 0;
    m.mcp = m.has_mcp ? mcp_sum / mcp_count : std::nan("");
    m.align = align_sum / cfg_.batch_size;
    m.grad_norm = grad_norm;
    m.z_std = latent_batch_stddev(zs);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return m;
  }

  std::vector<StepMetrics> run(std::int64_t steps) {
    std::vector<StepMetrics> all;
    all.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t i = 0; i < steps; ++i) all.push_back(step());
    return all;
  }

  // ---- checkpointing ----
  static constexpr const char kMagic[10] = "JALA-CKPT";
  static constexpr std::uint32_t kVersion = 1;

  void save_checkpoint(const std::string& path, const std::string& config_hash) const {
    auto os = io::open_out(path);
    os.write(kMagic, 9);
    io::put_u32(os, kVersion);
    io::put_string(os, config_hash);
    io::put_string(os, "pretrain");
    io::put_u64(os, static_cast<std::uint64_t>(step_));
    model_->backbone.params().save(os);
    model_->lap.backbone.save(os);
    model_->lap.queries.save(os);
    model_->lsp.backbone.save(os);
    model_->lsp.queries.save(os);
    opt_.save(os);
    data_rng_.save(os);
    mask_rng_.save(os);
    noise_rng_.save(os);
  }

  void load_checkpoint(const std::string& path, const std::string& expected_hash) {
    auto is = io::open_in(path);
    char magic[9];
    is.read(magic, 9);
    check(is.good() && std::string(magic, 9) == kMagic, "checkpoint: bad magic");
    const std::uint32_t version = io::get_u32(is);
    check(version == kVersion, "checkpoint: unsupported format version " + std::to_string(version));
    const std::string hash = io::get_string(is);
    check(hash == expected_hash,
          "checkpoint: config hash mismatch (got " + hash + ", expected " + expected_hash + ")");
    const std::string phase = io::get_string(is);
    check(phase == "pretrain", "checkpoint: expected a pretraining checkpoint, found " + phase);
    step_ = static_cast<std::int64_t>(io::get_u64(is));
    model_->backbone.params().load_into(is);
    model_->lap.backbone.load_into(is);
    model_->lap.queries.load_into(is);
    model_->lsp.backbone.load_into(is);
    model_->lsp.queries.load_into(is);
    opt_.load(is);
    data_rng_ = Rng::load(is);
    mask_rng_ = Rng::load(is);
    noise_rng_ = Rng::load(is);
  }

 private:
  static Tensor<T> sum_of(const std::vector<Tensor<T>>& xs) {
    Tensor<T> acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
  }

  Tensor<T> sample_loss(const PreppedSample& s, std::vector<Tensor<T>>* zs, double* mcp_sum,
                        int* mcp_count, double* align_sum) {
    MaskPlan plan = sample_hybrid_mask(s.stream, s.labeled, mask_rng_,
                                       model_->backbone_cfg.suffix_mask_rate);
    // State context: trunk live (it learns through the stream), queries held.
    PerceiverView<T> lsp_view = PerceiverView<T>::of(model_->lsp, true, !cfg_.decoupled_ema);
    const auto& v0 = s.episode.observations[0];
    Tensor<T> context = lsp_forward(model_->perceiver_cfg, lsp_view, v0, HandSide::right);
    ForwardResult<T> fwd = model_->backbone.forward(s.stream, plan, &context);

    // Action latents: queries live, trunk held (it follows by EMA).
    PerceiverView<T> lap_view = PerceiverView<T>::of(model_->lap, !cfg_.decoupled_ema, true);
    const int k = model_->tokens_per_chunk();
    std::vector<Tensor<T>> chunk_aligns;
    for (int c = 0; c < s.chunks; ++c) {
      Tensor<T> z = lap_forward(model_->perceiver_cfg, lap_view, s.boundaries[static_cast<std::size_t>(c)].first,
                                s.boundaries[static_cast<std::size_t>(c)].second, HandSide::right);
      std::vector<int> rows(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) rows[static_cast<std::size_t>(i)] = c * k + i;
      Tensor<T> h_chunk = gather_rows(fwd.h, rows);
      chunk_aligns.push_back(align_loss(h_chunk, z));
      zs->push_back(Tensor<T>::from_values(z.shape(), z.values()));
    }
    Tensor<T> align = scale(sum_of(chunk_aligns), static_cast<T>(1.0 / s.chunks));
    *align_sum += static_cast<double>(align.item());

    if (s.labeled) {
      Tensor<T> mcp = model_->backbone.mcp_loss(fwd, s.stream, plan);
      *mcp_sum += static_cast<double>(mcp.item());
      ++*mcp_count;
      return add(mcp, scale(align, static_cast<T>(cfg_.lambda_align)));
    }
    return scale(align, static_cast<T>(cfg_.lambda_align));
  }

  void build_pools() {
    auto splits = world_.make_splits();
    for (int i = 0; i < splits.lab_train.count; ++i)
      labeled_pool_.push_back(prep_sample(*model_, world_, tokenizer_,
                                          world_.generate(splits.lab_train, i)));
    const int wild_used = static_cast<int>(cfg_.wild_fraction * splits.wild_train.count);
    for (int i = 0; i < wild_used; ++i) {
      EpisodeSample ep = world_.generate(splits.wild_train, i);
      PreppedSample s = prep_sample(*model_, world_, tokenizer_, std::move(ep));
      if (s.labeled)
        labeled_pool_.push_back(std::move(s));
      else
        unlabeled_pool_.push_back(std::move(s));
    }
  }

  void build_trainable() {
    trainable_.extend("backbone.", model_->backbone.params());
    trainable_.extend("lsp.b.", model_->lsp.backbone);
    if (cfg_.decoupled_ema) {
      trainable_.extend("lap.q.", model_->lap.queries);
    } else {
      trainable_.extend("shared.q.", model_->lap.queries);
    }
  }

  World world_;
  MotionTokenizer tokenizer_;
  TrainConfig cfg_;
  std::unique_ptr<PretrainModel<T>> model_;
  std::vector<PreppedSample> labeled_pool_, unlabeled_pool_;
  ParamSet<T> trainable_;
  AdamW<T> opt_;
  Rng data_rng_, mask_rng_, noise_rng_;
  std::int64_t step_ = 0;
};

struct CheckpointInfo {
  std::string config_hash;
  std::string phase;
  std::int64_t step = 0;
};

// Loads only the model parameter trees out of a checkpoint, ignoring
// optimizer and rng state. Used by evaluation and by post-training warm
// starts.
template <class T>
CheckpointInfo load_model_from_checkpoint(const std::string& path,
                                          const std::string& expected_hash,
                                          PretrainModel<T>& model) {
  auto is = io::open_in(path);
  char magic[9];
  is.read(magic, 9);
  check(is.good() && std::string(magic, 9) == PretrainTrainer<T>::kMagic, "checkpoint: bad magic");
  const std::uint32_t version = io::get_u32(is);
  check(version == PretrainTrainer<T>::kVersion,
        "checkpoint: unsupported format version " + std::to_string(version));
  CheckpointInfo info;
  info.config_hash = io::get_string(is);
  check(info.config_hash == expected_hash,
        "checkpoint: config hash mismatch (got " + info.config_hash + ", expected " +
            expected_hash + ")");
  info.phase = io::get_string(is);
  info.step = static_cast<std::int64_t>(io::get_u64(is));
  model.backbone.params().load_into(is);
  model.lap.backbone.load_into(is);
  model.lap.queries.load_into(is);
  model.lsp.backbone.load_into(is);
  model.lsp.queries.load_into(is);
  return info;
}

// Post-training: the flow head learns robot actions from the predictive
// embeddings of a masked chunk. The backbone stays trainable; tokenizer and
// both perceivers are frozen, and there is no EMA.
template <class T>
class PosttrainTrainer {
 public:
  PosttrainTrainer(const World& world, const MotionTokenizer& tokenizer,
                   std::unique_ptr<PretrainModel<T>> base, FlowConfig flow_cfg, TrainConfig cfg)
      : world_(world),
        tokenizer_(tokenizer),
        model_(std::move(base)),
        cfg_(cfg),
        data_rng_(Rng(cfg.seed).substream("post_data")),
        noise_rng_(Rng(cfg.seed).substream("post_noise")) {
    cfg_.validate();
    flow_cfg.validate();
    check(flow_cfg.h_dim == model_->backbone_cfg.model_dim,
          "posttrain: flow conditioning width must match the backbone");
    check(flow_cfg.proprio_dim == world.config().proprio_dim &&
              flow_cfg.action_dim == world.config().action_dim &&
              flow_cfg.horizon == world.config().action_horizon,
          "posttrain: flow geometry must match the world");
    Rng fr = Rng(cfg.seed).substream("flow_init");
    flow_ = std::make_unique<FlowHead<T>>(FlowHead<T>::init(flow_cfg, fr));
    auto splits = world_.make_splits();
    for (int i = 0; i < splits.lab_train.count; ++i)
      pool_.push_back(prep_sample(*model_, world_, tokenizer_, world_.generate(splits.lab_train, i)));
    trainable_.extend("backbone.", model_->backbone.params());
    trainable_.extend("flow.", flow_->params());
    opt_ = AdamW<T>(cfg_.beta1, cfg_.beta2, cfg_.weight_decay);
    opt_.attach(trainable_);
  }

  PretrainModel<T>& model() { return *model_; }
  FlowHead<T>& flow() { return *flow_; }
  ParamSet<T>& trainable() { return trainable_; }
  std::int64_t step_index() const { return step_; }

  StepMetrics step() {
    const auto t0 = std::chrono::steady_clock::now();
    trainable_.zero_grads();
    std::vector<Tensor<T>> losses;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const PreppedSample& s = pool_[data_rng_.below(pool_.size())];
      losses.push_back(sample_loss(s));
    }
    Tensor<T> batch_loss = scale(sum_losses(losses), static_cast<T>(1.0 / cfg_.batch_size));
    batch_loss.backward();
    const double grad_norm = clip_global_norm(trainable_, cfg_.clip_norm);
    const double lr = lr_schedule(step_ + 1, cfg_.total_steps, cfg_.post_lr, cfg_.warmup_frac);
    opt_.step(trainable_, lr);
    ++step_;
    StepMetrics m;
    m.step = step_;
    m.lr = lr;
    m.total = static_cast<double>(batch_loss.item());
    m.mcp = std::nan("");
    m.align = std::nan("");
    m.z_std = std::nan("");
    m.grad_norm = grad_norm;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return m;
  }

  std::vector<StepMetrics> run(std::int64_t steps) {
    std::vector<StepMetrics> all;
    for (std::int64_t i = 0; i < steps; ++i) all.push_back(step());
    return all;
  }

  // Extract h for one (episode, chunk) with the acted-on chunk fully masked,
  // context chunks intact. Frozen perceiver provides the stream context.
  Tensor<T> embeddings_for(const PreppedSample& s, int chunk) const {
    check(s.labeled, "posttrain: needs labeled episodes with actions");
    TokenStream stream = truncated_stream(s, chunk);
    MaskPlan plan;
    plan.labeled = true;
    plan.target_chunk = chunk;
    plan.masked.assign(static_cast<std::size_t>(stream.length()), false);
    for (int p : stream.motion_positions(chunk)) plan.masked[static_cast<std::size_t>(p)] = true;
    PerceiverView<T> lsp_view = PerceiverView<T>::of(model_->lsp, false, false);
    Tensor<T> context = lsp_forward(model_->perceiver_cfg, lsp_view,
                                    s.episode.observations[0], HandSide::right);
    ForwardResult<T> fwd = model_->backbone.forward(stream, plan, &context);
    const int k = model_->tokens_per_chunk();
    std::vector<int> rows(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) rows[static_cast<std::size_t>(i)] = chunk * k + i;
    return gather_rows(fwd.h, rows);
  }

  // Held-out mean squared action error using the fixed-step sampler.
  double eval_action_mse(int episodes, std::uint64_t eval_seed) {
    auto splits = world_.make_splits();
    const int n = std::min(episodes, splits.lab_eval.count);
    double total = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < n; ++i) {
      PreppedSample s = prep_sample(*model_, world_, tokenizer_, world_.generate(splits.lab_eval, i));
      for (int c = 0; c < s.chunks; ++c) {
        Tensor<T> h = embeddings_for(s, c);
        const auto q = s.episode.proprio[static_cast<std::size_t>(c * model_->tokenizer_cfg.chunk_len)];
        Rng r = Rng(eval_seed).substream("sample:" + std::to_string(i) + ":" + std::to_string(c));
        const std::vector<T> sampled =
            FlowHead<T>::sample_actions(flow_->field(h, q), flow_->config(), r);
        const std::vector<double> gt = world_.robot_action_chunk(s.episode, c);
        for (std::size_t j = 0; j < gt.size(); ++j) {
          const double d = static_cast<double>(sampled[j]) - gt[j];
          total += d * d;
          ++count;
        }
      }
    }
    return total / static_cast<double>(count);
  }

  void save_checkpoint(const std::string& path, const std::string& config_hash) const {
    auto os = io::open_out(path);
    os.write(PretrainTrainer<T>::kMagic, 9);
    io::put_u32(os, PretrainTrainer<T>::kVersion);
    io::put_string(os, config_hash);
    io::put_string(os, "posttrain");
    io::put_u64(os, static_cast<std::uint64_t>(step_));
    model_->backbone.params().save(os);
    model_->lap.backbone.save(os);
    model_->lap.queries.save(os);
    model_->lsp.backbone.save(os);
    model_->lsp.queries.save(os);
    flow_->params().save(os);
    opt_.save(os);
    data_rng_.save(os);
    noise_rng_.save(os);
  }

  void load_checkpoint(const std::string& path, const std::string& expected_hash) {
    auto is = io::open_in(path);
    char magic[9];
    is.read(magic, 9);
    check(is.good() && std::string(magic, 9) == PretrainTrainer<T>::kMagic, "checkpoint: bad magic");
    const std::uint32_t version = io::get_u32(is);
    check(version == PretrainTrainer<T>::kVersion,
          "checkpoint: unsupported format version " + std::to_string(version));
    const std::string hash = io::get_string(is);
    check(hash == expected_hash,
          "checkpoint: config hash mismatch (got " + hash + ", expected " + expected_hash + ")");
    const std::string phase = io::get_string(is);
    check(phase == "posttrain", "checkpoint: expected a post-training checkpoint, found " + phase);
    step_ = static_cast<std::int64_t>(io::get_u64(is));
    model_->backbone.params().load_into(is);
    model_->lap.backbone.load_into(is);
    model_->lap.queries.load_into(is);
    model_->lsp.backbone.load_into(is);
    model_->lsp.queries.load_into(is);
    flow_->params().load_into(is);
    opt_.load(is);
    data_rng_ = Rng::load(is);
    noise_rng_ = Rng::load(is);
  }

 private:
  static Tensor<T> sum_losses(const std::vector<Tensor<T>>& xs) {
    Tensor<T> acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
  }

  TokenStream truncated_stream(const PreppedSample& s, int chunk) const {
    // Rebuild the stream with chunks 0..chunk, the last as a placeholder.
    std::vector<StreamChunkInput> inputs;
    auto chunks = chunk_sequence(s.episode.poses, model_->tokenizer_cfg.chunk_len);
    for (int c = 0; c < chunk; ++c) {
      StreamChunkInput in;
      in.tokens = tokenizer_.tokenize(chunks[static_cast<std::size_t>(c)]);
      in.hand_side = chunks[static_cast<std::size_t>(c)].hand_side;
      inputs.push_back(std::move(in));
    }
    StreamChunkInput target;
    target.placeholder = true;
    inputs.push_back(target);
    return format_stream(model_->vocab, s.episode.instruction_ids,
                         world_.visual_token_ids(s.episode.observations[0]), inputs, false,
                         model_->tokenizer_cfg.wrist_tokens, model_->tokenizer_cfg.finger_tokens);
  }

  Tensor<T> sample_loss(const PreppedSample& s) {
    check(s.labeled, "posttrain_step: received a pretraining-phase (unlabeled) sample");
    const int chunk = static_cast<int>(data_rng_.below(static_cast<std::uint64_t>(s.chunks)));
    Tensor<T> h = embeddings_for(s, chunk);
    const std::vector<double> action_d = world_.robot_action_chunk(s.episode, chunk);
    std::vector<T> action(action_d.begin(), action_d.end());
    const auto& q = s.episode.proprio[static_cast<std::size_t>(chunk * model_->tokenizer_cfg.chunk_len)];
    const double tau = noise_rng_.uniform01();
    std::vector<T> eps(action.size());
    for (auto& v : eps) v = static_cast<T>(noise_rng_.normal());
    return flow_->fm_loss(h, action, q, tau, eps);
  }

  World world_;
  MotionTokenizer tokenizer_;
  std::unique_ptr<PretrainModel<T>> model_;
  std::unique_ptr<FlowHead<T>> flow_;
  TrainConfig cfg_;
  std::vector<PreppedSample> pool_;
  ParamSet<T> trainable_;
  AdamW<T> opt_;
  Rng data_rng_, noise_rng_;
  std::int64_t step_ = 0;
};

// Deterministic metrics serialization: wall-clock times go to a separate
// timing log so the CSV is byte-identical across reruns.
inline std::string metrics_csv_header() {
  return "step,lr,total_loss,mcp,align,grad_norm,z_std";
}

inline std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  auto fmt = [&](double v) {
    char num[40];
    if (std::isnan(v))
      std::snprintf(num, sizeof(num), "nan");
    else
      std::snprintf(num, sizeof(num), "%.17g", v);
    return std::string(num);
  };
  std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%s,%s,%s,%s",
                static_cast<long long>(m.step), fmt(m.lr).c_str(), fmt(m.total).c_str(),
                fmt(m.mcp).c_str(), fmt(m.align).c_str(), fmt(m.grad_norm).c_str(),
                fmt(m.z_std).c_str());
  return std::string(buf);
}

}  // namespace jala
