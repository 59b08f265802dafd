#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "jala/train.hpp"

using namespace jala;

namespace {

// Shared tiny fixture: one world and one trained tokenizer reused by every
// training test in this file.
struct Fixture {
  WorldConfig wc;
  World world;
  MotionTokenizer tokenizer;

  Fixture() : wc(make_world_config()), world(wc), tokenizer(make_tokenizer(world, wc)) {}

  static WorldConfig make_world_config() {
    WorldConfig wc;
    wc.episode_frames = 30;
    wc.obs_embed_dim = 8;
    wc.nuisance_dim = 4;
    wc.lab_train_count = 24;
    wc.lab_eval_count = 8;
    wc.wild_train_count = 24;
    wc.wild_eval_count = 8;
    wc.seed = 99;
    return wc;
  }

  static MotionTokenizer make_tokenizer(const World& world, const WorldConfig& wc) {
    TokenizerConfig tc;
    tc.wrist_tokens = 4;
    tc.finger_tokens = 4;
    tc.entries = 16;
    tc.code_dim = 4;
    tc.hidden = 8;
    tc.epochs = 2;
    tc.seed = 3;
    MotionTokenizer tok = MotionTokenizer::init(tc);
    auto splits = world.make_splits();
    std::vector<MotionChunk> chunks;
    for (int i = 0; i < wc.lab_train_count; ++i) {
      EpisodeSample ep = world.generate(splits.lab_train, i);
      for (auto& c : chunk_sequence(ep.poses, tc.chunk_len)) chunks.push_back(std::move(c));
    }
    // Pad up to the minimum corpus size by repeating.
    while (chunks.size() < 1000) chunks.push_back(chunks[chunks.size() % 48]);
    tok.train(chunks);
    return tok;
  }

  BackboneConfig backbone_cfg() const {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.align_layer = BackboneConfig::default_align_layer(2);
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.max_positions = 128;
    return cfg;
  }

  PerceiverConfig perceiver_cfg() const {
    PerceiverConfig cfg;
    cfg.layers = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.kv_dim = wc.obs_dim();
    cfg.latents = 8;
    cfg.head_hidden = 16;
    return cfg;
  }

  TrainConfig train_cfg() const {
    TrainConfig cfg;
    cfg.base_lr = 1e-3;
    cfg.batch_size = 3;
    cfg.total_steps = 50;
    cfg.seed = 11;
    return cfg;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

bool params_equal(const ParamSet<double>& a, const ParamSet<double>& b) {
  if (a.items.size() != b.items.size()) return false;
  for (std::size_t i = 0; i < a.items.size(); ++i)
    if (a.items[i].second.values() != b.items[i].second.values()) return false;
  return true;
}

}  // namespace

TEST_CASE("lr schedule endpoints, midpoint and continuity") {
  CHECK(lr_schedule(0, 1000, 1.0, 0.05) == 0.0);
  CHECK(lr_schedule(50, 1000, 1.0, 0.05) == doctest::Approx(1.0));
  // Midpoint of the cosine span: (1000-50)/2 + 50 = 525.
  CHECK(lr_schedule(525, 1000, 1.0, 0.05) == doctest::Approx(0.5));
  CHECK(lr_schedule(1000, 1000, 1.0, 0.05) == doctest::Approx(0.0));
  const double bound = 1.0 * (1.0 / 50 + 3.14159265358979323846 / 1000);
  for (int s = 0; s < 1000; ++s)
    CHECK(std::abs(lr_schedule(s + 1, 1000, 1.0, 0.05) - lr_schedule(s, 1000, 1.0, 0.05)) <=
          bound + 1e-12);
}

TEST_CASE("adamw applies decoupled weight decay on a zero-gradient step") {
  ParamSet<double> params;
  params.add("w", Tensor<double>::from_values({1}, {2.0}, true));
  params.items[0].second.grad();  // allocate zero gradient
  AdamW<double> opt(0.9, 0.95, 0.05);
  opt.attach(params);
  opt.step(params, 0.1);
  CHECK(params.items[0].second.values()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.05)).epsilon(1e-15));
}

TEST_CASE("global norm clipping caps the gradient") {
  ParamSet<double> params;
  params.add("a", Tensor<double>::from_values({2}, {3.0, 4.0}, true));
  params.items[0].second.grad() = {3.0, 4.0};
  const double pre = clip_global_norm(params, 1.0);
  CHECK(pre == doctest::Approx(5.0));
  double post = 0;
  for (double g : params.items[0].second.grad()) post += g * g;
  CHECK(std::sqrt(post) <= 1.0 + 1e-6);
}

TEST_CASE("pretrain step reports the hybrid objective additively") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  for (int i = 0; i < 3; ++i) {
    StepMetrics m = tr.step();
    const int n_lab = tc.batch_size * tc.labeled_ratio / (tc.labeled_ratio + tc.unlabeled_ratio);
    REQUIRE(m.has_mcp);
    const double recombined =
        m.mcp * n_lab / tc.batch_size + tc.lambda_align * m.align;
    CHECK(std::abs(m.total - recombined) < 1e-10);
    CHECK(m.grad_norm >= 0.0);
    CHECK(m.z_std > 0.0);
  }
}

TEST_CASE("all-unlabeled batches train on alignment alone") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  tc.labeled_ratio = 0;
  tc.unlabeled_ratio = 1;
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  StepMetrics m = tr.step();
  CHECK_FALSE(m.has_mcp);
  CHECK(std::isnan(m.mcp));
  CHECK(m.total == doctest::Approx(tc.lambda_align * m.align).epsilon(1e-10));
}

TEST_CASE("zero alignment weight leaves pure masked-chunk training") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  tc.lambda_align = 0.0;
  tc.labeled_ratio = 1;
  tc.unlabeled_ratio = 0;
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  StepMetrics m = tr.step();
  CHECK(m.total == doctest::Approx(m.mcp).epsilon(1e-12));
}

TEST_CASE("gradient routing: with ema off, only the routed halves move") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  tc.apply_ema = false;
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  auto lap_b = tr.model().lap.backbone.clone();
  auto lap_q = tr.model().lap.queries.clone();
  auto lsp_b = tr.model().lsp.backbone.clone();
  auto lsp_q = tr.model().lsp.queries.clone();
  StepMetrics m = tr.step();
  CHECK(m.align > 0.0);
  // Action trunk and state queries are bitwise untouched.
  CHECK(params_equal(tr.model().lap.backbone, lap_b));
  CHECK(params_equal(tr.model().lsp.queries, lsp_q));
  // Action queries and state trunk moved.
  CHECK_FALSE(params_equal(tr.model().lap.queries, lap_q));
  CHECK_FALSE(params_equal(tr.model().lsp.backbone, lsp_b));
}

TEST_CASE("ema cadence: action trunk tracks state trunk after the step") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  tc.ema_alpha = 0.5;
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  auto lap_b_before = tr.model().lap.backbone.clone();
  tr.step();
  // lap_b changed (via EMA toward the stepped lsp_b), not via gradients.
  CHECK_FALSE(params_equal(tr.model().lap.backbone, lap_b_before));
}

TEST_CASE("pretraining is bitwise reproducible under a fixed seed") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  PretrainTrainer<double> a(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  PretrainTrainer<double> b(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  for (int i = 0; i < 3; ++i) {
    StepMetrics ma = a.step();
    StepMetrics mb = b.step();
    CHECK(ma.total == mb.total);
  }
  CHECK(params_equal(a.model().backbone.params(), b.model().backbone.params()));
}

TEST_CASE("checkpoint resume reproduces uninterrupted training bitwise") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  const std::string path = "/tmp/jala_test_ckpt.bin";

  PretrainTrainer<double> full(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  full.run(5);
  PretrainTrainer<double> half(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  half.run(2);
  half.save_checkpoint(path, "hash123");

  PretrainTrainer<double> resumed(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  resumed.load_checkpoint(path, "hash123");
  CHECK(resumed.step_index() == 2);
  resumed.run(3);
  full.run(0);
  CHECK(params_equal(resumed.model().backbone.params(), full.model().backbone.params()));
  CHECK(params_equal(resumed.model().lap.queries, full.model().lap.queries));

  // Hash mismatch is refused.
  PretrainTrainer<double> other(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  CHECK_THROWS_AS(other.load_checkpoint(path, "different"), Error);
  std::remove(path.c_str());
}

TEST_CASE("save-load-save produces byte-identical checkpoints") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  const std::string p1 = "/tmp/jala_ckpt_a.bin", p2 = "/tmp/jala_ckpt_b.bin";
  PretrainTrainer<double> tr(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  tr.run(2);
  tr.save_checkpoint(p1, "h");
  PretrainTrainer<double> tr2(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), tc);
  tr2.load_checkpoint(p1, "h");
  tr2.save_checkpoint(p2, "h");
  auto i1 = io::open_in(p1);
  auto i2 = io::open_in(p2);
  std::string s1((std::istreambuf_iterator<char>(i1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(i2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("post-training trains the flow head and freezes the perceivers") {
  Fixture& f = fixture();
  TrainConfig tc = f.train_cfg();
  tc.total_steps = 20;
  FlowConfig fc;
  fc.depth = 1;
  fc.dim = 8;
  fc.heads = 2;
  fc.horizon = f.wc.action_horizon;
  fc.action_dim = f.wc.action_dim;
  fc.proprio_dim = f.wc.proprio_dim;
  fc.h_dim = 8;

  auto model = std::make_unique<PretrainModel<double>>(
      init_pretrain_model<double>(f.world, f.tokenizer, f.backbone_cfg(), f.perceiver_cfg(), 5));
  PosttrainTrainer<double> post(f.world, f.tokenizer, std::move(model), fc, tc);
  auto lap_before = post.model().lap.backbone.clone();
  auto lsp_before = post.model().lsp.backbone.clone();
  auto flow_before = post.flow().params().clone();
  StepMetrics m = post.step();
  CHECK(m.total > 0.0);
  for (int i = 0; i < 4; ++i) post.step();
  CHECK(params_equal(post.model().lap.backbone, lap_before));
  CHECK(params_equal(post.model().lsp.backbone, lsp_before));
  CHECK_FALSE(params_equal(post.flow().params(), flow_before));

  const double mse = post.eval_action_mse(4, 123);
  CHECK(std::isfinite(mse));
  CHECK(mse > 0.0);
}
