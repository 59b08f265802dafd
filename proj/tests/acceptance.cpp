// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier criteria share artifacts (the tokenizer and the full
// pretraining run feed several checks). Pass --cli <path> to also exercise
// command-level byte reproducibility through the real executable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "jala/config.hpp"
#include "jala/eval.hpp"
#include "jala/fdcheck.hpp"
#include "jala/train.hpp"

using namespace jala;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void verdict(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %s: %s\n", pass ? "PASS" : "FAIL", index, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double wall_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

// ---- shared toy setup -------------------------------------------------

WorldConfig base_world() {
  WorldConfig wc;
  wc.seed = 2024;
  return wc;  // spec-scale defaults: 45 frames, 512+512 episodes
}

TokenizerConfig base_tokenizer() {
  TokenizerConfig tc;
  tc.seed = 21;
  return tc;
}

BackboneConfig base_backbone() {
  BackboneConfig bc;  // 6 layers, align at 4, dim 32
  return bc;
}

PerceiverConfig base_perceiver() {
  PerceiverConfig pc;  // dim 32, 16 latents, kv 24
  return pc;
}

TrainConfig run_train_config() {
  TrainConfig tc;
  tc.base_lr = 3e-3;  // toy-scale rate; the 3e-5 default suits the full-size model
  tc.total_steps = 2000;
  tc.batch_size = 8;
  tc.seed = 5;
  return tc;
}

MotionTokenizer train_base_tokenizer(const World& world) {
  MotionTokenizer tok = MotionTokenizer::init(base_tokenizer());
  auto splits = world.make_splits();
  std::vector<MotionChunk> chunks;
  for (int i = 0; i < splits.lab_train.count; ++i) {
    EpisodeSample ep = world.generate(splits.lab_train, i);
    for (auto& c : chunk_sequence(ep.poses, 15)) chunks.push_back(std::move(c));
  }
  tok.train(chunks);
  return tok;
}

double window_mean(const std::vector<StepMetrics>& rows, std::size_t lo, std::size_t hi,
                   double StepMetrics::*field) {
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = lo; i < hi && i < rows.size(); ++i) {
    const double v = rows[i].*field;
    if (!std::isnan(v)) {
      acc += v;
      ++n;
    }
  }
  return n > 0 ? acc / static_cast<double>(n) : std::nan("");
}

// ---- criterion 1: gradient oracles ------------------------------------

void criterion_gradient_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;

  // Masked-chunk loss through the full backbone graph, checked on the output
  // bias and one attention projection (<= 200 coordinates total).
  {
    Vocab v;
    v.instruction_vocab = 4;
    v.visual_vocab = 4;
    v.motion_entries = 6;
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.align_layer = 1;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.max_positions = 64;
    Rng rng(71);
    Backbone<double> bb = Backbone<double>::init(cfg, v, rng);
    std::vector<StreamChunkInput> chunks(2);
    for (int c = 0; c < 2; ++c) {
      chunks[c].tokens.wrist_ids = {c, (c + 2) % 6};
      chunks[c].tokens.finger_ids = {(c + 1) % 6, (c + 3) % 6};
    }
    TokenStream s = format_stream(v, {1}, {2}, chunks, false, 2, 2);
    MaskPlan plan;
    plan.labeled = true;
    plan.target_chunk = 1;
    plan.masked.assign(static_cast<std::size_t>(s.length()), false);
    for (int p : s.motion_positions(1)) plan.masked[static_cast<std::size_t>(p)] = true;
    for (const char* pname : {"b_out", "layer0.attn.wq"}) {
      Tensor<double>* t = bb.params().find(pname);
      auto objective = [&](const std::vector<double>& vals) {
        t->values() = vals;
        return bb.mcp_loss(bb.forward(s, plan), s, plan).item();
      };
      const std::vector<double> at = t->values();
      auto fd = finite_difference_gradient<double>(objective, at, 1e-6);
      t->values() = at;
      bb.params().zero_grads();
      bb.mcp_loss(bb.forward(s, plan), s, plan).backward();
      worst = std::max(worst, static_cast<double>(max_relative_error(t->grad(), fd)));
    }
  }

  // Alignment loss through the action perceiver, checked on the queries.
  {
    PerceiverConfig cfg;
    cfg.layers = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.kv_dim = 6;
    cfg.latents = 4;
    cfg.head_hidden = 12;
    Rng rng(72);
    PerceiverParams<double> p = PerceiverParams<double>::init(cfg, rng);
    std::vector<double> fa(6), fb(6);
    Rng fr(73);
    for (auto& x : fa) x = fr.normal();
    for (auto& x : fb) x = fr.normal();
    Tensor<double> target = Tensor<double>::filled({4, 8}, 2.5);
    Tensor<double>& q = p.queries.items[0].second;
    auto objective = [&](const std::vector<double>& vals) {
      q.values() = vals;
      auto view = PerceiverView<double>::of(p, false, true);
      return align_loss(lap_forward(cfg, view, fa, fb, HandSide::right), target).item();
    };
    const std::vector<double> at = q.values();
    auto fd = finite_difference_gradient<double>(objective, at, 1e-6);
    q.values() = at;
    p.queries.zero_grads();
    auto view = PerceiverView<double>::of(p, false, true);
    align_loss(lap_forward(cfg, view, fa, fb, HandSide::right), target).backward();
    worst = std::max(worst, static_cast<double>(max_relative_error(q.grad(), fd)));
  }

  // Flow-matching loss through the action head, checked on the output
  // projection and the conditioning projection.
  {
    FlowConfig cfg;
    cfg.depth = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.horizon = 3;
    cfg.action_dim = 2;
    cfg.proprio_dim = 2;
    cfg.h_dim = 8;
    Rng rng(74);
    FlowHead<double> head = FlowHead<double>::init(cfg, rng);
    Rng hr(75);
    Tensor<double> h = Tensor<double>::randn({4, 8}, hr, 0.5, false);
    std::vector<double> q = {0.2, -0.4};
    std::vector<double> action = {0.5, -0.2, 0.1, 0.9, -0.6, 0.3};
    std::vector<double> eps(action.size());
    for (auto& e : eps) e = hr.normal();
    for (const char* pname : {"out.w", "cond_in.w"}) {
      Tensor<double>* t = head.params().find(pname);
      auto objective = [&](const std::vector<double>& vals) {
        t->values() = vals;
        return head.fm_loss(h, action, q, 0.45, eps).item();
      };
      const std::vector<double> at = t->values();
      auto fd = finite_difference_gradient<double>(objective, at, 1e-6);
      t->values() = at;
      head.params().zero_grads();
      head.fm_loss(h, action, q, 0.45, eps).backward();
      worst = std::max(worst, static_cast<double>(max_relative_error(t->grad(), fd)));
    }
  }

  const double secs = wall_seconds(t0);
  verdict(1, "gradient oracles (mcp, align, fm vs central differences)",
          worst < 1e-5 && secs < 60.0,
          "max rel err " + fmt(worst) + ", " + fmt(secs) + " s");
}

// ---- criterion 2: ema exactness ----------------------------------------

void criterion_ema_exactness() {
  PerceiverConfig cfg;
  cfg.layers = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kv_dim = 6;
  cfg.latents = 4;
  Rng rng(81);
  PerceiverParams<double> lap0 = PerceiverParams<double>::init(cfg, rng);
  PerceiverParams<double> lsp0 = PerceiverParams<double>::init(cfg, rng);
  bool ok = true;
  std::string detail;

  for (double alpha : {0.0, 0.5}) {
    PerceiverParams<double> lap = lap0.clone(), lsp = lsp0.clone();
    decoupled_ema_update(lap, lsp, alpha);
    for (std::size_t i = 0; i < lap.backbone.items.size() && ok; ++i) {
      const auto& updated = lap.backbone.items[i].second.values();
      const auto& a = lap0.backbone.items[i].second.values();
      const auto& b = lsp0.backbone.items[i].second.values();
      for (std::size_t j = 0; j < updated.size(); ++j)
        if (updated[j] != alpha * a[j] + (1.0 - alpha) * b[j]) ok = false;
    }
    const auto& ql = lsp.queries.items[0].second.values();
    const auto& qa = lsp0.queries.items[0].second.values();
    const auto& qb = lap0.queries.items[0].second.values();
    for (std::size_t j = 0; j < ql.size(); ++j)
      if (ql[j] != alpha * qa[j] + (1.0 - alpha) * qb[j]) ok = false;
    // Untouched halves bitwise unchanged.
    for (std::size_t i = 0; i < lsp.backbone.items.size(); ++i)
      if (lsp.backbone.items[i].second.values() != lsp0.backbone.items[i].second.values())
        ok = false;
    if (lap.queries.items[0].second.values() != lap0.queries.items[0].second.values()) ok = false;
  }

  PerceiverParams<double> lap = lap0.clone(), lsp = lsp0.clone();
  for (auto& [n, t] : lap.backbone.items) t.values().assign(t.values().size(), 1.0);
  for (auto& [n, t] : lsp.backbone.items) t.values().assign(t.values().size(), 0.0);
  for (int i = 0; i < 1000; ++i) decoupled_ema_update(lap, lsp, 0.999);
  const double got = lap.backbone.items[0].second.values()[0];
  const double want = std::pow(0.999, 1000.0);
  ok = ok && std::abs(got - want) < 1e-6;
  detail = "alpha {0,0.5} bitwise, 0.999^1000 -> " + fmt(got) + " (expect " + fmt(want) + ")";
  verdict(2, "decoupled ema exactness", ok, detail);
}

// ---- criterion 3: gradient routing -------------------------------------

void criterion_gradient_routing(const World& world, const MotionTokenizer& tok) {
  TrainConfig tc = run_train_config();
  tc.apply_ema = false;
  tc.total_steps = 10;
  tc.batch_size = 4;
  BackboneConfig bc;
  bc.layers = 2;
  bc.align_layer = 1;
  bc.model_dim = 32;
  PerceiverConfig pc = base_perceiver();
  PretrainTrainer<double> tr(world, tok, bc, pc, tc);
  auto lap_b = tr.model().lap.backbone.clone();
  auto lsp_q = tr.model().lsp.queries.clone();
  auto lap_q = tr.model().lap.queries.clone();
  StepMetrics m = tr.step();
  bool lap_b_frozen = true, lsp_q_frozen = true, lap_q_moved = false;
  for (std::size_t i = 0; i < lap_b.items.size(); ++i)
    if (tr.model().lap.backbone.items[i].second.values() != lap_b.items[i].second.values())
      lap_b_frozen = false;
  if (tr.model().lsp.queries.items[0].second.values() != lsp_q.items[0].second.values())
    lsp_q_frozen = false;
  if (tr.model().lap.queries.items[0].second.values() != lap_q.items[0].second.values())
    lap_q_moved = true;
  verdict(3, "gradient routing (ema off: action trunk and state queries pinned)",
          lap_b_frozen && lsp_q_frozen && lap_q_moved && m.align > 0,
          std::string("lap trunk frozen=") + (lap_b_frozen ? "yes" : "no") +
              ", lsp queries frozen=" + (lsp_q_frozen ? "yes" : "no") +
              ", lap queries moved=" + (lap_q_moved ? "yes" : "no") + ", align " + fmt(m.align));
}

// ---- criterion 4: masking statistics ------------------------------------

void criterion_masking_statistics() {
  Vocab v;
  v.instruction_vocab = 4;
  v.visual_vocab = 4;
  v.motion_entries = 8;
  std::vector<StreamChunkInput> chunks(4);
  for (auto& in : chunks) {
    in.tokens.wrist_ids.assign(5, 1);
    in.tokens.finger_ids.assign(5, 2);
  }
  TokenStream s = format_stream(v, {0}, {1}, chunks, false, 5, 5);
  Rng rng(20240);
  const int draws = 10000;
  std::map<int, int> targets;
  std::map<double, int> ratios;
  std::int64_t suffix_masked = 0, suffix_total = 0;
  for (int i = 0; i < draws; ++i) {
    MaskPlan plan = sample_hybrid_mask(s, true, rng);
    targets[*plan.target_chunk]++;
    ratios[plan.target_ratio]++;
    for (int c = *plan.target_chunk + 1; c < 4; ++c)
      for (int p : s.motion_positions(c)) {
        ++suffix_total;
        suffix_masked += plan.masked[static_cast<std::size_t>(p)] ? 1 : 0;
      }
  }
  double chi_t = 0;
  for (int c = 0; c < 4; ++c) {
    const double e = draws / 4.0;
    chi_t += (targets[c] - e) * (targets[c] - e) / e;
  }
  const auto& grid = mask_ratio_grid();
  double chi_r = 0;
  for (double g : grid) {
    const double e = draws / static_cast<double>(grid.size());
    chi_r += (ratios[g] - e) * (ratios[g] - e) / e;
  }
  const double suffix_rate = static_cast<double>(suffix_masked) / suffix_total;

  // Unlabeled plans mask every motion position.
  Rng rng2(20241);
  bool unlabeled_full = true;
  for (int i = 0; i < 100; ++i) {
    MaskPlan plan = sample_hybrid_mask(s, false, rng2);
    for (int p : s.all_motion_positions())
      if (!plan.masked[static_cast<std::size_t>(p)]) unlabeled_full = false;
  }

  const bool pass = chi_t < 11.345 && chi_r < 23.209 && suffix_rate >= 0.045 &&
                    suffix_rate <= 0.055 && unlabeled_full;
  verdict(4, "masking statistics over 10k plans", pass,
          "chi2 target " + fmt(chi_t) + " (<11.345), chi2 grid " + fmt(chi_r) +
              " (<23.209), suffix rate " + fmt(suffix_rate) + ", unlabeled full-mask " +
              (unlabeled_full ? "yes" : "no"));
}

// ---- criterion 5: grvq oracle -------------------------------------------

void criterion_grvq_oracle() {
  Rng rng(91);
  bool match = true;
  bool monotone = true;
  int checked = 0;
  while (checked < 1000) {
    const int groups = 1 + static_cast<int>(rng.below(2));
    const int levels = 1 + static_cast<int>(rng.below(4));
    const int entries = 4 + static_cast<int>(rng.below(29));  // <= 32
    Codebook cb = Codebook::init(MotionPart::wrist, groups, levels, entries, 4 * groups, rng);
    for (int i = 0; i < 50 && checked < 1000; ++i, ++checked) {
      std::vector<double> vec(static_cast<std::size_t>(cb.code_dim));
      for (auto& x : vec) x = rng.normal();
      QuantizeResult got = grvq_quantize(vec, cb);
      // Exhaustive greedy oracle.
      std::vector<int> expect;
      const int sd = cb.sub_dim();
      for (int g = 0; g < groups; ++g) {
        std::vector<double> r(vec.begin() + g * sd, vec.begin() + (g + 1) * sd);
        for (int l = 0; l < levels; ++l) {
          int best = -1;
          double bd = 0;
          for (int e = 0; e < entries; ++e) {
            double d2 = 0;
            for (int d = 0; d < sd; ++d) {
              const double diff = r[static_cast<std::size_t>(d)] - cb.entry(g, l, e)[d];
              d2 += diff * diff;
            }
            if (best < 0 || d2 < bd) {
              best = e;
              bd = d2;
            }
          }
          expect.push_back(best);
          for (int d = 0; d < sd; ++d) r[static_cast<std::size_t>(d)] -= cb.entry(g, l, best)[d];
        }
      }
      if (got.indices != expect) match = false;
      // Residual monotonicity via level prefixes of the same codebook.
      if (groups == 1) {
        double prev = -1;
        for (int r = 1; r <= levels; ++r) {
          Codebook prefix = cb;
          prefix.levels = r;
          prefix.codewords.assign(cb.codewords.begin(),
                                  cb.codewords.begin() +
                                      static_cast<std::ptrdiff_t>(r) * entries * sd);
          const double rn = grvq_quantize(vec, prefix).residual_norm;
          if (prev >= 0 && rn > prev + 1e-12) monotone = false;
          prev = rn;
        }
      }
    }
  }
  verdict(5, "grvq equals brute-force greedy search; residual norm monotone", match && monotone,
          std::string("1000 vectors, match=") + (match ? "yes" : "no") + ", monotone=" +
              (monotone ? "yes" : "no"));
}

// ---- criterion 6: flow sampler exactness --------------------------------

void criterion_flow_sampler() {
  double worst = 0;
  for (int steps : {1, 2, 4, 16}) {
    FlowConfig cfg;
    cfg.denoise_steps = steps;
    cfg.horizon = 4;
    cfg.action_dim = 3;
    std::vector<double> target(static_cast<std::size_t>(cfg.horizon) * cfg.action_dim);
    Rng tr(92);
    for (auto& v : target) v = tr.normal();
    FlowHead<double>::Field field = [&](const std::vector<double>& a, double tau) {
      std::vector<double> v(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) v[i] = (a[i] - target[i]) / (1.0 - tau);
      return v;
    };
    Rng sr(93);
    const auto sampled = FlowHead<double>::sample_actions(field, cfg, sr);
    for (std::size_t i = 0; i < sampled.size(); ++i)
      worst = std::max(worst, std::abs(sampled[i] - target[i]));
  }
  verdict(6, "euler sampler exact under the analytic field (N in {1,2,4,16})", worst < 1e-5,
          "max reconstruction error " + fmt(worst));
}

// ---- criterion 7: metric oracles ----------------------------------------

void criterion_metric_oracles() {
  bool ok = true;
  auto mk = [](Vec3 t, std::vector<double> fingers) {
    PoseFrame f;
    f.wrist_translation = t;
    f.finger_joints = std::move(fingers);
    return f;
  };
  const std::vector<double> open5 = {0, 0, 0, 0, 0};

  // mpjpe: identity, unit offset, hand-computed mixed case.
  {
    std::vector<PoseFrame> a = {mk({0, 0, 0}, open5), mk({1, 1, 1}, open5)};
    std::vector<PoseFrame> b = a;
    ok = ok && mpjpe(a, a) == 0.0;
    for (auto& f : b) f.wrist_translation = f.wrist_translation + Vec3{1, 0, 0};
    ok = ok && std::abs(mpjpe(b, a) - 1.0) < 1e-12;
    std::vector<PoseFrame> c = a;
    c[0].wrist_translation = {0.3, 0.4, 0.0};
    ok = ok && std::abs(mpjpe(c, a) - 0.25) < 1e-12;  // 6 joints at 0.5 of 12
  }
  // pa-mpjpe: rigid motion removed, scale removed, optimality on 1000 pairs.
  {
    Rng rng(94);
    std::vector<PoseFrame> gt;
    for (int i = 0; i < 2; ++i)
      gt.push_back(mk({rng.normal(), rng.normal(), rng.normal()},
                      {rng.uniform01(), rng.uniform01(), rng.uniform01(), rng.uniform01(),
                       rng.uniform01()}));
    std::vector<PoseFrame> moved = gt;
    const Mat3 r = axis_angle_to_matrix({0, 0, 0.9});
    for (auto& f : moved) {
      f.wrist_translation = matvec(r, f.wrist_translation) + Vec3{1, -2, 0.5};
      f.wrist_rotation = {0, 0, f.wrist_rotation[2] + 0.9};
    }
    ok = ok && pa_mpjpe(moved, gt) < 1e-8;
    int optimal = 0;
    for (int i = 0; i < 1000; ++i) {
      std::vector<PoseFrame> a = {mk({rng.normal(), rng.normal(), rng.normal()},
                                     {rng.uniform01(), rng.uniform01(), rng.uniform01(),
                                      rng.uniform01(), rng.uniform01()})};
      std::vector<PoseFrame> b = {mk({rng.normal(), rng.normal(), rng.normal()},
                                     {rng.uniform01(), rng.uniform01(), rng.uniform01(),
                                      rng.uniform01(), rng.uniform01()})};
      if (pa_mpjpe(a, b) <= mpjpe(a, b) + 1e-12) ++optimal;
    }
    ok = ok && optimal == 1000;
  }
  // mwte: identity, constant offset, hand-computed 1/2/3 case.
  {
    std::vector<PoseFrame> a = {mk({0, 0, 0}, open5), mk({0, 0, 0}, open5), mk({0, 0, 0}, open5)};
    ok = ok && mwte(a, a) == 0.0;
    std::vector<PoseFrame> b = a;
    for (auto& f : b) f.wrist_translation = {0, 0, 2};
    ok = ok && std::abs(mwte(b, a) - 2.0) < 1e-12;
    std::vector<PoseFrame> c = a;
    c[0].wrist_translation = {1, 0, 0};
    c[1].wrist_translation = {0, 2, 0};
    c[2].wrist_translation = {0, 0, 3};
    ok = ok && std::abs(mwte(c, a) - 2.0) < 1e-12;
  }
  // mde: identity, shift invariance, hand-computed sqrt(2).
  {
    std::vector<PoseFrame> a = {mk({0, 0, 0}, open5), mk({1, 1, 0}, open5)};
    ok = ok && mde(a, a) == 0.0;
    std::vector<PoseFrame> b = a;
    for (auto& f : b) f.wrist_translation = f.wrist_translation + Vec3{3, 3, 3};
    ok = ok && std::abs(mde(b, a)) < 1e-12;
    std::vector<PoseFrame> c = {mk({0, 0, 0}, open5), mk({2, 0, 0}, open5)};
    ok = ok && std::abs(mde(c, a) - std::sqrt(2.0)) < 1e-12;
  }
  verdict(7, "metric oracles (mpjpe, pa-mpjpe, mwte, mde)", ok,
          "12 micro-cases and 1000-pair optimality");
}

// ---- criterion 8: desk-scale pretraining --------------------------------

struct RunOutcome {
  double mcp_start = 0, mcp_end = 0;
  double align_start = 0, align_end = 0;
  double z_start = 0, z_min_ratio = 0;
  double minutes = 0;
};

RunOutcome summarize(const std::vector<StepMetrics>& rows, double minutes) {
  RunOutcome o;
  o.mcp_start = window_mean(rows, 4, 15, &StepMetrics::mcp);     // around step 10
  o.align_start = window_mean(rows, 4, 15, &StepMetrics::align);
  o.z_start = window_mean(rows, 0, 10, &StepMetrics::z_std);
  o.mcp_end = window_mean(rows, rows.size() - 50, rows.size(), &StepMetrics::mcp);
  o.align_end = window_mean(rows, rows.size() - 50, rows.size(), &StepMetrics::align);
  double z_min = rows[10].z_std;
  for (std::size_t i = 10; i < rows.size(); ++i) z_min = std::min(z_min, rows[i].z_std);
  o.z_min_ratio = z_min / o.z_start;
  o.minutes = minutes;
  return o;
}

void criterion_pretraining_run(const World& world, const MotionTokenizer& tok,
                               std::unique_ptr<PretrainTrainer<float>>& out_trainer) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tc = run_train_config();
  auto trainer = std::make_unique<PretrainTrainer<float>>(world, tok, base_backbone(),
                                                          base_perceiver(), tc);
  std::vector<StepMetrics> rows = trainer->run(tc.total_steps);
  const RunOutcome full = summarize(rows, wall_seconds(t0) / 60.0);

  const auto t1 = std::chrono::steady_clock::now();
  TrainConfig ablated = tc;
  ablated.decoupled_ema = false;
  PretrainTrainer<float> coupled(world, tok, base_backbone(), base_perceiver(), ablated);
  std::vector<StepMetrics> ablated_rows = coupled.run(ablated.total_steps);
  const RunOutcome wo = summarize(ablated_rows, wall_seconds(t1) / 60.0);

  const bool mcp_drop = full.mcp_end <= 0.5 * full.mcp_start;
  const bool align_drop = full.align_end <= 0.5 * full.align_start;
  const bool no_collapse = full.z_min_ratio >= 0.1;  // stays above 10% throughout
  const bool in_budget = full.minutes < 30.0;
  const bool ablation_fails_align = wo.align_end > 0.5 * wo.align_start;
  const bool ablation_collapses = wo.z_min_ratio < 0.1;
  const bool pass =
      mcp_drop && align_drop && no_collapse && in_budget && (ablation_fails_align || ablation_collapses);
  verdict(8, "desk-scale pretraining with decoupled-ema ablation", pass,
          "mcp " + fmt(full.mcp_start) + "->" + fmt(full.mcp_end) + ", align " +
              fmt(full.align_start) + "->" + fmt(full.align_end) + ", min z_std ratio " +
              fmt(full.z_min_ratio) + ", " + fmt(full.minutes) +
              " min; coupled run: align " + fmt(wo.align_start) + "->" + fmt(wo.align_end) +
              ", min z_std ratio " + fmt(wo.z_min_ratio));
  out_trainer = std::move(trainer);
}

// ---- criterion 9: transfer trend -----------------------------------------

void criterion_transfer(const World& world, const MotionTokenizer& tok,
                        PretrainTrainer<float>* pretrained) {
  FlowConfig fc;
  fc.dim = 32;
  fc.depth = 2;
  fc.heads = 4;
  fc.h_dim = 32;
  std::vector<double> ratios;
  std::string detail;
  for (std::uint64_t seed : {201, 202, 203}) {
    TrainConfig tc = run_train_config();
    tc.total_steps = 300;
    tc.post_lr = 1e-3;
    tc.seed = seed;

    auto warm = std::make_unique<PretrainModel<float>>(
        init_pretrain_model<float>(world, tok, base_backbone(), base_perceiver(),
                                   run_train_config().seed));
    // Copy the pretrained parameter trees.
    warm->backbone.params().copy_values_from(pretrained->model().backbone.params());
    warm->lap.backbone.copy_values_from(pretrained->model().lap.backbone);
    warm->lap.queries.copy_values_from(pretrained->model().lap.queries);
    warm->lsp.backbone.copy_values_from(pretrained->model().lsp.backbone);
    warm->lsp.queries.copy_values_from(pretrained->model().lsp.queries);
    PosttrainTrainer<float> post_warm(world, tok, std::move(warm), fc, tc);
    post_warm.run(tc.total_steps);
    const double mse_warm = post_warm.eval_action_mse(16, seed + 1000);

    auto cold = std::make_unique<PretrainModel<float>>(init_pretrain_model<float>(
        world, tok, base_backbone(), base_perceiver(), seed + 777));
    PosttrainTrainer<float> post_cold(world, tok, std::move(cold), fc, tc);
    post_cold.run(tc.total_steps);
    const double mse_cold = post_cold.eval_action_mse(16, seed + 1000);

    ratios.push_back(mse_warm / mse_cold);
    detail += "seed " + std::to_string(seed) + ": " + fmt(mse_warm) + "/" + fmt(mse_cold) + " ";
  }
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  verdict(9, "transfer trend (pretrained vs random backbone, 3 paired seeds)", median <= 0.8,
          detail + "median ratio " + fmt(median) + " (need <= 0.8)");
}

// ---- criterion 10: wild-scaling trend ------------------------------------

void criterion_wild_scaling() {
  WorldConfig wc;
  wc.episode_frames = 30;
  wc.lab_train_count = 256;
  wc.lab_eval_count = 32;
  wc.wild_train_count = 256;
  wc.wild_eval_count = 24;
  wc.seed = 31;
  World world(wc);
  TokenizerConfig tcfg = base_tokenizer();
  tcfg.seed = 22;
  MotionTokenizer tok = MotionTokenizer::init(tcfg);
  {
    auto splits = world.make_splits();
    std::vector<MotionChunk> chunks;
    for (int i = 0; i < splits.lab_train.count; ++i) {
      EpisodeSample ep = world.generate(splits.lab_train, i);
      for (auto& c : chunk_sequence(ep.poses, 15)) chunks.push_back(std::move(c));
    }
    while (chunks.size() < 1000) chunks.push_back(chunks[chunks.size() % 512]);
    tok.train(chunks);
  }
  BackboneConfig bc;
  bc.layers = 4;
  bc.align_layer = BackboneConfig::default_align_layer(4);
  bc.model_dim = 24;
  bc.heads = 4;
  PerceiverConfig pc = base_perceiver();
  pc.dim = 24;

  const std::vector<double> fractions = {0.0, 0.25, 0.5, 1.0};
  std::vector<double> medians;
  std::string detail;
  for (double f : fractions) {
    std::vector<double> mpjpes;
    for (std::uint64_t s : {301, 302, 303}) {
      TrainConfig tc = run_train_config();
      tc.total_steps = 500;
      tc.batch_size = 6;
      tc.wild_fraction = f;
      tc.seed = s;
      PretrainTrainer<float> trainer(world, tok, bc, pc, tc);
      trainer.run(tc.total_steps);
      auto decoder = model_decoder(trainer.model(), 0.05, 1, s);
      MetricReport rep = eval_motion_generation(trainer.model(), world, tok,
                                                world.make_splits().wild_eval, decoder, 24);
      mpjpes.push_back(rep.mpjpe);
    }
    std::sort(mpjpes.begin(), mpjpes.end());
    medians.push_back(mpjpes[1]);
    detail += fmt(f) + ":" + fmt(mpjpes[1]) + " ";
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i)
    if (medians[i] > medians[i - 1] * 1.05) monotone = false;  // 5% seed-noise slack
  verdict(10, "wild-scaling trend (median wild mpjpe non-increasing)", monotone, detail);
}

// ---- criterion 11: reproducibility ---------------------------------------

void criterion_reproducibility(const World& world, const MotionTokenizer& tok,
                               const std::string& cli_path) {
  // (a) identical metrics CSV from two identical runs.
  TrainConfig tc = run_train_config();
  tc.total_steps = 12;
  tc.batch_size = 4;
  BackboneConfig bc;
  bc.layers = 2;
  bc.align_layer = 1;
  bc.model_dim = 32;
  std::string csv_a, csv_b;
  for (std::string* out : {&csv_a, &csv_b}) {
    PretrainTrainer<double> tr(world, tok, bc, base_perceiver(), tc);
    std::ostringstream os;
    os << metrics_csv_header() << "\n";
    for (const auto& m : tr.run(tc.total_steps)) os << metrics_csv_row(m) << "\n";
    *out = os.str();
  }
  const bool csv_identical = csv_a == csv_b;

  // (b) checkpoint resume matches uninterrupted training bitwise (float64).
  PretrainTrainer<double> full(world, tok, bc, base_perceiver(), tc);
  full.run(12);
  PretrainTrainer<double> half(world, tok, bc, base_perceiver(), tc);
  half.run(2);
  const std::string ckpt = (fs::temp_directory_path() / "jala_acceptance_ckpt.bin").string();
  half.save_checkpoint(ckpt, "acc");
  PretrainTrainer<double> resumed(world, tok, bc, base_perceiver(), tc);
  resumed.load_checkpoint(ckpt, "acc");
  resumed.run(10);
  bool resume_bitwise = true;
  const auto& a = resumed.model().backbone.params();
  const auto& b = full.model().backbone.params();
  for (std::size_t i = 0; i < a.items.size(); ++i)
    if (a.items[i].second.values() != b.items[i].second.values()) resume_bitwise = false;
  if (resumed.model().lap.queries.items[0].second.values() !=
      full.model().lap.queries.items[0].second.values())
    resume_bitwise = false;
  std::remove(ckpt.c_str());

  // (c) command-level rerun, when the executable path was provided.
  bool cli_identical = true;
  std::string cli_note = "cli skipped";
  if (!cli_path.empty()) {
    const fs::path base = fs::temp_directory_path() / "jala_acceptance_cli";
    fs::remove_all(base);
    const std::string common =
        " --quiet --set world.lab_train_count=16 --set world.lab_eval_count=8"
        " --set world.wild_train_count=16 --set world.wild_eval_count=8"
        " --set world.episode_frames=30 --set tokenizer.epochs=2 --set train.total_steps=6"
        " --set train.batch_size=2 --set backbone.layers=2 --set backbone.align_layer=1"
        " --seed 99";
    for (const char* run : {"a", "b"}) {
      const std::string cmd = cli_path + " pretrain --out " + (base / run).string() + common;
      const int rc = std::system(cmd.c_str());
      if (rc != 0) cli_identical = false;
    }
    if (cli_identical) {
      for (const char* name : {"metrics.csv", "config.resolved.json"}) {
        std::ifstream fa(base / "a" / name), fb(base / "b" / name);
        std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        if (sa.empty() || sa != sb) cli_identical = false;
      }
      cli_note = cli_identical ? "cli rerun byte-identical" : "cli rerun differs";
    } else {
      cli_note = "cli run failed";
    }
    fs::remove_all(base);
  }

  verdict(11, "reproducibility (csv bytes, 10-step bitwise resume, cli rerun)",
          csv_identical && resume_bitwise && cli_identical,
          std::string("csv identical=") + (csv_identical ? "yes" : "no") + ", resume bitwise=" +
              (resume_bitwise ? "yes" : "no") + ", " + cli_note);
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli_path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") cli_path = argv[i + 1];

  const auto t0 = std::chrono::steady_clock::now();
  std::printf("building shared fixtures (world + tokenizer)...\n");
  World world(base_world());
  MotionTokenizer tok = train_base_tokenizer(world);
  std::printf("fixtures ready after %.1f s\n", wall_seconds(t0));

  criterion_gradient_oracles();
  criterion_ema_exactness();
  criterion_gradient_routing(world, tok);
  criterion_masking_statistics();
  criterion_grvq_oracle();
  criterion_flow_sampler();
  criterion_metric_oracles();

  std::unique_ptr<PretrainTrainer<float>> pretrained;
  criterion_pretraining_run(world, tok, pretrained);
  criterion_transfer(world, tok, pretrained.get());
  criterion_wild_scaling();
  criterion_reproducibility(world, tok, cli_path);

  std::printf("acceptance total: %.1f min, %d failure(s)\n", wall_seconds(t0) / 60.0, g_failures);
  return g_failures == 0 ? 0 : 1;
}
