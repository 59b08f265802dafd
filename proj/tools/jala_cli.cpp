// Command-line driver for the whole pipeline: data generation, tokenizer
// training, pretraining, post-training, evaluation, the wild-fraction sweep,
// the embedding projection and a quick self-test. Every command is
// config-file driven and reproducible from its seed; all artifacts land under
// the output directory, with wall-clock timings kept out of the CSVs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jala/config.hpp"
#include "jala/eval.hpp"
#include "jala/fdcheck.hpp"
#include "jala/train.hpp"

namespace fs = std::filesystem;
using namespace jala;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--out", args.out_dir, "output directory")->envname("JALA_OUT");
  cmd->add_option("--set", args.overrides, "dotted-key override, e.g. train.base_lr=1e-3")
      ->take_all();
  cmd->add_option("--seed", args.seed, "sets world.seed and train.seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
  cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

JalaConfig resolve_config(const CommonArgs& args) {
  Json j;
  if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    check(is.good(), "missing config: " + args.config_path);
    try {
      is >> j;
    } catch (const std::exception& e) {
      fail(std::string("config parse error: ") + e.what());
    }
  } else {
    j = Json::object();
  }
  JalaConfig defaults;
  Json merged = to_json(defaults);
  detail_cfg::check_known_keys(j, merged, "");
  merged.merge_patch(j);
  if (args.seed_given) {
    apply_override(merged, "world.seed=" + std::to_string(args.seed));
    apply_override(merged, "train.seed=" + std::to_string(args.seed));
  }
  for (const auto& o : args.overrides) apply_override(merged, o);
  return config_from_json(merged);
}

void write_resolved(const JalaConfig& cfg, const CommonArgs& args) {
  fs::create_directories(args.out_dir);
  std::ofstream os(fs::path(args.out_dir) / "config.resolved.json");
  check(os.good(), "cannot write resolved config under " + args.out_dir);
  os << to_json(cfg).dump(2) << "\n";
}

void note(const CommonArgs& args, const std::string& line) {
  if (!args.quiet) std::cout << line << "\n";
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  return (fs::path(args.out_dir) / name).string();
}

MotionTokenizer load_or_train_tokenizer(const JalaConfig& cfg, const World& world,
                                        const std::string& tokenizer_path,
                                        const CommonArgs& args) {
  if (!tokenizer_path.empty()) {
    note(args, "loading tokenizer from " + tokenizer_path);
    return MotionTokenizer::load_file(tokenizer_path);
  }
  note(args, "training tokenizer (no --tokenizer given)");
  MotionTokenizer tok = MotionTokenizer::init(cfg.tokenizer);
  auto splits = world.make_splits();
  std::vector<MotionChunk> chunks;
  for (int i = 0; i < splits.lab_train.count; ++i) {
    EpisodeSample ep = world.generate(splits.lab_train, i);
    for (auto& c : chunk_sequence(ep.poses, cfg.tokenizer.chunk_len)) chunks.push_back(std::move(c));
  }
  while (chunks.size() < 1000 && !chunks.empty()) chunks.push_back(chunks[chunks.size() % 97]);
  tok.train(chunks);
  return tok;
}

void write_metrics_files(const std::vector<StepMetrics>& rows, const CommonArgs& args,
                         const std::string& csv_name) {
  std::ofstream csv(out_path(args, csv_name));
  csv << metrics_csv_header() << "\n";
  std::ofstream timing(out_path(args, "timing.log"));
  for (const auto& m : rows) {
    csv << metrics_csv_row(m) << "\n";
    timing << m.step << " " << m.wall_ms << "\n";
  }
}

// ---- subcommand bodies (templated over the value type) ----

template <class T>
int run_pretrain(const JalaConfig& cfg, const CommonArgs& args, const std::string& tokenizer_path) {
  World world(cfg.world);
  MotionTokenizer tok = load_or_train_tokenizer(cfg, world, tokenizer_path, args);
  tok.save_file(out_path(args, "tokenizer.bin"));
  PretrainTrainer<T> trainer(world, tok, cfg.backbone, cfg.perceiver, cfg.train);
  std::vector<StepMetrics> rows;
  rows.reserve(static_cast<std::size_t>(cfg.train.total_steps));
  for (std::int64_t i = 0; i < cfg.train.total_steps; ++i) {
    rows.push_back(trainer.step());
    if (!args.quiet && (i + 1) % 100 == 0)
      std::printf("step %lld/%lld total=%.4f align=%.4f z_std=%.4f\n",
                  static_cast<long long>(i + 1), static_cast<long long>(cfg.train.total_steps),
                  rows.back().total, rows.back().align, rows.back().z_std);
  }
  write_metrics_files(rows, args, "metrics.csv");
  trainer.save_checkpoint(out_path(args, "checkpoint.bin"), model_hash(cfg));
  Json summary{{"config_hash", config_hash(cfg)},
               {"steps", cfg.train.total_steps},
               {"final_total", rows.back().total},
               {"final_align", rows.back().align},
               {"final_z_std", rows.back().z_std}};
  std::ofstream(out_path(args, "summary.json")) << summary.dump(2) << "\n";
  return 0;
}

template <class T>
std::unique_ptr<PretrainModel<T>> model_for_eval(const JalaConfig& cfg, const World& world,
                                                 const MotionTokenizer& tok,
                                                 const std::string& checkpoint,
                                                 const CommonArgs& args) {
  auto model = std::make_unique<PretrainModel<T>>(
      init_pretrain_model<T>(world, tok, cfg.backbone, cfg.perceiver, cfg.train.seed));
  if (!checkpoint.empty()) {
    CheckpointInfo info = load_model_from_checkpoint(checkpoint, model_hash(cfg), *model);
    note(args, "loaded checkpoint at step " + std::to_string(info.step));
  } else {
    note(args, "no checkpoint given; evaluating a freshly initialized model");
  }
  return model;
}

template <class T>
int run_eval(const JalaConfig& cfg, const CommonArgs& args, const std::string& tokenizer_path,
             const std::string& checkpoint, const std::string& split_name) {
  World world(cfg.world);
  MotionTokenizer tok = load_or_train_tokenizer(cfg, world, tokenizer_path, args);
  auto model = model_for_eval<T>(cfg, world, tok, checkpoint, args);
  auto splits = world.make_splits();
  std::vector<SplitHandle> targets;
  if (split_name == "lab_eval" || split_name == "both") targets.push_back(splits.lab_eval);
  if (split_name == "wild_eval" || split_name == "both") targets.push_back(splits.wild_eval);
  check(!targets.empty(), "eval: unknown split " + split_name);
  for (const auto& handle : targets) {
    auto decoder = model_decoder(*model, cfg.eval.step_fraction, cfg.eval.decode_runs,
                                 cfg.train.seed);
    MetricReport rep =
        eval_motion_generation(*model, world, tok, handle, decoder, cfg.eval.episodes);
    rep.config_hash = config_hash(cfg);
    rep.checkpoint_id = checkpoint.empty() ? "fresh" : checkpoint;
    std::ofstream csv(out_path(args, "report_" + handle.name + ".csv"));
    csv << metric_report_csv_header() << "\n" << metric_report_csv_row(rep) << "\n";
    Json j{{"split", rep.split},
           {"evaluated", rep.evaluated},
           {"skipped_unlabeled", rep.skipped_unlabeled},
           {"mpjpe", rep.mpjpe},
           {"pa_mpjpe", rep.pa_mpjpe},
           {"mwte", rep.mwte},
           {"mde", rep.mde},
           {"config_hash", rep.config_hash},
           {"checkpoint_id", rep.checkpoint_id}};
    std::ofstream(out_path(args, "report_" + handle.name + ".json")) << j.dump(2) << "\n";
    note(args, handle.name + ": mpjpe=" + std::to_string(rep.mpjpe));
  }
  return 0;
}

template <class T>
int run_posttrain(const JalaConfig& cfg, const CommonArgs& args, const std::string& tokenizer_path,
                  const std::string& checkpoint) {
  World world(cfg.world);
  MotionTokenizer tok = load_or_train_tokenizer(cfg, world, tokenizer_path, args);
  auto model = model_for_eval<T>(cfg, world, tok, checkpoint, args);
  PosttrainTrainer<T> trainer(world, tok, std::move(model), cfg.flow, cfg.train);
  std::vector<StepMetrics> rows;
  for (std::int64_t i = 0; i < cfg.train.total_steps; ++i) {
    rows.push_back(trainer.step());
    if (!args.quiet && (i + 1) % 100 == 0)
      std::printf("step %lld/%lld fm=%.5f\n", static_cast<long long>(i + 1),
                  static_cast<long long>(cfg.train.total_steps), rows.back().total);
  }
  write_metrics_files(rows, args, "post_metrics.csv");
  trainer.save_checkpoint(out_path(args, "post_checkpoint.bin"), model_hash(cfg));
  const double mse = trainer.eval_action_mse(cfg.eval.episodes, cfg.train.seed + 1);
  Json summary{{"config_hash", config_hash(cfg)},
               {"steps", cfg.train.total_steps},
               {"final_fm_loss", rows.back().total},
               {"eval_action_mse", mse},
               {"warm_start", !checkpoint.empty()}};
  std::ofstream(out_path(args, "post_summary.json")) << summary.dump(2) << "\n";
  note(args, "held-out action mse: " + std::to_string(mse));
  return 0;
}

template <class T>
int run_sweep(const JalaConfig& cfg, const CommonArgs& args, const std::string& tokenizer_path) {
  World world(cfg.world);
  MotionTokenizer tok = load_or_train_tokenizer(cfg, world, tokenizer_path, args);
  Json summary = Json::array();
  std::vector<double> medians;
  for (double fraction : cfg.sweep.fractions) {
    std::vector<double> mpjpes;
    Json per_seed = Json::array();
    char csv_name[64];
    std::snprintf(csv_name, sizeof(csv_name), "sweep_wild%03d.csv",
                  static_cast<int>(std::lround(fraction * 100)));
    std::ofstream csv(out_path(args, csv_name));
    csv << "seed," << metric_report_csv_header() << "\n";
    for (int s = 0; s < cfg.sweep.seeds; ++s) {
      JalaConfig run_cfg = cfg;
      run_cfg.train.wild_fraction = fraction;
      run_cfg.train.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
      PretrainTrainer<T> trainer(world, tok, run_cfg.backbone, run_cfg.perceiver, run_cfg.train);
      trainer.run(run_cfg.train.total_steps);
      auto decoder = model_decoder(trainer.model(), cfg.eval.step_fraction, cfg.eval.decode_runs,
                                   run_cfg.train.seed);
      MetricReport rep = eval_motion_generation(trainer.model(), world, tok,
                                                world.make_splits().wild_eval, decoder,
                                                cfg.eval.episodes);
      rep.config_hash = config_hash(cfg);
      rep.checkpoint_id = "sweep";
      csv << s << "," << metric_report_csv_row(rep) << "\n";
      per_seed.push_back(rep.mpjpe);
      mpjpes.push_back(rep.mpjpe);
      note(args, "fraction " + std::to_string(fraction) + " seed " + std::to_string(s) +
                     " wild mpjpe " + std::to_string(rep.mpjpe));
    }
    std::sort(mpjpes.begin(), mpjpes.end());
    const double median = mpjpes[mpjpes.size() / 2];
    medians.push_back(median);
    summary.push_back(Json{{"wild_fraction", fraction},
                           {"wild_mpjpe_per_seed", per_seed},
                           {"wild_mpjpe_median", median}});
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i)
    if (medians[i] > medians[i - 1] * (1.0 + cfg.sweep.trend_tolerance)) monotone = false;
  Json out{{"config_hash", config_hash(cfg)},
           {"points", summary},
           {"monotone_non_increasing", monotone},
           {"trend_tolerance", cfg.sweep.trend_tolerance}};
  std::ofstream(out_path(args, "sweep_summary.json")) << out.dump(2) << "\n";
  note(args, std::string("wild-scaling trend monotone: ") + (monotone ? "yes" : "no"));
  return 0;
}

template <class T>
int run_project(const JalaConfig& cfg, const CommonArgs& args, const std::string& tokenizer_path,
                const std::string& checkpoint) {
  World world(cfg.world);
  MotionTokenizer tok = load_or_train_tokenizer(cfg, world, tokenizer_path, args);
  auto model = model_for_eval<T>(cfg, world, tok, checkpoint, args);
  auto splits = world.make_splits();
  std::vector<EmbeddingSample> samples =
      collect_embeddings(*model, world, tok, splits.lab_eval, cfg.eval.projection_episodes);
  auto wild = collect_embeddings(*model, world, tok, splits.wild_eval, cfg.eval.projection_episodes);
  samples.insert(samples.end(), wild.begin(), wild.end());
  ProjectionResult pr = project_embeddings(samples);
  std::ofstream csv(out_path(args, "projection.csv"));
  csv << "x,y,source,split\n";
  for (const auto& r : pr.rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%c,%s", r.x, r.y, r.source, r.split.c_str());
    csv << buf << "\n";
  }
  Json j{{"config_hash", config_hash(cfg)},
         {"components", pr.components},
         {"rank_deficient", pr.rank_deficient},
         {"explained_fraction", pr.explained_fraction},
         {"mean_l1_h_z", pr.mean_l1},
         {"rows", pr.rows.size()}};
  std::ofstream(out_path(args, "projection_summary.json")) << j.dump(2) << "\n";
  return 0;
}

int run_gen_data(const JalaConfig& cfg, const CommonArgs& args) {
  World world(cfg.world);
  auto splits = world.make_splits();
  Json manifest{{"config_hash", config_hash(cfg)},
                {"obs_dim", cfg.world.obs_dim()},
                {"finger_dims", cfg.world.finger_dims},
                {"splits", Json::object()}};
  for (const SplitHandle* handle :
       {&splits.lab_train, &splits.lab_eval, &splits.wild_train, &splits.wild_eval}) {
    std::vector<EpisodeSample> eps;
    eps.reserve(static_cast<std::size_t>(handle->count));
    for (int i = 0; i < handle->count; ++i) eps.push_back(world.generate(*handle, i));
    auto os = io::open_out(out_path(args, "episodes_" + handle->name + ".bin"));
    save_episodes(os, eps, cfg.world.finger_dims);
    int labeled = 0;
    for (const auto& e : eps) labeled += e.labeled ? 1 : 0;
    manifest["splits"][handle->name] = Json{{"count", handle->count},
                                            {"seed_base", handle->base},
                                            {"labeled", labeled},
                                            {"labeled_fraction", handle->labeled_fraction}};
    note(args, handle->name + ": " + std::to_string(handle->count) + " episodes (" +
                   std::to_string(labeled) + " labeled)");
  }
  std::ofstream(out_path(args, "manifest.json")) << manifest.dump(2) << "\n";
  return 0;
}

int run_train_tokenizer(const JalaConfig& cfg, const CommonArgs& args) {
  World world(cfg.world);
  MotionTokenizer tok = MotionTokenizer::init(cfg.tokenizer);
  auto splits = world.make_splits();
  std::vector<MotionChunk> chunks;
  for (int i = 0; i < splits.lab_train.count; ++i) {
    EpisodeSample ep = world.generate(splits.lab_train, i);
    for (auto& c : chunk_sequence(ep.poses, cfg.tokenizer.chunk_len)) chunks.push_back(std::move(c));
  }
  while (chunks.size() < 1000 && !chunks.empty()) chunks.push_back(chunks[chunks.size() % 97]);
  TokenizerTrainStats stats = tok.train(chunks);
  tok.save_file(out_path(args, "tokenizer.bin"));
  Json j{{"config_hash", config_hash(cfg)},
         {"train_mse", stats.train_mse_per_epoch},
         {"val_mse", stats.val_mse_per_epoch},
         {"wrist_utilization", stats.wrist_utilization.per_level},
         {"finger_utilization", stats.finger_utilization.per_level},
         {"warnings", stats.warnings}};
  std::ofstream(out_path(args, "tokenizer_stats.json")) << j.dump(2) << "\n";
  for (const auto& w : stats.warnings) note(args, "warning: " + w);
  note(args, "validation mse: " + std::to_string(stats.val_mse_per_epoch.back()));
  return 0;
}

int run_selftest(const CommonArgs& args) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "[ok] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  {
    Rng rng(1);
    Tensor<double> x = Tensor<double>::randn({5, 9}, rng, 2.0, false);
    Tensor<double> p = softmax_rows(x);
    bool ok = true;
    for (int i = 0; i < 5; ++i) {
      double sum = 0;
      for (int j = 0; j < 9; ++j) {
        sum += p.values()[i * 9 + j];
        ok = ok && p.values()[i * 9 + j] >= 0;
      }
      ok = ok && std::abs(sum - 1.0) < 1e-6;
    }
    report("softmax rows are normalized", ok);
  }
  {
    Rng rng(2);
    Tensor<double> x = Tensor<double>::randn({4, 16}, rng, 1.5, false);
    Tensor<double> g = Tensor<double>::filled({16}, 1.0);
    Tensor<double> b = Tensor<double>::zeros({16});
    Tensor<double> y = layer_norm_rows(x, g, b);
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      double mean = 0, var = 0;
      for (int j = 0; j < 16; ++j) mean += y.values()[i * 16 + j];
      mean /= 16;
      for (int j = 0; j < 16; ++j) {
        const double d = y.values()[i * 16 + j] - mean;
        var += d * d;
      }
      var /= 16;
      ok = ok && std::abs(mean) < 1e-5 && std::abs(var - 1.0) < 1e-4;
    }
    report("layer norm standardizes each row", ok);
  }
  {
    Rng rng(3);
    Codebook cb = Codebook::init(MotionPart::wrist, 2, 2, 12, 8, rng);
    bool ok = true;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> v(8);
      for (auto& x : v) x = rng.normal() * 0.4;
      auto got = grvq_quantize(v, cb);
      // Exhaustive greedy oracle inline.
      std::vector<int> expect;
      for (int g = 0; g < 2; ++g) {
        std::vector<double> r(v.begin() + g * 4, v.begin() + (g + 1) * 4);
        for (int l = 0; l < 2; ++l) {
          int best = -1;
          double bd = 0;
          for (int e = 0; e < 12; ++e) {
            double d2 = 0;
            for (int d = 0; d < 4; ++d) {
              const double diff = r[d] - cb.entry(g, l, e)[d];
              d2 += diff * diff;
            }
            if (best < 0 || d2 < bd) {
              best = e;
              bd = d2;
            }
          }
          expect.push_back(best);
          for (int d = 0; d < 4; ++d) r[d] -= cb.entry(g, l, best)[d];
        }
      }
      ok = ok && got.indices == expect;
    }
    report("grouped residual quantizer matches exhaustive search", ok);
  }
  {
    double x = 1.0;
    for (int i = 0; i < 1000; ++i) x = 0.999 * x + 0.001 * 0.0;
    const bool ok = std::abs(x - std::pow(0.999, 1000)) < 1e-9 && std::abs(x - 0.3677) < 1e-3;
    report("ema geometric decay reaches 0.999^1000", ok);
  }
  {
    bool ok = true;
    for (int steps : {1, 2, 4, 16}) {
      FlowConfig fc;
      fc.denoise_steps = steps;
      fc.horizon = 2;
      fc.action_dim = 3;
      std::vector<double> target = {0.3, -0.7, 1.1, 0.0, 0.5, -0.2};
      FlowHead<double>::Field field = [&](const std::vector<double>& a, double tau) {
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = (a[i] - target[i]) / (1.0 - tau);
        return v;
      };
      Rng sr(7);
      const auto sampled = FlowHead<double>::sample_actions(field, fc, sr);
      for (std::size_t i = 0; i < sampled.size(); ++i)
        ok = ok && std::abs(sampled[i] - target[i]) < 1e-5;
    }
    report("euler sampler is exact under the analytic field", ok);
  }
  {
    Rng rng(8);
    PoseFrame f;
    f.wrist_translation = {rng.normal(), rng.normal(), rng.normal()};
    f.wrist_rotation = {0.1, -0.2, 0.3};
    f.finger_joints = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<PoseFrame> seq = {f, f};
    bool ok = mpjpe(seq, seq) == 0.0 && mwte(seq, seq) == 0.0 && mde(seq, seq) == 0.0;
    std::vector<PoseFrame> moved = seq;
    for (auto& p : moved) p.wrist_translation = p.wrist_translation + Vec3{0.4, 0, 0};
    ok = ok && pa_mpjpe(moved, seq) < 1e-8 && std::abs(mpjpe(moved, seq) - 0.4) < 1e-12;
    report("motion metrics pass their identities", ok);
  }
  {
    Rng a(11), b(11);
    bool ok = true;
    for (int i = 0; i < 64; ++i) ok = ok && a.next_u64() == b.next_u64();
    Rng c = Rng(11).substream("x");
    Rng d = Rng(11).substream("y");
    ok = ok && c.next_u64() != d.next_u64();
    report("seeded rng streams are reproducible and splittable", ok);
  }
  if (failures > 0) {
    std::cerr << "error: selftest failed " << failures << " checks\n";
    return 1;
  }
  (void)args;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint-aligned latent action pretraining on a synthetic manipulation world"};
  app.require_subcommand(1);

  CommonArgs gen_args, tok_args, pre_args, post_args, eval_args, sweep_args, proj_args, self_args;
  std::string pre_tokenizer, post_tokenizer, eval_tokenizer, sweep_tokenizer, proj_tokenizer;
  std::string post_checkpoint, eval_checkpoint, proj_checkpoint;
  std::string eval_split = "both";

  CLI::App* gen = app.add_subcommand("gen-data", "generate episode datasets");
  add_common(gen, gen_args);
  CLI::App* toktrain = app.add_subcommand("train-tokenizer", "train the motion tokenizer");
  add_common(toktrain, tok_args);
  CLI::App* pre = app.add_subcommand("pretrain", "run hybrid pretraining");
  add_common(pre, pre_args);
  pre->add_option("--tokenizer", pre_tokenizer, "tokenizer checkpoint to reuse");
  CLI::App* post = app.add_subcommand("posttrain", "train the flow head on robot actions");
  add_common(post, post_args);
  post->add_option("--tokenizer", post_tokenizer, "tokenizer checkpoint to reuse");
  post->add_option("--checkpoint", post_checkpoint, "pretraining checkpoint to warm start from");
  CLI::App* evalc = app.add_subcommand("eval", "motion-generation metrics on the eval splits");
  add_common(evalc, eval_args);
  evalc->add_option("--tokenizer", eval_tokenizer, "tokenizer checkpoint to reuse");
  evalc->add_option("--checkpoint", eval_checkpoint, "pretraining checkpoint to evaluate");
  evalc->add_option("--split", eval_split, "lab_eval, wild_eval or both");
  CLI::App* sweep = app.add_subcommand("sweep", "wild-data fraction scaling sweep");
  add_common(sweep, sweep_args);
  sweep->add_option("--tokenizer", sweep_tokenizer, "tokenizer checkpoint to reuse");
  CLI::App* proj = app.add_subcommand("project", "2d projection of embeddings and latents");
  add_common(proj, proj_args);
  proj->add_option("--tokenizer", proj_tokenizer, "tokenizer checkpoint to reuse");
  proj->add_option("--checkpoint", proj_checkpoint, "pretraining checkpoint to project");
  CLI::App* self = app.add_subcommand("selftest", "run the built-in invariant battery");
  add_common(self, self_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      JalaConfig cfg = resolve_config(gen_args);
      write_resolved(cfg, gen_args);
      return run_gen_data(cfg, gen_args);
    }
    if (toktrain->parsed()) {
      JalaConfig cfg = resolve_config(tok_args);
      write_resolved(cfg, tok_args);
      return run_train_tokenizer(cfg, tok_args);
    }
    if (pre->parsed()) {
      JalaConfig cfg = resolve_config(pre_args);
      write_resolved(cfg, pre_args);
      return cfg.dtype == "f32" ? run_pretrain<float>(cfg, pre_args, pre_tokenizer)
                                : run_pretrain<double>(cfg, pre_args, pre_tokenizer);
    }
    if (post->parsed()) {
      JalaConfig cfg = resolve_config(post_args);
      write_resolved(cfg, post_args);
      return cfg.dtype == "f32" ? run_posttrain<float>(cfg, post_args, post_tokenizer, post_checkpoint)
                                : run_posttrain<double>(cfg, post_args, post_tokenizer, post_checkpoint);
    }
    if (evalc->parsed()) {
      JalaConfig cfg = resolve_config(eval_args);
      write_resolved(cfg, eval_args);
      return cfg.dtype == "f32"
                 ? run_eval<float>(cfg, eval_args, eval_tokenizer, eval_checkpoint, eval_split)
                 : run_eval<double>(cfg, eval_args, eval_tokenizer, eval_checkpoint, eval_split);
    }
    if (sweep->parsed()) {
      JalaConfig cfg = resolve_config(sweep_args);
      write_resolved(cfg, sweep_args);
      return cfg.dtype == "f32" ? run_sweep<float>(cfg, sweep_args, sweep_tokenizer)
                                : run_sweep<double>(cfg, sweep_args, sweep_tokenizer);
    }
    if (proj->parsed()) {
      JalaConfig cfg = resolve_config(proj_args);
      write_resolved(cfg, proj_args);
      return cfg.dtype == "f32" ? run_project<float>(cfg, proj_args, proj_tokenizer, proj_checkpoint)
                                : run_project<double>(cfg, proj_args, proj_tokenizer, proj_checkpoint);
    }
    if (self->parsed()) return run_selftest(self_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
