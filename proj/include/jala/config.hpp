#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jala/backbone.hpp"
#include "jala/flow.hpp"
#include "jala/perceiver.hpp"
#include "jala/tokenizer.hpp"
#include "jala/train.hpp"
#include "jala/world.hpp"

namespace jala {

using Json = nlohmann::json;

struct EvalConfig {
  int episodes = 32;        // cap per split
  double step_fraction = 0.05;
  int decode_runs = 5;
  int projection_episodes = 8;
  std::string mde_mode = "displacement";  // or "angle"
  bool pa_with_scale = true;
};

struct SweepConfig {
  std::vector<double> fractions = {0.0, 0.25, 0.5, 1.0};
  int seeds = 3;
  double trend_tolerance = 0.05;  // allowed relative wobble between medians
};

// Whole-pipeline configuration. Every field appears in the JSON schema with
// its default; unknown keys and cross-field inconsistencies are rejected.
struct JalaConfig {
  WorldConfig world;
  TokenizerConfig tokenizer;
  BackboneConfig backbone;
  PerceiverConfig perceiver;
  FlowConfig flow;
  TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;
  std::string dtype = "f64";  // "f32" or "f64"

  void validate() const {
    world.validate();
    tokenizer.validate();
    backbone.validate();
    perceiver.validate();
    flow.validate();
    train.validate();
    check(dtype == "f32" || dtype == "f64", "config: dtype must be f32 or f64");
    check(world.chunk_len == tokenizer.chunk_len, "config: world and tokenizer chunk_len differ");
    check(world.finger_dims == tokenizer.finger_dims,
          "config: world and tokenizer finger_dims differ");
    check(perceiver.dim == backbone.model_dim, "config: perceiver.dim must equal backbone.model_dim");
    check(perceiver.kv_dim == world.obs_dim(),
          "config: perceiver.kv_dim must equal world obs_embed_dim + nuisance_dim");
    check(perceiver.latents == tokenizer.wrist_tokens + tokenizer.finger_tokens,
          "config: perceiver.latents must equal tokens per chunk");
    check(flow.h_dim == backbone.model_dim, "config: flow.h_dim must equal backbone.model_dim");
    check(flow.horizon == world.action_horizon && flow.action_dim == world.action_dim &&
              flow.proprio_dim == world.proprio_dim,
          "config: flow geometry must match the world action space");
    check(eval.episodes >= 1 && eval.decode_runs >= 1, "config: bad eval settings");
    check(eval.mde_mode == "displacement" || eval.mde_mode == "angle",
          "config: eval.mde_mode must be displacement or angle");
    for (double f : sweep.fractions)
      check(f >= 0.0 && f <= 1.0, "config: sweep fractions must lie in [0,1]");
    check(sweep.seeds >= 1, "config: sweep needs at least one seed");
  }
};

namespace detail_cfg {

inline Json world_json(const WorldConfig& w) {
  return Json{{"finger_dims", w.finger_dims},
              {"episode_frames", w.episode_frames},
              {"chunk_len", w.chunk_len},
              {"target_count", w.target_count},
              {"verb_count", w.verb_count},
              {"obs_embed_dim", w.obs_embed_dim},
              {"nuisance_dim", w.nuisance_dim},
              {"nuisance_scale_lab", w.nuisance_scale_lab},
              {"nuisance_scale_wild", w.nuisance_scale_wild},
              {"nuisance_dominance", w.nuisance_dominance},
              {"obs_noise", w.obs_noise},
              {"wild_time_scale", w.wild_time_scale},
              {"proprio_dim", w.proprio_dim},
              {"action_dim", w.action_dim},
              {"action_horizon", w.action_horizon},
              {"lab_train_count", w.lab_train_count},
              {"lab_eval_count", w.lab_eval_count},
              {"wild_train_count", w.wild_train_count},
              {"wild_eval_count", w.wild_eval_count},
              {"wild_labeled_fraction", w.wild_labeled_fraction},
              {"wild_eval_labeled_fraction", w.wild_eval_labeled_fraction},
              {"seed", w.seed}};
}

inline void world_from(const Json& j, WorldConfig& w) {
  j.at("finger_dims").get_to(w.finger_dims);
  j.at("episode_frames").get_to(w.episode_frames);
  j.at("chunk_len").get_to(w.chunk_len);
  j.at("target_count").get_to(w.target_count);
  j.at("verb_count").get_to(w.verb_count);
  j.at("obs_embed_dim").get_to(w.obs_embed_dim);
  j.at("nuisance_dim").get_to(w.nuisance_dim);
  j.at("nuisance_scale_lab").get_to(w.nuisance_scale_lab);
  j.at("nuisance_scale_wild").get_to(w.nuisance_scale_wild);
  j.at("nuisance_dominance").get_to(w.nuisance_dominance);
  j.at("obs_noise").get_to(w.obs_noise);
  j.at("wild_time_scale").get_to(w.wild_time_scale);
  j.at("proprio_dim").get_to(w.proprio_dim);
  j.at("action_dim").get_to(w.action_dim);
  j.at("action_horizon").get_to(w.action_horizon);
  j.at("lab_train_count").get_to(w.lab_train_count);
  j.at("lab_eval_count").get_to(w.lab_eval_count);
  j.at("wild_train_count").get_to(w.wild_train_count);
  j.at("wild_eval_count").get_to(w.wild_eval_count);
  j.at("wild_labeled_fraction").get_to(w.wild_labeled_fraction);
  j.at("wild_eval_labeled_fraction").get_to(w.wild_eval_labeled_fraction);
  j.at("seed").get_to(w.seed);
}

inline Json tokenizer_json(const TokenizerConfig& t) {
  return Json{{"chunk_len", t.chunk_len},
              {"finger_dims", t.finger_dims},
              {"wrist_tokens", t.wrist_tokens},
              {"finger_tokens", t.finger_tokens},
              {"groups", t.groups},
              {"levels", t.levels},
              {"entries", t.entries},
              {"code_dim", t.code_dim},
              {"hidden", t.hidden},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr", t.lr},
              {"commitment_weight", t.commitment_weight},
              {"codebook_decay", t.codebook_decay},
              {"recon_threshold", t.recon_threshold},
              {"seed", t.seed}};
}

inline void tokenizer_from(const Json& j, TokenizerConfig& t) {
  j.at("chunk_len").get_to(t.chunk_len);
  j.at("finger_dims").get_to(t.finger_dims);
  j.at("wrist_tokens").get_to(t.wrist_tokens);
  j.at("finger_tokens").get_to(t.finger_tokens);
  j.at("groups").get_to(t.groups);
  j.at("levels").get_to(t.levels);
  j.at("entries").get_to(t.entries);
  j.at("code_dim").get_to(t.code_dim);
  j.at("hidden").get_to(t.hidden);
  j.at("epochs").get_to(t.epochs);
  j.at("batch_size").get_to(t.batch_size);
  j.at("lr").get_to(t.lr);
  j.at("commitment_weight").get_to(t.commitment_weight);
  j.at("codebook_decay").get_to(t.codebook_decay);
  j.at("recon_threshold").get_to(t.recon_threshold);
  j.at("seed").get_to(t.seed);
}

inline Json backbone_json(const BackboneConfig& b) {
  return Json{{"layers", b.layers},          {"align_layer", b.align_layer},
              {"model_dim", b.model_dim},    {"heads", b.heads},
              {"max_positions", b.max_positions}, {"suffix_mask_rate", b.suffix_mask_rate}};
}

inline void backbone_from(const Json& j, BackboneConfig& b) {
  j.at("layers").get_to(b.layers);
  j.at("align_layer").get_to(b.align_layer);
  j.at("model_dim").get_to(b.model_dim);
  j.at("heads").get_to(b.heads);
  j.at("max_positions").get_to(b.max_positions);
  j.at("suffix_mask_rate").get_to(b.suffix_mask_rate);
}

inline Json perceiver_json(const PerceiverConfig& p) {
  return Json{{"layers", p.layers},   {"dim", p.dim},
              {"heads", p.heads},     {"kv_dim", p.kv_dim},
              {"latents", p.latents}, {"head_hidden", p.head_hidden}};
}

inline void perceiver_from(const Json& j, PerceiverConfig& p) {
  j.at("layers").get_to(p.layers);
  j.at("dim").get_to(p.dim);
  j.at("heads").get_to(p.heads);
  j.at("kv_dim").get_to(p.kv_dim);
  j.at("latents").get_to(p.latents);
  j.at("head_hidden").get_to(p.head_hidden);
}

inline Json flow_json(const FlowConfig& f) {
  return Json{{"denoise_steps", f.denoise_steps},
              {"depth", f.depth},
              {"dim", f.dim},
              {"heads", f.heads},
              {"horizon", f.horizon},
              {"action_dim", f.action_dim},
              {"proprio_dim", f.proprio_dim},
              {"h_dim", f.h_dim},
              {"target_noise_minus_data", f.target_noise_minus_data}};
}

inline void flow_from(const Json& j, FlowConfig& f) {
  j.at("denoise_steps").get_to(f.denoise_steps);
  j.at("depth").get_to(f.depth);
  j.at("dim").get_to(f.dim);
  j.at("heads").get_to(f.heads);
  j.at("horizon").get_to(f.horizon);
  j.at("action_dim").get_to(f.action_dim);
  j.at("proprio_dim").get_to(f.proprio_dim);
  j.at("h_dim").get_to(f.h_dim);
  j.at("target_noise_minus_data").get_to(f.target_noise_minus_data);
}

inline Json train_json(const TrainConfig& t) {
  return Json{{"base_lr", t.base_lr},
              {"post_lr", t.post_lr},
              {"weight_decay", t.weight_decay},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"warmup_frac", t.warmup_frac},
              {"clip_norm", t.clip_norm},
              {"lambda_align", t.lambda_align},
              {"ema_alpha", t.ema_alpha},
              {"batch_size", t.batch_size},
              {"labeled_ratio", t.labeled_ratio},
              {"unlabeled_ratio", t.unlabeled_ratio},
              {"total_steps", t.total_steps},
              {"wild_fraction", t.wild_fraction},
              {"decoupled_ema", t.decoupled_ema},
              {"apply_ema", t.apply_ema},
              {"seed", t.seed}};
}

inline void train_from(const Json& j, TrainConfig& t) {
  j.at("base_lr").get_to(t.base_lr);
  j.at("post_lr").get_to(t.post_lr);
  j.at("weight_decay").get_to(t.weight_decay);
  j.at("beta1").get_to(t.beta1);
  j.at("beta2").get_to(t.beta2);
  j.at("warmup_frac").get_to(t.warmup_frac);
  j.at("clip_norm").get_to(t.clip_norm);
  j.at("lambda_align").get_to(t.lambda_align);
  j.at("ema_alpha").get_to(t.ema_alpha);
  j.at("batch_size").get_to(t.batch_size);
  j.at("labeled_ratio").get_to(t.labeled_ratio);
  j.at("unlabeled_ratio").get_to(t.unlabeled_ratio);
  j.at("total_steps").get_to(t.total_steps);
  j.at("wild_fraction").get_to(t.wild_fraction);
  j.at("decoupled_ema").get_to(t.decoupled_ema);
  j.at("apply_ema").get_to(t.apply_ema);
  j.at("seed").get_to(t.seed);
}

inline Json eval_json(const EvalConfig& e) {
  return Json{{"episodes", e.episodes},
              {"step_fraction", e.step_fraction},
              {"decode_runs", e.decode_runs},
              {"projection_episodes", e.projection_episodes},
              {"mde_mode", e.mde_mode},
              {"pa_with_scale", e.pa_with_scale}};
}

inline void eval_from(const Json& j, EvalConfig& e) {
  j.at("episodes").get_to(e.episodes);
  j.at("step_fraction").get_to(e.step_fraction);
  j.at("decode_runs").get_to(e.decode_runs);
  j.at("projection_episodes").get_to(e.projection_episodes);
  j.at("mde_mode").get_to(e.mde_mode);
  j.at("pa_with_scale").get_to(e.pa_with_scale);
}

inline Json sweep_json(const SweepConfig& s) {
  return Json{{"fractions", s.fractions}, {"seeds", s.seeds},
              {"trend_tolerance", s.trend_tolerance}};
}

inline void sweep_from(const Json& j, SweepConfig& s) {
  j.at("fractions").get_to(s.fractions);
  j.at("seeds").get_to(s.seeds);
  j.at("trend_tolerance").get_to(s.trend_tolerance);
}

inline void check_known_keys(const Json& given, const Json& schema, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    check(schema.contains(it.key()), "config: unknown key '" + path + "'");
    if (it->is_object()) check_known_keys(*it, schema.at(it.key()), path);
  }
}

}  // namespace detail_cfg

inline Json to_json(const JalaConfig& c) {
  return Json{{"world", detail_cfg::world_json(c.world)},
              {"tokenizer", detail_cfg::tokenizer_json(c.tokenizer)},
              {"backbone", detail_cfg::backbone_json(c.backbone)},
              {"perceiver", detail_cfg::perceiver_json(c.perceiver)},
              {"flow", detail_cfg::flow_json(c.flow)},
              {"train", detail_cfg::train_json(c.train)},
              {"eval", detail_cfg::eval_json(c.eval)},
              {"sweep", detail_cfg::sweep_json(c.sweep)},
              {"dtype", c.dtype}};
}

// Partial JSON merged over defaults; unknown keys anywhere are an error.
inline JalaConfig config_from_json(const Json& given) {
  JalaConfig defaults;
  Json merged = to_json(defaults);
  detail_cfg::check_known_keys(given, merged, "");
  merged.merge_patch(given);
  JalaConfig c;
  detail_cfg::world_from(merged.at("world"), c.world);
  detail_cfg::tokenizer_from(merged.at("tokenizer"), c.tokenizer);
  detail_cfg::backbone_from(merged.at("backbone"), c.backbone);
  detail_cfg::perceiver_from(merged.at("perceiver"), c.perceiver);
  detail_cfg::flow_from(merged.at("flow"), c.flow);
  detail_cfg::train_from(merged.at("train"), c.train);
  detail_cfg::eval_from(merged.at("eval"), c.eval);
  detail_cfg::sweep_from(merged.at("sweep"), c.sweep);
  merged.at("dtype").get_to(c.dtype);
  c.validate();
  return c;
}

inline JalaConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), "config: cannot read " + path);
  Json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail("config: parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Dotted-key override, e.g. "train.base_lr=3e-4". The value is parsed as
// JSON when possible, otherwise taken as a string.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  check(eq != std::string::npos, "override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(path.substr(start));
      break;
    }
    parts.push_back(path.substr(start, dot - start));
    start = dot + 1;
  }
  Json* node = &j;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    check(node->contains(parts[i]), "override: unknown key '" + parts[i] + "' in " + path);
    node = &(*node)[parts[i]];
  }
  check(node->contains(parts.back()), "override: unknown key '" + parts.back() + "' in " + path);
  Json parsed = Json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // plain string
  (*node)[parts.back()] = parsed;
}

inline std::string config_hash(const JalaConfig& c) {
  return hex64(fnv1a64(to_json(c).dump()));
}

// Checkpoint-compatibility digest: the sections that fix parameter shapes and
// the data distribution. Training-schedule and evaluation settings may change
// between a checkpoint's producer and its consumer.
inline std::string model_hash(const JalaConfig& c) {
  Json j{{"world", detail_cfg::world_json(c.world)},
         {"tokenizer", detail_cfg::tokenizer_json(c.tokenizer)},
         {"backbone", detail_cfg::backbone_json(c.backbone)},
         {"perceiver", detail_cfg::perceiver_json(c.perceiver)},
         {"flow", detail_cfg::flow_json(c.flow)},
         {"dtype", c.dtype}};
  return hex64(fnv1a64(j.dump()));
}

}  // namespace jala
