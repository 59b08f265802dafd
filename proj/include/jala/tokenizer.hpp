#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "jala/grvq.hpp"
#include "jala/motion.hpp"
#include "jala/optim.hpp"
#include "jala/ops.hpp"
#include "jala/params.hpp"
#include "jala/serialize.hpp"

namespace jala {

struct TokenizerConfig {
  int chunk_len = 15;
  int finger_dims = 5;
  int wrist_tokens = 8;   // ids emitted per chunk for the wrist stream
  int finger_tokens = 8;  // ids emitted per chunk for the finger stream
  int groups = 1;
  int levels = 1;
  int entries = 64;  // codebook entries per level
  int code_dim = 16;
  int hidden = 32;
  int epochs = 12;
  int batch_size = 32;
  double lr = 3e-3;
  double commitment_weight = 0.25;
  double codebook_decay = 0.99;
  double recon_threshold = 0.05;  // validation MPJPE gate, world units
  std::uint64_t seed = 1;

  int wrist_slots() const { return wrist_tokens / (groups * levels); }
  int finger_slots() const { return finger_tokens / (groups * levels); }

  void validate() const {
    check(chunk_len > 0 && finger_dims > 0, "tokenizer config: bad dims");
    check(wrist_tokens % (groups * levels) == 0 && finger_tokens % (groups * levels) == 0,
          "tokenizer config: tokens per part must be divisible by groups*levels");
    check(wrist_slots() > 0 && finger_slots() > 0, "tokenizer config: zero slots");
  }
};

// Ids for one chunk: wrist stream then finger stream, each a fixed-length run
// of codebook indices in [0, entries).
struct TokenChunk {
  std::vector<int> wrist_ids;
  std::vector<int> finger_ids;
  HandSide hand_side = HandSide::right;

  bool operator==(const TokenChunk& o) const {
    return wrist_ids == o.wrist_ids && finger_ids == o.finger_ids && hand_side == o.hand_side;
  }
};

namespace detail_tok {

// Temporal conv block: kernel-3 convolution over frames followed by a
// pointwise mix, both with tanh.
struct ConvBlock {
  Tensor<double> w_conv, b_conv;  // [3*in, out]
  Tensor<double> w_mix, b_mix;    // [out, out]

  static ConvBlock init(int in, int out, Rng& rng, ParamSet<double>& params,
                        const std::string& prefix) {
    ConvBlock b;
    const double s1 = 1.0 / std::sqrt(3.0 * in);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(out));
    b.w_conv = params.add(prefix + ".w_conv", Tensor<double>::randn({3 * in, out}, rng, s1));
    b.b_conv = params.add(prefix + ".b_conv", Tensor<double>::zeros({out}, true));
    b.w_mix = params.add(prefix + ".w_mix", Tensor<double>::randn({out, out}, rng, s2));
    b.b_mix = params.add(prefix + ".b_mix", Tensor<double>::zeros({out}, true));
    return b;
  }

  Tensor<double> forward(const Tensor<double>& x) const {
    const int t = x.rows();
    // Zero-padded shift stack: row t sees frames t-1, t, t+1.
    Tensor<double> pad = Tensor<double>::zeros({1, x.cols()});
    Tensor<double> xp = concat_rows<double>({pad, x, pad});
    std::vector<int> left(t), center(t), right(t);
    for (int i = 0; i < t; ++i) {
      left[i] = i;
      center[i] = i + 1;
      right[i] = i + 2;
    }
    Tensor<double> unfolded = concat_cols<double>(
        {gather_rows(xp, left), gather_rows(xp, center), gather_rows(xp, right)});
    Tensor<double> h = tanh_t(linear(unfolded, w_conv, b_conv));
    return tanh_t(linear(h, w_mix, b_mix));
  }
};

// Frames -> slots encoder and slots -> frames decoder for one motion part.
struct PartCodec {
  int in_dim = 0, slots = 0;
  ConvBlock enc1, enc2;
  Tensor<double> resample;    // [slots, chunk_len]
  Tensor<double> to_code_w, to_code_b;
  Tensor<double> from_code_w, from_code_b;
  Tensor<double> upsample;    // [chunk_len, slots]
  ConvBlock dec1, dec2;
  Tensor<double> out_w, out_b;

  static PartCodec init(int in_dim, int chunk_len, int slots, int hidden, int code_dim, Rng& rng,
                        ParamSet<double>& params, const std::string& prefix) {
    PartCodec c;
    c.in_dim = in_dim;
    c.slots = slots;
    c.enc1 = ConvBlock::init(in_dim, hidden, rng, params, prefix + ".enc1");
    c.enc2 = ConvBlock::init(hidden, hidden, rng, params, prefix + ".enc2");
    c.resample = params.add(prefix + ".resample",
                            Tensor<double>::randn({slots, chunk_len}, rng, 1.0 / chunk_len));
    const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    const double sc = 1.0 / std::sqrt(static_cast<double>(code_dim));
    c.to_code_w = params.add(prefix + ".to_code_w", Tensor<double>::randn({hidden, code_dim}, rng, sh));
    c.to_code_b = params.add(prefix + ".to_code_b", Tensor<double>::zeros({code_dim}, true));
    c.from_code_w = params.add(prefix + ".from_code_w", Tensor<double>::randn({code_dim, hidden}, rng, sc));
    c.from_code_b = params.add(prefix + ".from_code_b", Tensor<double>::zeros({hidden}, true));
    c.upsample = params.add(prefix + ".upsample",
                            Tensor<double>::randn({chunk_len, slots}, rng, 1.0 / slots));
    c.dec1 = ConvBlock::init(hidden, hidden, rng, params, prefix + ".dec1");
    c.dec2 = ConvBlock::init(hidden, hidden, rng, params, prefix + ".dec2");
    c.out_w = params.add(prefix + ".out_w", Tensor<double>::randn({hidden, in_dim}, rng, sh));
    c.out_b = params.add(prefix + ".out_b", Tensor<double>::zeros({in_dim}, true));
    return c;
  }

  // [chunk_len, in_dim] -> [slots, code_dim]
  Tensor<double> encode(const Tensor<double>& frames) const {
    Tensor<double> h = enc2.forward(enc1.forward(frames));
    Tensor<double> s = matmul(resample, h);
    return linear(s, to_code_w, to_code_b);
  }

  // [slots, code_dim] -> [chunk_len, in_dim]
  Tensor<double> decode(const Tensor<double>& codes) const {
    Tensor<double> h = linear(codes, from_code_w, from_code_b);
    Tensor<double> up = matmul(upsample, h);
    return linear(dec2.forward(dec1.forward(up)), out_w, out_b);
  }
};

}  // namespace detail_tok

struct TokenizerTrainStats {
  std::vector<double> train_mse_per_epoch;
  std::vector<double> val_mse_per_epoch;
  UtilizationReport wrist_utilization;
  UtilizationReport finger_utilization;
  std::vector<std::string> warnings;
  double val_mpjpe = 0.0;
};

// Learned chunk tokenizer: a temporal encoder maps each part's frames to
// latent slots, every slot is quantized by the grouped residual quantizer,
// and a mirrored decoder reconstructs frames from the selected codewords.
// Both hands share the same part encoders; handedness travels as a tag.
class MotionTokenizer {
 public:
  MotionTokenizer() = default;

  static MotionTokenizer init(const TokenizerConfig& cfg) {
    cfg.validate();
    MotionTokenizer t;
    t.cfg_ = cfg;
    Rng rng(cfg.seed);
    Rng winit = rng.substream("wrist_init");
    Rng finit = rng.substream("finger_init");
    Rng cbinit = rng.substream("codebooks");
    t.wrist_ = detail_tok::PartCodec::init(6, cfg.chunk_len, cfg.wrist_slots(), cfg.hidden,
                                           cfg.code_dim, winit, t.params_, "wrist");
    t.finger_ = detail_tok::PartCodec::init(cfg.finger_dims, cfg.chunk_len, cfg.finger_slots(),
                                            cfg.hidden, cfg.code_dim, finit, t.params_, "finger");
    t.wrist_book_ = Codebook::init(MotionPart::wrist, cfg.groups, cfg.levels, cfg.entries,
                                   cfg.code_dim, cbinit);
    t.finger_book_ = Codebook::init(MotionPart::finger, cfg.groups, cfg.levels, cfg.entries,
                                    cfg.code_dim, cbinit);
    return t;
  }

  const TokenizerConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }
  const Codebook& wrist_codebook() const { return wrist_book_; }
  const Codebook& finger_codebook() const { return finger_book_; }
  ParamSet<double>& params() { return params_; }

  TokenChunk tokenize(const MotionChunk& chunk) const {
    check(trained_, "tokenize: tokenizer has not been trained");
    check(static_cast<int>(chunk.frames.size()) == cfg_.chunk_len, "tokenize: wrong chunk length");
    TokenChunk out;
    out.hand_side = chunk.hand_side;
    out.wrist_ids = quantize_part(wrist_, wrist_book_, frames_tensor(chunk, MotionPart::wrist)).first;
    out.finger_ids = quantize_part(finger_, finger_book_, frames_tensor(chunk, MotionPart::finger)).first;
    return out;
  }

  MotionChunk detokenize(const TokenChunk& tokens) const {
    check(trained_, "detokenize: tokenizer has not been trained");
    check(static_cast<int>(tokens.wrist_ids.size()) == cfg_.wrist_tokens &&
              static_cast<int>(tokens.finger_ids.size()) == cfg_.finger_tokens,
          "detokenize: wrong id count");
    Tensor<double> wrist_frames = wrist_.decode(codes_from_ids(wrist_book_, tokens.wrist_ids,
                                                               cfg_.wrist_slots()));
    Tensor<double> finger_frames = finger_.decode(codes_from_ids(finger_book_, tokens.finger_ids,
                                                                 cfg_.finger_slots()));
    MotionChunk chunk;
    chunk.hand_side = tokens.hand_side;
    chunk.frames.resize(static_cast<std::size_t>(cfg_.chunk_len));
    for (int t = 0; t < cfg_.chunk_len; ++t) {
      auto& f = chunk.frames[static_cast<std::size_t>(t)];
      for (int d = 0; d < 3; ++d) {
        f.wrist_translation[static_cast<std::size_t>(d)] = wrist_frames.values()[t * 6 + d];
        f.wrist_rotation[static_cast<std::size_t>(d)] = wrist_frames.values()[t * 6 + 3 + d];
      }
      f.canonicalize();
      f.finger_joints.resize(static_cast<std::size_t>(cfg_.finger_dims));
      for (int d = 0; d < cfg_.finger_dims; ++d)
        f.finger_joints[static_cast<std::size_t>(d)] =
            finger_frames.values()[t * cfg_.finger_dims + d];
    }
    return chunk;
  }

  TokenizerTrainStats train(const std::vector<MotionChunk>& chunks) {
    check(chunks.size() >= 1000, "train_tokenizer: need at least 1000 chunks");
    TokenizerTrainStats stats;
    Rng rng = Rng(cfg_.seed).substream("train");
    // Hold out a validation tail, fixed split.
    const std::size_t val_count = std::max<std::size_t>(32, chunks.size() / 10);
    const std::size_t train_count = chunks.size() - val_count;

    AdamW<double> opt(0.9, 0.99, 0.0);
    opt.attach(params_);
    CodebookTrainer wrist_tr, finger_tr;
    wrist_tr.decay = cfg_.codebook_decay;
    finger_tr.decay = cfg_.codebook_decay;
    wrist_tr.init(wrist_book_);
    finger_tr.init(finger_book_);
    std::vector<int> wrist_dead_epochs(wrist_tr.ema_count.size(), 0);
    std::vector<int> finger_dead_epochs(finger_tr.ema_count.size(), 0);

    std::vector<std::size_t> order(train_count);
    for (std::size_t i = 0; i < train_count; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      // Fisher-Yates with the seeded stream.
      for (std::size_t i = train_count - 1; i > 0; --i) {
        const std::size_t j = rng.below(i + 1);
        std::swap(order[i], order[j]);
      }
      wrist_tr.reset_epoch_hits();
      finger_tr.reset_epoch_hits();
      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start + 1 <= train_count; start += cfg_.batch_size) {
        const std::size_t end = std::min(train_count, start + cfg_.batch_size);
        params_.zero_grads();
        std::vector<Tensor<double>> losses;
        std::vector<bool> wrist_seen(wrist_tr.ema_count.size(), false);
        std::vector<bool> finger_seen(finger_tr.ema_count.size(), false);
        for (std::size_t bi = start; bi < end; ++bi) {
          const MotionChunk& c = chunks[order[bi]];
          losses.push_back(chunk_loss(c, &wrist_tr, &finger_tr, &wrist_seen, &finger_seen));
        }
        Tensor<double> batch_loss = scale(add_all(losses), 1.0 / static_cast<double>(losses.size()));
        batch_loss.backward();
        opt.step(params_, cfg_.lr);
        wrist_tr.decay_unseen(wrist_book_, wrist_seen);
        finger_tr.decay_unseen(finger_book_, finger_seen);
        wrist_tr.apply(wrist_book_);
        finger_tr.apply(finger_book_);
        epoch_loss += batch_loss.item();
        ++batches;
      }
      stats.train_mse_per_epoch.push_back(epoch_loss / static_cast<double>(batches));
      stats.val_mse_per_epoch.push_back(validation_mse(chunks, train_count));
      revive_dead_codes(wrist_book_, wrist_tr, wrist_dead_epochs, chunks, rng);
      revive_dead_codes(finger_book_, finger_tr, finger_dead_epochs, chunks, rng);
    }

    trained_ = true;
    stats.wrist_utilization = utilization(wrist_book_, wrist_tr.epoch_hits);
    stats.finger_utilization = utilization(finger_book_, finger_tr.epoch_hits);
    for (double u : stats.wrist_utilization.per_level)
      if (u < 0.01) stats.warnings.push_back("wrist codebook level utilization below 1%");
    for (double u : stats.finger_utilization.per_level)
      if (u < 0.01) stats.warnings.push_back("finger codebook level utilization below 1%");
    check(wrist_book_.finite() && finger_book_.finite(), "train_tokenizer: non-finite codebook");
    return stats;
  }

  // Mean squared reconstruction error over all pose channels of a chunk set.
  double reconstruction_mse(const std::vector<MotionChunk>& chunks) const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& c : chunks) {
      const MotionChunk rec = detokenize(tokenize(c));
      for (std::size_t t = 0; t < c.frames.size(); ++t) {
        for (int d = 0; d < 3; ++d) {
          const double dw = rec.frames[t].wrist_translation[static_cast<std::size_t>(d)] -
                            c.frames[t].wrist_translation[static_cast<std::size_t>(d)];
          const double dr = rec.frames[t].wrist_rotation[static_cast<std::size_t>(d)] -
                            c.frames[t].wrist_rotation[static_cast<std::size_t>(d)];
          total += dw * dw + dr * dr;
          count += 2;
        }
        for (std::size_t d = 0; d < c.frames[t].finger_joints.size(); ++d) {
          const double df = rec.frames[t].finger_joints[d] - c.frames[t].finger_joints[d];
          total += df * df;
          ++count;
        }
      }
    }
    return total / static_cast<double>(count);
  }

  void save(std::ostream& os) const {
    os.write(kMagic, 8);
    io::put_u32(os, kVersion);
    io::put_i32(os, cfg_.chunk_len);
    io::put_i32(os, cfg_.finger_dims);
    io::put_i32(os, cfg_.wrist_tokens);
    io::put_i32(os, cfg_.finger_tokens);
    io::put_i32(os, cfg_.groups);
    io::put_i32(os, cfg_.levels);
    io::put_i32(os, cfg_.entries);
    io::put_i32(os, cfg_.code_dim);
    io::put_i32(os, cfg_.hidden);
    io::put_u64(os, cfg_.seed);
    io::put_f64(os, cfg_.recon_threshold);
    io::put_u32(os, trained_ ? 1u : 0u);
    wrist_book_.save(os);
    finger_book_.save(os);
    params_.save(os);
  }

  static MotionTokenizer load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    check(is.good() && std::string(magic, 8) == kMagic, "tokenizer load: bad magic");
    const std::uint32_t version = io::get_u32(is);
    check(version == kVersion, "tokenizer load: unsupported format version");
    TokenizerConfig cfg;
    cfg.chunk_len = io::get_i32(is);
    cfg.finger_dims = io::get_i32(is);
    cfg.wrist_tokens = io::get_i32(is);
    cfg.finger_tokens = io::get_i32(is);
    cfg.groups = io::get_i32(is);
    cfg.levels = io::get_i32(is);
    cfg.entries = io::get_i32(is);
    cfg.code_dim = io::get_i32(is);
    cfg.hidden = io::get_i32(is);
    cfg.seed = io::get_u64(is);
    cfg.recon_threshold = io::get_f64(is);
    MotionTokenizer t = MotionTokenizer::init(cfg);
    t.trained_ = io::get_u32(is) == 1u;
    t.wrist_book_ = Codebook::load(is);
    t.finger_book_ = Codebook::load(is);
    t.params_.load_into(is);
    return t;
  }

  void save_file(const std::string& path) const {
    auto os = io::open_out(path);
    save(os);
  }

  static MotionTokenizer load_file(const std::string& path) {
    auto is = io::open_in(path);
    return load(is);
  }

  static constexpr const char kMagic[9] = "JALA-TOK";
  static constexpr std::uint32_t kVersion = 1;

 private:
  static Tensor<double> add_all(const std::vector<Tensor<double>>& xs) {
    Tensor<double> acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
  }

  Tensor<double> frames_tensor(const MotionChunk& chunk, MotionPart part) const {
    if (part == MotionPart::wrist)
      return Tensor<double>::from_values({cfg_.chunk_len, 6}, wrist_features(chunk));
    return Tensor<double>::from_values({cfg_.chunk_len, cfg_.finger_dims}, finger_features(chunk));
  }

  // Encode, quantize every slot, return flat ids (slot-major, then group,
  // then level) plus the quantized slot matrix values.
  std::pair<std::vector<int>, std::vector<double>> quantize_part(
      const detail_tok::PartCodec& codec, const Codebook& book, const Tensor<double>& frames) const {
    Tensor<double> slots = codec.encode(frames);
    std::vector<int> ids;
    std::vector<double> quantized(slots.values().size());
    for (int s = 0; s < slots.rows(); ++s) {
      std::vector<double> v(slots.values().begin() + static_cast<std::ptrdiff_t>(s) * cfg_.code_dim,
                            slots.values().begin() + static_cast<std::ptrdiff_t>(s + 1) * cfg_.code_dim);
      QuantizeResult q = grvq_quantize(v, book);
      ids.insert(ids.end(), q.indices.begin(), q.indices.end());
      std::copy(q.quantized.begin(), q.quantized.end(),
                quantized.begin() + static_cast<std::ptrdiff_t>(s) * cfg_.code_dim);
    }
    return {std::move(ids), std::move(quantized)};
  }

  Tensor<double> codes_from_ids(const Codebook& book, const std::vector<int>& ids, int slots) const {
    std::vector<double> codes(static_cast<std::size_t>(slots) * cfg_.code_dim, 0.0);
    const int per_slot = book.ids_per_vector();
    std::size_t pos = 0;
    for (int s = 0; s < slots; ++s)
      for (int g = 0; g < book.groups; ++g)
        for (int l = 0; l < book.levels; ++l) {
          const int id = ids[pos++];
          check(id >= 0 && id < book.entries, "detokenize: token id out of range");
          const double* w = book.entry(g, l, id);
          for (int d = 0; d < book.sub_dim(); ++d)
            codes[static_cast<std::size_t>(s) * cfg_.code_dim + g * book.sub_dim() + d] += w[d];
        }
    check(pos == ids.size(), "detokenize: id count mismatch");
    (void)per_slot;
    return Tensor<double>::from_values({slots, cfg_.code_dim}, std::move(codes));
  }

  // Straight-through reconstruction + commitment loss for one chunk; records
  // codebook assignment statistics on the way.
  Tensor<double> chunk_loss(const MotionChunk& chunk, CodebookTrainer* wrist_tr,
                            CodebookTrainer* finger_tr, std::vector<bool>* wrist_seen,
                            std::vector<bool>* finger_seen) {
    Tensor<double> loss = part_loss(wrist_, wrist_book_, *wrist_tr, *wrist_seen,
                                    frames_tensor(chunk, MotionPart::wrist));
    Tensor<double> floss = part_loss(finger_, finger_book_, *finger_tr, *finger_seen,
                                     frames_tensor(chunk, MotionPart::finger));
    return add(loss, floss);
  }

  Tensor<double> part_loss(const detail_tok::PartCodec& codec, Codebook& book,
                           CodebookTrainer& trainer, std::vector<bool>& seen,
                           const Tensor<double>& frames) {
    Tensor<double> slots = codec.encode(frames);
    const int n_slots = slots.rows();
    std::vector<double> quantized(slots.values().size());
    const int sd = book.sub_dim();
    for (int s = 0; s < n_slots; ++s) {
      std::vector<double> v(slots.values().begin() + static_cast<std::ptrdiff_t>(s) * cfg_.code_dim,
                            slots.values().begin() + static_cast<std::ptrdiff_t>(s + 1) * cfg_.code_dim);
      QuantizeResult q = grvq_quantize(v, book);
      std::copy(q.quantized.begin(), q.quantized.end(),
                quantized.begin() + static_cast<std::ptrdiff_t>(s) * cfg_.code_dim);
      // Residual targets for the EMA update: level l learns the residual
      // left by levels < l.
      std::size_t idx = 0;
      for (int g = 0; g < book.groups; ++g) {
        std::vector<double> residual(v.begin() + static_cast<std::ptrdiff_t>(g) * sd,
                                     v.begin() + static_cast<std::ptrdiff_t>(g + 1) * sd);
        for (int l = 0; l < book.levels; ++l) {
          const int e = q.indices[idx++];
          if (e != 0) trainer.observe(book, g, l, e, residual.data());
          seen[trainer.slot(book, g, l, e)] = true;
          const double* w = book.entry(g, l, e);
          for (int d = 0; d < sd; ++d) residual[d] -= w[d];
        }
      }
    }
    // Straight-through: decode sees codewords, encoder receives the gradient.
    Tensor<double> q_const = Tensor<double>::from_values(slots.shape(), quantized);
    Tensor<double> st = add(slots, sub(q_const, slots.detached()));
    Tensor<double> recon = codec.decode(st);
    Tensor<double> rec_loss = mse_loss(recon, frames.detached());
    Tensor<double> commit = mse_loss(slots, q_const);
    return add(rec_loss, scale(commit, cfg_.commitment_weight));
  }

  double validation_mse(const std::vector<MotionChunk>& chunks, std::size_t train_count) const {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = train_count; i < chunks.size(); ++i) {
      for (MotionPart part : {MotionPart::wrist, MotionPart::finger}) {
        const auto& codec = part == MotionPart::wrist ? wrist_ : finger_;
        const auto& book = part == MotionPart::wrist ? wrist_book_ : finger_book_;
        Tensor<double> frames = frames_tensor(chunks[i], part);
        auto [ids, quantized] = quantize_part(codec, book, frames);
        Tensor<double> rec = codec.decode(
            Tensor<double>::from_values({part == MotionPart::wrist ? cfg_.wrist_slots()
                                                                   : cfg_.finger_slots(),
                                         cfg_.code_dim},
                                        quantized));
        for (std::size_t k = 0; k < rec.values().size(); ++k) {
          const double d = rec.values()[k] - frames.values()[k];
          total += d * d;
          ++n;
        }
      }
    }
    return total / static_cast<double>(n);
  }

  void revive_dead_codes(Codebook& book, CodebookTrainer& trainer, std::vector<int>& dead_epochs,
                         const std::vector<MotionChunk>& chunks, Rng& rng) {
    for (int g = 0; g < book.groups; ++g)
      for (int l = 0; l < book.levels; ++l)
        for (int e = 1; e < book.entries; ++e) {
          const std::size_t s = trainer.slot(book, g, l, e);
          if (trainer.epoch_hits[s] == 0) {
            if (++dead_epochs[s] >= 2) {
              // Reinitialize from a random training chunk's encoded slot.
              const MotionChunk& c = chunks[rng.below(chunks.size())];
              const auto& codec = book.part == MotionPart::wrist ? wrist_ : finger_;
              Tensor<double> slots = codec.encode(frames_tensor(c, book.part));
              const int slot_idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(slots.rows())));
              double* w = book.entry(g, l, e);
              for (int d = 0; d < book.sub_dim(); ++d)
                w[d] = slots.values()[static_cast<std::size_t>(slot_idx) * cfg_.code_dim +
                                      g * book.sub_dim() + d];
              dead_epochs[s] = 0;
            }
          } else {
            dead_epochs[s] = 0;
          }
        }
  }

  TokenizerConfig cfg_;
  detail_tok::PartCodec wrist_, finger_;
  Codebook wrist_book_, finger_book_;
  ParamSet<double> params_;
  bool trained_ = false;
};

}  // namespace jala
