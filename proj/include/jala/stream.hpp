#pragma once

#include <optional>
#include <vector>

#include "jala/common.hpp"
#include "jala/tokenizer.hpp"

namespace jala {

enum class Modality { instruction, visual, motion, delimiter, mask };

// Global token id layout. Special tokens first, then the instruction and
// visual ranges, then one codebook range per motion part. TokenChunk ids are
// per-part codebook indices; the stream stores global ids.
struct Vocab {
  int instruction_vocab = 0;
  int visual_vocab = 0;
  int motion_entries = 0;  // codebook entries per part

  static constexpr int kMask = 0;
  static constexpr int kMotOpen = 1;   // <mot>
  static constexpr int kMotClose = 2;  // </mot>
  static constexpr int kSpecials = 3;

  int instruction_base() const { return kSpecials; }
  int visual_base() const { return kSpecials + instruction_vocab; }
  int wrist_base() const { return visual_base() + visual_vocab; }
  int finger_base() const { return wrist_base() + motion_entries; }
  int total() const { return finger_base() + motion_entries; }

  int instruction_id(int local) const {
    check(local >= 0 && local < instruction_vocab, "vocab: instruction id out of range");
    return instruction_base() + local;
  }
  int visual_id(int local) const {
    check(local >= 0 && local < visual_vocab, "vocab: visual id out of range");
    return visual_base() + local;
  }
  int wrist_id(int local) const {
    check(local >= 0 && local < motion_entries, "vocab: wrist id out of range");
    return wrist_base() + local;
  }
  int finger_id(int local) const {
    check(local >= 0 && local < motion_entries, "vocab: finger id out of range");
    return finger_base() + local;
  }
};

struct PositionTag {
  Modality modality = Modality::instruction;
  int chunk_index = -1;        // 0-based, -1 outside motion chunks
  int within_chunk = -1;       // motion position within its chunk, delimiters -1
  std::optional<HandSide> hand_side;
};

// Interleaved instruction/visual/motion token sequence with per-position tags.
// Every motion chunk is contiguous and bracketed by <mot>/</mot>; bimanual
// streams alternate left/right chunks at equal temporal index.
struct TokenStream {
  std::vector<int> ids;
  std::vector<PositionTag> tags;

  int length() const { return static_cast<int>(ids.size()); }
  int chunk_count() const {
    int maxc = -1;
    for (const auto& t : tags) maxc = std::max(maxc, t.chunk_index);
    return maxc + 1;
  }

  std::vector<int> motion_positions(int chunk) const {
    std::vector<int> out;
    for (int p = 0; p < length(); ++p)
      if (tags[static_cast<std::size_t>(p)].chunk_index == chunk &&
          (tags[static_cast<std::size_t>(p)].modality == Modality::motion ||
           tags[static_cast<std::size_t>(p)].modality == Modality::mask))
        out.push_back(p);
    return out;
  }

  std::vector<int> all_motion_positions() const {
    std::vector<int> out;
    for (int p = 0; p < length(); ++p)
      if (tags[static_cast<std::size_t>(p)].modality == Modality::motion ||
          tags[static_cast<std::size_t>(p)].modality == Modality::mask)
        out.push_back(p);
    return out;
  }
};

// Assembles the stream: [instruction][visual] then chunks in temporal order,
// left before right when bimanual, each chunk laid out as
// <mot> wrist ids... finger ids... </mot>. Chunks whose ids are unknown
// (video-only samples) are passed as placeholders and come out as [MASK]
// positions with modality `mask`.
struct StreamChunkInput {
  TokenChunk tokens;   // ignored when placeholder
  bool placeholder = false;
  HandSide hand_side = HandSide::right;
};

inline TokenStream format_stream(const Vocab& vocab, const std::vector<int>& instruction_local_ids,
                                 const std::vector<int>& visual_local_ids,
                                 const std::vector<StreamChunkInput>& chunks, bool bimanual,
                                 int wrist_tokens, int finger_tokens) {
  TokenStream s;
  for (int id : instruction_local_ids) {
    s.ids.push_back(vocab.instruction_id(id));
    s.tags.push_back({Modality::instruction, -1, -1, std::nullopt});
  }
  for (int id : visual_local_ids) {
    s.ids.push_back(vocab.visual_id(id));
    s.tags.push_back({Modality::visual, -1, -1, std::nullopt});
  }
  if (bimanual) {
    check(chunks.size() % 2 == 0,
          "format_stream: bimanual stream needs matching left/right chunk counts");
    for (std::size_t i = 0; i + 1 < chunks.size(); i += 2)
      check(chunks[i].hand_side == HandSide::left && chunks[i + 1].hand_side == HandSide::right,
            "format_stream: bimanual chunks must alternate left then right");
  }
  int chunk_index = 0;
  for (const auto& c : chunks) {
    s.ids.push_back(Vocab::kMotOpen);
    s.tags.push_back({Modality::delimiter, chunk_index, -1, c.hand_side});
    const Modality m = c.placeholder ? Modality::mask : Modality::motion;
    int within = 0;
    for (int k = 0; k < wrist_tokens; ++k, ++within) {
      s.ids.push_back(c.placeholder ? Vocab::kMask
                                    : vocab.wrist_id(c.tokens.wrist_ids[static_cast<std::size_t>(k)]));
      s.tags.push_back({m, chunk_index, within, c.hand_side});
    }
    for (int k = 0; k < finger_tokens; ++k, ++within) {
      s.ids.push_back(c.placeholder ? Vocab::kMask
                                    : vocab.finger_id(c.tokens.finger_ids[static_cast<std::size_t>(k)]));
      s.tags.push_back({m, chunk_index, within, c.hand_side});
    }
    s.ids.push_back(Vocab::kMotClose);
    s.tags.push_back({Modality::delimiter, chunk_index, -1, c.hand_side});
    ++chunk_index;
  }
  return s;
}

// Recovers (chunk start, chunk end) position ranges from the tags; the
// delimiters are included in the range. Round-trips format_stream exactly.
inline std::vector<std::pair<int, int>> chunk_ranges(const TokenStream& s) {
  std::vector<std::pair<int, int>> ranges;
  for (int p = 0; p < s.length(); ++p) {
    const auto& t = s.tags[static_cast<std::size_t>(p)];
    if (t.chunk_index < 0) continue;
    if (t.chunk_index >= static_cast<int>(ranges.size())) ranges.push_back({p, p});
    ranges[static_cast<std::size_t>(t.chunk_index)].second = p;
  }
  return ranges;
}

}  // namespace jala
