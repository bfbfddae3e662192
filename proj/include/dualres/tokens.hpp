#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dualres {

// Special ids shared by both vocabularies. Real content ids start at 4.
struct Vocab {
  int size = 0;
  int sil = 0;
  int bos = 1;
  int eos = 2;
  int pad = 3;

  static Vocab text_default() { return Vocab{256}; }
  static Vocab speech_default() { return Vocab{512}; }
  static constexpr int first_content = 4;

  void validate() const;
  bool contains(int id) const { return id >= 0 && id < size; }
  bool is_special(int id) const {
    return id == sil || id == bos || id == eos || id == pad;
  }
};

enum class Channel { user, assistant };
enum class Modality { speech, text };

struct TokenStream {
  std::vector<int> ids;
  int rate_hz = 0;
  Channel channel = Channel::user;
  Modality modality = Modality::speech;
};

// One 5 Hz frame: a grouped speech window plus the text id aligned to it.
// A short final group is padded with the speech PAD id; text positions past
// the end of the text stream carry the text SIL id.
struct DualFrame {
  std::vector<int> speech_group;
  int text_id = 0;
};

// Deterministic invertible stand-in for an audio codec: each text id maps to
// a fixed sequence of `expansion` speech ids, all >= first_content, injective
// at every position. decode is the exact inverse and rejects ids or groups
// the encoder cannot produce.
class SyntheticCodec {
 public:
  SyntheticCodec(Vocab text, Vocab speech, int expansion, uint64_t mapping_seed);

  TokenStream encode(const TokenStream& text) const;
  TokenStream decode(const TokenStream& speech) const;
  std::vector<int> encode_id(int text_id) const;
  // Group of exactly `expansion` ids -> text id; nullopt if not a codeword.
  std::optional<int> decode_group(const std::vector<int>& group) const;

  int expansion() const { return expansion_; }
  const Vocab& text_vocab() const { return text_; }
  const Vocab& speech_vocab() const { return speech_; }

 private:
  Vocab text_;
  Vocab speech_;
  int expansion_;
  // code_[j][t] = speech id at group position j for text id t
  std::vector<std::vector<int>> code_;
  // inv_[j][s] = text id whose codeword has s at position j, or -1
  std::vector<std::vector<int>> inv_;
};

// Group a 25 Hz speech stream and an utterance-rate text stream into 5 Hz
// frames: ceil(|speech|/k) frames, PAD-completed last group, SIL-extended
// text. Text longer than the frame count cannot be aligned.
std::vector<DualFrame> align_streams(const TokenStream& speech,
                                     const TokenStream& text, int k,
                                     const Vocab& text_vocab,
                                     const Vocab& speech_vocab);

// Inverse of align_streams up to the PAD/SIL completion it added.
void frames_to_streams(const std::vector<DualFrame>& frames,
                       TokenStream& speech_out, TokenStream& text_out);

// Line format: "<channel> <modality> <rate_hz>: id id id ..."
std::string format_stream(const TokenStream& s);
TokenStream parse_stream(const std::string& line);

std::vector<TokenStream> load_streams(const std::string& path);
void save_streams(const std::string& path, const std::vector<TokenStream>& v);

}  // namespace dualres
