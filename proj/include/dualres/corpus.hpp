#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualres/model.hpp"
#include "dualres/tokens.hpp"
#include "dualres/training.hpp"

namespace dualres {

// Desk-scale stand-ins for spoken QA data. Queries are unique id sequences;
// the split between train and held-out is disjoint by construction.
struct TaskSpec {
  enum class Kind { echo, kv_recall, arithmetic };
  Kind kind = Kind::echo;
  int num_train = 200;
  int num_heldout = 64;
  int len_min = 2;
  int len_max = 6;
  int id_lo = Vocab::first_content;  // content id range [id_lo, id_hi)
  int id_hi = 256;
  int arith_delta = 7;
  uint64_t seed = 0;

  void validate(const Vocab& text_vocab) const;
};

TaskSpec::Kind task_kind_from_name(const std::string& name);
std::string task_kind_name(TaskSpec::Kind kind);

struct Sample {
  std::vector<int> query;   // user text ids
  std::vector<int> answer;  // gold assistant text ids (no EOS)
};

struct Corpus {
  std::vector<Sample> samples;
};

struct CorpusSplit {
  Corpus train;
  Corpus heldout;
};

CorpusSplit make_corpus(const TaskSpec& spec, const Vocab& text_vocab);

// Serialized as stream-line triples per sample: user speech, assistant text,
// assistant speech (the codec image of answer + EOS).
void save_corpus(const std::string& path, const Corpus& c,
                 const SyntheticCodec& codec);
Corpus load_corpus(const std::string& path, const SyntheticCodec& codec);

// Aligned frame sequence: user frames (speech + SIL text) followed by
// assistant frames (answer text + EOS, each with its codec speech group).
std::vector<DualFrame> sample_frames(const Sample& s,
                                     const SyntheticCodec& codec,
                                     const ModelConfig& cfg);
// Prompt half only (user frames).
std::vector<DualFrame> sample_prompt(const Sample& s,
                                     const SyntheticCodec& codec,
                                     const ModelConfig& cfg);
int sample_prompt_frames(const Sample& s, const SyntheticCodec& codec,
                         const ModelConfig& cfg);

SeqItem sample_item(const Sample& s, const SyntheticCodec& codec,
                    const ModelConfig& cfg);
std::vector<SeqItem> corpus_items(const Corpus& c, const SyntheticCodec& codec,
                                  const ModelConfig& cfg);

// Preference pairs: chosen = gold continuation, rejected = the same prompt
// with a corrupted answer (resampled ids); tags cycle through the four
// preference dimensions.
std::vector<PreferencePair> make_preference_pairs(const Corpus& c,
                                                  const SyntheticCodec& codec,
                                                  const ModelConfig& cfg,
                                                  int count, uint64_t seed);

extern const char* const kPreferenceTags[4];

}  // namespace dualres
