#include "dualres/corpus.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "dualres/error.hpp"

namespace dualres {

const char* const kPreferenceTags[4] = {"robustness", "instruction",
                                        "understanding", "empathy"};

void TaskSpec::validate(const Vocab& text_vocab) const {
  if (id_lo < Vocab::first_content || id_hi > text_vocab.size || id_lo >= id_hi)
    throw DomainError("content id range [" + std::to_string(id_lo) + "," +
                      std::to_string(id_hi) + ") is degenerate");
  if (len_min < 1 || len_max < len_min)
    throw DomainError("bad utterance length range");
  if (num_train < 1 || num_heldout < 0) throw DomainError("bad corpus sizes");
  if (kind == Kind::kv_recall && len_min != 1)
    throw DomainError("key-value recall uses single-id queries");
}

TaskSpec::Kind task_kind_from_name(const std::string& name) {
  if (name == "echo") return TaskSpec::Kind::echo;
  if (name == "kv_recall") return TaskSpec::Kind::kv_recall;
  if (name == "arithmetic") return TaskSpec::Kind::arithmetic;
  throw ConfigError("unknown task kind '" + name + "'");
}

std::string task_kind_name(TaskSpec::Kind kind) {
  switch (kind) {
    case TaskSpec::Kind::echo: return "echo";
    case TaskSpec::Kind::kv_recall: return "kv_recall";
    case TaskSpec::Kind::arithmetic: return "arithmetic";
  }
  return "?";
}

namespace {

std::vector<int> answer_for(const TaskSpec& spec, const std::vector<int>& q,
                            const std::vector<int>& kv_table) {
  const int range = spec.id_hi - spec.id_lo;
  std::vector<int> a;
  switch (spec.kind) {
    case TaskSpec::Kind::echo:
      a = q;
      break;
    case TaskSpec::Kind::kv_recall:
      a = {spec.id_lo + kv_table[q[0] - spec.id_lo]};
      break;
    case TaskSpec::Kind::arithmetic:
      a.reserve(q.size());
      for (int id : q)
        a.push_back(spec.id_lo + (id - spec.id_lo + spec.arith_delta) % range);
      break;
  }
  return a;
}

}  // namespace

CorpusSplit make_corpus(const TaskSpec& spec, const Vocab& text_vocab) {
  spec.validate(text_vocab);
  std::mt19937_64 rng(spec.seed);
  const int range = spec.id_hi - spec.id_lo;
  std::uniform_int_distribution<int> id_dist(spec.id_lo, spec.id_hi - 1);
  std::uniform_int_distribution<int> len_dist(spec.len_min, spec.len_max);

  std::vector<int> kv_table(range);
  for (int i = 0; i < range; ++i) kv_table[i] = i;
  std::shuffle(kv_table.begin(), kv_table.end(), rng);

  const int want = spec.num_train + spec.num_heldout;
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> queries;
  if (spec.kind == TaskSpec::Kind::kv_recall) {
    if (want > range)
      throw DomainError("key-value recall needs " + std::to_string(want) +
                        " distinct keys but the range holds " +
                        std::to_string(range));
    std::vector<int> keys(range);
    for (int i = 0; i < range; ++i) keys[i] = spec.id_lo + i;
    std::shuffle(keys.begin(), keys.end(), rng);
    for (int i = 0; i < want; ++i) queries.push_back({keys[i]});
  } else {
    long attempts = 0;
    const long max_attempts = 1000L * want + 10000;
    while (static_cast<int>(queries.size()) < want) {
      if (++attempts > max_attempts)
        throw DomainError("cannot draw " + std::to_string(want) +
                          " distinct queries from the configured range");
      std::vector<int> q(len_dist(rng));
      for (auto& id : q) id = id_dist(rng);
      if (seen.insert(q).second) queries.push_back(std::move(q));
    }
  }

  CorpusSplit out;
  for (int i = 0; i < want; ++i) {
    Sample s;
    s.query = queries[i];
    s.answer = answer_for(spec, s.query, kv_table);
    (i < spec.num_train ? out.train : out.heldout).samples.push_back(std::move(s));
  }
  return out;
}

void save_corpus(const std::string& path, const Corpus& c,
                 const SyntheticCodec& codec) {
  std::vector<TokenStream> lines;
  lines.reserve(c.samples.size() * 3);
  const Vocab& tv = codec.text_vocab();
  for (const Sample& s : c.samples) {
    TokenStream uq;
    uq.ids = s.query;
    uq.rate_hz = 3;
    uq.channel = Channel::user;
    uq.modality = Modality::text;
    TokenStream us = codec.encode(uq);
    us.channel = Channel::user;

    TokenStream at;
    at.ids = s.answer;
    at.rate_hz = 3;
    at.channel = Channel::assistant;
    at.modality = Modality::text;

    TokenStream at_full = at;
    at_full.ids.push_back(tv.eos);
    TokenStream as = codec.encode(at_full);
    as.channel = Channel::assistant;

    lines.push_back(us);
    lines.push_back(at);
    lines.push_back(as);
  }
  save_streams(path, lines);
}

Corpus load_corpus(const std::string& path, const SyntheticCodec& codec) {
  std::vector<TokenStream> lines = load_streams(path);
  if (lines.size() % 3 != 0)
    throw DomainError("corpus file " + path + " holds " +
                      std::to_string(lines.size()) +
                      " stream lines, expected sample triples");
  const Vocab& tv = codec.text_vocab();
  Corpus c;
  for (size_t i = 0; i < lines.size(); i += 3) {
    const TokenStream& us = lines[i];
    const TokenStream& at = lines[i + 1];
    const TokenStream& as = lines[i + 2];
    if (us.channel != Channel::user || us.modality != Modality::speech ||
        at.channel != Channel::assistant || at.modality != Modality::text ||
        as.channel != Channel::assistant || as.modality != Modality::speech)
      throw DomainError("unexpected stream roles in corpus sample " +
                        std::to_string(i / 3));
    Sample s;
    s.query = codec.decode(us).ids;
    s.answer = at.ids;
    std::vector<int> spoken = codec.decode(as).ids;
    std::vector<int> expect = s.answer;
    expect.push_back(tv.eos);
    if (spoken != expect)
      throw DomainError("assistant speech does not transcribe to its text in "
                        "corpus sample " + std::to_string(i / 3));
    c.samples.push_back(std::move(s));
  }
  return c;
}

std::vector<DualFrame> sample_prompt(const Sample& s,
                                     const SyntheticCodec& codec,
                                     const ModelConfig& cfg) {
  const Vocab tv = Vocab{cfg.vocab_text};
  const Vocab sv = Vocab{cfg.vocab_speech};
  TokenStream q;
  q.ids = s.query;
  q.modality = Modality::text;
  TokenStream qs = codec.encode(q);
  TokenStream empty_text;
  empty_text.modality = Modality::text;
  return align_streams(qs, empty_text, cfg.k, tv, sv);
}

int sample_prompt_frames(const Sample& s, const SyntheticCodec& codec,
                         const ModelConfig& cfg) {
  const size_t n = s.query.size() * codec.expansion();
  return static_cast<int>((n + cfg.k - 1) / cfg.k);
}

std::vector<DualFrame> sample_frames(const Sample& s,
                                     const SyntheticCodec& codec,
                                     const ModelConfig& cfg) {
  const Vocab tv = Vocab{cfg.vocab_text};
  const Vocab sv = Vocab{cfg.vocab_speech};
  std::vector<DualFrame> frames = sample_prompt(s, codec, cfg);
  TokenStream at;
  at.ids = s.answer;
  at.ids.push_back(tv.eos);
  at.modality = Modality::text;
  TokenStream as = codec.encode(at);
  std::vector<DualFrame> resp = align_streams(as, at, cfg.k, tv, sv);
  frames.insert(frames.end(), resp.begin(), resp.end());
  return frames;
}

SeqItem sample_item(const Sample& s, const SyntheticCodec& codec,
                    const ModelConfig& cfg) {
  const Vocab sv = Vocab{cfg.vocab_speech};
  std::vector<DualFrame> frames = sample_frames(s, codec, cfg);
  const int first_target = sample_prompt_frames(s, codec, cfg);
  return make_training_item(frames, first_target, cfg, sv);
}

std::vector<SeqItem> corpus_items(const Corpus& c, const SyntheticCodec& codec,
                                  const ModelConfig& cfg) {
  std::vector<SeqItem> items;
  items.reserve(c.samples.size());
  for (const Sample& s : c.samples) items.push_back(sample_item(s, codec, cfg));
  return items;
}

std::vector<PreferencePair> make_preference_pairs(const Corpus& c,
                                                  const SyntheticCodec& codec,
                                                  const ModelConfig& cfg,
                                                  int count, uint64_t seed) {
  if (c.samples.empty()) throw DomainError("empty corpus");
  if (count < 1) throw DomainError("need at least one preference pair");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, c.samples.size() - 1);
  std::vector<PreferencePair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    const Sample& s = c.samples[pick(rng)];
    Sample bad = s;
    std::uniform_int_distribution<int> id_dist(Vocab::first_content,
                                               cfg.vocab_text - 1);
    bool differs = false;
    while (!differs) {
      for (auto& id : bad.answer) id = id_dist(rng);
      differs = bad.answer != s.answer;
    }
    PreferencePair p;
    p.chosen = sample_item(s, codec, cfg);
    p.rejected = sample_item(bad, codec, cfg);
    p.tag = kPreferenceTags[i % 4];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace dualres
