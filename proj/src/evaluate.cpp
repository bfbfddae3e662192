#include "dualres/evaluate.hpp"

#include "dualres/error.hpp"

namespace dualres {

void EvalReport::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(exact_match) || !in01(token_accuracy) || !in01(alignment_error))
    throw DomainError("evaluation rates must lie in [0,1]");
}

EvalReport evaluate(const ParamSet& p, const ModelConfig& cfg, const Corpus& c,
                    const SyntheticCodec& codec) {
  if (codec.text_vocab().size != cfg.vocab_text ||
      codec.speech_vocab().size != cfg.vocab_speech)
    throw DomainError("codec vocabularies do not match the model config");
  if (c.samples.empty()) throw DomainError("empty corpus");
  const Vocab tv = codec.text_vocab();
  EvalReport r;
  long gold_positions = 0, matched_positions = 0;
  long frames_emitted = 0, frames_misaligned = 0;
  int exact = 0;
  for (const Sample& s : c.samples) {
    std::vector<DualFrame> prompt = sample_prompt(s, codec, cfg);
    const int horizon = static_cast<int>(s.answer.size()) + 1;
    GenMode mode;
    std::vector<JointStep> steps =
        generate(p, cfg, prompt, tv, mode, nullptr, horizon);

    std::vector<int> text;
    for (const JointStep& st : steps) text.push_back(st.text);
    bool ok = static_cast<int>(text.size()) == horizon;
    if (ok)
      for (size_t i = 0; i < s.answer.size(); ++i)
        ok = ok && text[i] == s.answer[i];
    ok = ok && !text.empty() && text.back() == tv.eos;
    exact += ok ? 1 : 0;

    gold_positions += static_cast<long>(s.answer.size());
    for (size_t i = 0; i < s.answer.size() && i < text.size(); ++i)
      matched_positions += text[i] == s.answer[i] ? 1 : 0;

    for (const JointStep& st : steps) {
      ++frames_emitted;
      auto dec = codec.decode_group(st.speech);
      if (!dec || *dec != st.text) ++frames_misaligned;
    }
  }
  r.samples = static_cast<int>(c.samples.size());
  r.exact_match = static_cast<double>(exact) / r.samples;
  r.token_accuracy =
      gold_positions == 0
          ? 1.0
          : static_cast<double>(matched_positions) / gold_positions;
  r.alignment_error =
      frames_emitted == 0
          ? 0.0
          : static_cast<double>(frames_misaligned) / frames_emitted;
  r.validate();
  return r;
}

}  // namespace dualres
