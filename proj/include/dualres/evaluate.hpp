#pragma once

#include <map>
#include <string>
#include <vector>

#include "dualres/corpus.hpp"
#include "dualres/model.hpp"

namespace dualres {

struct EvalReport {
  double exact_match = 0;      // fraction of samples answered exactly
  double token_accuracy = 0;   // matched gold text positions / gold positions
  double alignment_error = 0;  // emitted frames whose speech decodes to a
                               // different text id / emitted frames
  int samples = 0;
  std::map<std::string, std::vector<double>> loss_curves;  // stage -> losses

  void validate() const;
};

// Greedy decoding against gold answers. Generation is capped one frame past
// the gold horizon: scoring never looks further, and an exact match still
// requires the EOS directly after the answer.
EvalReport evaluate(const ParamSet& p, const ModelConfig& cfg, const Corpus& c,
                    const SyntheticCodec& codec);

}  // namespace dualres
