#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dualres/model.hpp"
#include "dualres/params.hpp"

namespace dualres {

// Stage descriptor: which tensors train, the cosine LR schedule endpoints,
// and the step/batch budget.
struct TrainPlan {
  std::string stage = "stage";
  std::set<std::string> trainable;  // empty = nothing trains
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  int steps = 100;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  uint64_t seed = 0;

  void validate(const ParamSet& p) const;
  std::string describe() const;
};

// All parameter names, or every name starting with one of the prefixes.
std::set<std::string> names_all(const ParamSet& p);
std::set<std::string> names_with_prefix(const ParamSet& p,
                                        const std::vector<std::string>& prefixes);
// The speech-side set trained during pre-alignment (backbone stays frozen).
std::set<std::string> prealign_trainable(const ParamSet& p);

double cosine_lr(int step, const TrainPlan& plan);

// Decoupled weight decay applies only to projection weights, never to
// embeddings, positions, gains or biases.
bool decays(const std::string& name);

class AdamW {
 public:
  explicit AdamW(const TrainPlan& plan) : plan_(plan) {}
  // One update at the given LR; frozen tensors are left bit-identical.
  void step(ParamSet& p, const GradMap& grads, double lr);

 private:
  TrainPlan plan_;
  GradMap m_, v_;
  long t_ = 0;
};

struct MergeSpec {
  double alpha = 0.5;
  // Tensors whose name starts with any of these stay out of the merge and
  // are copied from m1 (the trained side).
  std::vector<std::string> exclude_prefixes = {"speech_emb"};
};

ParamSet merge(const ParamSet& m0, const ParamSet& m1, const MergeSpec& spec);

struct StageResult {
  double first_loss = 0;
  double final_loss = 0;
  std::vector<double> losses;
};

// Seeded minibatch SGD loop over fixed sequences; logs one line per step
// when log is non-null.
StageResult train_stage(ParamSet& p, const std::vector<SeqItem>& data,
                        const TrainPlan& plan, const ModelConfig& cfg,
                        std::ostream* log = nullptr,
                        ModelStats* stats = nullptr);

struct PreferencePair {
  SeqItem chosen;
  SeqItem rejected;
  std::string tag;  // robustness | instruction | understanding | empathy
};

// Sigmoid log-ratio preference objective on joint sequence log-likelihoods.
// Pure formula version, for oracle checks.
double dpo_pair_loss(double logpi_c, double logpi_r, double logref_c,
                     double logref_r, double beta);

struct DpoBatchResult {
  double loss = 0;                       // mean over scored pairs
  double margin = 0;                     // mean (logpi_c - logpi_r)
  std::map<std::string, double> tag_loss;  // per-tag mean
  int scored = 0;
  int skipped = 0;  // pairs whose sequences exceed the context
};

// Forward-only scoring of the objective (no update).
DpoBatchResult dpo_loss(const std::vector<PreferencePair>& pairs,
                        const ParamSet& policy, const ParamSet& reference,
                        double beta, const ModelConfig& cfg);

// One optimizer update on the mean pair loss.
DpoBatchResult dpo_step(ParamSet& policy, const ParamSet& reference,
                        const std::vector<PreferencePair>& pairs, double beta,
                        const ModelConfig& cfg, AdamW& opt, double lr);

}  // namespace dualres
