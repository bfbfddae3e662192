#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dualres/params.hpp"
#include "dualres/tokens.hpp"

namespace dualres {

// One generated 5 Hz step: a refined speech group plus the text id.
struct JointStep {
  std::vector<int> speech;
  int text = 0;
};

struct Target {
  int text = 0;
  bool text_on = false;
  std::vector<int> speech;      // k gold ids (may include PAD)
  std::vector<char> speech_mask;  // 1 = position contributes to the loss
  bool speech_on() const {
    for (char c : speech_mask)
      if (c) return true;
    return false;
  }
};

// One training sequence. Inputs are per 5 Hz frame; targets[t] is what the
// hidden state at frame t must predict. user_in, when non-empty, is a second
// speech channel fused additively through the same grouping path.
struct SeqItem {
  std::vector<std::vector<int>> speech_in;
  std::vector<int> text_in;
  std::vector<std::vector<int>> user_in;
  std::vector<Target> targets;

  int frames() const { return static_cast<int>(text_in.size()); }
  void validate(const ModelConfig& cfg) const;
};

struct LossBreakdown {
  double total = 0;
  double srh = 0;   // sum over supervised speech token positions
  double text = 0;  // sum over supervised text positions (unweighted)
  int speech_positions = 0;
  int text_positions = 0;
};

struct ModelStats {
  long long backbone_frames = 0;  // frame positions processed by the backbone
  long long backbone_calls = 0;
  long long srh_groups = 0;
};

struct GenMode {
  bool greedy = true;
  uint64_t seed = 0;
};

// Joint loss over a batch: sum of per-token speech cross-entropy plus
// lambda_text * text cross-entropy, summed over supervised positions of all
// items. Fills *grads (accumulated by parameter name) when non-null.
LossBreakdown loss_joint(const std::vector<SeqItem>& batch, const ParamSet& p,
                         const ModelConfig& cfg, GradMap* grads = nullptr,
                         ModelStats* stats = nullptr);

// Embed one frame without its position: grouped speech embedding + text
// embedding. PAD speech positions contribute zero vectors. Returns (1, d_text).
Mat embed_frame(const DualFrame& frame, const ParamSet& p,
                const ModelConfig& cfg);

// Causal backbone over pre-assembled frame embeddings (T, d_text) ->
// (T, d_text). Rejects T > max_frames.
Mat backbone_forward(const Mat& frames, const ParamSet& p,
                     const ModelConfig& cfg, ModelStats* stats = nullptr);

// (T, d_text) -> (T, vocab_text) logits.
Mat text_head_logits(const Mat& hidden, const ParamSet& p);

// Decoding state for one frame's speech group refinement.
struct SrhState {
  Mat segments;          // (k, d_g/k) conditioning segments for this frame
  int prev_id = 0;       // speech id preceding the group
  std::vector<int> emitted;
};

// Emit exactly k speech ids autoregressively, appending them to st.emitted.
std::vector<int> srh_decode_frame(SrhState& st, const ParamSet& p,
                                  const ModelConfig& cfg, const GenMode& mode,
                                  std::mt19937_64* rng = nullptr);

// Autoregressive joint generation from a prompt of aligned frames. Stops
// after emitting a text EOS, after max_new steps (0 = no cap), or on filling
// the context; a prompt that already fills it cannot generate and raises
// context_overflow.
std::vector<JointStep> generate(const ParamSet& p, const ModelConfig& cfg,
                                const std::vector<DualFrame>& prompt,
                                const Vocab& text_vocab, const GenMode& mode,
                                ModelStats* stats = nullptr, int max_new = 0);

// Half-duplex training sequence over all F aligned frames: the hidden state
// at t predicts frame t+1, supervised from first_target_frame on (the final
// frame has nothing to predict and stays unsupervised).
SeqItem make_training_item(const std::vector<DualFrame>& frames,
                           int first_target_frame, const ModelConfig& cfg,
                           const Vocab& speech_vocab);

// Sum of log P(target | context) over the supervised positions of item;
// the joint sequence log-likelihood used for preference training.
double sequence_logprob(const SeqItem& item, const ParamSet& p,
                        const ModelConfig& cfg);

}  // namespace dualres
