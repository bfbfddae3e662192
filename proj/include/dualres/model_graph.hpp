#pragma once

#include <map>
#include <string>

#include "dualres/autograd.hpp"
#include "dualres/model.hpp"
#include "dualres/params.hpp"

// Tape-level graph builders shared by the loss, generation and preference
// training paths. One forward implementation serves them all.
namespace dualres::detail {

struct GraphCtx {
  ad::Tape tape;
  std::map<std::string, int> pnode;
  const ModelConfig* cfg = nullptr;
  bool with_grad = false;

  int param(const std::string& name) const;
};

GraphCtx make_ctx(const ParamSet& p, const ModelConfig& cfg, bool with_grad);

// Frame embeddings (T, d_text) including positions; checks the context limit.
int build_inputs(GraphCtx& g, const SeqItem& item);

// Pre-norm causal transformer over (T, d) rows using parameters under
// `prefix` (layers, heads as given); ends with the final layer norm.
int build_transformer(GraphCtx& g, int x, const std::string& prefix, int layers,
                      int heads);

int build_text_logits(GraphCtx& g, int hidden);
int build_ungrouped(GraphCtx& g, int hidden);  // (T, d_g)

// Refine-head logits over the first `r` inner positions of one frame.
// prev_ids[i] is the speech id preceding inner position i; segments is a
// (k, d_g/k) node.
int build_srh_logits(GraphCtx& g, const std::vector<int>& prev_ids,
                     int segments);

struct ItemLossNodes {
  int srh = -1;   // (1,1) node or -1 when no supervised speech positions
  int text = -1;  // (1,1) node or -1 when no supervised text positions
  double srh_val = 0;
  double text_val = 0;
  int speech_positions = 0;
  int text_positions = 0;
};

ItemLossNodes build_item_loss(GraphCtx& g, const SeqItem& item,
                              ModelStats* stats);

void accumulate_grads(GraphCtx& g, GradMap& grads);

}  // namespace dualres::detail
