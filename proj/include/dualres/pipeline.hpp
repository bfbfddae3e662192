#pragma once

#include <string>

#include "dualres/config.hpp"
#include "dualres/corpus.hpp"
#include "dualres/evaluate.hpp"
#include "dualres/model.hpp"
#include "dualres/training.hpp"

namespace dualres {

// Config accessors with the desk-scale defaults.
ModelConfig model_config_from(const Config& cfg);
SyntheticCodec codec_from(const Config& cfg);
TaskSpec task_from(const Config& cfg, uint64_t seed);
TrainPlan plan_from(const Config& cfg, const std::string& stage,
                    uint64_t seed, int dflt_steps, double dflt_lr_start,
                    double dflt_lr_end);
MergeSpec merge_spec_from(const Config& cfg);

// Stage entry points shared by the CLI and run_pipeline. Each stage reads
// its inputs from `out` (corpus files, upstream checkpoint), trains, and
// writes <stage>.ckpt plus an append-only <stage>.log.
void stage_gen_corpus(const Config& cfg, uint64_t seed, const std::string& out);
StageResult stage_prealign(const Config& cfg, uint64_t seed,
                           const std::string& out, ModelStats* stats = nullptr);
StageResult stage_train1(const Config& cfg, uint64_t seed,
                         const std::string& out, ModelStats* stats = nullptr);
void stage_merge(const Config& cfg, const std::string& out);
StageResult stage_train2(const Config& cfg, uint64_t seed,
                         const std::string& out, ModelStats* stats = nullptr);
struct DpoStageResult {
  double first_loss = 0;
  double final_loss = 0;
  double first_margin = 0;
  double final_margin = 0;
};
DpoStageResult stage_dpo(const Config& cfg, uint64_t seed,
                         const std::string& out);

struct PipelineResult {
  StageResult prealign;
  StageResult stage1;
  StageResult stage2;
  DpoStageResult dpo;
  EvalReport final_eval;
};

// prealign -> cocktail1 -> merged -> cocktail2 -> dpo, resumable at stage
// boundaries through the emitted checkpoints.
PipelineResult run_pipeline(const Config& cfg, uint64_t seed,
                            const std::string& out);

// Checkpoint file names within an output directory.
std::string ckpt_path(const std::string& out, const std::string& stage);

}  // namespace dualres
