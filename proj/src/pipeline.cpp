#include "dualres/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "dualres/checkpoint.hpp"
#include "dualres/error.hpp"

namespace dualres {

namespace {

uint64_t stage_seed(uint64_t base, const std::string& stage) {
  return fnv1a64(stage.data(), stage.size(), base ^ 0x5851f42d4c957f2dull);
}

std::ofstream open_log(const std::string& out, const std::string& stage) {
  std::string path = out + "/" + stage + ".log";
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot open log file " + path);
  return f;
}

Corpus train_corpus(const Config& cfg, const std::string& out) {
  SyntheticCodec codec = codec_from(cfg);
  return load_corpus(out + "/corpus_train.txt", codec);
}

}  // namespace

std::string ckpt_path(const std::string& out, const std::string& stage) {
  return out + "/" + stage + ".ckpt";
}

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig m;
  m.vocab_text = static_cast<int>(cfg.get_int("model", "vocab_text", m.vocab_text));
  m.vocab_speech =
      static_cast<int>(cfg.get_int("model", "vocab_speech", m.vocab_speech));
  m.k = static_cast<int>(cfg.get_int("model", "k", m.k));
  m.d_s = static_cast<int>(cfg.get_int("model", "d_s", m.d_s));
  m.d_text = static_cast<int>(cfg.get_int("model", "d_text", m.d_text));
  m.d_g = static_cast<int>(cfg.get_int("model", "d_g", m.d_g));
  m.layers = static_cast<int>(cfg.get_int("model", "layers", m.layers));
  m.heads = static_cast<int>(cfg.get_int("model", "heads", m.heads));
  m.max_frames = static_cast<int>(cfg.get_int("model", "max_frames", m.max_frames));
  m.srh_layers = static_cast<int>(cfg.get_int("model", "srh_layers", m.srh_layers));
  m.srh_heads = static_cast<int>(cfg.get_int("model", "srh_heads", m.srh_heads));
  m.lambda_text = cfg.get_double("model", "lambda_text", m.lambda_text);
  m.validate();
  return m;
}

SyntheticCodec codec_from(const Config& cfg) {
  ModelConfig m = model_config_from(cfg);
  int expansion = static_cast<int>(cfg.get_int("codec", "expansion", 5));
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("codec", "mapping_seed", 77));
  return SyntheticCodec(Vocab{m.vocab_text}, Vocab{m.vocab_speech}, expansion,
                        seed);
}

TaskSpec task_from(const Config& cfg, uint64_t seed) {
  TaskSpec t;
  t.kind = task_kind_from_name(cfg.get_str("task", "kind", "echo"));
  t.num_train = static_cast<int>(cfg.get_int("task", "num_train", t.num_train));
  t.num_heldout =
      static_cast<int>(cfg.get_int("task", "num_heldout", t.num_heldout));
  t.len_min = static_cast<int>(cfg.get_int("task", "len_min", t.len_min));
  t.len_max = static_cast<int>(cfg.get_int("task", "len_max", t.len_max));
  t.id_lo = static_cast<int>(cfg.get_int("task", "id_lo", t.id_lo));
  t.id_hi = static_cast<int>(cfg.get_int("task", "id_hi", t.id_hi));
  t.arith_delta =
      static_cast<int>(cfg.get_int("task", "arith_delta", t.arith_delta));
  t.seed = seed;
  return t;
}

TrainPlan plan_from(const Config& cfg, const std::string& stage, uint64_t seed,
                    int dflt_steps, double dflt_lr_start, double dflt_lr_end) {
  TrainPlan p;
  p.stage = stage;
  p.steps = static_cast<int>(cfg.get_int(stage, "steps", dflt_steps));
  p.lr_start = cfg.get_double(stage, "lr_start", dflt_lr_start);
  p.lr_end = cfg.get_double(stage, "lr_end", dflt_lr_end);
  p.batch_size = static_cast<int>(
      cfg.get_int(stage, "batch_size", cfg.get_int("train", "batch_size", 8)));
  p.beta1 = cfg.get_double("train", "adam_beta1", p.beta1);
  p.beta2 = cfg.get_double("train", "adam_beta2", p.beta2);
  p.adam_eps = cfg.get_double("train", "adam_eps", p.adam_eps);
  p.weight_decay = cfg.get_double("train", "weight_decay", p.weight_decay);
  p.seed = stage_seed(seed, stage);
  return p;
}

MergeSpec merge_spec_from(const Config& cfg) {
  MergeSpec s;
  s.alpha = cfg.get_double("merge", "alpha", 0.5);
  std::string ex = cfg.get_str("merge", "exclude", "speech_emb");
  s.exclude_prefixes.clear();
  std::string cur;
  for (char c : ex + ",") {
    if (c == ',') {
      if (!cur.empty()) s.exclude_prefixes.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return s;
}

void stage_gen_corpus(const Config& cfg, uint64_t seed, const std::string& out) {
  std::filesystem::create_directories(out);
  SyntheticCodec codec = codec_from(cfg);
  TaskSpec spec = task_from(cfg, seed);
  CorpusSplit split = make_corpus(spec, codec.text_vocab());
  save_corpus(out + "/corpus_train.txt", split.train, codec);
  save_corpus(out + "/corpus_heldout.txt", split.heldout, codec);
}

StageResult stage_prealign(const Config& cfg, uint64_t seed,
                           const std::string& out, ModelStats* stats) {
  ModelConfig mc = model_config_from(cfg);
  SyntheticCodec codec = codec_from(cfg);
  Corpus train = train_corpus(cfg, out);
  ParamSet p = init_params(mc, stage_seed(seed, "init"));
  TrainPlan plan = plan_from(cfg, "prealign", seed, 500, 1e-4, 1e-5);
  plan.trainable = prealign_trainable(p);
  std::vector<SeqItem> items = corpus_items(train, codec, mc);
  std::ofstream log = open_log(out, "prealign");
  StageResult r = train_stage(p, items, plan, mc, &log, stats);
  save_checkpoint(ckpt_path(out, "prealign"), p, "prealign", plan.describe());
  return r;
}

StageResult stage_train1(const Config& cfg, uint64_t seed,
                         const std::string& out, ModelStats* stats) {
  ModelConfig mc = model_config_from(cfg);
  SyntheticCodec codec = codec_from(cfg);
  Corpus train = train_corpus(cfg, out);
  ParamSet p = load_checkpoint(ckpt_path(out, "prealign"));
  TrainPlan plan = plan_from(cfg, "cocktail1", seed, 1000, 1e-4, 1e-5);
  plan.trainable = names_all(p);
  std::vector<SeqItem> items = corpus_items(train, codec, mc);
  std::ofstream log = open_log(out, "cocktail1");
  StageResult r = train_stage(p, items, plan, mc, &log, stats);
  save_checkpoint(ckpt_path(out, "cocktail1"), p, "cocktail1", plan.describe());
  return r;
}

void stage_merge(const Config& cfg, const std::string& out) {
  MergeSpec spec = merge_spec_from(cfg);
  ParamSet m0 = load_checkpoint(ckpt_path(out, "prealign"));
  ParamSet m1 = load_checkpoint(ckpt_path(out, "cocktail1"));
  ParamSet r = merge(m0, m1, spec);
  save_checkpoint(ckpt_path(out, "merged"), r, "merged",
                  "alpha=" + std::to_string(spec.alpha));
}

StageResult stage_train2(const Config& cfg, uint64_t seed,
                         const std::string& out, ModelStats* stats) {
  ModelConfig mc = model_config_from(cfg);
  SyntheticCodec codec = codec_from(cfg);
  Corpus train = train_corpus(cfg, out);
  ParamSet p = load_checkpoint(ckpt_path(out, "merged"));
  TrainPlan plan = plan_from(cfg, "cocktail2", seed, 1000, 1e-5, 1e-6);
  plan.trainable = names_all(p);
  std::vector<SeqItem> items = corpus_items(train, codec, mc);
  std::ofstream log = open_log(out, "cocktail2");
  StageResult r = train_stage(p, items, plan, mc, &log, stats);
  save_checkpoint(ckpt_path(out, "cocktail2"), p, "cocktail2", plan.describe());
  return r;
}

DpoStageResult stage_dpo(const Config& cfg, uint64_t seed,
                         const std::string& out) {
  ModelConfig mc = model_config_from(cfg);
  SyntheticCodec codec = codec_from(cfg);
  Corpus train = train_corpus(cfg, out);
  ParamSet policy = load_checkpoint(ckpt_path(out, "cocktail2"));
  const ParamSet reference = policy;
  TrainPlan plan = plan_from(cfg, "dpo", seed, 300, 1e-5, 1e-6);
  plan.trainable = names_all(policy);
  const double beta = cfg.get_double("dpo", "beta", 0.1);
  const int n_pairs = static_cast<int>(cfg.get_int("dpo", "pairs", 48));
  const int batch = plan.batch_size;
  std::vector<PreferencePair> pairs = make_preference_pairs(
      train, codec, mc, n_pairs, stage_seed(seed, "dpo-pairs"));
  AdamW opt(plan);
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
  std::ofstream log = open_log(out, "dpo");
  DpoStageResult res;
  for (int step = 0; step < plan.steps; ++step) {
    std::vector<PreferencePair> batch_pairs;
    for (int b = 0; b < batch; ++b) batch_pairs.push_back(pairs[pick(rng)]);
    double lr = cosine_lr(step, plan);
    DpoBatchResult br = dpo_step(policy, reference, batch_pairs, beta, mc, opt, lr);
    if (step == 0) {
      res.first_loss = br.loss;
      res.first_margin = br.margin;
    }
    res.final_loss = br.loss;
    res.final_margin = br.margin;
    log << "stage=dpo step=" << step << " lr=" << lr << " loss=" << br.loss
        << " margin=" << br.margin;
    for (const auto& [tag, tl] : br.tag_loss) log << " tag_" << tag << "=" << tl;
    log << "\n";
  }
  save_checkpoint(ckpt_path(out, "dpo"), policy, "dpo", plan.describe());
  return res;
}

PipelineResult run_pipeline(const Config& cfg, uint64_t seed,
                            const std::string& out) {
  std::filesystem::create_directories(out);
  if (!std::filesystem::exists(out + "/corpus_train.txt"))
    stage_gen_corpus(cfg, seed, out);
  PipelineResult r;
  r.prealign = stage_prealign(cfg, seed, out);
  r.stage1 = stage_train1(cfg, seed, out);
  stage_merge(cfg, out);
  r.stage2 = stage_train2(cfg, seed, out);
  r.dpo = stage_dpo(cfg, seed, out);
  SyntheticCodec codec = codec_from(cfg);
  ModelConfig mc = model_config_from(cfg);
  Corpus heldout = load_corpus(out + "/corpus_heldout.txt", codec);
  ParamSet final_p = load_checkpoint(ckpt_path(out, "dpo"));
  r.final_eval = evaluate(final_p, mc, heldout, codec);
  r.final_eval.loss_curves["prealign"] = r.prealign.losses;
  r.final_eval.loss_curves["cocktail1"] = r.stage1.losses;
  r.final_eval.loss_curves["cocktail2"] = r.stage2.losses;
  return r;
}

}  // namespace dualres
