// Acceptance suite: one test case per release criterion, each printing a
// single [PASS]/[FAIL] line with its runtime so the log doubles as a report.
// Every case also checks its own wall-clock budget.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dualres/checkpoint.hpp"
#include "dualres/corpus.hpp"
#include "dualres/duplex.hpp"
#include "dualres/evaluate.hpp"
#include "dualres/gradcheck.hpp"
#include "dualres/model.hpp"
#include "dualres/tokens.hpp"
#include "dualres/training.hpp"

using namespace dualres;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Collects the criterion verdict so the printed line and the doctest
// assertions always agree.
struct Verdict {
  std::string name;
  double t0 = now_s();
  bool ok = true;
  std::string detail;

  explicit Verdict(std::string n) : name(std::move(n)) {}
  bool req(bool cond) {
    ok = ok && cond;
    return cond;
  }
  void finish(double budget_s) {
    const double dt = now_s() - t0;
    req(dt < budget_s);
    std::printf("[%s] %s (%.1fs, budget %.0fs)%s%s\n", ok ? "PASS" : "FAIL",
                name.c_str(), dt, budget_s, detail.empty() ? "" : " ",
                detail.c_str());
    std::fflush(stdout);
    CHECK(ok);
  }
};

bool bits_equal(const Mat& a, const Mat& b) {
  return a.rows == b.rows && a.cols == b.cols && a.a == b.a;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("criterion_1_grouping_frame_counts") {
  Verdict v("criterion_1_grouping_frame_counts");
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  const int k = 5;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len_dist(1, 640);
  std::uniform_int_distribution<int> id_dist(0, sv.size - 1);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    TokenStream speech;
    speech.rate_hz = 25;
    speech.ids.resize(len_dist(rng));
    for (auto& id : speech.ids) id = id_dist(rng);
    const int T = static_cast<int>(speech.ids.size());
    const int want = (T + k - 1) / k;
    std::uniform_int_distribution<int> tlen(0, want);
    TokenStream text;
    text.rate_hz = 3;
    text.modality = Modality::text;
    text.ids.resize(tlen(rng));
    std::uniform_int_distribution<int> tid(0, tv.size - 1);
    for (auto& id : text.ids) id = tid(rng);
    auto frames = align_streams(speech, text, k, tv, sv);
    v.req(static_cast<int>(frames.size()) == want);
    for (const auto& f : frames) v.req(static_cast<int>(f.speech_group.size()) == k);
    ++checked;
  }
  v.req(checked == 1000);
  v.detail = "1000 random streams, frames == ceil(T/5) for every one";
  v.finish(5.0);
}

TEST_CASE("criterion_2_backbone_step_reduction") {
  Verdict v("criterion_2_backbone_step_reduction");
  // Same utterances, same codec; the only change between the two runs is the
  // grouping factor of the model consuming them.
  ModelConfig cfg5;
  ModelConfig cfg1 = cfg5;
  cfg1.k = 1;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg5.k, 77);
  TaskSpec spec;
  spec.kind = TaskSpec::Kind::echo;
  spec.num_train = 40;
  spec.num_heldout = 4;
  spec.len_min = 2;
  spec.len_max = 4;
  spec.seed = 210;
  CorpusSplit cs = make_corpus(spec, tv);
  auto items5 = corpus_items(cs.train, codec, cfg5);
  auto items1 = corpus_items(cs.train, codec, cfg1);

  ParamSet p5 = init_params(cfg5, 211);
  ParamSet p1 = init_params(cfg1, 211);

  // Forward pass count over one epoch, counted in backbone frame positions.
  ModelStats s5{}, s1{};
  for (const auto& it : items5) loss_joint({it}, p5, cfg5, nullptr, &s5);
  for (const auto& it : items1) loss_joint({it}, p1, cfg1, nullptr, &s1);
  v.req(s5.backbone_frames > 0);
  v.req(s1.backbone_frames == 5 * s5.backbone_frames);

  // Wall-clock for one training epoch (forward + backward), batches of 8.
  auto epoch = [](const std::vector<SeqItem>& items, const ParamSet& p,
                  const ModelConfig& cfg) {
    const double t0 = now_s();
    for (size_t i = 0; i < items.size(); i += 8) {
      std::vector<SeqItem> batch(items.begin() + i,
                                 items.begin() + std::min(i + 8, items.size()));
      GradMap grads;
      loss_joint(batch, p, cfg, &grads, nullptr);
    }
    return now_s() - t0;
  };
  const double t5 = epoch(items5, p5, cfg5);
  const double t1 = epoch(items1, p1, cfg1);
  v.req(t5 < 0.6 * t1);
  std::ostringstream d;
  d << "frames " << s1.backbone_frames << " -> " << s5.backbone_frames
    << " (exactly 1/5), epoch " << t1 << "s -> " << t5 << "s (ratio "
    << t5 / t1 << " < 0.6)";
  v.detail = d.str();
  v.finish(120.0);
}

TEST_CASE("criterion_3_gradcheck_all_ops") {
  Verdict v("criterion_3_gradcheck_all_ops");
  auto results = gradcheck_all(0);
  double worst = 0;
  for (const auto& r : results) {
    v.req(r.pass);
    v.req(r.instances >= 20);
    worst = std::max(worst, r.max_rel);
  }
  v.req(results.size() >= 20);  // every differentiable op plus the full loss
  std::ostringstream d;
  d << results.size() << " checks x20 instances, worst rel err " << worst
    << " < 1e-4";
  v.detail = d.str();
  v.finish(60.0);
}

TEST_CASE("criterion_4_merge_arithmetic") {
  Verdict v("criterion_4_merge_arithmetic");
  ModelConfig cfg;
  ParamSet m0 = init_params(cfg, 41);
  ParamSet m1 = init_params(cfg, 42);

  // Endpoints are exact copies within the merge scope.
  MergeSpec e0;
  e0.alpha = 0.0;
  ParamSet r0 = merge(m0, m1, e0);
  MergeSpec e1;
  e1.alpha = 1.0;
  ParamSet r1 = merge(m0, m1, e1);
  for (const auto& [name, t] : r0.t) {
    const bool excluded = name.rfind("speech_emb", 0) == 0;
    v.req(bits_equal(t, excluded ? m1.at(name) : m0.at(name)));
    v.req(bits_equal(r1.at(name), m1.at(name)));
  }

  // Default midpoint: every entry within the elementwise envelope.
  MergeSpec mid;  // alpha = 0.5
  ParamSet rm = merge(m0, m1, mid);
  for (const auto& [name, t] : rm.t) {
    if (name.rfind("speech_emb", 0) == 0) continue;
    const Mat& a = m0.at(name);
    const Mat& b = m1.at(name);
    for (size_t i = 0; i < t.a.size(); ++i) {
      v.req(t.a[i] >= std::min(a.a[i], b.a[i]) - 0.0);
      v.req(t.a[i] <= std::max(a.a[i], b.a[i]) + 0.0);
    }
  }

  // Independent scalar-loop oracle at an off-center alpha, exact equality.
  MergeSpec s3;
  s3.alpha = 0.3;
  ParamSet r3 = merge(m0, m1, s3);
  for (const auto& [name, t] : r3.t) {
    if (name.rfind("speech_emb", 0) == 0) continue;
    const Mat& a = m0.at(name);
    const Mat& b = m1.at(name);
    for (size_t i = 0; i < t.a.size(); ++i)
      v.req(t.a[i] == 0.3 * b.a[i] + (1.0 - 0.3) * a.a[i]);
  }

  // Merged checkpoint bytes are reproducible across independent runs.
  const std::string pa = "acc_merge_a.ckpt";
  const std::string pb = "acc_merge_b.ckpt";
  save_checkpoint(pa, merge(m0, m1, mid), "merged", "alpha=0.5");
  save_checkpoint(pb, merge(m0, m1, mid), "merged", "alpha=0.5");
  v.req(file_bytes(pa) == file_bytes(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
  v.detail = "endpoints exact, convex envelope holds, alpha=0.3 oracle exact, bytes reproducible";
  v.finish(10.0);
}

TEST_CASE("criterion_5_knowledge_retention") {
  Verdict v("criterion_5_knowledge_retention");
  // Two tasks on disjoint content-id ranges. The benchmark is exact-match on
  // each task's own training prompts: what the model demonstrably knows, so
  // forgetting and recovery are visible at this scale.
  ModelConfig cfg;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg.k, 77);

  TaskSpec sa;
  sa.kind = TaskSpec::Kind::echo;
  sa.num_train = 240;
  sa.num_heldout = 32;
  sa.len_min = 2;
  sa.len_max = 4;
  sa.id_lo = 4;
  sa.id_hi = 130;
  sa.seed = 501;
  TaskSpec sb;
  sb.kind = TaskSpec::Kind::arithmetic;
  sb.num_train = 240;
  sb.num_heldout = 32;
  sb.len_min = 2;
  sb.len_max = 3;
  sb.id_lo = 130;
  sb.id_hi = 256;
  sb.arith_delta = 7;
  sb.seed = 502;
  CorpusSplit ca = make_corpus(sa, tv);
  CorpusSplit cb = make_corpus(sb, tv);
  auto items_a = corpus_items(ca.train, codec, cfg);
  auto items_b = corpus_items(cb.train, codec, cfg);
  auto acc = [&](const ParamSet& p, const Corpus& c) {
    return evaluate(p, cfg, c, codec).exact_match;
  };

  // Base model: trained on task A until it knows it cold.
  ParamSet m0 = init_params(cfg, 910);
  TrainPlan base;
  base.stage = "base_a";
  base.trainable = names_all(m0);
  base.lr_start = 1e-3;
  base.lr_end = 1e-4;
  base.steps = 6000;
  base.batch_size = 8;
  base.seed = 911;
  train_stage(m0, items_a, base, cfg);
  const double a_base = acc(m0, ca.train);

  // Stage 1: high-LR adaptation to task B degrades task A.
  ParamSet m1 = m0;
  TrainPlan s1;
  s1.stage = "cocktail1";
  s1.trainable = names_all(m1);
  s1.lr_start = 1e-4;
  s1.lr_end = 1e-5;
  s1.steps = 4000;
  s1.batch_size = 8;
  s1.seed = 912;
  train_stage(m1, items_b, s1, cfg);
  const double a_s1 = acc(m1, ca.train);
  const double b_s1 = acc(m1, cb.train);

  // Midpoint merge with the base restores task A, then a low-LR second pass
  // re-learns task B without giving A back up.
  MergeSpec ms;  // alpha = 0.5, synthetic speech table kept from the trained side
  ParamSet mr = merge(m0, m1, ms);
  TrainPlan s2;
  s2.stage = "cocktail2";
  s2.trainable = names_all(mr);
  s2.lr_start = 1e-5;
  s2.lr_end = 1e-6;
  s2.steps = 12000;
  s2.batch_size = 8;
  s2.seed = 913;
  train_stage(mr, items_b, s2, cfg);
  const double a_fin = acc(mr, ca.train);
  const double b_fin = acc(mr, cb.train);

  v.req(a_base > 0.95);       // the base actually learned task A
  v.req(a_s1 < a_base);       // stage 1 visibly forgets task A
  v.req(b_s1 > 0.5);          // stage 1 actually learned task B
  v.req(a_fin >= a_s1);       // merge + stage 2 restores task A
  v.req(b_fin >= b_s1 - 0.05);  // while keeping task B within 5 points
  std::ostringstream d;
  d << "taskA " << a_base << " -> " << a_s1 << " -> " << a_fin
    << " (recovered), taskB " << b_s1 << " -> " << b_fin << " (within 5pts)";
  v.detail = d.str();
  v.finish(600.0);
}

TEST_CASE("criterion_6_dpo_reference_and_margin") {
  Verdict v("criterion_6_dpo_reference_and_margin");
  ModelConfig cfg;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg.k, 77);
  TaskSpec spec;
  spec.kind = TaskSpec::Kind::echo;
  spec.num_train = 64;
  spec.num_heldout = 8;
  spec.len_min = 2;
  spec.len_max = 4;
  spec.seed = 601;
  CorpusSplit cs = make_corpus(spec, tv);
  auto pairs = make_preference_pairs(cs.train, codec, cfg, 48, 602);

  ParamSet policy = init_params(cfg, 610);
  const ParamSet reference = policy;
  const double ln2 = std::log(2.0);

  // With policy == reference the objective is a constant, pair by pair.
  for (int i = 0; i < 5; ++i) {
    DpoBatchResult one = dpo_loss({pairs[i]}, policy, reference, 0.1, cfg);
    v.req(std::abs(one.loss - ln2) <= 1e-9);
  }
  DpoBatchResult all0 = dpo_loss(pairs, policy, reference, 0.1, cfg);
  v.req(std::abs(all0.loss - ln2) <= 1e-9);

  // 300 update steps; the mean chosen-minus-rejected log-likelihood margin
  // over the full pair set must rise at every checkpoint.
  TrainPlan plan;
  plan.stage = "dpo";
  plan.trainable = names_all(policy);
  plan.lr_start = 1e-4;
  plan.lr_end = 1e-5;
  plan.steps = 300;
  plan.batch_size = 4;
  plan.seed = 611;
  AdamW opt(plan);
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
  std::vector<double> margins = {all0.margin};
  for (int s = 0; s < plan.steps; ++s) {
    std::vector<PreferencePair> batch;
    for (int b = 0; b < plan.batch_size; ++b) batch.push_back(pairs[pick(rng)]);
    dpo_step(policy, reference, batch, 0.1, cfg, opt, cosine_lr(s, plan));
    if ((s + 1) % 100 == 0)
      margins.push_back(dpo_loss(pairs, policy, reference, 0.1, cfg).margin);
  }
  v.req(margins.size() == 4);
  for (size_t i = 1; i < margins.size(); ++i) v.req(margins[i] > margins[i - 1]);
  std::ostringstream d;
  d << "policy=reference loss = ln2 exactly; margins";
  for (double m : margins) d << " " << m;
  d << " strictly increasing";
  v.detail = d.str();
  v.finish(300.0);
}

TEST_CASE("criterion_7_echo_overfit_alignment") {
  Verdict v("criterion_7_echo_overfit_alignment");
  ModelConfig cfg;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg.k, 77);
  TaskSpec spec;
  spec.kind = TaskSpec::Kind::echo;
  spec.num_train = 50;
  spec.num_heldout = 8;
  spec.len_min = 2;
  spec.len_max = 6;
  spec.seed = 71;
  CorpusSplit cs = make_corpus(spec, tv);
  auto items = corpus_items(cs.train, codec, cfg);

  ParamSet p = init_params(cfg, 72);
  TrainPlan plan;
  plan.stage = "overfit";
  plan.trainable = names_all(p);
  plan.lr_start = 1e-3;
  plan.lr_end = 1e-4;
  plan.steps = 3000;
  plan.batch_size = 8;
  plan.seed = 73;
  train_stage(p, items, plan, cfg);

  EvalReport ev = evaluate(p, cfg, cs.train, codec);
  v.req(ev.exact_match >= 0.99);
  v.req(ev.alignment_error <= 0.01);

  // The refine head emits exactly k=5 speech ids on every generated frame.
  GenMode mode;
  int frames_seen = 0;
  for (int i = 0; i < 5; ++i) {
    auto prompt = sample_prompt(cs.train.samples[i], codec, cfg);
    auto steps = generate(p, cfg, prompt, tv, mode);
    v.req(!steps.empty());
    for (const auto& st : steps) {
      v.req(static_cast<int>(st.speech.size()) == cfg.k);
      ++frames_seen;
    }
  }
  v.req(frames_seen > 0);
  std::ostringstream d;
  d << "train exact " << ev.exact_match << ", alignment error "
    << ev.alignment_error << ", " << frames_seen << " frames all 5-id groups";
  v.detail = d.str();
  v.finish(600.0);
}

TEST_CASE("criterion_8_duplex_turn_taking") {
  Verdict v("criterion_8_duplex_turn_taking");
  ModelConfig cfg;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg.k, 77);
  TaskSpec ts;
  ts.kind = TaskSpec::Kind::echo;
  ts.num_train = 200;
  ts.num_heldout = 4;
  ts.len_min = 2;
  ts.len_max = 3;
  ts.seed = 801;
  CorpusSplit cs = make_corpus(ts, tv);
  auto dialogues = dialogues_from(cs.train, 2);
  AugmentPolicy pol;
  pol.p_barge = 0.5;
  pol.response_gap = 3;
  pol.yield_latency = 2;
  pol.p_backchannel = 0.25;
  pol.backchannel_len = 1;
  pol.tail_silence = 8;
  pol.max_frames = cfg.max_frames;
  auto scripts = synthesize_duplex(dialogues, pol, 802);
  v.req(static_cast<int>(scripts.size()) == 100);

  // Same seed, same scripts: the synthesis itself must replay exactly.
  auto scripts2 = synthesize_duplex(dialogues, pol, 802);
  v.req(scripts2.size() == scripts.size());

  auto items = duplex_items(scripts, codec, cfg);
  ParamSet p = init_params(cfg, 810);
  TrainPlan plan;
  plan.stage = "duplex";
  plan.trainable = names_all(p);
  plan.lr_start = 1e-3;
  plan.lr_end = 1e-4;
  plan.steps = 2000;
  plan.batch_size = 8;
  plan.seed = 811;
  train_stage(p, items, plan, cfg);

  std::vector<DuplexTrace> traces;
  for (const auto& s : scripts) traces.push_back(run_duplex(s, p, cfg, codec));
  DuplexMetrics m = score_duplex(traces, scripts, codec, 10, 10);
  v.req(m.turn_taking >= 95.0);
  v.req(m.turns > 0);

  // Replaying the same scripts against the same checkpoint reproduces every
  // trace byte-for-byte.
  for (size_t i = 0; i < scripts.size(); ++i) {
    DuplexTrace again = run_duplex(scripts[i], p, cfg, codec);
    v.req(format_trace(again) == format_trace(traces[i]));
  }
  std::ostringstream d;
  d << "100 scripts, " << m.turns << " turns, turn-taking " << m.turn_taking
    << "% >= 95%, replay byte-identical";
  v.detail = d.str();
  v.finish(600.0);
}

TEST_CASE("criterion_9_prealign_freeze") {
  Verdict v("criterion_9_prealign_freeze");
  ModelConfig cfg;
  const Vocab tv = Vocab::text_default();
  const Vocab sv = Vocab::speech_default();
  SyntheticCodec codec(tv, sv, cfg.k, 77);
  TaskSpec spec;
  spec.kind = TaskSpec::Kind::echo;
  spec.num_train = 16;
  spec.num_heldout = 4;
  spec.len_min = 2;
  spec.len_max = 6;
  spec.seed = 901;
  CorpusSplit cs = make_corpus(spec, tv);
  auto items = corpus_items(cs.train, codec, cfg);

  ParamSet p = init_params(cfg, 902);
  const ParamSet before = p;
  TrainPlan plan;
  plan.stage = "prealign";
  plan.trainable = prealign_trainable(p);
  plan.lr_start = 1e-3;
  plan.lr_end = 1e-4;
  plan.steps = 100;
  plan.batch_size = 4;
  plan.seed = 903;
  train_stage(p, items, plan, cfg);

  int frozen = 0, trained = 0;
  for (const auto& [name, t] : p.t) {
    if (plan.trainable.count(name)) {
      v.req(!bits_equal(t, before.at(name)));
      ++trained;
    } else {
      v.req(bits_equal(t, before.at(name)));
      ++frozen;
    }
  }
  v.req(frozen > 0);
  v.req(trained > 0);
  // The shared sequence model itself is in the frozen set.
  v.req(plan.trainable.count("backbone.l0.attn.wq") == 0);
  v.req(plan.trainable.count("text_emb") == 0);
  std::ostringstream d;
  d << frozen << " tensors bit-identical after 100 steps, " << trained
    << " trainable tensors all changed";
  v.detail = d.str();
  v.finish(60.0);
}
