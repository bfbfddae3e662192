#include "dualres/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <optional>

#include "CLI11.hpp"
#include "dualres/checkpoint.hpp"
#include "dualres/duplex.hpp"
#include "dualres/error.hpp"
#include "dualres/gradcheck.hpp"
#include "dualres/pipeline.hpp"

namespace dualres::cli {

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  std::string out = "out";
};

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config_path, "INI config file");
  sub->add_option("--seed", c.seed, "base random seed");
  sub->add_option("--out", c.out, "output directory");
}

Config load_config(const CommonArgs& c) {
  if (c.config_path.empty()) return Config::parse("");
  return Config::load(c.config_path);
}

void ensure_out(const CommonArgs& c) {
  std::filesystem::create_directories(c.out);
}

std::string pick_ckpt(const std::string& out, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  for (const char* stage : {"dpo", "cocktail2", "merged", "cocktail1", "prealign"}) {
    std::string p = ckpt_path(out, stage);
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("no checkpoint found under " + out);
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n') c = ' ';
  return s;
}

std::string join_ids(const std::vector<int>& ids, char sep) {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(ids[i]);
  }
  return s;
}

AugmentPolicy duplex_policy_from(const Config& cfg, const ModelConfig& mc) {
  AugmentPolicy p;
  p.response_gap = static_cast<int>(cfg.get_int("duplex", "response_gap", p.response_gap));
  p.inter_turn_gap = static_cast<int>(cfg.get_int("duplex", "inter_turn_gap", p.inter_turn_gap));
  p.p_barge = cfg.get_double("duplex", "p_barge", 0.5);
  p.yield_latency = static_cast<int>(cfg.get_int("duplex", "yield_latency", p.yield_latency));
  p.p_backchannel = cfg.get_double("duplex", "p_backchannel", p.p_backchannel);
  p.backchannel_len = static_cast<int>(cfg.get_int("duplex", "backchannel_len", p.backchannel_len));
  p.tail_silence = static_cast<int>(cfg.get_int("duplex", "tail_silence", p.tail_silence));
  p.max_frames = static_cast<int>(cfg.get_int("duplex", "max_frames", mc.max_frames));
  return p;
}

void print_stage(std::ostream& out, const std::string& stage,
                 const StageResult& r, const std::string& ckpt) {
  out << "stage=" << stage << " first_loss=" << r.first_loss
      << " final_loss=" << r.final_loss << " ckpt=" << ckpt << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  out << std::setprecision(6);
  CLI::App app{"dual-resolution joint speech-text model toolkit"};
  app.require_subcommand(1);

  CommonArgs c;
  int exit_code = 0;

  auto* gen_corpus = app.add_subcommand("gen-corpus", "synthesize task corpora");
  add_common(gen_corpus, c);
  gen_corpus->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    stage_gen_corpus(cfg, c.seed, c.out);
    SyntheticCodec codec = codec_from(cfg);
    for (const char* split : {"train", "heldout"}) {
      const std::string path = c.out + "/corpus_" + split + ".txt";
      Corpus cp = load_corpus(path, codec);
      out << "wrote " << path << " (" << cp.samples.size() << " samples)\n";
    }
  });

  auto* prealign = app.add_subcommand("prealign", "speech-side alignment stage");
  add_common(prealign, c);
  prealign->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    print_stage(out, "prealign", stage_prealign(cfg, c.seed, c.out),
                ckpt_path(c.out, "prealign"));
  });

  auto* train1 = app.add_subcommand("train-stage1", "high-LR joint stage");
  add_common(train1, c);
  train1->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    print_stage(out, "cocktail1", stage_train1(cfg, c.seed, c.out),
                ckpt_path(c.out, "cocktail1"));
  });

  auto* merge_cmd = app.add_subcommand("merge", "interpolate stage-1 weights with the base");
  add_common(merge_cmd, c);
  merge_cmd->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    stage_merge(cfg, c.out);
    out << "wrote " << ckpt_path(c.out, "merged") << "\n";
  });

  auto* train2 = app.add_subcommand("train-stage2", "low-LR joint stage from the merge");
  add_common(train2, c);
  train2->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    print_stage(out, "cocktail2", stage_train2(cfg, c.seed, c.out),
                ckpt_path(c.out, "cocktail2"));
  });

  auto* dpo = app.add_subcommand("dpo", "preference optimization stage");
  add_common(dpo, c);
  dpo->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    DpoStageResult r = stage_dpo(cfg, c.seed, c.out);
    out << "stage=dpo first_loss=" << r.first_loss
        << " final_loss=" << r.final_loss << " first_margin=" << r.first_margin
        << " final_margin=" << r.final_margin
        << " ckpt=" << ckpt_path(c.out, "dpo") << "\n";
  });

  std::string ckpt_flag;
  std::vector<int> query;
  int max_new = 0;
  bool sampled = false;
  auto* generate_cmd = app.add_subcommand("generate", "answer a query with a checkpoint");
  add_common(generate_cmd, c);
  generate_cmd->add_option("--ckpt", ckpt_flag, "checkpoint file (default: newest stage in --out)");
  generate_cmd->add_option("--query", query, "query text ids")->required()->expected(-1);
  generate_cmd->add_option("--max-new", max_new, "cap on generated frames (0 = until EOS)");
  generate_cmd->add_flag("--sample", sampled, "sample instead of greedy decoding");
  generate_cmd->callback([&] {
    Config cfg = load_config(c);
    ModelConfig mc = model_config_from(cfg);
    SyntheticCodec codec = codec_from(cfg);
    ParamSet p = load_checkpoint(pick_ckpt(c.out, ckpt_flag));
    Sample s;
    s.query = query;
    std::vector<DualFrame> prompt = sample_prompt(s, codec, mc);
    GenMode mode;
    mode.greedy = !sampled;
    mode.seed = c.seed;
    std::vector<JointStep> steps = generate(p, mc, prompt, codec.text_vocab(),
                                            mode, nullptr, max_new);
    std::vector<int> text;
    for (size_t i = 0; i < steps.size(); ++i) {
      out << "frame " << i << " text=" << steps[i].text << " speech="
          << join_ids(steps[i].speech, ',') << "\n";
      if (steps[i].text != codec.text_vocab().eos &&
          steps[i].text != codec.text_vocab().sil)
        text.push_back(steps[i].text);
    }
    out << "text: " << join_ids(text, ' ') << "\n";
  });

  int n_scripts = 20;
  int rounds = 2;
  double p_barge_flag = 0.5;
  auto* duplex_sim = app.add_subcommand("duplex-sim", "run scripted duplex sessions and score them");
  add_common(duplex_sim, c);
  duplex_sim->add_option("--ckpt", ckpt_flag, "checkpoint file (default: newest stage in --out)");
  duplex_sim->add_option("--scripts", n_scripts, "number of scripts")->check(CLI::PositiveNumber);
  duplex_sim->add_option("--rounds", rounds, "dialogue rounds per script")->check(CLI::PositiveNumber);
  auto* barge_opt = duplex_sim->add_option("--p-barge", p_barge_flag, "barge-in probability");
  duplex_sim->callback([&] {
    ensure_out(c);
    Config cfg = load_config(c);
    ModelConfig mc = model_config_from(cfg);
    SyntheticCodec codec = codec_from(cfg);
    AugmentPolicy policy = duplex_policy_from(cfg, mc);
    if (barge_opt->count()) policy.p_barge = p_barge_flag;
    ParamSet p = load_checkpoint(pick_ckpt(c.out, ckpt_flag));
    Corpus held = load_corpus(c.out + "/corpus_heldout.txt", codec);
    std::vector<Dialogue> dialogues = dialogues_from(held, rounds);
    if (static_cast<int>(dialogues.size()) > n_scripts) dialogues.resize(n_scripts);
    std::vector<DuplexScript> scripts =
        synthesize_duplex(dialogues, policy, c.seed);
    std::vector<DuplexTrace> traces;
    for (const DuplexScript& s : scripts)
      traces.push_back(run_duplex(s, p, mc, codec));
    save_scripts(c.out + "/duplex_scripts.txt", scripts);
    save_traces(c.out + "/duplex_traces.txt", traces);
    const int ws = static_cast<int>(cfg.get_int("duplex", "start_window", 10));
    const int wy = static_cast<int>(cfg.get_int("duplex", "yield_window", 10));
    DuplexMetrics m = score_duplex(traces, scripts, codec, ws, wy);
    out << "scripts=" << scripts.size() << " turns=" << m.turns
        << " s2m_t=" << m.s2m_t << " s2m_s=" << m.s2m_s
        << " ttsr=" << m.turn_taking << "\n";
  });

  std::string split = "heldout";
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a corpus split");
  add_common(eval_cmd, c);
  eval_cmd->add_option("--ckpt", ckpt_flag, "checkpoint file (default: newest stage in --out)");
  eval_cmd->add_option("--split", split, "train or heldout")
      ->check(CLI::IsMember({"train", "heldout"}));
  eval_cmd->callback([&] {
    Config cfg = load_config(c);
    ModelConfig mc = model_config_from(cfg);
    SyntheticCodec codec = codec_from(cfg);
    ParamSet p = load_checkpoint(pick_ckpt(c.out, ckpt_flag));
    Corpus cp = load_corpus(c.out + "/corpus_" + split + ".txt", codec);
    EvalReport r = evaluate(p, mc, cp, codec);
    out << "split=" << split << " samples=" << r.samples
        << " exact_match=" << r.exact_match
        << " token_accuracy=" << r.token_accuracy
        << " alignment_error=" << r.alignment_error << "\n";
  });

  int instances = 20;
  double eps = 1e-3, tol = 1e-4;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "gradients vs central finite differences");
  add_common(gradcheck_cmd, c);
  gradcheck_cmd->add_option("--instances", instances, "random instances per check")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--eps", eps, "finite-difference step");
  gradcheck_cmd->add_option("--tol", tol, "relative error bound");
  gradcheck_cmd->callback([&] {
    bool all_pass = true;
    for (const CheckResult& r : gradcheck_all(c.seed, instances, eps, tol)) {
      out << (r.pass ? "PASS" : "FAIL") << " " << r.name
          << " max_rel=" << r.max_rel << " instances=" << r.instances << "\n";
      all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
      err << "error: domain: gradient check failed\n";
      exit_code = 1;
    }
  });

  try {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("dualres");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";  // what() = kind: message
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace dualres::cli
