#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dualres/checkpoint.hpp"
#include "dualres/drsr.hpp"
#include "dualres/error.hpp"
#include "dualres/pipeline.hpp"
#include "dualres/training.hpp"

namespace py = pybind11;
using namespace dualres;

namespace {

Mat to_mat(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ShapeError("matrix needs at least one row");
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int i = 0; i < m.rows; ++i) {
    if (static_cast<int>(rows[i].size()) != m.cols)
      throw ShapeError("ragged matrix rows");
    for (int j = 0; j < m.cols; ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

std::vector<std::vector<double>> from_mat(const Mat& m) {
  std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) rows[i][j] = m.at(i, j);
  return rows;
}

Config config_or_default(const std::string& path) {
  return path.empty() ? Config::parse("") : Config::load(path);
}

}  // namespace

PYBIND11_MODULE(dualres, m) {
  m.doc() = "dual-resolution joint speech-text model core";

  py::register_exception<Error>(m, "DualresError");

  m.def(
      "encode",
      [](const std::vector<int>& text, int expansion, uint64_t mapping_seed) {
        SyntheticCodec codec(Vocab::text_default(), Vocab::speech_default(),
                             expansion, mapping_seed);
        TokenStream in{text, 5, Channel::assistant, Modality::text};
        return codec.encode(in).ids;
      },
      py::arg("text"), py::arg("expansion") = 5, py::arg("mapping_seed") = 77,
      "Expand text ids into synthetic speech ids");

  m.def(
      "decode",
      [](const std::vector<int>& speech, int expansion, uint64_t mapping_seed) {
        SyntheticCodec codec(Vocab::text_default(), Vocab::speech_default(),
                             expansion, mapping_seed);
        TokenStream in{speech, 25, Channel::assistant, Modality::speech};
        return codec.decode(in).ids;
      },
      py::arg("speech"), py::arg("expansion") = 5, py::arg("mapping_seed") = 77,
      "Invert encode()");

  m.def(
      "align",
      [](const std::vector<int>& speech, const std::vector<int>& text, int k) {
        TokenStream sp{speech, 25, Channel::assistant, Modality::speech};
        TokenStream tx{text, 5, Channel::assistant, Modality::text};
        std::vector<std::pair<std::vector<int>, int>> out;
        for (const DualFrame& f : align_streams(sp, tx, k,
                                                Vocab::text_default(),
                                                Vocab::speech_default()))
          out.emplace_back(f.speech_group, f.text_id);
        return out;
      },
      py::arg("speech"), py::arg("text"), py::arg("k") = 5,
      "Group speech ids by k and pad text with silence");

  m.def(
      "cosine_lr",
      [](int step, int steps, double lr_start, double lr_end) {
        TrainPlan plan;
        plan.steps = steps;
        plan.lr_start = lr_start;
        plan.lr_end = lr_end;
        return cosine_lr(step, plan);
      },
      py::arg("step"), py::arg("steps"), py::arg("lr_start"),
      py::arg("lr_end"));

  m.def(
      "group_embed",
      [](const std::vector<std::vector<double>>& emb,
         const std::vector<std::vector<double>>& w, int k) {
        return from_mat(group_embed(to_mat(emb), to_mat(w), k));
      },
      py::arg("emb"), py::arg("w"), py::arg("k"),
      "Concatenate k embedding rows per frame and project");

  m.def(
      "ungroup_hidden",
      [](const std::vector<std::vector<double>>& hidden,
         const std::vector<std::vector<double>>& w, int k) {
        return from_mat(ungroup_hidden(to_mat(hidden), to_mat(w), k));
      },
      py::arg("hidden"), py::arg("w"), py::arg("k"),
      "Project frame states and split into k conditioning segments");

  m.def(
      "make_checkpoint",
      [](const std::string& path, uint64_t seed, const std::string& config) {
        ModelConfig mc = model_config_from(config_or_default(config));
        save_checkpoint(path, init_params(mc, seed), "init", "seed");
      },
      py::arg("path"), py::arg("seed") = 0, py::arg("config") = "",
      "Write a freshly initialized checkpoint");

  m.def(
      "checkpoint_meta",
      [](const std::string& path) {
        CheckpointMeta meta;
        ParamSet p = load_checkpoint(path, &meta);
        py::dict d;
        d["stage"] = meta.stage;
        d["plan"] = meta.plan;
        d["digest"] = meta.digest;
        d["tensors"] = p.t.size();
        d["scalars"] = p.scalar_count();
        return d;
      },
      py::arg("path"));

  m.def(
      "merge_checkpoints",
      [](const std::string& m0, const std::string& m1, const std::string& out,
         double alpha, const std::vector<std::string>& exclude) {
        MergeSpec spec;
        spec.alpha = alpha;
        spec.exclude_prefixes = exclude;
        ParamSet r = merge(load_checkpoint(m0), load_checkpoint(m1), spec);
        save_checkpoint(out, r, "merged", "alpha=" + std::to_string(alpha));
      },
      py::arg("m0"), py::arg("m1"), py::arg("out"), py::arg("alpha") = 0.5,
      py::arg("exclude") = std::vector<std::string>{"speech_emb"},
      "Interpolate two checkpoints tensor-wise");

  m.def(
      "eval_checkpoint",
      [](const std::string& ckpt, const std::string& corpus,
         const std::string& config) {
        Config cfg = config_or_default(config);
        ModelConfig mc = model_config_from(cfg);
        SyntheticCodec codec = codec_from(cfg);
        EvalReport r =
            evaluate(load_checkpoint(ckpt), mc, load_corpus(corpus, codec), codec);
        py::dict d;
        d["exact_match"] = r.exact_match;
        d["token_accuracy"] = r.token_accuracy;
        d["alignment_error"] = r.alignment_error;
        d["samples"] = r.samples;
        return d;
      },
      py::arg("ckpt"), py::arg("corpus"), py::arg("config") = "");

  m.def(
      "generate_text",
      [](const std::string& ckpt, const std::vector<int>& query,
         const std::string& config, int max_new) {
        Config cfg = config_or_default(config);
        ModelConfig mc = model_config_from(cfg);
        SyntheticCodec codec = codec_from(cfg);
        Sample s;
        s.query = query;
        GenMode mode;
        std::vector<int> text;
        for (const JointStep& st :
             generate(load_checkpoint(ckpt), mc, sample_prompt(s, codec, mc),
                      codec.text_vocab(), mode, nullptr, max_new))
          text.push_back(st.text);
        return text;
      },
      py::arg("ckpt"), py::arg("query"), py::arg("config") = "",
      py::arg("max_new") = 0,
      "Greedy joint decode; returns the emitted text ids (EOS included)");
}
