#include "dualres/params.hpp"

#include <cmath>
#include <random>

#include "dualres/error.hpp"

namespace dualres {

void ModelConfig::validate() const {
  if (vocab_text < 4 || vocab_speech < 4)
    throw ConfigError("vocab sizes must hold the special ids");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (d_g % k != 0)
    throw ConfigError("d_g=" + std::to_string(d_g) +
                      " must be divisible by k=" + std::to_string(k));
  if (d_text % heads != 0)
    throw ConfigError("d_text must be divisible by heads");
  if (d_seg() % srh_heads != 0)
    throw ConfigError("segment width must be divisible by srh_heads");
  if (layers < 1 || srh_layers < 1) throw ConfigError("need at least one layer");
  if (max_frames < 1) throw ConfigError("max_frames must be >= 1");
  if (d_s < 1 || d_text < 1 || d_g < 1) throw ConfigError("widths must be >= 1");
}

Mat& ParamSet::at(const std::string& name) {
  auto it = t.find(name);
  if (it == t.end()) throw DomainError("no parameter named " + name);
  return it->second;
}

const Mat& ParamSet::at(const std::string& name) const {
  auto it = t.find(name);
  if (it == t.end()) throw DomainError("no parameter named " + name);
  return it->second;
}

bool ParamSet::same_shapes(const ParamSet& o) const {
  if (t.size() != o.t.size()) return false;
  auto a = t.begin();
  auto b = o.t.begin();
  for (; a != t.end(); ++a, ++b)
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  return true;
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const auto& [_, m] : t) n += m.size();
  return n;
}

namespace {

enum class Init { uniform_fanin, zero, one };

void add_tensor(ParamSet& p, std::vector<std::pair<std::string, Init>>& order,
                const std::string& name, int rows, int cols, Init init) {
  p.t.emplace(name, Mat(rows, cols));
  order.emplace_back(name, init);
}

void transformer_block(ParamSet& p,
                       std::vector<std::pair<std::string, Init>>& order,
                       const std::string& prefix, int d) {
  add_tensor(p, order, prefix + ".ln1.g", 1, d, Init::one);
  add_tensor(p, order, prefix + ".ln1.b", 1, d, Init::zero);
  for (const char* w : {"wq", "wk", "wv", "wo"})
    add_tensor(p, order, prefix + ".attn." + std::string(w), d, d,
               Init::uniform_fanin);
  add_tensor(p, order, prefix + ".ln2.g", 1, d, Init::one);
  add_tensor(p, order, prefix + ".ln2.b", 1, d, Init::zero);
  add_tensor(p, order, prefix + ".mlp.w1", 4 * d, d, Init::uniform_fanin);
  add_tensor(p, order, prefix + ".mlp.b1", 1, 4 * d, Init::zero);
  add_tensor(p, order, prefix + ".mlp.w2", d, 4 * d, Init::uniform_fanin);
  add_tensor(p, order, prefix + ".mlp.b2", 1, d, Init::zero);
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParamSet p;
  std::vector<std::pair<std::string, Init>> order;

  add_tensor(p, order, "text_emb", cfg.vocab_text, cfg.d_text,
             Init::uniform_fanin);
  add_tensor(p, order, "speech_emb", cfg.vocab_speech, cfg.d_s,
             Init::uniform_fanin);
  add_tensor(p, order, "pos_emb", cfg.max_frames, cfg.d_text,
             Init::uniform_fanin);
  add_tensor(p, order, "group_proj.w", cfg.d_text, cfg.k * cfg.d_s,
             Init::uniform_fanin);
  add_tensor(p, order, "ungroup.w", cfg.d_g, cfg.d_text, Init::uniform_fanin);
  for (int l = 0; l < cfg.layers; ++l)
    transformer_block(p, order, "backbone.l" + std::to_string(l), cfg.d_text);
  add_tensor(p, order, "backbone.lnf.g", 1, cfg.d_text, Init::one);
  add_tensor(p, order, "backbone.lnf.b", 1, cfg.d_text, Init::zero);
  add_tensor(p, order, "text_head.w", cfg.vocab_text, cfg.d_text,
             Init::uniform_fanin);
  add_tensor(p, order, "text_head.b", 1, cfg.vocab_text, Init::zero);

  const int ds = cfg.d_seg();
  add_tensor(p, order, "srh.emb", cfg.vocab_speech, ds, Init::uniform_fanin);
  add_tensor(p, order, "srh.pos", cfg.k, ds, Init::uniform_fanin);
  for (int l = 0; l < cfg.srh_layers; ++l)
    transformer_block(p, order, "srh.l" + std::to_string(l), ds);
  add_tensor(p, order, "srh.lnf.g", 1, ds, Init::one);
  add_tensor(p, order, "srh.lnf.b", 1, ds, Init::zero);
  add_tensor(p, order, "srh.head.w", cfg.vocab_speech, ds, Init::uniform_fanin);
  add_tensor(p, order, "srh.head.b", 1, cfg.vocab_speech, Init::zero);

  std::mt19937_64 rng(seed);
  for (const auto& [name, init] : order) {
    Mat& m = p.at(name);
    switch (init) {
      case Init::zero:
        break;
      case Init::one:
        for (auto& x : m.a) x = 1.0;
        break;
      case Init::uniform_fanin: {
        double bound = 1.0 / std::sqrt(static_cast<double>(m.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& x : m.a) x = static_cast<double>(static_cast<float>(dist(rng)));
        break;
      }
    }
  }
  return p;
}

}  // namespace dualres
