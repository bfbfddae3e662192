#include "dualres/model.hpp"

#include <cmath>

#include "dualres/error.hpp"
#include "dualres/model_graph.hpp"

namespace dualres {

namespace detail {

int GraphCtx::param(const std::string& name) const {
  auto it = pnode.find(name);
  if (it == pnode.end()) throw DomainError("no parameter named " + name);
  return it->second;
}

GraphCtx make_ctx(const ParamSet& p, const ModelConfig& cfg, bool with_grad) {
  GraphCtx g;
  g.cfg = &cfg;
  g.with_grad = with_grad;
  for (const auto& [name, m] : p.t)
    g.pnode.emplace(name, g.tape.input(m, with_grad));
  return g;
}

namespace {

Mat causal_mask(int T) {
  Mat m(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j) m.at(i, j) = -1e30;
  return m;
}

int group_channel(GraphCtx& g, const std::vector<std::vector<int>>& groups,
                  int pad_id) {
  const ModelConfig& cfg = *g.cfg;
  const int T = static_cast<int>(groups.size());
  std::vector<int> flat;
  std::vector<char> zero;
  flat.reserve(static_cast<size_t>(T) * cfg.k);
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(groups[t].size()) != cfg.k)
      throw ShapeError("speech group at frame " + std::to_string(t) + " has " +
                       std::to_string(groups[t].size()) + " ids, expected k=" +
                       std::to_string(cfg.k));
    for (int id : groups[t]) {
      flat.push_back(id);
      zero.push_back(id == pad_id ? 1 : 0);
    }
  }
  int emb = g.tape.rows_gather(g.param("speech_emb"), flat, &zero);
  int flat2 = g.tape.reshape_rows(emb, T, cfg.k * cfg.d_s);
  return g.tape.matmul_nt(flat2, g.param("group_proj.w"));
}

}  // namespace

int build_inputs(GraphCtx& g, const SeqItem& item) {
  const ModelConfig& cfg = *g.cfg;
  const int T = item.frames();
  if (T > cfg.max_frames)
    throw ContextOverflowError("sequence of " + std::to_string(T) +
                               " frames exceeds max_frames=" +
                               std::to_string(cfg.max_frames));
  if (T == 0) throw ShapeError("empty sequence");
  const Vocab sv = Vocab{cfg.vocab_speech};
  int x = group_channel(g, item.speech_in, sv.pad);
  if (!item.user_in.empty()) {
    if (static_cast<int>(item.user_in.size()) != T)
      throw ShapeError("user channel length mismatch");
    x = g.tape.add(x, group_channel(g, item.user_in, sv.pad));
  }
  int temb = g.tape.rows_gather(g.param("text_emb"), item.text_in);
  x = g.tape.add(x, temb);
  int pos = g.tape.slice_rows(g.param("pos_emb"), 0, T);
  return g.tape.add(x, pos);
}

int build_transformer(GraphCtx& g, int x, const std::string& prefix, int layers,
                      int heads) {
  ad::Tape& tp = g.tape;
  const int T = tp.val(x).rows;
  const int d = tp.val(x).cols;
  const int hd = d / heads;
  const Mat mask = causal_mask(T);
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    int a = tp.layernorm_rows(x, g.param(lp + ".ln1.g"), g.param(lp + ".ln1.b"));
    int q = tp.matmul_nt(a, g.param(lp + ".attn.wq"));
    int k = tp.matmul_nt(a, g.param(lp + ".attn.wk"));
    int v = tp.matmul_nt(a, g.param(lp + ".attn.wv"));
    std::vector<int> ctx_heads;
    for (int h = 0; h < heads; ++h) {
      int qh = tp.slice_cols(q, h * hd, hd);
      int kh = tp.slice_cols(k, h * hd, hd);
      int vh = tp.slice_cols(v, h * hd, hd);
      int scores = tp.scale(tp.matmul_nt(qh, kh), inv_sqrt_hd);
      scores = tp.add_const(scores, mask);
      int att = tp.softmax_rows(scores);
      ctx_heads.push_back(tp.matmul(att, vh));
    }
    int ctx = heads == 1 ? ctx_heads[0] : tp.concat_cols(ctx_heads);
    x = tp.add(x, tp.matmul_nt(ctx, g.param(lp + ".attn.wo")));
    int b = tp.layernorm_rows(x, g.param(lp + ".ln2.g"), g.param(lp + ".ln2.b"));
    int h1 = tp.gelu(
        tp.add_rowvec(tp.matmul_nt(b, g.param(lp + ".mlp.w1")),
                      g.param(lp + ".mlp.b1")));
    int h2 = tp.add_rowvec(tp.matmul_nt(h1, g.param(lp + ".mlp.w2")),
                           g.param(lp + ".mlp.b2"));
    x = tp.add(x, h2);
  }
  return tp.layernorm_rows(x, g.param(prefix + ".lnf.g"),
                           g.param(prefix + ".lnf.b"));
}

int build_text_logits(GraphCtx& g, int hidden) {
  return g.tape.add_rowvec(g.tape.matmul_nt(hidden, g.param("text_head.w")),
                           g.param("text_head.b"));
}

int build_ungrouped(GraphCtx& g, int hidden) {
  return g.tape.matmul_nt(hidden, g.param("ungroup.w"));
}

int build_srh_logits(GraphCtx& g, const std::vector<int>& prev_ids,
                     int segments) {
  const ModelConfig& cfg = *g.cfg;
  ad::Tape& tp = g.tape;
  const int r = static_cast<int>(prev_ids.size());
  if (r < 1 || r > cfg.k)
    throw ShapeError("refine head takes 1..k inner positions, got " +
                     std::to_string(r));
  int seg = tp.val(segments).rows == r ? segments : tp.slice_rows(segments, 0, r);
  int emb = tp.rows_gather(g.param("srh.emb"), prev_ids);
  int pos = tp.slice_rows(g.param("srh.pos"), 0, r);
  int x = tp.add(tp.add(emb, seg), pos);
  int h = build_transformer(g, x, "srh", cfg.srh_layers, cfg.srh_heads);
  return tp.add_rowvec(tp.matmul_nt(h, g.param("srh.head.w")),
                       g.param("srh.head.b"));
}

ItemLossNodes build_item_loss(GraphCtx& g, const SeqItem& item,
                              ModelStats* stats) {
  const ModelConfig& cfg = *g.cfg;
  item.validate(cfg);
  ad::Tape& tp = g.tape;
  const int T = item.frames();
  int x = build_inputs(g, item);
  int hfin = build_transformer(g, x, "backbone", cfg.layers, cfg.heads);
  if (stats) {
    stats->backbone_frames += T;
    stats->backbone_calls += 1;
  }

  ItemLossNodes out;
  std::vector<int> text_targets(T, 0);
  std::vector<double> text_weights(T, 0.0);
  for (int t = 0; t < T; ++t) {
    if (!item.targets[t].text_on) continue;
    text_targets[t] = item.targets[t].text;
    text_weights[t] = 1.0;
    ++out.text_positions;
  }
  if (out.text_positions > 0) {
    int tl = build_text_logits(g, hfin);
    out.text = tp.cross_entropy_sum(tl, text_targets, text_weights);
    out.text_val = tp.val(out.text).at(0, 0);
  }

  std::vector<int> srh_terms;
  int useg = -1;
  for (int t = 0; t < T; ++t) {
    const Target& tgt = item.targets[t];
    if (!tgt.speech_on()) continue;
    if (useg < 0) useg = build_ungrouped(g, hfin);
    int seg =
        tp.reshape_rows(tp.slice_rows(useg, t, 1), cfg.k, cfg.d_seg());
    std::vector<int> prev(cfg.k);
    prev[0] = item.speech_in[t].back();
    for (int i = 1; i < cfg.k; ++i) prev[i] = tgt.speech[i - 1];
    int logits = build_srh_logits(g, prev, seg);
    std::vector<double> w(tgt.speech_mask.begin(), tgt.speech_mask.end());
    for (double wv : w) out.speech_positions += wv > 0 ? 1 : 0;
    srh_terms.push_back(tp.cross_entropy_sum(logits, tgt.speech, w));
    if (stats) stats->srh_groups += 1;
  }
  if (!srh_terms.empty()) {
    out.srh = tp.sum_scalars(srh_terms);
    out.srh_val = tp.val(out.srh).at(0, 0);
  }
  if (out.text_positions == 0 && out.speech_positions == 0)
    throw DomainError("sequence has no supervised positions");
  return out;
}

void accumulate_grads(GraphCtx& g, GradMap& grads) {
  for (const auto& [name, node] : g.pnode) {
    const Mat& gm = g.tape.grad(node);
    auto it = grads.find(name);
    if (it == grads.end())
      grads.emplace(name, gm);
    else
      add_inplace(it->second, gm);
  }
}

}  // namespace detail

void SeqItem::validate(const ModelConfig& cfg) const {
  const size_t T = text_in.size();
  if (speech_in.size() != T || targets.size() != T)
    throw ShapeError("sequence channel lengths disagree");
  if (!user_in.empty() && user_in.size() != T)
    throw ShapeError("user channel length mismatch");
  for (size_t t = 0; t < T; ++t) {
    const Target& tg = targets[t];
    if (tg.speech.size() != tg.speech_mask.size())
      throw ShapeError("target mask length mismatch at frame " +
                       std::to_string(t));
    if (!tg.speech.empty() &&
        static_cast<int>(tg.speech.size()) != cfg.k)
      throw ShapeError("target group at frame " + std::to_string(t) +
                       " has " + std::to_string(tg.speech.size()) +
                       " ids, expected k=" + std::to_string(cfg.k));
  }
}

LossBreakdown loss_joint(const std::vector<SeqItem>& batch, const ParamSet& p,
                         const ModelConfig& cfg, GradMap* grads,
                         ModelStats* stats) {
  if (batch.empty()) throw DomainError("empty batch");
  detail::GraphCtx g = detail::make_ctx(p, cfg, grads != nullptr);
  LossBreakdown bd;
  std::vector<int> totals;
  for (const SeqItem& item : batch) {
    detail::ItemLossNodes n = detail::build_item_loss(g, item, stats);
    bd.srh += n.srh_val;
    bd.text += n.text_val;
    bd.speech_positions += n.speech_positions;
    bd.text_positions += n.text_positions;
    if (n.srh >= 0) totals.push_back(n.srh);
    if (n.text >= 0) totals.push_back(g.tape.scale(n.text, cfg.lambda_text));
  }
  bd.total = bd.srh + cfg.lambda_text * bd.text;
  if (!std::isfinite(bd.total))
    throw DomainError("non-finite loss");
  if (grads) {
    int loss = g.tape.sum_scalars(totals);
    g.tape.backward(loss);
    detail::accumulate_grads(g, *grads);
  }
  return bd;
}

Mat embed_frame(const DualFrame& frame, const ParamSet& p,
                const ModelConfig& cfg) {
  if (static_cast<int>(frame.speech_group.size()) != cfg.k)
    throw ShapeError("frame group has " +
                     std::to_string(frame.speech_group.size()) +
                     " ids, expected k=" + std::to_string(cfg.k));
  const Vocab sv = Vocab{cfg.vocab_speech};
  const Mat& semb = p.at("speech_emb");
  const Mat& W = p.at("group_proj.w");
  const Mat& temb = p.at("text_emb");
  Mat flat(1, cfg.k * cfg.d_s);
  for (int j = 0; j < cfg.k; ++j) {
    int id = frame.speech_group[j];
    if (id == sv.pad) continue;
    if (id < 0 || id >= semb.rows)
      throw DomainError("speech id " + std::to_string(id) +
                        " out of range at position " + std::to_string(j));
    for (int c = 0; c < cfg.d_s; ++c) flat.at(0, j * cfg.d_s + c) = semb.at(id, c);
  }
  Mat out = matmul_nt(flat, W);
  if (frame.text_id < 0 || frame.text_id >= temb.rows)
    throw DomainError("text id " + std::to_string(frame.text_id) +
                      " out of range");
  for (int c = 0; c < out.cols; ++c) out.at(0, c) += temb.at(frame.text_id, c);
  return out;
}

Mat backbone_forward(const Mat& frames, const ParamSet& p,
                     const ModelConfig& cfg, ModelStats* stats) {
  if (frames.cols != cfg.d_text)
    throw ShapeError("frame embeddings " + shape_str(frames) +
                     " do not match d_text=" + std::to_string(cfg.d_text));
  if (frames.rows > cfg.max_frames)
    throw ContextOverflowError("sequence of " + std::to_string(frames.rows) +
                               " frames exceeds max_frames=" +
                               std::to_string(cfg.max_frames));
  if (frames.rows == 0) throw ShapeError("empty sequence");
  detail::GraphCtx g = detail::make_ctx(p, cfg, false);
  int x = g.tape.constant(frames);
  int h = detail::build_transformer(g, x, "backbone", cfg.layers, cfg.heads);
  if (stats) {
    stats->backbone_frames += frames.rows;
    stats->backbone_calls += 1;
  }
  return g.tape.val(h);
}

Mat text_head_logits(const Mat& hidden, const ParamSet& p) {
  const Mat& W = p.at("text_head.w");
  const Mat& b = p.at("text_head.b");
  Mat out = matmul_nt(hidden, W);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += b.at(0, j);
  return out;
}

namespace {

int pick(const Mat& logits_row, const GenMode& mode, std::mt19937_64* rng) {
  const int n = logits_row.cols;
  if (mode.greedy || rng == nullptr) {
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (logits_row.at(0, j) > logits_row.at(0, best)) best = j;
    return best;
  }
  double m = logits_row.at(0, 0);
  for (int j = 1; j < n; ++j) m = std::max(m, logits_row.at(0, j));
  std::vector<double> probs(n);
  double z = 0;
  for (int j = 0; j < n; ++j) {
    probs[j] = std::exp(logits_row.at(0, j) - m);
    z += probs[j];
  }
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = dist(*rng) * z;
  double acc = 0;
  for (int j = 0; j < n; ++j) {
    acc += probs[j];
    if (u < acc) return j;
  }
  return n - 1;
}

}  // namespace

std::vector<int> srh_decode_frame(SrhState& st, const ParamSet& p,
                                  const ModelConfig& cfg, const GenMode& mode,
                                  std::mt19937_64* rng) {
  if (st.segments.rows != cfg.k || st.segments.cols != cfg.d_seg())
    throw ShapeError("segments " + shape_str(st.segments) + ", expected (" +
                     std::to_string(cfg.k) + "x" +
                     std::to_string(cfg.d_seg()) + ")");
  std::vector<int> ids;
  std::vector<int> prev = {st.prev_id};
  for (int i = 0; i < cfg.k; ++i) {
    detail::GraphCtx g = detail::make_ctx(p, cfg, false);
    int seg = g.tape.constant(st.segments);
    int logits = detail::build_srh_logits(g, prev, seg);
    Mat last = g.tape.val(logits);
    Mat row(1, last.cols);
    for (int j = 0; j < last.cols; ++j) row.at(0, j) = last.at(i, j);
    int id = pick(row, mode, rng);
    ids.push_back(id);
    prev.push_back(id);
  }
  st.emitted.insert(st.emitted.end(), ids.begin(), ids.end());
  return ids;
}

std::vector<JointStep> generate(const ParamSet& p, const ModelConfig& cfg,
                                const std::vector<DualFrame>& prompt,
                                const Vocab& text_vocab, const GenMode& mode,
                                ModelStats* stats, int max_new) {
  if (prompt.empty()) throw DomainError("empty prompt");
  SeqItem seq;
  for (const DualFrame& f : prompt) {
    seq.speech_in.push_back(f.speech_group);
    seq.text_in.push_back(f.text_id);
  }
  std::mt19937_64 rng(mode.seed);
  std::vector<JointStep> out;
  for (;;) {
    const int T = seq.frames();
    if (T >= cfg.max_frames) {
      if (out.empty())
        throw ContextOverflowError(
            "prompt of " + std::to_string(T) +
            " frames leaves no room to generate (max_frames=" +
            std::to_string(cfg.max_frames) + ")");
      break;
    }
    detail::GraphCtx g = detail::make_ctx(p, cfg, false);
    seq.targets.assign(T, Target{});
    int x = detail::build_inputs(g, seq);
    int hfin = detail::build_transformer(g, x, "backbone", cfg.layers, cfg.heads);
    if (stats) {
      stats->backbone_frames += T;
      stats->backbone_calls += 1;
    }
    int tl = detail::build_text_logits(g, hfin);
    const Mat& tlv = g.tape.val(tl);
    Mat trow(1, tlv.cols);
    for (int j = 0; j < tlv.cols; ++j) trow.at(0, j) = tlv.at(T - 1, j);
    int text_id = pick(trow, mode, &rng);

    int useg = detail::build_ungrouped(g, hfin);
    const Mat& uv = g.tape.val(useg);
    SrhState st;
    st.segments = Mat(cfg.k, cfg.d_seg());
    for (int j = 0; j < cfg.d_g; ++j)
      st.segments.a[j] = uv.at(T - 1, j);
    st.prev_id = seq.speech_in.back().back();
    std::vector<int> group = srh_decode_frame(st, p, cfg, mode, &rng);
    if (stats) stats->srh_groups += 1;

    out.push_back(JointStep{group, text_id});
    seq.speech_in.push_back(group);
    seq.text_in.push_back(text_id);
    if (text_id == text_vocab.eos) break;
    if (max_new > 0 && static_cast<int>(out.size()) >= max_new) break;
  }
  return out;
}

SeqItem make_training_item(const std::vector<DualFrame>& frames,
                           int first_target_frame, const ModelConfig& cfg,
                           const Vocab& speech_vocab) {
  const int F = static_cast<int>(frames.size());
  if (F < 2) throw DomainError("need at least two frames to supervise");
  if (first_target_frame < 1 || first_target_frame >= F)
    throw DomainError("first_target_frame " +
                      std::to_string(first_target_frame) +
                      " outside [1," + std::to_string(F) + ")");
  // Inputs keep all F aligned frames (the last row is simply unsupervised);
  // the per-epoch backbone frame count then scales exactly with the aligned
  // length, which the grouping-efficiency comparison relies on.
  SeqItem item;
  item.speech_in.reserve(F);
  item.text_in.reserve(F);
  item.targets.assign(F, Target{});
  for (int t = 0; t < F; ++t) {
    item.speech_in.push_back(frames[t].speech_group);
    item.text_in.push_back(frames[t].text_id);
    if (t + 1 >= F || t + 1 < first_target_frame) continue;
    const DualFrame& nxt = frames[t + 1];
    Target& tg = item.targets[t];
    tg.text = nxt.text_id;
    tg.text_on = true;
    tg.speech = nxt.speech_group;
    tg.speech_mask.assign(cfg.k, 1);
    for (int j = 0; j < cfg.k; ++j)
      if (nxt.speech_group[j] == speech_vocab.pad) tg.speech_mask[j] = 0;
  }
  return item;
}

double sequence_logprob(const SeqItem& item, const ParamSet& p,
                        const ModelConfig& cfg) {
  LossBreakdown bd = loss_joint({item}, p, cfg, nullptr, nullptr);
  return -(bd.srh + bd.text);
}

}  // namespace dualres
