#include "dualres/duplex.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "dualres/error.hpp"
#include "dualres/model_graph.hpp"

namespace dualres {

namespace {

bool group_silent(const std::vector<int>& g, int sil) {
  for (int id : g)
    if (id != sil) return false;
  return true;
}

std::vector<int> silence_group(int k, int sil) {
  return std::vector<int>(static_cast<size_t>(k), sil);
}

}  // namespace

std::vector<Dialogue> dialogues_from(const Corpus& c, int rounds_per_dialogue) {
  if (rounds_per_dialogue < 1) throw DomainError("need at least one round");
  std::vector<Dialogue> out;
  Dialogue cur;
  for (const Sample& s : c.samples) {
    cur.rounds.push_back(s);
    if (static_cast<int>(cur.rounds.size()) == rounds_per_dialogue) {
      out.push_back(std::move(cur));
      cur = Dialogue{};
    }
  }
  return out;
}

std::vector<DuplexScript> synthesize_duplex(const std::vector<Dialogue>& dialogues,
                                            const AugmentPolicy& policy,
                                            uint64_t seed) {
  if (dialogues.empty()) throw DomainError("empty dialogue corpus");
  std::vector<DuplexScript> scripts;
  scripts.reserve(dialogues.size());
  for (size_t di = 0; di < dialogues.size(); ++di) {
    const Dialogue& d = dialogues[di];
    if (d.rounds.empty()) throw DomainError("empty dialogue");
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (di + 1)));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    DuplexScript s;
    s.id = static_cast<int>(di);
    std::vector<Sample> rounds = d.rounds;
    const size_t original = rounds.size();
    int next_start = 1;
    bool next_barge = false;
    int high_water = 0;
    for (size_t i = 0; i < rounds.size(); ++i) {
      const Sample& r = rounds[i];
      if (r.query.empty()) throw DomainError("round with empty query");
      DuplexTurn turn;
      turn.start = next_start;
      turn.end = turn.start + static_cast<int>(r.query.size());
      turn.barge = next_barge;
      turn.query = r.query;
      turn.answer = r.answer;
      turn.r_start = turn.end + policy.response_gap;
      const int full_end =
          turn.r_start + static_cast<int>(r.answer.size()) + 1;
      const bool can_barge = full_end - turn.r_start >= 2 && i < original;
      if (can_barge && coin(rng) < policy.p_barge) {
        std::uniform_int_distribution<int> where(turn.r_start + 1, full_end - 1);
        const int b = where(rng);
        turn.r_end = std::min(full_end, b + policy.yield_latency);
        if (i + 1 >= rounds.size()) rounds.push_back(rounds[0]);
        next_start = b;
        next_barge = true;
      } else {
        turn.r_end = full_end;
        if (policy.p_backchannel > 0 && full_end - turn.r_start >= 2 &&
            coin(rng) < policy.p_backchannel) {
          std::uniform_int_distribution<int> where(turn.r_start + 1,
                                                   full_end - 1);
          Backchannel bc;
          bc.start = where(rng);
          bc.end = std::min(bc.start + policy.backchannel_len, full_end);
          std::uniform_int_distribution<int> id_dist(Vocab::first_content, 254);
          for (int f = bc.start; f < bc.end; ++f) bc.ids.push_back(id_dist(rng));
          s.backchannels.push_back(std::move(bc));
        }
        next_start = turn.r_end + policy.inter_turn_gap;
        next_barge = false;
      }
      high_water = std::max({high_water, turn.end, turn.r_end});
      s.turns.push_back(std::move(turn));
    }
    s.frames = high_water + policy.tail_silence;
    if (s.frames > policy.max_frames)
      throw DomainError("script " + std::to_string(s.id) + " needs " +
                        std::to_string(s.frames) + " frames, limit " +
                        std::to_string(policy.max_frames));
    scripts.push_back(std::move(s));
  }
  return scripts;
}

DuplexGold render_gold(const DuplexScript& s, const SyntheticCodec& codec,
                       const ModelConfig& cfg) {
  if (codec.expansion() != cfg.k)
    throw DomainError("codec expansion must equal k for duplex rendering");
  const Vocab tv = codec.text_vocab();
  const Vocab sv = codec.speech_vocab();
  DuplexGold g;
  g.user_group.assign(s.frames, silence_group(cfg.k, sv.sil));
  g.asst_group.assign(s.frames, silence_group(cfg.k, sv.sil));
  g.asst_text.assign(s.frames, tv.sil);
  auto put_user = [&](int f, int text_id) {
    if (f < 0 || f >= s.frames)
      throw DomainError("user activity at frame " + std::to_string(f) +
                        " outside script of " + std::to_string(s.frames));
    g.user_group[f] = codec.encode_id(text_id);
  };
  for (const DuplexTurn& t : s.turns) {
    for (size_t j = 0; j < t.query.size(); ++j)
      put_user(t.start + static_cast<int>(j), t.query[j]);
    std::vector<int> sched = t.answer;
    sched.push_back(tv.eos);
    for (int f = t.r_start; f < t.r_end; ++f) {
      if (f < 0 || f >= s.frames)
        throw DomainError("response frame " + std::to_string(f) +
                          " outside script of " + std::to_string(s.frames));
      const int id = sched[f - t.r_start];
      g.asst_text[f] = id;
      g.asst_group[f] = codec.encode_id(id);
    }
  }
  for (const Backchannel& bc : s.backchannels)
    for (int f = bc.start; f < bc.end; ++f) put_user(f, bc.ids[f - bc.start]);
  return g;
}

SeqItem duplex_item(const DuplexScript& s, const SyntheticCodec& codec,
                    const ModelConfig& cfg) {
  const Vocab tv = codec.text_vocab();
  const Vocab sv = codec.speech_vocab();
  DuplexGold g = render_gold(s, codec, cfg);
  SeqItem item;
  item.user_in = g.user_group;
  item.speech_in.resize(s.frames);
  item.text_in.resize(s.frames);
  item.targets.resize(s.frames);
  for (int t = 0; t < s.frames; ++t) {
    item.speech_in[t] = t == 0 ? silence_group(cfg.k, sv.sil) : g.asst_group[t - 1];
    item.text_in[t] = t == 0 ? tv.bos : g.asst_text[t - 1];
    Target& tg = item.targets[t];
    tg.text = g.asst_text[t];
    tg.text_on = true;
    tg.speech = g.asst_group[t];
    tg.speech_mask.assign(cfg.k, 1);
  }
  return item;
}

std::vector<SeqItem> duplex_items(const std::vector<DuplexScript>& scripts,
                                  const SyntheticCodec& codec,
                                  const ModelConfig& cfg) {
  std::vector<SeqItem> out;
  out.reserve(scripts.size());
  for (const DuplexScript& s : scripts) out.push_back(duplex_item(s, codec, cfg));
  return out;
}

std::string event_kind_name(TurnEvent::Kind k) {
  switch (k) {
    case TurnEvent::Kind::user_starts: return "user_starts";
    case TurnEvent::Kind::user_stops: return "user_stops";
    case TurnEvent::Kind::assistant_starts: return "assistant_starts";
    case TurnEvent::Kind::assistant_yields: return "assistant_yields";
    case TurnEvent::Kind::barge_in: return "barge_in";
  }
  return "?";
}

TurnEvent::Kind event_kind_from_name(const std::string& name) {
  if (name == "user_starts") return TurnEvent::Kind::user_starts;
  if (name == "user_stops") return TurnEvent::Kind::user_stops;
  if (name == "assistant_starts") return TurnEvent::Kind::assistant_starts;
  if (name == "assistant_yields") return TurnEvent::Kind::assistant_yields;
  if (name == "barge_in") return TurnEvent::Kind::barge_in;
  throw DomainError("unknown event kind '" + name + "'");
}

DuplexSession::DuplexSession(const ParamSet& p, const ModelConfig& cfg,
                             const Vocab& text_vocab, const Vocab& speech_vocab)
    : p_(p), cfg_(cfg), tv_(text_vocab), sv_(speech_vocab),
      last_text_(text_vocab.bos),
      last_group_(silence_group(cfg.k, speech_vocab.sil)) {}

DuplexSession::StepOut DuplexSession::step(const std::vector<int>& user_group) {
  const int t = seq_.frames();
  if (t >= cfg_.max_frames)
    throw ContextOverflowError("duplex session already holds max_frames=" +
                               std::to_string(cfg_.max_frames));
  if (static_cast<int>(user_group.size()) != cfg_.k)
    throw ShapeError("user frame has " + std::to_string(user_group.size()) +
                     " ids, expected k=" + std::to_string(cfg_.k));
  seq_.user_in.push_back(user_group);
  seq_.speech_in.push_back(last_group_);
  seq_.text_in.push_back(last_text_);
  seq_.targets.push_back(Target{});

  detail::GraphCtx g = detail::make_ctx(p_, cfg_, false);
  int x = detail::build_inputs(g, seq_);
  int hfin = detail::build_transformer(g, x, "backbone", cfg_.layers, cfg_.heads);
  int tl = detail::build_text_logits(g, hfin);
  const Mat& tlv = g.tape.val(tl);
  int text_id = 0;
  for (int j = 1; j < tlv.cols; ++j)
    if (tlv.at(t, j) > tlv.at(t, text_id)) text_id = j;
  int useg = detail::build_ungrouped(g, hfin);
  const Mat& uv = g.tape.val(useg);
  SrhState st;
  st.segments = Mat(cfg_.k, cfg_.d_seg());
  for (int j = 0; j < cfg_.d_g; ++j) st.segments.a[j] = uv.at(t, j);
  st.prev_id = last_group_.back();
  GenMode greedy;
  std::vector<int> group = srh_decode_frame(st, p_, cfg_, greedy);

  StepOut out;
  out.asst_group = group;
  out.asst_text = text_id;
  const bool user_now = !group_silent(user_group, sv_.sil);
  const bool asst_now = text_id != tv_.sil || !group_silent(group, sv_.sil);
  if (user_now && !user_active_) {
    out.events.push_back({TurnEvent::Kind::user_starts, t});
    if (asst_active_) out.events.push_back({TurnEvent::Kind::barge_in, t});
  }
  if (!user_now && user_active_)
    out.events.push_back({TurnEvent::Kind::user_stops, t});
  if (asst_now && !asst_active_)
    out.events.push_back({TurnEvent::Kind::assistant_starts, t});
  if (!asst_now && asst_active_ && user_now)
    out.events.push_back({TurnEvent::Kind::assistant_yields, t});
  user_active_ = user_now;
  asst_active_ = asst_now;
  last_text_ = text_id;
  last_group_ = group;
  return out;
}

DuplexTrace run_duplex(const DuplexScript& s, const ParamSet& p,
                       const ModelConfig& cfg, const SyntheticCodec& codec,
                       ModelStats* stats) {
  DuplexGold gold = render_gold(s, codec, cfg);
  DuplexSession session(p, cfg, codec.text_vocab(), codec.speech_vocab());
  DuplexTrace tr;
  tr.script_id = s.id;
  for (int t = 0; t < s.frames; ++t) {
    DuplexSession::StepOut so = session.step(gold.user_group[t]);
    DuplexFrameRec rec;
    rec.user_group = gold.user_group[t];
    rec.asst_group = so.asst_group;
    rec.asst_text = so.asst_text;
    tr.frames.push_back(std::move(rec));
    for (const TurnEvent& e : so.events) tr.events.push_back(e);
    if (stats) {
      stats->backbone_frames += t + 1;
      stats->backbone_calls += 1;
      stats->srh_groups += 1;
    }
  }
  return tr;
}

void DuplexMetrics::validate() const {
  auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!in_range(s2m_t) || !in_range(s2m_s) || !in_range(turn_taking))
    throw DomainError("duplex metrics must lie in [0,100]");
}

DuplexMetrics score_duplex(const std::vector<DuplexTrace>& traces,
                           const std::vector<DuplexScript>& scripts,
                           const SyntheticCodec& codec, int start_window,
                           int yield_window) {
  if (traces.size() != scripts.size())
    throw DomainError("have " + std::to_string(traces.size()) +
                      " traces for " + std::to_string(scripts.size()) +
                      " scripts");
  const Vocab tv = codec.text_vocab();
  const Vocab sv = codec.speech_vocab();
  long turns = 0, text_ok = 0, speech_ok = 0, tt_ok = 0;
  for (size_t i = 0; i < scripts.size(); ++i) {
    const DuplexScript& s = scripts[i];
    const DuplexTrace& tr = traces[i];
    if (static_cast<int>(tr.frames.size()) != s.frames)
      throw DomainError("trace " + std::to_string(tr.script_id) + " holds " +
                        std::to_string(tr.frames.size()) +
                        " frames for a script of " + std::to_string(s.frames));
    auto active = [&](int f) {
      const DuplexFrameRec& r = tr.frames[f];
      return r.asst_text != tv.sil || !group_silent(r.asst_group, sv.sil);
    };
    for (size_t j = 0; j < s.turns.size(); ++j) {
      const DuplexTurn& turn = s.turns[j];
      const int window_end = j + 1 < s.turns.size() ? s.turns[j + 1].start
                                                    : s.frames;
      ++turns;

      // Gold answer actually scheduled (truncated by a barge, EOS stripped).
      std::vector<int> gold_txt;
      for (int f = turn.r_start; f < turn.r_end; ++f) {
        const int idx = f - turn.r_start;
        const int id = idx < static_cast<int>(turn.answer.size())
                           ? turn.answer[idx]
                           : tv.eos;
        if (id == tv.eos) break;
        gold_txt.push_back(id);
      }

      std::vector<int> emit_txt;
      bool eos_seen = false;
      for (int f = turn.end; f < window_end && !eos_seen; ++f) {
        const int id = tr.frames[f].asst_text;
        if (id == tv.sil) continue;
        if (id == tv.eos) {
          eos_seen = true;
          break;
        }
        emit_txt.push_back(id);
      }
      if (emit_txt == gold_txt) ++text_ok;

      std::vector<int> emit_sp;
      for (int f = turn.end; f < window_end; ++f) {
        const DuplexFrameRec& r = tr.frames[f];
        if (group_silent(r.asst_group, sv.sil)) continue;
        auto dec = codec.decode_group(r.asst_group);
        const int id = dec ? *dec : -1;
        if (id == tv.eos) break;
        emit_sp.push_back(id);
      }
      if (emit_sp == gold_txt) ++speech_ok;

      bool started = false;
      const int sh = std::min(turn.end + start_window, s.frames);
      for (int f = turn.end; f < sh && !started; ++f) started = active(f);
      bool ok = started;
      if (j + 1 < s.turns.size() && s.turns[j + 1].barge) {
        const int b = s.turns[j + 1].start;
        bool yielded = false;
        const int yh = std::min(b + yield_window + 1, s.frames);
        for (int f = b + 1; f < yh && !yielded; ++f) yielded = !active(f);
        ok = ok && yielded;
      }
      if (ok) ++tt_ok;
    }
  }
  if (turns == 0) throw DomainError("no turns to score");
  DuplexMetrics m;
  m.turns = static_cast<int>(turns);
  m.s2m_t = 100.0 * text_ok / turns;
  m.s2m_s = 100.0 * speech_ok / turns;
  m.turn_taking = 100.0 * tt_ok / turns;
  m.validate();
  return m;
}

namespace {

std::string join_group(const std::vector<int>& g) {
  std::string out;
  for (size_t i = 0; i < g.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(g[i]);
  }
  return out;
}

std::vector<int> split_group(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (cur.empty()) throw DomainError("empty id in group '" + s + "'");
      out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

}  // namespace

void save_scripts(const std::string& path, const std::vector<DuplexScript>& v) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write script file " + path);
  for (const DuplexScript& s : v) {
    f << "script " << s.id << " " << s.frames << "\n";
    for (const DuplexTurn& t : s.turns) {
      f << "turn " << t.start << " " << t.end << " " << (t.barge ? 1 : 0)
        << " " << t.r_start << " " << t.r_end << " q " << t.query.size();
      for (int id : t.query) f << " " << id;
      f << " a " << t.answer.size();
      for (int id : t.answer) f << " " << id;
      f << "\n";
    }
    for (const Backchannel& b : s.backchannels) {
      f << "bc " << b.start << " " << b.end;
      for (int id : b.ids) f << " " << id;
      f << "\n";
    }
    f << "end\n";
  }
}

std::vector<DuplexScript> load_scripts(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open script file " + path);
  std::vector<DuplexScript> out;
  std::string line;
  DuplexScript cur;
  bool open = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "script") {
      if (open) throw DomainError("nested script record in " + path);
      cur = DuplexScript{};
      if (!(in >> cur.id >> cur.frames))
        throw DomainError("malformed script header in " + path);
      open = true;
    } else if (tag == "turn") {
      if (!open) throw DomainError("turn record outside a script in " + path);
      DuplexTurn t;
      int barge = 0;
      std::string qm, am;
      size_t nq = 0, na = 0;
      if (!(in >> t.start >> t.end >> barge >> t.r_start >> t.r_end >> qm >> nq) ||
          qm != "q")
        throw DomainError("malformed turn record in " + path);
      t.barge = barge != 0;
      t.query.resize(nq);
      for (auto& id : t.query)
        if (!(in >> id)) throw DomainError("short turn query in " + path);
      if (!(in >> am >> na) || am != "a")
        throw DomainError("malformed turn record in " + path);
      t.answer.resize(na);
      for (auto& id : t.answer)
        if (!(in >> id)) throw DomainError("short turn answer in " + path);
      cur.turns.push_back(std::move(t));
    } else if (tag == "bc") {
      if (!open) throw DomainError("backchannel record outside a script in " + path);
      Backchannel b;
      if (!(in >> b.start >> b.end))
        throw DomainError("malformed backchannel record in " + path);
      int id;
      while (in >> id) b.ids.push_back(id);
      cur.backchannels.push_back(std::move(b));
    } else if (tag == "end") {
      if (!open) throw DomainError("stray end record in " + path);
      out.push_back(std::move(cur));
      open = false;
    } else {
      throw DomainError("unknown record '" + tag + "' in " + path);
    }
  }
  if (open) throw DomainError("unterminated script record in " + path);
  return out;
}

std::string format_trace(const DuplexTrace& t) {
  std::ostringstream f;
  f << "trace " << t.script_id << " " << t.frames.size() << "\n";
  for (size_t i = 0; i < t.frames.size(); ++i) {
    const DuplexFrameRec& r = t.frames[i];
    f << "frame " << i << " u " << join_group(r.user_group) << " a "
      << join_group(r.asst_group) << " txt " << r.asst_text << "\n";
  }
  for (const TurnEvent& e : t.events)
    f << "event " << e.t << " " << event_kind_name(e.kind) << "\n";
  f << "end\n";
  return f.str();
}

void save_traces(const std::string& path, const std::vector<DuplexTrace>& v) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write trace file " + path);
  for (const DuplexTrace& t : v) f << format_trace(t);
}

std::vector<DuplexTrace> load_traces(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open trace file " + path);
  std::vector<DuplexTrace> out;
  std::string line;
  DuplexTrace cur;
  bool open = false;
  size_t expect = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "trace") {
      if (open) throw DomainError("nested trace record in " + path);
      cur = DuplexTrace{};
      if (!(in >> cur.script_id >> expect))
        throw DomainError("malformed trace header in " + path);
      open = true;
    } else if (tag == "frame") {
      if (!open) throw DomainError("frame record outside a trace in " + path);
      int idx;
      std::string um, am, tm, ug, ag;
      DuplexFrameRec r;
      if (!(in >> idx >> um >> ug >> am >> ag >> tm >> r.asst_text) ||
          um != "u" || am != "a" || tm != "txt")
        throw DomainError("malformed frame record in " + path);
      r.user_group = split_group(ug);
      r.asst_group = split_group(ag);
      cur.frames.push_back(std::move(r));
    } else if (tag == "event") {
      if (!open) throw DomainError("event record outside a trace in " + path);
      TurnEvent e{TurnEvent::Kind::user_starts, 0};
      std::string kind;
      if (!(in >> e.t >> kind))
        throw DomainError("malformed event record in " + path);
      e.kind = event_kind_from_name(kind);
      cur.events.push_back(e);
    } else if (tag == "end") {
      if (!open) throw DomainError("stray end record in " + path);
      if (cur.frames.size() != expect)
        throw DomainError("trace frame count mismatch in " + path);
      out.push_back(std::move(cur));
      open = false;
    } else {
      throw DomainError("unknown record '" + tag + "' in " + path);
    }
  }
  if (open) throw DomainError("unterminated trace record in " + path);
  return out;
}

}  // namespace dualres
