#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualres/corpus.hpp"
#include "dualres/model.hpp"
#include "dualres/tokens.hpp"

namespace dualres {

// Scripted user turn plus its gold response schedule. The user speaks frames
// [start, end); the gold assistant speaks [r_start, r_end), one text id (and
// its codec speech group) per frame, ending with EOS unless a barge-in
// truncates it. A turn with barge=true starts inside the previous response.
struct DuplexTurn {
  int start = 0;
  int end = 0;
  bool barge = false;
  std::vector<int> query;
  std::vector<int> answer;
  int r_start = 0;
  int r_end = 0;

  int scheduled_frames() const { return r_end - r_start; }
};

struct Backchannel {
  int start = 0;
  int end = 0;
  std::vector<int> ids;
};

struct DuplexScript {
  int id = 0;
  int frames = 0;
  std::vector<DuplexTurn> turns;
  std::vector<Backchannel> backchannels;
};

struct AugmentPolicy {
  int response_gap = 2;    // user turn end -> gold response start
  int inter_turn_gap = 3;  // response end -> next user turn
  double p_barge = 0.0;
  int yield_latency = 1;   // gold frames spoken past a barge start
  double p_backchannel = 0.0;
  int backchannel_len = 1;
  int tail_silence = 8;
  int max_frames = 128;
};

struct Dialogue {
  std::vector<Sample> rounds;
};

// Deterministic augmentation of half-duplex dialogues into frame-level
// scripts. A barge-in is the next round's turn starting mid-response; at the
// final round the barging turn recycles the first round, so p_barge=1 puts
// exactly one barge inside every dialogue-round response.
std::vector<DuplexScript> synthesize_duplex(const std::vector<Dialogue>& dialogues,
                                            const AugmentPolicy& policy,
                                            uint64_t seed);

std::vector<Dialogue> dialogues_from(const Corpus& c, int rounds_per_dialogue);

// Gold channel rendering shared by training and scoring. Silence is the
// all-SIL speech group and the SIL text id.
struct DuplexGold {
  std::vector<std::vector<int>> user_group;  // frames x k
  std::vector<std::vector<int>> asst_group;
  std::vector<int> asst_text;
};
DuplexGold render_gold(const DuplexScript& s, const SyntheticCodec& codec,
                       const ModelConfig& cfg);

// Fully supervised duplex training sequence (all frames, user channel set).
SeqItem duplex_item(const DuplexScript& s, const SyntheticCodec& codec,
                    const ModelConfig& cfg);
std::vector<SeqItem> duplex_items(const std::vector<DuplexScript>& scripts,
                                  const SyntheticCodec& codec,
                                  const ModelConfig& cfg);

struct TurnEvent {
  enum class Kind {
    user_starts,
    user_stops,
    assistant_starts,
    assistant_yields,
    barge_in
  };
  Kind kind;
  int t = 0;
};
std::string event_kind_name(TurnEvent::Kind k);
TurnEvent::Kind event_kind_from_name(const std::string& name);

struct DuplexFrameRec {
  std::vector<int> user_group;
  std::vector<int> asst_group;
  int asst_text = 0;
};

struct DuplexTrace {
  int script_id = 0;
  std::vector<DuplexFrameRec> frames;
  std::vector<TurnEvent> events;
};

// Frame-synchronous simulator: each step consumes one user frame and emits
// the assistant frame plus the turn events derived from activity transitions.
class DuplexSession {
 public:
  DuplexSession(const ParamSet& p, const ModelConfig& cfg, const Vocab& text_vocab,
                const Vocab& speech_vocab);

  struct StepOut {
    std::vector<int> asst_group;
    int asst_text = 0;
    std::vector<TurnEvent> events;
  };
  StepOut step(const std::vector<int>& user_group);
  int frames_seen() const { return seq_.frames(); }

 private:
  const ParamSet& p_;
  ModelConfig cfg_;
  Vocab tv_, sv_;
  SeqItem seq_;  // grows one frame per step
  int last_text_;
  std::vector<int> last_group_;
  bool user_active_ = false;
  bool asst_active_ = false;
};

DuplexTrace run_duplex(const DuplexScript& s, const ParamSet& p,
                       const ModelConfig& cfg, const SyntheticCodec& codec,
                       ModelStats* stats = nullptr);

struct DuplexMetrics {
  double s2m_t = 0;        // percent
  double s2m_s = 0;        // percent
  double turn_taking = 0;  // percent
  int turns = 0;

  void validate() const;
};

DuplexMetrics score_duplex(const std::vector<DuplexTrace>& traces,
                           const std::vector<DuplexScript>& scripts,
                           const SyntheticCodec& codec, int start_window,
                           int yield_window);

// Line-delimited records, diffable.
void save_scripts(const std::string& path, const std::vector<DuplexScript>& v);
std::vector<DuplexScript> load_scripts(const std::string& path);
void save_traces(const std::string& path, const std::vector<DuplexTrace>& v);
std::vector<DuplexTrace> load_traces(const std::string& path);
std::string format_trace(const DuplexTrace& t);

}  // namespace dualres
