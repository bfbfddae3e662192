#include "dualres/tokens.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dualres/error.hpp"

namespace dualres {

void Vocab::validate() const {
  if (size < first_content)
    throw DomainError("vocab size " + std::to_string(size) +
                      " cannot hold the special ids");
  int ids[4] = {sil, bos, eos, pad};
  for (int i = 0; i < 4; ++i) {
    if (ids[i] < 0 || ids[i] >= size)
      throw DomainError("special id " + std::to_string(ids[i]) +
                        " outside vocab of size " + std::to_string(size));
    for (int j = i + 1; j < 4; ++j)
      if (ids[i] == ids[j]) throw DomainError("special ids must be distinct");
  }
}

SyntheticCodec::SyntheticCodec(Vocab text, Vocab speech, int expansion,
                               uint64_t mapping_seed)
    : text_(text), speech_(speech), expansion_(expansion) {
  text_.validate();
  speech_.validate();
  if (expansion_ < 1) throw DomainError("codec expansion must be >= 1");
  std::vector<int> pool;
  for (int s = 0; s < speech_.size; ++s)
    if (!speech_.is_special(s)) pool.push_back(s);
  if (static_cast<int>(pool.size()) < text_.size)
    throw DomainError("speech vocab too small to code " +
                      std::to_string(text_.size) + " text ids");
  code_.assign(expansion_, std::vector<int>(text_.size, -1));
  inv_.assign(expansion_, std::vector<int>(speech_.size, -1));
  for (int j = 0; j < expansion_; ++j) {
    std::vector<int> perm = pool;
    std::mt19937_64 rng(mapping_seed + 0x9e3779b97f4a7c15ull * (j + 1));
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int t = 0; t < text_.size; ++t) {
      code_[j][t] = perm[t];
      inv_[j][perm[t]] = t;
    }
  }
}

std::vector<int> SyntheticCodec::encode_id(int text_id) const {
  if (!text_.contains(text_id))
    throw DomainError("text id " + std::to_string(text_id) +
                      " outside vocab of size " + std::to_string(text_.size));
  std::vector<int> g(expansion_);
  for (int j = 0; j < expansion_; ++j) g[j] = code_[j][text_id];
  return g;
}

TokenStream SyntheticCodec::encode(const TokenStream& text) const {
  TokenStream out;
  out.rate_hz = 25;
  out.channel = text.channel;
  out.modality = Modality::speech;
  out.ids.reserve(text.ids.size() * expansion_);
  for (size_t i = 0; i < text.ids.size(); ++i) {
    if (!text_.contains(text.ids[i]))
      throw DomainError("text id " + std::to_string(text.ids[i]) +
                        " out of range at position " + std::to_string(i));
    for (int j = 0; j < expansion_; ++j) out.ids.push_back(code_[j][text.ids[i]]);
  }
  return out;
}

std::optional<int> SyntheticCodec::decode_group(const std::vector<int>& group) const {
  if (static_cast<int>(group.size()) != expansion_) return std::nullopt;
  int s0 = group[0];
  if (s0 < 0 || s0 >= speech_.size) return std::nullopt;
  int t = inv_[0][s0];
  if (t < 0) return std::nullopt;
  for (int j = 1; j < expansion_; ++j)
    if (group[j] != code_[j][t]) return std::nullopt;
  return t;
}

TokenStream SyntheticCodec::decode(const TokenStream& speech) const {
  if (speech.ids.size() % expansion_ != 0)
    throw DomainError("speech stream length " +
                      std::to_string(speech.ids.size()) +
                      " is not a multiple of expansion " +
                      std::to_string(expansion_));
  TokenStream out;
  out.rate_hz = 5;
  out.channel = speech.channel;
  out.modality = Modality::text;
  for (size_t g = 0; g * expansion_ < speech.ids.size(); ++g) {
    std::vector<int> grp(speech.ids.begin() + g * expansion_,
                         speech.ids.begin() + (g + 1) * expansion_);
    auto t = decode_group(grp);
    if (!t)
      throw DomainError("group " + std::to_string(g) + " is not a codeword");
    out.ids.push_back(*t);
  }
  return out;
}

std::vector<DualFrame> align_streams(const TokenStream& speech,
                                     const TokenStream& text, int k,
                                     const Vocab& text_vocab,
                                     const Vocab& speech_vocab) {
  if (k < 1) throw DomainError("grouping factor must be >= 1");
  for (size_t i = 0; i < speech.ids.size(); ++i)
    if (!speech_vocab.contains(speech.ids[i]))
      throw DomainError("speech id " + std::to_string(speech.ids[i]) +
                        " out of range at position " + std::to_string(i));
  for (size_t i = 0; i < text.ids.size(); ++i)
    if (!text_vocab.contains(text.ids[i]))
      throw DomainError("text id " + std::to_string(text.ids[i]) +
                        " out of range at position " + std::to_string(i));
  const size_t frames = (speech.ids.size() + k - 1) / k;
  if (text.ids.size() > frames)
    throw AlignmentError("text stream of length " +
                         std::to_string(text.ids.size()) +
                         " exceeds the " + std::to_string(frames) +
                         " frames of the speech stream");
  std::vector<DualFrame> out(frames);
  for (size_t f = 0; f < frames; ++f) {
    DualFrame& df = out[f];
    df.speech_group.assign(k, speech_vocab.pad);
    for (int j = 0; j < k; ++j) {
      size_t idx = f * k + j;
      if (idx < speech.ids.size()) df.speech_group[j] = speech.ids[idx];
    }
    df.text_id = f < text.ids.size() ? text.ids[f] : text_vocab.sil;
  }
  return out;
}

void frames_to_streams(const std::vector<DualFrame>& frames,
                       TokenStream& speech_out, TokenStream& text_out) {
  speech_out.ids.clear();
  text_out.ids.clear();
  speech_out.rate_hz = 25;
  speech_out.modality = Modality::speech;
  text_out.rate_hz = 5;
  text_out.modality = Modality::text;
  for (const auto& f : frames) {
    speech_out.ids.insert(speech_out.ids.end(), f.speech_group.begin(),
                          f.speech_group.end());
    text_out.ids.push_back(f.text_id);
  }
}

namespace {
const char* channel_name(Channel c) {
  return c == Channel::user ? "user" : "assistant";
}
const char* modality_name(Modality m) {
  return m == Modality::speech ? "speech" : "text";
}
}  // namespace

std::string format_stream(const TokenStream& s) {
  std::ostringstream out;
  out << channel_name(s.channel) << " " << modality_name(s.modality) << " "
      << s.rate_hz << ":";
  for (int id : s.ids) out << " " << id;
  return out.str();
}

TokenStream parse_stream(const std::string& line) {
  std::istringstream in(line);
  std::string chan, mod, rate;
  if (!(in >> chan >> mod >> rate))
    throw DomainError("malformed stream line '" + line + "'");
  if (rate.empty() || rate.back() != ':')
    throw DomainError("missing ':' after rate in stream line");
  TokenStream s;
  if (chan == "user")
    s.channel = Channel::user;
  else if (chan == "assistant")
    s.channel = Channel::assistant;
  else
    throw DomainError("unknown channel '" + chan + "'");
  if (mod == "speech")
    s.modality = Modality::speech;
  else if (mod == "text")
    s.modality = Modality::text;
  else
    throw DomainError("unknown modality '" + mod + "'");
  try {
    s.rate_hz = std::stoi(rate.substr(0, rate.size() - 1));
  } catch (const std::exception&) {
    throw DomainError("bad rate '" + rate + "'");
  }
  long long id;
  while (in >> id) s.ids.push_back(static_cast<int>(id));
  if (!in.eof()) throw DomainError("trailing junk in stream line '" + line + "'");
  return s;
}

std::vector<TokenStream> load_streams(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open stream file " + path);
  std::vector<TokenStream> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(parse_stream(line));
  }
  return out;
}

void save_streams(const std::string& path, const std::vector<TokenStream>& v) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write stream file " + path);
  for (const auto& s : v) f << format_stream(s) << "\n";
}

}  // namespace dualres
