#pragma once

// Corpus file ingestion: time-aligned word/phone transcripts (.align),
// frame-level F0 tracks (.f0) and boundary label files (.lab).

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "prososeg/common.hpp"

namespace prososeg {

enum class Gender { kMale, kFemale, kUnknown };

inline char gender_code(Gender g) {
  switch (g) {
    case Gender::kMale: return 'm';
    case Gender::kFemale: return 'f';
    default: return 'u';
  }
}

inline Gender gender_from_code(std::string_view s) {
  if (s == "m") return Gender::kMale;
  if (s == "f") return Gender::kFemale;
  if (s == "u") return Gender::kUnknown;
  throw std::runtime_error("bad gender code: " + std::string(s));
}

struct PhoneToken {
  std::string label;
  double duration = 0;          // seconds
  bool is_vowel = false;
  bool in_filled_pause = false;
};

struct WordToken {
  std::string word;
  double start = 0;             // seconds
  double end = 0;
  std::vector<PhoneToken> phones;
  std::string speaker;
};

// One speaker turn: maximal run of same-speaker words within a channel.
struct Utterance {
  std::string channel;
  std::string speaker;
  Gender gender = Gender::kUnknown;
  std::vector<WordToken> words;
  int turn_index = 0;
};

struct Channel {
  std::string id;
  std::vector<Utterance> utterances;

  std::size_t word_count() const {
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.words.size();
    return n;
  }
};

struct Corpus {
  std::vector<Channel> channels;   // in file order

  const Channel* find_channel(const std::string& id) const {
    for (const auto& c : channels)
      if (c.id == id) return &c;
    return nullptr;
  }

  std::size_t word_count() const {
    std::size_t n = 0;
    for (const auto& c : channels) n += c.word_count();
    return n;
  }
};

// Flat per-channel word view used by feature extraction and decoding.
struct ChannelWords {
  std::string channel;
  std::vector<const WordToken*> words;
  std::vector<int> turn_index;       // per word
  std::vector<double> turn_start;    // start time of the word's turn
  std::vector<Gender> gender;        // speaker gender per word
};

inline ChannelWords flatten_channel(const Channel& ch) {
  ChannelWords out;
  out.channel = ch.id;
  for (const auto& u : ch.utterances) {
    double t0 = u.words.empty() ? 0.0 : u.words.front().start;
    for (const auto& w : u.words) {
      out.words.push_back(&w);
      out.turn_index.push_back(u.turn_index);
      out.turn_start.push_back(t0);
      out.gender.push_back(u.gender);
    }
  }
  return out;
}

struct F0Frame {
  double time = 0;   // seconds
  double f0 = 0;     // Hz; 0 means unvoiced
  bool voiced() const { return f0 > 0; }
};

struct F0Track {
  std::string channel;
  std::vector<F0Frame> frames;   // strictly increasing times, fixed step
  double frame_step = 0.01;      // inferred at parse time
};

enum class BoundaryLabel { kNone, kSentence, kTopic };

inline const char* label_token(BoundaryLabel l) {
  switch (l) {
    case BoundaryLabel::kNone: return "none";
    case BoundaryLabel::kSentence: return "sent";
    default: return "topic";
  }
}

inline BoundaryLabel label_from_token(std::string_view s) {
  if (s == "none") return BoundaryLabel::kNone;
  if (s == "sent") return BoundaryLabel::kSentence;
  if (s == "topic") return BoundaryLabel::kTopic;
  throw std::runtime_error("unknown boundary label: " + std::string(s));
}

// One label per word: the label of the boundary following that word.
struct BoundaryLabels {
  std::map<std::string, std::vector<BoundaryLabel>> by_channel;
};

enum class Task { kSentence, kTopic };

// Collapse the 3-way label set to the binary alphabet of a task.  A topic
// boundary is also a sentence boundary at sentence granularity.
inline bool is_boundary_for_task(BoundaryLabel l, Task task) {
  if (task == Task::kSentence) return l != BoundaryLabel::kNone;
  return l == BoundaryLabel::kTopic;
}

struct ParserOptions {
  // Labels whose first letter is in this set are vowels.
  std::string vowel_initials = "aeiou";
  std::unordered_set<std::string> filled_pause_words = {"um", "uh", "uh-huh", "uhhuh", "hm", "hmm", "mm"};
  double phone_sum_tolerance = 1e-3;
};

// .align format, one word per line:
//   <channel> <speaker> <gender> <word> <start> <end> <phone:dur[,phone:dur...]>
inline Corpus parse_alignment(const std::string& path, const ParserOptions& opt = {}) {
  std::ifstream in = open_input(path);
  Corpus corpus;
  std::map<std::string, std::size_t> channel_index;
  std::map<std::string, int> next_turn;    // per channel
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 7) throw parse_error(path, line_no, "expected 7 fields, got " + std::to_string(tok.size()));

    WordToken w;
    std::string channel(tok[0]);
    w.speaker = std::string(tok[1]);
    Gender gender = gender_from_code(tok[2]);
    w.word = std::string(tok[3]);
    auto start = parse_double(tok[4]);
    auto end = parse_double(tok[5]);
    if (!start || !end) throw parse_error(path, line_no, "bad start/end time");
    w.start = *start;
    w.end = *end;
    if (w.end <= w.start) throw parse_error(path, line_no, "word end <= start");

    bool filled = opt.filled_pause_words.count(w.word) != 0;
    double phone_sum = 0;
    for (auto pd : split_char(tok[6], ',')) {
      auto colon = pd.find(':');
      if (colon == std::string_view::npos) throw parse_error(path, line_no, "phone entry missing ':'");
      PhoneToken p;
      p.label = std::string(pd.substr(0, colon));
      if (p.label.empty()) throw parse_error(path, line_no, "empty phone label");
      auto dur = parse_double(pd.substr(colon + 1));
      if (!dur) throw parse_error(path, line_no, "bad phone duration");
      p.duration = *dur;
      if (p.duration <= 0) throw parse_error(path, line_no, "phone duration must be > 0");
      p.is_vowel = opt.vowel_initials.find(p.label[0]) != std::string::npos;
      p.in_filled_pause = filled;
      phone_sum += p.duration;
      w.phones.push_back(std::move(p));
    }
    if (w.phones.empty()) throw parse_error(path, line_no, "word has no phones");
    if (phone_sum > (w.end - w.start) + opt.phone_sum_tolerance)
      throw parse_error(path, line_no, "phone durations exceed word span");

    auto [it, inserted] = channel_index.try_emplace(channel, corpus.channels.size());
    if (inserted) {
      corpus.channels.push_back(Channel{channel, {}});
      next_turn[channel] = 0;
    }
    Channel& ch = corpus.channels[it->second];
    if (!ch.utterances.empty()) {
      const WordToken& prev = ch.utterances.back().words.back();
      if (w.start + 1e-9 < prev.start)
        throw parse_error(path, line_no, "word times not non-decreasing within channel");
    }
    if (ch.utterances.empty() || ch.utterances.back().speaker != w.speaker) {
      Utterance u;
      u.channel = channel;
      u.speaker = w.speaker;
      u.gender = gender;
      u.turn_index = next_turn[channel]++;
      ch.utterances.push_back(std::move(u));
    }
    ch.utterances.back().words.push_back(std::move(w));
  }
  return corpus;
}

inline void write_alignment(std::ostream& out, const Corpus& corpus) {
  for (const auto& ch : corpus.channels) {
    for (const auto& u : ch.utterances) {
      for (const auto& w : u.words) {
        out << ch.id << ' ' << u.speaker << ' ' << gender_code(u.gender) << ' ' << w.word << ' '
            << format_double(w.start) << ' ' << format_double(w.end) << ' ';
        for (std::size_t i = 0; i < w.phones.size(); ++i) {
          if (i) out << ',';
          out << w.phones[i].label << ':' << format_double(w.phones[i].duration);
        }
        out << '\n';
      }
    }
  }
}

// .f0 format: <channel> <time> <f0_hz>, f0_hz = 0 for unvoiced.
inline std::vector<F0Track> parse_f0(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<F0Track> tracks;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) throw parse_error(path, line_no, "expected 3 fields");
    std::string channel(tok[0]);
    auto time = parse_double(tok[1]);
    auto f0 = parse_double(tok[2]);
    if (!time || !f0) throw parse_error(path, line_no, "bad time or f0");
    if (*f0 < 0) throw parse_error(path, line_no, "negative f0");
    auto [it, inserted] = index.try_emplace(channel, tracks.size());
    if (inserted) tracks.push_back(F0Track{channel, {}, 0.01});
    F0Track& tr = tracks[it->second];
    if (!tr.frames.empty() && *time <= tr.frames.back().time)
      throw parse_error(path, line_no, "frame times not strictly increasing");
    tr.frames.push_back(F0Frame{*time, *f0});
  }
  for (auto& tr : tracks) {
    if (tr.frames.size() >= 2) {
      // Fixed step inferred as the median inter-frame gap.
      std::vector<double> gaps;
      gaps.reserve(tr.frames.size() - 1);
      for (std::size_t i = 1; i < tr.frames.size(); ++i)
        gaps.push_back(tr.frames[i].time - tr.frames[i - 1].time);
      tr.frame_step = median_of(std::move(gaps));
    }
  }
  return tracks;
}

inline void write_f0(std::ostream& out, const std::vector<F0Track>& tracks) {
  for (const auto& tr : tracks)
    for (const auto& fr : tr.frames)
      out << tr.channel << ' ' << format_double(fr.time) << ' ' << format_double(fr.f0) << '\n';
}

// .lab format: <channel> <word_index> <none|sent|topic>, one line per word.
inline BoundaryLabels parse_boundaries(const std::string& path, const Corpus& corpus) {
  std::ifstream in = open_input(path);
  BoundaryLabels labels;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) throw parse_error(path, line_no, "expected 3 fields");
    std::string channel(tok[0]);
    auto idx = parse_long(tok[1]);
    if (!idx || *idx < 0) throw parse_error(path, line_no, "bad word index");
    BoundaryLabel l;
    try {
      l = label_from_token(tok[2]);
    } catch (const std::exception& e) {
      throw parse_error(path, line_no, e.what());
    }
    auto& vec = labels.by_channel[channel];
    if (static_cast<std::size_t>(*idx) != vec.size())
      throw parse_error(path, line_no, "word index out of order: expected " + std::to_string(vec.size()));
    vec.push_back(l);
    seen[channel] = vec.size();
  }
  for (const auto& ch : corpus.channels) {
    auto it = labels.by_channel.find(ch.id);
    std::size_t have = it == labels.by_channel.end() ? 0 : it->second.size();
    if (have != ch.word_count())
      throw std::runtime_error(path + ": label count mismatch for channel " + ch.id + ": " +
                               std::to_string(have) + " labels vs " + std::to_string(ch.word_count()) + " words");
  }
  for (const auto& [ch, vec] : labels.by_channel)
    if (!corpus.find_channel(ch))
      throw std::runtime_error(path + ": labels for unknown channel " + ch);
  return labels;
}

inline void write_boundaries(std::ostream& out, const BoundaryLabels& labels) {
  for (const auto& [ch, vec] : labels.by_channel)
    for (std::size_t i = 0; i < vec.size(); ++i)
      out << ch << ' ' << i << ' ' << label_token(vec[i]) << '\n';
}

// Label file without a corpus check, for scoring tools that only see labels.
inline BoundaryLabels parse_boundaries_only(const std::string& path) {
  std::ifstream in = open_input(path);
  BoundaryLabels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) throw parse_error(path, line_no, "expected 3 fields");
    auto idx = parse_long(tok[1]);
    if (!idx || *idx < 0) throw parse_error(path, line_no, "bad word index");
    auto& vec = labels.by_channel[std::string(tok[0])];
    if (static_cast<std::size_t>(*idx) != vec.size())
      throw parse_error(path, line_no, "word index out of order: expected " + std::to_string(vec.size()));
    try {
      vec.push_back(label_from_token(tok[2]));
    } catch (const std::exception& e) {
      throw parse_error(path, line_no, e.what());
    }
  }
  return labels;
}

}  // namespace prososeg
