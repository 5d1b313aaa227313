#pragma once

// Prosodic feature extraction: one feature vector per inter-word boundary
// (including the final boundary after a channel's last word, whose
// following-side features are missing).

#include <array>
#include <cmath>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prososeg/common.hpp"
#include "prososeg/corpus.hpp"
#include "prososeg/pitch.hpp"

namespace prososeg {

enum class FeatureKind { kContinuous, kCategorical };

struct FeatureSchema {
  struct Field {
    std::string name;
    FeatureKind kind = FeatureKind::kContinuous;
    std::vector<std::string> categories;   // for categorical fields
  };
  std::vector<Field> fields;
  std::map<std::string, int> index;

  int add(const std::string& name, FeatureKind kind) {
    index[name] = static_cast<int>(fields.size());
    fields.push_back(Field{name, kind, {}});
    return static_cast<int>(fields.size()) - 1;
  }

  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }

  int category_code(int field, const std::string& cat) {
    auto& cats = fields[field].categories;
    for (std::size_t i = 0; i < cats.size(); ++i)
      if (cats[i] == cat) return static_cast<int>(i);
    cats.push_back(cat);
    return static_cast<int>(cats.size()) - 1;
  }

  const std::string& category_name(int field, int code) const {
    return fields[field].categories.at(static_cast<std::size_t>(code));
  }
};

// Rows are boundaries; values are doubles with NaN for missing and category
// codes for categorical fields.
struct FeatureTable {
  FeatureSchema schema;
  std::vector<std::string> channel;
  std::vector<int> boundary_index;
  std::vector<std::string> label;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }

  void append(const std::string& ch, int idx, const std::string& lab, std::vector<double> row) {
    channel.push_back(ch);
    boundary_index.push_back(idx);
    label.push_back(lab);
    rows.push_back(std::move(row));
  }
};

inline void write_features(std::ostream& out, const FeatureTable& t) {
  out << "channel index label";
  for (const auto& f : t.schema.fields) out << ' ' << f.name;
  out << '\n';
  for (std::size_t r = 0; r < t.size(); ++r) {
    out << t.channel[r] << ' ' << t.boundary_index[r] << ' ' << t.label[r];
    for (std::size_t c = 0; c < t.schema.fields.size(); ++c) {
      double v = t.rows[r][c];
      out << ' ';
      if (is_missing(v))
        out << '?';
      else if (t.schema.fields[c].kind == FeatureKind::kCategorical)
        out << t.schema.category_name(static_cast<int>(c), static_cast<int>(v));
      else
        out << format_double(v);
    }
    out << '\n';
  }
}

inline FeatureTable parse_features(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> names;
  // raw rows until we can decide column kinds
  std::vector<std::array<std::string, 3>> meta;
  std::vector<std::vector<std::string>> raw;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (names.empty()) {
      if (tok.size() < 3 || tok[0] != "channel" || tok[1] != "index" || tok[2] != "label")
        throw parse_error(path, line_no, "bad feature header");
      for (std::size_t i = 3; i < tok.size(); ++i) names.emplace_back(tok[i]);
      continue;
    }
    if (tok.size() != names.size() + 3)
      throw parse_error(path, line_no, "expected " + std::to_string(names.size() + 3) + " fields");
    meta.push_back({std::string(tok[0]), std::string(tok[1]), std::string(tok[2])});
    std::vector<std::string> vals;
    vals.reserve(names.size());
    for (std::size_t i = 3; i < tok.size(); ++i) vals.emplace_back(tok[i]);
    raw.push_back(std::move(vals));
  }
  if (names.empty()) throw std::runtime_error(path + ": missing feature header");

  FeatureTable t;
  std::vector<bool> categorical(names.size(), false);
  for (std::size_t c = 0; c < names.size(); ++c)
    for (const auto& row : raw)
      if (row[c] != "?" && !parse_double(row[c])) { categorical[c] = true; break; }
  for (std::size_t c = 0; c < names.size(); ++c)
    t.schema.add(names[c], categorical[c] ? FeatureKind::kCategorical : FeatureKind::kContinuous);

  for (std::size_t r = 0; r < raw.size(); ++r) {
    auto idx = parse_long(meta[r][1]);
    if (!idx) throw std::runtime_error(path + ": bad boundary index " + meta[r][1]);
    std::vector<double> row(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
      const std::string& s = raw[r][c];
      if (s == "?")
        row[c] = missing_value();
      else if (categorical[c])
        row[c] = t.schema.category_code(static_cast<int>(c), s);
      else
        row[c] = *parse_double(s);
    }
    t.append(meta[r][0], static_cast<int>(*idx), meta[r][2], std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Phone duration statistics (Eq.-style z-normalization support).

struct PhoneStats {
  struct Entry {
    double mean = 0;
    double std = 0;
    std::size_t count = 0;
  };
  std::map<std::string, Entry> by_phone;

  const Entry* find(const std::string& key) const {
    auto it = by_phone.find(key);
    return it == by_phone.end() ? nullptr : &it->second;
  }
};

inline std::string phone_stats_key(const PhoneToken& p) {
  return p.in_filled_pause ? p.label + "+fp" : p.label;
}

// Per-phone mean/std over all speakers, trimming durations above the
// given percentile.  Phones left with fewer than 2 values are excluded.
inline PhoneStats compute_phone_stats(const Corpus& corpus, double trim_percentile = 99.5) {
  std::map<std::string, std::vector<double>> durs;
  for (const auto& ch : corpus.channels)
    for (const auto& u : ch.utterances)
      for (const auto& w : u.words)
        for (const auto& p : w.phones) durs[phone_stats_key(p)].push_back(p.duration);
  PhoneStats stats;
  for (auto& [key, v] : durs) {
    double cut = percentile(v, trim_percentile);
    std::vector<double> kept;
    kept.reserve(v.size());
    for (double d : v)
      if (d <= cut) kept.push_back(d);
    if (kept.size() < 2) continue;
    double sd = stddev(kept);
    if (!(sd > 0)) continue;
    stats.by_phone[key] = PhoneStats::Entry{mean(kept), sd, kept.size()};
  }
  return stats;
}

inline double normalize_phone(double duration, const PhoneStats::Entry* entry) {
  if (!entry || !(entry->std > 0)) return missing_value();
  return (duration - entry->mean) / entry->std;
}

// Fixed-width 0.5-z bins clipped to [-2, 4]; 13 distinct values.
inline double bin_z(double z) {
  if (is_missing(z)) return z;
  double b = std::floor(z / 0.5) * 0.5;
  return std::clamp(b, -2.0, 4.0);
}

inline void write_phone_stats(std::ostream& out, const PhoneStats& stats) {
  for (const auto& [key, e] : stats.by_phone)
    out << key << ' ' << format_double(e.mean) << ' ' << format_double(e.std) << ' ' << e.count << '\n';
}

inline PhoneStats parse_phone_stats(const std::string& path) {
  std::ifstream in = open_input(path);
  PhoneStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4) throw parse_error(path, line_no, "expected 4 fields");
    auto m = parse_double(tok[1]), s = parse_double(tok[2]);
    auto c = parse_long(tok[3]);
    if (!m || !s || !c) throw parse_error(path, line_no, "bad number");
    stats.by_phone[std::string(tok[0])] = PhoneStats::Entry{*m, *s, static_cast<std::size_t>(*c)};
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Extraction proper.

struct ExtractOptions {
  double window = 0.2;                       // seconds before/after the pause
  bool include_pause_at_turn_change = false; // separate-channel recordings
  double flat_slope_threshold = 0.5;         // |log-Hz/s| below which a slope is flat
  int halving_any_min_frames = 3;
  int halving_end_frames = 3;
  double chop_threshold = 0;                 // >0: emit only boundaries with gap > threshold or turn change
};

inline FeatureSchema prosodic_schema() {
  FeatureSchema s;
  auto cont = [&](const char* n) { s.add(n, FeatureKind::kContinuous); };
  auto cat = [&](const char* n, std::initializer_list<const char*> cats) {
    int f = s.add(n, FeatureKind::kCategorical);
    for (const char* c : cats) s.category_code(f, c);
  };
  cont("PAU_DUR");
  cont("PREV_PAU_DUR");
  cont("AVG_NORM_RHYME_DUR");
  cont("MAX_NORM_PHONE_DUR");
  cont("MAX_NORM_VOWEL_DUR");
  static const char* kMeasures[] = {"MIN", "MAX", "MEAN", "FIRST", "LAST"};
  for (const char* scope : {"WRD", "WIN"})
    for (const char* how : {"LR", "LD"})
      for (const char* m : kMeasures)
        s.add(std::string("F0s_") + how + "_" + m + "_" + scope, FeatureKind::kContinuous);
  cont("F0s_LR_MEAN_KBASELN");
  cont("F0s_LR_MIN_KBASELN");
  cont("F0s_LR_MEAN_KTOPLN");
  cont("F0s_LR_MIN_KTOPLN");
  cont("F0s_SLOPE_PREV_NORM");
  cont("F0s_SLOPE_NEXT_NORM");
  cont("F0s_SLOPE_DIFF");
  cat("F0s_PATTERN_XBOUND", {"r>r", "r>f", "r>x", "f>r", "f>f", "f>x", "x>r", "x>f", "x>x"});
  cat("HALVING_ANY", {"n", "y"});
  cat("HALVING_END", {"n", "y"});
  cat("TURN_CHANGE", {"n", "y"});
  cont("TIME_IN_TURN");
  cont("TURN_COUNT");
  cat("SPEAKER_GENDER", {"m", "f", "u"});
  cat("LISTENER_GENDER", {"m", "f", "u"});
  return s;
}

namespace detail {

struct SideStats {
  double min_ln = 0, max_ln = 0, mean_ln = 0, first_ln = 0, last_ln = 0;
  bool defined = false;
};

// Stylized measurements over modal voiced frames with time in [t0, t1].
inline SideStats side_stats(const F0Track& track, const std::vector<FrameRegion>& labels,
                            const StylizedContour& contour, double t0, double t1) {
  SideStats st;
  double sum = 0;
  std::size_t n = 0;
  auto begin = std::lower_bound(track.frames.begin(), track.frames.end(), t0,
                                [](const F0Frame& f, double v) { return f.time < v; });
  for (auto it = begin; it != track.frames.end() && it->time <= t1; ++it) {
    std::size_t i = static_cast<std::size_t>(it - track.frames.begin());
    if (labels[i] != FrameRegion::kModal) continue;
    double v = contour.eval(it->time);
    if (is_missing(v)) continue;
    if (n == 0) {
      st.min_ln = st.max_ln = st.first_ln = v;
    } else {
      st.min_ln = std::min(st.min_ln, v);
      st.max_ln = std::max(st.max_ln, v);
    }
    st.last_ln = v;
    sum += v;
    ++n;
  }
  if (n > 0) {
    st.mean_ln = sum / static_cast<double>(n);
    st.defined = true;
  }
  return st;
}

// Stylized slope at the last (or first) modal frame within [t0, t1].
inline std::optional<double> slope_at_edge(const F0Track& track, const std::vector<FrameRegion>& labels,
                                           const StylizedContour& contour, double t0, double t1, bool last) {
  std::optional<double> slope;
  auto begin = std::lower_bound(track.frames.begin(), track.frames.end(), t0,
                                [](const F0Frame& f, double v) { return f.time < v; });
  for (auto it = begin; it != track.frames.end() && it->time <= t1; ++it) {
    std::size_t i = static_cast<std::size_t>(it - track.frames.begin());
    if (labels[i] != FrameRegion::kModal) continue;
    const StylizedSegment* seg = contour.segment_at(it->time);
    if (!seg) continue;
    slope = seg->slope;
    if (!last) return slope;
  }
  return slope;
}

// Signed compressed difference of two Hz values.
inline double log_difference(double a_hz, double b_hz) {
  double d = a_hz - b_hz;
  return (d >= 0 ? 1.0 : -1.0) * std::log1p(std::fabs(d));
}

inline char slope_class(double slope, double flat_threshold) {
  if (slope > flat_threshold) return 'r';
  if (slope < -flat_threshold) return 'f';
  return 'x';
}

}  // namespace detail

struct ChannelPitch {
  F0Track filtered;
  std::vector<FrameRegion> labels;
  StylizedContour contour;
};

struct PitchAnalysis {
  PitchModelSet models;
  std::map<std::string, ChannelPitch> channels;
};

// Fit per-speaker LTM models from all voiced frames inside that speaker's
// words, then filter/classify/stylize each channel track.
inline PitchAnalysis analyze_pitch(const Corpus& corpus, const std::vector<F0Track>& tracks,
                                   const LtmOptions& ltm_opt = {}, const StylizeOptions& sty_opt = {},
                                   int median_window = 7) {
  PitchAnalysis out;
  struct Span { double start, end; const std::string* speaker; };
  std::map<std::string, std::vector<Span>> spans;   // channel -> word spans
  for (const auto& ch : corpus.channels)
    for (const auto& u : ch.utterances)
      for (const auto& w : u.words) spans[ch.id].push_back(Span{w.start, w.end, &u.speaker});

  auto speaker_at = [&](const std::string& channel, double t) -> const std::string* {
    auto it = spans.find(channel);
    if (it == spans.end() || it->second.empty()) return nullptr;
    const auto& v = it->second;
    auto pos = std::upper_bound(v.begin(), v.end(), t,
                                [](double x, const Span& s) { return x < s.start; });
    // candidate spans: the one before pos (covering or nearest left) and pos (nearest right)
    const Span* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    if (pos != v.begin()) {
      const Span& s = *(pos - 1);
      double d = t <= s.end ? 0.0 : t - s.end;
      if (d < best_dist) { best_dist = d; best = &s; }
    }
    if (pos != v.end()) {
      double d = pos->start - t;
      if (d < best_dist) { best = &*pos; }
    }
    return best ? best->speaker : nullptr;
  };

  // Pool voiced frames per speaker (frames inside the speaker's words only).
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& tr : tracks) {
    auto it = spans.find(tr.channel);
    if (it == spans.end()) continue;
    for (const auto& fr : tr.frames) {
      if (!fr.voiced()) continue;
      for (const auto& s : it->second)
        if (fr.time >= s.start && fr.time <= s.end) {
          pooled[*s.speaker].push_back(fr.f0);
          break;
        }
    }
  }
  for (const auto& [spk, vals] : pooled) {
    if (vals.size() < ltm_opt.min_frames) continue;
    try {
      SpeakerPitchModel m;
      m.ltm = fit_ltm(vals, ltm_opt).params;
      out.models.by_speaker[spk] = m;   // range filled in below
    } catch (const std::exception&) {
      // Degenerate speaker data: leave unmodeled, features go missing.
    }
  }

  std::map<std::string, std::vector<double>> modal_hz;
  std::map<std::string, std::vector<const StylizedSegment*>> speaker_segments;
  for (const auto& tr : tracks) {
    if (!corpus.find_channel(tr.channel)) continue;
    ChannelPitch cp;
    cp.filtered = median_filter(tr, median_window);
    cp.labels.assign(cp.filtered.frames.size(), FrameRegion::kUnvoiced);
    for (std::size_t i = 0; i < cp.filtered.frames.size(); ++i) {
      const auto& fr = tr.frames[i];   // classify on raw values
      if (!fr.voiced()) continue;
      const std::string* spk = speaker_at(tr.channel, fr.time);
      auto mit = spk ? out.models.by_speaker.find(*spk) : out.models.by_speaker.end();
      if (mit == out.models.by_speaker.end()) {
        cp.labels[i] = FrameRegion::kModal;
        continue;
      }
      auto q = mode_posteriors(fr.f0, mit->second.ltm);
      FrameRegion best = FrameRegion::kModal;
      double best_p = q[1];
      if (q[0] > best_p) { best = FrameRegion::kHalved; best_p = q[0]; }
      if (q[2] > best_p) { best = FrameRegion::kDoubled; }
      cp.labels[i] = best;
      if (best == FrameRegion::kModal && spk) modal_hz[*spk].push_back(cp.filtered.frames[i].f0);
    }
    cp.contour = stylize(cp.filtered, cp.labels, sty_opt);
    for (const auto& seg : cp.contour.segments) {
      double mid = 0.5 * (seg.t_start + seg.t_end);
      const std::string* spk = speaker_at(tr.channel, mid);
      if (spk) speaker_segments[*spk].push_back(&seg);
    }
    out.channels[tr.channel] = std::move(cp);
  }

  for (auto it = out.models.by_speaker.begin(); it != out.models.by_speaker.end();) {
    auto mh = modal_hz.find(it->first);
    if (mh == modal_hz.end() || mh->second.empty()) {
      it = out.models.by_speaker.erase(it);
      continue;
    }
    StylizedContour sc;
    for (const StylizedSegment* s : speaker_segments[it->first]) sc.segments.push_back(*s);
    it->second.range = speaker_range(it->second.ltm, mh->second, sc);
    ++it;
  }
  return out;
}

inline FeatureTable extract_features(const Corpus& corpus, const PitchAnalysis& pitch,
                                     const PhoneStats& stats, const BoundaryLabels* labels,
                                     const ExtractOptions& opt = {}) {
  FeatureTable t;
  t.schema = prosodic_schema();
  const FeatureSchema& s = t.schema;
  const int n_fields = static_cast<int>(s.fields.size());

  // Listener gender is defined only for two-party (two-channel) corpora.
  std::map<std::string, int> listener_code;
  if (corpus.channels.size() == 2) {
    for (int a = 0; a < 2; ++a) {
      const Channel& other = corpus.channels[1 - a];
      std::map<char, int> counts;
      for (const auto& u : other.utterances) counts[gender_code(u.gender)] += static_cast<int>(u.words.size());
      char best = 'u';
      int best_n = -1;
      for (auto [g, n] : counts)
        if (n > best_n) { best = g; best_n = n; }
      listener_code[corpus.channels[a].id] = best == 'm' ? 0 : best == 'f' ? 1 : 2;
    }
  }

  static const char* kMeasures[] = {"MIN", "MAX", "MEAN", "FIRST", "LAST"};
  for (const auto& ch : corpus.channels) {
    ChannelWords cw = flatten_channel(ch);
    const std::size_t n_words = cw.words.size();
    const ChannelPitch* cp = nullptr;
    auto pit = pitch.channels.find(ch.id);
    if (pit != pitch.channels.end()) cp = &pit->second;
    const std::vector<BoundaryLabel>* labs = nullptr;
    if (labels) {
      auto lit = labels->by_channel.find(ch.id);
      if (lit == labels->by_channel.end())
        throw std::runtime_error("extract_features: no labels for channel " + ch.id);
      labs = &lit->second;
    }

    // Precompute per-boundary raw gaps (missing at final slot).
    std::vector<double> gap(n_words, missing_value());
    std::vector<bool> turn_change(n_words, false);
    for (std::size_t i = 0; i + 1 < n_words; ++i) {
      gap[i] = std::max(0.0, cw.words[i + 1]->start - cw.words[i]->end);
      turn_change[i] = cw.words[i]->speaker != cw.words[i + 1]->speaker;
    }

    for (std::size_t i = 0; i < n_words; ++i) {
      const bool final_slot = i + 1 == n_words;
      if (opt.chop_threshold > 0) {
        bool is_chop = !final_slot && (gap[i] > opt.chop_threshold || turn_change[i]);
        if (!is_chop) continue;
      }
      std::vector<double> row(static_cast<std::size_t>(n_fields), missing_value());
      const WordToken& prev = *cw.words[i];
      const WordToken* next = final_slot ? nullptr : cw.words[i + 1];

      auto set = [&](const char* name, double v) { row[static_cast<std::size_t>(s.find(name))] = v; };
      auto setcat = [&](const char* name, const char* cat) {
        int f = s.find(name);
        const auto& cats = s.fields[static_cast<std::size_t>(f)].categories;
        for (std::size_t c = 0; c < cats.size(); ++c)
          if (cats[c] == cat) { row[static_cast<std::size_t>(f)] = static_cast<double>(c); return; }
        throw std::logic_error("unknown category");
      };

      // Pause features.
      bool pause_defined = !final_slot && (!turn_change[i] || opt.include_pause_at_turn_change);
      if (pause_defined) set("PAU_DUR", gap[i]);
      if (i == 0) {
        set("PREV_PAU_DUR", 0.0);
      } else if (!turn_change[i - 1] || opt.include_pause_at_turn_change) {
        set("PREV_PAU_DUR", gap[i - 1]);
      }

      // Duration features over the preceding word.
      {
        double max_phone = missing_value(), max_vowel = missing_value();
        for (const auto& p : prev.phones) {
          double z = normalize_phone(p.duration, stats.find(phone_stats_key(p)));
          if (is_missing(z)) continue;
          if (is_missing(max_phone) || z > max_phone) max_phone = z;
          if (p.is_vowel && (is_missing(max_vowel) || z > max_vowel)) max_vowel = z;
        }
        set("MAX_NORM_PHONE_DUR", bin_z(max_phone));
        set("MAX_NORM_VOWEL_DUR", bin_z(max_vowel));
        // Rhyme: last vowel onward.
        std::size_t rhyme_from = prev.phones.size();
        for (std::size_t k = prev.phones.size(); k-- > 0;)
          if (prev.phones[k].is_vowel) { rhyme_from = k; break; }
        if (rhyme_from < prev.phones.size()) {
          double zsum = 0;
          std::size_t zn = 0;
          bool ok = true;
          for (std::size_t k = rhyme_from; k < prev.phones.size(); ++k) {
            double z = normalize_phone(prev.phones[k].duration, stats.find(phone_stats_key(prev.phones[k])));
            if (is_missing(z)) { ok = false; break; }
            zsum += z;
            ++zn;
          }
          if (ok && zn > 0) set("AVG_NORM_RHYME_DUR", bin_z(zsum / static_cast<double>(zn)));
        }
      }

      // F0 features need the channel pitch analysis.
      if (cp && !cp->filtered.frames.empty()) {
        const F0Track& track = cp->filtered;
        const auto& labels_v = cp->labels;
        const StylizedContour& contour = cp->contour;
        double pause_start = prev.end;
        auto prev_wrd = detail::side_stats(track, labels_v, contour, prev.start, prev.end);
        auto prev_win = detail::side_stats(track, labels_v, contour, pause_start - opt.window, pause_start);
        detail::SideStats next_wrd, next_win;
        if (next) {
          double pause_end = next->start;
          next_wrd = detail::side_stats(track, labels_v, contour, next->start, next->end);
          next_win = detail::side_stats(track, labels_v, contour, pause_end, pause_end + opt.window);
        }

        bool cross_ok = next && !turn_change[i];
        auto set_name = [&](const std::string& name, double v) {
          row[static_cast<std::size_t>(s.find(name))] = v;
        };
        auto reset = [&](const char* scope, const detail::SideStats& a, const detail::SideStats& b) {
          if (!cross_ok || !a.defined || !b.defined) return;
          const double av[5] = {a.min_ln, a.max_ln, a.mean_ln, a.first_ln, a.last_ln};
          const double bv[5] = {b.min_ln, b.max_ln, b.mean_ln, b.first_ln, b.last_ln};
          for (int m = 0; m < 5; ++m) {
            set_name(std::string("F0s_LR_") + kMeasures[m] + "_" + scope, av[m] - bv[m]);
            set_name(std::string("F0s_LD_") + kMeasures[m] + "_" + scope,
                     detail::log_difference(std::exp(av[m]), std::exp(bv[m])));
          }
        };
        reset("WRD", prev_wrd, next_wrd);
        reset("WIN", prev_win, next_win);

        // Range features: preceding word vs speaker baseline/topline.
        auto mprev = pitch.models.by_speaker.find(prev.speaker);
        if (prev_wrd.defined && mprev != pitch.models.by_speaker.end()) {
          const RangeParams& r = mprev->second.range;
          if (r.baseline > 0) {
            set("F0s_LR_MEAN_KBASELN", prev_wrd.mean_ln - std::log(r.baseline));
            set("F0s_LR_MIN_KBASELN", prev_wrd.min_ln - std::log(r.baseline));
          }
          if (r.topline > 0) {
            set("F0s_LR_MEAN_KTOPLN", prev_wrd.mean_ln - std::log(r.topline));
            set("F0s_LR_MIN_KTOPLN", prev_wrd.min_ln - std::log(r.topline));
          }
        }

        // Slope and continuity.
        auto slope_prev = detail::slope_at_edge(track, labels_v, contour, prev.start, prev.end, true);
        std::optional<double> slope_next;
        if (next) slope_next = detail::slope_at_edge(track, labels_v, contour, next->start, next->end, false);
        if (slope_prev && mprev != pitch.models.by_speaker.end() &&
            mprev->second.range.mean_abs_slope > 1e-12)
          set("F0s_SLOPE_PREV_NORM", *slope_prev / mprev->second.range.mean_abs_slope);
        if (slope_next && next) {
          auto mnext = pitch.models.by_speaker.find(next->speaker);
          if (mnext != pitch.models.by_speaker.end() && mnext->second.range.mean_abs_slope > 1e-12)
            set("F0s_SLOPE_NEXT_NORM", *slope_next / mnext->second.range.mean_abs_slope);
        }
        if (cross_ok && slope_prev && slope_next) {
          set("F0s_SLOPE_DIFF", *slope_next - *slope_prev);
          char a = detail::slope_class(*slope_prev, opt.flat_slope_threshold);
          char b = detail::slope_class(*slope_next, opt.flat_slope_threshold);
          std::string pat{a, '>', b};
          setcat("F0s_PATTERN_XBOUND", pat.c_str());
        }

        // Voice quality (halving) over the preceding word.
        int n_voiced = 0, n_halved = 0;
        std::vector<std::size_t> voiced_idx;
        auto begin = std::lower_bound(track.frames.begin(), track.frames.end(), prev.start,
                                      [](const F0Frame& f, double v) { return f.time < v; });
        for (auto fit2 = begin; fit2 != track.frames.end() && fit2->time <= prev.end; ++fit2) {
          std::size_t k = static_cast<std::size_t>(fit2 - track.frames.begin());
          if (labels_v[k] == FrameRegion::kUnvoiced) continue;
          ++n_voiced;
          voiced_idx.push_back(k);
          if (labels_v[k] == FrameRegion::kHalved) ++n_halved;
        }
        if (n_voiced > 0) {
          setcat("HALVING_ANY", n_halved >= opt.halving_any_min_frames ? "y" : "n");
          bool end_halved = false;
          for (std::size_t k = voiced_idx.size() -
                                std::min<std::size_t>(voiced_idx.size(), static_cast<std::size_t>(opt.halving_end_frames));
               k < voiced_idx.size(); ++k)
            if (labels_v[voiced_idx[k]] == FrameRegion::kHalved) end_halved = true;
          setcat("HALVING_END", end_halved ? "y" : "n");
        }
      }

      // Turn and gender features.
      if (!final_slot) setcat("TURN_CHANGE", turn_change[i] ? "y" : "n");
      set("TIME_IN_TURN", prev.end - cw.turn_start[i]);
      set("TURN_COUNT", static_cast<double>(cw.turn_index[i]));
      setcat("SPEAKER_GENDER", cw.gender[i] == Gender::kMale ? "m" : cw.gender[i] == Gender::kFemale ? "f" : "u");
      auto lg = listener_code.find(ch.id);
      if (lg != listener_code.end())
        row[static_cast<std::size_t>(s.find("LISTENER_GENDER"))] = static_cast<double>(lg->second);

      std::string lab = labs ? label_token((*labs)[i]) : "none";
      t.append(ch.id, static_cast<int>(i), lab, std::move(row));
    }
  }
  return t;
}

}  // namespace prososeg
