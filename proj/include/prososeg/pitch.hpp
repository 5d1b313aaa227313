#pragma once

// Per-speaker F0 postprocessing: lognormal tied mixture over log-F0 with
// modes at (mu - log2, mu, mu + log2) for halving/doubling detection,
// median filtering of voiced runs, piecewise-linear stylization, and
// derived speaker range parameters.

#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "prososeg/common.hpp"
#include "prososeg/corpus.hpp"

namespace prososeg {

struct LtmParams {
  double mu = 0;        // log-Hz location of the modal mode
  double sigma = 0;     // shared log-domain std dev
  std::array<double, 3> weights = {0, 1, 0};   // halved, modal, doubled

  static constexpr std::array<double, 3> offsets() {
    return {-0.6931471805599453, 0.0, 0.6931471805599453};   // -log2, 0, +log2
  }
};

struct LtmFit {
  LtmParams params;
  std::vector<double> loglik;   // per accepted EM iteration
};

struct LtmOptions {
  std::size_t min_frames = 50;
  int max_iterations = 200;
  double tolerance = 1e-6;
};

namespace detail {
inline double log_gauss(double x, double m, double sigma) {
  double z = (x - m) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.9189385332046727;  // log sqrt(2*pi)
}
}  // namespace detail

// EM over log-F0 with tied means and shared variance.
inline LtmFit fit_ltm(const std::vector<double>& voiced_hz, const LtmOptions& opt = {}) {
  if (voiced_hz.size() < opt.min_frames)
    throw std::runtime_error("fit_ltm: need at least " + std::to_string(opt.min_frames) +
                             " voiced frames, got " + std::to_string(voiced_hz.size()));
  std::vector<double> x;
  x.reserve(voiced_hz.size());
  for (double hz : voiced_hz) {
    if (hz <= 0) throw std::runtime_error("fit_ltm: nonpositive F0 value");
    x.push_back(std::log(hz));
  }
  const double n = static_cast<double>(x.size());
  const auto off = LtmParams::offsets();

  LtmParams p;
  p.mu = median_of(x);
  std::vector<double> absdev;
  absdev.reserve(x.size());
  for (double v : x) absdev.push_back(std::fabs(v - p.mu));
  p.sigma = 1.4826 * median_of(std::move(absdev));
  if (p.sigma < 1e-9) throw std::runtime_error("fit_ltm: degenerate data (no spread)");
  p.sigma = std::max(p.sigma, 1e-3);
  p.weights = {0.05, 0.9, 0.05};

  LtmFit fit;
  double prev_ll = -std::numeric_limits<double>::infinity();
  std::vector<std::array<double, 3>> resp(x.size());
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    double ll = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::array<double, 3> q;
      double tot = 0;
      for (int k = 0; k < 3; ++k) {
        q[k] = p.weights[k] * std::exp(detail::log_gauss(x[i], p.mu + off[k], p.sigma));
        tot += q[k];
      }
      if (tot <= 0) tot = std::numeric_limits<double>::min();
      for (int k = 0; k < 3; ++k) resp[i][k] = q[k] / tot;
      ll += std::log(tot);
    }
    fit.loglik.push_back(ll);

    std::array<double, 3> wsum = {0, 0, 0};
    double mu_num = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int k = 0; k < 3; ++k) {
        wsum[k] += resp[i][k];
        mu_num += resp[i][k] * (x[i] - off[k]);
      }
    p.mu = mu_num / n;
    double var = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int k = 0; k < 3; ++k) {
        double d = x[i] - p.mu - off[k];
        var += resp[i][k] * d * d;
      }
    p.sigma = std::max(std::sqrt(var / n), 1e-4);
    for (int k = 0; k < 3; ++k) p.weights[k] = wsum[k] / n;

    if (iter > 0 && std::fabs(ll - prev_ll) < opt.tolerance) break;
    prev_ll = ll;
  }
  fit.params = p;
  return fit;
}

enum class FrameRegion : std::uint8_t { kUnvoiced, kHalved, kModal, kDoubled };

inline std::array<double, 3> mode_posteriors(double hz, const LtmParams& ltm) {
  const auto off = LtmParams::offsets();
  double x = std::log(hz);
  std::array<double, 3> q;
  double tot = 0;
  for (int k = 0; k < 3; ++k) {
    q[k] = ltm.weights[k] * std::exp(detail::log_gauss(x, ltm.mu + off[k], ltm.sigma));
    tot += q[k];
  }
  if (tot <= 0) return {0, 1, 0};
  for (int k = 0; k < 3; ++k) q[k] /= tot;
  return q;
}

// Max-posterior mode per voiced frame; ties resolve to modal.
inline std::vector<FrameRegion> classify_frames(const F0Track& track, const LtmParams& ltm) {
  std::vector<FrameRegion> out(track.frames.size(), FrameRegion::kUnvoiced);
  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    if (!track.frames[i].voiced()) continue;
    auto q = mode_posteriors(track.frames[i].f0, ltm);
    FrameRegion best = FrameRegion::kModal;
    double best_p = q[1];
    if (q[0] > best_p) { best = FrameRegion::kHalved; best_p = q[0]; }
    if (q[2] > best_p) { best = FrameRegion::kDoubled; }
    out[i] = best;
  }
  return out;
}

namespace detail {
// Maximal runs of consecutive voiced frames, as [begin, end) index pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> voiced_runs(const F0Track& track) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t i = 0;
  while (i < track.frames.size()) {
    if (!track.frames[i].voiced()) { ++i; continue; }
    std::size_t j = i;
    while (j < track.frames.size() && track.frames[j].voiced()) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}
}  // namespace detail

// Median filter over voiced runs with a centered window clipped at run edges;
// unvoiced gaps are never bridged.  Passes repeat until a fixpoint so the
// operation is idempotent.
inline F0Track median_filter(const F0Track& track, int window = 7) {
  F0Track out = track;
  int half = std::max(0, (window - 1) / 2);
  auto runs = detail::voiced_runs(out);
  for (auto [lo, hi] : runs) {
    std::vector<double> vals(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) vals[i - lo] = out.frames[i].f0;
    const int n = static_cast<int>(vals.size());
    std::vector<double> next(vals.size());
    for (int pass = 0; pass < 100; ++pass) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int a = std::max(0, i - half);
        int b = std::min(n - 1, i + half);
        std::vector<double> win(vals.begin() + a, vals.begin() + b + 1);
        next[i] = median_of(std::move(win));
        if (next[i] != vals[i]) changed = true;
      }
      vals.swap(next);
      if (!changed) break;
    }
    for (std::size_t i = lo; i < hi; ++i) out.frames[i].f0 = vals[i - lo];
  }
  return out;
}

struct StylizedSegment {
  double t_start = 0;
  double t_end = 0;
  double slope = 0;       // log-Hz per second
  double intercept = 0;   // log-Hz at t = 0
  bool clamped = false;   // shorter than min_region_len or over-MSE at min length

  double eval(double t) const { return slope * t + intercept; }
};

struct StylizedContour {
  std::vector<StylizedSegment> segments;   // ordered by t_start, contiguous per run

  const StylizedSegment* segment_at(double t) const {
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](double v, const StylizedSegment& s) { return v < s.t_start; });
    if (it == segments.begin()) return nullptr;
    --it;
    return t < it->t_end ? &*it : nullptr;
  }

  // Stylized log-F0 at time t; missing outside any segment.
  double eval(double t) const {
    const StylizedSegment* s = segment_at(t);
    return s ? s->eval(t) : missing_value();
  }
};

struct StylizeOptions {
  double max_mse = 0.01;        // log-Hz^2
  std::size_t min_region_len = 5;   // frames
};

namespace detail {

struct LineFit {
  double slope = 0, intercept = 0, mse = 0;
  double eval_at(double x) const { return slope * x + intercept; }
};

inline LineFit fit_line(const std::vector<double>& t, const std::vector<double>& y,
                        std::size_t lo, std::size_t hi) {
  LineFit f;
  std::size_t n = hi - lo;
  if (n == 0) return f;
  if (n == 1) { f.intercept = y[lo]; return f; }
  double st = 0, sy = 0;
  for (std::size_t i = lo; i < hi; ++i) { st += t[i]; sy += y[i]; }
  double mt = st / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    sxx += (t[i] - mt) * (t[i] - mt);
    sxy += (t[i] - mt) * (y[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mt;
  double sse = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    double r = y[i] - (f.slope * t[i] + f.intercept);
    sse += r * r;
  }
  f.mse = sse / n;
  return f;
}

}  // namespace detail

// Greedy node placement: start from one segment per voiced run (modal frames
// only), repeatedly split the worst segment at its maximum-deviation point
// until every segment fits max_mse or bottoms out at min_region_len.
inline StylizedContour stylize(const F0Track& track, const std::vector<FrameRegion>& labels,
                               const StylizeOptions& opt = {}) {
  if (labels.size() != track.frames.size())
    throw std::runtime_error("stylize: label count does not match frame count");
  StylizedContour contour;
  double step = track.frame_step;
  for (auto [rlo, rhi] : detail::voiced_runs(track)) {
    std::vector<double> t, y;
    for (std::size_t i = rlo; i < rhi; ++i) {
      if (labels[i] == FrameRegion::kModal) {
        t.push_back(track.frames[i].time);
        y.push_back(std::log(track.frames[i].f0));
      }
    }
    if (t.empty()) continue;

    struct Piece { std::size_t lo, hi; detail::LineFit fit; bool final = false; };
    std::deque<Piece> work;
    std::vector<Piece> done;
    work.push_back({0, t.size(), detail::fit_line(t, y, 0, t.size()), false});
    while (!work.empty()) {
      // Split the segment with the largest MSE first.
      std::size_t best = 0;
      for (std::size_t i = 1; i < work.size(); ++i)
        if (work[i].fit.mse > work[best].fit.mse) best = i;
      Piece p = work[best];
      work.erase(work.begin() + best);
      std::size_t len = p.hi - p.lo;
      if (p.fit.mse <= opt.max_mse || len < 2 * opt.min_region_len) {
        p.final = true;
        done.push_back(p);
        continue;
      }
      // Max |residual| point; ties prefer the most central point.
      std::size_t split = p.lo + opt.min_region_len;
      double best_dev = -1;
      long best_centrality = -1;
      for (std::size_t i = p.lo; i < p.hi; ++i) {
        double dev = std::fabs(y[i] - p.fit.eval_at(t[i]));
        long centrality = static_cast<long>(std::min(i - p.lo, p.hi - 1 - i));
        if (dev > best_dev + 1e-12 || (std::fabs(dev - best_dev) <= 1e-12 && centrality > best_centrality)) {
          best_dev = dev;
          best_centrality = centrality;
          split = i;
        }
      }
      split = std::clamp(split, p.lo + opt.min_region_len, p.hi - opt.min_region_len);
      work.push_back({p.lo, split, detail::fit_line(t, y, p.lo, split), false});
      work.push_back({split, p.hi, detail::fit_line(t, y, split, p.hi), false});
    }
    std::sort(done.begin(), done.end(), [](const Piece& a, const Piece& b) { return a.lo < b.lo; });
    for (std::size_t i = 0; i < done.size(); ++i) {
      const Piece& p = done[i];
      StylizedSegment seg;
      seg.t_start = t[p.lo];
      seg.t_end = i + 1 < done.size() ? t[done[i + 1].lo] : t[p.hi - 1] + step;
      seg.slope = p.fit.slope;
      seg.intercept = p.fit.intercept;
      seg.clamped = (p.hi - p.lo < opt.min_region_len) || p.fit.mse > opt.max_mse;
      contour.segments.push_back(seg);
    }
  }
  std::sort(contour.segments.begin(), contour.segments.end(),
            [](const StylizedSegment& a, const StylizedSegment& b) { return a.t_start < b.t_start; });
  return contour;
}

struct RangeParams {
  double baseline = 0;         // Hz, exp(mu - log2/2)
  double topline = 0;          // Hz, 95th percentile of modal frames
  double mean_modal = 0;       // Hz
  double mean_abs_slope = 0;   // log-Hz/s, speaker's average excursion
};

inline RangeParams speaker_range(const LtmParams& ltm, const std::vector<double>& modal_hz,
                                 const StylizedContour& contour) {
  if (modal_hz.empty()) throw std::runtime_error("speaker_range: no modal frames");
  RangeParams r;
  r.baseline = std::exp(ltm.mu - 0.5 * std::log(2.0));
  r.topline = percentile(modal_hz, 95.0);
  r.mean_modal = mean(modal_hz);
  if (!contour.segments.empty()) {
    double s = 0;
    for (const auto& seg : contour.segments) s += std::fabs(seg.slope);
    r.mean_abs_slope = s / static_cast<double>(contour.segments.size());
  }
  return r;
}

struct SpeakerPitchModel {
  LtmParams ltm;
  RangeParams range;
};

struct PitchModelSet {
  std::map<std::string, SpeakerPitchModel> by_speaker;
};

// speaker mu sigma w_h w_m w_d baseline topline mean_modal mean_abs_slope
inline void write_pitch_models(std::ostream& out, const PitchModelSet& set) {
  for (const auto& [spk, m] : set.by_speaker) {
    out << spk << ' ' << format_double(m.ltm.mu) << ' ' << format_double(m.ltm.sigma);
    for (double w : m.ltm.weights) out << ' ' << format_double(w);
    out << ' ' << format_double(m.range.baseline) << ' ' << format_double(m.range.topline) << ' '
        << format_double(m.range.mean_modal) << ' ' << format_double(m.range.mean_abs_slope) << '\n';
  }
}

inline PitchModelSet parse_pitch_models(const std::string& path) {
  std::ifstream in = open_input(path);
  PitchModelSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 10) throw parse_error(path, line_no, "expected 10 fields");
    SpeakerPitchModel m;
    std::array<double, 9> v;
    for (int i = 0; i < 9; ++i) {
      auto d = parse_double(tok[i + 1]);
      if (!d) throw parse_error(path, line_no, "bad number");
      v[i] = *d;
    }
    m.ltm.mu = v[0];
    m.ltm.sigma = v[1];
    m.ltm.weights = {v[2], v[3], v[4]};
    m.range.baseline = v[5];
    m.range.topline = v[6];
    m.range.mean_modal = v[7];
    m.range.mean_abs_slope = v[8];
    set.by_speaker[std::string(tok[0])] = m;
  }
  return set;
}

// channel t_start t_end a b [clamped]
inline void write_contours(std::ostream& out, const std::map<std::string, StylizedContour>& contours) {
  for (const auto& [ch, c] : contours)
    for (const auto& s : c.segments) {
      out << ch << ' ' << format_double(s.t_start) << ' ' << format_double(s.t_end) << ' '
          << format_double(s.slope) << ' ' << format_double(s.intercept);
      if (s.clamped) out << " clamped";
      out << '\n';
    }
}

inline std::map<std::string, StylizedContour> parse_contours(const std::string& path) {
  std::ifstream in = open_input(path);
  std::map<std::string, StylizedContour> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 5 && !(tok.size() == 6 && tok[5] == "clamped"))
      throw parse_error(path, line_no, "expected 5 fields");
    StylizedSegment s;
    auto a = parse_double(tok[1]), b = parse_double(tok[2]), c = parse_double(tok[3]), d = parse_double(tok[4]);
    if (!a || !b || !c || !d) throw parse_error(path, line_no, "bad number");
    s.t_start = *a;
    s.t_end = *b;
    s.slope = *c;
    s.intercept = *d;
    s.clamped = tok.size() == 6;
    out[std::string(tok[0])].segments.push_back(s);
  }
  return out;
}

}  // namespace prososeg
