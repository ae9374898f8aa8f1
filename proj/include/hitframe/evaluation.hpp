#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitframe/common.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/rally.hpp"

namespace hitframe::eval {

struct BinaryCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;

  BinaryCounts& operator+=(const BinaryCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  long long total() const { return tp + fp + fn + tn; }
};

struct Metrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

// 0/0 ratios are defined as 0 rather than NaN.
inline double safe_ratio(long long num, long long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline Metrics binary_metrics(const BinaryCounts& c) {
  require(c.tp >= 0 && c.fp >= 0 && c.fn >= 0 && c.tn >= 0, Errc::bad_argument,
          "negative confusion counts");
  require(c.total() > 0, Errc::empty_evaluation, "all confusion counts are zero");
  Metrics m;
  m.accuracy = safe_ratio(c.tp + c.tn, c.total());
  m.precision = safe_ratio(c.tp, c.tp + c.fp);
  m.recall = safe_ratio(c.tp, c.tp + c.fn);
  m.f1 = (m.precision + m.recall) == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

struct BinaryReport {
  BinaryCounts counts;
  Metrics metrics;
};

inline BinaryReport binary_report(const BinaryCounts& c) { return {c, binary_metrics(c)}; }

// ---------------------------------------------------------------------------
// rally trimming
// ---------------------------------------------------------------------------

struct TrimmingReport {
  long long correct = 0, extra = 0, missed = 0, total_trimmed = 0, actual = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline TrimmingReport trimming_from_counts(long long correct, long long extra, long long missed) {
  require(correct >= 0 && extra >= 0 && missed >= 0, Errc::bad_argument,
          "negative trimming counts");
  TrimmingReport r;
  r.correct = correct;
  r.extra = extra;
  r.missed = missed;
  r.total_trimmed = correct + extra;
  r.actual = correct + missed;
  r.accuracy = safe_ratio(correct, correct + extra + missed);
  r.precision = safe_ratio(correct, r.total_trimmed);
  r.recall = safe_ratio(correct, r.actual);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

// IoU of inclusive frame intervals.
inline double interval_iou(const rally::RallySegment& a, const rally::RallySegment& b) {
  a.validate();
  b.validate();
  long long lo = static_cast<long long>(std::max(a.start_frame, b.start_frame));
  long long hi = static_cast<long long>(std::min(a.end_frame, b.end_frame));
  long long inter = std::max(0ll, hi - lo + 1);
  long long uni = static_cast<long long>(a.length()) + static_cast<long long>(b.length()) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Greedy one-to-one matching in start order. Each predicted segment takes the
// unmatched actual rally with the highest IoU >= threshold (earlier actual on
// ties).
inline TrimmingReport trimming_report(std::vector<rally::RallySegment> predicted,
                                      std::vector<rally::RallySegment> actual,
                                      double iou_threshold = 0.5) {
  auto by_start = [](const rally::RallySegment& a, const rally::RallySegment& b) {
    return a.start_frame < b.start_frame;
  };
  std::sort(predicted.begin(), predicted.end(), by_start);
  std::sort(actual.begin(), actual.end(), by_start);
  for (std::size_t i = 0; i + 1 < predicted.size(); ++i)
    require(predicted[i].end_frame < predicted[i + 1].start_frame, Errc::bad_argument,
            "predicted segments overlap");

  std::vector<bool> taken(actual.size(), false);
  long long correct = 0;
  for (const rally::RallySegment& p : predicted) {
    double best = 0.0;
    std::size_t best_j = actual.size();
    for (std::size_t j = 0; j < actual.size(); ++j) {
      if (taken[j]) continue;
      double iou = interval_iou(p, actual[j]);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < actual.size()) {
      taken[best_j] = true;
      ++correct;
    }
  }
  return trimming_from_counts(correct, static_cast<long long>(predicted.size()) - correct,
                              static_cast<long long>(actual.size()) - correct);
}

// ---------------------------------------------------------------------------
// direction tokens
// ---------------------------------------------------------------------------

struct TokenReport {
  std::array<BinaryCounts, 3> counts;  // indexed by S=0, B=1, U=2
  std::array<Metrics, 3> metrics;
};

inline std::array<BinaryCounts, 3> token_counts(const dir::DirectionSequence& pred,
                                                const dir::DirectionSequence& gold) {
  using dir::DirectionToken;
  require(pred.tokens.size() == gold.tokens.size(), Errc::shape_mismatch,
          "prediction/gold length mismatch for rally " + gold.rally_id);
  std::array<BinaryCounts, 3> out{};
  for (std::size_t i = 0; i < gold.tokens.size(); ++i) {
    if (gold.tokens[i] == DirectionToken::Pad) continue;
    int g = static_cast<int>(gold.tokens[i]);
    int p = static_cast<int>(pred.tokens[i]);
    for (int t = 0; t < 3; ++t) {
      bool is_g = g == t, is_p = p == t;
      if (is_g && is_p)
        ++out[t].tp;
      else if (!is_g && is_p)
        ++out[t].fp;
      else if (is_g && !is_p)
        ++out[t].fn;
      else
        ++out[t].tn;
    }
  }
  return out;
}

inline TokenReport token_report_from_counts(const std::array<BinaryCounts, 3>& counts) {
  TokenReport r;
  r.counts = counts;
  for (int t = 0; t < 3; ++t) r.metrics[t] = binary_metrics(counts[t]);
  return r;
}

inline TokenReport token_report(const dir::DirectionSequence& pred,
                                const dir::DirectionSequence& gold) {
  return token_report_from_counts(token_counts(pred, gold));
}

// ---------------------------------------------------------------------------
// hit-frame tolerance
// ---------------------------------------------------------------------------

struct ToleranceConfig {
  long long tol = 15;  // open interval: |P - n| < tol

  void validate() const { require(tol >= 1, Errc::bad_config, "tolerance must be >= 1"); }
};

struct ToleranceReport {
  long long tol = 0;
  BinaryCounts counts;
  Metrics metrics;
};

// Greedy one-to-one matching in increasing frame order: each prediction takes
// the nearest unmatched actual within the open tolerance window (smaller
// frame on distance ties).
inline ToleranceReport hit_tolerance_report(std::vector<long long> pred,
                                            std::vector<long long> actual,
                                            long long total_frames, const ToleranceConfig& cfg) {
  cfg.validate();
  for (long long v : pred)
    require(v >= 0 && v < total_frames, Errc::out_of_range,
            "predicted hit " + std::to_string(v) + " outside [0," + std::to_string(total_frames) + ")");
  for (long long v : actual)
    require(v >= 0 && v < total_frames, Errc::out_of_range,
            "actual hit " + std::to_string(v) + " outside [0," + std::to_string(total_frames) + ")");
  std::sort(pred.begin(), pred.end());
  std::sort(actual.begin(), actual.end());

  std::vector<bool> taken(actual.size(), false);
  long long tp = 0;
  for (long long p : pred) {
    long long best_dist = cfg.tol;
    std::size_t best_j = actual.size();
    for (std::size_t j = 0; j < actual.size(); ++j) {
      if (taken[j]) continue;
      long long d = std::abs(p - actual[j]);
      if (d < best_dist) {
        best_dist = d;
        best_j = j;
      }
    }
    if (best_j < actual.size()) {
      taken[best_j] = true;
      ++tp;
    }
  }
  BinaryCounts c;
  c.tp = tp;
  c.fp = static_cast<long long>(pred.size()) - tp;
  c.fn = static_cast<long long>(actual.size()) - tp;
  c.tn = total_frames - c.tp - c.fp - c.fn;
  require(c.tn >= 0, Errc::out_of_range, "more hit mismatches than frames");
  return {cfg.tol, c, binary_metrics(c)};
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

inline std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline nlohmann::json to_json(const BinaryCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1}};
}

inline nlohmann::json to_json(const BinaryReport& r) {
  return {{"counts", to_json(r.counts)}, {"metrics", to_json(r.metrics)}};
}

inline nlohmann::json to_json(const TrimmingReport& r) {
  return {{"correct", r.correct},
          {"extra", r.extra},
          {"missed", r.missed},
          {"total_trimmed", r.total_trimmed},
          {"actual", r.actual},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1}};
}

inline nlohmann::json to_json(const TokenReport& r) {
  static const char* names[3] = {"S", "B", "U"};
  nlohmann::json out = nlohmann::json::object();
  for (int t = 0; t < 3; ++t)
    out[names[t]] = {{"counts", to_json(r.counts[t])}, {"metrics", to_json(r.metrics[t])}};
  return out;
}

inline nlohmann::json to_json(const ToleranceReport& r) {
  return {{"tol", r.tol}, {"counts", to_json(r.counts)}, {"metrics", to_json(r.metrics)}};
}

inline std::string render_table(const BinaryReport& r, const std::string& title) {
  std::string s = title + "\n";
  s += "  tp=" + std::to_string(r.counts.tp) + " fp=" + std::to_string(r.counts.fp) +
       " fn=" + std::to_string(r.counts.fn) + " tn=" + std::to_string(r.counts.tn) + "\n";
  s += "  accuracy   precision  recall     f1\n";
  s += "  " + fmt4(r.metrics.accuracy) + "     " + fmt4(r.metrics.precision) + "     " +
       fmt4(r.metrics.recall) + "     " + fmt4(r.metrics.f1) + "\n";
  return s;
}

inline std::string render_table(const TrimmingReport& r) {
  std::string s = "rally trimming\n";
  s += "  correct    extra      missed     trimmed    actual\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "  %-10lld %-10lld %-10lld %-10lld %-10lld\n", r.correct,
                r.extra, r.missed, r.total_trimmed, r.actual);
  s += buf;
  s += "  accuracy   precision  recall     f1\n";
  s += "  " + fmt4(r.accuracy) + "     " + fmt4(r.precision) + "     " + fmt4(r.recall) +
       "     " + fmt4(r.f1) + "\n";
  return s;
}

inline std::string render_table(const TokenReport& r) {
  static const char* names[3] = {"S", "B", "U"};
  std::string s = "direction tokens\n";
  s += "  token  accuracy   precision  recall     f1\n";
  for (int t = 0; t < 3; ++t)
    s += std::string("  ") + names[t] + "      " + fmt4(r.metrics[t].accuracy) + "     " +
         fmt4(r.metrics[t].precision) + "     " + fmt4(r.metrics[t].recall) + "     " +
         fmt4(r.metrics[t].f1) + "\n";
  return s;
}

inline std::string render_table(const std::vector<ToleranceReport>& reports) {
  std::string s = "hit frames\n";
  s += "  tol    tp     fp     fn     accuracy   precision  recall     f1\n";
  for (const ToleranceReport& r : reports) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  +-%-4lld %-6lld %-6lld %-6lld %s     %s     %s     %s\n",
                  r.tol, r.counts.tp, r.counts.fp, r.counts.fn, fmt4(r.metrics.accuracy).c_str(),
                  fmt4(r.metrics.precision).c_str(), fmt4(r.metrics.recall).c_str(),
                  fmt4(r.metrics.f1).c_str());
    s += buf;
  }
  return s;
}

inline std::string csv_metrics_header() { return "accuracy,precision,recall,f1"; }

inline std::string render_csv(const Metrics& m) {
  return fmt4(m.accuracy) + "," + fmt4(m.precision) + "," + fmt4(m.recall) + "," + fmt4(m.f1);
}

inline std::string render_csv(const BinaryReport& r, const std::string& label) {
  return label + "," + std::to_string(r.counts.tp) + "," + std::to_string(r.counts.fp) + "," +
         std::to_string(r.counts.fn) + "," + std::to_string(r.counts.tn) + "," +
         render_csv(r.metrics);
}

inline std::string render_csv(const TrimmingReport& r) {
  std::string s = "section,correct,extra,missed,trimmed,actual," + csv_metrics_header() + "\n";
  s += "trimming," + std::to_string(r.correct) + "," + std::to_string(r.extra) + "," +
       std::to_string(r.missed) + "," + std::to_string(r.total_trimmed) + "," +
       std::to_string(r.actual) + "," + fmt4(r.accuracy) + "," + fmt4(r.precision) + "," +
       fmt4(r.recall) + "," + fmt4(r.f1) + "\n";
  return s;
}

inline std::string render_csv(const TokenReport& r) {
  static const char* names[3] = {"S", "B", "U"};
  std::string s = "token,tp,fp,fn,tn," + csv_metrics_header() + "\n";
  for (int t = 0; t < 3; ++t)
    s += render_csv(BinaryReport{r.counts[t], r.metrics[t]}, names[t]) + "\n";
  return s;
}

inline std::string render_csv(const std::vector<ToleranceReport>& reports) {
  std::string s = "tol,tp,fp,fn,tn," + csv_metrics_header() + "\n";
  for (const ToleranceReport& r : reports)
    s += render_csv(BinaryReport{r.counts, r.metrics}, std::to_string(r.tol)) + "\n";
  return s;
}

}  // namespace hitframe::eval
