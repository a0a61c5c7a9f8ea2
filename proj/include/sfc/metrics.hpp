#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "events.hpp"

namespace sfc {

struct ScoredEvent {
  double prediction = 0.5;
  std::uint8_t label = 0;
  std::uint32_t section = 0;
  std::uint32_t frequency = 0;  // prior campaign views in the last week
  std::array<ValueIndex, FeatureSchema::kMaxUserFeatures> segments{};  // user feature values
};

inline constexpr double kPredictionClamp = 1e-9;

inline double event_logloss(double p, int y) {
  p = std::clamp(p, kPredictionClamp, 1.0 - kPredictionClamp);
  return y ? -std::log(p) : -std::log(1.0 - p);
}

// Mergeable running mean of the per-event log loss.
class LogLossAccumulator {
 public:
  void add(double p, int y) {
    sum_ += event_logloss(p, y);
    ++count_;
  }
  void merge(const LogLossAccumulator& o) {
    sum_ += o.sum_;
    count_ += o.count_;
  }
  std::size_t count() const { return count_; }
  double mean() const {
    if (count_ == 0) throw MetricError("logloss of an empty set");
    return sum_ / static_cast<double>(count_);
  }

 private:
  double sum_ = 0;
  std::size_t count_ = 0;
};

inline double logloss(std::span<const ScoredEvent> scored) {
  LogLossAccumulator acc;
  for (const auto& e : scored) acc.add(e.prediction, e.label);
  return acc.mean();
}

// P(score+ > score-) + P(tie)/2 via the rank-sum statistic with mid-ranks.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) {
        pos_rank_sum += mid_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUC undefined: need both positive and negative events");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

inline double auc(std::span<const ScoredEvent> scored) {
  std::vector<double> s;
  std::vector<std::uint8_t> y;
  s.reserve(scored.size());
  y.reserve(scored.size());
  for (const auto& e : scored) {
    s.push_back(e.prediction);
    y.push_back(e.label);
  }
  return auc(s, y);
}

struct SaucResult {
  double value = 0;
  std::size_t sections_used = 0;
  std::vector<std::uint32_t> skipped;  // single-class sections
};

// Click-weighted mean of per-section AUCs; single-class sections carry no
// defined AUC and are skipped.
inline SaucResult sauc_detail(std::span<const ScoredEvent> scored) {
  std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<std::uint8_t>>> by_section;
  for (const auto& e : scored) {
    auto& [s, y] = by_section[e.section];
    s.push_back(e.prediction);
    y.push_back(e.label);
  }
  SaucResult r;
  double weighted = 0, clicks = 0;
  for (const auto& [section, sy] : by_section) {
    const auto& [s, y] = sy;
    const auto pos = static_cast<double>(std::count(y.begin(), y.end(), std::uint8_t{1}));
    if (pos == 0 || pos == static_cast<double>(y.size())) {
      r.skipped.push_back(section);
      continue;
    }
    weighted += pos * auc(s, y);
    clicks += pos;
    ++r.sections_used;
  }
  if (r.sections_used == 0) throw MetricError("sAUC undefined: no section has both clicks and skips");
  r.value = weighted / clicks;
  return r;
}

inline double sauc(std::span<const ScoredEvent> scored) { return sauc_detail(scored).value; }

struct MetricSummary {
  double logloss = std::numeric_limits<double>::quiet_NaN();
  double sauc = std::numeric_limits<double>::quiet_NaN();
  double cpm = std::numeric_limits<double>::quiet_NaN();
};

struct Lifts {
  double logloss_pct = 0;
  double sauc_pct = 0;
  double cpm_pct = 0;
};

// Lower-is-better: (1 - c/b)*100. NaN inputs propagate.
inline double lift_lower_better(double candidate, double baseline) {
  if (std::isnan(candidate) || std::isnan(baseline)) return std::numeric_limits<double>::quiet_NaN();
  if (!(baseline > 0)) throw MetricError("lift against a non-positive baseline");
  return (1.0 - candidate / baseline) * 100.0;
}

// Higher-is-better: (c/b - 1)*100.
inline double lift_higher_better(double candidate, double baseline) {
  if (std::isnan(candidate) || std::isnan(baseline)) return std::numeric_limits<double>::quiet_NaN();
  if (!(baseline > 0)) throw MetricError("lift against a non-positive baseline");
  return (candidate / baseline - 1.0) * 100.0;
}

inline Lifts lifts(const MetricSummary& candidate, const MetricSummary& baseline) {
  return {lift_lower_better(candidate.logloss, baseline.logloss), lift_higher_better(candidate.sauc, baseline.sauc),
          lift_higher_better(candidate.cpm, baseline.cpm)};
}

struct NctrPoint {
  std::uint32_t v = 0;  // the last point aggregates v >= v_max
  double ctr_n = 0;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  double cdf = 0;
  double se = 0;  // standard error of ctr_n (delta method)
};

// Mergeable impression/click counts by frequency.
class NctrCounts {
 public:
  explicit NctrCounts(std::uint32_t v_max = 50) : impressions_(v_max + 1, 0), clicks_(v_max + 1, 0) {}

  void add(std::uint32_t v, int click) {
    const auto i = std::min<std::size_t>(v, impressions_.size() - 1);
    ++impressions_[i];
    clicks_[i] += click ? 1 : 0;
  }

  void merge(const NctrCounts& o) {
    if (o.impressions_.size() != impressions_.size()) throw MetricError("merging nCTR counts with different v_max");
    for (std::size_t i = 0; i < impressions_.size(); ++i) {
      impressions_[i] += o.impressions_[i];
      clicks_[i] += o.clicks_[i];
    }
  }

  std::uint64_t total() const { return std::accumulate(impressions_.begin(), impressions_.end(), std::uint64_t{0}); }

  std::vector<NctrPoint> curve() const {
    if (impressions_[0] == 0) throw MetricError("nCTR undefined: no impressions at v=0");
    const double n0 = static_cast<double>(impressions_[0]);
    const double ctr0 = static_cast<double>(clicks_[0]) / n0;
    if (ctr0 == 0) throw MetricError("nCTR undefined: no clicks at v=0");
    const double var0 = ctr0 * (1 - ctr0) / n0;
    const double total = static_cast<double>(this->total());
    std::vector<NctrPoint> out;
    double cum = 0;
    for (std::size_t v = 0; v < impressions_.size(); ++v) {
      NctrPoint p;
      p.v = static_cast<std::uint32_t>(v);
      p.impressions = impressions_[v];
      p.clicks = clicks_[v];
      cum += static_cast<double>(impressions_[v]);
      p.cdf = v + 1 == impressions_.size() ? 1.0 : cum / total;
      if (impressions_[v] > 0) {
        const double n = static_cast<double>(impressions_[v]);
        const double ctr = static_cast<double>(clicks_[v]) / n;
        p.ctr_n = v == 0 ? 1.0 : ctr / ctr0;
        if (v > 0) {
          const double var = ctr * (1 - ctr) / n;
          p.se = std::sqrt(var / (ctr0 * ctr0) + ctr * ctr * var0 / (ctr0 * ctr0 * ctr0 * ctr0));
        }
      } else {
        p.ctr_n = std::numeric_limits<double>::quiet_NaN();
        p.se = std::numeric_limits<double>::quiet_NaN();
      }
      out.push_back(p);
    }
    return out;
  }

 private:
  std::vector<std::uint64_t> impressions_;
  std::vector<std::uint64_t> clicks_;
};

inline std::vector<NctrPoint> nctr_curve(std::span<const ScoredEvent> scored, std::uint32_t v_max = 50) {
  NctrCounts counts(v_max);
  for (const auto& e : scored) counts.add(e.frequency, e.label);
  return counts.curve();
}

// Grouping key for segment_breakdown: a user feature type or the section.
struct SegmentKey {
  std::string name;
  bool is_section = false;
  std::size_t feature = 0;
  std::vector<std::string> labels;
};

inline SegmentKey resolve_segment_key(const FeatureSchema& schema, std::string_view name) {
  SegmentKey key;
  key.name = std::string(name);
  if (name == "section") {
    key.is_section = true;
    key.labels = schema.sections();
    return key;
  }
  auto k = schema.user_type_index(name);
  if (!k) throw MetricError("unknown segment key '" + std::string(name) + "'");
  key.feature = *k;
  key.labels = schema.user_type(*k).values;
  return key;
}

struct SegmentCurve {
  std::string segment;
  std::uint64_t impressions = 0;
  double share = 0;
  double share_se = 0;
  std::vector<NctrPoint> curve;  // empty when the segment has no v=0 clicks
};

inline std::vector<SegmentCurve> segment_breakdown(std::span<const ScoredEvent> scored, const SegmentKey& key,
                                                   std::uint32_t v_max = 50) {
  std::vector<NctrCounts> counts(key.labels.size(), NctrCounts(v_max));
  for (const auto& e : scored) {
    const std::size_t g = key.is_section ? e.section : e.segments[key.feature];
    if (g >= counts.size()) throw MetricError("segment value out of range for '" + key.name + "'");
    counts[g].add(e.frequency, e.label);
  }
  const double total = static_cast<double>(scored.size());
  std::vector<SegmentCurve> out;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    SegmentCurve sc;
    sc.segment = key.labels[g];
    sc.impressions = counts[g].total();
    if (sc.impressions == 0) continue;
    sc.share = static_cast<double>(sc.impressions) / total;
    sc.share_se = std::sqrt(sc.share * (1 - sc.share) / total);
    try {
      sc.curve = counts[g].curve();
    } catch (const MetricError&) {
    }
    out.push_back(std::move(sc));
  }
  return out;
}

// CSV emitters. Numbers use the shortest round-trip form so reruns are
// byte-identical.
inline void write_nctr_csv(std::ostream& out, const std::vector<NctrPoint>& curve) {
  out << "v,ctr_n,impressions,cdf,clicks,se\n";
  for (const auto& p : curve)
    out << p.v << ',' << format_double(p.ctr_n) << ',' << p.impressions << ',' << format_double(p.cdf) << ','
        << p.clicks << ',' << format_double(p.se) << '\n';
}

inline void write_segment_csv(std::ostream& out, const std::string& key, const std::vector<SegmentCurve>& segs) {
  out << "segment_key,segment,share,share_se,v,ctr_n,impressions,cdf,clicks,se\n";
  for (const auto& s : segs)
    for (const auto& p : s.curve)
      out << key << ',' << s.segment << ',' << format_double(s.share) << ',' << format_double(s.share_se) << ','
          << p.v << ',' << format_double(p.ctr_n) << ',' << p.impressions << ',' << format_double(p.cdf) << ','
          << p.clicks << ',' << format_double(p.se) << '\n';
}

inline constexpr const char* kMetricsCsvHeader = "name,events,logloss,auc,sauc,cpm";
inline constexpr const char* kLiftsCsvHeader = "candidate,baseline,logloss_lift_pct,sauc_lift_pct,cpm_lift_pct";

struct MetricsRow {
  std::string name;
  std::uint64_t events = 0;
  double logloss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double sauc = std::numeric_limits<double>::quiet_NaN();
  double cpm = std::numeric_limits<double>::quiet_NaN();

  MetricSummary summary() const { return {logloss, sauc, cpm}; }
};

// Fills logloss, auc and sauc; undefined metrics stay NaN.
inline MetricsRow summarize(std::string name, std::span<const ScoredEvent> scored) {
  MetricsRow r;
  r.name = std::move(name);
  r.events = scored.size();
  if (scored.empty()) return r;
  r.logloss = logloss(scored);
  try {
    r.auc = auc(scored);
  } catch (const MetricError&) {
  }
  try {
    r.sauc = sauc(scored);
  } catch (const MetricError&) {
  }
  return r;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows)
    out << r.name << ',' << r.events << ',' << format_double(r.logloss) << ',' << format_double(r.auc) << ','
        << format_double(r.sauc) << ',' << format_double(r.cpm) << '\n';
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsCsvHeader)
    throw ParseError(1, "header", std::string("expected '") + kMetricsCsvHeader + "'");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split(trim(line), ',');
    if (f.size() != 6) throw ParseError(line_no, "field count", "expected 6 fields");
    MetricsRow r;
    r.name = std::string(f[0]);
    if (!try_parse_int(f[1], r.events)) throw ParseError(line_no, "events", "not an integer");
    if (!try_parse_double(f[2], r.logloss)) throw ParseError(line_no, "logloss", "not a number");
    if (!try_parse_double(f[3], r.auc)) throw ParseError(line_no, "auc", "not a number");
    if (!try_parse_double(f[4], r.sauc)) throw ParseError(line_no, "sauc", "not a number");
    if (!try_parse_double(f[5], r.cpm)) throw ParseError(line_no, "cpm", "not a number");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_lifts_csv(std::ostream& out, const std::vector<MetricsRow>& rows, const std::string& baseline) {
  auto base = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.name == baseline; });
  if (base == rows.end()) throw MetricError("baseline '" + baseline + "' not found");
  out << kLiftsCsvHeader << '\n';
  for (const auto& r : rows) {
    const auto l = lifts(r.summary(), base->summary());
    out << r.name << ',' << baseline << ',' << format_double(l.logloss_pct) << ',' << format_double(l.sauc_pct) << ','
        << format_double(l.cpm_pct) << '\n';
  }
}

}  // namespace sfc
