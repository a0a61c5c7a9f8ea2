#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "common.hpp"
#include "events.hpp"
#include "freqtrack.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace sfc {

// eta0 / (alpha + acc^beta), with 0^beta = 0.
inline double step_size(double accumulator, const StepParams& p) {
  const double scaled = accumulator > 0 ? std::pow(accumulator, p.beta) : 0.0;
  return p.eta0 / (p.alpha + scaled);
}

// Gradient of the per-event regularized log loss w.r.t. every parameter the
// event touches. Vectors of a given table are keyed by the feature value.
struct EventGradients {
  double error = 0;  // sigma(s') - y
  double bias = 0;
  std::vector<std::vector<double>> user;                            // [k] -> d entries
  std::array<std::vector<double>, kAdLevels> ad;                    // D entries each
  std::vector<std::vector<std::pair<std::string, std::vector<double>>>> extra;  // [x] -> (value, D entries)
  bool has_sfc = false;
  std::string sfc_key;
  std::size_t sfc_bin = 0;
  double sfc = 0;
};

// The scalar loss the gradients differentiate: log loss of sigma(s') plus
// lambda/2 times the squared norm of every touched parameter.
inline double event_loss(const ImpressionEvent& e, std::uint64_t f, const Model& m) {
  const auto s = m.score(e.user, e.ad, f);
  const double y = e.click;
  const double p = s.pctr;
  double loss = -(y * std::log(p) + (1 - y) * std::log(1 - p));
  const double lambda = m.hyper().lambda;
  if (lambda == 0) return loss;
  double sq = m.bias() * m.bias();
  std::vector<double> scratch(std::max(m.dim(), m.feature_dim()));
  auto add = [&](const VectorTable& t, std::string_view key) {
    const double* row = t.read(key, scratch.data());
    for (std::size_t i = 0; i < t.dim(); ++i) sq += row[i] * row[i];
  };
  for (std::size_t k = 0; k < m.num_user_features(); ++k) add(m.user_table(k), m.user_key(e.user, k));
  for (std::size_t l = 0; l < kAdLevels; ++l)
    add(m.ad_table(static_cast<AdLevel>(l)), e.ad.id_at(static_cast<AdLevel>(l)));
  for (std::size_t x = 0; x < m.schema().ad_extra_types().size() && x < e.ad.extra_features.size(); ++x)
    for (const auto& v : e.ad.extra_features[x]) add(m.extra_table(x), v);
  if (m.sfc_enabled()) {
    const double w = m.sfc_weight(m.weight_key(e.ad), m.hyper().binning.index(f));
    sq += w * w;
  }
  return loss + 0.5 * lambda * sq;
}

inline EventGradients event_gradients(const ImpressionEvent& e, std::uint64_t f, const Model& m) {
  const std::size_t K = m.num_user_features();
  const std::size_t d = m.feature_dim();
  const std::size_t D = m.dim();
  const std::size_t o = m.hyper().o;
  const std::size_t s = m.hyper().s;
  const double lambda = m.hyper().lambda;

  std::vector<double> ustore;
  std::vector<const double*> urows;
  m.user_feature_vectors(e.user, ustore, urows);
  const auto u = m.combine_user(urows);
  const auto a = m.ad_vector(e.ad);
  const double raw = raw_score(u, a, m.bias());

  EventGradients g;
  double adjusted = raw;
  if (m.sfc_enabled()) {
    g.has_sfc = true;
    g.sfc_key = m.weight_key(e.ad);
    g.sfc_bin = m.hyper().binning.index(f);
    adjusted += m.sfc_weight(g.sfc_key, g.sfc_bin);
  }
  const double err = sigmoid(adjusted) - static_cast<double>(e.click);
  g.error = err;
  g.bias = err + lambda * m.bias();
  if (g.has_sfc) g.sfc = err + lambda * m.sfc_weight(g.sfc_key, g.sfc_bin);

  g.user.assign(K, std::vector<double>(d, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    auto& gk = g.user[k];
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      const std::size_t block = k < j ? m.pair_block(k, j) : m.pair_block(j, k);
      const double* other = urows[j] + m.segment_offset(j, k);
      const std::size_t seg = m.segment_offset(k, j);
      for (std::size_t t = 0; t < o; ++t) gk[seg + t] = err * other[t] * a[block + t];
    }
    const std::size_t solo = m.solo_block(k);
    for (std::size_t t = 0; t < s; ++t) gk[m.solo_offset() + t] = err * a[solo + t];
    for (std::size_t i = 0; i < d; ++i) gk[i] += lambda * urows[k][i];
  }

  std::vector<double> scratch(D);
  for (std::size_t l = 0; l < kAdLevels; ++l) {
    const auto level = static_cast<AdLevel>(l);
    const double* row = m.ad_table(level).read(e.ad.id_at(level), scratch.data());
    auto& gl = g.ad[l];
    gl.resize(D);
    for (std::size_t i = 0; i < D; ++i) gl[i] = err * u[i] + lambda * row[i];
  }

  const std::size_t n_extra = std::min(m.schema().ad_extra_types().size(), e.ad.extra_features.size());
  g.extra.resize(n_extra);
  for (std::size_t x = 0; x < n_extra; ++x) {
    const auto& values = e.ad.extra_features[x];
    if (values.empty()) continue;
    const double w = 1.0 / static_cast<double>(values.size());
    for (const auto& v : values) {
      const double* row = m.extra_table(x).read(v, scratch.data());
      std::vector<double> gv(D);
      for (std::size_t i = 0; i < D; ++i) gv[i] = err * w * u[i] + lambda * row[i];
      // a value listed twice contributes twice
      auto it = std::find_if(g.extra[x].begin(), g.extra[x].end(), [&](const auto& p) { return p.first == v; });
      if (it == g.extra[x].end())
        g.extra[x].emplace_back(v, std::move(gv));
      else
        for (std::size_t i = 0; i < D; ++i) it->second[i] += gv[i];
    }
  }
  return g;
}

namespace detail {

inline bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline void descend(std::span<double> values, std::span<double> acc, std::span<const double> grad,
                    const StepParams& p) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double gi = grad[i];
    if (gi == 0.0) continue;
    values[i] -= step_size(acc[i], p) * gi;
    acc[i] += std::abs(gi);
  }
}

}  // namespace detail

// theta -= eta(acc_before) * g; acc += |g|, per coordinate.
inline void apply_update(Model& m, const EventGradients& g, const ImpressionEvent& e) {
  const auto& step = m.hyper().step;
  if (g.bias != 0.0) {
    m.bias() -= step_size(m.bias_accumulator(), step) * g.bias;
    m.bias_accumulator() += std::abs(g.bias);
  }
  for (std::size_t k = 0; k < g.user.size(); ++k) {
    if (detail::all_zero(g.user[k])) continue;
    auto& t = m.user_table(k);
    const auto row = t.materialize(m.user_key(e.user, k));
    detail::descend(t.values(row), t.accumulators(row), g.user[k], step);
  }
  for (std::size_t l = 0; l < kAdLevels; ++l) {
    if (detail::all_zero(g.ad[l])) continue;
    const auto level = static_cast<AdLevel>(l);
    auto& t = m.ad_table(level);
    const auto row = t.materialize(e.ad.id_at(level));
    detail::descend(t.values(row), t.accumulators(row), g.ad[l], step);
  }
  for (std::size_t x = 0; x < g.extra.size(); ++x) {
    auto& t = m.extra_table(x);
    for (const auto& [value, grad] : g.extra[x]) {
      if (detail::all_zero(grad)) continue;
      const auto row = t.materialize(value);
      detail::descend(t.values(row), t.accumulators(row), grad, step);
    }
  }
  if (g.has_sfc && g.sfc != 0.0) {
    auto& t = m.sfc_table();
    const auto row = t.materialize(g.sfc_key);
    auto w = t.values(row);
    auto acc = t.accumulators(row);
    w[g.sfc_bin] -= step_size(acc[g.sfc_bin], m.hyper().sfc_step_params()) * g.sfc;
    acc[g.sfc_bin] += std::abs(g.sfc);
  }
}

struct TrainInterval {
  std::size_t end_event = 0;
  double logloss = 0;
  double sauc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::size_t events_seen = 0;
  std::vector<TrainInterval> intervals;
  double final_logloss = std::numeric_limits<double>::quiet_NaN();  // over the whole stream
  double final_sauc = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0;
  double events_per_second = 0;
};

inline void write_progress_csv(std::ostream& out, const TrainReport& r) {
  out << "interval_end_event,logloss,sauc\n";
  for (const auto& i : r.intervals)
    out << i.end_event << ',' << format_double(i.logloss) << ',' << format_double(i.sauc) << '\n';
}

inline ScoredEvent make_scored(const ImpressionEvent& e, double prediction, std::uint32_t frequency) {
  ScoredEvent s;
  s.prediction = prediction;
  s.label = e.click;
  s.section = e.section;
  s.frequency = frequency;
  for (std::size_t k = 0; k < e.user.feature_values.size() && k < s.segments.size(); ++k)
    s.segments[k] = e.user.feature_values[k];
  return s;
}

// Campaign views in the last week: the frequency used for statistics.
inline constexpr FrequencyConfig kStatsFrequency{AdLevel::campaign, 7};

// One-pass progressive trainer: every event is scored with the model as it
// stands, then used for one SGD step, then recorded as a view.
class Trainer {
 public:
  explicit Trainer(Model model, bool keep_scored = true)
      : model_(std::move(model)), keep_scored_(keep_scored), started_(std::chrono::steady_clock::now()) {}

  Trainer(FeatureSchema schema, HyperParams hp, bool sfc_enabled, bool keep_scored = true)
      : Trainer(Model(std::move(schema), hp, sfc_enabled), keep_scored) {}

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const FrequencyState& frequency_state() const { return freq_; }
  const std::vector<ScoredEvent>& scored() const { return scored_; }

  // Scores `e` before learning from it; with `update` false the model stays
  // frozen but the view is still recorded.
  ScoredEvent observe(const ImpressionEvent& e, bool update = true) {
    if (seen_ > 0 && e.timestamp < last_timestamp_)
      throw OrderingError("event " + std::to_string(seen_ + 1) + " at t=" + std::to_string(e.timestamp) +
                          " precedes t=" + std::to_string(last_timestamp_));
    const std::uint64_t f = model_.model_frequency(freq_, e.user, e.ad, e.timestamp);
    const auto stats_f = freq_.frequency(e.user, e.ad, e.timestamp, kStatsFrequency);
    const auto scored = make_scored(e, model_.score(e.user, e.ad, f).pctr, stats_f);
    if (update) apply_update(model_, event_gradients(e, f, model_), e);
    freq_.record_view(e.user, e.ad, e.timestamp);
    last_timestamp_ = e.timestamp;
    record(scored);
    return scored;
  }

  TrainReport report() const {
    TrainReport r = report_;
    r.events_seen = seen_;
    if (!interval_.empty()) r.intervals.push_back(close_interval(interval_));
    if (seen_ > 0) r.final_logloss = total_loss_.mean();
    if (keep_scored_ && !scored_.empty()) {
      try {
        r.final_sauc = sauc(scored_);
      } catch (const MetricError&) {
      }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    r.events_per_second = r.seconds > 0 ? static_cast<double>(seen_) / r.seconds : 0.0;
    return r;
  }

 private:
  TrainInterval close_interval(const std::vector<ScoredEvent>& window) const {
    TrainInterval i;
    i.end_event = seen_;
    i.logloss = logloss(window);
    try {
      i.sauc = sauc(window);
    } catch (const MetricError&) {
    }
    return i;
  }

  void record(const ScoredEvent& s) {
    ++seen_;
    total_loss_.add(s.prediction, s.label);
    if (keep_scored_) scored_.push_back(s);
    interval_.push_back(s);
    if (interval_.size() == model_.hyper().report_interval) {
      report_.intervals.push_back(close_interval(interval_));
      interval_.clear();
    }
  }

  Model model_;
  FrequencyState freq_;
  bool keep_scored_;
  std::size_t seen_ = 0;
  Timestamp last_timestamp_ = 0;
  LogLossAccumulator total_loss_;
  std::vector<ScoredEvent> scored_;
  std::vector<ScoredEvent> interval_;
  TrainReport report_;
  std::chrono::steady_clock::time_point started_;
};

struct TrainResult {
  Model model;
  TrainReport report;
  std::vector<ScoredEvent> scored;
};

inline TrainResult train_stream(std::span<const ImpressionEvent> events, const FeatureSchema& schema,
                                const HyperParams& hp, bool sfc_enabled, bool keep_scored = true) {
  Trainer t(schema, hp, sfc_enabled, keep_scored);
  for (const auto& e : events) t.observe(e);
  auto report = t.report();
  TrainResult out{std::move(t.model()), std::move(report), t.scored()};
  return out;
}

struct SweepEntry {
  std::size_t config_index = 0;
  HyperParams hp;
  TrainReport report;
};

// Independent models over the same stream, ranked by final progressive log
// loss (ties keep config order). Results do not depend on `threads`.
inline std::vector<SweepEntry> sweep(const std::vector<HyperParams>& configs, std::span<const ImpressionEvent> events,
                                     const FeatureSchema& schema, bool sfc_enabled, unsigned threads = 1) {
  if (configs.empty()) throw ConfigError("sweep needs at least one configuration");
  std::vector<SweepEntry> out(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      auto r = train_stream(events, schema, configs[i], sfc_enabled);
      out[i] = SweepEntry{i, configs[i], r.report};
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.report.final_logloss < b.report.final_logloss; });
  return out;
}

}  // namespace sfc
