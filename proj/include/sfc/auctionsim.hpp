#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "events.hpp"
#include "freqtrack.hpp"
#include "generator.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace sfc {

// Boolean targeting stub: either open to everyone or restricted to a set of
// values of one user feature.
struct Targeting {
  std::optional<std::size_t> feature;
  std::vector<ValueIndex> allowed;

  bool operator()(const UserProfile& u) const {
    if (!feature) return true;
    const auto v = u.feature_values.at(*feature);
    return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
  }
};

struct AdCandidate {
  AdIdentity ad;
  double bid = 1.0;  // per click
  Targeting targeting;
  bool active = true;
};

struct Cap {
  std::uint32_t max_views = 0;
  int window_days = 1;
};

// A user may see a campaign at most campaign_cap.max_views times per
// campaign_cap.window_days, and one ad (at `ad_level`) at most
// ad_cap.max_views times per ad_cap.window_days.
struct HfcRules {
  Cap campaign_cap{5, 7};
  Cap ad_cap{2, 1};
  AdLevel ad_level = AdLevel::creative;
  struct Override {
    Cap campaign_cap;
    Cap ad_cap;
  };
  std::map<std::string, Override> advertiser_overrides;

  const Cap& campaign_for(const AdIdentity& ad) const {
    auto it = advertiser_overrides.find(ad.advertiser_id);
    return it == advertiser_overrides.end() ? campaign_cap : it->second.campaign_cap;
  }
  const Cap& ad_for(const AdIdentity& ad) const {
    auto it = advertiser_overrides.find(ad.advertiser_id);
    return it == advertiser_overrides.end() ? ad_cap : it->second.ad_cap;
  }

  void validate() const {
    auto check = [](const Cap& c) {
      if (c.max_views == 0) throw ConfigError("HFC caps must be positive");
      if (c.window_days <= 0 || c.window_days > FrequencyState::kMaxWindowDays)
        throw ConfigError("HFC window out of range");
    };
    check(campaign_cap);
    check(ad_cap);
    for (const auto& [k, o] : advertiser_overrides) {
      check(o.campaign_cap);
      check(o.ad_cap);
    }
  }
};

inline bool within_caps(const UserProfile& user, const AdIdentity& ad, const FrequencyState& state,
                        const HfcRules& rules, Timestamp t) {
  const auto& cc = rules.campaign_for(ad);
  if (state.count(user.user_id, AdLevel::campaign, ad.campaign_id, t, cc.window_days) >= cc.max_views) return false;
  const auto& ac = rules.ad_for(ad);
  return state.count(user.user_id, rules.ad_level, ad.id_at(rules.ad_level), t, ac.window_days) < ac.max_views;
}

inline bool eligible(const UserProfile& user, const AdCandidate& candidate, const FrequencyState& state,
                     const HfcRules& rules, bool hfc_enabled, Timestamp t) {
  if (!candidate.active || !candidate.targeting(user)) return false;
  return !hfc_enabled || within_caps(user, candidate.ad, state, rules, t);
}

struct AuctionResult {
  std::optional<std::size_t> winner;  // index into the eligible list
  std::optional<std::size_t> runner_up;
  double gsp_price = 0;
  double winner_score = 0;
  double runner_up_score = 0;
  int click = 0;
};

// Rank by bid * pCTR (ties: smaller creative id first). The winner pays
// (score_2 / score_1) * bid_1, or floor_fraction * bid_1 with no runner-up.
inline AuctionResult run_auction(std::span<const AdCandidate* const> eligibles, std::span<const double> pctrs,
                                 double floor_fraction = 0.1) {
  if (eligibles.size() != pctrs.size()) throw Error("auction: candidate and pCTR lists differ in length");
  AuctionResult r;
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = eligibles[a]->bid * pctrs[a];
    const double sb = eligibles[b]->bid * pctrs[b];
    if (sa != sb) return sa > sb;
    return eligibles[a]->ad.creative_id < eligibles[b]->ad.creative_id;
  };
  for (std::size_t i = 0; i < eligibles.size(); ++i) {
    if (!r.winner || better(i, *r.winner)) {
      r.runner_up = r.winner;
      r.winner = i;
    } else if (!r.runner_up || better(i, *r.runner_up)) {
      r.runner_up = i;
    }
  }
  if (!r.winner) return r;
  const double bid1 = eligibles[*r.winner]->bid;
  r.winner_score = bid1 * pctrs[*r.winner];
  if (r.runner_up) {
    r.runner_up_score = eligibles[*r.runner_up]->bid * pctrs[*r.runner_up];
    r.gsp_price = r.winner_score > 0 ? r.runner_up_score / r.winner_score * bid1 : bid1;
  } else {
    r.gsp_price = floor_fraction * bid1;
  }
  return r;
}

enum class Predictor : std::uint8_t { baseline, sfc, oracle, constant };

inline const char* to_string(Predictor p) {
  switch (p) {
    case Predictor::baseline: return "baseline";
    case Predictor::sfc: return "sfc";
    case Predictor::oracle: return "oracle";
    case Predictor::constant: return "constant";
  }
  return "?";
}

inline Predictor parse_predictor(std::string_view s) {
  if (s == "baseline") return Predictor::baseline;
  if (s == "sfc") return Predictor::sfc;
  if (s == "oracle") return Predictor::oracle;
  if (s == "constant") return Predictor::constant;
  throw ConfigError("unknown bucket model '" + std::string(s) + "'");
}

struct BucketConfig {
  std::string name;
  Predictor model = Predictor::baseline;
  bool hfc_enabled = true;
  double traffic_share = 1.0;
  bool frozen = false;  // serve without online updates
};

struct SimulationConfig {
  GeneratorConfig gen;  // population, arrivals and click ground truth
  HyperParams hp;
  std::vector<BucketConfig> buckets;
  std::string baseline;
  HfcRules rules;
  double floor_fraction = 0.1;
  int pretrain_days = 14;
  std::size_t pretrain_events_per_day = 0;  // 0: gen.events_per_day
  double bid_median = 1.0;
  double bid_log_sigma = 0.4;
  double targeted_fraction = 0.25;
  unsigned threads = 1;

  void validate() const {
    gen.validate();
    hp.validate();
    rules.validate();
    if (buckets.empty()) throw ConfigError("simulation needs at least one bucket");
    double total = 0;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      const auto& b = buckets[i];
      if (b.name.empty()) throw ConfigError("bucket without a name");
      for (std::size_t j = 0; j < i; ++j)
        if (buckets[j].name == b.name) throw ConfigError("duplicate bucket '" + b.name + "'");
      if (!(b.traffic_share > 0 && b.traffic_share <= 1)) throw ConfigError("bucket share must lie in (0,1]");
      total += b.traffic_share;
    }
    if (total > 1 + 1e-9) throw ConfigError("bucket shares sum to more than 1");
    if (!baseline.empty() &&
        std::none_of(buckets.begin(), buckets.end(), [&](const auto& b) { return b.name == baseline; }))
      throw ConfigError("baseline bucket '" + baseline + "' is not defined");
    if (!(floor_fraction >= 0 && floor_fraction <= 1)) throw ConfigError("floor_fraction must lie in [0,1]");
    if (pretrain_days < 0) throw ConfigError("pretrain_days must be non-negative");
    if (!(bid_median > 0) || !(bid_log_sigma >= 0)) throw ConfigError("invalid bid distribution");
  }
};

// Reads `sim.*` keys on top of the generator (`gen.*`, `schema.*`) and
// trainer (`train.*`) keys.
inline SimulationConfig simulation_config_from(const KeyValueConfig& kv) {
  SimulationConfig c;
  c.gen = generator_config_from(kv);
  c.hp = HyperParams::from_config(kv);
  auto names = kv.get_list("sim.buckets");
  if (names.empty()) names = {"hfc_baseline", "hybrid", "sfc"};
  for (const auto& n : names) {
    BucketConfig b;
    b.name = n;
    const std::string p = "sim.bucket." + n + ".";
    const std::string fallback_model = n == "hfc_baseline" ? "baseline" : (n == "hybrid" || n == "sfc") ? "sfc" : "";
    b.model = parse_predictor(kv.get_string(p + "model", fallback_model));
    b.hfc_enabled = kv.get_bool(p + "hfc", n != "sfc");
    b.traffic_share = kv.get_double(p + "share", 1.0 / static_cast<double>(names.size()));
    b.frozen = kv.get_bool(p + "frozen", false);
    c.buckets.push_back(b);
  }
  c.baseline = kv.get_string("sim.baseline", c.buckets.front().name);
  c.rules.campaign_cap.max_views = static_cast<std::uint32_t>(kv.get_int("sim.hfc.campaign_cap", 5));
  c.rules.campaign_cap.window_days = parse_window_days(kv.get_string("sim.hfc.campaign_window", "7"));
  c.rules.ad_cap.max_views = static_cast<std::uint32_t>(kv.get_int("sim.hfc.ad_cap", 2));
  c.rules.ad_cap.window_days = parse_window_days(kv.get_string("sim.hfc.ad_window", "1"));
  c.rules.ad_level = parse_ad_level(kv.get_string("sim.hfc.ad_level", "creative"));
  for (auto& [spec, value] : kv.with_prefix("sim.hfc.override")) {
    // sim.hfc.override.<advertiser> = campaign_cap,campaign_window,ad_cap,ad_window
    auto parts = kv.get_list("sim.hfc.override." + spec);
    if (parts.size() != 4) throw ConfigError("sim.hfc.override." + spec + " needs four values");
    HfcRules::Override o;
    std::int64_t v[4];
    for (int i = 0; i < 4; ++i)
      if (!try_parse_int(parts[static_cast<std::size_t>(i)], v[i]) || v[i] <= 0)
        throw ConfigError("sim.hfc.override." + spec + ": expected positive integers");
    o.campaign_cap = {static_cast<std::uint32_t>(v[0]), static_cast<int>(v[1])};
    o.ad_cap = {static_cast<std::uint32_t>(v[2]), static_cast<int>(v[3])};
    c.rules.advertiser_overrides[spec] = o;
  }
  c.floor_fraction = kv.get_double("sim.floor_fraction", c.floor_fraction);
  c.pretrain_days = static_cast<int>(kv.get_int("sim.pretrain_days", c.pretrain_days));
  c.pretrain_events_per_day =
      static_cast<std::size_t>(kv.get_int("sim.pretrain_events_per_day", static_cast<std::int64_t>(c.pretrain_events_per_day)));
  c.bid_median = kv.get_double("sim.bid_median", c.bid_median);
  c.bid_log_sigma = kv.get_double("sim.bid_log_sigma", c.bid_log_sigma);
  c.targeted_fraction = kv.get_double("sim.targeted_fraction", c.targeted_fraction);
  c.validate();
  return c;
}

// One candidate per creative; bids are per campaign. A `targeted_fraction`
// of campaigns restrict themselves to one value of the last user feature.
inline std::vector<AdCandidate> build_candidates(const SimulationConfig& cfg, const Population& pop) {
  Rng rng(substream_seed(cfg.gen.seed, "bids"));
  const auto& schema = cfg.gen.schema;
  const std::size_t tf = schema.num_user_features() - 1;
  std::vector<double> campaign_bid(cfg.gen.n_campaigns);
  std::vector<Targeting> campaign_targeting(cfg.gen.n_campaigns);
  for (std::size_t c = 0; c < campaign_bid.size(); ++c) {
    campaign_bid[c] = cfg.bid_median * std::exp(cfg.bid_log_sigma * rng.normal());
    if (rng.uniform() < cfg.targeted_fraction) {
      campaign_targeting[c].feature = tf;
      campaign_targeting[c].allowed = {static_cast<ValueIndex>(rng.below(schema.user_type(tf).values.size()))};
    }
  }
  std::vector<AdCandidate> out;
  for (std::size_t c = 0; c < pop.creatives_by_campaign.size(); ++c)
    for (auto j : pop.creatives_by_campaign[c]) out.push_back({pop.creatives[j], campaign_bid[c], campaign_targeting[c], true});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ad.creative_id < b.ad.creative_id; });
  return out;
}

// Brute-force cap audit over raw view timestamps, independent of
// FrequencyState.
class HfcAuditor {
 public:
  explicit HfcAuditor(const HfcRules& rules) : rules_(rules) {}

  // True when serving `ad` to `user` at `t` would break a cap.
  bool violates(const UserProfile& user, const AdIdentity& ad, Timestamp t) const {
    const auto& cc = rules_.campaign_for(ad);
    const auto& ac = rules_.ad_for(ad);
    return views(campaign_views_, user.user_id + '\t' + ad.campaign_id, t, cc.window_days) >= cc.max_views ||
           views(ad_views_, user.user_id + '\t' + ad.id_at(rules_.ad_level), t, ac.window_days) >= ac.max_views;
  }

  void record(const UserProfile& user, const AdIdentity& ad, Timestamp t) {
    campaign_views_[user.user_id + '\t' + ad.campaign_id].push_back(t);
    ad_views_[user.user_id + '\t' + ad.id_at(rules_.ad_level)].push_back(t);
  }

 private:
  using Log = std::unordered_map<std::string, std::vector<Timestamp>>;

  static std::uint32_t views(const Log& log, const std::string& key, Timestamp t, int window_days) {
    auto it = log.find(key);
    if (it == log.end()) return 0;
    const auto today = day_of(t);
    std::uint32_t n = 0;
    for (auto ts : it->second)
      if (today - day_of(ts) < window_days) ++n;
    return n;
  }

  const HfcRules& rules_;
  Log campaign_views_;
  Log ad_views_;
};

struct DayStats {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  double revenue = 0;
};

inline double cpm(double revenue, std::uint64_t impressions) {
  return impressions ? 1000.0 * revenue / static_cast<double>(impressions)
                     : std::numeric_limits<double>::quiet_NaN();
}

struct BucketOutcome {
  BucketConfig config;
  std::vector<DayStats> days;
  DayStats total;
  std::uint64_t opportunities = 0;
  std::uint64_t auctions = 0;
  std::uint64_t gsp_violations = 0;     // gsp > winner bid
  std::uint64_t ranking_violations = 0; // winner not the max bid*pCTR
  std::uint64_t hfc_violations = 0;
  std::vector<ScoredEvent> scored;

  double cpm() const { return sfc::cpm(total.revenue, total.impressions); }
};

struct SimulationResult {
  std::vector<BucketOutcome> buckets;
  FeatureSchema schema;
};

// Per-served-impression log sink: event, served pCTR, frequency. Calls for
// one bucket are sequential; different buckets may call concurrently.
using ServedSink = std::function<void(const std::string& bucket, const ImpressionEvent&, double, std::uint32_t)>;

inline std::size_t bucket_for(const std::string& user_id, std::span<const BucketConfig> buckets, std::uint64_t seed) {
  const double u = unit_double(hash_combine(substream_seed(seed, "buckets"), fnv1a(user_id)));
  double cum = 0;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    cum += buckets[i].traffic_share;
    if (u < cum) return i;
  }
  return buckets.size();  // unassigned traffic
}

namespace detail {

inline BucketOutcome serve_bucket(const SimulationConfig& cfg, const BucketConfig& bucket, const Population& pop,
                                  const std::vector<AdCandidate>& candidates, const std::vector<Opportunity>& opps,
                                  const Model* pretrained, const ServedSink* sink) {
  BucketOutcome out;
  out.config = bucket;
  out.opportunities = opps.size();
  const auto& gen = cfg.gen;
  const std::int64_t first_day = day_of(gen.start_time);
  out.days.resize(static_cast<std::size_t>(gen.days));

  std::optional<Trainer> trainer;
  if (pretrained) trainer.emplace(*pretrained, false);
  FrequencyState served;
  HfcAuditor auditor(cfg.rules);
  Rng click_rng(substream_seed(gen.seed, "clicks/" + bucket.name));

  std::vector<const AdCandidate*> eligibles;
  std::vector<double> pctrs;
  ImpressionEvent event;
  for (const auto& op : opps) {
    const auto& user = pop.users[op.user];
    eligibles.clear();
    pctrs.clear();
    for (const auto& c : candidates)
      if (eligible(user, c, served, cfg.rules, bucket.hfc_enabled, op.timestamp)) eligibles.push_back(&c);
    if (eligibles.empty()) continue;

    std::vector<double> user_vec;
    if (trainer) user_vec = trainer->model().user_vector(user);
    for (const auto* c : eligibles) {
      double p = gen.base_ctr;
      switch (bucket.model) {
        case Predictor::baseline:
        case Predictor::sfc: {
          const auto& m = trainer->model();
          p = m.score_with_user(user_vec, c->ad, m.model_frequency(served, user, c->ad, op.timestamp)).pctr;
          break;
        }
        case Predictor::oracle:
          p = ground_truth_ctr(user, c->ad,
                               served.count(user.user_id, AdLevel::campaign, c->ad.campaign_id, op.timestamp,
                                            gen.fatigue_window_days),
                               gen);
          break;
        case Predictor::constant: break;
      }
      pctrs.push_back(p);
    }
    const auto result = run_auction(eligibles, pctrs, cfg.floor_fraction);
    ++out.auctions;
    const auto& winner = *eligibles[*result.winner];
    if (result.gsp_price > winner.bid * (1 + 1e-12)) ++out.gsp_violations;
    for (std::size_t i = 0; i < eligibles.size(); ++i)
      if (eligibles[i]->bid * pctrs[i] > result.winner_score) ++out.ranking_violations;
    if (bucket.hfc_enabled && auditor.violates(user, winner.ad, op.timestamp)) ++out.hfc_violations;

    const auto true_views =
        served.count(user.user_id, AdLevel::campaign, winner.ad.campaign_id, op.timestamp, gen.fatigue_window_days);
    event.timestamp = op.timestamp;
    event.user = user;
    event.ad = winner.ad;
    event.section = op.section;
    event.click = click_rng.bernoulli(ground_truth_ctr(user, winner.ad, true_views, gen)) ? 1 : 0;

    const auto stats_f = served.frequency(user, winner.ad, op.timestamp, kStatsFrequency);
    const double served_pctr = pctrs[*result.winner];
    out.scored.push_back(make_scored(event, served_pctr, stats_f));
    if (sink && *sink) (*sink)(bucket.name, event, served_pctr, stats_f);

    auto& day = out.days.at(static_cast<std::size_t>(day_of(op.timestamp) - first_day));
    ++day.impressions;
    day.clicks += event.click;
    if (event.click) day.revenue += result.gsp_price;

    if (trainer) trainer->observe(event, !bucket.frozen);
    served.record_view(user, winner.ad, op.timestamp);
    auditor.record(user, winner.ad, op.timestamp);
  }
  for (const auto& d : out.days) {
    out.total.impressions += d.impressions;
    out.total.clicks += d.clicks;
    out.total.revenue += d.revenue;
  }
  return out;
}

}  // namespace detail

struct PretrainedModels {
  std::optional<Model> baseline;
  std::optional<Model> sfc;
};

// Models trained offline on generator traffic from the pretrain_days before
// the simulation starts.
inline PretrainedModels pretrain(const SimulationConfig& cfg) {
  PretrainedModels out;
  const bool need_base = std::any_of(cfg.buckets.begin(), cfg.buckets.end(),
                                     [](const auto& b) { return b.model == Predictor::baseline; });
  const bool need_sfc =
      std::any_of(cfg.buckets.begin(), cfg.buckets.end(), [](const auto& b) { return b.model == Predictor::sfc; });
  std::optional<Trainer> base, sfc;
  if (need_base) base.emplace(cfg.gen.schema, cfg.hp, false, false);
  if (need_sfc) sfc.emplace(cfg.gen.schema, cfg.hp, true, false);
  if (cfg.pretrain_days > 0 && (need_base || need_sfc)) {
    GeneratorConfig g = cfg.gen;
    g.days = cfg.pretrain_days;
    if (cfg.pretrain_events_per_day) g.events_per_day = cfg.pretrain_events_per_day;
    g.start_time = std::max<Timestamp>(0, cfg.gen.start_time - static_cast<Timestamp>(cfg.pretrain_days) * kSecondsPerDay);
    g.seed = substream_seed(cfg.gen.seed, "pretrain");
    // same users and catalog as serving: only arrivals and clicks are redrawn
    const Population pop = Population::build(cfg.gen);
    Rng ad_rng(substream_seed(g.seed, "ads"));
    Rng click_rng(substream_seed(g.seed, "clicks"));
    FrequencyState history;
    ImpressionEvent e;
    generate_opportunities(g, pop, "arrivals", [&](const Opportunity& op) {
      const auto campaign = ad_rng.pick(pop.campaign_popularity);
      const auto& pool = pop.creatives_by_campaign[campaign];
      const auto& ad = pop.creatives[pool[ad_rng.below(pool.size())]];
      const auto& user = pop.users[op.user];
      const auto v = history.count(user.user_id, AdLevel::campaign, ad.campaign_id, op.timestamp,
                                   cfg.gen.fatigue_window_days);
      e.timestamp = op.timestamp;
      e.user = user;
      e.ad = ad;
      e.section = op.section;
      e.click = click_rng.bernoulli(ground_truth_ctr(user, ad, v, cfg.gen)) ? 1 : 0;
      history.record_view(user, ad, op.timestamp);
      if (base) base->observe(e);
      if (sfc) sfc->observe(e);
    });
  }
  if (base) out.baseline = std::move(base->model());
  if (sfc) out.sfc = std::move(sfc->model());
  return out;
}

inline SimulationResult simulate(const SimulationConfig& cfg, const ServedSink& sink = {},
                                 const PretrainedModels* warm = nullptr) {
  cfg.validate();
  const Population pop = Population::build(cfg.gen);
  const auto candidates = build_candidates(cfg, pop);
  PretrainedModels local;
  if (!warm) {
    local = pretrain(cfg);
    warm = &local;
  }

  std::vector<std::vector<Opportunity>> per_bucket(cfg.buckets.size());
  std::vector<std::size_t> user_bucket(pop.users.size());
  for (std::size_t u = 0; u < pop.users.size(); ++u)
    user_bucket[u] = bucket_for(pop.users[u].user_id, cfg.buckets, cfg.gen.seed);
  generate_opportunities(cfg.gen, pop, "opportunities", [&](const Opportunity& op) {
    const auto b = user_bucket[op.user];
    if (b < per_bucket.size()) per_bucket[b].push_back(op);
  });

  SimulationResult result;
  result.schema = cfg.gen.schema;
  result.buckets.resize(cfg.buckets.size());
  auto run = [&](std::size_t i) {
    const auto& b = cfg.buckets[i];
    const Model* m = b.model == Predictor::baseline ? &*warm->baseline
                     : b.model == Predictor::sfc    ? &*warm->sfc
                                                    : nullptr;
    result.buckets[i] = detail::serve_bucket(cfg, b, pop, candidates, per_bucket[i], m, sink ? &sink : nullptr);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.buckets.size(); i = next++) run(i);
  };
  const unsigned n = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.buckets.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return result;
}

struct BucketReportRow {
  std::string bucket;
  std::optional<std::size_t> day;  // nullopt: aggregate
  DayStats stats;
  double cpm = 0;
  double lift = 0;  // CPM lift vs the baseline bucket, percent
};

// Daily and aggregate CPM lifts against `baseline`. A day on which the
// baseline earned nothing has an undefined (NaN) lift.
inline std::vector<BucketReportRow> bucket_report(const std::vector<BucketOutcome>& buckets,
                                                  const std::string& baseline) {
  auto base = std::find_if(buckets.begin(), buckets.end(), [&](const auto& b) { return b.config.name == baseline; });
  if (base == buckets.end()) throw MetricError("baseline bucket '" + baseline + "' not found");
  auto safe_lift = [](double c, double b) {
    if (std::isnan(c) || std::isnan(b) || !(b > 0)) return std::numeric_limits<double>::quiet_NaN();
    return lift_higher_better(c, b);
  };
  std::vector<BucketReportRow> rows;
  for (const auto& b : buckets) {
    for (std::size_t d = 0; d < b.days.size(); ++d) {
      BucketReportRow r{b.config.name, d, b.days[d], cpm(b.days[d].revenue, b.days[d].impressions), 0};
      const auto& bd = base->days.at(d);
      r.lift = safe_lift(r.cpm, cpm(bd.revenue, bd.impressions));
      rows.push_back(r);
    }
    BucketReportRow agg{b.config.name, std::nullopt, b.total, b.cpm(), 0};
    agg.lift = safe_lift(agg.cpm, base->cpm());
    rows.push_back(agg);
  }
  return rows;
}

inline void write_buckets_csv(std::ostream& out, const std::vector<BucketReportRow>& rows) {
  out << "bucket,day,impressions,clicks,revenue,cpm,lift\n";
  for (const auto& r : rows)
    out << r.bucket << ',' << (r.day ? std::to_string(*r.day) : std::string("all")) << ',' << r.stats.impressions
        << ',' << r.stats.clicks << ',' << format_double(r.stats.revenue) << ',' << format_double(r.cpm) << ','
        << format_double(r.lift) << '\n';
}

}  // namespace sfc
