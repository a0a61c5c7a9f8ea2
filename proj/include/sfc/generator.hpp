#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "events.hpp"
#include "freqtrack.hpp"

namespace sfc {

// A fatigue curve that replaces the global one for users holding a given
// value of a given feature type.
struct SegmentFatigue {
  std::size_t feature = 0;
  ValueIndex value = 0;
  std::vector<double> curve;
};

struct GeneratorConfig {
  FeatureSchema schema;
  std::size_t n_users = 2000;
  std::size_t n_advertisers = 8;
  std::size_t n_campaigns = 24;
  std::size_t n_creatives = 72;
  int days = 14;
  std::size_t events_per_day = 20000;
  double base_ctr = 0.05;
  double affinity_scale = 0.5;
  std::vector<double> fatigue_curve;  // m(v); m(0) = 1, non-increasing
  std::uint64_t seed = 1;

  // Share of each value per user feature type (empty: uniform).
  std::vector<std::vector<double>> value_weights;
  std::vector<SegmentFatigue> segment_fatigue;
  int fatigue_window_days = 7;
  double user_activity_skew = 0.3;  // Zipf exponent over users
  double ad_popularity_skew = 0.8;  // Zipf exponent over campaigns
  std::size_t n_ad_categories = 0;  // requires an ad_extra type in the schema
  Timestamp start_time = 1514764800;

  void validate() const {
    if (n_users == 0) throw ConfigError("n_users must be positive");
    if (n_advertisers == 0) throw ConfigError("n_advertisers must be positive");
    if (n_campaigns < n_advertisers) throw ConfigError("n_campaigns must be >= n_advertisers");
    if (n_creatives < n_campaigns) throw ConfigError("n_creatives must be >= n_campaigns");
    if (days <= 0) throw ConfigError("days must be positive");
    if (!(base_ctr > 0.0 && base_ctr < 1.0)) throw ConfigError("base_ctr must lie in (0,1)");
    if (affinity_scale < 0.0) throw ConfigError("affinity_scale must be non-negative");
    if (start_time < 0) throw ConfigError("start_time must be non-negative");
    if (fatigue_window_days <= 0 || fatigue_window_days > FrequencyState::kMaxWindowDays)
      throw ConfigError("fatigue_window_days out of range");
    check_curve(fatigue_curve, "fatigue_curve");
    for (const auto& s : segment_fatigue) {
      if (s.feature >= schema.num_user_features() ||
          s.value >= schema.user_type(s.feature).values.size())
        throw ConfigError("segment fatigue refers to an unknown feature value");
      check_curve(s.curve, "segment fatigue curve");
    }
    if (!value_weights.empty()) {
      if (value_weights.size() != schema.num_user_features())
        throw ConfigError("value_weights must cover every user feature type");
      for (std::size_t k = 0; k < value_weights.size(); ++k) {
        const auto& w = value_weights[k];
        if (w.empty()) continue;
        if (w.size() != schema.user_type(k).values.size())
          throw ConfigError("value_weights." + schema.user_type(k).name + " has the wrong length");
        double total = 0;
        for (double x : w) {
          if (!(x >= 0)) throw ConfigError("value weights must be non-negative");
          total += x;
        }
        if (total <= 0) throw ConfigError("value weights must not all be zero");
      }
    }
    if (n_ad_categories > 0 && schema.ad_extra_types().empty())
      throw ConfigError("n_ad_categories needs an ad_extra feature type in the schema");
  }

 private:
  static void check_curve(const std::vector<double>& m, const char* what) {
    if (m.empty()) throw ConfigError(std::string(what) + " is empty");
    if (m[0] != 1.0) throw ConfigError(std::string(what) + ": m(0) must be 1");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!(m[i] > 0.0 && m[i] <= 1.0)) throw ConfigError(std::string(what) + ": entries must lie in (0,1]");
      if (i && m[i] > m[i - 1]) throw ConfigError(std::string(what) + " must be non-increasing");
    }
  }
};

// m(v) = 0.5 + 0.5 * 0.6^v: a 20% drop after one view and close to half
// after seven, flattening out afterwards.
inline std::vector<double> default_fatigue_curve(std::size_t length = 51) {
  std::vector<double> m(length);
  for (std::size_t v = 0; v < length; ++v) m[v] = v == 0 ? 1.0 : 0.5 + 0.5 * std::pow(0.6, static_cast<double>(v));
  return m;
}

inline FeatureSchema default_schema() {
  return FeatureSchema(
      {
          {"age", {"20-30", "30-40", "40-50", "50-60", "60-70", "unknown"}},
          {"gender", {"female", "male", "unknown"}},
          {"geo", {"us", "eu", "apac", "latam"}},
      },
      {"stream", "mail", "syndication", "news"});
}

// Traffic shares for the default schema: age bands as reported for native
// traffic (the remainder goes to "unknown"), gender 31.4/46.8/21.8.
inline std::vector<std::vector<double>> default_value_weights(const FeatureSchema& schema) {
  std::vector<std::vector<double>> w(schema.num_user_features());
  for (std::size_t k = 0; k < schema.num_user_features(); ++k) {
    const auto& t = schema.user_type(k);
    if (t.name == "gender" && t.values == std::vector<std::string>{"female", "male", "unknown"})
      w[k] = {0.314, 0.468, 0.218};
    else if (t.name == "age" &&
             t.values == std::vector<std::string>{"20-30", "30-40", "40-50", "50-60", "60-70", "unknown"})
      w[k] = {0.195, 0.358, 0.190, 0.109, 0.064, 0.084};
  }
  return w;
}

inline GeneratorConfig default_generator_config() {
  GeneratorConfig c;
  c.schema = default_schema();
  c.fatigue_curve = default_fatigue_curve();
  c.value_weights = default_value_weights(c.schema);
  return c;
}

// Reads `schema.*` keys: `schema.user.<type> = v1,v2,...` (in declaration
// order), `schema.sections = ...`, `schema.ad_extra = t1,t2`.
inline FeatureSchema schema_from_config(const KeyValueConfig& kv) {
  std::vector<FeatureType> types;
  for (auto& [name, values] : kv.with_prefix("schema.user")) {
    FeatureType t{name, {}};
    for (auto v : split(values, ',')) t.values.emplace_back(trim(v));
    types.push_back(std::move(t));
  }
  if (types.empty()) return default_schema();
  std::vector<std::string> sections = kv.get_list("schema.sections");
  if (sections.empty()) sections = {"default"};
  try {
    return FeatureSchema(std::move(types), std::move(sections), kv.get_list("schema.ad_extra"));
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
}

inline GeneratorConfig generator_config_from(const KeyValueConfig& kv) {
  GeneratorConfig c = default_generator_config();
  c.schema = schema_from_config(kv);
  c.value_weights = default_value_weights(c.schema);
  for (const char* key : {"gen.n_users", "gen.n_advertisers", "gen.n_campaigns", "gen.n_creatives", "gen.events_per_day"})
    if (kv.get_int(key, 0) < 0) throw ConfigError(std::string(key) + " must be non-negative");
  c.n_users = static_cast<std::size_t>(kv.get_int("gen.n_users", static_cast<std::int64_t>(c.n_users)));
  c.n_advertisers = static_cast<std::size_t>(kv.get_int("gen.n_advertisers", static_cast<std::int64_t>(c.n_advertisers)));
  c.n_campaigns = static_cast<std::size_t>(kv.get_int("gen.n_campaigns", static_cast<std::int64_t>(c.n_campaigns)));
  c.n_creatives = static_cast<std::size_t>(kv.get_int("gen.n_creatives", static_cast<std::int64_t>(c.n_creatives)));
  c.days = static_cast<int>(kv.get_int("gen.days", c.days));
  c.events_per_day = static_cast<std::size_t>(kv.get_int("gen.events_per_day", static_cast<std::int64_t>(c.events_per_day)));
  c.base_ctr = kv.get_double("gen.base_ctr", c.base_ctr);
  c.affinity_scale = kv.get_double("gen.affinity_scale", c.affinity_scale);
  if (kv.has("gen.fatigue_curve")) c.fatigue_curve = kv.get_double_list("gen.fatigue_curve");
  if (kv.has("gen.fatigue_decay")) {
    // m(v) = decay^v over 0..50
    const double r = kv.get_double("gen.fatigue_decay", 1.0);
    c.fatigue_curve.assign(51, 1.0);
    for (std::size_t v = 1; v < c.fatigue_curve.size(); ++v) c.fatigue_curve[v] = c.fatigue_curve[v - 1] * r;
  }
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.fatigue_window_days = static_cast<int>(kv.get_int("gen.fatigue_window_days", c.fatigue_window_days));
  c.user_activity_skew = kv.get_double("gen.user_activity_skew", c.user_activity_skew);
  c.ad_popularity_skew = kv.get_double("gen.ad_popularity_skew", c.ad_popularity_skew);
  c.n_ad_categories = static_cast<std::size_t>(kv.get_int("gen.n_ad_categories", 0));
  c.start_time = kv.get_int("gen.start_time", c.start_time);
  for (auto& [type, values] : kv.with_prefix("gen.value_weights")) {
    auto k = c.schema.user_type_index(type);
    if (!k) throw ConfigError("gen.value_weights: unknown feature type '" + type + "'");
    c.value_weights[*k] = kv.get_double_list("gen.value_weights." + type);
  }
  for (auto& [spec, values] : kv.with_prefix("gen.segment_fatigue")) {
    const auto dot = spec.find('.');
    if (dot == std::string::npos) throw ConfigError("gen.segment_fatigue expects <type>.<value>");
    auto k = c.schema.user_type_index(spec.substr(0, dot));
    if (!k) throw ConfigError("gen.segment_fatigue: unknown feature type in '" + spec + "'");
    auto v = c.schema.value_index(*k, spec.substr(dot + 1));
    if (!v) throw ConfigError("gen.segment_fatigue: unknown value in '" + spec + "'");
    c.segment_fatigue.push_back({*k, *v, kv.get_double_list("gen.segment_fatigue." + spec)});
  }
  c.validate();
  return c;
}

inline constexpr double kCtrEpsilon = 1e-6;

// Mean-one lognormal multiplier keyed by the full user-feature tuple and the
// campaign; 1 when affinity_scale is 0.
inline double affinity(const UserProfile& user, const AdIdentity& ad, const GeneratorConfig& config) {
  if (config.affinity_scale == 0.0) return 1.0;
  std::uint64_t h = substream_seed(config.seed, "affinity");
  for (auto v : user.feature_values) h = hash_combine(h, v);
  h = hash_combine(h, fnv1a(ad.campaign_id));
  const double u1 = 1.0 - unit_double(mix64(h));
  const double u2 = unit_double(mix64(h + 1));
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  const double s = config.affinity_scale;
  return std::exp(s * z - 0.5 * s * s);
}

inline const std::vector<double>& fatigue_curve_for(const UserProfile& user, const GeneratorConfig& config) {
  for (const auto& seg : config.segment_fatigue)
    if (user.feature_values.at(seg.feature) == seg.value) return seg.curve;
  return config.fatigue_curve;
}

inline double ground_truth_ctr(const UserProfile& user, const AdIdentity& ad, std::uint64_t prior_views,
                               const GeneratorConfig& config) {
  const auto& m = fatigue_curve_for(user, config);
  const std::size_t idx = static_cast<std::size_t>(std::min<std::uint64_t>(prior_views, m.size() - 1));
  const double p = config.base_ctr * affinity(user, ad, config) * m[idx];
  return std::clamp(p, kCtrEpsilon, 1.0 - kCtrEpsilon);
}

namespace detail {

inline std::vector<double> zipf_cumulative(std::size_t n, double exponent) {
  std::vector<double> c(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    c[i] = total;
  }
  return c;
}

inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = (total += w[i]);
  return c;
}

}  // namespace detail

// Users and the ad catalog. Campaign i belongs to advertiser i mod n_advertisers,
// creative j to campaign j mod n_campaigns.
struct Population {
  std::vector<UserProfile> users;
  std::vector<double> user_activity;  // cumulative
  std::vector<AdIdentity> creatives;
  std::vector<std::vector<std::size_t>> creatives_by_campaign;
  std::vector<double> campaign_popularity;  // cumulative

  static Population build(const GeneratorConfig& config) {
    config.validate();
    Population pop;
    Rng rng(substream_seed(config.seed, "population"));
    const auto& schema = config.schema;
    std::vector<std::vector<double>> value_cdf(schema.num_user_features());
    for (std::size_t k = 0; k < schema.num_user_features(); ++k) {
      const bool weighted = k < config.value_weights.size() && !config.value_weights[k].empty();
      value_cdf[k] = weighted ? detail::cumulative(config.value_weights[k])
                              : detail::cumulative(std::vector<double>(schema.user_type(k).values.size(), 1.0));
    }
    pop.users.reserve(config.n_users);
    for (std::size_t i = 0; i < config.n_users; ++i) {
      UserProfile u;
      u.user_id = "u" + std::to_string(i);
      for (std::size_t k = 0; k < schema.num_user_features(); ++k)
        u.feature_values.push_back(static_cast<ValueIndex>(rng.pick(value_cdf[k])));
      pop.users.push_back(std::move(u));
    }
    pop.user_activity = detail::zipf_cumulative(config.n_users, config.user_activity_skew);

    pop.creatives_by_campaign.resize(config.n_campaigns);
    for (std::size_t j = 0; j < config.n_creatives; ++j) {
      const std::size_t c = j % config.n_campaigns;
      AdIdentity ad;
      ad.creative_id = "cr" + std::to_string(j);
      ad.campaign_id = "ca" + std::to_string(c);
      ad.advertiser_id = "ad" + std::to_string(c % config.n_advertisers);
      ad.extra_features.resize(schema.ad_extra_types().size());
      if (config.n_ad_categories > 0 && !ad.extra_features.empty()) {
        ad.extra_features[0].push_back("cat" + std::to_string(c % config.n_ad_categories));
        if (c % 3 == 0 && config.n_ad_categories > 1)
          ad.extra_features[0].push_back("cat" + std::to_string((c + 1) % config.n_ad_categories));
      }
      pop.creatives_by_campaign[c].push_back(pop.creatives.size());
      pop.creatives.push_back(std::move(ad));
    }
    pop.campaign_popularity = detail::zipf_cumulative(config.n_campaigns, config.ad_popularity_skew);
    return pop;
  }
};

// One serving slot: a user arriving at a time in a section.
struct Opportunity {
  std::size_t user = 0;  // index into Population::users
  Timestamp timestamp = 0;
  std::uint32_t section = 0;
};

// days * events_per_day arrivals in nondecreasing time order.
inline void generate_opportunities(const GeneratorConfig& config, const Population& pop, std::string_view stream,
                                   const std::function<void(const Opportunity&)>& sink) {
  Rng rng(substream_seed(config.seed, stream));
  const auto n_sections = config.schema.sections().size();
  std::vector<Timestamp> offsets(config.events_per_day);
  for (int d = 0; d < config.days; ++d) {
    for (auto& o : offsets) o = static_cast<Timestamp>(rng.below(kSecondsPerDay));
    std::sort(offsets.begin(), offsets.end());
    for (auto off : offsets) {
      Opportunity op;
      op.timestamp = config.start_time + static_cast<Timestamp>(d) * kSecondsPerDay + off;
      op.user = rng.pick(pop.user_activity);
      op.section = static_cast<std::uint32_t>(rng.below(n_sections));
      sink(op);
    }
  }
}

// Served impressions with clicks drawn against the ground truth at each
// user's true prior campaign views within the fatigue window.
inline void generate_stream(const GeneratorConfig& config, const std::function<void(const ImpressionEvent&)>& sink) {
  const Population pop = Population::build(config);
  Rng ad_rng(substream_seed(config.seed, "ads"));
  Rng click_rng(substream_seed(config.seed, "clicks"));
  FrequencyState history;
  ImpressionEvent e;
  generate_opportunities(config, pop, "arrivals", [&](const Opportunity& op) {
    const auto campaign = ad_rng.pick(pop.campaign_popularity);
    const auto& pool = pop.creatives_by_campaign[campaign];
    const auto& ad = pop.creatives[pool[ad_rng.below(pool.size())]];
    const auto& user = pop.users[op.user];
    const auto v = history.count(user.user_id, AdLevel::campaign, ad.campaign_id, op.timestamp,
                                 config.fatigue_window_days);
    e.timestamp = op.timestamp;
    e.user = user;
    e.ad = ad;
    e.section = op.section;
    e.click = click_rng.bernoulli(ground_truth_ctr(user, ad, v, config)) ? 1 : 0;
    history.record_view(user, ad, op.timestamp);
    sink(e);
  });
}

inline std::vector<ImpressionEvent> generate_stream(const GeneratorConfig& config) {
  std::vector<ImpressionEvent> out;
  out.reserve(static_cast<std::size_t>(config.days) * config.events_per_day);
  generate_stream(config, [&](const ImpressionEvent& e) { out.push_back(e); });
  return out;
}

}  // namespace sfc
