#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "events.hpp"
#include "freqtrack.hpp"

namespace sfc {

// The fixed 26-bin partition [0:1), [1:2), ..., [25:inf).
struct BinningVector {
  static constexpr std::size_t kBins = 26;
  std::array<std::uint64_t, kBins> lower_bounds;

  BinningVector() { std::iota(lower_bounds.begin(), lower_bounds.end(), std::uint64_t{0}); }

  std::size_t size() const { return kBins; }

  std::size_t index(std::uint64_t f) const {
    auto it = std::upper_bound(lower_bounds.begin(), lower_bounds.end(), f);
    return static_cast<std::size_t>(it - lower_bounds.begin()) - 1;
  }
};

inline std::size_t bin_index(std::uint64_t f, const BinningVector& binning) { return binning.index(f); }

enum class WeightCategory : std::uint8_t { global, campaign, advertiser };

inline const char* to_string(WeightCategory c) {
  switch (c) {
    case WeightCategory::global: return "global";
    case WeightCategory::campaign: return "campaign";
    case WeightCategory::advertiser: return "advertiser";
  }
  return "?";
}

inline WeightCategory parse_weight_category(std::string_view s) {
  if (s == "global") return WeightCategory::global;
  if (s == "campaign") return WeightCategory::campaign;
  if (s == "advertiser") return WeightCategory::advertiser;
  throw ConfigError("unknown weight category '" + std::string(s) + "'");
}

// eta(acc) = eta0 / (alpha + acc^beta)
struct StepParams {
  double eta0 = 0.05;
  double alpha = 1.0;
  double beta = 0.5;

  bool operator==(const StepParams&) const = default;
};

struct HyperParams {
  std::size_t o = 2;  // entries per user feature pair
  std::size_t s = 2;  // solo entries per user feature
  StepParams step;
  double lambda = 1e-5;
  double init_scale = 0.01;
  double init_bias = 0.0;
  std::uint64_t seed = 1;  // initializer substream
  BinningVector binning;
  FrequencyConfig sfc_frequency;
  WeightCategory weight_category = WeightCategory::global;
  std::optional<StepParams> sfc_step;  // defaults to `step`
  std::size_t report_interval = 50000;

  std::size_t feature_dim(std::size_t K) const { return (K - 1) * o + s; }
  std::size_t model_dim(std::size_t K) const { return K * (K - 1) / 2 * o + K * s; }
  const StepParams& sfc_step_params() const { return sfc_step ? *sfc_step : step; }

  void validate() const {
    if (o + s == 0) throw ConfigError("o and s cannot both be zero");
    for (const auto* p : {&step, &sfc_step_params()}) {
      if (!(p->eta0 > 0)) throw ConfigError("eta0 must be positive");
      if (!(p->alpha > 0)) throw ConfigError("alpha must be positive");
      if (!(p->beta > 0)) throw ConfigError("beta must be positive");
    }
    if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
    if (!(init_scale >= 0)) throw ConfigError("init_scale must be non-negative");
    if (!std::isfinite(init_bias)) throw ConfigError("init_bias must be finite");
    if (report_interval == 0) throw ConfigError("report_interval must be positive");
    sfc_frequency.validate();
  }

  // `train.*` keys, in a fixed order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const {
    std::vector<std::pair<std::string, std::string>> kv = {
        {"train.o", std::to_string(o)},
        {"train.s", std::to_string(s)},
        {"train.eta0", format_double(step.eta0)},
        {"train.alpha", format_double(step.alpha)},
        {"train.beta", format_double(step.beta)},
        {"train.lambda", format_double(lambda)},
        {"train.init_scale", format_double(init_scale)},
        {"train.init_bias", format_double(init_bias)},
        {"train.init_seed", std::to_string(seed)},
        {"train.sfc_ad_feature", to_string(sfc_frequency.ad_feature)},
        {"train.sfc_window", window_name(sfc_frequency.window_days)},
        {"train.sfc_weight_category", to_string(weight_category)},
        {"train.report_interval", std::to_string(report_interval)},
    };
    if (sfc_step) {
      kv.emplace_back("train.sfc_eta0", format_double(sfc_step->eta0));
      kv.emplace_back("train.sfc_alpha", format_double(sfc_step->alpha));
      kv.emplace_back("train.sfc_beta", format_double(sfc_step->beta));
    }
    return kv;
  }

  static HyperParams from_config(const KeyValueConfig& kv) {
    HyperParams hp;
    const auto nonneg = [&](const char* key, std::int64_t fallback) {
      auto v = kv.get_int(key, fallback);
      if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
      return static_cast<std::size_t>(v);
    };
    hp.o = nonneg("train.o", static_cast<std::int64_t>(hp.o));
    hp.s = nonneg("train.s", static_cast<std::int64_t>(hp.s));
    hp.step.eta0 = kv.get_double("train.eta0", hp.step.eta0);
    hp.step.alpha = kv.get_double("train.alpha", hp.step.alpha);
    hp.step.beta = kv.get_double("train.beta", hp.step.beta);
    hp.lambda = kv.get_double("train.lambda", hp.lambda);
    hp.init_scale = kv.get_double("train.init_scale", hp.init_scale);
    hp.init_bias = kv.get_double("train.init_bias", hp.init_bias);
    hp.seed = static_cast<std::uint64_t>(
        kv.get_int("train.init_seed", kv.get_int("seed", static_cast<std::int64_t>(hp.seed))));
    if (auto v = kv.get("train.sfc_ad_feature")) hp.sfc_frequency.ad_feature = parse_ad_level(*v);
    if (auto v = kv.get("train.sfc_window")) hp.sfc_frequency.window_days = parse_window_days(*v);
    if (auto v = kv.get("train.sfc_weight_category")) hp.weight_category = parse_weight_category(*v);
    if (kv.has("train.sfc_eta0") || kv.has("train.sfc_alpha") || kv.has("train.sfc_beta")) {
      StepParams p = hp.step;
      p.eta0 = kv.get_double("train.sfc_eta0", p.eta0);
      p.alpha = kv.get_double("train.sfc_alpha", p.alpha);
      p.beta = kv.get_double("train.sfc_beta", p.beta);
      hp.sfc_step = p;
    }
    hp.report_interval = nonneg("train.report_interval", static_cast<std::int64_t>(hp.report_interval));
    hp.validate();
    return hp;
  }
};

// Rows of learned vectors keyed by feature value, each with a parallel row of
// AdaGrad accumulators. A row that was never materialized reads as its
// deterministic initial value, so const scoring never mutates the table.
class VectorTable {
 public:
  VectorTable() = default;
  VectorTable(std::string name, std::size_t dim, double init_scale, std::uint64_t seed)
      : name_(std::move(name)), dim_(dim), init_scale_(init_scale), salt_(hash_combine(seed, fnv1a(name_))) {}

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return keys_.size(); }

  std::optional<std::size_t> find(std::string_view key) const {
    auto it = index_.find(std::string(key));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Current values for `key`: the stored row, or the initializer written to
  // `scratch` (dim() entries).
  const double* read(std::string_view key, double* scratch) const {
    if (auto r = find(key)) return &values_[*r * dim_];
    initial_values(key, scratch);
    return scratch;
  }

  std::size_t materialize(const std::string& key) {
    auto [it, fresh] = index_.emplace(key, keys_.size());
    if (fresh) {
      keys_.push_back(key);
      values_.resize(values_.size() + dim_);
      acc_.resize(acc_.size() + dim_, 0.0);
      initial_values(key, &values_[it->second * dim_]);
    }
    return it->second;
  }

  std::span<double> values(std::size_t row) { return {&values_[row * dim_], dim_}; }
  std::span<const double> values(std::size_t row) const { return {&values_[row * dim_], dim_}; }
  std::span<double> accumulators(std::size_t row) { return {&acc_[row * dim_], dim_}; }
  std::span<const double> accumulators(std::size_t row) const { return {&acc_[row * dim_], dim_}; }
  const std::string& key(std::size_t row) const { return keys_[row]; }

  // Uniform in [-init_scale, init_scale], keyed by (seed, table, key, coordinate).
  void initial_values(std::string_view key, double* out) const {
    if (init_scale_ == 0.0) {
      std::fill(out, out + dim_, 0.0);
      return;
    }
    const std::uint64_t h = hash_combine(salt_, fnv1a(key));
    for (std::size_t i = 0; i < dim_; ++i)
      out[i] = (2.0 * unit_double(mix64(h + i)) - 1.0) * init_scale_;
  }

  std::vector<std::size_t> sorted_rows() const {
    std::vector<std::size_t> rows(keys_.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::sort(rows.begin(), rows.end(), [&](auto a, auto b) { return keys_[a] < keys_[b]; });
    return rows;
  }

  bool operator==(const VectorTable& o) const {
    if (name_ != o.name_ || dim_ != o.dim_ || keys_.size() != o.keys_.size()) return false;
    for (std::size_t r = 0; r < keys_.size(); ++r) {
      auto other = o.find(keys_[r]);
      if (!other) return false;
      auto a = values(r), b = o.values(*other);
      auto x = accumulators(r), y = o.accumulators(*other);
      if (!std::equal(a.begin(), a.end(), b.begin()) || !std::equal(x.begin(), x.end(), y.begin())) return false;
    }
    return true;
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  double init_scale_ = 0.0;
  std::uint64_t salt_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> keys_;
  std::vector<double> values_;
  std::vector<double> acc_;
};

inline double raw_score(std::span<const double> user_vec, std::span<const double> ad_vec, double bias) {
  if (user_vec.size() != ad_vec.size())
    throw Error("dimension mismatch: user vector " + std::to_string(user_vec.size()) + " vs ad vector " +
                std::to_string(ad_vec.size()));
  double s = bias;
  for (std::size_t i = 0; i < user_vec.size(); ++i) s += user_vec[i] * ad_vec[i];
  return s;
}

struct ScoreBreakdown {
  double raw = 0;       // b + u.a
  double adjusted = 0;  // raw + w[bin] (raw when SFC is off)
  std::size_t bin = 0;
  double pctr = 0.5;
};

// Latent-factor click model with optional frequency weight vectors.
//
// Each user feature value owns a d = (K-1)*o + s vector: one o-entry segment
// per other feature type (schema order, skipping itself) followed by s solo
// entries. The D = C(K,2)*o + K*s user vector holds, for every pair k<j, the
// elementwise product of k's segment for j and j's segment for k, then every
// feature's solo entries. Ad vectors are the sum of the creative, campaign
// and advertiser vectors plus the mean vector of each multi-value extra.
class Model {
 public:
  Model() = default;
  Model(FeatureSchema schema, HyperParams hp, bool sfc_enabled)
      : schema_(std::move(schema)), hp_(hp), sfc_enabled_(sfc_enabled) {
    hp_.validate();
    K_ = schema_.num_user_features();
    d_ = hp_.feature_dim(K_);
    D_ = hp_.model_dim(K_);
    for (std::size_t k = 0; k < K_; ++k)
      user_.emplace_back("user." + schema_.user_type(k).name, d_, hp_.init_scale, hp_.seed);
    for (std::size_t l = 0; l < kAdLevels; ++l)
      ad_[l] = VectorTable(to_string(static_cast<AdLevel>(l)), D_, hp_.init_scale, hp_.seed);
    for (const auto& x : schema_.ad_extra_types()) extra_.emplace_back("extra." + x, D_, hp_.init_scale, hp_.seed);
    sfc_ = VectorTable("sfc", BinningVector::kBins, 0.0, hp_.seed);
    bias_ = hp_.init_bias;
  }

  const FeatureSchema& schema() const { return schema_; }
  const HyperParams& hyper() const { return hp_; }
  bool sfc_enabled() const { return sfc_enabled_; }
  std::size_t num_user_features() const { return K_; }
  std::size_t feature_dim() const { return d_; }
  std::size_t dim() const { return D_; }

  double bias() const { return bias_; }
  double& bias() { return bias_; }
  double bias_accumulator() const { return bias_acc_; }
  double& bias_accumulator() { return bias_acc_; }

  VectorTable& user_table(std::size_t k) { return user_.at(k); }
  const VectorTable& user_table(std::size_t k) const { return user_.at(k); }
  VectorTable& ad_table(AdLevel l) { return ad_[static_cast<std::size_t>(l)]; }
  const VectorTable& ad_table(AdLevel l) const { return ad_[static_cast<std::size_t>(l)]; }
  VectorTable& extra_table(std::size_t x) { return extra_.at(x); }
  const VectorTable& extra_table(std::size_t x) const { return extra_.at(x); }
  VectorTable& sfc_table() { return sfc_; }
  const VectorTable& sfc_table() const { return sfc_; }

  // Offset of feature k's segment devoted to feature j (j != k).
  std::size_t segment_offset(std::size_t k, std::size_t j) const { return (j < k ? j : j - 1) * hp_.o; }
  std::size_t solo_offset() const { return (K_ - 1) * hp_.o; }
  // Offset in the D-vector of the pair block (k<j) and of k's solo block.
  std::size_t pair_block(std::size_t k, std::size_t j) const {
    // pairs enumerated (0,1),(0,2),...,(0,K-1),(1,2),...
    const std::size_t before = k * (2 * K_ - k - 1) / 2;
    return (before + (j - k - 1)) * hp_.o;
  }
  std::size_t solo_block(std::size_t k) const { return K_ * (K_ - 1) / 2 * hp_.o + k * hp_.s; }

  const std::string& user_key(const UserProfile& u, std::size_t k) const {
    return schema_.user_type(k).values.at(u.feature_values.at(k));
  }

  // Per-feature d-vectors of a user, read into `storage` (K*d entries).
  void user_feature_vectors(const UserProfile& user, std::vector<double>& storage,
                            std::vector<const double*>& rows) const {
    if (user.feature_values.size() != K_)
      throw SchemaError("user '" + user.user_id + "' has " + std::to_string(user.feature_values.size()) +
                        " feature values, schema needs " + std::to_string(K_));
    storage.resize(K_ * d_);
    rows.resize(K_);
    for (std::size_t k = 0; k < K_; ++k) {
      if (user.feature_values[k] >= schema_.user_type(k).values.size())
        throw SchemaError("user '" + user.user_id + "': value out of range for '" + schema_.user_type(k).name + "'");
      rows[k] = user_[k].read(user_key(user, k), &storage[k * d_]);
    }
  }

  std::vector<double> user_vector(const UserProfile& user) const {
    std::vector<double> storage;
    std::vector<const double*> rows;
    user_feature_vectors(user, storage, rows);
    return combine_user(rows);
  }

  std::vector<double> combine_user(const std::vector<const double*>& v) const {
    std::vector<double> out(D_, 0.0);
    const std::size_t o = hp_.o;
    for (std::size_t k = 0; k < K_; ++k)
      for (std::size_t j = k + 1; j < K_; ++j) {
        const double* a = v[k] + segment_offset(k, j);
        const double* b = v[j] + segment_offset(j, k);
        double* dst = &out[pair_block(k, j)];
        for (std::size_t t = 0; t < o; ++t) dst[t] = a[t] * b[t];
      }
    for (std::size_t k = 0; k < K_; ++k) std::copy_n(v[k] + solo_offset(), hp_.s, &out[solo_block(k)]);
    return out;
  }

  std::vector<double> ad_vector(const AdIdentity& ad) const {
    std::vector<double> out(D_, 0.0), scratch(D_);
    for (std::size_t l = 0; l < kAdLevels; ++l) {
      const double* row = ad_[l].read(ad.id_at(static_cast<AdLevel>(l)), scratch.data());
      for (std::size_t i = 0; i < D_; ++i) out[i] += row[i];
    }
    for (std::size_t x = 0; x < extra_.size() && x < ad.extra_features.size(); ++x) {
      const auto& values = ad.extra_features[x];
      if (values.empty()) continue;
      const double w = 1.0 / static_cast<double>(values.size());
      for (const auto& v : values) {
        const double* row = extra_[x].read(v, scratch.data());
        for (std::size_t i = 0; i < D_; ++i) out[i] += w * row[i];
      }
    }
    return out;
  }

  // "" for the global vector, else the campaign or advertiser id.
  std::string weight_key(const AdIdentity& ad) const {
    switch (hp_.weight_category) {
      case WeightCategory::global: return {};
      case WeightCategory::campaign: return ad.campaign_id;
      case WeightCategory::advertiser: return ad.advertiser_id;
    }
    return {};
  }

  double sfc_weight(std::string_view key, std::size_t bin) const {
    auto row = sfc_.find(key);
    return row ? sfc_.values(*row)[bin] : 0.0;
  }

  double sfc_score(double s, std::uint64_t f, std::string_view key) const {
    return s + sfc_weight(key, hp_.binning.index(f));
  }

  std::uint64_t model_frequency(const FrequencyState& state, const UserProfile& user, const AdIdentity& ad,
                                Timestamp t) const {
    return state.frequency(user, ad, t, hp_.sfc_frequency);
  }

  ScoreBreakdown score_with_user(std::span<const double> user_vec, const AdIdentity& ad, std::uint64_t f) const {
    ScoreBreakdown out;
    const auto a = ad_vector(ad);
    out.raw = raw_score(user_vec, a, bias_);
    out.adjusted = out.raw;
    if (sfc_enabled_) {
      out.bin = hp_.binning.index(f);
      out.adjusted = sfc_score(out.raw, f, weight_key(ad));
    }
    out.pctr = sigmoid(out.adjusted);
    return out;
  }

  ScoreBreakdown score(const UserProfile& user, const AdIdentity& ad, std::uint64_t f) const {
    const auto u = user_vector(user);
    return score_with_user(u, ad, f);
  }

  // Text snapshot; values in shortest round-trip form so a reload scores
  // bit-identically.
  void save(std::ostream& out) const {
    out << "#sfcmodel\t1\n";
    out << "schema_hash\t" << schema_.hash() << '\n';
    out << "schema\t" << schema_.header_line().substr(8) << '\n';
    out << "sfc\t" << (sfc_enabled_ ? 1 : 0) << '\n';
    for (const auto& [k, v] : hp_.to_pairs()) out << "hp\t" << k << '\t' << v << '\n';
    out << "bias\t" << format_double(bias_) << '\t' << format_double(bias_acc_) << '\n';
    auto dump = [&](const VectorTable& t) {
      out << "table\t" << t.name() << '\t' << t.dim() << '\t' << t.rows() << '\n';
      for (auto r : t.sorted_rows()) {
        out << t.key(r);
        for (double v : t.values(r)) out << '\t' << format_double(v);
        for (double a : t.accumulators(r)) out << '\t' << format_double(a);
        out << '\n';
      }
    };
    for (const auto& t : user_) dump(t);
    for (const auto& t : ad_) dump(t);
    for (const auto& t : extra_) dump(t);
    dump(sfc_);
  }

  static Model load(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next = [&](const char* what) -> std::vector<std::string_view> {
      if (!std::getline(in, line)) throw ParseError(line_no + 1, what, "unexpected end of model snapshot");
      ++line_no;
      return split(line, '\t');
    };
    auto f = next("header");
    if (f.size() != 2 || f[0] != "#sfcmodel" || f[1] != "1") throw ParseError(line_no, "header", "not a model snapshot");
    f = next("schema_hash");
    std::uint64_t hash = 0;
    if (f.size() != 2 || f[0] != "schema_hash" || !try_parse_int(f[1], hash))
      throw ParseError(line_no, "schema_hash", "malformed");
    if (!std::getline(in, line) || line.rfind("schema\t", 0) != 0)
      throw ParseError(line_no + 1, "schema", "missing schema line");
    ++line_no;
    FeatureSchema schema = FeatureSchema::parse_header("#schema\t" + line.substr(7));
    if (schema.hash() != hash) throw ParseError(line_no, "schema_hash", "schema hash does not match schema");
    f = next("sfc");
    if (f.size() != 2 || f[0] != "sfc" || (f[1] != "0" && f[1] != "1")) throw ParseError(line_no, "sfc", "malformed");
    const bool sfc = f[1] == "1";
    KeyValueConfig hp_kv;
    while (true) {
      f = next("hp");
      if (f[0] != "hp") break;
      if (f.size() != 3) throw ParseError(line_no, "hp", "malformed");
      hp_kv.set(std::string(f[1]), std::string(f[2]));
    }
    HyperParams hp = HyperParams::from_config(hp_kv);
    Model m(std::move(schema), hp, sfc);
    if (f.size() != 3 || f[0] != "bias" || !try_parse_double(f[1], m.bias_) || !try_parse_double(f[2], m.bias_acc_))
      throw ParseError(line_no, "bias", "malformed");
    auto read_table = [&](VectorTable& t) {
      auto h = next("table");
      std::size_t dim = 0, rows = 0;
      if (h.size() != 4 || h[0] != "table" || h[1] != t.name() || !try_parse_int(h[2], dim) ||
          !try_parse_int(h[3], rows) || dim != t.dim())
        throw ParseError(line_no, "table", "expected table '" + t.name() + "'");
      for (std::size_t r = 0; r < rows; ++r) {
        auto row = next("row");
        if (row.size() != 1 + 2 * dim) throw ParseError(line_no, t.name(), "wrong row width");
        const auto idx = t.materialize(std::string(row[0]));
        auto vals = t.values(idx);
        auto accs = t.accumulators(idx);
        for (std::size_t i = 0; i < dim; ++i)
          if (!try_parse_double(row[1 + i], vals[i]) || !try_parse_double(row[1 + dim + i], accs[i]))
            throw ParseError(line_no, t.name(), "not a number");
      }
    };
    for (auto& t : m.user_) read_table(t);
    for (auto& t : m.ad_) read_table(t);
    for (auto& t : m.extra_) read_table(t);
    read_table(m.sfc_);
    return m;
  }

  bool operator==(const Model& o) const {
    return schema_ == o.schema_ && sfc_enabled_ == o.sfc_enabled_ && hp_.to_pairs() == o.hp_.to_pairs() &&
           bias_ == o.bias_ && bias_acc_ == o.bias_acc_ && user_ == o.user_ && ad_ == o.ad_ && extra_ == o.extra_ &&
           sfc_ == o.sfc_;
  }

 private:
  FeatureSchema schema_;
  HyperParams hp_;
  bool sfc_enabled_ = false;
  std::size_t K_ = 0, d_ = 0, D_ = 0;
  double bias_ = 0.0;
  double bias_acc_ = 0.0;
  std::vector<VectorTable> user_;
  std::array<VectorTable, kAdLevels> ad_;
  std::vector<VectorTable> extra_;
  VectorTable sfc_;
};

}  // namespace sfc
