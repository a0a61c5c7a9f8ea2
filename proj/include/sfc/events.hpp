#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace sfc {

using ValueIndex = std::uint16_t;

struct FeatureType {
  std::string name;
  std::vector<std::string> values;
};

// Categorical user features, serving sections and optional multi-value ad
// feature types. The ad hierarchy (advertiser > campaign > creative) is
// implicit and always present.
class FeatureSchema {
 public:
  static constexpr std::size_t kMaxUserFeatures = 8;

  FeatureSchema() = default;
  FeatureSchema(std::vector<FeatureType> user_types, std::vector<std::string> sections,
                std::vector<std::string> ad_extra_types = {})
      : user_types_(std::move(user_types)),
        sections_(std::move(sections)),
        ad_extra_types_(std::move(ad_extra_types)) {
    validate();
    build_index();
  }

  std::size_t num_user_features() const { return user_types_.size(); }
  const std::vector<FeatureType>& user_types() const { return user_types_; }
  const FeatureType& user_type(std::size_t k) const { return user_types_.at(k); }
  const std::vector<std::string>& sections() const { return sections_; }
  const std::vector<std::string>& ad_extra_types() const { return ad_extra_types_; }

  std::optional<std::size_t> user_type_index(std::string_view name) const {
    for (std::size_t k = 0; k < user_types_.size(); ++k)
      if (user_types_[k].name == name) return k;
    return std::nullopt;
  }

  std::optional<ValueIndex> value_index(std::size_t k, std::string_view value) const {
    const auto& m = value_lookup_.at(k);
    auto it = m.find(std::string(value));
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> section_index(std::string_view id) const {
    auto it = section_lookup_.find(std::string(id));
    if (it == section_lookup_.end()) return std::nullopt;
    return it->second;
  }

  // `#schema` header line of the event log (no trailing newline).
  std::string header_line() const {
    std::string out = "#schema";
    for (const auto& t : user_types_) {
      out += "\tuser:" + t.name + "=";
      for (std::size_t i = 0; i < t.values.size(); ++i) out += (i ? "," : "") + t.values[i];
    }
    out += "\tsection=";
    for (std::size_t i = 0; i < sections_.size(); ++i) out += (i ? "," : "") + sections_[i];
    for (const auto& e : ad_extra_types_) out += "\tad_extra:" + e;
    return out;
  }

  std::uint64_t hash() const { return fnv1a(header_line()); }

  static FeatureSchema parse_header(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fields = split(line, '\t');
    if (fields.empty() || fields[0] != "#schema") throw ParseError(1, "header", "expected '#schema' header line");
    std::vector<FeatureType> types;
    std::vector<std::string> sections;
    std::vector<std::string> extras;
    bool have_sections = false;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto f = fields[i];
      if (f.rfind("user:", 0) == 0) {
        auto eq = f.find('=');
        if (eq == std::string_view::npos) throw ParseError(1, "header", "user feature without values");
        FeatureType t;
        t.name = std::string(f.substr(5, eq - 5));
        for (auto v : split(f.substr(eq + 1), ',')) t.values.emplace_back(v);
        types.push_back(std::move(t));
      } else if (f.rfind("section=", 0) == 0) {
        have_sections = true;
        for (auto v : split(f.substr(8), ',')) sections.emplace_back(v);
      } else if (f.rfind("ad_extra:", 0) == 0) {
        extras.emplace_back(f.substr(9));
      } else {
        throw ParseError(1, "header", "unknown header entry '" + std::string(f) + "'");
      }
    }
    if (!have_sections) throw ParseError(1, "header", "missing section list");
    try {
      return FeatureSchema(std::move(types), std::move(sections), std::move(extras));
    } catch (const SchemaError& e) {
      throw ParseError(1, "header", e.what());
    }
  }

  // Names the first difference, empty when the schemas agree.
  std::string mismatch(const FeatureSchema& other) const {
    if (user_types_.size() != other.user_types_.size()) return "user feature count";
    for (std::size_t k = 0; k < user_types_.size(); ++k) {
      if (user_types_[k].name != other.user_types_[k].name) return "user feature '" + user_types_[k].name + "'";
      if (user_types_[k].values != other.user_types_[k].values)
        return "values of user feature '" + user_types_[k].name + "'";
    }
    if (sections_ != other.sections_) return "section";
    if (ad_extra_types_ != other.ad_extra_types_) return "ad_extra";
    return {};
  }

  bool operator==(const FeatureSchema& o) const { return mismatch(o).empty(); }

 private:
  static void check_token(const std::string& s, const char* what) {
    if (s.empty()) throw SchemaError(std::string("empty ") + what);
    for (char c : s)
      if (c == '\t' || c == '\n' || c == '\r' || c == ',' || c == '=' || c == '|' || c == ' ')
        throw SchemaError(std::string("illegal character in ") + what + " '" + s + "'");
  }

  void validate() const {
    if (user_types_.size() < 2) throw SchemaError("schema needs at least two user feature types");
    if (user_types_.size() > kMaxUserFeatures) throw SchemaError("too many user feature types");
    for (const auto& t : user_types_) {
      check_token(t.name, "feature type name");
      if (t.values.empty()) throw SchemaError("feature type '" + t.name + "' has no values");
      if (t.values.size() > 65535) throw SchemaError("feature type '" + t.name + "' has too many values");
      for (const auto& v : t.values) check_token(v, "feature value");
      auto sorted = t.values;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw SchemaError("duplicate value in feature type '" + t.name + "'");
    }
    for (std::size_t a = 0; a < user_types_.size(); ++a)
      for (std::size_t b = a + 1; b < user_types_.size(); ++b)
        if (user_types_[a].name == user_types_[b].name)
          throw SchemaError("duplicate feature type '" + user_types_[a].name + "'");
    if (sections_.empty()) throw SchemaError("schema needs at least one section");
    for (const auto& s : sections_) check_token(s, "section id");
    for (const auto& e : ad_extra_types_) check_token(e, "ad extra feature type");
  }

  void build_index() {
    value_lookup_.clear();
    for (const auto& t : user_types_) {
      std::unordered_map<std::string, ValueIndex> m;
      for (std::size_t i = 0; i < t.values.size(); ++i) m.emplace(t.values[i], static_cast<ValueIndex>(i));
      value_lookup_.push_back(std::move(m));
    }
    section_lookup_.clear();
    for (std::size_t i = 0; i < sections_.size(); ++i)
      section_lookup_.emplace(sections_[i], static_cast<std::uint32_t>(i));
  }

  std::vector<FeatureType> user_types_;
  std::vector<std::string> sections_;
  std::vector<std::string> ad_extra_types_;
  std::vector<std::unordered_map<std::string, ValueIndex>> value_lookup_;
  std::unordered_map<std::string, std::uint32_t> section_lookup_;
};

struct UserProfile {
  std::string user_id;
  std::vector<ValueIndex> feature_values;  // one per schema user feature type

  bool operator==(const UserProfile&) const = default;
};

enum class AdLevel : std::uint8_t { creative = 0, campaign = 1, advertiser = 2 };
inline constexpr std::size_t kAdLevels = 3;

inline const char* to_string(AdLevel l) {
  switch (l) {
    case AdLevel::creative: return "creative";
    case AdLevel::campaign: return "campaign";
    case AdLevel::advertiser: return "advertiser";
  }
  return "?";
}

inline AdLevel parse_ad_level(std::string_view s) {
  if (s == "creative") return AdLevel::creative;
  if (s == "campaign") return AdLevel::campaign;
  if (s == "advertiser") return AdLevel::advertiser;
  throw ConfigError("unknown ad level '" + std::string(s) + "'");
}

struct AdIdentity {
  std::string creative_id;
  std::string campaign_id;
  std::string advertiser_id;
  // One entry per schema ad_extra type; each a (possibly empty) value list.
  std::vector<std::vector<std::string>> extra_features;

  const std::string& id_at(AdLevel level) const {
    switch (level) {
      case AdLevel::creative: return creative_id;
      case AdLevel::campaign: return campaign_id;
      case AdLevel::advertiser: return advertiser_id;
    }
    return creative_id;
  }

  bool operator==(const AdIdentity&) const = default;
};

struct ImpressionEvent {
  Timestamp timestamp = 0;
  UserProfile user;
  AdIdentity ad;
  std::uint32_t section = 0;
  std::uint8_t click = 0;

  bool operator==(const ImpressionEvent&) const = default;
};

// Checks that every creative keeps one campaign and every campaign one advertiser.
class HierarchyIndex {
 public:
  // Returns an empty string when consistent, otherwise a description.
  std::string check(const AdIdentity& ad) {
    auto [it, fresh] = creative_to_campaign_.emplace(ad.creative_id, ad.campaign_id);
    if (!fresh && it->second != ad.campaign_id)
      return "creative '" + ad.creative_id + "' maps to campaigns '" + it->second + "' and '" + ad.campaign_id + "'";
    auto [jt, fresh2] = campaign_to_advertiser_.emplace(ad.campaign_id, ad.advertiser_id);
    if (!fresh2 && jt->second != ad.advertiser_id)
      return "campaign '" + ad.campaign_id + "' maps to advertisers '" + jt->second + "' and '" + ad.advertiser_id +
             "'";
    return {};
  }

 private:
  std::unordered_map<std::string, std::string> creative_to_campaign_;
  std::unordered_map<std::string, std::string> campaign_to_advertiser_;
};

namespace detail {

inline void check_identifier(const std::string& s, std::size_t line, const char* field) {
  if (s.empty()) throw ParseError(line, field, "empty identifier");
  for (char c : s)
    if (c == '\t' || c == '\n' || c == '\r') throw ParseError(line, field, "identifier contains a control character");
}

}  // namespace detail

// Fixed field order: timestamp, user_id, user feature values, advertiser_id,
// campaign_id, creative_id, section_id, click, then one column per ad extra
// type ('|'-joined values).
inline std::string write_event_line(const ImpressionEvent& e, const FeatureSchema& schema) {
  std::string out = std::to_string(e.timestamp);
  out += '\t';
  out += e.user.user_id;
  for (std::size_t k = 0; k < schema.num_user_features(); ++k) {
    out += '\t';
    out += schema.user_type(k).values.at(e.user.feature_values.at(k));
  }
  out += '\t';
  out += e.ad.advertiser_id;
  out += '\t';
  out += e.ad.campaign_id;
  out += '\t';
  out += e.ad.creative_id;
  out += '\t';
  out += schema.sections().at(e.section);
  out += '\t';
  out += e.click ? '1' : '0';
  for (std::size_t x = 0; x < schema.ad_extra_types().size(); ++x) {
    out += '\t';
    if (x < e.ad.extra_features.size()) {
      const auto& vals = e.ad.extra_features[x];
      for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) out += '|';
        out += vals[i];
      }
    }
  }
  return out;
}

inline ImpressionEvent parse_event_line(std::string_view line, const FeatureSchema& schema, std::size_t line_no = 1) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split(line, '\t');
  const std::size_t K = schema.num_user_features();
  const std::size_t expected = 2 + K + 5 + schema.ad_extra_types().size();
  if (fields.size() != expected)
    throw ParseError(line_no, "field count",
                     "expected " + std::to_string(expected) + " fields, got " + std::to_string(fields.size()));

  ImpressionEvent e;
  const auto ts = fields[0];
  if (!try_parse_int(ts, e.timestamp) || (ts.size() > 1 && ts[0] == '0'))
    throw ParseError(line_no, "timestamp", "not a canonical integer: '" + std::string(ts) + "'");
  if (e.timestamp < 0) throw ParseError(line_no, "timestamp", "negative timestamp");

  e.user.user_id = std::string(fields[1]);
  detail::check_identifier(e.user.user_id, line_no, "user_id");
  e.user.feature_values.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto idx = schema.value_index(k, fields[2 + k]);
    if (!idx)
      throw ParseError(line_no, schema.user_type(k).name, "unknown feature value '" + std::string(fields[2 + k]) + "'");
    e.user.feature_values[k] = *idx;
  }
  std::size_t p = 2 + K;
  e.ad.advertiser_id = std::string(fields[p++]);
  detail::check_identifier(e.ad.advertiser_id, line_no, "advertiser_id");
  e.ad.campaign_id = std::string(fields[p++]);
  detail::check_identifier(e.ad.campaign_id, line_no, "campaign_id");
  e.ad.creative_id = std::string(fields[p++]);
  detail::check_identifier(e.ad.creative_id, line_no, "creative_id");
  auto sec = schema.section_index(fields[p]);
  if (!sec) throw ParseError(line_no, "section_id", "unknown section '" + std::string(fields[p]) + "'");
  e.section = *sec;
  ++p;
  const auto label = fields[p++];
  if (label == "1")
    e.click = 1;
  else if (label == "0")
    e.click = 0;
  else
    throw ParseError(line_no, "label", "label must be 0 or 1, got '" + std::string(label) + "'");
  for (std::size_t x = 0; x < schema.ad_extra_types().size(); ++x) {
    std::vector<std::string> vals;
    if (!fields[p].empty())
      for (auto v : split(fields[p], '|')) {
        if (v.empty()) throw ParseError(line_no, schema.ad_extra_types()[x], "empty multi-value entry");
        vals.emplace_back(v);
      }
    e.ad.extra_features.push_back(std::move(vals));
    ++p;
  }
  return e;
}

// Whole-log reader: header first, then one event per line. Enforces the
// ad hierarchy across the log. An optional `#columns` line after the header
// names numeric columns appended to every event line (scored logs).
struct EventLog {
  FeatureSchema schema;
  std::vector<ImpressionEvent> events;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> columns;  // columns[c][event]
};

inline constexpr std::string_view kColumnsTag = "#columns";

inline EventLog read_event_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "header", "empty event log");
  EventLog log{FeatureSchema::parse_header(line), {}, {}, {}};
  HierarchyIndex hierarchy;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 2 && line.rfind(kColumnsTag, 0) == 0) {
      auto f = split(trim(line), '\t');
      for (std::size_t i = 1; i < f.size(); ++i) log.column_names.emplace_back(f[i]);
      log.columns.resize(log.column_names.size());
      continue;
    }
    std::string_view body = line;
    for (std::size_t c = log.column_names.size(); c-- > 0;) {
      const auto tab = body.rfind('\t');
      if (tab == std::string_view::npos) throw ParseError(line_no, "field count", "missing trailing columns");
      double v = 0;
      if (!try_parse_double(trim(body.substr(tab + 1)), v)) throw ParseError(line_no, log.column_names[c], "not a number");
      log.columns[c].push_back(v);
      body = body.substr(0, tab);
    }
    auto e = parse_event_line(body, log.schema, line_no);
    if (auto msg = hierarchy.check(e.ad); !msg.empty()) throw ParseError(line_no, "campaign_id", msg);
    log.events.push_back(std::move(e));
  }
  return log;
}

inline void write_event_log(std::ostream& out, const FeatureSchema& schema, const std::vector<ImpressionEvent>& events) {
  out << schema.header_line() << '\n';
  for (const auto& e : events) out << write_event_line(e, schema) << '\n';
}

}  // namespace sfc
