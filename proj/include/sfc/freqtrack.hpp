#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "events.hpp"

namespace sfc {

// Which ad-hierarchy level is counted, and over how many whole days.
struct FrequencyConfig {
  AdLevel ad_feature = AdLevel::campaign;
  int window_days = 7;

  void validate() const {
    if (window_days != 1 && window_days != 7 && window_days != 30)
      throw ConfigError("frequency window must be 1, 7 or 30 days, got " + std::to_string(window_days));
  }

  bool operator==(const FrequencyConfig&) const = default;
};

inline int parse_window_days(std::string_view s) {
  if (s == "day") return 1;
  if (s == "week") return 7;
  if (s == "month") return 30;
  int d = 0;
  if (try_parse_int(s, d)) return d;
  throw ConfigError("unknown frequency window '" + std::string(s) + "'");
}

inline std::string window_name(int days) {
  switch (days) {
    case 1: return "day";
    case 7: return "week";
    case 30: return "month";
    default: return std::to_string(days);
  }
}

// Per-(user, ad-level value) view counts in day buckets. Buckets older than
// the largest supported window are dropped; a query sums the buckets of the
// last `window` days ending at the query day, so the current partial day
// counts fully. Single writer; const queries may run concurrently between
// writes.
class FrequencyState {
 public:
  static constexpr int kMaxWindowDays = 30;
  static constexpr std::int64_t kNoDay = std::numeric_limits<std::int64_t>::min();

  struct DayCount {
    std::int64_t day;
    std::uint32_t count;
  };

  std::int64_t current_day() const { return current_day_; }

  // Counts one view at every ad level. Rejects a timestamp on a day before
  // the latest recorded one.
  void record_view(const UserProfile& user, const AdIdentity& ad, Timestamp t) {
    const std::int64_t day = day_of(t);
    if (current_day_ != kNoDay && day < current_day_)
      throw OrderingError("view at t=" + std::to_string(t) + " (day " + std::to_string(day) +
                          ") precedes current day " + std::to_string(current_day_));
    if (day > current_day_) {
      current_day_ = day;
      if (++days_since_sweep_ >= kMaxWindowDays) evict_all();
    }
    for (std::size_t l = 0; l < kAdLevels; ++l) {
      const auto level = static_cast<AdLevel>(l);
      auto& ring = counters_[make_key(user.user_id, level, ad.id_at(level))];
      drop_expired(ring, current_day_);
      if (!ring.empty() && ring.back().day == day)
        ++ring.back().count;
      else
        ring.push_back({day, 1});
    }
  }

  // Views of `value_id` at `level` by `user_id` within the `window_days` days
  // ending at day_of(t). Any positive window up to kMaxWindowDays.
  std::uint32_t count(std::string_view user_id, AdLevel level, std::string_view value_id, Timestamp t,
                      int window_days) const {
    if (window_days <= 0 || window_days > kMaxWindowDays)
      throw ConfigError("window of " + std::to_string(window_days) + " days is outside 1.." +
                        std::to_string(kMaxWindowDays));
    auto it = counters_.find(make_key(user_id, level, value_id));
    if (it == counters_.end()) return 0;
    const std::int64_t last = day_of(t);
    const std::int64_t first = last - window_days + 1;
    std::uint32_t total = 0;
    for (const auto& b : it->second)
      if (b.day >= first && b.day <= last) total += b.count;
    return total;
  }

  std::uint32_t frequency(const UserProfile& user, const AdIdentity& ad, Timestamp t,
                          const FrequencyConfig& cfg) const {
    return count(user.user_id, cfg.ad_feature, ad.id_at(cfg.ad_feature), t, cfg.window_days);
  }

  // Drops every bucket outside the largest window ending at day_of(t).
  void evict_expired(Timestamp t) {
    const std::int64_t day = day_of(t);
    if (current_day_ == kNoDay || day > current_day_) current_day_ = day;
    evict_all();
  }

  std::size_t bucket_count() const {
    std::size_t n = 0;
    for (const auto& [k, ring] : counters_) n += ring.size();
    return n;
  }
  std::size_t pair_count() const { return counters_.size(); }

  // Line-oriented snapshot: header, then `user_id level value_id day count`
  // (tab separated) sorted for byte-stable output.
  void save(std::ostream& out) const {
    out << "#freqstate\t" << current_day_ << '\n';
    std::vector<const std::pair<const std::string, std::vector<DayCount>>*> rows;
    rows.reserve(counters_.size());
    for (const auto& kv : counters_) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
    for (const auto* kv : rows) {
      const auto& key = kv->first;
      const auto level = static_cast<AdLevel>(key[0] - '0');
      const auto tab = key.find('\t');
      const auto user = std::string_view(key).substr(1, tab - 1);
      const auto value = std::string_view(key).substr(tab + 1);
      for (const auto& b : kv->second)
        out << user << '\t' << to_string(level) << '\t' << value << '\t' << b.day << '\t' << b.count << '\n';
    }
  }

  static FrequencyState load(std::istream& in) {
    FrequencyState st;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "header", "empty frequency snapshot");
    auto head = split(line, '\t');
    if (head.size() != 2 || head[0] != "#freqstate" || !try_parse_int(head[1], st.current_day_))
      throw ParseError(1, "header", "expected '#freqstate<TAB>current_day'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto f = split(line, '\t');
      if (f.size() != 5) throw ParseError(line_no, "field count", "expected 5 fields");
      AdLevel level;
      try {
        level = parse_ad_level(f[1]);
      } catch (const ConfigError&) {
        throw ParseError(line_no, "level", "unknown level '" + std::string(f[1]) + "'");
      }
      DayCount b{};
      if (!try_parse_int(f[3], b.day)) throw ParseError(line_no, "day", "not an integer");
      if (!try_parse_int(f[4], b.count)) throw ParseError(line_no, "count", "not a non-negative integer");
      auto& ring = st.counters_[make_key(f[0], level, f[2])];
      if (!ring.empty() && ring.back().day >= b.day) throw ParseError(line_no, "day", "days out of order");
      ring.push_back(b);
    }
    return st;
  }

  bool operator==(const FrequencyState& o) const {
    if (current_day_ != o.current_day_ || counters_.size() != o.counters_.size()) return false;
    for (const auto& [k, ring] : counters_) {
      auto it = o.counters_.find(k);
      if (it == o.counters_.end() || it->second.size() != ring.size()) return false;
      for (std::size_t i = 0; i < ring.size(); ++i)
        if (ring[i].day != it->second[i].day || ring[i].count != it->second[i].count) return false;
    }
    return true;
  }

 private:
  static std::string make_key(std::string_view user_id, AdLevel level, std::string_view value_id) {
    std::string key;
    key.reserve(user_id.size() + value_id.size() + 2);
    key += static_cast<char>('0' + static_cast<int>(level));
    key += user_id;
    key += '\t';
    key += value_id;
    return key;
  }

  static void drop_expired(std::vector<DayCount>& ring, std::int64_t today) {
    const std::int64_t oldest = today - kMaxWindowDays + 1;
    std::size_t n = 0;
    while (n < ring.size() && ring[n].day < oldest) ++n;
    if (n) ring.erase(ring.begin(), ring.begin() + static_cast<std::ptrdiff_t>(n));
  }

  void evict_all() {
    days_since_sweep_ = 0;
    for (auto it = counters_.begin(); it != counters_.end();) {
      drop_expired(it->second, current_day_);
      if (it->second.empty())
        it = counters_.erase(it);
      else
        ++it;
    }
  }

  std::unordered_map<std::string, std::vector<DayCount>> counters_;
  std::int64_t current_day_ = kNoDay;
  int days_since_sweep_ = 0;
};

}  // namespace sfc
