#pragma once

#include <array>

#include "sfc/freqtrack.hpp"

namespace sfc::support {

// Per-day view counts, Sunday..Saturday, for three ads; a1 and a2 share an
// advertiser.
inline constexpr int kActivityLog[3][7] = {
    {0, 0, 0, 1, 0, 0, 2},
    {1, 1, 0, 0, 0, 2, 1},
    {0, 0, 1, 1, 2, 0, 1},
};

inline constexpr Timestamp kLogDay0 = 1514764800;  // a day boundary

inline std::array<AdIdentity, 3> activity_ads() {
  return {AdIdentity{"cr1", "ca1", "adv1", {}}, AdIdentity{"cr2", "ca2", "adv1", {}},
          AdIdentity{"cr3", "ca3", "adv3", {}}};
}

inline FrequencyState replay_activity_log(const UserProfile& u) {
  const auto a = activity_ads();
  FrequencyState st;
  for (int day = 0; day < 7; ++day)
    for (int i = 0; i < 3; ++i)
      for (int n = 0; n < kActivityLog[i][day]; ++n)
        st.record_view(u, a[i], kLogDay0 + day * kSecondsPerDay + 3600 * (i + 1) + n);
  return st;
}

// Queried at the close of Saturday.
inline constexpr Timestamp kActivityQuery = kLogDay0 + 7 * kSecondsPerDay - 1;

struct ActivityCheck {
  const char* label;
  std::uint32_t expected;
  std::uint32_t actual;
};

inline std::array<ActivityCheck, 6> activity_log_checks() {
  const UserProfile u{"u", {0, 0}};
  const auto a = activity_ads();
  const auto st = replay_activity_log(u);
  const auto q = kActivityQuery;
  return {{
      {"a1 campaign last day", 2, st.frequency(u, a[0], q, {AdLevel::campaign, 1})},
      {"a1 advertiser last day", 3, st.frequency(u, a[0], q, {AdLevel::advertiser, 1})},
      {"a2 campaign last week", 5, st.frequency(u, a[1], q, {AdLevel::campaign, 7})},
      {"a2 advertiser last day", 3, st.frequency(u, a[1], q, {AdLevel::advertiser, 1})},
      {"a3 advertiser last 4 days", 4, st.count("u", AdLevel::advertiser, "adv3", q, 4)},
      {"a3 advertiser last week", 5, st.frequency(u, a[2], q, {AdLevel::advertiser, 7})},
  }};
}

}  // namespace sfc::support
