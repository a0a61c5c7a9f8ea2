#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "sfc/generator.hpp"
#include "sfc/metrics.hpp"
#include "sfc/trainer.hpp"

using namespace sfc;

namespace {

std::vector<ScoredEvent> make(std::vector<double> p, std::vector<int> y, std::vector<std::uint32_t> section = {}) {
  std::vector<ScoredEvent> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i].prediction = p[i];
    out[i].label = static_cast<std::uint8_t>(y[i]);
    out[i].section = section.empty() ? 0 : section[i];
  }
  return out;
}

double brute_auc(const std::vector<ScoredEvent>& s) {
  double num = 0, pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (a.label == 1 && b.label == 0) {
        num += a.prediction > b.prediction ? 1.0 : a.prediction == b.prediction ? 0.5 : 0.0;
        ++pairs;
      }
  return num / pairs;
}

// Replays the stream with the statistics frequency (campaign views, 7 days).
std::vector<ScoredEvent> replay(const GeneratorConfig& c) {
  std::vector<ScoredEvent> scored;
  FrequencyState st;
  generate_stream(c, [&](const ImpressionEvent& e) {
    const auto f = st.count(e.user.user_id, AdLevel::campaign, e.ad.campaign_id, e.timestamp, 7);
    scored.push_back(make_scored(e, 0.5, static_cast<std::uint32_t>(f)));
    st.record_view(e.user, e.ad, e.timestamp);
  });
  return scored;
}

}  // namespace

TEST_CASE("logloss examples") {
  CHECK(logloss(make({0.5}, {1})) == Catch::Approx(0.693147).margin(1e-6));
  // closed form is 0.2899092...; the commonly quoted 0.289916 is a rounding slip
  const double two = (-std::log(0.8) - std::log(0.7)) / 2;
  CHECK(std::abs(logloss(make({0.8, 0.3}, {1, 0})) - two) < 1e-15);
  CHECK(logloss(make({0.8, 0.3}, {1, 0})) == Catch::Approx(0.289916).margin(1e-5));
  CHECK(logloss(make({1.0}, {1})) == Catch::Approx(0.0).margin(1e-8));
  CHECK(std::isfinite(logloss(make({1.0}, {0}))));
  CHECK_THROWS_AS(logloss(std::vector<ScoredEvent>{}), MetricError);
}

TEST_CASE("logloss accumulators merge") {
  Rng rng(5);
  LogLossAccumulator all, a, b;
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform();
    const int y = rng.bernoulli(0.3) ? 1 : 0;
    all.add(p, y);
    (i % 3 ? a : b).add(p, y);
  }
  a.merge(b);
  CHECK(a.count() == all.count());
  CHECK(a.mean() == Catch::Approx(all.mean()).epsilon(1e-12));
}

TEST_CASE("constant predictor loss is minimized at the base rate") {
  Rng rng(11);
  for (double rate : {0.02, 0.1, 0.45}) {
    std::vector<ScoredEvent> s(5000);
    double clicks = 0;
    for (auto& e : s) {
      e.label = rng.bernoulli(rate) ? 1 : 0;
      clicks += e.label;
    }
    const double base = clicks / static_cast<double>(s.size());
    auto at = [&](double p) {
      for (auto& e : s) e.prediction = p;
      return logloss(s);
    };
    const double best = at(base);
    for (double d : {-0.01, -0.001, 0.001, 0.01}) CHECK(at(base + d) > best);
  }
}

TEST_CASE("auc examples") {
  CHECK(auc(make({0.9, 0.1}, {1, 0})) == 1.0);
  CHECK(auc(make({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0})) == 0.5);
  CHECK(auc(make({0.1, 0.9}, {1, 0})) == 0.0);
  CHECK_THROWS_AS(auc(make({0.1, 0.9}, {1, 1})), MetricError);
  CHECK_THROWS_AS(auc(make({0.1, 0.9}, {0, 0})), MetricError);
}

TEST_CASE("auc equals the pairwise brute force") {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(trial < 30 ? 200 : 1000);
    std::vector<ScoredEvent> s(n);
    for (auto& e : s) {
      // coarse scores force plenty of ties
      e.prediction = trial % 2 ? std::round(rng.uniform() * 10) / 10 : rng.uniform();
      e.label = rng.bernoulli(0.3) ? 1 : 0;
    }
    s[0].label = 1;
    s[1].label = 0;
    CHECK(std::abs(auc(s) - brute_auc(s)) <= 1e-12);

    auto t = s;
    for (auto& e : t) e.prediction = std::exp(3 * e.prediction) - 7;  // strictly increasing
    CHECK(std::abs(auc(t) - auc(s)) <= 1e-12);
  }
}

TEST_CASE("sauc examples") {
  // section 0: 1 click, perfect; section 1: 3 clicks, random ordering (AUC 0.5)
  auto s = make({0.9, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 1, 1, 0, 0, 0}, {0, 0, 1, 1, 1, 1, 1, 1});
  CHECK(sauc(s) == Catch::Approx(0.625).epsilon(1e-15));
  auto with_empty = s;
  for (double p : {0.2, 0.7, 0.4}) with_empty.push_back(make({p}, {0}, {5})[0]);
  const auto d = sauc_detail(with_empty);
  CHECK(d.value == sauc(s));
  CHECK(d.sections_used == 2);
  CHECK(d.skipped == std::vector<std::uint32_t>{5});

  Rng rng(3);
  std::vector<ScoredEvent> one(300);
  for (auto& e : one) {
    e.prediction = rng.uniform();
    e.label = rng.bernoulli(0.2) ? 1 : 0;
    e.section = 2;
  }
  CHECK(sauc(one) == auc(one));
  CHECK_THROWS_AS(sauc(make({0.2, 0.3}, {1, 0}, {0, 1})), MetricError);
}

TEST_CASE("lift formulas") {
  const MetricSummary base{1.00, 0.8017, 100.0};
  const auto same = lifts(base, base);
  CHECK(same.logloss_pct == 0.0);
  CHECK(same.sauc_pct == 0.0);
  CHECK(same.cpm_pct == 0.0);
  CHECK(lift_lower_better(0.99, 1.00) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(lift_higher_better(0.8083, 0.8017) == Catch::Approx(0.823).margin(5e-4));
  CHECK(lift_higher_better(107.3, 100.0) == Catch::Approx(7.3).epsilon(1e-12));
  CHECK_THROWS_AS(lift_lower_better(0.5, 0.0), MetricError);
  CHECK(std::isnan(lift_higher_better(std::nan(""), 1.0)));
}

TEST_CASE("nctr curve properties") {
  std::vector<ScoredEvent> s;
  auto add = [&](std::uint32_t v, int n, int clicks) {
    for (int i = 0; i < n; ++i) {
      ScoredEvent e;
      e.frequency = v;
      e.label = i < clicks ? 1 : 0;
      s.push_back(e);
    }
  };
  add(0, 100, 10);
  add(1, 50, 4);
  add(3, 20, 1);
  add(60, 30, 1);
  add(75, 10, 1);
  const auto c = nctr_curve(s, 50);
  REQUIRE(c.size() == 51);
  CHECK(c[0].ctr_n == 1.0);
  CHECK(c[1].ctr_n == Catch::Approx(0.8));
  CHECK(c[3].ctr_n == Catch::Approx(0.5));
  CHECK(std::isnan(c[2].ctr_n));
  CHECK(c[50].impressions == 40);  // v >= 50 aggregated
  CHECK(c[50].ctr_n == Catch::Approx(0.5));
  CHECK(c.back().cdf == 1.0);
  for (std::size_t v = 1; v < c.size(); ++v) CHECK(c[v].cdf >= c[v - 1].cdf);
  CHECK(c[0].cdf == Catch::Approx(100.0 / 210.0));

  // delta-method standard error at v=1
  const double r0 = 0.1, r1 = 0.08;
  const double se = std::sqrt(r1 * (1 - r1) / 50 / (r0 * r0) + r1 * r1 * (r0 * (1 - r0) / 100) / std::pow(r0, 4));
  CHECK(c[1].se == Catch::Approx(se).epsilon(1e-12));

  std::vector<ScoredEvent> none(3);
  for (auto& e : none) e.frequency = 2;
  CHECK_THROWS_AS(nctr_curve(none), MetricError);

  NctrCounts a(50), b(50), all(50);
  for (std::size_t i = 0; i < s.size(); ++i) {
    (i % 2 ? a : b).add(s[i].frequency, s[i].label);
    all.add(s[i].frequency, s[i].label);
  }
  a.merge(b);
  CHECK(a.total() == all.total());
  CHECK(a.curve()[1].ctr_n == all.curve()[1].ctr_n);
  CHECK_THROWS_AS(a.merge(NctrCounts(10)), MetricError);
}

namespace {

GeneratorConfig two_gender_config(std::size_t n_users) {
  auto c = default_generator_config();
  c.schema = FeatureSchema({{"gender", {"f", "m"}}, {"geo", {"x"}}}, {"s0", "s1"});
  c.value_weights = {{0.6, 0.4}, {}};
  c.n_users = n_users;
  c.user_activity_skew = 0;
  c.affinity_scale = 0;
  c.base_ctr = 0.1;
  c.days = 7;
  c.events_per_day = 40000;
  c.n_campaigns = 8;
  c.n_advertisers = 4;
  c.n_creatives = 8;
  return c;
}

}  // namespace

TEST_CASE("segment shares") {
  const auto c = two_gender_config(100000);
  const auto scored = replay(c);
  const auto global = nctr_curve(scored);
  const auto single = segment_breakdown(scored, resolve_segment_key(c.schema, "geo"));
  REQUIRE(single.size() == 1);
  CHECK(single[0].share == 1.0);
  for (std::size_t v = 0; v < global.size(); ++v) {
    CHECK(single[0].curve[v].impressions == global[v].impressions);
    CHECK(single[0].curve[v].clicks == global[v].clicks);
  }
  const auto by_gender = segment_breakdown(scored, resolve_segment_key(c.schema, "gender"));
  REQUIRE(by_gender.size() == 2);
  // Impression share varies with both the population draw and the arrivals.
  const double n = static_cast<double>(scored.size());
  for (std::size_t g = 0; g < 2; ++g) {
    const double p = g == 0 ? 0.6 : 0.4;
    const double se = std::sqrt(p * (1 - p) / static_cast<double>(c.n_users) + p * (1 - p) / n);
    CHECK(std::abs(by_gender[g].share - p) < 3 * se);
  }
  CHECK_THROWS_AS(resolve_segment_key(c.schema, "income"), MetricError);
  CHECK(resolve_segment_key(c.schema, "section").is_section);
}

TEST_CASE("segment curves recover segment fatigue") {
  auto c = two_gender_config(3000);
  std::vector<double> steep(51);
  for (std::size_t v = 0; v < steep.size(); ++v) steep[v] = std::pow(0.8, static_cast<double>(v));
  c.segment_fatigue = {{0, 1, steep}};
  const auto scored = replay(c);
  const auto by_gender = segment_breakdown(scored, resolve_segment_key(c.schema, "gender"));
  REQUIRE(by_gender.size() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto& truth = g == 0 ? c.fatigue_curve : steep;
    int checked = 0;
    for (std::size_t v = 1; v < 50; ++v) {
      const auto& pt = by_gender[g].curve[v];
      if (pt.impressions < 5000) continue;
      INFO("segment " << g << " v=" << v);
      CHECK(std::abs(pt.ctr_n - truth[v]) < 3.5 * pt.se);
      ++checked;
    }
    CHECK(checked >= 3);
  }
}

TEST_CASE("csv emitters") {
  std::stringstream out;
  write_metrics_csv(out, {summarize("a", make({0.8, 0.3}, {1, 0})), summarize("b", make({0.6, 0.4}, {1, 0}))});
  std::string header;
  std::getline(out, header);
  CHECK(header == "name,events,logloss,auc,sauc,cpm");
  out.seekg(0);
  const auto rows = read_metrics_csv(out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].logloss == logloss(make({0.8, 0.3}, {1, 0})));
  CHECK(rows[0].auc == 1.0);
  CHECK(std::isnan(rows[0].cpm));

  std::stringstream lifts_out;
  write_lifts_csv(lifts_out, rows, "b");
  std::getline(lifts_out, header);
  CHECK(header == "candidate,baseline,logloss_lift_pct,sauc_lift_pct,cpm_lift_pct");
  CHECK_THROWS_AS(write_lifts_csv(lifts_out, rows, "zzz"), MetricError);

  std::stringstream nctr;
  write_nctr_csv(nctr, nctr_curve(make({0.5, 0.5}, {1, 0})));
  std::getline(nctr, header);
  CHECK(header.rfind("v,ctr_n,impressions,cdf", 0) == 0);

  std::stringstream bad("name,events\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), ParseError);
}
