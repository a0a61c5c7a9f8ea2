#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sfc/trainer.hpp"

namespace sfc::support {

struct TouchedParam {
  std::string what;
  std::function<double&()> ref;
  double analytic;
};

// Every parameter the event touches, paired with its analytic gradient.
inline std::vector<TouchedParam> touched(Model& m, const ImpressionEvent& e, const EventGradients& g) {
  std::vector<TouchedParam> out;
  out.push_back({"bias", [&m]() -> double& { return m.bias(); }, g.bias});
  for (std::size_t k = 0; k < m.num_user_features(); ++k) {
    const auto key = m.user_key(e.user, k);
    for (std::size_t i = 0; i < m.feature_dim(); ++i)
      out.push_back({"user" + std::to_string(k) + "[" + std::to_string(i) + "]",
                     [&m, k, key, i]() -> double& {
                       auto& t = m.user_table(k);
                       return t.values(t.materialize(key))[i];
                     },
                     g.user[k][i]});
  }
  for (std::size_t l = 0; l < kAdLevels; ++l) {
    const auto level = static_cast<AdLevel>(l);
    const auto key = e.ad.id_at(level);
    for (std::size_t i = 0; i < m.dim(); ++i)
      out.push_back({std::string(to_string(level)) + "[" + std::to_string(i) + "]",
                     [&m, level, key, i]() -> double& {
                       auto& t = m.ad_table(level);
                       return t.values(t.materialize(key))[i];
                     },
                     g.ad[l][i]});
  }
  for (std::size_t x = 0; x < g.extra.size(); ++x)
    for (const auto& [value, grad] : g.extra[x])
      for (std::size_t i = 0; i < m.dim(); ++i)
        out.push_back({"extra:" + value + "[" + std::to_string(i) + "]",
                       [&m, x, value = value, i]() -> double& {
                         auto& t = m.extra_table(x);
                         return t.values(t.materialize(value))[i];
                       },
                       grad[i]});
  if (g.has_sfc)
    out.push_back({"w[" + std::to_string(g.sfc_bin) + "]",
                   [&m, key = g.sfc_key, bin = g.sfc_bin]() -> double& {
                     auto& t = m.sfc_table();
                     return t.values(t.materialize(key))[bin];
                   },
                   g.sfc});
  return out;
}

struct GradientMismatch {
  std::size_t instance;
  std::string what;
  double analytic;
  double numeric;
};

struct GradientCheckResult {
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  std::size_t sfc_coordinates = 0;
  double max_relative = 0;  // over coordinates with gradient above the absolute floor
  std::vector<GradientMismatch> mismatches;
};

// Central differences with step h against the analytic gradient on random
// small models (K=3). A coordinate passes when the absolute difference is
// below abs_floor or the relative difference below rel_tol.
inline GradientCheckResult check_gradients(std::size_t instances, std::uint64_t seed, double h = 1e-3,
                                           double rel_tol = 1e-5, double abs_floor = 1e-12) {
  Rng rng(seed);
  const FeatureSchema schema({{"age", {"a0", "a1", "a2"}}, {"gender", {"f", "m"}}, {"geo", {"us", "eu", "apac"}}},
                             {"s0", "s1"}, {"category"});
  GradientCheckResult res;
  for (std::size_t n = 0; n < instances; ++n) {
    HyperParams hp;
    hp.o = 1 + rng.below(2);
    hp.s = rng.below(3);
    hp.init_scale = 0.3 + rng.uniform();
    hp.seed = rng.next() >> 8;
    hp.lambda = std::array<double, 3>{0.0, 0.01, 0.3}[rng.below(3)];
    hp.weight_category = static_cast<WeightCategory>(rng.below(3));
    const bool sfc = rng.below(4) != 0;
    Model m(schema, hp, sfc);
    m.bias() = rng.normal();
    if (sfc) {
      auto& t = m.sfc_table();
      for (const auto* key : {"", "ca1", "adv1"})
        for (auto& x : t.values(t.materialize(key))) x = rng.normal() * 0.5;
    }
    ImpressionEvent e;
    e.user = {"u", {static_cast<ValueIndex>(rng.below(3)), static_cast<ValueIndex>(rng.below(2)),
                    static_cast<ValueIndex>(rng.below(3))}};
    e.ad = {"cr" + std::to_string(rng.below(3)), "ca1", "adv1", {{}}};
    const auto n_cat = rng.below(4);  // duplicates allowed
    for (std::size_t i = 0; i < n_cat; ++i) e.ad.extra_features[0].push_back("c" + std::to_string(rng.below(3)));
    e.click = static_cast<std::uint8_t>(rng.below(2));
    const std::uint64_t f = rng.below(40);

    const auto g = event_gradients(e, f, m);
    for (auto& p : touched(m, e, g)) {
      double& theta = p.ref();
      const double saved = theta;
      auto loss_at = [&](double d) {
        theta = saved + d;
        return event_loss(e, f, m);
      };
      // five-point central stencil
      const double numeric = (8 * (loss_at(h) - loss_at(-h)) - (loss_at(2 * h) - loss_at(-2 * h))) / (12 * h);
      theta = saved;
      const double diff = std::abs(numeric - p.analytic);
      const double scale = std::max(std::abs(numeric), std::abs(p.analytic));
      if (scale > abs_floor) res.max_relative = std::max(res.max_relative, diff / scale);
      if (!(diff <= abs_floor || diff <= rel_tol * scale)) res.mismatches.push_back({n, p.what, p.analytic, numeric});
      ++res.coordinates;
      if (p.what[0] == 'w') ++res.sfc_coordinates;
    }
    ++res.instances;
  }
  return res;
}

}  // namespace sfc::support
