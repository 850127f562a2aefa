#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "twocomm/engine.hpp"

namespace twocomm {

namespace detail {

// Piecewise-constant travel trajectory: initial state plus toggle times,
// extended lazily from the node's private stream.
struct TravelPath {
  bool start_away = false;
  std::vector<double> toggles;
  Rng rng;
  double rho_T = 0, rho_H = 0;

  void extend_past(double t) {
    double last = toggles.empty() ? 0.0 : toggles.back();
    while (last <= t) {
      const bool away = start_away == (toggles.size() % 2 == 0);
      const double rate = away ? rho_H : rho_T;
      if (!(rate > 0)) {
        toggles.push_back(std::numeric_limits<double>::infinity());
        return;
      }
      std::exponential_distribution<double> sojourn(rate);
      last += sojourn(rng);
      toggles.push_back(last);
    }
  }
  // location state (true = away) at time t; t must be within the
  // generated range
  bool away_at(double t) {
    extend_past(t);
    const auto k = static_cast<std::size_t>(
        std::upper_bound(toggles.begin(), toggles.end(), t) - toggles.begin());
    return start_away == (k % 2 == 0);
  }
  // next toggle strictly after t
  double next_toggle(double t) {
    extend_past(t);
    return *std::upper_bound(toggles.begin(), toggles.end(), t);
  }
};

}  // namespace detail

// Pre-sampled infection-digraph engine. Every random ingredient (recovery
// durations, directed-edge transmission budgets, full travel trajectories)
// is drawn up front from order-free per-node and per-edge streams; earliest
// infection times then follow by deterministic shortest-arrival propagation.
inline RunResult simulate_digraph(const Graph& g, const ModelParams& params,
                                  double horizon, std::uint64_t rng_seed) {
  params.validate();
  if (g.num_nodes != 2 * params.n)
    throw std::invalid_argument("simulate_digraph: graph/params size mismatch");
  const std::int64_t n = params.n;
  const DerivedQuantities dq = derive(params);
  const double T =
      horizon >= 0 ? horizon
                   : std::log(static_cast<double>(n)) * std::log(static_cast<double>(n));

  RunResult res;
  res.rng_seed = rng_seed;
  res.params = params;
  res.horizon = T;

  const std::size_t nn = static_cast<std::size_t>(g.num_nodes);
  std::vector<double> recovery(nn);
  std::vector<detail::TravelPath> path(nn);
  {
    for (std::size_t v = 0; v < nn; ++v) {
      Rng r = make_rng(derive_stream(rng_seed, static_cast<std::uint64_t>(v)));
      recovery[v] = std::exponential_distribution<double>(params.gamma)(r);
      path[v].start_away =
          std::uniform_real_distribution<double>(0.0, 1.0)(r) < dq.p_T;
      path[v].rho_T = params.rho_T;
      path[v].rho_H = params.rho_H;
      path[v].rng = r;
    }
  }
  std::int32_t seed_node;
  {
    Rng r = make_rng(derive_stream(rng_seed, static_cast<std::uint64_t>(g.num_nodes)));
    std::vector<std::int32_t> type1;
    for (std::int64_t v = 0; v < g.num_nodes; ++v)
      if (g.node_type[static_cast<std::size_t>(v)] == 1)
        type1.push_back(static_cast<std::int32_t>(v));
    seed_node =
        type1[std::uniform_int_distribution<std::size_t>(0, type1.size() - 1)(r)];
  }
  path[static_cast<std::size_t>(seed_node)].start_away = false;

  auto edge_budget = [&](std::int32_t u, std::int32_t v) {
    if (!(params.beta > 0)) return std::numeric_limits<double>::infinity();
    const std::uint64_t idx =
        static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(g.num_nodes) +
        static_cast<std::uint64_t>(v) + static_cast<std::uint64_t>(g.num_nodes) + 1;
    Rng r = make_rng(derive_stream(rng_seed, idx));
    return std::exponential_distribution<double>(params.beta)(r);
  };
  auto loc_of = [&](std::int32_t v, double t) {
    const int type = g.node_type[static_cast<std::size_t>(v)];
    return path[static_cast<std::size_t>(v)].away_at(t) ? 3 - type : type;
  };

  // Consume `budget` over the co-location intervals of (u, v) inside
  // [t0, t1]; returns the exhaustion time or +inf.
  auto exhaust = [&](std::int32_t u, std::int32_t v, double t0, double t1,
                     double budget) {
    double t = t0;
    while (t < t1) {
      const double nu = path[static_cast<std::size_t>(u)].next_toggle(t);
      const double nv = path[static_cast<std::size_t>(v)].next_toggle(t);
      const double seg_end = std::min({nu, nv, t1});
      if (loc_of(u, t) == loc_of(v, t)) {
        const double seg = seg_end - t;
        if (budget <= seg) return t + budget;
        budget -= seg;
      }
      t = seg_end;
    }
    return std::numeric_limits<double>::infinity();
  };

  std::vector<double> infected_at(nn, std::numeric_limits<double>::infinity());
  using QEntry = std::pair<double, std::int32_t>;
  std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> queue;
  queue.push({0.0, seed_node});
  while (!queue.empty()) {
    const auto [tu, u] = queue.top();
    queue.pop();
    if (infected_at[static_cast<std::size_t>(u)] <= tu) continue;
    infected_at[static_cast<std::size_t>(u)] = tu;
    const double rec = tu + recovery[static_cast<std::size_t>(u)];
    auto [first, last] = g.adj(u);
    for (auto it = first; it != last; ++it) {
      const std::int32_t v = *it;
      if (infected_at[static_cast<std::size_t>(v)] <= tu) continue;
      const double t_hit = exhaust(u, v, tu, rec, edge_budget(u, v));
      if (std::isfinite(t_hit) &&
          t_hit < infected_at[static_cast<std::size_t>(v)])
        queue.push({t_hit, v});
    }
  }

  // reconstruct the run statistics from the arrival times
  std::vector<double> t1_times, t2_times;
  std::vector<std::pair<double, int>> i2_events;  // (time, +1/-1)
  double t_end = 0;
  for (std::size_t v = 0; v < nn; ++v) {
    if (!std::isfinite(infected_at[v])) continue;
    const double tv = infected_at[v];
    const double rv = tv + recovery[v];
    t_end = std::max(t_end, rv);
    if (g.node_type[v] == 1) {
      ++res.R1_inf;
      t1_times.push_back(tv);
    } else {
      ++res.R2_inf;
      t2_times.push_back(tv);
      i2_events.push_back({tv, +1});
      i2_events.push_back({rv, -1});
    }
  }
  std::sort(t1_times.begin(), t1_times.end());
  std::sort(t2_times.begin(), t2_times.end());
  res.tau_end = t_end;
  if (!t2_times.empty()) res.tau_12 = t2_times.front();
  const auto k = static_cast<std::size_t>(
      std::ceil(0.01 * static_cast<double>(n)));  // epsilon = 1% convention
  if (t1_times.size() >= k && k >= 1) {
    res.tau_1_eps = t1_times[k - 1];
    res.Y2_at_tau1 = static_cast<std::int64_t>(
        std::upper_bound(t2_times.begin(), t2_times.end(), res.tau_1_eps) -
        t2_times.begin());
  }
  if (t2_times.size() >= k && k >= 1) res.tau_2_eps = t2_times[k - 1];
  std::sort(i2_events.begin(), i2_events.end());
  std::int64_t cur = 0;
  for (const auto& [t, d] : i2_events) {
    cur += d;
    if (cur > res.peak_I2) {
      res.peak_I2 = cur;
      res.peak_I2_time = t;
    }
  }
  // travel onsets with multiplicity: initially-away nodes plus every
  // home-to-away toggle before the horizon
  for (std::size_t v = 0; v < nn; ++v) {
    auto& p = path[v];
    if (p.start_away) ++res.travelers_by_T;
    p.extend_past(T);
    for (std::size_t k = 0; k < p.toggles.size(); ++k) {
      if (p.toggles[k] > T) break;
      const bool departure = p.start_away ? (k % 2 == 1) : (k % 2 == 0);
      if (departure) ++res.travelers_by_T;
    }
  }
  return res;
}

}  // namespace twocomm
