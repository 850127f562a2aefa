#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "twocomm/netgen.hpp"
#include "twocomm/params.hpp"
#include "twocomm/rng.hpp"

namespace twocomm {

enum class Health : std::uint8_t { S = 0, I = 1, R = 2 };

enum class PolicyKind { None, TravelBan, SocialDistancing };
enum class TriggerBasis { TypeCounts, LocationCounts };

struct InterventionPolicy {
  PolicyKind kind = PolicyKind::None;
  double trigger_epsilon = 0.01;
  TriggerBasis trigger_basis = TriggerBasis::TypeCounts;
  double beta_prime = 0;
  // When set, the reduced rate applies to pairs of community-2 residents
  // instead of pairs physically located in community 2.
  bool scope_by_type = false;

  std::string name() const {
    switch (kind) {
      case PolicyKind::None: return "none";
      case PolicyKind::TravelBan: return "travel_ban";
      default: return "social_distancing";
    }
  }
};

struct TrajectoryRecord {
  double t = 0;
  std::array<std::int64_t, 2> S{}, I{}, R{};          // by node type
  std::array<std::int64_t, 2> S_loc{}, I_loc{}, R_loc{};  // by current location
  std::array<std::int64_t, 16> census{};  // directed IS pairs by (i,j,A,B)
  std::int64_t x_active_total = 0;        // co-located IS pairs
};

struct EventRecord {
  double t = 0;
  std::uint8_t kind = 0;  // 0 travel, 1 recovery, 2 transmission
  std::int32_t node_a = -1;
  std::int32_t node_b = -1;
  double rate = 0;  // per-clock rate used (transmissions only)
};

struct RunResult {
  std::vector<TrajectoryRecord> trajectory;
  double tau_12 = std::numeric_limits<double>::infinity();
  double tau_1_eps = std::numeric_limits<double>::infinity();
  double tau_2_eps = std::numeric_limits<double>::infinity();
  double tau_end = std::numeric_limits<double>::infinity();
  std::int64_t R1_inf = 0;
  std::int64_t R2_inf = 0;
  std::int64_t Y2_at_tau1 = -1;  // -1 while tau_1_eps has not occurred
  std::int64_t travelers_by_T = 0;
  std::int64_t peak_I2 = 0;
  double peak_I2_time = 0;
  double trigger_time = std::numeric_limits<double>::infinity();
  std::uint64_t rng_seed = 0;
  ModelParams params;
  InterventionPolicy policy;
  double horizon = 0;
  std::int64_t event_count = 0;
  bool budget_exceeded = false;
  bool lambda_prime_warning = false;
  std::vector<EventRecord> events;  // populated only in audit mode
  std::vector<Health> final_health;       // populated on request
  std::vector<std::uint8_t> final_location;
};

struct SimOptions {
  double horizon = -1;       // < 0 means ln^2 n
  double sampling_dt = 0;    // 0 disables periodic sampling
  std::uint64_t rng_seed = 0;
  std::int64_t max_events = 0;  // 0 means 50 * num_nodes + 1e6
  bool record_events = false;
  std::int64_t census_check_every = 0;  // recompute the census every k events
  bool keep_final_state = false;
};

struct BudgetError : std::runtime_error {
  RunResult partial;
  BudgetError(std::string msg, RunResult r)
      : std::runtime_error(std::move(msg)), partial(std::move(r)) {}
};

// Recomputes the 16-class directed IS census from raw node states.
inline std::array<std::int64_t, 16> census_from_scratch(
    const Graph& g, const std::vector<Health>& health,
    const std::vector<std::uint8_t>& location) {
  std::array<std::int64_t, 16> census{};
  for (std::int64_t u = 0; u < g.num_nodes; ++u) {
    if (health[static_cast<std::size_t>(u)] != Health::I) continue;
    const int i = g.node_type[static_cast<std::size_t>(u)];
    const int a = location[static_cast<std::size_t>(u)] == i ? 0 : 1;
    auto [first, last] = g.adj(u);
    for (auto it = first; it != last; ++it) {
      if (health[static_cast<std::size_t>(*it)] != Health::S) continue;
      const int j = g.node_type[static_cast<std::size_t>(*it)];
      const int b = location[static_cast<std::size_t>(*it)] == j ? 0 : 1;
      ++census[static_cast<std::size_t>(((i - 1) * 2 + (j - 1)) * 4 + a * 2 + b)];
    }
  }
  return census;
}

namespace detail {

// Directed IS pairs bucketed by co-location community; supports O(1)
// insert and swap-remove via a key -> slot map.
struct ActivePairs {
  std::vector<std::pair<std::int32_t, std::int32_t>> bucket[2];
  std::unordered_map<std::uint64_t, std::pair<int, std::size_t>> slot;
  std::int64_t num_nodes = 0;

  std::uint64_t key(std::int32_t u, std::int32_t v) const {
    return static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(num_nodes) +
           static_cast<std::uint64_t>(v);
  }
  void insert(std::int32_t u, std::int32_t v, int community) {
    const int b = community - 1;
    slot[key(u, v)] = {b, bucket[b].size()};
    bucket[b].emplace_back(u, v);
  }
  bool contains(std::int32_t u, std::int32_t v) const {
    return slot.count(key(u, v)) != 0;
  }
  void erase(std::int32_t u, std::int32_t v) {
    auto it = slot.find(key(u, v));
    if (it == slot.end()) return;
    const auto [b, idx] = it->second;
    auto& vec = bucket[b];
    const auto moved = vec.back();
    vec[idx] = moved;
    vec.pop_back();
    slot.erase(it);
    if (idx < vec.size()) slot[key(moved.first, moved.second)] = {b, idx};
  }
};

}  // namespace detail

inline RunResult simulate_ctmc(const Graph& g, const ModelParams& params,
                               const InterventionPolicy& policy,
                               const SimOptions& opts) {
  params.validate();
  if (g.num_nodes != 2 * params.n)
    throw std::invalid_argument("simulate_ctmc: graph/params size mismatch");
  const std::int64_t n = params.n;
  if (policy.kind == PolicyKind::SocialDistancing && !(policy.beta_prime > 0))
    throw std::invalid_argument("simulate_ctmc: socdist needs beta_prime > 0");
  if (!(policy.trigger_epsilon > 0) || !(policy.trigger_epsilon < 1))
    throw std::invalid_argument("simulate_ctmc: trigger_epsilon out of range");

  RunResult res;
  res.rng_seed = opts.rng_seed;
  res.params = params;
  res.policy = policy;
  res.horizon = opts.horizon >= 0
                    ? opts.horizon
                    : std::log(static_cast<double>(n)) * std::log(static_cast<double>(n));
  res.lambda_prime_warning =
      policy.kind == PolicyKind::SocialDistancing &&
      !(params.c * policy.beta_prime - policy.beta_prime - params.gamma < 0);
  const std::int64_t max_events =
      opts.max_events > 0 ? opts.max_events : 50 * g.num_nodes + 1'000'000;

  Rng rng = make_rng(opts.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Health> health(static_cast<std::size_t>(g.num_nodes), Health::S);
  std::vector<std::uint8_t> location(static_cast<std::size_t>(g.num_nodes));
  // travel onsets: initially-away nodes plus every later home-to-away
  // departure before the horizon, with multiplicity; the expectation is
  // exactly 2n p_T (1 + rho_H T)
  std::int64_t travel_onsets = 0;

  const DerivedQuantities dq = derive(params);
  for (std::int64_t v = 0; v < g.num_nodes; ++v) {
    const std::uint8_t type = g.node_type[static_cast<std::size_t>(v)];
    const bool away = unif(rng) < dq.p_T;
    location[static_cast<std::size_t>(v)] =
        away ? static_cast<std::uint8_t>(3 - type) : type;
    if (away) ++travel_onsets;
  }
  // seed: a uniformly random type-1 node, forced home
  std::vector<std::int32_t> type1_nodes;
  for (std::int64_t v = 0; v < g.num_nodes; ++v)
    if (g.node_type[static_cast<std::size_t>(v)] == 1)
      type1_nodes.push_back(static_cast<std::int32_t>(v));
  const std::int32_t seed_node = type1_nodes[std::uniform_int_distribution<std::size_t>(
      0, type1_nodes.size() - 1)(rng)];
  if (location[static_cast<std::size_t>(seed_node)] != 1) {
    location[static_cast<std::size_t>(seed_node)] = 1;
    --travel_onsets;
  }
  health[static_cast<std::size_t>(seed_node)] = Health::I;

  // node pools with positional indices for O(1) swap-remove
  struct Pool {
    std::vector<std::int32_t> items;
    std::vector<std::int64_t> pos;  // -1 when absent
    void init(std::int64_t num_nodes) { pos.assign(static_cast<std::size_t>(num_nodes), -1); }
    void add(std::int32_t v) {
      pos[static_cast<std::size_t>(v)] = static_cast<std::int64_t>(items.size());
      items.push_back(v);
    }
    void remove(std::int32_t v) {
      const auto p = pos[static_cast<std::size_t>(v)];
      const auto moved = items.back();
      items[static_cast<std::size_t>(p)] = moved;
      items.pop_back();
      pos[static_cast<std::size_t>(moved)] = p;
      pos[static_cast<std::size_t>(v)] = -1;
    }
  };
  Pool home, away, infected;
  home.init(g.num_nodes);
  away.init(g.num_nodes);
  infected.init(g.num_nodes);
  for (std::int64_t v = 0; v < g.num_nodes; ++v) {
    if (location[static_cast<std::size_t>(v)] == g.node_type[static_cast<std::size_t>(v)])
      home.add(static_cast<std::int32_t>(v));
    else
      away.add(static_cast<std::int32_t>(v));
  }
  infected.add(seed_node);

  detail::ActivePairs active;
  active.num_nodes = g.num_nodes;
  std::array<std::int64_t, 16> census{};

  auto type_of = [&](std::int32_t v) {
    return static_cast<int>(g.node_type[static_cast<std::size_t>(v)]);
  };
  auto loc_of = [&](std::int32_t v) {
    return static_cast<int>(location[static_cast<std::size_t>(v)]);
  };
  auto census_class = [&](std::int32_t u, std::int32_t v) {
    const int i = type_of(u), j = type_of(v);
    const int a = loc_of(u) == i ? 0 : 1;
    const int b = loc_of(v) == j ? 0 : 1;
    return ((i - 1) * 2 + (j - 1)) * 4 + a * 2 + b;
  };
  // Register (u infected, v susceptible) in the census and, when
  // co-located, in the active set.
  auto add_pair = [&](std::int32_t u, std::int32_t v) {
    ++census[static_cast<std::size_t>(census_class(u, v))];
    if (loc_of(u) == loc_of(v)) active.insert(u, v, loc_of(u));
  };
  auto remove_pair = [&](std::int32_t u, std::int32_t v) {
    --census[static_cast<std::size_t>(census_class(u, v))];
    if (loc_of(u) == loc_of(v)) active.erase(u, v);
  };

  {
    auto [first, last] = g.adj(seed_node);
    for (auto it = first; it != last; ++it) add_pair(seed_node, *it);
  }

  std::array<std::int64_t, 2> S{}, I{}, R{};
  std::array<std::int64_t, 2> S_loc{}, I_loc{}, R_loc{};
  S = {n, n};
  for (std::int64_t v = 0; v < g.num_nodes; ++v)
    ++S_loc[static_cast<std::size_t>(loc_of(static_cast<std::int32_t>(v)) - 1)];
  --S[0];
  ++I[0];
  --S_loc[0];
  ++I_loc[0];

  const std::int64_t trigger_count = static_cast<std::int64_t>(
      std::ceil(policy.trigger_epsilon * static_cast<double>(n)));
  std::int64_t infections_1_type = 1;  // I1 + R1 by type, monotone
  std::int64_t ir_loc1 = 1;            // I + R currently located in community 1
  bool policy_live = false;
  bool socdist_live = false;
  bool travel_frozen = false;

  double t = 0;
  double next_sample = opts.sampling_dt > 0 ? 0.0 : std::numeric_limits<double>::infinity();

  auto snapshot = [&](double at) {
    TrajectoryRecord rec;
    rec.t = at;
    rec.S = S;
    rec.I = I;
    rec.R = R;
    rec.S_loc = S_loc;
    rec.I_loc = I_loc;
    rec.R_loc = R_loc;
    rec.census = census;
    rec.x_active_total = static_cast<std::int64_t>(active.bucket[0].size() +
                                                   active.bucket[1].size());
    res.trajectory.push_back(rec);
  };
  auto emit_samples_until = [&](double t_new) {
    while (next_sample <= t_new) {
      snapshot(next_sample);
      next_sample += opts.sampling_dt;
    }
  };

  auto basis_count_1 = [&]() {
    return policy.trigger_basis == TriggerBasis::TypeCounts ? infections_1_type
                                                            : ir_loc1;
  };
  auto maybe_trigger = [&]() {
    if (policy_live || policy.kind == PolicyKind::None) return;
    if (basis_count_1() >= trigger_count) {
      policy_live = true;
      res.trigger_time = t;
      if (policy.kind == PolicyKind::TravelBan) travel_frozen = true;
      if (policy.kind == PolicyKind::SocialDistancing) socdist_live = true;
    }
  };
  maybe_trigger();
  auto note_tau1 = [&]() {
    if (std::isinf(res.tau_1_eps) && basis_count_1() >= trigger_count) {
      res.tau_1_eps = t;
      res.Y2_at_tau1 = policy.trigger_basis == TriggerBasis::TypeCounts
                           ? I[1] + R[1]
                           : I_loc[1] + R_loc[1];
      snapshot(t);
    }
  };
  auto basis_count_2 = [&]() {
    return policy.trigger_basis == TriggerBasis::TypeCounts
               ? I[1] + R[1]
               : I_loc[1] + R_loc[1];
  };
  auto note_tau2 = [&]() {
    if (std::isinf(res.tau_2_eps) && basis_count_2() >= trigger_count) {
      res.tau_2_eps = t;
      snapshot(t);
    }
  };
  note_tau1();

  if (opts.sampling_dt > 0) {
    snapshot(0.0);
    next_sample = opts.sampling_dt;
  }

  // Flips the location of x and reclassifies every IS pair involving it.
  auto apply_travel = [&](std::int32_t x) {
    const bool was_home = loc_of(x) == type_of(x);
    const Health hx = health[static_cast<std::size_t>(x)];
    auto [first, last] = g.adj(x);
    if (hx == Health::I) {
      for (auto it = first; it != last; ++it)
        if (health[static_cast<std::size_t>(*it)] == Health::S) remove_pair(x, *it);
    } else if (hx == Health::S) {
      for (auto it = first; it != last; ++it)
        if (health[static_cast<std::size_t>(*it)] == Health::I) remove_pair(*it, x);
    }
    const std::size_t old_loc = static_cast<std::size_t>(loc_of(x) - 1);
    location[static_cast<std::size_t>(x)] =
        static_cast<std::uint8_t>(3 - loc_of(x));
    const std::size_t new_loc = static_cast<std::size_t>(loc_of(x) - 1);
    if (hx == Health::S) { --S_loc[old_loc]; ++S_loc[new_loc]; }
    if (hx == Health::I) { --I_loc[old_loc]; ++I_loc[new_loc]; }
    if (hx == Health::R) { --R_loc[old_loc]; ++R_loc[new_loc]; }
    if (hx != Health::S) ir_loc1 += (new_loc == 0) - (old_loc == 0);
    if (was_home) {
      home.remove(x);
      away.add(x);
    } else {
      away.remove(x);
      home.add(x);
    }
    if (hx == Health::I) {
      for (auto it = first; it != last; ++it)
        if (health[static_cast<std::size_t>(*it)] == Health::S) add_pair(x, *it);
    } else if (hx == Health::S) {
      for (auto it = first; it != last; ++it)
        if (health[static_cast<std::size_t>(*it)] == Health::I) add_pair(*it, x);
    }
  };

  auto apply_recovery = [&](std::int32_t x) {
    auto [first, last] = g.adj(x);
    for (auto it = first; it != last; ++it)
      if (health[static_cast<std::size_t>(*it)] == Health::S) remove_pair(x, *it);
    health[static_cast<std::size_t>(x)] = Health::R;
    infected.remove(x);
    const std::size_t ty = static_cast<std::size_t>(type_of(x) - 1);
    const std::size_t lc = static_cast<std::size_t>(loc_of(x) - 1);
    --I[ty]; ++R[ty];
    --I_loc[lc]; ++R_loc[lc];
  };

  auto apply_infection = [&](std::int32_t u, std::int32_t v) {
    // clean-up: remove every IS pair into v, then make v infectious
    auto [first, last] = g.adj(v);
    for (auto it = first; it != last; ++it)
      if (health[static_cast<std::size_t>(*it)] == Health::I) remove_pair(*it, v);
    (void)u;
    health[static_cast<std::size_t>(v)] = Health::I;
    infected.add(v);
    const std::size_t ty = static_cast<std::size_t>(type_of(v) - 1);
    const std::size_t lc = static_cast<std::size_t>(loc_of(v) - 1);
    --S[ty]; ++I[ty];
    --S_loc[lc]; ++I_loc[lc];
    if (ty == 0) ++infections_1_type;
    if (lc == 0) ++ir_loc1;
    for (auto it = first; it != last; ++it)
      if (health[static_cast<std::size_t>(*it)] == Health::S) add_pair(v, *it);
    if (std::isinf(res.tau_12)) {
      const bool second = policy.trigger_basis == TriggerBasis::TypeCounts
                              ? ty == 1
                              : lc == 1;
      if (second) {
        res.tau_12 = t;
        snapshot(t);
      }
    }
    if (I[1] > res.peak_I2) {
      res.peak_I2 = I[1];
      res.peak_I2_time = t;
    }
  };

  while (infected.items.size() > 0) {
    const double beta2 =
        socdist_live ? policy.beta_prime : params.beta;
    double rate_travel = 0;
    if (!travel_frozen)
      rate_travel = params.rho_T * static_cast<double>(home.items.size()) +
                    params.rho_H * static_cast<double>(away.items.size());
    const double rate_rec = params.gamma * static_cast<double>(infected.items.size());
    double rate_inf_1, rate_inf_2;
    if (policy.scope_by_type && socdist_live) {
      // community membership by resident type of the target
      rate_inf_1 = 0;
      rate_inf_2 = 0;
      // fall through to the slower per-pair scan below
    } else {
      rate_inf_1 = params.beta * static_cast<double>(active.bucket[0].size());
      rate_inf_2 = beta2 * static_cast<double>(active.bucket[1].size());
    }
    bool scan_pairs = policy.scope_by_type && socdist_live;
    double scan_total = 0;
    if (scan_pairs) {
      for (int b = 0; b < 2; ++b)
        for (const auto& [u, v] : active.bucket[b])
          scan_total += (type_of(u) == 2 && type_of(v) == 2) ? policy.beta_prime
                                                             : params.beta;
    }
    const double total = rate_travel + rate_rec +
                         (scan_pairs ? scan_total : rate_inf_1 + rate_inf_2);
    if (!(total > 0)) break;

    double u1 = unif(rng);
    if (u1 <= 0) u1 = std::numeric_limits<double>::min();
    const double dt = -std::log(u1) / total;
    const double t_new = t + dt;
    emit_samples_until(t_new);
    t = t_new;

    ++res.event_count;
    if (res.event_count > max_events) {
      res.budget_exceeded = true;
      res.R1_inf = R[0] + I[0];
      res.R2_inf = R[1] + I[1];
      throw BudgetError("simulate_ctmc: event budget exceeded", res);
    }

    double pick = unif(rng) * total;
    if (pick < rate_travel) {
      // travel: home departures first, then returns
      const double rt_home = params.rho_T * static_cast<double>(home.items.size());
      std::int32_t x;
      if (pick < rt_home) {
        const auto idx = static_cast<std::size_t>(pick / params.rho_T);
        x = home.items[std::min(idx, home.items.size() - 1)];
      } else {
        const auto idx =
            static_cast<std::size_t>((pick - rt_home) / params.rho_H);
        x = away.items[std::min(idx, away.items.size() - 1)];
      }
      const bool departing =
          loc_of(x) == type_of(x);  // home-to-away transition
      if (departing && t <= res.horizon) ++travel_onsets;
      if (opts.record_events) res.events.push_back({t, 0, x, -1, 0});
      apply_travel(x);
      maybe_trigger();
      note_tau1();
    } else if (pick < rate_travel + rate_rec) {
      const auto idx =
          static_cast<std::size_t>((pick - rate_travel) / params.gamma);
      const std::int32_t x =
          infected.items[std::min(idx, infected.items.size() - 1)];
      if (opts.record_events) res.events.push_back({t, 1, x, -1, 0});
      apply_recovery(x);
    } else {
      double rem = pick - rate_travel - rate_rec;
      std::int32_t u = -1, v = -1;
      double used_rate = params.beta;
      if (!scan_pairs) {
        if (rem < rate_inf_1) {
          const auto idx = static_cast<std::size_t>(rem / params.beta);
          const auto& pr = active.bucket[0][std::min(idx, active.bucket[0].size() - 1)];
          u = pr.first;
          v = pr.second;
          used_rate = params.beta;
        } else {
          const auto idx = static_cast<std::size_t>((rem - rate_inf_1) / beta2);
          const auto& pr = active.bucket[1][std::min(idx, active.bucket[1].size() - 1)];
          u = pr.first;
          v = pr.second;
          used_rate = beta2;
        }
      } else {
        for (int b = 0; b < 2 && u < 0; ++b) {
          for (const auto& pr : active.bucket[b]) {
            const double r = (type_of(pr.first) == 2 && type_of(pr.second) == 2)
                                 ? policy.beta_prime
                                 : params.beta;
            if (rem < r) {
              u = pr.first;
              v = pr.second;
              used_rate = r;
              break;
            }
            rem -= r;
          }
        }
        if (u < 0) {
          const auto& pr = active.bucket[1].empty() ? active.bucket[0].back()
                                                    : active.bucket[1].back();
          u = pr.first;
          v = pr.second;
        }
      }
      if (opts.record_events) res.events.push_back({t, 2, u, v, used_rate});
      apply_infection(u, v);
      maybe_trigger();
      note_tau1();
      note_tau2();
    }

    if (opts.census_check_every > 0 &&
        res.event_count % opts.census_check_every == 0) {
      if (census != census_from_scratch(g, health, location))
        throw std::logic_error("simulate_ctmc: census drift detected");
    }
  }

  res.tau_end = t;
  res.R1_inf = R[0];
  res.R2_inf = R[1];
  if (opts.sampling_dt > 0) snapshot(t);

  // Travel continues after extinction; only the home/away counts matter
  // for the remaining bookkeeping, so simulate them in aggregate until
  // the horizon. A live travel ban means no further travel at all.
  if (!travel_frozen && t < res.horizon && params.rho_T > 0) {
    std::int64_t n_home = static_cast<std::int64_t>(home.items.size());
    std::int64_t n_away = static_cast<std::int64_t>(away.items.size());
    double tt = t;
    while (true) {
      const double rate_dep = params.rho_T * static_cast<double>(n_home);
      const double rate_ret = params.rho_H * static_cast<double>(n_away);
      const double total = rate_dep + rate_ret;
      if (!(total > 0)) break;
      double u = unif(rng);
      if (u <= 0) u = std::numeric_limits<double>::min();
      tt += -std::log(u) / total;
      if (tt > res.horizon) break;
      if (unif(rng) * total < rate_dep) {
        --n_home;
        ++n_away;
        ++travel_onsets;
      } else {
        ++n_home;
        --n_away;
      }
    }
  }
  res.travelers_by_T = travel_onsets;

  if (opts.keep_final_state) {
    res.final_health = health;
    res.final_location = location;
  }
  return res;
}

}  // namespace twocomm
