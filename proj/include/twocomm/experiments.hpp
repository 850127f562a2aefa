#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "twocomm/analytics.hpp"
#include "twocomm/digraph_engine.hpp"
#include "twocomm/engine.hpp"
#include "twocomm/netgen.hpp"
#include "twocomm/stats.hpp"

namespace twocomm {

enum class GraphModel { TwoCommunityEr, ConfigGeometric };

struct EnsembleConfig {
  ModelParams params;
  InterventionPolicy policy;
  GraphModel graph_model = GraphModel::TwoCommunityEr;
  double mean_degree = 3.0;  // configuration model only
  std::int64_t replications = 1;
  std::vector<std::int64_t> n_grid;  // empty means just params.n
  int parallelism = 1;
  std::uint64_t master_seed = 0;
  double horizon = -1;
  double sampling_dt = 0;
  std::int64_t max_events = 0;

  void validate() const {
    params.validate();
    if (replications < 1)
      throw std::invalid_argument("ensemble: replications must be >= 1");
    if (parallelism < 1)
      throw std::invalid_argument("ensemble: parallelism must be >= 1");
  }
};

inline bool classify_outbreak(const RunResult& run, std::int64_t n) {
  return static_cast<double>(run.R1_inf + run.R2_inf) >=
         std::log(static_cast<double>(n));
}

// epsilon must be small relative to the limiting outbreak size; returns a
// warning string instead of failing because the bound is asymptotic.
inline std::string check_epsilon(double epsilon, double c, double beta,
                                 double gamma) {
  const double R0 = c * beta / (beta + gamma);
  if (R0 <= 1.0) return "R0 <= 1: no supercritical regime";
  const double r_inf = solve_r_inf(R0).value;
  if (!(epsilon > 0) || !(epsilon < r_inf)) {
    std::ostringstream os;
    os << "epsilon " << epsilon << " outside (0, r_inf = " << r_inf << ")";
    return os.str();
  }
  return {};
}

struct RepRecord {
  std::int64_t rep = 0;
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  double alpha = 0;
  std::string policy;
  bool outbreak = false;
  double tau_12 = 0, tau_1_eps = 0, tau_2_eps = 0, tau_end = 0;
  std::int64_t R1_inf = 0, R2_inf = 0, Y2_at_tau1 = 0, travelers_by_T = 0;
  std::int64_t peak_I2 = 0;
  double peak_I2_time = 0;
  bool failed = false;
  std::string failure;
};

struct CondStats {
  std::int64_t count = 0;
  double mean = 0, median = 0, q10 = 0, q90 = 0;
};

struct EnsembleSummary {
  std::int64_t replications = 0;
  std::int64_t successes = 0;
  std::vector<std::int64_t> failed_reps;
  // one group per n value, in n_grid order
  struct Group {
    std::int64_t n = 0;
    std::int64_t runs = 0;
    std::int64_t outbreaks = 0;
    double outbreak_fraction = 0;
    double outbreak_stderr = 0;
    std::map<std::string, CondStats> conditional;
  };
  std::vector<Group> groups;
  std::map<std::string, stats::LineFit> scaling_fits;  // conditional median vs ln n
  std::vector<RepRecord> table;
  std::string epsilon_warning;
};

namespace detail {

inline const std::vector<std::string>& conditional_quantities() {
  static const std::vector<std::string> q = {
      "lam_tau_12",  "lam_tau_1_eps", "lam_tau_2_eps", "tau_end",
      "R1_frac",     "R2_frac",       "ln_Y2_ratio"};
  return q;
}

inline double quantity_of(const RepRecord& r, const std::string& name,
                          double lambda) {
  const double ln_n = std::log(static_cast<double>(r.n));
  if (name == "lam_tau_12") return lambda * r.tau_12;
  if (name == "lam_tau_1_eps") return lambda * r.tau_1_eps;
  if (name == "lam_tau_2_eps") return lambda * r.tau_2_eps;
  if (name == "tau_end") return r.tau_end;
  if (name == "R1_frac")
    return static_cast<double>(r.R1_inf) / static_cast<double>(r.n);
  if (name == "R2_frac")
    return static_cast<double>(r.R2_inf) / static_cast<double>(r.n);
  if (name == "ln_Y2_ratio")
    return r.Y2_at_tau1 > 0
               ? std::log(static_cast<double>(r.Y2_at_tau1)) / ln_n
               : 0.0;
  throw std::logic_error("unknown quantity " + name);
}

inline ModelParams params_for_n(const ModelParams& base, std::int64_t n) {
  ModelParams p = base;
  p.n = n;
  if (p.scaling_mode)
    p.rho_T = p.rho0 * std::pow(static_cast<double>(n), -p.alpha);
  return p;
}

}  // namespace detail

inline RepRecord run_one_replication(const EnsembleConfig& cfg, std::int64_t n,
                                     std::int64_t rep) {
  const StreamKey key = derive_stream(cfg.master_seed, static_cast<std::uint64_t>(rep));
  const ModelParams p = detail::params_for_n(cfg.params, n);
  RepRecord rec;
  rec.rep = rep;
  rec.seed = key.lo;
  rec.n = n;
  rec.alpha = p.alpha;
  rec.policy = cfg.policy.name();
  try {
    Graph g = cfg.graph_model == GraphModel::TwoCommunityEr
                  ? gen_two_community_er(n, p.c, p.c_cross, key.hi)
                  : gen_configuration_geometric(n, cfg.mean_degree, key.hi);
    SimOptions opts;
    opts.rng_seed = key.lo;
    opts.horizon = cfg.horizon;
    opts.sampling_dt = cfg.sampling_dt;
    opts.max_events = cfg.max_events;
    const RunResult run = simulate_ctmc(g, p, cfg.policy, opts);
    rec.outbreak = classify_outbreak(run, n);
    rec.tau_12 = run.tau_12;
    rec.tau_1_eps = run.tau_1_eps;
    rec.tau_2_eps = run.tau_2_eps;
    rec.tau_end = run.tau_end;
    rec.R1_inf = run.R1_inf;
    rec.R2_inf = run.R2_inf;
    rec.Y2_at_tau1 = run.Y2_at_tau1;
    rec.travelers_by_T = run.travelers_by_T;
    rec.peak_I2 = run.peak_I2;
    rec.peak_I2_time = run.peak_I2_time;
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.failure = e.what();
  }
  return rec;
}

inline EnsembleSummary run_ensemble(const EnsembleConfig& cfg) {
  cfg.validate();
  EnsembleSummary out;
  out.epsilon_warning = check_epsilon(cfg.policy.trigger_epsilon, cfg.params.c,
                                      cfg.params.beta, cfg.params.gamma);
  std::vector<std::int64_t> n_values =
      cfg.n_grid.empty() ? std::vector<std::int64_t>{cfg.params.n} : cfg.n_grid;

  // Global replication indices: rep r of n-group k is k*replications + r,
  // so stream keys never collide across groups.
  const std::int64_t total =
      static_cast<std::int64_t>(n_values.size()) * cfg.replications;
  out.replications = total;
  out.table.resize(static_cast<std::size_t>(total));

  std::mutex mu;
  std::int64_t next = 0;
  auto worker = [&]() {
    while (true) {
      std::int64_t rep;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= total) return;
        rep = next++;
      }
      const std::int64_t group = rep / cfg.replications;
      const std::int64_t n = n_values[static_cast<std::size_t>(group)];
      out.table[static_cast<std::size_t>(rep)] = run_one_replication(cfg, n, rep);
    }
  };
  if (cfg.parallelism == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.parallelism; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const DerivedQuantities dq = derive(cfg.params);
  for (const auto& rec : out.table) {
    if (rec.failed)
      out.failed_reps.push_back(rec.rep);
    else
      ++out.successes;
  }

  std::vector<double> fit_x;
  std::map<std::string, std::vector<double>> fit_y;
  for (std::int64_t gi = 0; gi < static_cast<std::int64_t>(n_values.size()); ++gi) {
    EnsembleSummary::Group grp;
    grp.n = n_values[static_cast<std::size_t>(gi)];
    std::vector<const RepRecord*> ok;
    for (std::int64_t r = gi * cfg.replications; r < (gi + 1) * cfg.replications; ++r) {
      const auto& rec = out.table[static_cast<std::size_t>(r)];
      if (!rec.failed) ok.push_back(&rec);
    }
    grp.runs = static_cast<std::int64_t>(ok.size());
    for (const auto* rec : ok)
      if (rec->outbreak) ++grp.outbreaks;
    if (grp.runs > 0) {
      const double p = static_cast<double>(grp.outbreaks) /
                       static_cast<double>(grp.runs);
      grp.outbreak_fraction = p;
      grp.outbreak_stderr =
          std::sqrt(p * (1.0 - p) / static_cast<double>(grp.runs));
    }
    for (const auto& name : detail::conditional_quantities()) {
      std::vector<double> vals;
      for (const auto* rec : ok) {
        if (!rec->outbreak) continue;
        const double v = detail::quantity_of(*rec, name, dq.lambda);
        if (std::isfinite(v)) vals.push_back(v);
      }
      CondStats cs;
      cs.count = static_cast<std::int64_t>(vals.size());
      if (!vals.empty()) {
        cs.mean = stats::mean(vals);
        cs.median = stats::median(vals);
        cs.q10 = stats::quantile(vals, 0.1);
        cs.q90 = stats::quantile(vals, 0.9);
      }
      grp.conditional[name] = cs;
      if (cs.count > 0) fit_y[name].push_back(cs.median);
    }
    bool any = false;
    for (const auto& name : detail::conditional_quantities())
      any = any || grp.conditional[name].count > 0;
    if (any) fit_x.push_back(std::log(static_cast<double>(grp.n)));
    out.groups.push_back(std::move(grp));
  }
  if (fit_x.size() >= 2) {
    for (const auto& [name, ys] : fit_y)
      if (ys.size() == fit_x.size())
        out.scaling_fits[name] = stats::least_squares(fit_x, ys);
  }
  return out;
}

inline std::string format_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string replication_csv(const EnsembleSummary& s) {
  std::ostringstream os;
  os << "rep,seed,n,alpha,policy,outbreak,tau_12,tau_1_eps,tau_2_eps,tau_end,"
        "R1_inf,R2_inf,Y2_at_tau1,travelers_by_T\n";
  for (const auto& r : s.table) {
    if (r.failed) continue;
    os << r.rep << ',' << r.seed << ',' << r.n << ',' << r.alpha << ','
       << r.policy << ',' << (r.outbreak ? 1 : 0) << ','
       << format_or_inf(r.tau_12) << ',' << format_or_inf(r.tau_1_eps) << ','
       << format_or_inf(r.tau_2_eps) << ',' << format_or_inf(r.tau_end) << ','
       << r.R1_inf << ',' << r.R2_inf << ',' << r.Y2_at_tau1 << ','
       << r.travelers_by_T << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const EnsembleSummary& s) {
  nlohmann::json j;
  j["replications"] = s.replications;
  j["successes"] = s.successes;
  j["failed_reps"] = s.failed_reps;
  if (!s.epsilon_warning.empty()) j["epsilon_warning"] = s.epsilon_warning;
  j["tolerance_note"] =
      "conditional-statistic tolerances are finite-size engineering choices, "
      "not limit theorems";
  for (const auto& g : s.groups) {
    nlohmann::json gj;
    gj["n"] = g.n;
    gj["runs"] = g.runs;
    gj["outbreaks"] = g.outbreaks;
    gj["outbreak_fraction"] = g.outbreak_fraction;
    gj["outbreak_stderr"] = g.outbreak_stderr;
    for (const auto& [name, cs] : g.conditional) {
      gj["conditional"][name] = {{"count", cs.count},
                                 {"mean", cs.mean},
                                 {"median", cs.median},
                                 {"q10", cs.q10},
                                 {"q90", cs.q90}};
    }
    j["groups"].push_back(gj);
  }
  for (const auto& [name, fit] : s.scaling_fits) {
    j["scaling_fits"][name] = {{"slope", fit.slope},
                               {"intercept", fit.intercept},
                               {"slope_stderr", fit.slope_stderr},
                               {"intercept_stderr", fit.intercept_stderr}};
  }
  return j;
}

struct PolicyComparison {
  stats::Interval outbreak_fraction_diff;
  stats::Interval r2_frac_diff;        // conditional on outbreak
  stats::Interval ln_r2_ratio_diff;    // conditional on outbreak
  stats::Interval peak_i2_time_diff;   // conditional on outbreak
  EnsembleSummary arm_a, arm_b;
};

inline PolicyComparison compare_policies(const EnsembleConfig& a,
                                         const EnsembleConfig& b,
                                         int resamples = 10'000,
                                         double level = 0.95) {
  EnsembleConfig a2 = a, b2 = b;
  a2.policy = b.policy;  // everything but the policy must match
  const nlohmann::json ja = params_to_json(a2.params), jb = params_to_json(b2.params);
  if (ja != jb || a.replications != b.replications ||
      a.master_seed != b.master_seed || a.graph_model != b.graph_model ||
      a.mean_degree != b.mean_degree || !a.n_grid.empty() || !b.n_grid.empty())
    throw std::invalid_argument("compare_policies: configs differ beyond policy");

  PolicyComparison cmp;
  cmp.arm_a = run_ensemble(a);
  cmp.arm_b = run_ensemble(b);

  auto collect = [](const EnsembleSummary& s, auto proj, bool cond) {
    std::vector<double> out;
    for (const auto& r : s.table) {
      if (r.failed) continue;
      if (cond && !r.outbreak) continue;
      out.push_back(proj(r));
    }
    return out;
  };
  auto mean_stat = [](std::span<const double> x) { return stats::mean(x); };
  const std::uint64_t bseed = a.master_seed ^ 0x5bd1e995u;

  auto ob = collect(cmp.arm_a, [](const RepRecord& r) { return r.outbreak ? 1.0 : 0.0; }, false);
  auto ob_b = collect(cmp.arm_b, [](const RepRecord& r) { return r.outbreak ? 1.0 : 0.0; }, false);
  cmp.outbreak_fraction_diff =
      stats::bootstrap_diff_ci(ob, ob_b, mean_stat, resamples, level, bseed);

  auto r2 = [](const RepRecord& r) {
    return static_cast<double>(r.R2_inf) / static_cast<double>(r.n);
  };
  cmp.r2_frac_diff = stats::bootstrap_diff_ci(
      collect(cmp.arm_a, r2, true), collect(cmp.arm_b, r2, true), mean_stat,
      resamples, level, bseed + 1);

  auto lnr2 = [](const RepRecord& r) {
    return r.R2_inf > 0 ? std::log(static_cast<double>(r.R2_inf)) /
                              std::log(static_cast<double>(r.n))
                        : 0.0;
  };
  cmp.ln_r2_ratio_diff = stats::bootstrap_diff_ci(
      collect(cmp.arm_a, lnr2, true), collect(cmp.arm_b, lnr2, true), mean_stat,
      resamples, level, bseed + 2);

  auto pk = [](const RepRecord& r) { return r.peak_I2_time; };
  cmp.peak_i2_time_diff = stats::bootstrap_diff_ci(
      collect(cmp.arm_a, pk, true), collect(cmp.arm_b, pk, true), mean_stat,
      resamples, level, bseed + 3);
  return cmp;
}

}  // namespace twocomm
