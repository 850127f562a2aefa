#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "twocomm/analytics.hpp"
#include "twocomm/digraph_engine.hpp"
#include "twocomm/engine.hpp"
#include "twocomm/experiments.hpp"
#include "twocomm/io.hpp"
#include "twocomm/netgen.hpp"
#include "twocomm/params.hpp"
#include "twocomm/ratematrix.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twocomm;

namespace {

json load_config(const std::string& path,
                 const std::vector<std::string>& overrides) {
  json cfg = path.empty() ? json::object() : json::parse(read_file(path));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      cfg[key] = json::parse(val);
    } catch (const json::parse_error&) {
      cfg[key] = val;  // bare strings need no quoting
    }
  }
  return cfg;
}

fs::path resolve_out(const std::string& out) {
  if (!out.empty()) return out;
  if (const char* root = std::getenv("TWOCOMM_OUTPUT_ROOT")) return root;
  return ".";
}

void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const json& resolved_config, std::uint64_t seed) {
  json m;
  m["subcommand"] = subcommand;
  m["config"] = resolved_config;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["config_hash"] = std::hash<std::string>{}(resolved_config.dump());
  atomic_write_file(dir / "manifest.json", m.dump(2) + "\n");
}

InterventionPolicy make_policy(const std::string& name, double epsilon,
                               double beta_prime, const std::string& basis) {
  InterventionPolicy p;
  if (name == "none")
    p.kind = PolicyKind::None;
  else if (name == "travel_ban")
    p.kind = PolicyKind::TravelBan;
  else if (name == "social_distancing")
    p.kind = PolicyKind::SocialDistancing;
  else
    throw std::invalid_argument("unknown policy '" + name + "'");
  p.trigger_epsilon = epsilon;
  p.beta_prime = beta_prime;
  if (basis == "type_counts")
    p.trigger_basis = TriggerBasis::TypeCounts;
  else if (basis == "location_counts")
    p.trigger_basis = TriggerBasis::LocationCounts;
  else
    throw std::invalid_argument("unknown trigger basis '" + basis + "'");
  return p;
}

Graph make_graph(const std::string& model, const ModelParams& p,
                 double mean_degree, std::uint64_t seed,
                 const std::string& graph_file) {
  if (!graph_file.empty()) return load_graph(graph_file);
  if (model == "er") return gen_two_community_er(p.n, p.c, p.c_cross, seed);
  if (model == "geom") return gen_configuration_geometric(p.n, mean_degree, seed);
  throw std::invalid_argument("unknown graph model '" + model + "'");
}

int run_matrix_check(const ModelParams& params, const fs::path& out_dir,
                     const json& cfg, int perturbations, std::uint64_t seed) {
  const DerivedQuantities dq = derive(params);
  json report;
  bool ok = true;
  auto record = [&](const std::string& name, bool pass, const json& detail) {
    report["checks"][name] = detail;
    report["checks"][name]["pass"] = pass;
    ok = ok && pass;
  };

  const RateMatrix16 m0 = build_rate_matrix(MatrixVariant::M0, params);
  const SpectralReport sr = spectral_analysis(m0);
  {
    bool pass = std::abs(sr.top_eigenvalue - dq.lambda) <= 1e-8 &&
                sr.top_multiplicity == 2;
    double next = -std::numeric_limits<double>::infinity();
    for (const auto& ev : sr.eigenvalues)
      if (ev.real() < dq.lambda - 1e-8) next = std::max(next, ev.real());
    pass = pass && next <= -params.gamma + 1e-8;
    record("m0_spectrum", pass,
           {{"top", sr.top_eigenvalue},
            {"multiplicity", sr.top_multiplicity},
            {"next", next},
            {"expected_top", dq.lambda}});
  }
  record("m0_triangularizable",
         sr.triangularizing_permutation.has_value() &&
             sr.triangular_defect <= 1e-14,
         {{"defect", sr.triangular_defect}});
  record("m0_projector", sr.projector_defect <= 1e-8,
         {{"defect", sr.projector_defect}});

  {
    const double growth_c = growth_constant(m0, dq.lambda);
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    bool pass = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < perturbations; ++k) {
      Matrix16 w = Matrix16::Zero();
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
          if (r != c) w(r, c) = unif(rng) * 1e-3;
      w *= 1e-2 / std::max(induced_one_norm(w), 1e-300);
      for (double t : {0.5, 1.0, 5.0}) {
        const auto chk = perturbation_check(m0, w, dq.lambda, t, growth_c);
        pass = pass && chk.ok;
        worst_margin = std::min(worst_margin, chk.rhs - chk.lhs);
      }
    }
    record("perturbation_bound", pass,
           {{"count", perturbations},
            {"growth_constant", growth_c},
            {"worst_margin", worst_margin}});
  }

  if (dq.s0) {
    const double delta = *dq.s0 / 2.0;
    MatrixKnobs knobs;
    knobs.delta = delta;
    const auto herd0 = build_rate_matrix(MatrixVariant::Herd0, params, knobs);
    const auto hr = spectral_analysis(herd0);
    const double expected = -params.beta * params.c * delta;
    record("herd0_top_eigenvalue",
           std::abs(hr.top_eigenvalue - expected) <= 1e-8,
           {{"top", hr.top_eigenvalue}, {"expected", expected}});

    MatrixKnobs sk;
    sk.beta_prime = params.beta / 3.0;
    sk.delta_prime = delta;
    const auto sd0 = build_rate_matrix(MatrixVariant::SocDist0, params, sk);
    const auto sdr = spectral_analysis(sd0);
    const double lam_p =
        params.c * *sk.beta_prime - *sk.beta_prime - params.gamma;
    const double expected_sd =
        std::max(-params.c * delta * params.beta, (params.c - 1.0) * *sk.beta_prime - params.gamma);
    record("socdist0_top_eigenvalue",
           std::abs(sdr.top_eigenvalue - expected_sd) <= 1e-8 && lam_p < 0,
           {{"top", sdr.top_eigenvalue},
            {"expected", expected_sd},
            {"lambda_prime", lam_p}});
    const auto tb0 = build_rate_matrix(MatrixVariant::TravelBan0, params);
    const auto tbr = spectral_analysis(tb0);
    record("travelban0_top_eigenvalue",
           std::abs(tbr.top_eigenvalue - dq.lambda) <= 1e-8,
           {{"top", tbr.top_eigenvalue}, {"expected", dq.lambda}});
  }
  if (sr.degenerate_spectrum_warning)
    report["warning"] = "c is within 1e-6 of 1; spectrum degenerates";
  report["pass"] = ok;
  atomic_write_file(out_dir / "matrix_check.json", report.dump(2) + "\n");
  write_manifest(out_dir, "matrix-check", cfg, seed);
  std::cout << report.dump(2) << std::endl;
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-community SIR epidemic simulator and analysis suite"};
  app.require_subcommand(1);

  std::string config_path, out_dir_s, set_help = "flat config override key=value";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides, set_help);
  app.add_option("--out", out_dir_s,
                 "output directory (default $TWOCOMM_OUTPUT_ROOT or .)");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed override");

  auto* cmd_derive = app.add_subcommand("derive", "print derived quantities");
  auto* cmd_pi = app.add_subcommand("solve-pi", "outbreak probability fixed point");
  auto* cmd_rinf = app.add_subcommand("solve-rinf", "final-size fixed point");
  auto* cmd_mf = app.add_subcommand("meanfield", "integrate the mean-field ODE");
  auto* cmd_mx = app.add_subcommand("matrix-check", "rate-matrix spectral suite");
  auto* cmd_bounds = app.add_subcommand("bounds", "expected-growth bound curves");
  auto* cmd_gen = app.add_subcommand("gen-graph", "generate a contact network");
  auto* cmd_sim = app.add_subcommand("simulate", "single stochastic run");
  auto* cmd_ens = app.add_subcommand("ensemble", "Monte Carlo ensemble");
  auto* cmd_cmp = app.add_subcommand("compare", "paired policy comparison");
  auto* cmd_plot = app.add_subcommand("plot-data", "merge trajectories to long CSV");
  // let global options (--out, --seed, ...) appear after the subcommand too
  for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  double pi_c = 6, pi_beta = 1.5, pi_gamma = 3, pi_tol = 1e-10;
  cmd_pi->add_option("--c", pi_c, "mean degree parameter");
  cmd_pi->add_option("--beta", pi_beta, "infection rate");
  cmd_pi->add_option("--gamma", pi_gamma, "recovery rate");
  cmd_pi->add_option("--tol", pi_tol, "tolerance");

  double r0 = 2;
  cmd_rinf->add_option("--r0", r0, "basic reproduction number")->required();

  double mf_tmax = 10, mf_dt = 0.05, mf_i0 = 1e-4;
  std::string mf_mode = "conservative";
  cmd_mf->add_option("--t-max", mf_tmax, "integration horizon");
  cmd_mf->add_option("--dt", mf_dt, "output spacing");
  cmd_mf->add_option("--init-i", mf_i0, "initial infected fraction");
  cmd_mf->add_option("--mode", mf_mode, "conservative or paper");

  int mx_perturbations = 100;
  cmd_mx->add_option("--perturbations", mx_perturbations,
                     "random perturbations for the growth bound check");

  double bounds_tmax = 2.0;
  int bounds_points = 100;
  cmd_bounds->add_option("--t-max", bounds_tmax, "largest time");
  cmd_bounds->add_option("--points", bounds_points, "grid points");

  std::string gen_model = "er", gen_out_file = "graph.bin";
  double gen_mean_degree = 3;
  cmd_gen->add_option("--model", gen_model, "er or geom");
  cmd_gen->add_option("--mean-degree", gen_mean_degree, "geom model mean degree");
  cmd_gen->add_option("--file", gen_out_file, "output file name");

  std::string sim_policy = "none", sim_basis = "type_counts", sim_model = "er";
  std::string sim_graph_file;
  double sim_epsilon = 0.01, sim_beta_prime = 0, sim_dt = 0.1, sim_horizon = -1;
  double sim_mean_degree = 3;
  std::string sim_engine = "ctmc";
  for (auto* c : {cmd_sim}) {
    c->add_option("--policy", sim_policy, "none, travel_ban, social_distancing");
    c->add_option("--epsilon", sim_epsilon, "trigger threshold fraction");
    c->add_option("--beta-prime", sim_beta_prime, "reduced rate for socdist");
    c->add_option("--basis", sim_basis, "type_counts or location_counts");
    c->add_option("--model", sim_model, "er or geom");
    c->add_option("--mean-degree", sim_mean_degree, "geom model mean degree");
    c->add_option("--graph", sim_graph_file, "pre-generated graph file");
    c->add_option("--sampling-dt", sim_dt, "trajectory sample spacing");
    c->add_option("--horizon", sim_horizon, "bookkeeping horizon (default ln^2 n)");
    c->add_option("--engine", sim_engine, "ctmc or digraph");
  }

  std::int64_t ens_reps = 100;
  std::string ens_policy = "none", ens_model = "er", ens_n_grid;
  double ens_epsilon = 0.01, ens_beta_prime = 0, ens_mean_degree = 3;
  int jobs = 1;
  cmd_ens->add_option("--reps", ens_reps, "replications per n value");
  cmd_ens->add_option("--policy", ens_policy, "intervention policy");
  cmd_ens->add_option("--epsilon", ens_epsilon, "trigger threshold fraction");
  cmd_ens->add_option("--beta-prime", ens_beta_prime, "reduced rate for socdist");
  cmd_ens->add_option("--model", ens_model, "er or geom");
  cmd_ens->add_option("--mean-degree", ens_mean_degree, "geom mean degree");
  cmd_ens->add_option("--n-grid", ens_n_grid, "comma-separated n values");
  cmd_ens->add_option("--jobs", jobs, "parallel replications");

  std::string cmp_policy_a = "none", cmp_policy_b = "travel_ban";
  std::int64_t cmp_reps = 100;
  double cmp_epsilon = 0.01, cmp_beta_prime = 0;
  cmd_cmp->add_option("--policy-a", cmp_policy_a, "first arm policy");
  cmd_cmp->add_option("--policy-b", cmp_policy_b, "second arm policy");
  cmd_cmp->add_option("--reps", cmp_reps, "replications per arm");
  cmd_cmp->add_option("--epsilon", cmp_epsilon, "trigger threshold fraction");
  cmd_cmp->add_option("--beta-prime", cmp_beta_prime, "reduced rate for socdist");
  cmd_cmp->add_option("--jobs", jobs, "parallel replications");

  std::vector<std::string> plot_inputs;
  cmd_plot->add_option("files", plot_inputs, "trajectory CSV files")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  seed_given = seed_opt->count() > 0;

  try {
    json cfg = load_config(config_path, overrides);
    const fs::path out_dir = resolve_out(out_dir_s);

    auto need_params = [&]() {
      ModelParams p = params_from_json(cfg);
      if (seed_given) p.rng_seed = seed;
      return p;
    };

    if (*cmd_derive) {
      const ModelParams p = need_params();
      const DerivedQuantities d = derive(p);
      json j;
      j["R0"] = d.R0;
      j["lambda"] = d.lambda;
      j["p_T"] = d.p_T;
      j["p_H"] = d.p_H;
      if (d.s0) j["s0"] = *d.s0;
      j["cT_bound"] = d.cT_bound;
      j["cH_bound"] = d.cH_bound;
      std::cout << j.dump(2) << std::endl;
      return 0;
    }
    if (*cmd_pi) {
      if (cfg.contains("c")) {
        const ModelParams p = need_params();
        pi_c = p.c;
        pi_beta = p.beta;
        pi_gamma = p.gamma;
      }
      const FixedPointResult fp = solve_pi(pi_c, pi_beta, pi_gamma, pi_tol);
      json j{{"pi", fp.value}, {"residual", fp.residual},
             {"iterations", fp.iterations}};
      std::cout << j.dump(2) << std::endl;
      return 0;
    }
    if (*cmd_rinf) {
      const FixedPointResult fp = solve_r_inf(r0);
      json j{{"r_inf", fp.value}, {"residual", fp.residual}};
      std::cout << j.dump(2) << std::endl;
      return 0;
    }
    if (*cmd_mf) {
      const ModelParams p = need_params();
      std::vector<double> times;
      for (double t = 0; t <= mf_tmax + 1e-12; t += mf_dt) times.push_back(t);
      MeanFieldState init;
      init.s = 1.0 - mf_i0;
      init.x = p.c * mf_i0;
      init.i = mf_i0;
      init.r = 0;
      const auto mode = mf_mode == "paper" ? MeanFieldMode::PaperLiteral
                                           : MeanFieldMode::Conservative;
      const auto states =
          meanfield_integrate(p.c, p.beta, p.gamma, init, times, mode);
      atomic_write_file(out_dir / "meanfield.csv", meanfield_csv(states));
      write_manifest(out_dir, "meanfield", cfg, p.rng_seed);
      return 0;
    }
    if (*cmd_mx)
      return run_matrix_check(need_params(), out_dir, cfg, mx_perturbations,
                              seed_given ? seed : 1);
    if (*cmd_bounds) {
      const ModelParams p = need_params();
      std::vector<double> grid;
      for (int k = 0; k <= bounds_points; ++k)
        grid.push_back(bounds_tmax * k / bounds_points);
      const BoundCurves b = expected_bound_curves(p, grid);
      atomic_write_file(out_dir / "bounds.csv", bound_curves_csv(b));
      write_manifest(out_dir, "bounds", cfg, p.rng_seed);
      return 0;
    }
    if (*cmd_gen) {
      const ModelParams p = need_params();
      const std::uint64_t s = seed_given ? seed : p.rng_seed;
      const Graph g = make_graph(gen_model, p, gen_mean_degree, s, "");
      json sidecar;
      sidecar["model"] = gen_model;
      sidecar["params"] = params_to_json(p);
      sidecar["mean_degree"] = gen_mean_degree;
      sidecar["seed"] = s;
      sidecar["version"] = kVersion;
      fs::create_directories(out_dir);
      save_graph(g, (out_dir / gen_out_file).string(), sidecar);
      write_manifest(out_dir, "gen-graph", cfg, s);
      return 0;
    }
    if (*cmd_sim) {
      const ModelParams p = need_params();
      const std::uint64_t s = seed_given ? seed : p.rng_seed;
      const StreamKey key = derive_stream(s, 0);
      const Graph g =
          make_graph(sim_model, p, sim_mean_degree, key.hi, sim_graph_file);
      RunResult run;
      if (sim_engine == "digraph") {
        run = simulate_digraph(g, p, sim_horizon, key.lo);
      } else {
        const InterventionPolicy pol =
            make_policy(sim_policy, sim_epsilon, sim_beta_prime, sim_basis);
        SimOptions opts;
        opts.rng_seed = key.lo;
        opts.sampling_dt = sim_dt;
        opts.horizon = sim_horizon;
        run = simulate_ctmc(g, p, pol, opts);
      }
      atomic_write_file(out_dir / "trajectory.csv", trajectory_csv(run));
      atomic_write_file(out_dir / "summary.json",
                        run_summary_json(run).dump(2) + "\n");
      write_manifest(out_dir, "simulate", cfg, s);
      return 0;
    }
    if (*cmd_ens) {
      EnsembleConfig ec;
      ec.params = need_params();
      ec.policy = make_policy(ens_policy, ens_epsilon, ens_beta_prime,
                              "type_counts");
      ec.graph_model = ens_model == "geom" ? GraphModel::ConfigGeometric
                                           : GraphModel::TwoCommunityEr;
      ec.mean_degree = ens_mean_degree;
      ec.replications = ens_reps;
      ec.parallelism = jobs;
      ec.master_seed = seed_given ? seed : ec.params.rng_seed;
      if (!ens_n_grid.empty()) {
        std::istringstream is(ens_n_grid);
        std::string tok;
        while (std::getline(is, tok, ','))
          ec.n_grid.push_back(std::stoll(tok));
      }
      const EnsembleSummary s = run_ensemble(ec);
      atomic_write_file(out_dir / "replications.csv", replication_csv(s));
      json sj = summary_json(s);
      sj["version"] = kVersion;
      sj["config_hash"] = std::hash<std::string>{}(cfg.dump());
      atomic_write_file(out_dir / "summary.json", sj.dump(2) + "\n");
      write_manifest(out_dir, "ensemble", cfg, ec.master_seed);
      if (!s.failed_reps.empty()) return 2;
      return 0;
    }
    if (*cmd_cmp) {
      EnsembleConfig base;
      base.params = need_params();
      base.replications = cmp_reps;
      base.parallelism = jobs;
      base.master_seed = seed_given ? seed : base.params.rng_seed;
      EnsembleConfig arm_a = base, arm_b = base;
      arm_a.policy =
          make_policy(cmp_policy_a, cmp_epsilon, cmp_beta_prime, "type_counts");
      arm_b.policy =
          make_policy(cmp_policy_b, cmp_epsilon, cmp_beta_prime, "type_counts");
      const PolicyComparison pc = compare_policies(arm_a, arm_b);
      json j;
      auto iv = [](const stats::Interval& i) {
        return json{{"lo", i.lo}, {"hi", i.hi}};
      };
      j["outbreak_fraction_diff"] = iv(pc.outbreak_fraction_diff);
      j["R2_frac_diff"] = iv(pc.r2_frac_diff);
      j["ln_R2_ratio_diff"] = iv(pc.ln_r2_ratio_diff);
      j["peak_I2_time_diff"] = iv(pc.peak_i2_time_diff);
      j["arm_a"] = summary_json(pc.arm_a);
      j["arm_b"] = summary_json(pc.arm_b);
      j["version"] = kVersion;
      atomic_write_file(out_dir / "comparison.json", j.dump(2) + "\n");
      write_manifest(out_dir, "compare", cfg, base.master_seed);
      return 0;
    }
    if (*cmd_plot) {
      std::ostringstream os;
      os << "t,series,value,run_id\n";
      for (const auto& file : plot_inputs) {
        const std::string run_id = fs::path(file).stem().string();
        std::istringstream in(read_file(file));
        std::string line;
        if (!std::getline(in, line))
          throw std::invalid_argument("empty trajectory file " + file);
        std::vector<std::string> cols;
        {
          std::istringstream hs(line);
          std::string tok;
          while (std::getline(hs, tok, ',')) cols.push_back(tok);
        }
        if (cols.empty() || cols[0] != "t")
          throw std::invalid_argument("not a trajectory CSV: " + file);
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          std::istringstream ls(line);
          std::string tok;
          std::vector<std::string> vals;
          while (std::getline(ls, tok, ',')) vals.push_back(tok);
          for (std::size_t k = 1; k < vals.size() && k < cols.size(); ++k)
            os << vals[0] << ',' << cols[k] << ',' << vals[k] << ',' << run_id
               << '\n';
        }
      }
      atomic_write_file(out_dir / "plot_data.csv", os.str());
      write_manifest(out_dir, "plot-data", cfg, 0);
      return 0;
    }
  } catch (const BudgetError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "budget"}}.dump()
              << std::endl;
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "validation"}}.dump()
              << std::endl;
    return 1;
  } catch (const json::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "validation"}}.dump()
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump()
              << std::endl;
    return 2;
  }
  return 0;
}
