#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace twocomm {

struct ModelParams {
  std::int64_t n = 0;       // community size; total population is 2n
  double c = 0;             // within-community edge parameter, p = c/n
  double c_cross = 0;       // cross-community edge parameter (defaults to c)
  double beta = 0;          // infection rate per active edge
  double gamma = 0;         // recovery rate
  double rho_T = 0;         // rate of leaving home
  double rho_H = 0;         // rate of returning home
  double alpha = 0;         // travel-rate exponent when rho_T = rho0 * n^-alpha
  bool scaling_mode = false;  // rho_T was specified via (rho0, alpha)
  double rho0 = 0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (n < 2) throw std::invalid_argument("params: n must be >= 2");
    if (!(c > 0) || !(c_cross > 0))
      throw std::invalid_argument("params: c and c_cross must be positive");
    if (!(beta >= 0) || !(gamma > 0))
      throw std::invalid_argument("params: beta must be >= 0, gamma > 0");
    if (!(rho_T >= 0) || !(rho_H > 0))
      throw std::invalid_argument("params: travel rates must be valid");
    if (scaling_mode && !(alpha > 0 && alpha < 1))
      throw std::invalid_argument("params: alpha must lie in (0,1)");
  }
};

struct DerivedQuantities {
  double R0 = 0;
  double lambda = 0;
  double p_T = 0;
  double p_H = 0;
  std::optional<double> s0;  // herd-immunity threshold, defined when R0 > 1
  double cT_bound = 0;       // c * n^-alpha * ln^3 n
  double cH_bound = 0;       // c
};

inline DerivedQuantities derive(const ModelParams& p) {
  p.validate();
  DerivedQuantities d;
  d.R0 = p.c * p.beta / (p.beta + p.gamma);
  d.lambda = p.c * p.beta - p.beta - p.gamma;
  d.p_T = p.rho_T / (p.rho_T + p.rho_H);
  d.p_H = 1.0 - d.p_T;
  if (d.R0 > 1.0) d.s0 = 1.0 / d.R0;
  const double ln_n = std::log(static_cast<double>(p.n));
  d.cT_bound =
      p.c * std::pow(static_cast<double>(p.n), -p.alpha) * ln_n * ln_n * ln_n;
  d.cH_bound = p.c;
  return d;
}

// Parses a flat JSON document with the exact field names of ModelParams.
// rho_T may be given directly or via (rho0, alpha); unknown fields are
// rejected.
inline ModelParams params_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "n", "c", "c_cross", "beta", "gamma", "rho_T", "rho_H", "alpha", "rho0",
      "rng_seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key))
      throw std::invalid_argument("params: unknown field '" + key + "'");
  }
  ModelParams p;
  p.n = j.at("n").get<std::int64_t>();
  p.c = j.at("c").get<double>();
  p.c_cross = j.contains("c_cross") ? j.at("c_cross").get<double>() : p.c;
  p.beta = j.at("beta").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.rho_H = j.at("rho_H").get<double>();
  if (j.contains("rho_T")) {
    if (j.contains("rho0"))
      throw std::invalid_argument("params: give rho_T or (rho0, alpha), not both");
    p.rho_T = j.at("rho_T").get<double>();
    if (j.contains("alpha")) p.alpha = j.at("alpha").get<double>();
  } else {
    p.scaling_mode = true;
    p.rho0 = j.at("rho0").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.rho_T = p.rho0 * std::pow(static_cast<double>(p.n), -p.alpha);
  }
  if (j.contains("rng_seed")) p.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  p.validate();
  return p;
}

inline nlohmann::json params_to_json(const ModelParams& p) {
  nlohmann::json j;
  j["n"] = p.n;
  j["c"] = p.c;
  j["c_cross"] = p.c_cross;
  j["beta"] = p.beta;
  j["gamma"] = p.gamma;
  j["rho_H"] = p.rho_H;
  if (p.scaling_mode) {
    j["rho0"] = p.rho0;
    j["alpha"] = p.alpha;
  } else {
    j["rho_T"] = p.rho_T;
    if (p.alpha != 0) j["alpha"] = p.alpha;
  }
  j["rng_seed"] = p.rng_seed;
  return j;
}

}  // namespace twocomm
