#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "twocomm/engine.hpp"
#include "twocomm/experiments.hpp"
#include "twocomm/ratematrix.hpp"

namespace twocomm {

inline constexpr const char* kVersion = "0.1.0";

// temp-file + rename so interrupted writers never leave truncated outputs
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string trajectory_csv(const RunResult& run) {
  std::ostringstream os;
  os << "t,S1,I1,R1,S2,I2,R2,S1_loc,I1_loc,R1_loc,S2_loc,I2_loc,R2_loc,"
        "X_active_total\n";
  os.precision(17);
  for (const auto& rec : run.trajectory) {
    os << rec.t << ',' << rec.S[0] << ',' << rec.I[0] << ',' << rec.R[0] << ','
       << rec.S[1] << ',' << rec.I[1] << ',' << rec.R[1] << ','
       << rec.S_loc[0] << ',' << rec.I_loc[0] << ',' << rec.R_loc[0] << ','
       << rec.S_loc[1] << ',' << rec.I_loc[1] << ',' << rec.R_loc[1] << ','
       << rec.x_active_total << '\n';
  }
  return os.str();
}

inline nlohmann::json run_summary_json(const RunResult& run) {
  auto enc = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  nlohmann::json j;
  j["seed"] = run.rng_seed;
  j["tau_12"] = enc(run.tau_12);
  j["tau_1_eps"] = enc(run.tau_1_eps);
  j["tau_2_eps"] = enc(run.tau_2_eps);
  j["tau_end"] = enc(run.tau_end);
  j["R1_inf"] = run.R1_inf;
  j["R2_inf"] = run.R2_inf;
  j["Y2_at_tau1"] = run.Y2_at_tau1;
  j["travelers_by_T"] = run.travelers_by_T;
  return j;
}

inline std::string bound_curves_csv(const BoundCurves& b) {
  std::ostringstream os;
  os << "t,B1,B2,closed_form_B1,envelope_B2\n";
  os.precision(17);
  for (std::size_t k = 0; k < b.t.size(); ++k)
    os << b.t[k] << ',' << b.b1[k] << ',' << b.b2[k] << ','
       << b.closed_form_b1[k] << ',' << b.envelope_b2[k] << '\n';
  return os.str();
}

inline std::string meanfield_csv(const std::vector<MeanFieldState>& states) {
  std::ostringstream os;
  os << "t,s,x,i,r\n";
  os.precision(17);
  for (const auto& st : states)
    os << st.t << ',' << st.s << ',' << st.x << ',' << st.i << ',' << st.r
       << '\n';
  return os.str();
}

}  // namespace twocomm
