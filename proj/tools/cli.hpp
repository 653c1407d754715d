#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "klmdp/klmdp.hpp"

namespace klmdp::cli {

struct UavModelConfig {
  uav::UavScenario scenario;
  /// "seeded" or "explicit".
  std::string wind_kind = "seeded";
  std::uint64_t wind_seed = 0;
};

struct ExplicitModelConfig {
  Matrix r0;
  Matrix q0;
  Vector utility;
  Index basepoint = 0;
};

struct ValidationConfig {
  Index horizon = 4;
  Index trials = 10000;
  Index horizon_cap = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double oracle_tol = 1e-6;
  double fh_tol = 1e-5;
  double pf_tol = 1e-6;
  double pf_eta_tol = 1e-8;
};

struct ScenarioConfig {
  std::variant<UavModelConfig, ExplicitModelConfig> model;
  OdeConfig solver;
  ValidationConfig validation;
};

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<double> zeta_max;
  std::optional<double> step;
  std::optional<std::vector<double>> checkpoints;
  std::optional<Index> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<Index> trials;
  std::optional<unsigned> threads;
};

/// Built model ready for the solvers.
struct ModelInstance {
  FactoredKernel kernel;
  Vector utility;
  Index basepoint;
  std::optional<uav::UavScenario> scenario;
};

ScenarioConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& cfg);
ScenarioConfig load_config(const std::filesystem::path& path, const Overrides& o = {});
void apply_overrides(ScenarioConfig& cfg, const Overrides& o);
ModelInstance build_model(const ScenarioConfig& cfg);

/// Default 15 x 15 x 5 UAV scenario swept to zeta = 2.
ScenarioConfig default_uav_config();

/// Shortest round-trip decimal form, used in file names.
std::string format_zeta(double zeta);

int cmd_solve_ar(const ScenarioConfig& cfg, const std::filesystem::path& out,
                 std::ostream& log);
int cmd_solve_fh(const ScenarioConfig& cfg, Index horizon,
                 const std::filesystem::path& out, std::ostream& log);
int cmd_validate(const ScenarioConfig& cfg, std::ostream& report);
int cmd_gen_scenario(const ScenarioConfig& cfg,
                     const std::optional<std::filesystem::path>& out,
                     std::ostream& stdout_stream);

int run(int argc, char** argv);

}  // namespace klmdp::cli
