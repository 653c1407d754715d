#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace klmdp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw DomainError(std::string("config: ") + what + " must be a non-empty 2-D array");
  }
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j[i].size()) != cols) {
      throw DomainError(std::string("config: ") + what + " rows have unequal length");
    }
    for (Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

UavModelConfig parse_uav(const json& m) {
  UavModelConfig c;
  auto& sc = c.scenario;
  sc.d_a = m.value("d_a", Index{15});
  sc.d_o = m.value("d_o", Index{15});
  sc.d_n = m.value("d_N", Index{5});
  sc.delta_n = m.value("delta_n", 0.05);
  sc.sigma_u2 = m.value("sigma_u2", 0.5);
  // Config uses 1-based cells.
  if (m.contains("target")) {
    const auto t = m.at("target").get<std::array<Index, 2>>();
    sc.target = {t[0] - 1, t[1] - 1};
  } else {
    sc.target = {sc.d_a - 1, sc.d_o - 1};
  }
  sc.basepoint_wind_state = m.value("basepoint_wind_state", Index{1}) - 1;
  const json wind = m.value("wind", json{{"kind", "seeded"}, {"seed", 0}});
  c.wind_kind = wind.value("kind", std::string("seeded"));
  if (c.wind_kind == "seeded") {
    c.wind_seed = wind.value("seed", std::uint64_t{0});
    sc.wind = uav::generate_wind_field(sc.d_a, sc.d_o, sc.d_n, c.wind_seed);
  } else if (c.wind_kind == "explicit") {
    // table[n][i][j] = [d_lat, d_lon]
    const json& t = wind.at("table");
    std::vector<uav::WindField::Shift> table;
    if (static_cast<Index>(t.size()) != sc.d_n) {
      throw DomainError("config: wind table must have d_N layers");
    }
    for (const json& layer : t) {
      if (static_cast<Index>(layer.size()) != sc.d_a) {
        throw DomainError("config: wind table layer must have d_a rows");
      }
      for (const json& row : layer) {
        if (static_cast<Index>(row.size()) != sc.d_o) {
          throw DomainError("config: wind table row must have d_o cells");
        }
        for (const json& cell : row) table.push_back(cell.get<uav::WindField::Shift>());
      }
    }
    sc.wind = uav::WindField(sc.d_a, sc.d_o, sc.d_n, std::move(table));
  } else {
    throw DomainError("config: unknown wind kind '" + c.wind_kind + "'");
  }
  sc.validate();
  return c;
}

ExplicitModelConfig parse_explicit(const json& m) {
  ExplicitModelConfig c;
  c.r0 = matrix_from_json(m.at("R0"), "R0");
  c.q0 = matrix_from_json(m.at("Q0"), "Q0");
  const auto u = m.at("utility").get<std::vector<double>>();
  c.utility = Eigen::Map<const Vector>(u.data(), static_cast<Index>(u.size()));
  c.basepoint = m.value("basepoint", Index{0});
  const Index d = c.r0.cols() * c.q0.cols();
  if (c.r0.rows() != d || c.q0.rows() != d || c.utility.size() != d) {
    throw DomainError("config: explicit model needs R0 (d x d_u), Q0 (d x d_n) and "
                      "utility (d) with d = d_u * d_n");
  }
  if (c.basepoint < 0 || c.basepoint >= d) {
    throw DomainError("config: basepoint out of range");
  }
  return c;
}

}  // namespace

ScenarioConfig parse_config(const json& j) {
  ScenarioConfig cfg;
  const json& m = j.at("model");
  const std::string kind = m.at("kind").get<std::string>();
  if (kind == "uav") {
    cfg.model = parse_uav(m);
  } else if (kind == "explicit") {
    cfg.model = parse_explicit(m);
  } else {
    throw DomainError("config: model kind must be \"uav\" or \"explicit\", got \"" + kind + "\"");
  }
  const json s = j.value("solver", json::object());
  cfg.solver.zeta_max = s.value("zeta_max", 0.0);
  cfg.solver.step = s.value("step", 0.01);
  cfg.solver.checkpoints = s.value("checkpoints", std::vector<double>{});
  cfg.solver.residual_tol = s.value("residual_tol", 1e-6);
  cfg.solver.poisson_tol = s.value("poisson_tol", 1e-6);

  const json v = j.value("validation", json::object());
  auto& val = cfg.validation;
  val.horizon = v.value("horizon", val.horizon);
  val.trials = v.value("trials", val.trials);
  val.horizon_cap = v.value("horizon_cap", val.horizon_cap);
  val.seed = v.value("seed", val.seed);
  val.threads = v.value("threads", val.threads);
  val.oracle_tol = v.value("oracle_tol", val.oracle_tol);
  val.fh_tol = v.value("fh_tol", val.fh_tol);
  val.pf_tol = v.value("pf_tol", val.pf_tol);
  val.pf_eta_tol = v.value("pf_eta_tol", val.pf_eta_tol);
  return cfg;
}

json to_json(const ScenarioConfig& cfg) {
  json model;
  if (const auto* u = std::get_if<UavModelConfig>(&cfg.model)) {
    const auto& sc = u->scenario;
    model = {{"kind", "uav"},
             {"d_a", sc.d_a},
             {"d_o", sc.d_o},
             {"d_N", sc.d_n},
             {"delta_n", sc.delta_n},
             {"sigma_u2", sc.sigma_u2},
             {"target", {sc.target[0] + 1, sc.target[1] + 1}},
             {"basepoint_wind_state", sc.basepoint_wind_state + 1}};
    if (u->wind_kind == "seeded") {
      model["wind"] = {{"kind", "seeded"}, {"seed", u->wind_seed}};
    } else {
      json table = json::array();
      for (Index n = 0; n < sc.d_n; ++n) {
        json layer = json::array();
        for (Index i = 0; i < sc.d_a; ++i) {
          json row = json::array();
          for (Index k = 0; k < sc.d_o; ++k) row.push_back(sc.wind.at(sc.cell(i, k), n));
          layer.push_back(std::move(row));
        }
        table.push_back(std::move(layer));
      }
      model["wind"] = {{"kind", "explicit"}, {"table", std::move(table)}};
    }
  } else {
    const auto& e = std::get<ExplicitModelConfig>(cfg.model);
    model = {{"kind", "explicit"},
             {"R0", matrix_to_json(e.r0)},
             {"Q0", matrix_to_json(e.q0)},
             {"utility", std::vector<double>(e.utility.begin(), e.utility.end())},
             {"basepoint", e.basepoint}};
  }
  const auto& s = cfg.solver;
  const auto& v = cfg.validation;
  return {{"model", std::move(model)},
          {"solver",
           {{"zeta_max", s.zeta_max},
            {"step", s.step},
            {"checkpoints", s.checkpoints},
            {"residual_tol", s.residual_tol},
            {"poisson_tol", s.poisson_tol}}},
          {"validation",
           {{"horizon", v.horizon},
            {"trials", v.trials},
            {"horizon_cap", v.horizon_cap},
            {"seed", v.seed},
            {"threads", v.threads},
            {"oracle_tol", v.oracle_tol},
            {"fh_tol", v.fh_tol},
            {"pf_tol", v.pf_tol},
            {"pf_eta_tol", v.pf_eta_tol}}}};
}

void apply_overrides(ScenarioConfig& cfg, const Overrides& o) {
  if (o.zeta_max) cfg.solver.zeta_max = *o.zeta_max;
  if (o.step) cfg.solver.step = *o.step;
  if (o.checkpoints) cfg.solver.checkpoints = *o.checkpoints;
  if (o.horizon) cfg.validation.horizon = *o.horizon;
  if (o.trials) cfg.validation.trials = *o.trials;
  if (o.threads) cfg.validation.threads = *o.threads;
  if (o.seed) {
    cfg.validation.seed = *o.seed;
    if (auto* u = std::get_if<UavModelConfig>(&cfg.model); u && u->wind_kind == "seeded") {
      u->wind_seed = *o.seed;
      const auto& sc = u->scenario;
      u->scenario.wind = uav::generate_wind_field(sc.d_a, sc.d_o, sc.d_n, *o.seed);
    }
  }
}

ScenarioConfig load_config(const fs::path& path, const Overrides& o) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DomainError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  ScenarioConfig cfg;
  try {
    cfg = parse_config(j);
  } catch (const json::exception& e) {
    throw DomainError("config " + path.string() + ": " + e.what());
  }
  apply_overrides(cfg, o);
  return cfg;
}

ModelInstance build_model(const ScenarioConfig& cfg) {
  if (const auto* u = std::get_if<UavModelConfig>(&cfg.model)) {
    uav::ScenarioModel m = uav::build_scenario_model(u->scenario);
    return ModelInstance{std::move(m.kernel), std::move(m.utility), m.basepoint, u->scenario};
  }
  const auto& e = std::get<ExplicitModelConfig>(cfg.model);
  FactoredKernel kernel(ProductStateSpace(e.r0.cols(), e.q0.cols()), StochasticMatrix(e.r0),
                        StochasticMatrix(e.q0));
  return ModelInstance{std::move(kernel), e.utility, e.basepoint, std::nullopt};
}

ScenarioConfig default_uav_config() {
  ScenarioConfig cfg;
  UavModelConfig u;
  u.scenario = uav::default_scenario(15, 15, 5, 0);
  cfg.model = std::move(u);
  cfg.solver.zeta_max = 2.0;
  cfg.solver.step = 0.01;
  cfg.solver.checkpoints = {0.0, 1.0, 2.0};
  // Hitting times near zeta = 0 make the start of the path steep; RK4 at
  // step 0.01 holds the AROE residual near 2e-4 on this grid.
  cfg.solver.residual_tol = 1e-3;
  return cfg;
}

// ---------------------------------------------------------------------------
// Output

std::string format_zeta(double zeta) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, zeta);
  return std::string(buf, r.ptr);
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Tracks written files so a failed run leaves nothing half-written.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
  }

  std::ofstream open(const std::string& name) {
    const fs::path p = root_ / name;
    written_.push_back(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  }

  void discard() {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    written_.clear();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : written_) out.push_back(p.filename().string());
    return out;
  }

 private:
  fs::path root_;
  std::vector<fs::path> written_;
};

/// Sparse triplets; entries below 1e-12 are dropped and the row renormalized.
void write_policy(std::ostream& out, const StochasticMatrix& rule) {
  out << "state_index,next_u_index,probability\n";
  for (Index x = 0; x < rule.rows(); ++x) {
    double kept = 0.0;
    for (Index u = 0; u < rule.cols(); ++u)
      if (rule(x, u) >= 1e-12) kept += rule(x, u);
    for (Index u = 0; u < rule.cols(); ++u) {
      if (rule(x, u) < 1e-12) continue;
      out << x << ',' << u << ',' << num(rule(x, u) / kept) << '\n';
    }
  }
}

class PhaseClock {
 public:
  void start(std::string name) {
    name_ = std::move(name);
    t0_ = std::chrono::steady_clock::now();
  }
  void stop(json& phases) {
    phases[name_] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point t0_;
};

json snaps_json(const ZetaGrid& grid) {
  json s = json::array();
  for (const auto& snap : grid.snaps())
    s.push_back({{"requested", snap.requested}, {"snapped", snap.snapped}});
  return s;
}

void write_manifest(OutputDir& dir, const ScenarioConfig& cfg, const std::string& command,
                    json phases, json snaps, const std::vector<std::string>& warnings,
                    double effective_step) {
  const json manifest = {{"command", command},
                         {"tool_version", kVersion},
                         {"config", to_json(cfg)},
                         {"effective_step", effective_step},
                         {"phases_seconds", std::move(phases)},
                         {"checkpoint_snaps", std::move(snaps)},
                         {"warnings", warnings},
                         {"files", dir.names()},
                         {"wind_boundary", "clamp"}};
  auto out = dir.open("manifest.json");
  out << manifest.dump(2) << '\n';
}

}  // namespace

int cmd_solve_ar(const ScenarioConfig& cfg, const fs::path& out_path, std::ostream& log) {
  OutputDir dir(out_path);
  try {
    json phases = json::object();
    PhaseClock clock;
    clock.start("build_model");
    const ModelInstance model = build_model(cfg);
    clock.stop(phases);

    clock.start("integrate");
    const ZetaSolutionPath path =
        solve_average_reward(model.kernel, model.utility, model.basepoint, cfg.solver);
    clock.stop(phases);

    clock.start("write");
    {
      auto eta = dir.open("eta.csv");
      eta << "zeta,eta,aroe_residual_sup\n";
      for (const auto& g : path.trajectory)
        eta << num(g.zeta) << ',' << num(g.eta) << ',' << num(g.aroe_residual_sup) << '\n';
    }
    const ProductStateSpace& space = model.kernel.space();
    for (const ArCheckpoint& c : path.checkpoints) {
      const std::string tag = format_zeta(c.zeta);
      {
        auto out = dir.open("values_zeta_" + tag + ".csv");
        out << "state_index,x_u,x_n,h,cost_to_go\n";
        for (Index x = 0; x < space.size(); ++x) {
          const auto [u, n] = space.unflatten(x);
          out << x << ',' << u << ',' << n << ',' << num(c.h[x]) << ',' << num(-c.h[x] + 0.0)
              << '\n';
        }
      }
      {
        auto out = dir.open("policy_zeta_" + tag + ".csv");
        write_policy(out, c.tilted_rule);
      }
      {
        auto out = dir.open("eigenvalues_zeta_" + tag + ".csv");
        out << "real,imag\n";
        for (const auto& z : uav::controlled_spectrum(c.controlled_P))
          out << num(z.real()) << ',' << num(z.imag()) << '\n';
      }
      if (model.scenario) {
        const auto& sc = *model.scenario;
        const Matrix v = uav::velocity_field(c.tilted_rule, sc);
        auto out = dir.open("velocity_zeta_" + tag + ".csv");
        out << "i,j,n,v_lat,v_lon\n";
        for (Index n = 0; n < sc.d_n; ++n) {
          for (Index i = 0; i < sc.d_a; ++i) {
            for (Index j = 0; j < sc.d_o; ++j) {
              const Index x = space.flatten(sc.cell(i, j), n);
              out << i + 1 << ',' << j + 1 << ',' << n + 1 << ',' << num(v(x, 0) + 0.0) << ','
                  << num(v(x, 1) + 0.0) << '\n';
            }
          }
        }
      }
    }
    clock.stop(phases);
    write_manifest(dir, cfg, "solve-ar", std::move(phases), snaps_json(path.grid), {},
                   path.grid.step());
    log << "solve-ar: " << path.checkpoints.size() << " checkpoints, "
        << path.trajectory.size() << " grid points written to " << out_path.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    dir.discard();
    log << "solve-ar failed: " << e.what() << '\n';
    return 1;
  }
}

int cmd_solve_fh(const ScenarioConfig& cfg, Index horizon, const fs::path& out_path,
                 std::ostream& log) {
  OutputDir dir(out_path);
  try {
    json phases = json::object();
    PhaseClock clock;
    clock.start("build_model");
    const ModelInstance model = build_model(cfg);
    clock.stop(phases);

    clock.start("integrate");
    const FiniteHorizonPath path =
        solve_finite_horizon(model.kernel, model.utility, horizon, cfg.solver);
    clock.stop(phases);

    clock.start("write");
    for (const FhCheckpoint& c : path.checkpoints) {
      const std::string tag = format_zeta(c.zeta);
      {
        auto out = dir.open("fh_values_zeta_" + tag + ".csv");
        out << "k,state_index,W\n";
        for (std::size_t k = 0; k < c.values.size(); ++k)
          for (Index x = 0; x < c.values[k].size(); ++x)
            out << k << ',' << x << ',' << num(c.values[k](x) + 0.0) << '\n';
      }
      for (std::size_t k = 0; k < c.policies.size(); ++k) {
        auto out = dir.open("fh_policy_k" + std::to_string(k) + "_zeta_" + tag + ".csv");
        write_policy(out, c.policies[k]);
      }
    }
    clock.stop(phases);
    write_manifest(dir, cfg, "solve-fh", std::move(phases), snaps_json(path.grid), {},
                   path.grid.step());
    log << "solve-fh: horizon " << horizon << ", " << path.checkpoints.size()
        << " checkpoints written to " << out_path.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    dir.discard();
    log << "solve-fh failed: " << e.what() << '\n';
    return 1;
  }
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Report {
 public:
  explicit Report(std::ostream& out) : out_(out) {
    out_ << "check                                    zeta        value        limit  status\n";
  }

  void check(const std::string& name, double zeta, double value, double limit) {
    const bool ok = value <= limit;
    all_ok_ = all_ok_ && ok;
    char line[200];
    std::snprintf(line, sizeof line, "%-40s %-8s %12.3e %12.3e  %s\n", name.c_str(),
                  format_zeta(zeta).c_str(), value, limit, ok ? "PASS" : "FAIL");
    out_ << line;
  }

  void fail(const std::string& name, const std::string& why) {
    all_ok_ = false;
    out_ << name << ": FAIL (" << why << ")\n";
  }

  void note(const std::string& text) { out_ << text << '\n'; }
  bool ok() const { return all_ok_; }

 private:
  std::ostream& out_;
  bool all_ok_ = true;
};

}  // namespace

int cmd_validate(const ScenarioConfig& cfg, std::ostream& os) {
  Report report(os);
  const ValidationConfig& v = cfg.validation;
  try {
    const ModelInstance model = build_model(cfg);
    const Matrix p0 = induced_transition(model.kernel).matrix();
    try {
      require_unichain_aperiodic(p0);
    } catch (const ChainStructureError& e) {
      report.fail("structure", e.what());
      return 1;
    }

    const ZetaSolutionPath path =
        solve_average_reward(model.kernel, model.utility, model.basepoint, cfg.solver);
    for (const ArCheckpoint& c : path.checkpoints) {
      report.check("aroe residual", c.zeta, c.aroe_residual_sup, cfg.solver.residual_tol);
      report.check("poisson residual", c.zeta, c.poisson_residual_sup, cfg.solver.poisson_tol);
      const AroeSolution oracle =
          aroe_fixed_point_oracle(model.kernel, model.utility, c.zeta, model.basepoint);
      report.check("ode vs fixed point: h", c.zeta,
                   (c.h.values() - oracle.h.values()).lpNorm<Eigen::Infinity>(), v.oracle_tol);
      report.check("ode vs fixed point: eta", c.zeta, std::abs(c.eta - oracle.eta),
                   v.oracle_tol);
    }

    const FiniteHorizonPath fh =
        solve_finite_horizon(model.kernel, model.utility, v.horizon, cfg.solver);
    for (const FhCheckpoint& c : fh.checkpoints) {
      const auto oracle = fh_backward_oracle(model.kernel, model.utility, c.zeta, v.horizon);
      double gap = 0.0;
      for (std::size_t k = 0; k < oracle.size(); ++k)
        gap = std::max(gap, (c.values[k] - oracle[k]).lpNorm<Eigen::Infinity>());
      report.check("finite horizon ode vs backward dp", c.zeta, gap, v.fh_tol);
    }

    if (model.kernel.space().nature_size() == 1) {
      if (analyze_chain(p0).irreducible()) {
        for (const ArCheckpoint& c : path.checkpoints) {
          const PerronFrobeniusResult pf = perron_frobenius_baseline(
              model.kernel.rule(), model.utility, c.zeta, model.basepoint);
          report.check("perron-frobenius vs ode: P", c.zeta,
                       (pf.twisted.matrix() - c.controlled_P.matrix()).cwiseAbs().maxCoeff(),
                       v.pf_tol);
          report.check("perron-frobenius vs ode: eta", c.zeta,
                       std::abs(pf.pair.log_lambda - c.eta), v.pf_eta_tol);
        }
      } else {
        report.note("perron-frobenius check skipped: nominal chain is not irreducible");
      }
    }

    if (model.scenario) {
      const auto& sc = *model.scenario;
      const Index corner = model.kernel.space().flatten(sc.cell(0, 0), 0);
      uav::RolloutOptions ro;
      ro.trials = v.trials;
      ro.horizon_cap = v.horizon_cap;
      ro.seed = v.seed;
      ro.threads = v.threads;
      for (const ArCheckpoint& c : path.checkpoints) {
        if (c.zeta == 0.0) continue;
        const uav::RolloutResult r =
            uav::rollout_oracle(model.kernel, c.tilted_rule, sc, c.zeta, corner, ro);
        if (!r.warning.empty()) report.note(r.warning);
        const double j = -c.h[corner];
        // Ratio of the gap to the 95% half-width; passes at 3.
        const double ratio =
            r.half_width_95 > 0 ? std::abs(r.mean - j) / r.half_width_95
                                : (std::abs(r.mean - j) <= 1e-12 ? 0.0 : INFINITY);
        report.check("rollout vs cost to go (half-widths)", c.zeta, ratio, 3.0);
      }
    }
  } catch (const std::exception& e) {
    report.fail("solver", e.what());
  }
  os << (report.ok() ? "validate: all checks passed\n" : "validate: FAILED\n");
  return report.ok() ? 0 : 1;
}

int cmd_gen_scenario(const ScenarioConfig& cfg, const std::optional<fs::path>& out,
                     std::ostream& stdout_stream) {
  const std::string text = to_json(cfg).dump(2) + "\n";
  if (!out) {
    stdout_stream << text;
    return 0;
  }
  if (out->has_parent_path()) fs::create_directories(out->parent_path());
  std::ofstream f(*out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out->string());
  f << text;
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, char** argv) {
  CLI::App app{"Action-constrained KL-cost MDP solver: ODE continuation in zeta"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::string out_path;
  Overrides o;
  double zeta_max = 0, step = 0;
  std::vector<double> checkpoints;
  Index horizon = 0, trials = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  auto add_solver_flags = [&](CLI::App* sub) {
    sub->add_option("--zeta-max", zeta_max, "Largest zeta to integrate to");
    sub->add_option("--step", step, "RK4 step in zeta");
    sub->add_option("--checkpoints", checkpoints, "Comma-separated zeta checkpoints")
        ->delimiter(',');
    sub->add_option("--seed", seed, "Wind field and rollout seed");
  };

  auto* ar = app.add_subcommand("solve-ar", "Average-reward family via the ODE in zeta");
  ar->add_option("--config", config_path, "Scenario config (JSON)")->required();
  ar->add_option("--out", out_path, "Output directory")->required();
  add_solver_flags(ar);

  auto* fh = app.add_subcommand("solve-fh", "Finite-horizon family via the block ODE");
  fh->add_option("--config", config_path, "Scenario config (JSON)")->required();
  fh->add_option("--out", out_path, "Output directory")->required();
  fh->add_option("--horizon", horizon, "Horizon T")->required();
  add_solver_flags(fh);

  auto* val = app.add_subcommand("validate", "Cross-check the ODE against independent oracles");
  val->add_option("--config", config_path, "Scenario config (JSON)")->required();
  val->add_option("--horizon", horizon, "Finite horizon used for the backward-DP check");
  val->add_option("--trials", trials, "Monte Carlo trials per rollout check");
  val->add_option("--threads", threads, "Rollout worker threads");
  add_solver_flags(val);

  auto* gen = app.add_subcommand("gen-scenario", "Write the default UAV scenario config");
  gen->add_option("--out", out_path, "Config file to write (stdout if omitted)");
  add_solver_flags(gen);

  CLI11_PARSE(app, argc, argv);

  auto collect = [&](CLI::App* sub) {
    if (sub->count("--zeta-max")) o.zeta_max = zeta_max;
    if (sub->count("--step")) o.step = step;
    if (sub->count("--checkpoints")) o.checkpoints = checkpoints;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->get_option_no_throw("--horizon") && sub->count("--horizon")) o.horizon = horizon;
    if (sub->get_option_no_throw("--trials") && sub->count("--trials")) o.trials = trials;
    if (sub->get_option_no_throw("--threads") && sub->count("--threads")) o.threads = threads;
  };

  try {
    if (*gen) {
      collect(gen);
      ScenarioConfig cfg = default_uav_config();
      apply_overrides(cfg, o);
      std::optional<fs::path> target;
      if (!out_path.empty()) target = out_path;
      return cmd_gen_scenario(cfg, target, std::cout);
    }
    CLI::App* sub = *ar ? ar : (*fh ? fh : val);
    collect(sub);
    const ScenarioConfig cfg = load_config(config_path, o);
    if (*ar) return cmd_solve_ar(cfg, out_path, std::cerr);
    if (*fh) return cmd_solve_fh(cfg, horizon, out_path, std::cerr);
    return cmd_validate(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace klmdp::cli
