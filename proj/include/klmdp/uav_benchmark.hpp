#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "klmdp/kl_calculus.hpp"
#include "klmdp/state_space.hpp"

namespace klmdp::uav {

/// Wind displacement per (cell, wind state), components in {-1, 0, 1}.
/// Cells are indexed row-major: cell = i * d_o + j with i the latitude index.
class WindField {
 public:
  using Shift = std::array<int, 2>;

  WindField(Index d_a, Index d_o, Index d_n, std::vector<Shift> table)
      : d_a_(d_a), d_o_(d_o), d_n_(d_n), table_(std::move(table)) {
    if (d_a_ < 1 || d_o_ < 1 || d_n_ < 1) {
      throw DomainError("WindField: dimensions must be positive");
    }
    if (static_cast<Index>(table_.size()) != d_a_ * d_o_ * d_n_) {
      throw DomainError("WindField: table must have d_a * d_o * d_N entries");
    }
    for (const Shift& s : table_) {
      for (int c : s) {
        if (c < -1 || c > 1) {
          throw DomainError("WindField: displacement component " +
                            std::to_string(c) + " outside {-1, 0, 1}");
        }
      }
    }
  }

  static WindField calm(Index d_a, Index d_o, Index d_n) {
    return WindField(d_a, d_o, d_n,
                     std::vector<Shift>(static_cast<std::size_t>(d_a * d_o * d_n),
                                        Shift{0, 0}));
  }

  Index lat_count() const { return d_a_; }
  Index lon_count() const { return d_o_; }
  Index wind_states() const { return d_n_; }
  const Shift& at(Index cell, Index n) const {
    return table_[static_cast<std::size_t>(n * d_a_ * d_o_ + cell)];
  }
  const std::vector<Shift>& table() const { return table_; }

 private:
  Index d_a_, d_o_, d_n_;
  std::vector<Shift> table_;  // [n][cell]
};

struct UavScenario {
  Index d_a = 15;
  Index d_o = 15;
  Index d_n = 5;
  double delta_n = 0.05;
  double sigma_u2 = 0.5;
  /// 0-based target cell (lat, lon).
  std::array<Index, 2> target{14, 14};
  WindField wind = WindField::calm(15, 15, 5);
  /// Wind state of the basepoint (target, n).
  Index basepoint_wind_state = 0;

  Index location_count() const { return d_a * d_o; }
  Index cell(Index i, Index j) const { return i * d_o + j; }
  Index target_cell() const { return cell(target[0], target[1]); }
  ProductStateSpace space() const { return {location_count(), d_n}; }
  Index basepoint() const {
    return space().flatten(target_cell(), basepoint_wind_state);
  }

  void validate() const {
    if (d_a < 2 || d_o < 2) throw DomainError("UavScenario: grid must be at least 2x2");
    if (d_n < 1) throw DomainError("UavScenario: d_N must be >= 1");
    if (!(delta_n > 0.0 && delta_n < 1.0)) {
      throw DomainError("UavScenario: delta_n must lie in (0, 1)");
    }
    if (!(sigma_u2 > 0.0)) throw DomainError("UavScenario: sigma_u2 must be > 0");
    if (target[0] < 0 || target[0] >= d_a || target[1] < 0 || target[1] >= d_o) {
      throw DomainError("UavScenario: target outside the grid");
    }
    if (basepoint_wind_state < 0 || basepoint_wind_state >= d_n) {
      throw DomainError("UavScenario: basepoint wind state out of range");
    }
    if (wind.lat_count() != d_a || wind.lon_count() != d_o ||
        wind.wind_states() != d_n) {
      throw DomainError("UavScenario: wind field dimensions do not match");
    }
  }
};

/// Skip-free symmetric walk on {0, ..., d_N - 1} with wraparound:
/// Q0(n, n +- 1) = delta / 2, Q0(n, n) = 1 - delta.
inline StochasticMatrix build_wind_chain(Index d_n, double delta) {
  if (d_n < 2) throw DomainError("build_wind_chain: d_N must be >= 2");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError("build_wind_chain: delta_n must lie in (0, 1)");
  }
  Matrix q = Matrix::Zero(d_n, d_n);
  for (Index n = 0; n < d_n; ++n) {
    q(n, n) += 1.0 - delta;
    q(n, (n + 1) % d_n) += 0.5 * delta;
    q(n, (n + d_n - 1) % d_n) += 0.5 * delta;
  }
  return StochasticMatrix(std::move(q));
}

/// Nominal decision rule over next locations. Row (l, n) is a Gaussian in
/// l' centred at l + omega(l, n) (clamped to the grid) and renormalized over
/// the grid. Target rows are a point mass at the target.
inline StochasticMatrix build_nominal_rule(const UavScenario& sc) {
  sc.validate();
  const ProductStateSpace space = sc.space();
  const Index d_l = sc.location_count();
  const double scale = 1.0 / (2.0 * sc.sigma_u2);
  Matrix r = Matrix::Zero(space.size(), d_l);
  for (Index i = 0; i < sc.d_a; ++i) {
    for (Index j = 0; j < sc.d_o; ++j) {
      const Index l = sc.cell(i, j);
      for (Index n = 0; n < sc.d_n; ++n) {
        const Index x = space.flatten(l, n);
        if (l == sc.target_cell()) {
          r(x, l) = 1.0;
          continue;
        }
        const auto& w = sc.wind.at(l, n);
        const Index ci = std::clamp<Index>(i + w[0], 0, sc.d_a - 1);
        const Index cj = std::clamp<Index>(j + w[1], 0, sc.d_o - 1);
        for (Index a = 0; a < sc.d_a; ++a) {
          for (Index b = 0; b < sc.d_o; ++b) {
            const double da = static_cast<double>(a - ci);
            const double db = static_cast<double>(b - cj);
            r(x, sc.cell(a, b)) = std::exp(-scale * (da * da + db * db));
          }
        }
      }
    }
  }
  return StochasticMatrix::normalized(std::move(r));
}

struct ScenarioModel {
  FactoredKernel kernel;
  /// U(l, n) = -1{l != target}.
  Vector utility;
  Index basepoint;
};

inline ScenarioModel build_scenario_model(const UavScenario& sc) {
  sc.validate();
  const ProductStateSpace space = sc.space();
  const StochasticMatrix wind = build_wind_chain(sc.d_n, sc.delta_n);
  Matrix q(space.size(), sc.d_n);
  Vector utility(space.size());
  for (Index l = 0; l < sc.location_count(); ++l) {
    for (Index n = 0; n < sc.d_n; ++n) {
      const Index x = space.flatten(l, n);
      q.row(x) = wind.matrix().row(n);
      utility(x) = l == sc.target_cell() ? 0.0 : -1.0;
    }
  }
  return ScenarioModel{
      FactoredKernel(space, build_nominal_rule(sc), StochasticMatrix(std::move(q))),
      std::move(utility), sc.basepoint()};
}

/// J(x) = -h(x).
inline Vector cost_to_go(const ValueFunction& h) { return -h.values(); }

/// v(l, n) = E[L' - L | L = l, N = n]; row x of the result is (v_lat, v_lon).
inline Matrix velocity_field(const StochasticMatrix& rule, const UavScenario& sc) {
  const ProductStateSpace space = sc.space();
  if (rule.rows() != space.size() || rule.cols() != sc.location_count()) {
    throw DomainError("velocity_field: rule must be d x d_L");
  }
  Vector lat(sc.location_count()), lon(sc.location_count());
  for (Index i = 0; i < sc.d_a; ++i) {
    for (Index j = 0; j < sc.d_o; ++j) {
      lat(sc.cell(i, j)) = static_cast<double>(i);
      lon(sc.cell(i, j)) = static_cast<double>(j);
    }
  }
  Matrix v(space.size(), 2);
  for (Index x = 0; x < space.size(); ++x) {
    const Index l = space.unflatten(x).first;
    v(x, 0) = rule.matrix().row(x).dot(lat) - lat(l);
    v(x, 1) = rule.matrix().row(x).dot(lon) - lon(l);
  }
  return v;
}

/// All eigenvalues, sorted by modulus, then real part, then imaginary part,
/// all descending.
inline std::vector<std::complex<double>> controlled_spectrum(const Matrix& p) {
  if (p.rows() != p.cols()) throw DomainError("controlled_spectrum: not square");
  Eigen::EigenSolver<Matrix> es(p, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw ConvergenceError("controlled_spectrum: eigensolver failed");
  }
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(),
                                       es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return ev;
}

inline std::vector<std::complex<double>> controlled_spectrum(
    const StochasticMatrix& p) {
  return controlled_spectrum(p.matrix());
}

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 on an explicit counter; stream (seed, key) is reproducible
/// regardless of how work is split across threads.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t key)
      : state_(mix(seed ^ mix(key + 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Wind field generation

/// Smooth field evaluated at (lat index, lon index, wind state).
using SmoothWind = std::function<std::array<double, 2>(double, double, Index)>;

/// Rounds each component to the nearest integer and clamps to {-1, 0, 1}.
inline WindField quantize_wind_field(Index d_a, Index d_o, Index d_n,
                                     const SmoothWind& field) {
  std::vector<WindField::Shift> table;
  table.reserve(static_cast<std::size_t>(d_a * d_o * d_n));
  for (Index n = 0; n < d_n; ++n) {
    for (Index i = 0; i < d_a; ++i) {
      for (Index j = 0; j < d_o; ++j) {
        const auto f = field(static_cast<double>(i), static_cast<double>(j), n);
        WindField::Shift s{};
        for (int c = 0; c < 2; ++c) {
          s[c] = static_cast<int>(std::clamp(std::nearbyint(f[c]), -1.0, 1.0));
        }
        table.push_back(s);
      }
    }
  }
  return WindField(d_a, d_o, d_n, std::move(table));
}

/// Per wind state and component, a sum of two low-frequency plane-wave
/// harmonics with seeded amplitudes, directions and phases, quantized to the
/// lattice.
inline WindField generate_wind_field(Index d_a, Index d_o, Index d_n,
                                     std::uint64_t seed) {
  struct Harmonic {
    double amplitude, freq_lat, freq_lon, phase;
  };
  std::vector<std::array<std::array<Harmonic, 2>, 2>> coeffs(
      static_cast<std::size_t>(d_n));
  for (Index n = 0; n < d_n; ++n) {
    CounterRng rng(seed, static_cast<std::uint64_t>(n));
    for (auto& component : coeffs[n]) {
      for (auto& h : component) {
        h.amplitude = 0.4 + 0.8 * rng.uniform();
        h.freq_lat = rng.uniform();
        h.freq_lon = rng.uniform();
        h.phase = 2.0 * std::numbers::pi * rng.uniform();
      }
    }
  }
  const double span_a = static_cast<double>(std::max<Index>(d_a - 1, 1));
  const double span_o = static_cast<double>(std::max<Index>(d_o - 1, 1));
  return quantize_wind_field(
      d_a, d_o, d_n, [&](double i, double j, Index n) {
        std::array<double, 2> out{};
        for (int c = 0; c < 2; ++c) {
          for (const Harmonic& h : coeffs[n][c]) {
            out[c] += h.amplitude *
                      std::sin(std::numbers::pi *
                                   (h.freq_lat * i / span_a + h.freq_lon * j / span_o) +
                               h.phase);
          }
        }
        return out;
      });
}

inline UavScenario default_scenario(Index d_a = 15, Index d_o = 15,
                                    Index d_n = 5, std::uint64_t seed = 0) {
  UavScenario sc;
  sc.d_a = d_a;
  sc.d_o = d_o;
  sc.d_n = d_n;
  sc.target = {d_a - 1, d_o - 1};
  sc.wind = generate_wind_field(d_a, d_o, d_n, seed);
  return sc;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct RolloutOptions {
  Index trials = 10000;
  Index horizon_cap = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RolloutResult {
  double mean = 0.0;
  double half_width_95 = 0.0;
  Index trials = 0;
  Index censored = 0;
  /// Non-empty when more than 1% of paths hit the horizon cap.
  std::string warning;
};

/// Simulates the controlled chain from `start` and accumulates
/// zeta c(L_t) + c_KL(X_t, rule) until the location first hits the target.
inline RolloutResult rollout_oracle(const FactoredKernel& model,
                                    const StochasticMatrix& rule,
                                    const UavScenario& sc, double zeta,
                                    Index start, const RolloutOptions& opts = {}) {
  const ProductStateSpace space = model.space();
  if (rule.rows() != space.size() || rule.cols() != space.controlled_size()) {
    throw DomainError("rollout_oracle: rule shape mismatch");
  }
  if (start < 0 || start >= space.size()) {
    throw DomainError("rollout_oracle: start state out of range");
  }
  if (opts.trials < 1) throw DomainError("rollout_oracle: trials must be >= 1");

  RolloutResult out;
  out.trials = opts.trials;
  const Index target = sc.target_cell();
  if (space.unflatten(start).first == target) return out;

  const Vector kl = kl_step_cost(rule, model.rule());
  Matrix rule_cdf = rule.matrix();
  Matrix nature_cdf = model.nature().matrix();
  for (Index x = 0; x < space.size(); ++x) {
    for (Index u = 1; u < rule_cdf.cols(); ++u) rule_cdf(x, u) += rule_cdf(x, u - 1);
    for (Index n = 1; n < nature_cdf.cols(); ++n)
      nature_cdf(x, n) += nature_cdf(x, n - 1);
  }
  auto draw = [](const Matrix& cdf, Index row, double u) {
    const Index last = cdf.cols() - 1;
    for (Index k = 0; k < last; ++k)
      if (u < cdf(row, k)) return k;
    return last;
  };

  std::vector<double> cost(static_cast<std::size_t>(opts.trials), 0.0);
  std::vector<char> censored(static_cast<std::size_t>(opts.trials), 0);
  auto run = [&](Index first, Index stride) {
    for (Index t = first; t < opts.trials; t += stride) {
      CounterRng rng(opts.seed, static_cast<std::uint64_t>(t));
      Index x = start;
      double acc = 0.0;
      Index steps = 0;
      while (space.unflatten(x).first != target) {
        if (steps == opts.horizon_cap) {
          censored[t] = 1;
          break;
        }
        acc += zeta + kl(x);
        const Index l_next = draw(rule_cdf, x, rng.uniform());
        const Index n_next = draw(nature_cdf, x, rng.uniform());
        x = space.flatten(l_next, n_next);
        ++steps;
      }
      cost[t] = acc;
    }
  };
  const unsigned threads = std::max(1u, opts.threads);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(run, k, threads);
  }

  double sum = 0.0;
  for (double c : cost) sum += c;
  out.mean = sum / static_cast<double>(opts.trials);
  double ss = 0.0;
  for (double c : cost) ss += (c - out.mean) * (c - out.mean);
  const double var =
      opts.trials > 1 ? ss / static_cast<double>(opts.trials - 1) : 0.0;
  out.half_width_95 = 1.96 * std::sqrt(var / static_cast<double>(opts.trials));
  for (char c : censored) out.censored += c;
  if (static_cast<double>(out.censored) > 0.01 * static_cast<double>(opts.trials)) {
    out.warning = "rollout: " + std::to_string(out.censored) + " of " +
                  std::to_string(opts.trials) +
                  " paths censored at the horizon cap; estimate is biased low";
  }
  return out;
}

}  // namespace klmdp::uav
