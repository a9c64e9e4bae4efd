// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include "levyflow/experiments.hpp"
#include "levyflow/resolvent.hpp"
#include "levyflow/studies.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

using namespace levyflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string series(const std::vector<double>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.3e", v[i]);
  return s + "}";
}

std::vector<double> ratios(const std::vector<double>& v) {
  std::vector<double> r;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) r.push_back(v[i] / v[i + 1]);
  return r;
}

bool all_in(const std::vector<double>& v, double lo, double hi) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x >= lo && x <= hi; });
}

Vec v1(double x) { return Vec::Constant(1, x); }

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

// 1 -------------------------------------------------------------------------
Outcome noise_law() {
  int checks = 0;
  int inside = 0;
  double worst = 0.0;
  std::uint64_t seed = 100;
  for (const double alpha : {0.7, 1.0, 1.5}) {
    for (const int d : {1, 2}) {
      std::vector<Vec> xi;
      for (const double r : {0.5, 1.0, 2.0}) xi.push_back(d == 1 ? v1(r) : v2(0.6 * r, 0.8 * r));
      const auto spec = StableSpec::make(alpha, 1.0, d, SimulationMode::ExactIncrement);
      const SymbolReport rep = validate_symbol(spec, xi, 100000, ++seed);
      for (const auto& c : rep.checks) {
        ++checks;
        inside += c.within_3se;
        worst = std::max(worst, c.deviation / c.std_error);
      }
    }
  }
  return {inside == checks, std::to_string(inside) + "/" + std::to_string(checks) +
                                " within 3 SE, worst " + fmt("%.2f", worst) + " SE"};
}

// 2 -------------------------------------------------------------------------
Outcome zero_drift_identities() {
  const auto spec = StableSpec::make(1.3, 1.0, 2);
  const DriftField b = zero_field(2);
  const InitialDatum u0 = function_datum(
      "wave", [](const Vec& x) { return std::sin(x(0)) * std::cos(2.0 * x(1)) + 0.3 * x(0); }, 10.0);
  double forward = 0.0, inverse = 0.0, deriv = 0.0, logj = 0.0, transport = 0.0;
  for (std::size_t p = 0; p < 10; ++p) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, 1.0, 0.01, stream_seed(2, p)));
    const auto L = grid.noise_values();
    CounterRng rng(stream_seed(20, p));
    const Vec x = v2(4.0 * rng.uniform_open() - 2.0, 4.0 * rng.uniform_open() - 2.0);
    const Trajectory X = solve_forward(b, x, grid);
    const std::size_t last = grid.nodes() - 1;
    const auto Y = inverse_flow(b, x, grid, last);
    const auto M = derivative_flow_variational(b, x, grid).matrices;
    const auto lj = log_jacobian(b, x, grid);
    const TransportSolution sol = solve(b, u0, grid, {}, Lattice::midpoint(2, -1, 1, 0.5), Exec::Serial);
    for (std::size_t k = 0; k <= last; ++k) {
      forward = std::max(forward, (X[k] - (x + L[k])).norm());
      inverse = std::max(inverse, (Y[k] - (x - (L[last] - L[k]))).norm());
      deriv = std::max(deriv, (M[k] - Mat::Identity(2, 2)).cwiseAbs().maxCoeff());
      logj = std::max(logj, std::abs(lj[k]));
      if (k % 10 == 0) transport = std::max(transport, std::abs(sol.value(k, x) - u0(x - L[k])));
    }
  }
  const double worst = std::max({forward, inverse, deriv, logj, transport});
  return {worst <= 1e-12, "max deviations forward " + fmt("%.1e", forward) + ", inverse " + fmt("%.1e", inverse) +
                              ", DX " + fmt("%.1e", deriv) + ", log J " + fmt("%.1e", logj) + ", u " +
                              fmt("%.1e", transport)};
}

// 3 -------------------------------------------------------------------------
Outcome round_trip_order() {
  const auto spec = StableSpec::make(1.5, 1.0, 1);
  std::vector<Vec> pts;
  const Lattice lat = Lattice::nodes(1, -1.0, 1.0, 21);
  for (std::size_t i = 0; i < lat.size(); ++i) pts.push_back(lat.point(i));
  EnsembleSettings ens;
  ens.n_paths = 50;
  ens.master_seed = 3;
  const LevelSeries s = roundtrip_study(trig_field(1, 1.0, 1.0), spec, pts, 1.0, 0.002, 3, ens);
  const auto r = ratios(s.values);
  return {all_in(r, 1.5, 3.0), "medians " + series(s.values) + ", ratios " + series(r)};
}

// 4 -------------------------------------------------------------------------
Outcome semiflow() {
  const auto spec = StableSpec::make(1.5, 1.0, 1);
  const DriftField fields[] = {trig_field(1, 1.0, 1.0), counterexample_field(0.6, 1.0)};
  double worst = 0.0;
  CounterRng rng(4);
  for (int c = 0; c < 100; ++c) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, 1.0, 0.01, stream_seed(4, c)));
    const auto pick = [&] { return static_cast<std::size_t>(rng.uniform_open() * static_cast<double>(grid.nodes())); };
    std::size_t idx[3] = {pick(), pick(), pick()};
    std::sort(idx, idx + 3);
    const Vec x = v1(4.0 * rng.uniform_open() - 2.0);
    worst = std::max(worst, semiflow_defect(fields[c % 2], grid, idx[0], idx[1], idx[2], x));
  }
  return {worst <= 1e-12, "max defect " + fmt("%.2e", worst) + " over 100 cases"};
}

// 5 -------------------------------------------------------------------------
Outcome measure_preservation() {
  const auto spec = StableSpec::make(1.2, 1.0, 2);
  Mat rot(2, 2);
  rot << 0.0, -1.0, 1.0, 0.0;
  const DriftField b = linear_field(rot);
  double worst_ratio = 0.0;
  for (std::size_t p = 0; p < 20; ++p) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, 1.0, 1e-3, stream_seed(5, p)));
    const double dt = grid.max_cell();
    const auto M = derivative_flow_variational(b, v2(0.3, -0.2), grid).matrices;
    for (const Mat& m : M) worst_ratio = std::max(worst_ratio, std::abs(m.determinant() - 1.0) / dt);
  }
  return {worst_ratio <= 5.0, "max |J - 1| / dt = " + fmt("%.3f", worst_ratio)};
}

// 6 -------------------------------------------------------------------------
Outcome resolvent_exactness() {
  const TorusGrid grid = TorusGrid::make(2.0 * M_PI, 64, 1);
  const auto a1 = StableSpec::make(1.0, 1.0, 1);
  const SpectralField f = sample_spectral(grid, [](const Vec& x) { return std::cos(x(0)); });
  const auto sol = solve_resolvent(1.0, a1, zero_field(1), f);
  const auto v = inverse_transform(sol.v);
  double cos_err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) cos_err = std::max(cos_err, std::abs(v[i] - 0.5 * std::cos(grid.node(i)(0))));

  double max_principle = -1.0;
  CounterRng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const double lambda = 0.1 + 10.0 * rng.uniform_open();
    std::vector<double> amp(6), phase(6);
    for (int m = 0; m < 6; ++m) {
      amp[m] = 2.0 * rng.uniform_open() - 1.0;
      phase[m] = 2.0 * M_PI * rng.uniform_open();
    }
    const SpectralField g = sample_spectral(grid, [&](const Vec& x) {
      double s = 0.0;
      for (int m = 0; m < 6; ++m) s += amp[m] * std::cos(m * x(0) + phase[m]);
      return s;
    });
    const auto vals = inverse_transform(resolvent_free(lambda, a1, g));
    const auto fvals = inverse_transform(g);
    double vmax = 0.0, fmax = 0.0;
    for (double y : vals) vmax = std::max(vmax, std::abs(y));
    for (double y : fvals) fmax = std::max(fmax, std::abs(y));
    max_principle = std::max(max_principle, lambda * vmax - fmax);
  }

  const auto a15 = StableSpec::make(1.5, 1.0, 1);
  const TorusGrid g128 = TorusGrid::make(2.0 * M_PI, 128, 1);
  const DriftField b = trig_field(1, 1.0, 1.0, M_PI / 2.0);  // cos
  const double lambda = ito_tanaka_lambda_search(b, a15, g128).lambda;
  const SpectralField target = sample_spectral(g128, [](const Vec& x) { return std::sin(x(0)); });
  const auto gen = inverse_transform(apply_generator(a15, target));
  std::vector<double> fv(g128.size());
  for (std::size_t i = 0; i < g128.size(); ++i) {
    const double x = g128.node(i)(0);
    fv[i] = lambda * std::sin(x) - gen[i] - std::cos(x) * std::cos(x);
  }
  const auto manufactured = solve_resolvent(lambda, a15, b, transform(g128, fv), 1e-8);
  const auto mv = inverse_transform(manufactured.v);
  double recover = 0.0;
  for (std::size_t i = 0; i < g128.size(); ++i) recover = std::max(recover, std::abs(mv[i] - std::sin(g128.node(i)(0))));

  const bool pass = cos_err <= 1e-12 && max_principle <= 1e-10 && recover <= 1e-8;
  return {pass, "cos/2 error " + fmt("%.1e", cos_err) + ", max(lambda|v| - |f|) " + fmt("%.1e", max_principle) +
                    ", manufactured error " + fmt("%.1e", recover) + " at lambda " + fmt("%g", lambda)};
}

// 7 -------------------------------------------------------------------------
Outcome ito_tanaka() {
  const auto spec = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.5, SmallJumpPolicy::Gaussian);
  EnsembleSettings ens;
  ens.n_paths = 20;
  ens.master_seed = 7;
  const ConjugationStudy s = conjugation_study(trig_field(1, 0.1, 1.0), spec, TorusGrid::make(2.0 * M_PI, 128, 1),
                                               v1(0.3), 1.0, 0.0025, 3, ens);
  const auto r = ratios(s.defects.values);
  const bool bounds = s.search.du_norm <= 1.0 / 3.0 && s.min_singular >= 2.0 / 3.0 && s.max_singular <= 4.0 / 3.0;
  return {bounds && all_in(r, 1.5, 3.0),
          "lambda " + fmt("%g", s.search.lambda) + ", |Du| " + fmt("%.4f", s.search.du_norm) + ", sigma in [" +
              fmt("%.3f", s.min_singular) + ", " + fmt("%.3f", s.max_singular) + "], defects " +
              series(s.defects.values) + ", ratios " + series(r)};
}

// 8 -------------------------------------------------------------------------
ResidualSetting bump_setting() {
  return {bump_datum(v1(0.0), 1.5), bump_test_function(v1(0.2), 1.0), 0.05};
}

Outcome perturbative_order() {
  const auto spec = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.5);
  const DriftField b = prepared_drift(counterexample_field(0.6, 4.0), 0.1);
  EnsembleSettings ens;
  ens.n_paths = 5;
  ens.master_seed = 81;
  const LevelSeries s = perturbative_study(b, spec, bump_setting(), 0.5, 0.0025, 4, ens);
  const ConvergenceTable t = fit_convergence(s.steps, s.values);
  return {t.order >= 0.8, "order " + t.order_text() + ", medians " + series(s.values)};
}

Outcome weak_order() {
  EnsembleSettings ens;
  ens.n_paths = 5;
  ens.master_seed = 82;
  const LevelSeries s = weak_study(trig_field(1, 1.0, 1.0), 1.5, 1.0, bump_setting(), 0.5, 0.0025, 4, ens);
  const ConvergenceTable t = fit_convergence(s.steps, s.values);
  return {t.order >= 0.8, "order " + t.order_text() + ", medians " + series(s.values)};
}

// 9 -------------------------------------------------------------------------
Outcome regularization() {
  const std::vector<double> perts = {1e-2, 1e-4, 1e-6};
  const auto quiet = nonuniqueness_demo(0.5, 4.0, std::nullopt, perts, 1, 2.0, 1e-3, 9);
  const auto noisy = nonuniqueness_demo(0.5, 4.0, StableSpec::make(1.5, 1.0, 1), perts, 100, 2.0, 1e-3, 9);
  double quiet_min = INFINITY;
  for (const auto& c : quiet.curves) quiet_min = std::min(quiet_min, c.final_median);
  std::vector<double> finals;
  for (const auto& c : noisy.curves) finals.push_back(c.final_median);
  const bool decreasing = finals[1] < finals[0] && finals[2] < finals[1];
  return {quiet_min >= 3.8 && decreasing,
          "noiseless min separation " + fmt("%.4f", quiet_min) + ", noisy medians " + series(finals)};
}

// 10 ------------------------------------------------------------------------
Outcome moment_slope() {
  EnsembleSettings ens;
  ens.n_paths = 2000;
  ens.base_dt = 1e-3;
  ens.master_seed = 10;
  const MomentStudy m = moment_study(counterexample_field(0.6, 1.0), StableSpec::make(1.5, 1.0, 1), v1(0.0),
                                     {1e-1, 1e-2, 1e-3}, 2.0, ens);
  std::vector<double> means;
  for (const auto& e : m.moments) means.push_back(e.mean);
  return {m.slope >= 1.7 && m.slope <= 2.3, "slope " + fmt("%.3f", m.slope) + ", moments " + series(means)};
}

// 11 ------------------------------------------------------------------------
Outcome stability() {
  EnsembleSettings ens;
  ens.n_paths = 500;
  ens.base_dt = 1e-3;
  ens.master_seed = 11;
  std::vector<Vec> pts;
  for (const double x : {-0.5, -0.1, 0.0, 0.1, 0.5}) pts.push_back(v1(x));
  const SweepStudy s = stability_study(counterexample_field(0.6, 1.0), StableSpec::make(1.5, 1.0, 1),
                                       {0.2, 0.1, 0.05}, 4.0, pts, 2.0, ens);
  bool pass = true;
  for (std::size_t i = 1; i < s.values.size(); ++i) pass = pass && s.values[i] <= 1.1 * s.values[i - 1];
  return {pass, "E sup|phi^eps - phi^eps/4|^2 " + series(s.values)};
}

// 12 ------------------------------------------------------------------------
Outcome commutator_vanishing() {
  EnsembleSettings ens;
  ens.n_paths = 20;
  ens.horizon = 0.5;
  ens.base_dt = 1e-3;
  ens.master_seed = 12;
  const SweepStudy s = commutator_study(counterexample_field(0.7, 1.0), StableSpec::make(1.5, 1.0, 1),
                                        {0.2, 0.1, 0.05, 0.025}, CommutatorSetting{}, ens);
  bool decreasing = true;
  for (std::size_t i = 1; i < s.values.size(); ++i) decreasing = decreasing && s.values[i] < s.values[i - 1];
  const double last_share = s.values.back() / s.values.front();
  return {decreasing && last_share < 0.1,
          "mean |pairing| " + series(s.values) + ", last/first " + fmt("%.3f", last_share)};
}

// 13 ------------------------------------------------------------------------
Outcome sobolev_diagnostic() {
  EnsembleSettings ens;
  ens.n_paths = 50;
  ens.base_dt = 0.01;
  ens.master_seed = 13;
  const SweepStudy s = sobolev_study(counterexample_field(0.7, 1.0), StableSpec::make(1.5, 1.0, 1), {0.2, 0.1, 0.05},
                                     SobolevSetting{}, ens);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  const double spread = *hi / *lo;
  return {spread < 2.0, "seminorms " + series(s.values) + ", max/min " + fmt("%.3f", spread)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "noise law", noise_law},
      {2, "b = 0 identities", zero_drift_identities},
      {3, "round trip order", round_trip_order},
      {4, "semiflow defect", semiflow},
      {5, "measure preservation", measure_preservation},
      {6, "resolvent exactness", resolvent_exactness},
      {7, "Ito-Tanaka bounds and conjugation", ito_tanaka},
      {8, "perturbative residual order", perturbative_order},
      {8, "weak residual order", weak_order},
      {9, "regularization by noise", regularization},
      {10, "moment slope", moment_slope},
      {11, "stability sweep", stability},
      {12, "commutator vanishing", commutator_vanishing},
      {13, "Sobolev diagnostic", sobolev_diagnostic},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s  %2d  %-36s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
