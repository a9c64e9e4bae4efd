#include "doctest.h"

#include "levyflow/levy_noise.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace levyflow;

namespace {

// int_0^inf (1 - cos r) r^{-1-a} dr; Gamma reflection form, pi/2 at a = 1.
double one_d_cosine_moment(double a) {
  if (a == 1.0) return std::numbers::pi / 2.0;
  return -std::tgamma(-a) * std::cos(std::numbers::pi * a / 2.0);
}

StableSpec unit_density(double alpha, int dim, double delta, SmallJumpPolicy policy) {
  StableSpec s = StableSpec::make(alpha, 1.0, dim, SimulationMode::JumpDecomposition, delta, policy);
  s.levy_density_constant = 1.0;
  return s;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("density constant agrees with the 1D cosine integral") {
  for (double a : {0.5, 0.7, 1.0, 1.5, 1.9}) {
    const double k = density_constant_for(a, 1.0, 1);
    CHECK(k * 2.0 * one_d_cosine_moment(a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(density_constant_for(1.0, 1.0, 1) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
}

TEST_CASE("symbol reconstructed by quadrature matches c_alpha |xi|^alpha") {
  for (int d : {1, 2, 3}) {
    for (double a : {0.7, 1.0, 1.5}) {
      const StableSpec s = StableSpec::make(a, 0.8, d);
      for (double xi : {0.5, 1.0, 3.0})
        CHECK(reconstruct_symbol(s, xi) == doctest::Approx(0.8 * std::pow(xi, a)).epsilon(1e-6));
    }
  }
}

TEST_CASE("sphere areas") {
  CHECK(sphere_area(1) == doctest::Approx(2.0));
  CHECK(sphere_area(2) == doctest::Approx(2.0 * std::numbers::pi));
  CHECK(sphere_area(3) == doctest::Approx(4.0 * std::numbers::pi));
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(StableSpec::make(2.0, 1.0, 1), Error);
  CHECK_THROWS_AS(StableSpec::make(0.0, 1.0, 1), Error);
  CHECK_THROWS_AS(StableSpec::make(1.0, -1.0, 1), Error);
  CHECK_THROWS_AS(StableSpec::make(1.0, 1.0, 1, SimulationMode::JumpDecomposition, 1.5), Error);
  try {
    StableSpec::make(2.5, 1.0, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidSpec);
  }
}

TEST_CASE("radial integrals against nu") {
  const StableSpec s = unit_density(1.0, 1, 1.0, SmallJumpPolicy::Gaussian);
  CHECK(nu_radial_integral(s, [](double r) { return r * r; }, 0.0, 1.0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(nu_radial_integral(s, [](double) { return 1.0; }, 1.0, INFINITY) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(big_jump_intensity(s, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(big_jump_intensity(s, 0.5) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(big_jump_intensity(s, 1e12) < 1e-11);
  CHECK(small_jump_variance(s, 1.0) == doctest::Approx(2.0).epsilon(1e-12));

  try {
    nu_radial_integral(s, [](double) { return 1.0; }, 0.0, 1.0);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Divergence);
  }
}

TEST_CASE("2D radial integral against brute-force lattice quadrature") {
  const StableSpec s = unit_density(1.0, 2, 1.0, SmallJumpPolicy::Gaussian);
  const double radial = nu_radial_integral(s, [](double r) { return r * r; }, 0.0, 1.0);
  CHECK(radial == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-8));
  // |z|^2 |z|^{-3} = 1/|z| over the unit disc, midpoint lattice.
  const int n = 800;
  const double h = 2.0 / n;
  double brute = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = -1.0 + (i + 0.5) * h, y = -1.0 + (j + 0.5) * h;
      const double r = std::hypot(x, y);
      if (r <= 1.0) brute += h * h / r;
    }
  CHECK(brute == doctest::Approx(radial).epsilon(5e-3));
}

TEST_CASE("truncated symbol plus small-jump part equals the full symbol") {
  const StableSpec s = StableSpec::make(1.5, 1.0, 2);
  for (double xi : {0.5, 2.0}) {
    // (1 - J0(xi r)) r^{-5/2} dr with r = t^2, which is bounded at the origin.
    const auto f = [&](double t) {
      const double x = xi * t * t;
      if (x < 1e-2) return 2.0 * xi * xi * (0.25 - x * x / 64.0 + x * x * x * x / 2304.0);
      return 2.0 * (1.0 - std::cyl_bessel_j(0.0, x)) / std::pow(t, 4);
    };
    const double small = 2.0 * std::numbers::pi * s.levy_density_constant *
                         boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::sqrt(0.3), 15, 1e-12);
    CHECK(truncated_symbol(s, xi, 0.3) + small == doctest::Approx(std::pow(xi, 1.5)).epsilon(1e-7));
  }
}

TEST_CASE("sphere mean of cos") {
  CHECK(sphere_mean_cos(0.7, 1) == doctest::Approx(std::cos(0.7)));
  CHECK(sphere_mean_cos(0.7, 2) == doctest::Approx(std::cyl_bessel_j(0.0, 0.7)));
  CHECK(sphere_mean_cos(0.7, 3) == doctest::Approx(std::sin(0.7) / 0.7));
}

TEST_CASE("path structure and additivity") {
  const StableSpec s = StableSpec::make(1.2, 1.0, 2, SimulationMode::JumpDecomposition, 0.2);
  const LevyPath p = sample_path(s, 1.0, 0.01, 99);
  REQUIRE(p.times.front() == 0.0);
  CHECK(p.times.back() == 1.0);
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    CHECK(p.times[k + 1] > p.times[k]);
    CHECK(p.times[k + 1] - p.times[k] <= 0.01 + 1e-15);
  }
  CHECK(!p.big_jumps.empty());
  for (const auto& j : p.big_jumps) {
    CHECK(j.jump.norm() > 0.2);
    CHECK(p.times[j.node] == j.time);
    CHECK(p.origin[j.node] == NodeOrigin::BigJump);
  }
  const Vec total = increment(p, 0.0, 1.0);
  Vec manual = Vec::Zero(2);
  for (const auto& inc : p.increments) manual += inc;
  CHECK((total - manual).norm() == 0.0);
  CHECK(increment(p, p.times[7], p.times[7]).norm() == 0.0);
  // Regrouping a floating-point sum moves it by a few ulps at most.
  const Vec split = increment(p, p.times[3], p.times[20]) + increment(p, p.times[20], p.times[41]);
  CHECK((split - increment(p, p.times[3], p.times[41])).norm() <= 1e-14 * (1.0 + split.norm()));
  CHECK_THROWS_AS(increment(p, 0.0, 0.123456789), Error);

  const LevyPath q = sample_path(s, 1.0, 0.01, 99);
  CHECK(q.times == p.times);
  for (std::size_t k = 0; k < p.cells(); ++k) CHECK(q.increments[k] == p.increments[k]);
}

TEST_CASE("exact-increment paths have no ledger") {
  const StableSpec s = StableSpec::make(1.5, 1.0, 1, SimulationMode::ExactIncrement);
  const LevyPath p = sample_path(s, 1.0, 0.1, 3);
  CHECK(p.big_jumps.empty());
  CHECK(p.cells() == 10);
}

TEST_CASE("Drop policy: cells without a jump carry nothing") {
  const StableSpec s = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.1, SmallJumpPolicy::Drop);
  const LevyPath p = sample_path(s, 1.0, 0.05, 17);
  std::size_t j = 0;
  for (std::size_t k = 0; k < p.cells(); ++k) {
    if (j < p.big_jumps.size() && p.big_jumps[j].node == k + 1) {
      CHECK(p.increments[k] == p.big_jumps[j].jump);
      ++j;
    } else {
      CHECK(p.increments[k].norm() == 0.0);
    }
  }
}

TEST_CASE("recut keeps exactly the larger jumps") {
  const StableSpec s = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.05, SmallJumpPolicy::Drop);
  const LevyPath p = sample_path(s, 1.0, 0.05, 5);
  const LevyPath q = recut(p, 0.3);
  Vec expect = Vec::Zero(1);
  std::size_t kept = 0;
  for (const auto& j : p.big_jumps)
    if (j.jump.norm() > 0.3) {
      expect += j.jump;
      ++kept;
    }
  CHECK(q.big_jumps.size() == kept);
  CHECK((q.increment_between(0, q.cells()) - expect).norm() < 1e-14);
  for (const auto& j : q.big_jumps) CHECK(q.times[j.node] == j.time);
  CHECK(q.spec.cutoff_delta == 0.3);
  CHECK_THROWS_AS(recut(sample_path(StableSpec::make(1.5, 1.0, 1), 1.0, 0.1, 1), 0.5), Error);
}

TEST_CASE("big-jump count has mean intensity * horizon") {
  const StableSpec s = unit_density(1.0, 1, 1.0, SmallJumpPolicy::Drop);
  double total = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) total += sample_path(s, 1.0, 0.5, stream_seed(8, i)).big_jumps.size();
  // Poisson(2): standard error sqrt(2/n).
  CHECK(std::abs(total / n - 2.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("characteristic function of exact increments") {
  const std::vector<Vec> xi{Vec::Zero(1), Vec::Constant(1, 1.0)};
  const auto rep = validate_symbol(StableSpec::make(1.0, 1.0, 1, SimulationMode::ExactIncrement), xi, 20000, 4);
  CHECK(rep.checks[0].empirical == 1.0);
  CHECK(rep.checks[1].analytic == doctest::Approx(std::exp(-1.0)));
  CHECK(rep.all_within_3se());
}

TEST_CASE("alpha = 1 increments are Cauchy") {
  const StableSpec s = StableSpec::make(1.0, 1.0, 1, SimulationMode::ExactIncrement);
  CounterRng rng(12);
  const int n = 20000;
  int inside = 0;
  for (int i = 0; i < n; ++i) inside += std::abs(sample_stable_increment(s, 1.0, rng)(0)) < 1.0;
  // P(|C| < 1) = 1/2 for the standard Cauchy law.
  CHECK(std::abs(double(inside) / n - 0.5) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("self-similarity: L(4t) ~ 4^{1/alpha} L(t)") {
  const double alpha = 1.3;
  const StableSpec s = StableSpec::make(alpha, 1.0, 1, SimulationMode::ExactIncrement);
  CounterRng r1(1), r2(2);
  std::vector<double> a, b;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    a.push_back(sample_stable_increment(s, 4.0, r1)(0));
    b.push_back(std::pow(4.0, 1.0 / alpha) * sample_stable_increment(s, 1.0, r2)(0));
  }
  // 1% critical value of the two-sample KS test: 1.628 sqrt(2/n).
  CHECK(ks_distance(a, b) < 1.628 * std::sqrt(2.0 / n));
}

TEST_CASE("noise is symmetric") {
  const StableSpec s = StableSpec::make(0.8, 1.0, 2, SimulationMode::ExactIncrement);
  CounterRng rng(77);
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::atan(sample_stable_increment(s, 1.0, rng)(1));
  const double se = (std::numbers::pi / 2.0) / std::sqrt(double(n));
  CHECK(std::abs(sum / n) < 4.0 * se);
}

TEST_CASE("Drop policy with small cutoff approaches the stable law") {
  const StableSpec s = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.01, SmallJumpPolicy::Drop);
  const std::vector<Vec> xi{Vec::Constant(1, 1.0)};
  const auto rep = validate_symbol(s, xi, 4000, 21);
  CHECK(rep.checks[0].deviation < 4.0 * rep.checks[0].std_error + 0.01);
}
