#include "levyflow/levy_noise.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace levyflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// C(d, alpha) in (-Delta)^{alpha/2} u = C PV int (u(x) - u(y)) |x-y|^{-d-alpha} dy.
double fractional_laplacian_constant(double alpha, int dim) {
  const double d = dim;
  return alpha * std::pow(2.0, alpha - 1.0) * std::tgamma((d + alpha) / 2.0) /
         (std::pow(std::numbers::pi, d / 2.0) * std::tgamma(1.0 - alpha / 2.0));
}

Vec uniform_direction(int dim, CounterRng& rng) {
  Vec w(dim);
  if (dim == 1) {
    w(0) = (rng() >> 63) ? 1.0 : -1.0;
    return w;
  }
  for (;;) {
    for (int i = 0; i < dim; ++i) w(i) = rng.normal();
    const double n = w.norm();
    if (n > 1e-300) return w / n;
  }
}

// Positive (a)-stable variable, 0 < a < 1, with E exp(-l S) = exp(-l^a) (Kanter).
double positive_stable(double a, CounterRng& rng) {
  const double u = std::numbers::pi * rng.uniform_open();
  const double e = rng.exponential();
  const double lead = std::sin(a * u) / std::pow(std::sin(u), 1.0 / a);
  const double tail = std::pow(std::sin((1.0 - a) * u) / e, (1.0 - a) / a);
  return lead * tail;
}

// 1 - E cos(x w_1), with a series branch where the direct form cancels.
double one_minus_sphere_mean_cos(double x, int dim) {
  const double d = dim;
  if (std::abs(x) < 1e-2) {
    const double x2 = x * x;
    return x2 / (2.0 * d) - x2 * x2 / (8.0 * d * (d + 2.0)) +
           x2 * x2 * x2 / (48.0 * d * (d + 2.0) * (d + 4.0));
  }
  if (dim == 1) {
    const double s = std::sin(0.5 * x);
    return 2.0 * s * s;
  }
  return 1.0 - sphere_mean_cos(x, dim);
}

}  // namespace

StableSpec StableSpec::make(double alpha, double c_alpha, int dim, SimulationMode mode,
                            double cutoff_delta, SmallJumpPolicy policy) {
  StableSpec s;
  s.alpha = alpha;
  s.c_alpha = c_alpha;
  s.dim = dim;
  s.mode = mode;
  s.cutoff_delta = cutoff_delta;
  s.small_jump_policy = policy;
  s.levy_density_constant = (alpha > 0.0 && alpha < 2.0 && c_alpha > 0.0 && dim >= 1)
                                ? density_constant_for(alpha, c_alpha, dim)
                                : 0.0;
  s.validate();
  return s;
}

void StableSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 2.0))
    fail(ErrorKind::InvalidSpec, "alpha must lie strictly inside (0,2), got " + std::to_string(alpha));
  if (!(c_alpha > 0.0)) fail(ErrorKind::InvalidSpec, "c_alpha must be positive");
  if (dim < 1 || dim > kMaxDim)
    fail(ErrorKind::InvalidSpec, "dim must be in [1," + std::to_string(kMaxDim) + "]");
  if (!(cutoff_delta > 0.0 && cutoff_delta <= 1.0))
    fail(ErrorKind::InvalidSpec, "cutoff_delta must lie in (0,1]");
  if (!(levy_density_constant > 0.0))
    fail(ErrorKind::InvalidSpec, "levy_density_constant must be positive");
}

double sphere_area(int dim) {
  const double d = dim;
  return 2.0 * std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0);
}

double density_constant_for(double alpha, double c_alpha, int dim) {
  return c_alpha * fractional_laplacian_constant(alpha, dim);
}

double symbol_from_density(const StableSpec& spec, double xi_norm) {
  return spec.levy_density_constant * std::pow(std::abs(xi_norm), spec.alpha) /
         fractional_laplacian_constant(spec.alpha, spec.dim);
}

std::size_t LevyPath::node_of(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t)
    fail(ErrorKind::Query, "time " + std::to_string(t) + " is not a node of the path grid");
  return static_cast<std::size_t>(it - times.begin());
}

Vec LevyPath::increment_between(std::size_t i, std::size_t j) const {
  Vec acc = Vec::Zero(dim());
  for (std::size_t k = i; k < j; ++k) acc += increments[k];
  return acc;
}

std::vector<Vec> LevyPath::values() const {
  std::vector<Vec> out;
  out.reserve(times.size());
  Vec acc = Vec::Zero(dim());
  out.push_back(acc);
  for (const auto& inc : increments) {
    acc += inc;
    out.push_back(acc);
  }
  return out;
}

Vec sample_stable_increment(const StableSpec& spec, double dt, CounterRng& rng) {
  spec.validate();
  if (!(dt > 0.0)) fail(ErrorKind::InvalidSpec, "dt must be positive");
  // L = sqrt(2 S) G with S = (c dt)^{2/alpha} S1, S1 positive (alpha/2)-stable:
  // E exp(i xi.L) = E exp(-S |xi|^2) = exp(-c dt |xi|^alpha).
  const double s1 = positive_stable(0.5 * spec.alpha, rng);
  const double scale = std::pow(spec.c_alpha * dt, 2.0 / spec.alpha);
  const double amp = std::sqrt(2.0 * scale * s1);
  Vec out(spec.dim);
  for (int i = 0; i < spec.dim; ++i) out(i) = amp * rng.normal();
  return out;
}

LevyPath sample_path(const StableSpec& spec, double horizon, double base_dt, std::uint64_t seed) {
  spec.validate();
  if (!(horizon > 0.0)) fail(ErrorKind::InvalidSpec, "horizon must be positive");
  if (!(base_dt > 0.0)) fail(ErrorKind::InvalidSpec, "base_dt must be positive");

  CounterRng rng(seed);
  LevyPath path;
  path.spec = spec;
  path.base_dt = base_dt;
  path.seed = seed;

  const auto n_uniform = static_cast<std::size_t>(std::ceil(horizon / base_dt - 1e-9));
  std::vector<double> uniform(n_uniform + 1);
  for (std::size_t i = 0; i <= n_uniform; ++i) uniform[i] = std::min(horizon, i * base_dt);
  uniform.back() = horizon;

  const int d = spec.dim;
  if (spec.mode == SimulationMode::ExactIncrement) {
    path.times = uniform;
    path.origin.assign(uniform.size(), NodeOrigin::Uniform);
    for (std::size_t i = 0; i + 1 < uniform.size(); ++i)
      path.increments.push_back(sample_stable_increment(spec, uniform[i + 1] - uniform[i], rng));
    return path;
  }

  // Ledger of jumps with |z| > delta: Poisson times, Pareto radii, uniform directions.
  const double delta = spec.cutoff_delta;
  const double rate = big_jump_intensity(spec, delta);
  struct Raw {
    double t;
    Vec z;
  };
  std::vector<Raw> jumps;
  for (double t = rng.exponential() / rate; t < horizon; t += rng.exponential() / rate) {
    if (t <= 0.0) continue;
    const double r = delta * std::pow(rng.uniform_open(), -1.0 / spec.alpha);
    jumps.push_back({t, r * uniform_direction(d, rng)});
  }

  // Merge uniform nodes and jump times.
  std::size_t iu = 0;
  std::size_t ij = 0;
  while (iu < uniform.size() || ij < jumps.size()) {
    if (ij < jumps.size() && (iu == uniform.size() || jumps[ij].t <= uniform[iu])) {
      if (iu < uniform.size() && jumps[ij].t == uniform[iu]) ++iu;
      path.times.push_back(jumps[ij].t);
      path.origin.push_back(NodeOrigin::BigJump);
      path.big_jumps.push_back({jumps[ij].t, jumps[ij].z, path.times.size() - 1});
      ++ij;
    } else {
      path.times.push_back(uniform[iu]);
      path.origin.push_back(NodeOrigin::Uniform);
      ++iu;
    }
  }

  const double var_rate =
      spec.small_jump_policy == SmallJumpPolicy::Gaussian ? small_jump_variance(spec, delta) : 0.0;
  std::size_t next_jump = 0;
  path.increments.reserve(path.times.size() - 1);
  for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
    Vec inc = Vec::Zero(d);
    if (var_rate > 0.0) {
      const double sd = std::sqrt(var_rate * (path.times[k + 1] - path.times[k]));
      for (int i = 0; i < d; ++i) inc(i) = sd * rng.normal();
    }
    if (next_jump < path.big_jumps.size() && path.big_jumps[next_jump].node == k + 1) {
      inc += path.big_jumps[next_jump].jump;
      ++next_jump;
    }
    path.increments.push_back(inc);
  }
  return path;
}

LevyPath zero_path(const StableSpec& spec, double horizon, double base_dt) {
  spec.validate();
  if (!(horizon > 0.0 && base_dt > 0.0)) fail(ErrorKind::InvalidSpec, "horizon and base_dt must be positive");
  LevyPath path;
  path.spec = spec;
  path.base_dt = base_dt;
  const auto n = static_cast<std::size_t>(std::ceil(horizon / base_dt - 1e-9));
  for (std::size_t i = 0; i <= n; ++i) path.times.push_back(std::min(horizon, i * base_dt));
  path.times.back() = horizon;
  path.origin.assign(path.times.size(), NodeOrigin::Uniform);
  path.increments.assign(n, Vec::Zero(spec.dim));
  path.noiseless = true;
  return path;
}

Vec increment(const LevyPath& path, double s, double t) {
  if (s > t) fail(ErrorKind::Query, "increment requires s <= t");
  return path.increment_between(path.node_of(s), path.node_of(t));
}

LevyPath recut(const LevyPath& path, double new_delta) {
  if (path.spec.mode != SimulationMode::JumpDecomposition ||
      path.spec.small_jump_policy != SmallJumpPolicy::Drop)
    fail(ErrorKind::Capability, "recut needs a JumpDecomposition path with the Drop policy");
  if (!(new_delta >= path.spec.cutoff_delta && new_delta <= 1.0))
    fail(ErrorKind::InvalidSpec, "recut threshold must lie in [cutoff_delta, 1]");

  LevyPath out;
  out.spec = path.spec;
  out.spec.cutoff_delta = new_delta;
  out.base_dt = path.base_dt;
  out.seed = path.seed;
  out.times.push_back(path.times.front());
  out.origin.push_back(path.origin.front());

  std::size_t jump = 0;
  for (std::size_t node = 1; node < path.times.size(); ++node) {
    const bool is_jump = path.origin[node] == NodeOrigin::BigJump;
    const bool keep_jump = is_jump && path.big_jumps[jump].jump.norm() > new_delta;
    if (is_jump) ++jump;
    // Under Drop a jump cell carries exactly its jump vector, so removing the node
    // together with that cell leaves the following cell's increment unchanged.
    if (is_jump && !keep_jump) continue;
    out.times.push_back(path.times[node]);
    out.origin.push_back(path.origin[node]);
    out.increments.push_back(path.increments[node - 1]);
    if (keep_jump) out.big_jumps.push_back({path.times[node], path.big_jumps[jump - 1].jump, out.times.size() - 1});
  }
  return out;
}

double nu_radial_integral(const StableSpec& spec, const RadialFunction& g, double rmin, double rmax,
                          double rel_tol) {
  spec.validate();
  if (!(rmin >= 0.0 && rmin < rmax))
    fail(ErrorKind::InvalidSpec, "radial range must satisfy 0 <= rmin < rmax");
  const double alpha = spec.alpha;
  // r = e^u: g(r) r^{-1-alpha} dr = g(e^u) e^{-alpha u} du.
  const auto f = [&](double u) {
    const double r = std::exp(u);
    const double v = g(r) * std::exp(-alpha * u);
    return std::isfinite(v) ? v : 0.0;
  };
  const auto decays = [&](double r_near, double r_far) {
    const double a = std::abs(g(r_near) * std::pow(r_near, -alpha));
    const double b = std::abs(g(r_far) * std::pow(r_far, -alpha));
    return std::isfinite(b) && (b <= 1e-3 * a || b < 1e-200);
  };
  if (rmin == 0.0 && !decays(1e-30, 1e-60))
    fail(ErrorKind::Divergence, "radial integrand is not integrable at the origin");
  if (rmax == kInf && !decays(1e30, 1e60))
    fail(ErrorKind::Divergence, "radial integrand does not decay at infinity");

  const double a = rmin == 0.0 ? -kInf : std::log(rmin);
  const double b = rmax == kInf ? kInf : std::log(rmax);
  double err = 0.0;
  double l1 = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, a, b, 20, rel_tol * 0.1, &err, &l1);
  if (!std::isfinite(val) || err > std::max(rel_tol * std::abs(val), 1e-14 * l1) * 10.0 + 1e-300) {
    if (!std::isfinite(val)) fail(ErrorKind::Divergence, "radial integral diverged");
    fail(ErrorKind::Numeric, "radial quadrature did not reach the requested tolerance");
  }
  return sphere_area(spec.dim) * spec.levy_density_constant * val;
}

double big_jump_intensity(const StableSpec& spec, double delta) {
  spec.validate();
  if (!(delta > 0.0)) fail(ErrorKind::InvalidSpec, "delta must be positive");
  if (delta == kInf) return 0.0;
  return sphere_area(spec.dim) * spec.levy_density_constant * std::pow(delta, -spec.alpha) / spec.alpha;
}

double small_jump_variance(const StableSpec& spec, double delta) {
  spec.validate();
  return sphere_area(spec.dim) * spec.levy_density_constant * std::pow(delta, 2.0 - spec.alpha) /
         ((2.0 - spec.alpha) * spec.dim);
}

double sphere_mean_cos(double x, int dim) {
  if (x == 0.0) return 1.0;
  switch (dim) {
    case 1:
      return std::cos(x);
    case 2:
      return std::cyl_bessel_j(0.0, std::abs(x));
    case 3:
      return std::sin(x) / x;
    default: {
      const double nu = dim / 2.0 - 1.0;
      const double ax = std::abs(x);
      return std::tgamma(dim / 2.0) * std::pow(2.0 / ax, nu) * std::cyl_bessel_j(nu, ax);
    }
  }
}

double truncated_symbol(const StableSpec& spec, double xi_norm, double delta) {
  const double s = std::abs(xi_norm);
  if (s == 0.0) return 0.0;
  const double small = nu_radial_integral(
      spec, [&](double r) { return one_minus_sphere_mean_cos(s * r, spec.dim); }, 0.0, delta, 1e-10);
  return symbol_from_density(spec, s) - small;
}

double reconstruct_symbol(const StableSpec& spec, double xi_norm) {
  const double s = std::abs(xi_norm);
  if (s == 0.0) return 0.0;
  const double k = sphere_area(spec.dim) * spec.levy_density_constant;
  const double alpha = spec.alpha;
  const auto integrand = [&](double r) {
    return one_minus_sphere_mean_cos(s * r, spec.dim) * std::pow(r, -1.0 - alpha);
  };
  // Near part (0, 1/s] handled by the singular-endpoint radial quadrature.
  const double r0 = 1.0 / s;
  double total = nu_radial_integral(
      spec, [&](double r) { return one_minus_sphere_mean_cos(s * r, spec.dim); }, 0.0, r0, 1e-10);
  // Far part: panels one period long up to R, then the non-oscillatory tail
  // int_R^inf r^{-1-alpha} dr; the dropped oscillatory tail is O(R^{-1-alpha}/s).
  const double period = 2.0 * std::numbers::pi / s;
  const double r_max = std::max(r0 * 4.0, std::pow(1e10 / s, 1.0 / (1.0 + alpha)));
  double acc = 0.0;
  for (double a = r0; a < r_max; a += period) {
    const double b = std::min(a + period, r_max);
    acc += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 0);
  }
  total += k * (acc + std::pow(r_max, -alpha) / alpha);
  return total;
}

bool SymbolReport::all_within_3se() const {
  return std::all_of(checks.begin(), checks.end(), [](const SymbolCheck& c) { return c.within_3se; });
}

SymbolReport validate_symbol(const StableSpec& spec, std::span<const Vec> xi_list, std::size_t n_samples,
                             std::uint64_t seed) {
  spec.validate();
  std::vector<Vec> samples;
  samples.reserve(n_samples);
  if (spec.mode == SimulationMode::ExactIncrement) {
    CounterRng rng(seed);
    for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(sample_stable_increment(spec, 1.0, rng));
  } else {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const LevyPath p = sample_path(spec, 1.0, 1.0, stream_seed(seed, i));
      samples.push_back(p.increment_between(0, p.cells()));
    }
  }

  SymbolReport report;
  report.n_samples = n_samples;
  for (const Vec& xi : xi_list) {
    if (xi.size() != spec.dim) fail(ErrorKind::InvalidSpec, "frequency has the wrong dimension");
    double sum = 0.0;
    double sum2 = 0.0;
    for (const Vec& x : samples) {
      const double c = std::cos(xi.dot(x));
      sum += c;
      sum2 += c * c;
    }
    const double n = static_cast<double>(n_samples);
    SymbolCheck check;
    check.xi = xi;
    check.empirical = sum / n;
    check.analytic = std::exp(-spec.c_alpha * std::pow(xi.norm(), spec.alpha));
    check.deviation = std::abs(check.empirical - check.analytic);
    const double var = std::max(0.0, sum2 / n - check.empirical * check.empirical);
    check.std_error = std::sqrt(var / n);
    check.within_3se = check.deviation <= 3.0 * check.std_error || check.deviation == 0.0;
    report.checks.push_back(check);
  }
  return report;
}

}  // namespace levyflow
