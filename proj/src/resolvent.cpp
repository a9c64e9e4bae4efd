#include "levyflow/resolvent.hpp"

#include <Eigen/SVD>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace levyflow {

namespace {

// FFTW planning is not thread safe; execution on distinct arrays is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

int signed_index(int i, int n) { return i <= n / 2 ? i : i - n; }

void check_same_grid(const SpectralField& a, const SpectralField& b) {
  if (a.grid.n != b.grid.n || a.grid.dim != b.grid.dim || a.grid.period != b.grid.period)
    fail(ErrorKind::InvalidSpec, "spectral fields live on different grids");
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// b.Dv on the nodes, with b sampled once.
std::vector<double> advect(const std::vector<Vec>& bn, const SpectralField& v) {
  const int d = v.grid.dim;
  std::vector<double> out(bn.size(), 0.0);
  for (int a = 0; a < d; ++a) {
    const auto da = inverse_transform(derivative(v, a));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bn[i](a) * da[i];
  }
  return out;
}

SpectralField combine(const SpectralField& a, double sa, const SpectralField& b, double sb) {
  check_same_grid(a, b);
  SpectralField out = a;
  for (std::size_t m = 0; m < out.coeffs.size(); ++m) out.coeffs[m] = sa * a.coeffs[m] + sb * b.coeffs[m];
  return out;
}

std::vector<Mat> nodal_jacobians(const std::vector<std::vector<SpectralField>>& du, std::size_t nodes) {
  const int d = static_cast<int>(du.size());
  std::vector<Mat> out(nodes, Mat::Zero(d, d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const auto v = inverse_transform(du[i][j]);
      for (std::size_t k = 0; k < nodes; ++k) out[k](i, j) = v[k];
    }
  return out;
}

std::vector<std::vector<SpectralField>> jacobian_fields(const std::vector<SpectralField>& u) {
  std::vector<std::vector<SpectralField>> du;
  for (const auto& ui : u) {
    std::vector<SpectralField> row;
    for (int j = 0; j < ui.grid.dim; ++j) row.push_back(derivative(ui, j));
    du.push_back(std::move(row));
  }
  return du;
}

void check_components(const std::vector<SpectralField>& u) {
  if (u.empty()) fail(ErrorKind::InvalidSpec, "vector field needs at least one component");
  if (static_cast<int>(u.size()) != u.front().grid.dim)
    fail(ErrorKind::InvalidSpec, "vector field needs one component per dimension");
  for (const auto& c : u) check_same_grid(c, u.front());
}

}  // namespace

TorusGrid TorusGrid::make(double period, int n, int dim) {
  if (!(period > 0.0)) fail(ErrorKind::InvalidSpec, "torus period must be positive");
  if (n < 2 || n % 2 != 0) fail(ErrorKind::InvalidSpec, "torus needs an even number of modes");
  if (dim < 1 || dim > 2) fail(ErrorKind::InvalidSpec, "torus dimension must be 1 or 2");
  return {period, n, dim};
}

std::size_t TorusGrid::size() const { return dim == 1 ? n : static_cast<std::size_t>(n) * n; }

std::size_t TorusGrid::modes() const {
  const std::size_t half = n / 2 + 1;
  return dim == 1 ? half : static_cast<std::size_t>(n) * half;
}

double TorusGrid::frequency(int index) const { return 2.0 * std::numbers::pi / period * index; }

Vec TorusGrid::node(std::size_t i) const {
  Vec x(dim);
  if (dim == 1) {
    x(0) = -0.5 * period + spacing() * static_cast<double>(i);
  } else {
    x(0) = -0.5 * period + spacing() * static_cast<double>(i / n);
    x(1) = -0.5 * period + spacing() * static_cast<double>(i % n);
  }
  return x;
}

std::vector<Vec> TorusGrid::nodes() const {
  std::vector<Vec> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = node(i);
  return out;
}

Vec SpectralField::frequency(std::size_t m) const {
  const int half = grid.n / 2 + 1;
  Vec xi(grid.dim);
  if (grid.dim == 1) {
    xi(0) = grid.frequency(static_cast<int>(m));
  } else {
    xi(0) = grid.frequency(signed_index(static_cast<int>(m) / half, grid.n));
    xi(1) = grid.frequency(static_cast<int>(m) % half);
  }
  return xi;
}

double SpectralField::conjugate_symmetry_defect() const {
  const int n = grid.n, half = n / 2 + 1;
  double worst = 0.0;
  if (grid.dim == 1) {
    worst = std::max(std::abs(coeffs[0].imag()), std::abs(coeffs[n / 2].imag()));
  } else {
    // Columns 0 and n/2 of the last axis must satisfy c(-k1) = conj(c(k1)).
    for (int col : {0, n / 2})
      for (int i = 0; i < n; ++i) {
        const int j = (n - i) % n;
        worst = std::max(worst, std::abs(coeffs[i * half + col] - std::conj(coeffs[j * half + col])));
      }
  }
  return worst;
}

SpectralField transform(const TorusGrid& grid, const std::vector<double>& values) {
  if (values.size() != grid.size()) fail(ErrorKind::InvalidSpec, "sample count does not match the torus grid");
  SpectralField f{grid, std::vector<std::complex<double>>(grid.modes())};
  std::vector<double> in = values;
  auto* out = reinterpret_cast<fftw_complex*>(f.coeffs.data());
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = grid.dim == 1 ? fftw_plan_dft_r2c_1d(grid.n, in.data(), out, FFTW_ESTIMATE)
                         : fftw_plan_dft_r2c_2d(grid.n, grid.n, in.data(), out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / static_cast<double>(grid.size());
  for (auto& c : f.coeffs) c *= scale;
  return f;
}

std::vector<double> inverse_transform(const SpectralField& f) {
  const TorusGrid& grid = f.grid;
  std::vector<std::complex<double>> in = f.coeffs;  // c2r overwrites its input
  std::vector<double> out(grid.size());
  auto* cin = reinterpret_cast<fftw_complex*>(in.data());
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = grid.dim == 1 ? fftw_plan_dft_c2r_1d(grid.n, cin, out.data(), FFTW_ESTIMATE)
                         : fftw_plan_dft_c2r_2d(grid.n, grid.n, cin, out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

SpectralField sample_spectral(const TorusGrid& grid, const std::function<double(const Vec&)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.node(i));
  return transform(grid, v);
}

double evaluate(const SpectralField& f, const Vec& x) {
  const TorusGrid& g = f.grid;
  const int n = g.n, half = n / 2 + 1;
  // Per-axis phase tables e^{i w k (x - x0)} for k = 0..n/2, extended by conjugation.
  std::vector<std::vector<std::complex<double>>> phase(g.dim, std::vector<std::complex<double>>(n));
  for (int a = 0; a < g.dim; ++a) {
    const double th = g.frequency(1) * (x(a) + 0.5 * g.period);
    const std::complex<double> step = std::polar(1.0, th);
    std::complex<double> p = 1.0;
    for (int k = 0; k <= n / 2; ++k) {
      phase[a][k] = p;
      if (k > 0 && k < n / 2) phase[a][n - k] = std::conj(p);
      p *= step;
    }
  }
  double acc = 0.0;
  if (g.dim == 1) {
    for (int k = 0; k < half; ++k) {
      const double w = (k == 0 || k == n / 2) ? 1.0 : 2.0;
      acc += w * (f.coeffs[k] * phase[0][k]).real();
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < half; ++k) {
        const double w = (k == 0 || k == n / 2) ? 1.0 : 2.0;
        acc += w * (f.coeffs[i * half + k] * phase[0][i] * phase[1][k]).real();
      }
  }
  return acc;
}

SpectralField apply_radial(const SpectralField& f, const std::function<double(double)>& m) {
  SpectralField out = f;
  std::map<double, double> cache;
  for (std::size_t k = 0; k < out.coeffs.size(); ++k) {
    const double r = f.frequency(k).norm();
    auto it = cache.find(r);
    if (it == cache.end()) it = cache.emplace(r, m(r)).first;
    out.coeffs[k] *= it->second;
  }
  return out;
}

SpectralField fractional_multiplier(const SpectralField& f, double c, double alpha) {
  return apply_radial(f, [=](double r) { return r == 0.0 ? 0.0 : -c * std::pow(r, alpha); });
}

SpectralField apply_generator(const StableSpec& spec, const SpectralField& v) {
  spec.validate();
  if (spec.dim != v.grid.dim) fail(ErrorKind::InvalidSpec, "noise and torus dimensions differ");
  return fractional_multiplier(v, spec.c_alpha, spec.alpha);
}

SpectralField derivative(const SpectralField& f, int axis) {
  const int n = f.grid.n, half = n / 2 + 1;
  if (axis < 0 || axis >= f.grid.dim) fail(ErrorKind::InvalidSpec, "derivative axis out of range");
  SpectralField out = f;
  for (std::size_t m = 0; m < out.coeffs.size(); ++m) {
    const int idx = f.grid.dim == 1 ? static_cast<int>(m)
                                    : (axis == 0 ? static_cast<int>(m) / half : static_cast<int>(m) % half);
    out.coeffs[m] *= idx == n / 2 ? std::complex<double>(0.0) : std::complex<double>(0.0, f.frequency(m)(axis));
  }
  return out;
}

SpectralField resolvent_free(double lambda, const StableSpec& spec, const SpectralField& f) {
  if (!(lambda > 0.0)) fail(ErrorKind::InvalidSpec, "lambda must be positive");
  spec.validate();
  const double c = spec.c_alpha, a = spec.alpha;
  return apply_radial(f, [=](double r) { return 1.0 / (lambda + c * std::pow(r, a)); });
}

ResolventSolution solve_resolvent(double lambda, const StableSpec& spec, const DriftField& b, const SpectralField& f,
                                  double tol, int max_iter) {
  const TorusGrid& grid = f.grid;
  if (b.dim != grid.dim) fail(ErrorKind::InvalidSpec, "drift and torus dimensions differ");
  const auto nodes = grid.nodes();
  std::vector<Vec> bn(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) bn[i] = b(nodes[i]);

  ResolventSolution sol;
  sol.v = resolvent_free(lambda, spec, f);
  std::vector<double> adv = advect(bn, sol.v);
  double prev_step = std::numeric_limits<double>::infinity();
  if (b.identically_zero) {
    sol.iterations = 1;
    sol.residual = 0.0;
    sol.residual_history.push_back(0.0);
    return sol;
  }
  for (int it = 1; it <= max_iter; ++it) {
    // v_new = R(f + b.Dv); its residual is b.D(v - v_new) on the nodes.
    const SpectralField rhs = combine(f, 1.0, transform(grid, adv), 1.0);
    const SpectralField next = resolvent_free(lambda, spec, rhs);
    const std::vector<double> adv_next = advect(bn, next);
    std::vector<double> res(adv.size());
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = adv[i] - adv_next[i];
    const double step = max_abs(inverse_transform(combine(next, 1.0, sol.v, -1.0)));
    if (std::isfinite(prev_step) && prev_step > 0.0) sol.contraction_rate = step / prev_step;
    prev_step = step;
    sol.v = next;
    adv = adv_next;
    sol.iterations = it;
    sol.residual = max_abs(res);
    sol.residual_history.push_back(sol.residual);
    if (!std::isfinite(sol.residual)) break;
    if (sol.residual <= tol) return sol;
  }
  throw ContractionFailure("resolvent fixed point did not reach the residual tolerance", sol.contraction_rate,
                           sol.iterations);
}

double lattice_du_norm(const std::vector<SpectralField>& u) {
  check_components(u);
  double worst = 0.0;
  for (const Mat& J : nodal_jacobians(jacobian_fields(u), u.front().grid.size()))
    worst = std::max(worst, J.cols() == 1 ? std::abs(J(0, 0)) : Eigen::JacobiSVD<Mat>(J).singularValues()(0));
  return worst;
}

ItoTanakaResult ito_tanaka_lambda_search(const DriftField& b, const StableSpec& spec, const TorusGrid& grid,
                                         double tol) {
  if (b.dim != grid.dim) fail(ErrorKind::InvalidSpec, "drift and torus dimensions differ");
  std::vector<SpectralField> f;
  for (int i = 0; i < grid.dim; ++i) f.push_back(sample_spectral(grid, [&](const Vec& x) { return b(x)(i); }));
  ItoTanakaResult out;
  for (int p = 0; p <= 30; ++p) {
    const double lambda = std::ldexp(1.0, p);
    LambdaSearchStep step{lambda, std::numeric_limits<double>::infinity(), 0, false};
    std::vector<SpectralField> u;
    double residual = 0.0;
    try {
      for (const auto& fi : f) {
        const ResolventSolution s = solve_resolvent(lambda, spec, b, fi, tol);
        step.iterations = std::max(step.iterations, s.iterations);
        residual = std::max(residual, s.residual);
        u.push_back(s.v);
      }
      step.converged = true;
      step.du_norm = lattice_du_norm(u);
    } catch (const ContractionFailure&) {
      // Supercritical or too small lambda: keep climbing.
    }
    out.steps.push_back(step);
    if (step.converged && step.du_norm <= 1.0 / 3.0) {
      out.lambda = lambda;
      out.u = std::move(u);
      out.du_norm = step.du_norm;
      out.residual = residual;
      return out;
    }
  }
  fail(ErrorKind::Numeric, "lambda search failed: ||Du|| > 1/3 up to lambda = 2^30");
}

Vec PsiTransform::u_at(const Vec& x) const {
  Vec out(static_cast<Eigen::Index>(u.size()));
  for (std::size_t i = 0; i < u.size(); ++i) out(static_cast<Eigen::Index>(i)) = evaluate(u[i], x);
  return out;
}

Mat PsiTransform::du_at(const Vec& x) const {
  const auto d = static_cast<Eigen::Index>(u.size());
  Mat J(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) J(i, j) = evaluate(du[i][j], x);
  return J;
}

Vec PsiTransform::inverse(const Vec& y, int* iterations) const {
  Vec x = y;
  const double tol = 1e-13 * (1.0 + y.norm());
  for (int it = 1; it <= 60; ++it) {
    const Vec next = y - u_at(x);
    const double step = (next - x).norm();
    x = next;
    if (step <= tol) {
      if (iterations) *iterations = it;
      return x;
    }
  }
  fail(ErrorKind::Numeric, "psi inverse fixed point did not converge");
}

PsiTransform psi_transform(const std::vector<SpectralField>& u) {
  check_components(u);
  PsiTransform psi;
  psi.u = u;
  psi.du = jacobian_fields(u);
  const auto d = static_cast<Eigen::Index>(u.size());
  psi.min_singular = std::numeric_limits<double>::infinity();
  for (const Mat& J : nodal_jacobians(psi.du, u.front().grid.size())) {
    const auto sv = Eigen::JacobiSVD<Mat>(J).singularValues();
    psi.du_norm = std::max(psi.du_norm, sv(0));
    const auto s = Eigen::JacobiSVD<Mat>(Mat::Identity(d, d) + J).singularValues();
    psi.max_singular = std::max(psi.max_singular, s(0));
    psi.min_singular = std::min(psi.min_singular, s(d - 1));
  }
  if (psi.du_norm > 1.0 / 3.0) fail(ErrorKind::InvalidSpec, "psi transform needs lattice ||Du|| <= 1/3");
  if (psi.min_singular < 2.0 / 3.0 || psi.max_singular > 4.0 / 3.0)
    fail(ErrorKind::InvalidSpec, "lattice bounds 2/3 <= |D psi| <= 4/3 fail");
  return psi;
}

ConjugationDefect verify_conjugation(const DriftField& b, const PsiTransform& psi, double lambda, const TimeGrid& grid,
                                     const Vec& x) {
  const StableSpec& spec = grid.spec;
  if (!grid.noiseless && spec.mode != SimulationMode::JumpDecomposition)
    fail(ErrorKind::Capability, "conjugation check needs a JumpDecomposition path with a jump ledger");
  // Without small jumps in the noise only the |z| > delta part of A is compensated.
  const bool truncated = !grid.noiseless && spec.small_jump_policy == SmallJumpPolicy::Drop;
  std::vector<SpectralField> cu;
  for (const auto& ui : psi.u)
    cu.push_back(truncated ? apply_radial(ui, [&](double r) { return -truncated_symbol(spec, r, spec.cutoff_delta); })
                           : apply_generator(spec, ui));
  const auto c_at = [&](const Vec& w) {
    Vec out(static_cast<Eigen::Index>(cu.size()));
    for (std::size_t i = 0; i < cu.size(); ++i) out(static_cast<Eigen::Index>(i)) = evaluate(cu[i], w);
    return out;
  };

  const Trajectory X = solve_forward(b, x, grid);
  ConjugationDefect out;
  Vec Y = psi.apply(x);
  out.defect.push_back((psi.apply(X[0]) - Y).norm());
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double dt = grid.dt(k);
    const Vec& dL = grid.increments[k];
    const Vec w = psi.inverse(Y);
    const Vec uw = psi.u_at(w);
    Y = Y + lambda * uw * dt + dL + psi.u_at(w + dL) - uw - dt * c_at(w);
    out.defect.push_back((psi.apply(X[k + 1]) - Y).norm());
  }
  out.sup = *std::max_element(out.defect.begin(), out.defect.end());
  return out;
}

}  // namespace levyflow
