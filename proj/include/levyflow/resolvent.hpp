#pragma once

// Spectral resolvent lambda v - A v - b.Dv = f on a periodic box, where A is the
// Fourier multiplier -c_alpha |xi|^alpha, and the transform psi = id + u_lambda
// that conjugates the flow to an equation with Lipschitz coefficients.

#include "levyflow/core.hpp"
#include "levyflow/drift_fields.hpp"
#include "levyflow/flow_engine.hpp"
#include "levyflow/levy_noise.hpp"

#include <complex>
#include <functional>
#include <vector>

namespace levyflow {

/// n equispaced nodes per axis on [-period/2, period/2)^dim.
struct TorusGrid {
  double period = 2.0 * 3.141592653589793;
  int n = 64;
  int dim = 1;

  static TorusGrid make(double period, int n, int dim = 1);
  std::size_t size() const;           // n^dim nodes
  std::size_t modes() const;          // stored half-spectrum size
  double spacing() const { return period / n; }
  double frequency(int index) const;  // 2 pi / period times the signed index
  Vec node(std::size_t i) const;
  std::vector<Vec> nodes() const;
};

/// Half-spectrum coefficients c with f(x) = sum_xi c_xi exp(i xi.(x - x0)), x0 the lower corner.
/// Layout: last axis keeps indices 0..n/2; the first axis (d = 2) runs over all n indices.
struct SpectralField {
  TorusGrid grid;
  std::vector<std::complex<double>> coeffs;

  /// |xi| of stored mode m and its signed frequency vector.
  Vec frequency(std::size_t m) const;
  /// max |Im c| over self-conjugate modes plus the mirror mismatch on the last-axis zero plane.
  double conjugate_symmetry_defect() const;
};

SpectralField transform(const TorusGrid& grid, const std::vector<double>& values);
std::vector<double> inverse_transform(const SpectralField& f);
SpectralField sample_spectral(const TorusGrid& grid, const std::function<double(const Vec&)>& f);
/// Trigonometric interpolant at an arbitrary point.
double evaluate(const SpectralField& f, const Vec& x);

/// Mode-wise multiplication by m(|xi|).
SpectralField apply_radial(const SpectralField& f, const std::function<double(double)>& m);
/// Multiplier -c |xi|^alpha with no range check on alpha (alpha = 2 gives the Laplacian).
SpectralField fractional_multiplier(const SpectralField& f, double c, double alpha);
/// Av for the stable generator of `spec`.
SpectralField apply_generator(const StableSpec& spec, const SpectralField& v);
/// Partial derivative along `axis`; the Nyquist plane of that axis is zeroed.
SpectralField derivative(const SpectralField& f, int axis);

/// v_xi = f_xi / (lambda + c |xi|^alpha).
SpectralField resolvent_free(double lambda, const StableSpec& spec, const SpectralField& f);

struct ResolventSolution {
  SpectralField v;
  int iterations = 0;
  double residual = 0.0;          // max over nodes of |lambda v - Av - b.Dv - f|
  double contraction_rate = 0.0;  // last ratio of successive update norms
  std::vector<double> residual_history;
};

/// Fixed point v <- resolvent_free(lambda, f + b.Dv) until the nodal residual is <= tol.
/// Throws ContractionFailure after max_iter iterations.
ResolventSolution solve_resolvent(double lambda, const StableSpec& spec, const DriftField& b, const SpectralField& f,
                                  double tol = 1e-10, int max_iter = 500);

struct LambdaSearchStep {
  double lambda = 0.0;
  double du_norm = 0.0;  // infinity when the fixed point failed
  int iterations = 0;
  bool converged = false;
};

struct ItoTanakaResult {
  double lambda = 0.0;
  std::vector<SpectralField> u;  // one scalar field per component of b
  double du_norm = 0.0;
  double residual = 0.0;         // worst component residual
  std::vector<LambdaSearchStep> steps;
};

/// Max over nodes of the operator norm of Du for the vector field with the given components.
double lattice_du_norm(const std::vector<SpectralField>& u);

/// Smallest lambda in 1, 2, 4, ..., 2^30 whose solution of lambda u - Au - b.Du = b has
/// lattice ||Du|| <= 1/3. Throws Numeric if none does.
ItoTanakaResult ito_tanaka_lambda_search(const DriftField& b, const StableSpec& spec, const TorusGrid& grid,
                                         double tol = 1e-10);

/// psi = id + u and its inverse by x <- y - u(x).
struct PsiTransform {
  std::vector<SpectralField> u;
  std::vector<std::vector<SpectralField>> du;  // du[i][j] = d u_i / d x_j
  double du_norm = 0.0;
  double min_singular = 0.0;  // lattice min of sigma_min(I + Du)
  double max_singular = 0.0;  // lattice max of sigma_max(I + Du)

  Vec u_at(const Vec& x) const;
  Mat du_at(const Vec& x) const;
  Vec apply(const Vec& x) const { return x + u_at(x); }
  /// Fixed point from x = y; throws Numeric if 60 iterations do not reach 1e-13 (1 + |y|).
  Vec inverse(const Vec& y, int* iterations = nullptr) const;
};

/// Throws InvalidSpec unless lattice ||Du|| <= 1/3 and 2/3 <= sigma(I + Du) <= 4/3 on the nodes.
PsiTransform psi_transform(const std::vector<SpectralField>& u);

struct ConjugationDefect {
  std::vector<double> defect;  // |psi(phi_t(x)) - Y_t(psi(x))| at each grid node
  double sup = 0.0;
};

/// Euler scheme for Y on the path of `grid`:
///   Y_{k+1} = Y_k + lambda u(w) dt + dL + u(w + dL) - u(w) - dt (C u)(w),  w = psi^{-1}(Y_k),
/// with C = A, or the truncated generator over |z| > delta under the Drop policy.
/// Needs a JumpDecomposition or noiseless grid.
ConjugationDefect verify_conjugation(const DriftField& b, const PsiTransform& psi, double lambda, const TimeGrid& grid,
                                     const Vec& x);

}  // namespace levyflow
