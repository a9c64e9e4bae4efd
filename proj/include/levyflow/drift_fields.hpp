#pragma once

#include "levyflow/core.hpp"
#include "levyflow/lattice.hpp"

#include <functional>
#include <string>
#include <vector>

namespace levyflow {

/// A bounded Hoelder drift b : R^d -> R^d with optional derivative handles.
struct DriftField {
  std::string name;
  int dim = 1;
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;       // empty when Db is unavailable
  std::function<double(const Vec&)> divergence;  // empty when div b is unavailable
  double holder_beta = 1.0;
  double bound_sup = 0.0;     // ||b||_0
  double bound_holder = 0.0;  // [b]_beta
  bool identically_zero = false;
  // Coordinate values c where b fails to be smooth across the hyperplanes x_i = c.
  std::vector<double> kinks;

  Vec operator()(const Vec& x) const { return eval(x); }
  bool has_jacobian() const { return static_cast<bool>(jacobian); }
  bool has_divergence() const { return static_cast<bool>(divergence); }
};

/// b(x) = sign(x) (|x| ^ R)^gamma / (1 - gamma) on R. The divergence handle uses
/// max(|x|, eta) in place of |x| inside the window |x| < eta around the
/// non-integrable point x = 0.
DriftField counterexample_field(double gamma, double R, double eta = 1e-6);

/// b_i(x) = amplitude * sin(frequency * x_i + phase).
DriftField trig_field(int dim, double amplitude, double frequency, double phase = 0.0);

/// b(x) = A x. Unbounded; provided for exact-solution tests.
DriftField linear_field(const Mat& A);

DriftField constant_field(const Vec& c);

DriftField zero_field(int dim);

/// Field from the registry syntax, e.g. "counterexample(0.5,4)", "trig(0.1,1)",
/// "trig(1,1,1.5707963267948966)", "linear(0,-1,1,0)", "constant(1)", "zero".
/// Linear matrices are row-major; dim is inferred from the entry count.
DriftField field_from_registry(const std::string& text, int dim);

// Mollification --------------------------------------------------------------

/// Plateau bump with 1_{B(1/4)} <= kernel <= 1_{B(2)}, values in [0,1], C^infinity.
double mollifier_base(double r);
/// d/dr of mollifier_base.
double mollifier_base_derivative(double r);

struct MollifierSpec {
  double epsilon = 0.1;
  double normalization = 0.0;  // c_d with c_d * int base = 1
  int dim = 1;
  int nodes = 16;              // Gauss-Legendre nodes per axis on [-2 eps, 2 eps]

  static MollifierSpec make(double epsilon, int dim, int nodes = 16);

  /// theta_eps(y) = eps^{-d} c_d base(|y| / eps).
  double kernel(const Vec& y) const;
  Vec kernel_gradient(const Vec& y) const;
};

/// b^eps = b * theta_eps with Jacobian and divergence obtained by differentiating
/// the kernel. Tensor Gauss-Legendre weights are renormalised so constants are
/// reproduced exactly and linear fields keep their exact Jacobian. Axes are split
/// at the field's kinks, with nodes graded towards each kink.
DriftField mollify(const DriftField& field, const MollifierSpec& spec);

/// Piecewise cubic Hermite table of a 1D field with a Jacobian on n nodes of [lo, hi].
/// Jacobian and divergence are the derivative of the interpolant; outside [lo, hi]
/// the original field is used.
DriftField tabulate(const DriftField& field, double lo, double hi, std::size_t n);

// Commutator -------------------------------------------------------------------

/// R_eps[b,u](x) = theta_eps * (b.Du)(x) - b(x).D(theta_eps * u)(x), with b.Du taken
/// in the distributional sense <b.Du, rho> = -<u b, D rho> - <u div b, rho>.
/// Convolutions with the grid field are direct lattice sums.
double commutator(const DriftField& b, const GridField& u, const MollifierSpec& spec, const Vec& x);

/// Sampled flow data for the pairing: points x_i with quadrature weights and images phi(x_i).
struct FlowSamples {
  std::vector<Vec> points;
  std::vector<Vec> images;
  std::vector<double> weights;
};

/// sum_i w_i R_eps[b,u](phi(x_i)) rho(x_i).
double commutator_pairing(const DriftField& b, const GridField& u, const FlowSamples& flow,
                          const std::function<double(const Vec&)>& rho, const MollifierSpec& spec);

// Lattice diagnostics ----------------------------------------------------------

double lattice_sup(const DriftField& b, const Lattice& lattice);
/// max over lattice pairs of |b(x) - b(y)| / |x - y|^beta.
double lattice_holder(const DriftField& b, const Lattice& lattice, double beta);

}  // namespace levyflow
