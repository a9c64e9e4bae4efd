#pragma once

// Transport solutions u(t,x) = u0(phi_t^{-1}(x)) on a realized path, lattice
// pairings, and the two pathwise identities the solution must satisfy: the
// Marcus weak form and the perturbative (noise-shifted) form.

#include "levyflow/core.hpp"
#include "levyflow/drift_fields.hpp"
#include "levyflow/flow_engine.hpp"
#include "levyflow/lattice.hpp"
#include "levyflow/parallel.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace levyflow {

struct InitialDatum {
  std::string name;
  std::function<double(const Vec&)> eval;
  double bound_M = 0.0;  // sup |u0|

  double operator()(const Vec& x) const { return eval(x); }
};

InitialDatum constant_datum(double c);
/// height * exp(1 - 1/(1 - |x - c|^2 / r^2)) inside the ball, 0 outside (peak value = height).
InitialDatum bump_datum(const Vec& center, double radius, double height = 1.0);
InitialDatum function_datum(std::string name, std::function<double(const Vec&)> f, double bound_M);

struct TestFunction {
  std::string name;
  std::function<double(const Vec&)> eval;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
  Vec center;
  double support_radius = 0.0;  // +inf for functions without compact support

  double operator()(const Vec& x) const { return eval(x); }
};

/// Smooth bump height * exp(1 - 1/(1 - |x - c|^2 / r^2)) with analytic derivatives.
TestFunction bump_test_function(const Vec& center, double radius, double height = 1.0);
/// theta(x) = x^T Q x / 2 + g.x; not compactly supported, used for Taylor self-checks.
TestFunction quadratic_test_function(const Mat& Q, const Vec& g);
TestFunction zero_test_function(int dim);

/// Cell-centred lattice with spacing ~h covering the box center +- radius.
Lattice box_lattice(const Vec& center, double radius, double h);

struct TransportSolution {
  DriftField b;
  InitialDatum u0;
  const TimeGrid* grid = nullptr;
  Lattice xgrid;
  std::vector<std::size_t> snapshot_nodes;
  std::vector<std::vector<double>> snapshots;  // snapshots[i][j] = u(t_{node i}, xgrid point j)

  /// u(t_node, x) by one backward solve; available at every grid node.
  double value(std::size_t node, const Vec& x) const;
  /// Values at many points, parallel over points.
  std::vector<double> values(std::size_t node, const std::vector<Vec>& points, Exec exec = Exec::Parallel) const;
  /// Stored snapshot for a node; throws Coverage if the node was not requested.
  const std::vector<double>& snapshot(std::size_t node) const;
  double max_abs() const;
};

/// Snapshots at the requested grid nodes over xgrid.
TransportSolution solve(const DriftField& b, const InitialDatum& u0, const TimeGrid& grid,
                        const std::vector<std::size_t>& nodes, const Lattice& xgrid, Exec exec = Exec::Parallel);

/// int theta(x) u(t_node, x) dx by the midpoint rule on the snapshot lattice.
/// Throws Coverage if the lattice does not contain supp theta or the node has no snapshot.
double pairing(const TransportSolution& sol, const TestFunction& theta, std::size_t node);

/// int theta(x) u(t_node, x) dx on a lattice of spacing h around supp theta, values on demand.
double pairing_on_demand(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                         Exec exec = Exec::Parallel);

/// int_{rmin < |z| <= rmax} [theta(x+z) - theta(x) - z.Dtheta(x)] nu(dz) by radial quadrature
/// over antipodal direction pairs, so the linear term cancels exactly; rmin = 0 is allowed.
double levy_generator(const TestFunction& theta, const StableSpec& spec, const Vec& x, double rmin, double rmax);

struct MarcusTerms {
  double pairing = 0.0;      // u_t(theta)
  double initial = 0.0;      // (1) u_0(theta)
  double drift = 0.0;        // (2) int int u [b.Dtheta + div b theta]
  double small_jumps = 0.0;  // (3) realized jumps with |z| <= 1 (and Gaussian cells) minus their compensator
  double large_jumps = 0.0;  // (4) realized jumps with |z| > 1
  double compensator = 0.0;  // (5) int int_B int u [theta(x+z) - theta(x) - z.Dtheta] dx nu(dz) ds

  double sum() const { return initial + drift + small_jumps + large_jumps + compensator; }
  double residual() const;
};

/// Terms of the Marcus weak form at grid node `node`, midpoint lattices of spacing h.
/// Needs a JumpDecomposition grid and a divergence handle on b. On a noiseless grid
/// the Levy measure is absent, so terms (3)-(5) are zero.
MarcusTerms marcus_weak_terms(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                              Exec exec = Exec::Parallel);

double weak_residual(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                     Exec exec = Exec::Parallel);

/// |u_t(theta) - int theta(x + L_t) u0 - sum_k dt_k int [b.Dtheta + div b theta](x + L_t - L_{k+1}) u_{k+1}(x) dx|.
double perturbative_residual(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                             Exec exec = Exec::Parallel);

struct SeparationCurve {
  double perturbation = 0.0;
  std::vector<double> times;
  std::vector<double> median_separation;  // median over paths of |X^pert - X^0| at each time
  double final_median = 0.0;
};

struct NonuniquenessReport {
  double gamma = 0.0;
  double R = 0.0;
  double horizon = 0.0;
  double dt = 0.0;
  bool noisy = false;
  std::size_t n_paths = 0;
  std::uint64_t master_seed = 0;
  std::vector<SeparationCurve> curves;
};

/// Trajectories of dX = b(X) dt (+ dL) from 0 and from each perturbation, on common paths.
NonuniquenessReport nonuniqueness_demo(double gamma, double R, const std::optional<StableSpec>& noise,
                                       const std::vector<double>& perturbations, std::size_t n_paths,
                                       double horizon, double dt, std::uint64_t master_seed,
                                       Exec exec = Exec::Parallel);

}  // namespace levyflow
