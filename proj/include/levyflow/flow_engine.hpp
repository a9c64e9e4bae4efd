#pragma once

// Explicit Euler flow of dX = b(X) dt + dL on a jump-adapted grid, with the
// backward inverse-flow recursion, derivative flows and Monte Carlo diagnostics.

#include "levyflow/core.hpp"
#include "levyflow/drift_fields.hpp"
#include "levyflow/lattice.hpp"
#include "levyflow/levy_noise.hpp"
#include "levyflow/parallel.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace levyflow {

/// Time grid bound to a Levy path: a subset of the path's nodes that keeps every
/// big-jump node, with the path increments summed over each grid cell.
struct TimeGrid {
  std::vector<double> times;
  std::vector<NodeOrigin> origin;
  std::vector<Vec> increments;  // L(times[k+1]) - L(times[k])
  std::vector<BigJump> big_jumps;  // ledger re-indexed to grid nodes
  StableSpec spec;
  double base_dt = 0.0;
  std::uint64_t path_seed = 0;
  int dim = 1;
  bool noiseless = false;

  /// Keep every `coarsen`-th uniform node of the path (and the horizon) plus all jump nodes.
  static TimeGrid bind(const LevyPath& path, std::size_t coarsen = 1);

  std::size_t cells() const { return increments.size(); }
  std::size_t nodes() const { return times.size(); }
  double dt(std::size_t k) const { return times[k + 1] - times[k]; }
  std::size_t node_of(double t) const;
  double max_cell() const;

  /// L(times[k]) accumulated left to right.
  std::vector<Vec> noise_values() const;
};

using Trajectory = std::vector<Vec>;

/// X_{k+1} = X_k + b(X_k) dt_k + dL_k from node `start`; entry j holds X at node start + j.
Trajectory solve_forward(const DriftField& b, const Vec& x0, const TimeGrid& grid, std::size_t start = 0,
                         std::optional<std::size_t> end = std::nullopt);

/// Endpoint phi_{s,t}(x) for grid nodes s <= t.
Vec flow_map(const DriftField& b, const Vec& x, const TimeGrid& grid, std::size_t s, std::size_t t);

/// Backward recursion Y_k = Y_{k+1} - b(Y_{k+1}) dt_k - dL_k from Y_end = y.
/// Entry s holds phi^{-1}_{s,end}(y) for s = 0..end.
std::vector<Vec> inverse_flow(const DriftField& b, const Vec& y, const TimeGrid& grid, std::size_t end);

/// phi^{-1}_{s,t}(y) only.
Vec inverse_flow_map(const DriftField& b, const Vec& y, const TimeGrid& grid, std::size_t s, std::size_t t);

struct FlowResult {
  std::vector<Vec> initial_points;
  std::vector<Trajectory> trajectories;
  std::uint64_t path_seed = 0;
  const TimeGrid* grid = nullptr;
};

FlowResult solve_flow(const DriftField& b, const std::vector<Vec>& points, const TimeGrid& grid,
                      Exec exec = Exec::Parallel);

enum class DerivativeMethod { Variational, DifferenceQuotient };

struct DerivativeFlow {
  DerivativeMethod method = DerivativeMethod::Variational;
  double lambda = 0.0;       // difference-quotient step; 0 for Variational
  std::vector<Mat> matrices; // one per grid node
};

/// M_{k+1} = M_k + Db(X_k) M_k dt_k, M_0 = I. The additive noise drops out.
DerivativeFlow derivative_flow_variational(const DriftField& b, const Vec& x, const TimeGrid& grid);

/// (phi_t(x + lambda e_axis) - phi_t(x)) / lambda at every node, on the shared path.
std::vector<Vec> derivative_flow_fd(const DriftField& b, const Vec& x, const TimeGrid& grid, double lambda, int axis);

/// All columns of the difference-quotient derivative; lambda <= 0 selects 1e-5 (1 + |x|).
DerivativeFlow derivative_flow_fd(const DriftField& b, const Vec& x, const TimeGrid& grid, double lambda = 0.0);

/// log J_{k+1} = log J_k + div b(X_k) dt_k along the forward trajectory.
std::vector<double> log_jacobian(const DriftField& b, const Vec& x, const TimeGrid& grid);

/// |phi_{s,t}(x) - phi_{r,t}(phi_{s,r}(x))| for grid nodes s <= r <= t.
double semiflow_defect(const DriftField& b, const TimeGrid& grid, std::size_t s, std::size_t r, std::size_t t,
                       const Vec& x);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Sample mean with standard error; summation in index order.
MonteCarloEstimate summarize(const std::vector<double>& values);

struct EnsembleSettings {
  std::size_t n_paths = 100;
  double horizon = 1.0;
  double base_dt = 1e-3;
  std::uint64_t master_seed = 1;
  Exec exec = Exec::Parallel;
};

/// E sup_{t<=T} |X^x_t - X^y_t|^p over common paths.
MonteCarloEstimate moment_estimate(const DriftField& b, const StableSpec& spec, const Vec& x, const Vec& y,
                                   double p, const EnsembleSettings& ens);

/// sum over ordered lattice pairs i != j inside the ball |x| <= radius of
/// |u_i - u_j|^p / |x_i - x_j|^{d + delta p} h^{2d}: the p-th power of the
/// discrete Gagliardo seminorm.
double discrete_sobolev_seminorm(const GridField& values, double radius, double delta, double p);

/// Row n: E sup_t |phi^n_t(x) - phi_t(x)|^p averaged over `points`, common paths.
std::vector<MonteCarloEstimate> stability_sweep(const DriftField& b, const std::vector<DriftField>& b_sequence,
                                                const StableSpec& spec, const std::vector<Vec>& points, double p,
                                                const EnsembleSettings& ens);

}  // namespace levyflow
