#pragma once

// Ensemble studies shared by the command-line experiments and the acceptance
// runner. Paths are seeded with stream_seed(master_seed, path_index) and every
// level of a study reuses the same paths, coarsened.

#include "levyflow/drift_fields.hpp"
#include "levyflow/flow_engine.hpp"
#include "levyflow/resolvent.hpp"
#include "levyflow/transport.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace levyflow {

/// Median of a copy of `values` (mean of the middle pair for even sizes).
double median(std::vector<double> values);

/// Least-squares slope of log(values) against log(steps).
double log_log_slope(const std::vector<double>& steps, const std::vector<double>& values);

/// Mollified drift ready for long ensembles: 1D fields with a Jacobian are tabulated
/// on [-30, 30] with spacing 1e-3; epsilon = 0 returns the field unchanged.
DriftField prepared_drift(const DriftField& raw, double epsilon);

/// Values per refinement level with the time step that produced them (coarsest first).
struct LevelSeries {
  std::vector<double> steps;
  std::vector<double> values;
};

/// Median over paths of sup_x |phi^{-1}(phi(x)) - x| at the horizon, with the path
/// bound at coarsening 2^{levels-1-l} on level l.
LevelSeries roundtrip_study(const DriftField& b, const StableSpec& spec, const std::vector<Vec>& points,
                            double horizon, double base_dt, int levels, const EnsembleSettings& ens);

struct ResidualSetting {
  InitialDatum u0;
  TestFunction theta;
  double h0 = 0.05;  // lattice spacing on the coarsest level, halved per level
};

/// Median over paths of the perturbative residual at the horizon; dt and h halve per level.
LevelSeries perturbative_study(const DriftField& b, const StableSpec& spec, const ResidualSetting& setting,
                               double horizon, double base_dt, int levels, const EnsembleSettings& ens);

/// Median over paths of the Marcus weak residual at the horizon. Paths use the Drop
/// policy, sampled at delta = 4^{-(levels-1)} and recut to delta = 4^{-l} on level l,
/// while dt and h halve per level.
LevelSeries weak_study(const DriftField& b, double alpha, double c_alpha, const ResidualSetting& setting,
                       double horizon, double base_dt, int levels, const EnsembleSettings& ens);

struct ConjugationStudy {
  ItoTanakaResult search;
  double min_singular = 0.0;
  double max_singular = 0.0;
  LevelSeries defects;  // median over paths of sup_t |psi(phi_t(x)) - Y_t(psi(x))|
};

ConjugationStudy conjugation_study(const DriftField& b, const StableSpec& spec, const TorusGrid& torus, const Vec& x,
                                   double horizon, double base_dt, int levels, const EnsembleSettings& ens);

struct MomentStudy {
  std::vector<double> separations;
  std::vector<MonteCarloEstimate> moments;  // E sup_t |X^x - X^{x + s e_1}|^p
  double slope = 0.0;                      // of log moment against log separation
};

MomentStudy moment_study(const DriftField& b, const StableSpec& spec, const Vec& x,
                         const std::vector<double>& separations, double p, const EnsembleSettings& ens);

struct SweepStudy {
  std::vector<double> epsilons;
  std::vector<double> values;
  std::vector<double> std_errors;  // zero where the value is not a Monte Carlo mean
};

/// E sup_t |phi^eps - phi^{eps/ratio}|^p averaged over `points`, for each eps.
SweepStudy stability_study(const DriftField& raw, const StableSpec& spec, const std::vector<double>& epsilons,
                           double ratio, const std::vector<Vec>& points, double p, const EnsembleSettings& ens);

struct CommutatorSetting {
  double flow_lo = -0.5;  // rho = 1 - (2x / width)^2 on [flow_lo, flow_hi]
  double flow_hi = 0.5;
  double flow_h = 0.01;   // spacing of the flow sample points
  double u_h = 5e-4;      // spacing of the lattice carrying u
};

/// Mean over paths of |int R_eps[b,u](phi(x)) rho(x) dx|, with u a bump covering the
/// image of supp rho on each path. 1D only.
SweepStudy commutator_study(const DriftField& b, const StableSpec& spec, const std::vector<double>& epsilons,
                            const CommutatorSetting& setting, const EnsembleSettings& ens);

struct SobolevSetting {
  double lo = -1.0;
  double hi = 1.0;
  double h = 0.05;
  double delta = 0.3;
  double p = 2.0;
  double radius = 1.0;
};

/// Path and t-grid average of [log J phi^eps_t]_{W^{delta,p}} on a midpoint lattice,
/// the p-th root of the discrete Gagliardo sum.
SweepStudy sobolev_study(const DriftField& raw, const StableSpec& spec, const std::vector<double>& epsilons,
                         const SobolevSetting& setting, const EnsembleSettings& ens);

}  // namespace levyflow
