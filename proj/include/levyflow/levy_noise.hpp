#pragma once

// Isotropic alpha-stable noise: exact increments by Gaussian subordination,
// jump-adapted paths with an explicit big-jump ledger, and radial quadrature
// against the Levy measure nu(dz) = k |z|^{-d-alpha} dz.

#include "levyflow/core.hpp"
#include "levyflow/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace levyflow {

enum class SimulationMode { ExactIncrement, JumpDecomposition };
enum class SmallJumpPolicy { Gaussian, Drop };

struct StableSpec {
  double alpha = 1.5;
  double c_alpha = 1.0;
  int dim = 1;
  SimulationMode mode = SimulationMode::JumpDecomposition;
  double cutoff_delta = 1.0;
  SmallJumpPolicy small_jump_policy = SmallJumpPolicy::Gaussian;
  double levy_density_constant = 0.0;  // k; 0 means "derive from c_alpha"

  /// Spec with k set to the value that makes nu consistent with c_alpha.
  static StableSpec make(double alpha, double c_alpha, int dim,
                         SimulationMode mode = SimulationMode::JumpDecomposition,
                         double cutoff_delta = 1.0,
                         SmallJumpPolicy policy = SmallJumpPolicy::Gaussian);

  /// Throws InvalidSpec unless alpha in (0,2), c_alpha > 0, 1 <= dim <= kMaxDim,
  /// cutoff in (0,1] and k > 0.
  void validate() const;
};

/// Surface area of the unit sphere in R^d (2 for d = 1, 2*pi for d = 2).
double sphere_area(int dim);

/// k such that int (1 - cos(xi.z)) k|z|^{-d-alpha} dz = c_alpha |xi|^alpha.
double density_constant_for(double alpha, double c_alpha, int dim);

/// Closed-form symbol k |xi|^alpha / C(d, alpha) implied by the density constant.
double symbol_from_density(const StableSpec& spec, double xi_norm);

enum class NodeOrigin : std::uint8_t { Uniform, BigJump };

struct BigJump {
  double time;
  Vec jump;
  std::size_t node;  // index into LevyPath::times
};

/// One realized noise trajectory on a jump-adapted grid. Immutable after construction.
struct LevyPath {
  StableSpec spec;
  double base_dt = 0.0;
  std::vector<double> times;          // times[0] == 0, strictly increasing
  std::vector<NodeOrigin> origin;     // one entry per node
  std::vector<Vec> increments;        // increments[k] = L(times[k+1]) - L(times[k])
  std::vector<BigJump> big_jumps;     // ascending in time
  std::uint64_t seed = 0;
  bool noiseless = false;             // zero path: no Levy measure acts

  int dim() const { return spec.dim; }
  double horizon() const { return times.back(); }
  std::size_t cells() const { return increments.size(); }

  /// Index of grid time t; throws Query for a non-grid time.
  std::size_t node_of(double t) const;

  /// Sum of the increments of cells [i, j) in ascending order.
  Vec increment_between(std::size_t i, std::size_t j) const;

  /// L(times[k]) for every node, by left-to-right accumulation.
  std::vector<Vec> values() const;
};

/// One draw of L(dt) in ExactIncrement semantics.
Vec sample_stable_increment(const StableSpec& spec, double dt, CounterRng& rng);

/// Path on [0, horizon]; all randomness comes from the stream keyed by `seed`.
LevyPath sample_path(const StableSpec& spec, double horizon, double base_dt, std::uint64_t seed);

/// Uniform grid with all increments zero: the deterministic limit used by tests.
LevyPath zero_path(const StableSpec& spec, double horizon, double base_dt);

/// L(t) - L(s) for grid times s <= t.
Vec increment(const LevyPath& path, double s, double t);

/// Re-cut a Drop-policy path at a larger threshold: ledger jumps with
/// |z| <= new_delta are removed together with their nodes, so the result is the
/// exact path of the coarser truncation driven by the same randomness.
LevyPath recut(const LevyPath& path, double new_delta);

using RadialFunction = std::function<double(double)>;

/// int_{rmin < |z| < rmax} g(|z|) nu(dz); rmax may be +infinity.
/// Throws Divergence when the integrand does not decay at an infinite end.
double nu_radial_integral(const StableSpec& spec, const RadialFunction& g, double rmin,
                          double rmax, double rel_tol = 1e-8);

/// nu({|z| > delta}).
double big_jump_intensity(const StableSpec& spec, double delta);

/// Per-component variance rate (1/d) int_{|z|<=delta} |z|^2 nu(dz) of the
/// Gaussian small-jump surrogate.
double small_jump_variance(const StableSpec& spec, double delta);

/// E cos(x w_1) for w uniform on the unit sphere of R^d.
double sphere_mean_cos(double x, int dim);

/// int_{|z| > delta} (1 - cos(xi.z)) nu(dz) as a function of |xi|.
double truncated_symbol(const StableSpec& spec, double xi_norm, double delta);

/// int (1 - cos(xi.z)) nu(dz) evaluated purely by quadrature (no closed form),
/// for checking that k and c_alpha agree.
double reconstruct_symbol(const StableSpec& spec, double xi_norm);

struct SymbolCheck {
  Vec xi;
  double empirical = 0.0;
  double analytic = 0.0;
  double deviation = 0.0;  // |empirical - analytic|
  double std_error = 0.0;
  bool within_3se = false;
};

struct SymbolReport {
  std::vector<SymbolCheck> checks;
  std::size_t n_samples = 0;
  bool all_within_3se() const;
};

/// Empirical E cos(xi.L_1) against exp(-c_alpha |xi|^alpha).
SymbolReport validate_symbol(const StableSpec& spec, std::span<const Vec> xi_list,
                             std::size_t n_samples, std::uint64_t seed);

}  // namespace levyflow
