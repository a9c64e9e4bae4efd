#pragma once

// Experiment driver: plain-text key-value configuration, validation, and the
// orchestration behind each command-line subcommand.

#include "levyflow/io.hpp"
#include "levyflow/levy_noise.hpp"
#include "levyflow/studies.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace levyflow {

enum class Experiment {
  SamplePath,
  Flow,
  InverseFlow,
  Transport,
  WeakCheck,
  PerturbativeCheck,
  Resolvent,
  NonUniqueness,
  Stability,
  Moments,
  Commutator,
  SobolevDiag,
  Convergence,
};

/// Subcommand spelling, e.g. "weak-check".
std::string_view experiment_name(Experiment e);
std::optional<Experiment> experiment_from_name(std::string_view name);
const std::vector<Experiment>& all_experiments();

enum class OutputFormat { Csv, Json };
enum class DerivativeOutput { None, Variational, DifferenceQuotient };
enum class ConvergenceQuantity { RoundTrip, Weak, Perturbative };

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
  int schema = kSchemaVersion;
  Experiment experiment = Experiment::SamplePath;

  // noise.*
  double alpha = 1.5;
  double c_alpha = 1.0;
  int dim = 1;
  SimulationMode mode = SimulationMode::JumpDecomposition;
  double cutoff_delta = 1.0;
  SmallJumpPolicy small_jump_policy = SmallJumpPolicy::Gaussian;
  double levy_density_constant = 0.0;  // 0: derived from c_alpha

  // drift.*
  std::string drift = "trig(1,1)";
  double mollify_epsilon = 0.0;  // 0: use the field as given

  // discretization.*
  double horizon = 1.0;
  double base_dt = 1e-3;
  int coarsen = 1;
  double h = 0.05;
  double box_lo = -1.0;
  double box_hi = 1.0;

  // ensemble.*
  std::size_t n_paths = 1;
  std::uint64_t master_seed = 1;
  bool parallel = true;

  // output.*
  std::string out_dir = "out";
  OutputFormat format = OutputFormat::Csv;

  // gate.*
  bool override_gate = false;

  // Experiment parameters. Points are tuples of `dim` coordinates.
  std::vector<Vec> points;
  DerivativeOutput derivatives = DerivativeOutput::None;
  double datum_radius = 1.5;
  std::size_t snapshots = 5;
  double theta_radius = 1.0;
  double theta_center = 0.0;  // every coordinate
  double resolvent_period = 6.283185307179586;
  int resolvent_modes = 128;
  double resolvent_tol = 1e-10;
  std::vector<double> perturbations;
  bool noisy = true;
  double moment_p = 2.0;
  std::vector<double> separations;
  std::vector<double> epsilons;
  double stability_ratio = 4.0;
  double commutator_flow_h = 0.01;
  double commutator_u_h = 5e-4;
  double sobolev_delta = 0.3;
  double sobolev_p = 2.0;
  double sobolev_radius = 1.0;
  ConvergenceQuantity quantity = ConvergenceQuantity::Perturbative;
  int levels = 4;

  StableSpec noise_spec() const;
  EnsembleSettings ensemble() const;
  Exec exec() const { return parallel ? Exec::Parallel : Exec::Serial; }

  /// Every key with its current value, sorted by key.
  std::vector<std::pair<std::string, std::string>> canonical() const;
  /// FNV-1a over the canonical "key=value\n" lines.
  std::uint64_t hash() const;
  Provenance provenance() const;
};

/// Defaults that make each experiment meaningful without a config file.
ExperimentConfig default_config(Experiment e);

/// Known configuration keys, sorted.
std::vector<std::string> config_keys();

/// Set one key from its text form. Throws InvalidSpec "key: reason" for unknown keys
/// or unparsable values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parse "key = value" lines; '#' starts a comment anywhere on a line. Inside a
/// [section] a bare key gets the section prefix while a dotted key is taken as
/// written. `schema` is required and the `experiment` key selects the defaults. When `forced` is given the
/// file may omit `experiment`, and a different value is an error.
ExperimentConfig parse_config(std::string_view text, std::optional<Experiment> forced = std::nullopt);

/// Throws InvalidSpec "field.path: reason" for out-of-range values and for
/// alpha/2 + holder_beta <= 1 unless the gate is overridden.
void validate(const ExperimentConfig& cfg);

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> artifacts;  // paths written, in order
  Report report;
};

int exit_code_for(ErrorKind kind);

/// Validate, execute, and write artifacts under cfg.out_dir. Never throws for
/// validation or numeric failures; they are mapped to exit codes 2, 3 and 4.
RunResult run(const ExperimentConfig& cfg);

struct ConvergenceTable {
  std::vector<double> steps;
  std::vector<double> values;
  std::vector<double> ratios;  // values[i] / values[i + 1]
  double order = 0.0;          // least-squares slope of log value against log step
  bool exact = false;          // every value is zero
  bool monotone = true;        // values decrease strictly with the step
  std::string order_text() const;  // "exact", "undefined" or the fitted order
};

/// Fit from explicit data. Needs at least 3 levels.
ConvergenceTable fit_convergence(const std::vector<double>& steps, const std::vector<double>& values);

/// Run the configured quantity (round trip, weak or perturbative residual) over
/// `refinement_levels` halvings of the step, and fit the order.
ConvergenceTable convergence_table(const ExperimentConfig& cfg, int refinement_levels);

}  // namespace levyflow
