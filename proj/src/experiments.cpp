#include "levyflow/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace levyflow {

namespace {

struct ExperimentEntry {
  Experiment id;
  const char* name;
};

constexpr ExperimentEntry kExperiments[] = {
    {Experiment::SamplePath, "sample-path"},
    {Experiment::Flow, "flow"},
    {Experiment::InverseFlow, "inverse-flow"},
    {Experiment::Transport, "transport"},
    {Experiment::WeakCheck, "weak-check"},
    {Experiment::PerturbativeCheck, "perturbative-check"},
    {Experiment::Resolvent, "resolvent"},
    {Experiment::NonUniqueness, "nonuniqueness-demo"},
    {Experiment::Stability, "stability"},
    {Experiment::Moments, "moments"},
    {Experiment::Commutator, "commutator"},
    {Experiment::SobolevDiag, "sobolev-diag"},
    {Experiment::Convergence, "convergence"},
};

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

[[noreturn]] void invalid(const std::string& key, const std::string& why) {
  fail(ErrorKind::InvalidSpec, key + ": " + why);
}

double real_of(const std::string& key, const std::string& v) {
  try {
    return parse_real(v, key);
  } catch (const Error&) {
    invalid(key, "expected a number, got '" + v + "'");
  }
}

template <class Int>
Int integer_of(const std::string& key, const std::string& v) {
  Int x{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    invalid(key, "expected a non-negative integer, got '" + v + "'");
  return x;
}

bool bool_of(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  invalid(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::vector<double> list_of(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(real_of(key, part));
  return out;
}

std::vector<Vec> points_of(const std::string& key, const std::string& v) {
  std::vector<Vec> out;
  if (trim(v).empty()) return out;
  for (const auto& tuple : split(v, ';')) {
    const auto coords = list_of(key, tuple);
    if (coords.empty() || coords.size() > static_cast<std::size_t>(kMaxDim)) invalid(key, "point '" + tuple + "' has a bad size");
    Vec p(static_cast<int>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) p(static_cast<int>(i)) = coords[i];
    out.push_back(p);
  }
  return out;
}

std::string text_of(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_real(xs[i]);
  return s;
}

std::string text_of(const std::vector<Vec>& ps) {
  std::string s;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i) s += ';';
    for (int j = 0; j < ps[i].size(); ++j) s += (j ? "," : "") + format_real(ps[i](j));
  }
  return s;
}

template <class E>
struct Names {
  E value;
  const char* name;
};

template <class E, std::size_t N>
E enum_of(const std::string& key, const std::string& v, const Names<E> (&names)[N]) {
  std::string allowed;
  for (const auto& n : names) {
    if (v == n.name) return n.value;
    allowed += (allowed.empty() ? "" : ", ") + std::string(n.name);
  }
  invalid(key, "expected one of " + allowed + ", got '" + v + "'");
}

template <class E, std::size_t N>
std::string name_of(E e, const Names<E> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == e) return n.name;
  return "?";
}

constexpr Names<SimulationMode> kModes[] = {{SimulationMode::JumpDecomposition, "jump"},
                                            {SimulationMode::ExactIncrement, "exact"}};
constexpr Names<SmallJumpPolicy> kPolicies[] = {{SmallJumpPolicy::Gaussian, "gaussian"}, {SmallJumpPolicy::Drop, "drop"}};
constexpr Names<OutputFormat> kFormats[] = {{OutputFormat::Csv, "csv"}, {OutputFormat::Json, "json"}};
constexpr Names<DerivativeOutput> kDerivatives[] = {{DerivativeOutput::None, "none"},
                                                    {DerivativeOutput::Variational, "variational"},
                                                    {DerivativeOutput::DifferenceQuotient, "difference"}};
constexpr Names<ConvergenceQuantity> kQuantities[] = {{ConvergenceQuantity::RoundTrip, "roundtrip"},
                                                      {ConvergenceQuantity::Weak, "weak"},
                                                      {ConvergenceQuantity::Perturbative, "perturbative"}};

struct KeyDef {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define LF_REAL(KEY, FIELD)                                                                  \
  KeyDef {                                                                                   \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = real_of(KEY, v); },      \
        [](const ExperimentConfig& c) { return format_real(c.FIELD); }                       \
  }
#define LF_INT(KEY, FIELD, TYPE)                                                                   \
  KeyDef {                                                                                         \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = integer_of<TYPE>(KEY, v); },   \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                          \
  }
#define LF_BOOL(KEY, FIELD)                                                                       \
  KeyDef {                                                                                        \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = bool_of(KEY, v); },           \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }         \
  }
#define LF_LIST(KEY, FIELD)                                                                   \
  KeyDef {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = list_of(KEY, v); },       \
        [](const ExperimentConfig& c) { return text_of(c.FIELD); }                            \
  }
#define LF_ENUM(KEY, FIELD, TABLE)                                                                \
  KeyDef {                                                                                        \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = enum_of(KEY, v, TABLE); },    \
        [](const ExperimentConfig& c) { return name_of(c.FIELD, TABLE); }                        \
  }
#define LF_TEXT(KEY, FIELD)                                                                   \
  KeyDef {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },                     \
        [](const ExperimentConfig& c) { return c.FIELD; }                                     \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t = {
        LF_INT("schema", schema, int),
        KeyDef{"experiment",
               [](ExperimentConfig& c, const std::string& v) {
                 const auto e = experiment_from_name(v);
                 if (!e) invalid("experiment", "unknown experiment '" + v + "'");
                 c.experiment = *e;
               },
               [](const ExperimentConfig& c) { return std::string(experiment_name(c.experiment)); }},
        LF_REAL("noise.alpha", alpha),
        LF_REAL("noise.c_alpha", c_alpha),
        LF_INT("noise.dim", dim, int),
        LF_ENUM("noise.mode", mode, kModes),
        LF_REAL("noise.cutoff_delta", cutoff_delta),
        LF_ENUM("noise.small_jump_policy", small_jump_policy, kPolicies),
        LF_REAL("noise.levy_density_constant", levy_density_constant),
        LF_TEXT("drift.field", drift),
        LF_REAL("drift.mollify_epsilon", mollify_epsilon),
        LF_REAL("discretization.horizon", horizon),
        LF_REAL("discretization.base_dt", base_dt),
        LF_INT("discretization.coarsen", coarsen, int),
        LF_REAL("discretization.h", h),
        LF_REAL("discretization.box_lo", box_lo),
        LF_REAL("discretization.box_hi", box_hi),
        LF_INT("ensemble.n_paths", n_paths, std::size_t),
        LF_INT("ensemble.master_seed", master_seed, std::uint64_t),
        LF_BOOL("ensemble.parallel", parallel),
        LF_TEXT("output.dir", out_dir),
        LF_ENUM("output.format", format, kFormats),
        LF_BOOL("gate.override", override_gate),
        KeyDef{"experiment.points",
               [](ExperimentConfig& c, const std::string& v) { c.points = points_of("experiment.points", v); },
               [](const ExperimentConfig& c) { return text_of(c.points); }},
        LF_ENUM("flow.derivatives", derivatives, kDerivatives),
        LF_REAL("transport.datum_radius", datum_radius),
        LF_INT("transport.snapshots", snapshots, std::size_t),
        LF_REAL("residual.theta_radius", theta_radius),
        LF_REAL("residual.theta_center", theta_center),
        LF_REAL("resolvent.period", resolvent_period),
        LF_INT("resolvent.modes", resolvent_modes, int),
        LF_REAL("resolvent.tol", resolvent_tol),
        LF_LIST("nonuniqueness.perturbations", perturbations),
        LF_BOOL("nonuniqueness.noisy", noisy),
        LF_REAL("moments.p", moment_p),
        LF_LIST("moments.separations", separations),
        LF_LIST("sweep.epsilons", epsilons),
        LF_REAL("stability.ratio", stability_ratio),
        LF_REAL("commutator.flow_h", commutator_flow_h),
        LF_REAL("commutator.u_h", commutator_u_h),
        LF_REAL("sobolev.delta", sobolev_delta),
        LF_REAL("sobolev.p", sobolev_p),
        LF_REAL("sobolev.radius", sobolev_radius),
        LF_ENUM("convergence.quantity", quantity, kQuantities),
        LF_INT("convergence.levels", levels, int),
    };
    std::sort(t.begin(), t.end(), [](const KeyDef& a, const KeyDef& b) { return std::string(a.key) < b.key; });
    return t;
  }();
  return table;
}

#undef LF_REAL
#undef LF_INT
#undef LF_BOOL
#undef LF_LIST
#undef LF_ENUM
#undef LF_TEXT

const KeyDef* find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (key == k.key) return &k;
  return nullptr;
}

// counterexample(gamma,R) parameters from the registry text.
std::pair<double, double> counterexample_parameters(const std::string& text) {
  const std::string head = "counterexample(";
  const std::string t = trim(text);
  if (t.rfind(head, 0) != 0 || t.back() != ')') invalid("drift.field", "nonuniqueness-demo needs counterexample(gamma,R)");
  const auto args = list_of("drift.field", t.substr(head.size(), t.size() - head.size() - 1));
  if (args.size() != 2) invalid("drift.field", "nonuniqueness-demo needs counterexample(gamma,R)");
  return {args[0], args[1]};
}

}  // namespace

std::string_view experiment_name(Experiment e) {
  for (const auto& entry : kExperiments)
    if (entry.id == e) return entry.name;
  return "?";
}

std::optional<Experiment> experiment_from_name(std::string_view name) {
  for (const auto& entry : kExperiments)
    if (name == entry.name) return entry.id;
  return std::nullopt;
}

const std::vector<Experiment>& all_experiments() {
  static const std::vector<Experiment> all = [] {
    std::vector<Experiment> v;
    for (const auto& entry : kExperiments) v.push_back(entry.id);
    return v;
  }();
  return all;
}

StableSpec ExperimentConfig::noise_spec() const {
  StableSpec s = StableSpec::make(alpha, c_alpha, dim, mode, cutoff_delta, small_jump_policy);
  if (levy_density_constant > 0.0) s.levy_density_constant = levy_density_constant;
  return s;
}

EnsembleSettings ExperimentConfig::ensemble() const {
  EnsembleSettings e;
  e.n_paths = n_paths;
  e.horizon = horizon;
  e.base_dt = base_dt;
  e.master_seed = master_seed;
  e.exec = exec();
  return e;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::canonical() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table()) out.emplace_back(k.key, k.get(*this));
  return out;
}

std::uint64_t ExperimentConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : canonical()) text += k + "=" + v + "\n";
  return fnv1a64(text);
}

Provenance ExperimentConfig::provenance() const {
  Provenance p;
  p.config_hash = hash();
  p.parameters = canonical();
  return p;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.key);
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const KeyDef* def = find_key(key);
  if (!def) invalid(key, "unknown key");
  def->set(cfg, value);
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::SamplePath:
      break;
    case Experiment::Flow:
    case Experiment::InverseFlow:
      c.drift = "trig(1,1)";
      break;
    case Experiment::Transport:
      c.horizon = 0.5;
      c.base_dt = 2.5e-3;
      break;
    case Experiment::WeakCheck:
      c.horizon = 0.5;
      c.base_dt = 2.5e-3;
      c.h = 0.0125;
      c.n_paths = 5;
      c.datum_radius = 1.5;
      break;
    case Experiment::PerturbativeCheck:
    case Experiment::Convergence:
      c.drift = "counterexample(0.6,4)";
      c.mollify_epsilon = 0.1;
      c.cutoff_delta = 0.5;
      c.horizon = 0.5;
      c.base_dt = 2.5e-3;
      c.h = 0.05;
      c.n_paths = 5;
      c.theta_center = 0.2;
      c.datum_radius = 1.5;
      c.levels = 4;
      break;
    case Experiment::Resolvent:
      c.drift = "trig(0.1,1)";
      break;
    case Experiment::NonUniqueness:
      c.drift = "counterexample(0.5,4)";
      c.horizon = 2.0;
      c.base_dt = 1e-3;
      c.n_paths = 100;
      c.perturbations = {1e-2, 1e-4, 1e-6};
      break;
    case Experiment::Stability:
      c.drift = "counterexample(0.6,1)";
      c.n_paths = 500;
      c.epsilons = {0.2, 0.1, 0.05};
      c.points = {Vec::Constant(1, -0.5), Vec::Constant(1, -0.1), Vec::Constant(1, 0.0), Vec::Constant(1, 0.1),
                  Vec::Constant(1, 0.5)};
      break;
    case Experiment::Moments:
      c.drift = "counterexample(0.6,1)";
      c.n_paths = 2000;
      c.separations = {1e-1, 1e-2, 1e-3};
      c.points = {Vec::Constant(1, 0.0)};
      break;
    case Experiment::Commutator:
      c.drift = "counterexample(0.7,1)";
      c.horizon = 0.5;
      c.box_lo = -0.5;
      c.box_hi = 0.5;
      c.n_paths = 20;
      c.epsilons = {0.2, 0.1, 0.05, 0.025};
      break;
    case Experiment::SobolevDiag:
      c.drift = "counterexample(0.7,1)";
      c.base_dt = 0.01;
      c.n_paths = 50;
      c.epsilons = {0.2, 0.1, 0.05};
      break;
  }
  return c;
}

ExperimentConfig parse_config(std::string_view text, std::optional<Experiment> forced) {
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  auto at = [](std::size_t line, const std::string& what) -> Error {
    return Error(ErrorKind::InvalidSpec, "line " + std::to_string(line) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));  // '#' starts a comment
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw at(lineno, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw at(lineno, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    if (!find_key(key)) throw at(lineno, key + ": unknown key");
    if (seen.count(key)) throw at(lineno, key + ": duplicate key (first set on line " + std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    entries.push_back({key, trim(std::string_view(line).substr(eq + 1)), lineno});
  }

  const auto schema = std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "schema"; });
  if (schema == entries.end()) fail(ErrorKind::InvalidSpec, "schema: missing (expected schema = " + std::to_string(kSchemaVersion) + ")");

  std::optional<Experiment> chosen = forced;
  for (const auto& e : entries) {
    if (e.key != "experiment") continue;
    const auto named = experiment_from_name(e.value);
    if (!named) throw at(e.line, "experiment: unknown experiment '" + e.value + "'");
    if (forced && *named != *forced)
      throw at(e.line, "experiment: config names '" + e.value + "' but '" + std::string(experiment_name(*forced)) +
                           "' was requested");
    chosen = named;
  }
  if (!chosen) fail(ErrorKind::InvalidSpec, "experiment: missing");

  ExperimentConfig cfg = default_config(*chosen);
  for (const auto& e : entries) {
    if (e.key == "experiment") continue;
    try {
      set_config_value(cfg, e.key, e.value);
    } catch (const Error& err) {
      throw at(e.line, err.what());
    }
  }
  if (cfg.schema != kSchemaVersion)
    throw at(schema->line, "schema: unsupported version " + std::to_string(cfg.schema) + " (expected " +
                               std::to_string(kSchemaVersion) + ")");
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.schema != kSchemaVersion) invalid("schema", "unsupported version " + std::to_string(cfg.schema));
  if (!(cfg.alpha > 0.0 && cfg.alpha < 2.0)) invalid("noise.alpha", "must lie in (0, 2)");
  if (!(cfg.c_alpha > 0.0)) invalid("noise.c_alpha", "must be positive");
  if (cfg.dim < 1 || cfg.dim > kMaxDim) invalid("noise.dim", "must lie in [1, " + std::to_string(kMaxDim) + "]");
  if (!(cfg.cutoff_delta > 0.0 && cfg.cutoff_delta <= 1.0)) invalid("noise.cutoff_delta", "must lie in (0, 1]");
  if (!(cfg.levy_density_constant >= 0.0)) invalid("noise.levy_density_constant", "must be non-negative");

  DriftField raw;
  try {
    raw = field_from_registry(cfg.drift, cfg.dim);
  } catch (const Error& e) {
    invalid("drift.field", e.what());
  }
  if (!(cfg.mollify_epsilon >= 0.0)) invalid("drift.mollify_epsilon", "must be non-negative");

  if (!(cfg.horizon > 0.0)) invalid("discretization.horizon", "must be positive");
  if (!(cfg.base_dt > 0.0 && cfg.base_dt <= cfg.horizon)) invalid("discretization.base_dt", "must lie in (0, horizon]");
  if (cfg.coarsen < 1) invalid("discretization.coarsen", "must be at least 1");
  if (!(cfg.h > 0.0)) invalid("discretization.h", "must be positive");
  if (!(cfg.box_lo < cfg.box_hi)) invalid("discretization.box_hi", "must exceed discretization.box_lo");
  if (cfg.n_paths < 1) invalid("ensemble.n_paths", "must be at least 1");
  if (cfg.out_dir.empty()) invalid("output.dir", "must not be empty");
  for (const Vec& p : cfg.points)
    if (p.size() != cfg.dim) invalid("experiment.points", "every point needs noise.dim coordinates");
  if (!(cfg.datum_radius > 0.0)) invalid("transport.datum_radius", "must be positive");
  if (cfg.snapshots < 1) invalid("transport.snapshots", "must be at least 1");
  if (!(cfg.theta_radius > 0.0)) invalid("residual.theta_radius", "must be positive");

  const double sum = cfg.alpha / 2.0 + raw.holder_beta;
  if (!(sum > 1.0) && !cfg.override_gate) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha/2 + holder_beta = %.6g/2 + %.6g = %.6g must exceed 1 (override with gate.override)",
                  cfg.alpha, raw.holder_beta, sum);
    invalid("gate", buf);
  }

  auto positive_list = [](const char* key, const std::vector<double>& xs) {
    if (xs.empty()) invalid(key, "must not be empty");
    for (const double x : xs)
      if (!(x > 0.0)) invalid(key, "entries must be positive");
  };
  switch (cfg.experiment) {
    case Experiment::Resolvent:
      if (cfg.dim > 2) invalid("noise.dim", "resolvent runs on 1D or 2D tori");
      if (!(cfg.resolvent_period > 0.0)) invalid("resolvent.period", "must be positive");
      if (cfg.resolvent_modes < 4 || cfg.resolvent_modes % 2 != 0) invalid("resolvent.modes", "must be even and at least 4");
      if (!(cfg.resolvent_tol > 0.0)) invalid("resolvent.tol", "must be positive");
      break;
    case Experiment::NonUniqueness:
      if (cfg.dim != 1) invalid("noise.dim", "nonuniqueness-demo is one-dimensional");
      counterexample_parameters(cfg.drift);
      positive_list("nonuniqueness.perturbations", cfg.perturbations);
      break;
    case Experiment::Moments:
      positive_list("moments.separations", cfg.separations);
      if (!(cfg.moment_p > 0.0)) invalid("moments.p", "must be positive");
      break;
    case Experiment::Stability:
      positive_list("sweep.epsilons", cfg.epsilons);
      if (!(cfg.stability_ratio > 1.0)) invalid("stability.ratio", "must exceed 1");
      if (!(cfg.moment_p > 0.0)) invalid("moments.p", "must be positive");
      break;
    case Experiment::Commutator:
      if (cfg.dim != 1) invalid("noise.dim", "commutator is one-dimensional");
      positive_list("sweep.epsilons", cfg.epsilons);
      if (!(cfg.commutator_flow_h > 0.0)) invalid("commutator.flow_h", "must be positive");
      if (!(cfg.commutator_u_h > 0.0)) invalid("commutator.u_h", "must be positive");
      break;
    case Experiment::SobolevDiag:
      positive_list("sweep.epsilons", cfg.epsilons);
      if (!(cfg.sobolev_delta > 0.0 && cfg.sobolev_delta < 1.0)) invalid("sobolev.delta", "must lie in (0, 1)");
      if (!(cfg.sobolev_p >= 1.0)) invalid("sobolev.p", "must be at least 1");
      if (!(cfg.sobolev_radius > 0.0)) invalid("sobolev.radius", "must be positive");
      break;
    case Experiment::Convergence:
      if (cfg.levels < 3 || cfg.levels > 12) invalid("convergence.levels", "must lie in [3, 12]");
      break;
    default:
      break;
  }
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec:
    case ErrorKind::Query:
    case ErrorKind::Coverage:
      return 2;
    case ErrorKind::Numeric:
    case ErrorKind::Divergence:
      return 3;
    case ErrorKind::Capability:
      return 4;
  }
  return 3;
}

std::string ConvergenceTable::order_text() const {
  if (exact) return "exact";
  if (!std::isfinite(order)) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", order);
  return buf;
}

ConvergenceTable fit_convergence(const std::vector<double>& steps, const std::vector<double>& values) {
  if (steps.size() != values.size()) fail(ErrorKind::InvalidSpec, "steps and values differ in length");
  if (steps.size() < 3) fail(ErrorKind::InvalidSpec, "a convergence table needs at least 3 levels");
  ConvergenceTable t;
  t.steps = steps;
  t.values = values;
  t.exact = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    t.ratios.push_back(values[i + 1] != 0.0 ? values[i] / values[i + 1] : std::numeric_limits<double>::infinity());
    if (!(values[i + 1] < values[i])) t.monotone = false;
  }
  if (t.exact) {
    t.monotone = true;
    t.order = std::numeric_limits<double>::infinity();
  } else {
    t.order = log_log_slope(steps, values);
  }
  return t;
}

namespace {

ResidualSetting residual_setting(const ExperimentConfig& cfg) {
  const Vec theta_center = Vec::Constant(cfg.dim, cfg.theta_center);
  const Vec box_center = Vec::Constant(cfg.dim, 0.5 * (cfg.box_lo + cfg.box_hi));
  return {bump_datum(box_center, cfg.datum_radius), bump_test_function(theta_center, cfg.theta_radius), cfg.h};
}

std::vector<Vec> points_or_lattice(const ExperimentConfig& cfg, int count) {
  if (!cfg.points.empty()) return cfg.points;
  const Lattice lat = Lattice::nodes(cfg.dim, cfg.box_lo, cfg.box_hi, count);
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < lat.size(); ++i) pts.push_back(lat.point(i));
  return pts;
}

}  // namespace

ConvergenceTable convergence_table(const ExperimentConfig& cfg, int refinement_levels) {
  if (refinement_levels < 3) fail(ErrorKind::InvalidSpec, "convergence.levels: at least 3 levels are needed");
  const DriftField b = prepared_drift(field_from_registry(cfg.drift, cfg.dim), cfg.mollify_epsilon);
  const StableSpec spec = cfg.noise_spec();
  const EnsembleSettings ens = cfg.ensemble();
  LevelSeries series;
  switch (cfg.quantity) {
    case ConvergenceQuantity::RoundTrip:
      series = roundtrip_study(b, spec, points_or_lattice(cfg, 21), cfg.horizon, cfg.base_dt, refinement_levels, ens);
      break;
    case ConvergenceQuantity::Perturbative:
      series = perturbative_study(b, spec, residual_setting(cfg), cfg.horizon, cfg.base_dt, refinement_levels, ens);
      break;
    case ConvergenceQuantity::Weak:
      series = weak_study(b, cfg.alpha, cfg.c_alpha, residual_setting(cfg), cfg.horizon, cfg.base_dt,
                          refinement_levels, ens);
      break;
  }
  return fit_convergence(series.steps, series.values);
}

// ---------------------------------------------------------------------------
// run

namespace {

namespace fs = std::filesystem;

class Artifacts {
 public:
  Artifacts(const ExperimentConfig& cfg, RunResult& result)
      : dir_(cfg.out_dir), provenance_(cfg.provenance()), result_(result) {
    fs::create_directories(dir_);
  }

  const Provenance& provenance() const { return provenance_; }

  std::ofstream open(const std::string& name) {
    const fs::path p = dir_ / name;
    std::ofstream out(p);
    if (!out) fail(ErrorKind::InvalidSpec, "output.dir: cannot write " + p.string());
    result_.artifacts.push_back(p.string());
    return out;
  }

  /// CSV with the provenance block, a header and pre-formatted rows.
  void table(const std::string& name, const std::string& header, const std::vector<std::string>& rows) {
    auto out = open(name);
    provenance_.write_comment_block(out);
    out << header << '\n';
    for (const auto& r : rows) out << r << '\n';
  }

 private:
  fs::path dir_;
  Provenance provenance_;
  RunResult& result_;
};

std::string indexed(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", stem, i);
  return buf;
}

std::string row(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) s += (s.empty() ? "" : ",") + c;
  return s;
}

void run_sample_path(const ExperimentConfig& cfg, Artifacts& art, Report& rep) {
  const StableSpec spec = cfg.noise_spec();
  std::size_t total_jumps = 0;
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    const LevyPath path = sample_path(spec, cfg.horizon, cfg.base_dt, stream_seed(cfg.master_seed, p));
    total_jumps += path.big_jumps.size();
    auto out = art.open(indexed("path", p));
    write_path(out, path, &art.provenance());
    if (p == 0) {
      rep.add("path_0.seed", path.seed);
      rep.add("path_0.cells", static_cast<std::uint64_t>(path.cells()));
      rep.add("path_0.L_T_1", path.values().back()(0));
    }
  }
  rep.add("big_jumps_total", static_cast<std::uint64_t>(total_jumps));
}

void run_flow(const ExperimentConfig& cfg, const DriftField& b, Artifacts& art, Report& rep, bool inverse) {
  const StableSpec spec = cfg.noise_spec();
  const std::vector<Vec> points = points_or_lattice(cfg, 5);
  double roundtrip = 0.0;
  double displacement = 0.0;
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, cfg.horizon, cfg.base_dt, stream_seed(cfg.master_seed, p)),
                                         static_cast<std::size_t>(cfg.coarsen));
    const std::size_t last = grid.nodes() - 1;
    if (!inverse) {
      const FlowResult flow = solve_flow(b, points, grid, cfg.exec());
      std::vector<DerivativeFlow> derivs;
      if (cfg.derivatives != DerivativeOutput::None) {
        derivs = map_indices<DerivativeFlow>(cfg.exec(), points.size(), [&](std::size_t i) {
          if (cfg.derivatives == DerivativeOutput::Variational) {
            if (!b.has_jacobian()) fail(ErrorKind::Capability, "variational derivative needs a Jacobian handle");
            return derivative_flow_variational(b, points[i], grid);
          }
          return derivative_flow_fd(b, points[i], grid);
        });
      }
      for (std::size_t i = 0; i < points.size(); ++i)
        displacement = std::max(displacement, (flow.trajectories[i].back() - points[i]).norm());
      auto out = art.open(indexed("trajectories", p));
      write_trajectories(out, flow, derivs.empty() ? nullptr : &derivs, &art.provenance());
    } else {
      FlowResult back;
      back.initial_points = points;
      back.path_seed = grid.path_seed;
      back.grid = &grid;
      back.trajectories = map_indices<Trajectory>(cfg.exec(), points.size(), [&](std::size_t i) {
        return inverse_flow(b, points[i], grid, last);
      });
      for (const Vec& x : points) {
        const Vec y = flow_map(b, x, grid, 0, last);
        roundtrip = std::max(roundtrip, (inverse_flow_map(b, y, grid, 0, last) - x).norm());
      }
      auto out = art.open(indexed("inverse_trajectories", p));
      write_trajectories(out, back, nullptr, &art.provenance());
    }
  }
  rep.add("points", static_cast<std::uint64_t>(points.size()));
  if (inverse)
    rep.add("roundtrip_sup", roundtrip);
  else
    rep.add("max_displacement", displacement);
}

void run_transport(const ExperimentConfig& cfg, const DriftField& b, Artifacts& art, Report& rep) {
  const StableSpec spec = cfg.noise_spec();
  const Vec center = Vec::Constant(cfg.dim, 0.5 * (cfg.box_lo + cfg.box_hi));
  const InitialDatum u0 = bump_datum(center, cfg.datum_radius);
  const Lattice xgrid = Lattice::midpoint(cfg.dim, cfg.box_lo, cfg.box_hi, cfg.h);
  double sup = 0.0;
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, cfg.horizon, cfg.base_dt, stream_seed(cfg.master_seed, p)),
                                         static_cast<std::size_t>(cfg.coarsen));
    std::vector<std::size_t> nodes;
    const std::size_t last = grid.nodes() - 1;
    for (std::size_t s = 0; s < cfg.snapshots; ++s) {
      const std::size_t node = cfg.snapshots == 1 ? last : s * last / (cfg.snapshots - 1);
      if (nodes.empty() || nodes.back() != node) nodes.push_back(node);
    }
    const TransportSolution sol = solve(b, u0, grid, nodes, xgrid, cfg.exec());
    sup = std::max(sup, sol.max_abs());
    auto out = art.open(indexed("snapshots", p));
    write_snapshots(out, sol, &art.provenance());
  }
  rep.add("datum_bound", u0.bound_M);
  rep.add("max_abs_u", sup);
  rep.add("lattice_points", static_cast<std::uint64_t>(xgrid.size()));
}

void run_residual_check(const ExperimentConfig& cfg, const DriftField& b, Artifacts& art, Report& rep, bool weak) {
  const StableSpec spec = cfg.noise_spec();
  const ResidualSetting s = residual_setting(cfg);
  struct Row {
    std::uint64_t seed = 0;
    MarcusTerms terms;
    double residual = 0.0;
  };
  // Paths in parallel; the kernels inside stay serial.
  const auto rows = map_indices<Row>(cfg.exec(), cfg.n_paths, [&](std::size_t p) {
    const TimeGrid grid = TimeGrid::bind(sample_path(spec, cfg.horizon, cfg.base_dt, stream_seed(cfg.master_seed, p)),
                                         static_cast<std::size_t>(cfg.coarsen));
    const TransportSolution sol =
        solve(b, s.u0, grid, {}, box_lattice(s.theta.center, s.theta.support_radius, cfg.h), Exec::Serial);
    Row r;
    r.seed = grid.path_seed;
    if (weak) {
      r.terms = marcus_weak_terms(sol, s.theta, grid.nodes() - 1, cfg.h, Exec::Serial);
      r.residual = r.terms.residual();
    } else {
      r.residual = perturbative_residual(sol, s.theta, grid.nodes() - 1, cfg.h, Exec::Serial);
    }
    return r;
  });
  std::vector<std::string> lines;
  std::vector<double> residuals;
  for (const Row& r : rows) {
    residuals.push_back(r.residual);
    if (weak)
      lines.push_back(row({std::to_string(r.seed), format_real(r.terms.pairing), format_real(r.terms.initial),
                           format_real(r.terms.drift), format_real(r.terms.small_jumps),
                           format_real(r.terms.large_jumps), format_real(r.terms.compensator),
                           format_real(r.residual)}));
    else
      lines.push_back(row({std::to_string(r.seed), format_real(r.residual)}));
  }
  if (weak)
    art.table("weak_terms.csv", "path_seed,pairing,initial,drift,small_jumps,large_jumps,compensator,residual", lines);
  else
    art.table("perturbative_residuals.csv", "path_seed,residual", lines);
  rep.add("median_residual", median(residuals));
  rep.add("max_residual", *std::max_element(residuals.begin(), residuals.end()));
}

void run_resolvent(const ExperimentConfig& cfg, const DriftField& b, Artifacts& art, Report& rep) {
  const StableSpec spec = cfg.noise_spec();
  const TorusGrid torus = TorusGrid::make(cfg.resolvent_period, cfg.resolvent_modes, cfg.dim);
  const ItoTanakaResult it = ito_tanaka_lambda_search(b, spec, torus, cfg.resolvent_tol);
  const PsiTransform psi = psi_transform(it.u);
  std::vector<std::string> steps;
  int iterations = 0;
  for (const auto& s : it.steps) {
    steps.push_back(row({format_real(s.lambda), format_real(s.du_norm), std::to_string(s.iterations),
                         s.converged ? "1" : "0"}));
    if (s.lambda == it.lambda) iterations = s.iterations;
  }
  art.table("lambda_search.csv", "lambda,du_norm,iterations,converged", steps);
  std::vector<std::vector<double>> comps;
  for (const auto& u : it.u) comps.push_back(inverse_transform(u));
  std::vector<std::string> nodes;
  std::string header;
  for (int i = 1; i <= cfg.dim; ++i) header += (i > 1 ? ",x_" : "x_") + std::to_string(i);
  for (std::size_t c = 0; c < comps.size(); ++c) header += ",u_" + std::to_string(c + 1);
  for (std::size_t i = 0; i < torus.size(); ++i) {
    const Vec x = torus.node(i);
    std::string r;
    for (int j = 0; j < cfg.dim; ++j) r += (j ? "," : "") + format_real(x(j));
    for (const auto& c : comps) r += "," + format_real(c[i]);
    nodes.push_back(r);
  }
  art.table("resolvent_u.csv", header, nodes);
  rep.add("lambda", it.lambda);
  rep.add("alpha", spec.alpha);
  rep.add("residual", it.residual);
  rep.add("iterations", iterations);
  rep.add("du_norm", it.du_norm);
  rep.add("min_singular", psi.min_singular);
  rep.add("max_singular", psi.max_singular);
  rep.add("modes", torus.n);
  rep.add("period", torus.period);
}

void run_nonuniqueness(const ExperimentConfig& cfg, Artifacts& art, Report& rep) {
  const auto [gamma, R] = counterexample_parameters(cfg.drift);
  std::vector<std::string> lines;
  auto emit = [&](const NonuniquenessReport& r, const char* label) {
    for (const auto& c : r.curves) {
      for (std::size_t k = 0; k < c.times.size(); ++k)
        lines.push_back(row({label, format_real(c.perturbation), format_real(c.times[k]),
                             format_real(c.median_separation[k])}));
      rep.add(std::string(label) + ".final_separation[" + format_real(c.perturbation) + "]", c.final_median);
    }
  };
  const NonuniquenessReport quiet =
      nonuniqueness_demo(gamma, R, std::nullopt, cfg.perturbations, 1, cfg.horizon, cfg.base_dt, cfg.master_seed,
                         cfg.exec());
  emit(quiet, "noiseless");
  if (cfg.noisy) {
    const NonuniquenessReport noisy = nonuniqueness_demo(gamma, R, cfg.noise_spec(), cfg.perturbations, cfg.n_paths,
                                                         cfg.horizon, cfg.base_dt, cfg.master_seed, cfg.exec());
    emit(noisy, "noisy");
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < noisy.curves.size(); ++i)
      if (!(noisy.curves[i + 1].final_median < noisy.curves[i].final_median)) decreasing = false;
    rep.add("noisy.decreasing", decreasing);
  }
  rep.add("gamma", gamma);
  rep.add("R", R);
  art.table("separation.csv", "mode,perturbation,t,median_separation", lines);
}

void sweep_output(const SweepStudy& s, const char* file, Artifacts& art, Report& rep) {
  std::vector<std::string> lines;
  bool decreasing = true;
  for (std::size_t i = 0; i < s.epsilons.size(); ++i) {
    lines.push_back(row({format_real(s.epsilons[i]), format_real(s.values[i]), format_real(s.std_errors[i])}));
    rep.add("value[" + format_real(s.epsilons[i]) + "]", s.values[i]);
    if (i > 0 && !(s.values[i] < s.values[i - 1])) decreasing = false;
  }
  rep.add("decreasing", decreasing);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  if (!s.values.empty()) rep.add("max_over_min", *hi / *lo);
  art.table(file, "epsilon,value,std_error", lines);
}

void run_experiment(const ExperimentConfig& cfg, Artifacts& art, Report& rep) {
  const DriftField raw = field_from_registry(cfg.drift, cfg.dim);
  const StableSpec spec = cfg.noise_spec();
  const EnsembleSettings ens = cfg.ensemble();
  auto drift = [&] { return prepared_drift(raw, cfg.mollify_epsilon); };
  switch (cfg.experiment) {
    case Experiment::SamplePath:
      run_sample_path(cfg, art, rep);
      break;
    case Experiment::Flow:
      run_flow(cfg, drift(), art, rep, false);
      break;
    case Experiment::InverseFlow:
      run_flow(cfg, drift(), art, rep, true);
      break;
    case Experiment::Transport:
      run_transport(cfg, drift(), art, rep);
      break;
    case Experiment::WeakCheck:
      run_residual_check(cfg, drift(), art, rep, true);
      break;
    case Experiment::PerturbativeCheck:
      run_residual_check(cfg, drift(), art, rep, false);
      break;
    case Experiment::Resolvent:
      run_resolvent(cfg, drift(), art, rep);
      break;
    case Experiment::NonUniqueness:
      run_nonuniqueness(cfg, art, rep);
      break;
    case Experiment::Stability: {
      const std::vector<Vec> pts = points_or_lattice(cfg, 5);
      sweep_output(stability_study(raw, spec, cfg.epsilons, cfg.stability_ratio, pts, cfg.moment_p, ens),
                   "stability.csv", art, rep);
      break;
    }
    case Experiment::Moments: {
      const Vec x = cfg.points.empty() ? Vec(Vec::Zero(cfg.dim)) : cfg.points.front();
      const MomentStudy m = moment_study(drift(), spec, x, cfg.separations, cfg.moment_p, ens);
      std::vector<std::string> lines;
      for (std::size_t i = 0; i < m.separations.size(); ++i)
        lines.push_back(row({format_real(m.separations[i]), format_real(m.moments[i].mean),
                             format_real(m.moments[i].std_error)}));
      art.table("moments.csv", "separation,mean,std_error", lines);
      rep.add("slope", m.slope);
      break;
    }
    case Experiment::Commutator: {
      CommutatorSetting s;
      s.flow_lo = cfg.box_lo;
      s.flow_hi = cfg.box_hi;
      s.flow_h = cfg.commutator_flow_h;
      s.u_h = cfg.commutator_u_h;
      sweep_output(commutator_study(drift(), spec, cfg.epsilons, s, ens), "commutator.csv", art, rep);
      break;
    }
    case Experiment::SobolevDiag: {
      SobolevSetting s;
      s.lo = cfg.box_lo;
      s.hi = cfg.box_hi;
      s.h = cfg.h;
      s.delta = cfg.sobolev_delta;
      s.p = cfg.sobolev_p;
      s.radius = cfg.sobolev_radius;
      sweep_output(sobolev_study(raw, spec, cfg.epsilons, s, ens), "sobolev.csv", art, rep);
      break;
    }
    case Experiment::Convergence: {
      const ConvergenceTable t = convergence_table(cfg, cfg.levels);
      std::vector<std::string> lines;
      for (std::size_t i = 0; i < t.steps.size(); ++i)
        lines.push_back(row({std::to_string(i), format_real(t.steps[i]), format_real(t.values[i])}));
      art.table("convergence.csv", "level,dt,value", lines);
      rep.add("order", t.order_text());
      rep.add("monotone", t.monotone);
      for (std::size_t i = 0; i < t.ratios.size(); ++i) rep.add("ratio[" + std::to_string(i) + "]", t.ratios[i]);
      break;
    }
  }
}

}  // namespace

RunResult run(const ExperimentConfig& cfg) {
  RunResult result;
  result.report.title = std::string(experiment_name(cfg.experiment));
  const std::string context = std::string(experiment_name(cfg.experiment)) + ": ";
  try {
    validate(cfg);
    Artifacts art(cfg, result);
    run_experiment(cfg, art, result.report);
    const std::string name = cfg.format == OutputFormat::Json ? "report.json" : "report.txt";
    auto out = art.open(name);
    write_report(out, result.report, cfg.format == OutputFormat::Json ? ReportFormat::Json : ReportFormat::Text,
                 &art.provenance());
    result.message = context + "ok";
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    result.message = context + e.what();
  } catch (const std::filesystem::filesystem_error& e) {
    result.exit_code = 2;
    result.message = context + "output.dir: " + e.what();
  } catch (const std::exception& e) {
    result.exit_code = 3;
    result.message = context + e.what();
  }
  return result;
}

}  // namespace levyflow
