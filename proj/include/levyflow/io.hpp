#pragma once

// Text artifacts: the columnar path format, trajectory and snapshot dumps, and
// key-value reports. Every artifact starts with a provenance block.

#include "levyflow/flow_engine.hpp"
#include "levyflow/levy_noise.hpp"
#include "levyflow/transport.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace levyflow {

inline constexpr const char* kVersion = "1.0.0";

std::uint64_t fnv1a64(std::string_view text);

/// Shortest decimal that parses back to exactly x.
std::string format_real(double x);
/// Decimal with 17 significant digits (the data-file convention); also round-trips exactly.
std::string format_digits17(double x);
/// Throws InvalidSpec naming `what` unless the whole of `text` is a number.
double parse_real(std::string_view text, const std::string& what);

/// "levyflow 1.0.0; eigen 3.4.0; fftw-3.3.8"
std::string library_versions();

struct Provenance {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, std::string>> parameters;  // echoed verbatim

  /// Lines "# key = value", starting with the tool version and config hash.
  void write_comment_block(std::ostream& out) const;
};

/// Header line with the spec fields, a column line, then one row per grid cell:
/// t (cell end), dL_1..dL_d, is_big_jump, z_1..z_d (the ledger jump, zero otherwise).
void write_path(std::ostream& out, const LevyPath& path, const Provenance* provenance = nullptr);
/// Inverse of write_path; comment lines are skipped. Throws InvalidSpec with the line number.
LevyPath read_path(std::istream& in);

/// Rows path_seed, point_index, t, X_1..X_d, then the d^2 derivative entries row-major
/// when `derivatives` holds one flow per initial point.
void write_trajectories(std::ostream& out, const FlowResult& flow, const std::vector<DerivativeFlow>* derivatives,
                        const Provenance* provenance = nullptr);

/// Rows t, x_1..x_d, u for every stored snapshot.
void write_snapshots(std::ostream& out, const TransportSolution& sol, const Provenance* provenance = nullptr);

enum class ReportFormat { Text, Json };

/// Ordered key-value block; values are kept as text.
struct Report {
  std::string title;
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  void add(const std::string& key, const char* value) { entries.emplace_back(key, value); }
  void add(const std::string& key, double value) { entries.emplace_back(key, format_real(value)); }
  void add(const std::string& key, std::uint64_t value) { entries.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, int value) { entries.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { entries.emplace_back(key, value ? "true" : "false"); }
  const std::string* find(const std::string& key) const;
};

/// Text: provenance comments, "[title]", then "key = value" lines.
/// Json: {"provenance": {...}, "title": ..., "values": {...}}; numeric values stay numbers.
void write_report(std::ostream& out, const Report& report, ReportFormat format,
                  const Provenance* provenance = nullptr);

}  // namespace levyflow
