#include "levyflow/io.hpp"

#include <Eigen/Core>
#include <fftw3.h>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace levyflow {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_digits17(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view text, const std::string& what) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorKind::InvalidSpec, what + ": expected a number, got '" + std::string(text) + "'");
  return x;
}

std::string library_versions() {
  std::ostringstream s;
  s << "levyflow " << kVersion << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
    << EIGEN_MINOR_VERSION << "; " << fftw_version;
  return s.str();
}

void Provenance::write_comment_block(std::ostream& out) const {
  char hash[19];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  out << "# versions = " << library_versions() << '\n';
  out << "# config_hash = " << hash << '\n';
  for (const auto& [k, v] : parameters) out << "# " << k << " = " << v << '\n';
}

namespace {

const char* mode_name(SimulationMode m) { return m == SimulationMode::ExactIncrement ? "exact" : "jump"; }
const char* policy_name(SmallJumpPolicy p) { return p == SmallJumpPolicy::Drop ? "drop" : "gaussian"; }

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  fail(ErrorKind::InvalidSpec, "path file line " + std::to_string(line) + ": " + what);
}

}  // namespace

void write_path(std::ostream& out, const LevyPath& path, const Provenance* provenance) {
  if (provenance) provenance->write_comment_block(out);
  const StableSpec& s = path.spec;
  const int d = s.dim;
  out << "levyflow-path alpha=" << format_digits17(s.alpha) << " c_alpha=" << format_digits17(s.c_alpha) << " dim=" << d
      << " mode=" << mode_name(s.mode) << " cutoff_delta=" << format_digits17(s.cutoff_delta)
      << " policy=" << policy_name(s.small_jump_policy) << " k=" << format_digits17(s.levy_density_constant)
      << " base_dt=" << format_digits17(path.base_dt) << " seed=" << path.seed << " noiseless=" << (path.noiseless ? 1 : 0)
      << " cells=" << path.cells() << '\n';
  out << 't';
  for (int i = 1; i <= d; ++i) out << ",dL_" << i;
  out << ",is_big_jump";
  for (int i = 1; i <= d; ++i) out << ",z_" << i;
  out << '\n';
  std::size_t jump = 0;
  for (std::size_t k = 0; k < path.cells(); ++k) {
    const std::size_t node = k + 1;
    const bool big = path.origin[node] == NodeOrigin::BigJump;
    out << format_digits17(path.times[node]);
    for (int i = 0; i < d; ++i) out << ',' << format_digits17(path.increments[k](i));
    out << ',' << (big ? 1 : 0);
    const bool has_ledger = jump < path.big_jumps.size() && path.big_jumps[jump].node == node;
    for (int i = 0; i < d; ++i) out << ',' << format_digits17(has_ledger ? path.big_jumps[jump].jump(i) : 0.0);
    if (has_ledger) ++jump;
    out << '\n';
  }
}

LevyPath read_path(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      return true;
    }
    return false;
  };
  if (!next()) fail(ErrorKind::InvalidSpec, "path file: missing header");
  std::map<std::string, std::string> fields;
  {
    const auto parts = split(line, ' ');
    if (parts.empty() || parts[0] != "levyflow-path") bad_line(lineno, "expected 'levyflow-path' header");
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i].empty()) continue;
      const auto eq = parts[i].find('=');
      if (eq == std::string_view::npos) bad_line(lineno, "malformed header field '" + std::string(parts[i]) + "'");
      fields[std::string(parts[i].substr(0, eq))] = std::string(parts[i].substr(eq + 1));
    }
  }
  auto field = [&](const char* key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) bad_line(lineno, std::string("header lacks '") + key + "'");
    return it->second;
  };
  LevyPath path;
  StableSpec& s = path.spec;
  s.alpha = parse_real(field("alpha"), "alpha");
  s.c_alpha = parse_real(field("c_alpha"), "c_alpha");
  s.dim = static_cast<int>(parse_real(field("dim"), "dim"));
  const std::string& mode = field("mode");
  if (mode != "exact" && mode != "jump") bad_line(lineno, "mode must be exact or jump");
  s.mode = mode == "exact" ? SimulationMode::ExactIncrement : SimulationMode::JumpDecomposition;
  s.cutoff_delta = parse_real(field("cutoff_delta"), "cutoff_delta");
  const std::string& policy = field("policy");
  if (policy != "gaussian" && policy != "drop") bad_line(lineno, "policy must be gaussian or drop");
  s.small_jump_policy = policy == "drop" ? SmallJumpPolicy::Drop : SmallJumpPolicy::Gaussian;
  s.levy_density_constant = parse_real(field("k"), "k");
  s.validate();
  path.base_dt = parse_real(field("base_dt"), "base_dt");
  {
    const std::string& seed = field("seed");
    const auto res = std::from_chars(seed.data(), seed.data() + seed.size(), path.seed);
    if (res.ec != std::errc() || res.ptr != seed.data() + seed.size()) bad_line(lineno, "seed must be an integer");
  }
  path.noiseless = field("noiseless") == "1";
  const auto cells = static_cast<std::size_t>(parse_real(field("cells"), "cells"));

  const int d = s.dim;
  if (!next()) bad_line(lineno, "missing column line");
  if (split(line, ',').size() != static_cast<std::size_t>(2 * d + 2)) bad_line(lineno, "column count does not match dim");

  path.times.push_back(0.0);
  path.origin.push_back(NodeOrigin::Uniform);
  while (next()) {
    const auto cols = split(line, ',');
    if (cols.size() != static_cast<std::size_t>(2 * d + 2)) bad_line(lineno, "wrong number of columns");
    const std::string where = "path file line " + std::to_string(lineno);
    const double t = parse_real(cols[0], where);
    if (!(t > path.times.back())) bad_line(lineno, "times must increase");
    Vec inc(d);
    for (int i = 0; i < d; ++i) inc(i) = parse_real(cols[1 + i], where);
    const bool big = cols[1 + d] == "1";
    if (!big && cols[1 + d] != "0") bad_line(lineno, "is_big_jump must be 0 or 1");
    Vec z(d);
    for (int i = 0; i < d; ++i) z(i) = parse_real(cols[2 + d + i], where);
    path.times.push_back(t);
    path.origin.push_back(big ? NodeOrigin::BigJump : NodeOrigin::Uniform);
    path.increments.push_back(inc);
    if (big) path.big_jumps.push_back({t, z, path.times.size() - 1});
  }
  if (path.cells() != cells)
    fail(ErrorKind::InvalidSpec, "path file: header announces " + std::to_string(cells) + " cells, found " +
                                     std::to_string(path.cells()));
  if (cells == 0) fail(ErrorKind::InvalidSpec, "path file: no cells");
  return path;
}

void write_trajectories(std::ostream& out, const FlowResult& flow, const std::vector<DerivativeFlow>* derivatives,
                        const Provenance* provenance) {
  if (!flow.grid) fail(ErrorKind::InvalidSpec, "flow result is not bound to a grid");
  if (derivatives && derivatives->size() != flow.trajectories.size())
    fail(ErrorKind::InvalidSpec, "need one derivative flow per initial point");
  if (provenance) provenance->write_comment_block(out);
  const TimeGrid& g = *flow.grid;
  const int d = g.dim;
  out << "path_seed,point_index,t";
  for (int i = 1; i <= d; ++i) out << ",X_" << i;
  if (derivatives)
    for (int i = 1; i <= d; ++i)
      for (int j = 1; j <= d; ++j) out << ",D_" << i << j;
  out << '\n';
  for (std::size_t p = 0; p < flow.trajectories.size(); ++p) {
    const Trajectory& traj = flow.trajectories[p];
    for (std::size_t k = 0; k < traj.size(); ++k) {
      out << flow.path_seed << ',' << p << ',' << format_digits17(g.times[k]);
      for (int i = 0; i < d; ++i) out << ',' << format_digits17(traj[k](i));
      if (derivatives) {
        const Mat& m = (*derivatives)[p].matrices[k];
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) out << ',' << format_digits17(m(i, j));
      }
      out << '\n';
    }
  }
}

void write_snapshots(std::ostream& out, const TransportSolution& sol, const Provenance* provenance) {
  if (provenance) provenance->write_comment_block(out);
  const int d = sol.xgrid.dim;
  out << 't';
  for (int i = 1; i <= d; ++i) out << ",x_" << i;
  out << ",u\n";
  for (std::size_t s = 0; s < sol.snapshot_nodes.size(); ++s) {
    const double t = sol.grid->times[sol.snapshot_nodes[s]];
    for (std::size_t j = 0; j < sol.xgrid.size(); ++j) {
      const Vec x = sol.xgrid.point(j);
      out << format_digits17(t);
      for (int i = 0; i < d; ++i) out << ',' << format_digits17(x(i));
      out << ',' << format_digits17(sol.snapshots[s][j]) << '\n';
    }
  }
}

const std::string* Report::find(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

namespace {

nlohmann::ordered_json typed_value(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (!v.empty() && res.ec == std::errc() && res.ptr == v.data() + v.size() && std::isfinite(x)) return x;
  return v;
}

}  // namespace

void write_report(std::ostream& out, const Report& report, ReportFormat format, const Provenance* provenance) {
  if (format == ReportFormat::Text) {
    if (provenance) provenance->write_comment_block(out);
    out << '[' << report.title << "]\n";
    for (const auto& [k, v] : report.entries) out << k << " = " << v << '\n';
    return;
  }
  nlohmann::ordered_json doc;
  if (provenance) {
    char hash[19];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(provenance->config_hash));
    nlohmann::ordered_json p;
    p["versions"] = library_versions();
    p["config_hash"] = hash;
    for (const auto& [k, v] : provenance->parameters) p[k] = v;
    doc["provenance"] = p;
  }
  doc["title"] = report.title;
  nlohmann::ordered_json values = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.entries) values[k] = typed_value(v);
  doc["values"] = values;
  out << doc.dump(2) << '\n';
}

}  // namespace levyflow
