#include "levyflow/io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <sstream>

using namespace levyflow;

namespace {

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

void require_identical(const LevyPath& a, const LevyPath& b) {
  CHECK(same_bits(a.spec.alpha, b.spec.alpha));
  CHECK(same_bits(a.spec.c_alpha, b.spec.c_alpha));
  CHECK(a.spec.dim == b.spec.dim);
  CHECK(a.spec.mode == b.spec.mode);
  CHECK(same_bits(a.spec.cutoff_delta, b.spec.cutoff_delta));
  CHECK(a.spec.small_jump_policy == b.spec.small_jump_policy);
  CHECK(same_bits(a.spec.levy_density_constant, b.spec.levy_density_constant));
  CHECK(same_bits(a.base_dt, b.base_dt));
  CHECK(a.seed == b.seed);
  CHECK(a.noiseless == b.noiseless);
  REQUIRE(a.times.size() == b.times.size());
  REQUIRE(a.increments.size() == b.increments.size());
  REQUIRE(a.big_jumps.size() == b.big_jumps.size());
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    mismatches += !same_bits(a.times[k], b.times[k]);
    mismatches += a.origin[k] != b.origin[k];
  }
  for (std::size_t k = 0; k < a.increments.size(); ++k)
    for (int i = 0; i < a.dim(); ++i) mismatches += !same_bits(a.increments[k](i), b.increments[k](i));
  for (std::size_t j = 0; j < a.big_jumps.size(); ++j) {
    mismatches += !same_bits(a.big_jumps[j].time, b.big_jumps[j].time);
    mismatches += a.big_jumps[j].node != b.big_jumps[j].node;
    for (int i = 0; i < a.dim(); ++i) mismatches += !same_bits(a.big_jumps[j].jump(i), b.big_jumps[j].jump(i));
  }
  CHECK(mismatches == 0);
}

LevyPath round_trip(const LevyPath& path, const Provenance* prov = nullptr) {
  std::stringstream s;
  write_path(s, path, prov);
  return read_path(s);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("FNV-1a matches the published 64-bit vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("decimal formatting round-trips random bit patterns") {
  CounterRng rng(2024);
  int checked = 0;
  while (checked < 20000) {
    const double x = std::bit_cast<double>(rng());
    if (!std::isfinite(x)) continue;
    ++checked;
    REQUIRE(same_bits(parse_real(format_real(x), "x"), x));
    REQUIRE(same_bits(parse_real(format_digits17(x), "x"), x));
  }
  CHECK(format_real(0.2) == "0.2");
  CHECK(format_digits17(0.2) == "0.20000000000000001");
  CHECK(same_bits(parse_real("-0", "x"), -0.0));
}

TEST_CASE("parse_real rejects partial and empty input") {
  CHECK_THROWS_AS(parse_real("", "k"), Error);
  CHECK_THROWS_AS(parse_real("1.5x", "k"), Error);
  CHECK_THROWS_AS(parse_real("one", "k"), Error);
  CHECK(parse_real(" 2.5 ", "k") == 2.5);
  CHECK(parse_real("+3", "k") == 3.0);
  try {
    parse_real("abc", "noise.alpha");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("noise.alpha") != std::string::npos);
    CHECK(e.kind() == ErrorKind::InvalidSpec);
  }
}

TEST_CASE("paths round-trip bit-exactly through the columnar format") {
  SUBCASE("jump decomposition with a ledger, d = 1..3") {
    for (int d = 1; d <= 3; ++d) {
      const auto spec = StableSpec::make(0.8, 1.3, d, SimulationMode::JumpDecomposition, 0.3, SmallJumpPolicy::Gaussian);
      const LevyPath path = sample_path(spec, 2.0, 0.01, 77 + d);
      REQUIRE(!path.big_jumps.empty());
      require_identical(path, round_trip(path));
    }
  }
  SUBCASE("drop policy and a recut path") {
    const auto spec = StableSpec::make(1.2, 1.0, 2, SimulationMode::JumpDecomposition, 0.05, SmallJumpPolicy::Drop);
    const LevyPath fine = sample_path(spec, 1.0, 0.01, 5);
    require_identical(fine, round_trip(fine));
    const LevyPath coarse = recut(fine, 0.5);
    require_identical(coarse, round_trip(coarse));
  }
  SUBCASE("exact increments") {
    const auto spec = StableSpec::make(1.7, 0.5, 1, SimulationMode::ExactIncrement);
    const LevyPath path = sample_path(spec, 1.0, 0.003, 11);
    require_identical(path, round_trip(path));
  }
  SUBCASE("zero path keeps the noiseless flag") {
    const LevyPath path = zero_path(StableSpec::make(1.5, 1.0, 1), 1.0, 0.1);
    const LevyPath back = round_trip(path);
    require_identical(path, back);
    CHECK(back.noiseless);
  }
  SUBCASE("provenance comments are skipped") {
    Provenance prov;
    prov.config_hash = 0x1234;
    prov.parameters = {{"noise.alpha", "1.5"}, {"ensemble.master_seed", "9"}};
    const LevyPath path = sample_path(StableSpec::make(1.5, 1.0, 1), 0.5, 0.01, 3);
    std::stringstream s;
    write_path(s, path, &prov);
    const auto lines = lines_of(s.str());
    CHECK(lines[0].rfind("# versions = levyflow", 0) == 0);
    CHECK(lines[1] == "# config_hash = 0000000000001234");
    CHECK(lines[2] == "# noise.alpha = 1.5");
    require_identical(path, read_path(s));
  }
}

TEST_CASE("path rows carry increments, big-jump flags and ledger jumps") {
  const auto spec = StableSpec::make(1.0, 1.0, 1, SimulationMode::JumpDecomposition, 0.2);
  const LevyPath path = sample_path(spec, 1.0, 0.05, 21);
  std::stringstream s;
  write_path(s, path);
  const auto lines = lines_of(s.str());
  REQUIRE(lines.size() == 2 + path.cells());
  CHECK(lines[1] == "t,dL_1,is_big_jump,z_1");
  std::size_t flagged = 0;
  for (std::size_t k = 0; k < path.cells(); ++k) {
    const std::string& row = lines[2 + k];
    const bool big = row.find(",1,") != std::string::npos;
    flagged += big;
    CHECK(big == (path.origin[k + 1] == NodeOrigin::BigJump));
  }
  CHECK(flagged == path.big_jumps.size());
}

TEST_CASE("malformed path files are rejected with a line number") {
  const LevyPath path = sample_path(StableSpec::make(1.5, 1.0, 1), 0.1, 0.05, 1);
  std::stringstream s;
  write_path(s, path);
  const std::string good = s.str();
  auto expect_error = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_path(in);
      FAIL("accepted a malformed file");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidSpec);
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect_error("", "missing header");
  expect_error("not-a-path alpha=1\n", "line 1");
  auto lines = lines_of(good);
  {
    std::string bad = lines[0] + "\n" + lines[1] + "\n" + lines[2] + ",9\n" + lines[3] + "\n";
    expect_error(bad, "line 3");
  }
  {
    std::string bad = lines[0] + "\n" + lines[1] + "\n" + lines[3] + "\n" + lines[2] + "\n";
    expect_error(bad, "times must increase");
  }
  {
    std::string bad = lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n";
    expect_error(bad, "cells");
  }
  {
    std::string bad = good;
    bad.replace(bad.find("alpha=1.5"), 9, "alpha=2.5");
    expect_error(bad, "alpha");
  }
}

TEST_CASE("trajectory dump lists every node of every point") {
  const auto spec = StableSpec::make(1.5, 1.0, 2);
  const TimeGrid grid = TimeGrid::bind(sample_path(spec, 0.2, 0.02, 8));
  const DriftField b = trig_field(2, 1.0, 1.0);
  std::vector<Vec> pts = {Vec::Constant(2, 0.1), Vec::Constant(2, -0.4)};
  const FlowResult flow = solve_flow(b, pts, grid, Exec::Serial);
  std::vector<DerivativeFlow> derivs;
  for (const Vec& x : pts) derivs.push_back(derivative_flow_variational(b, x, grid));
  std::stringstream s;
  write_trajectories(s, flow, &derivs);
  const auto lines = lines_of(s.str());
  CHECK(lines[0] == "path_seed,point_index,t,X_1,X_2,D_11,D_12,D_21,D_22");
  REQUIRE(lines.size() == 1 + pts.size() * grid.nodes());
  // Last row of point 1: the final state and derivative, parsed back exactly.
  std::vector<double> cells;
  std::istringstream row(lines.back());
  std::string cell;
  while (std::getline(row, cell, ',')) cells.push_back(parse_real(cell, "cell"));
  REQUIRE(cells.size() == 9);
  CHECK(static_cast<std::uint64_t>(cells[0]) == grid.path_seed);
  CHECK(cells[1] == 1.0);
  CHECK(same_bits(cells[2], grid.times.back()));
  CHECK(same_bits(cells[3], flow.trajectories[1].back()(0)));
  CHECK(same_bits(cells[4], flow.trajectories[1].back()(1)));
  CHECK(same_bits(cells[6], derivs[1].matrices.back()(0, 1)));
  CHECK_THROWS_AS(write_trajectories(s, FlowResult{}, nullptr), Error);
}

TEST_CASE("snapshot dump has one row per lattice point and snapshot") {
  const auto spec = StableSpec::make(1.5, 1.0, 1);
  const TimeGrid grid = TimeGrid::bind(sample_path(spec, 0.2, 0.02, 8));
  const Lattice lat = Lattice::midpoint(1, -1.0, 1.0, 0.1);
  const TransportSolution sol =
      solve(zero_field(1), bump_datum(Vec::Zero(1), 1.0), grid, {0, grid.nodes() - 1}, lat, Exec::Serial);
  std::stringstream s;
  write_snapshots(s, sol);
  const auto lines = lines_of(s.str());
  CHECK(lines[0] == "t,x_1,u");
  CHECK(lines.size() == 1 + 2 * lat.size());
  CHECK(lines[1].rfind("0,", 0) == 0);
}

TEST_CASE("reports in text and json keep order, types and provenance") {
  Report r;
  r.title = "resolvent";
  r.add("lambda", 4.0);
  r.add("iterations", 12);
  r.add("converged", true);
  r.add("order", "exact");
  Provenance prov;
  prov.config_hash = 0xabcdefULL;
  prov.parameters = {{"noise.alpha", "1.5"}};

  std::stringstream text;
  write_report(text, r, ReportFormat::Text, &prov);
  const auto lines = lines_of(text.str());
  CHECK(lines[0].rfind("# versions", 0) == 0);
  CHECK(lines[3] == "[resolvent]");
  CHECK(lines[4] == "lambda = 4");
  CHECK(lines[7] == "order = exact");

  std::stringstream js;
  write_report(js, r, ReportFormat::Json, &prov);
  const auto doc = nlohmann::json::parse(js.str());
  CHECK(doc["provenance"]["config_hash"] == "0000000000abcdef");
  CHECK(doc["provenance"]["noise.alpha"] == "1.5");
  CHECK(doc["values"]["lambda"].get<double>() == 4.0);
  CHECK(doc["values"]["iterations"].get<double>() == 12.0);
  CHECK(doc["values"]["converged"].get<bool>());
  CHECK(doc["values"]["order"] == "exact");
  CHECK(*r.find("iterations") == "12");
  CHECK(r.find("missing") == nullptr);
}
