#include "levyflow/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace levyflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("levyflow_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string data_lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::string out;
  while (std::getline(in, line))
    if (line.empty() || line.front() != '#') out += line + "\n";
  return out;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

int cli(const std::string& args) {
  const std::string cmd = std::string(LEVYFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("experiment names round-trip") {
  CHECK(all_experiments().size() == 13);
  for (const auto e : all_experiments()) CHECK(experiment_from_name(experiment_name(e)) == e);
  CHECK_FALSE(experiment_from_name("nonsense").has_value());
  CHECK(experiment_name(Experiment::NonUniqueness) == "nonuniqueness-demo");
}

TEST_CASE("config files parse with sections, comments and experiment defaults") {
  const auto cfg = parse_config(R"(
# moments study
schema = 1
experiment = moments

[noise]
alpha = 1.2
mode = exact   # trailing comment

[ensemble]
n_paths = 40
master_seed = 77

moments.separations = 0.5, 0.25
experiment.points = 0.1
)");
  CHECK(cfg.experiment == Experiment::Moments);
  CHECK(cfg.alpha == 1.2);
  CHECK(cfg.mode == SimulationMode::ExactIncrement);
  CHECK(cfg.n_paths == 40);
  CHECK(cfg.master_seed == 77);
  CHECK(cfg.separations == std::vector<double>{0.5, 0.25});
  REQUIRE(cfg.points.size() == 1);
  CHECK(cfg.points[0](0) == 0.1);
  // Untouched keys come from the moments defaults.
  CHECK(cfg.drift == "counterexample(0.6,1)");
  CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("config errors name the line and the field path") {
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\nnoise.alpah = 1\n"); }) ==
        "line 3: noise.alpah: unknown key");
  CHECK(message_of([] { parse_config("experiment = flow\n"); }).find("schema: missing") != std::string::npos);
  CHECK(message_of([] { parse_config("schema = 2\nexperiment = flow\n"); }) ==
        "line 1: schema: unsupported version 2 (expected 1)");
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\nnoise.alpha = fast\n"); }) ==
        "line 3: noise.alpha: expected a number, got 'fast'");
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\nnoise.dim = 1\nnoise.dim = 2\n"); })
            .find("line 4: noise.dim: duplicate key") == 0);
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\n[noise\n"); }) ==
        "line 3: unterminated section header");
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\nnoise.mode = fancy\n"); })
            .find("noise.mode: expected one of jump, exact") != std::string::npos);
  CHECK(message_of([] { parse_config("schema = 1\nexperiment = flow\n", Experiment::Moments); })
            .find("experiment: config names 'flow'") != std::string::npos);
  CHECK(message_of([] { parse_config("schema = 1\n"); }) == "experiment: missing");
  CHECK(parse_config("schema = 1\n", Experiment::Resolvent).experiment == Experiment::Resolvent);
}

TEST_CASE("validation reports field paths") {
  auto expect = [](ExperimentConfig c, const std::string& prefix) {
    const std::string m = message_of([&] { validate(c); });
    CHECK_MESSAGE(m.rfind(prefix, 0) == 0, m);
  };
  ExperimentConfig c = default_config(Experiment::Flow);
  CHECK_NOTHROW(validate(c));
  c.alpha = 2.0;
  expect(c, "noise.alpha");
  c = default_config(Experiment::Flow);
  c.drift = "spiral(1)";
  expect(c, "drift.field");
  c = default_config(Experiment::Flow);
  c.base_dt = 2.0;
  expect(c, "discretization.base_dt");
  c = default_config(Experiment::Flow);
  c.points = {Vec::Zero(2)};
  expect(c, "experiment.points");
  c = default_config(Experiment::NonUniqueness);
  c.drift = "trig(1,1)";
  expect(c, "drift.field");
  c = default_config(Experiment::Convergence);
  c.levels = 2;
  expect(c, "convergence.levels");
  c = default_config(Experiment::Stability);
  c.epsilons.clear();
  expect(c, "sweep.epsilons");
}

TEST_CASE("the alpha/2 + beta > 1 gate") {
  ExperimentConfig c = default_config(Experiment::Flow);
  c.alpha = 0.5;
  c.drift = "counterexample(0.6,1)";
  // 0.25 + 0.6 = 0.85
  const std::string m = message_of([&] { validate(c); });
  CHECK(m.rfind("gate: ", 0) == 0);
  CHECK(m.find("0.85") != std::string::npos);
  c.out_dir = scratch_dir("gate").string();
  const RunResult r = run(c);
  CHECK(r.exit_code == 2);
  CHECK(r.artifacts.empty());
  c.override_gate = true;
  CHECK_NOTHROW(validate(c));
  c.alpha = 0.81;  // 0.405 + 0.6 > 1
  c.override_gate = false;
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("canonical form re-parses to the same configuration") {
  for (const auto e : all_experiments()) {
    ExperimentConfig c = default_config(e);
    c.master_seed = 1234567890123ULL;
    std::string text;
    for (const auto& [k, v] : c.canonical()) text += k + " = " + v + "\n";
    const ExperimentConfig back = parse_config(text);
    CHECK(back.hash() == c.hash());
    CHECK(back.canonical() == c.canonical());
  }
  const auto keys = config_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  ExperimentConfig a = default_config(Experiment::Flow);
  ExperimentConfig b = a;
  b.master_seed += 1;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("exit codes follow the error kind") {
  CHECK(exit_code_for(ErrorKind::InvalidSpec) == 2);
  CHECK(exit_code_for(ErrorKind::Query) == 2);
  CHECK(exit_code_for(ErrorKind::Coverage) == 2);
  CHECK(exit_code_for(ErrorKind::Numeric) == 3);
  CHECK(exit_code_for(ErrorKind::Divergence) == 3);
  CHECK(exit_code_for(ErrorKind::Capability) == 4);

  ExperimentConfig blow = default_config(Experiment::Flow);
  blow.drift = "linear(1e6)";
  blow.out_dir = scratch_dir("blow").string();
  const RunResult r3 = run(blow);
  CHECK(r3.exit_code == 3);
  CHECK(r3.message.rfind("flow: ", 0) == 0);
  CHECK(r3.message.find("non-finite") != std::string::npos);

  ExperimentConfig weak = default_config(Experiment::WeakCheck);
  weak.mode = SimulationMode::ExactIncrement;
  weak.n_paths = 1;
  weak.out_dir = scratch_dir("cap").string();
  CHECK(run(weak).exit_code == 4);
}

TEST_CASE("sample-path with one path writes one file that reads back bit-exactly") {
  ExperimentConfig c = default_config(Experiment::SamplePath);
  c.n_paths = 1;
  c.alpha = 0.9;
  c.cutoff_delta = 0.25;
  c.master_seed = 99;
  c.out_dir = scratch_dir("sample").string();
  const RunResult r = run(c);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.artifacts.size() == 2);
  CHECK(fs::path(r.artifacts[0]).filename() == "path_0000.csv");
  CHECK(fs::path(r.artifacts[1]).filename() == "report.txt");
  std::ifstream in(r.artifacts[0]);
  const LevyPath back = read_path(in);
  const LevyPath direct = sample_path(c.noise_spec(), c.horizon, c.base_dt, stream_seed(99, 0));
  REQUIRE(back.cells() == direct.cells());
  bool same = back.seed == direct.seed && back.big_jumps.size() == direct.big_jumps.size();
  for (std::size_t k = 0; k < direct.cells(); ++k) same = same && back.increments[k] == direct.increments[k];
  CHECK(same);
  // Provenance first, with the config hash and every key echoed.
  const std::string text = slurp(r.artifacts[0]);
  char hash[19];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(c.hash()));
  CHECK(text.rfind("# versions = levyflow", 0) == 0);
  CHECK(text.find(std::string("# config_hash = ") + hash) != std::string::npos);
  for (const auto& key : config_keys()) CHECK(text.find("# " + key + " = ") != std::string::npos);
}

TEST_CASE("replaying a config reproduces artifacts, serial and parallel alike") {
  auto snapshot = [](const RunResult& r) {
    std::vector<std::string> files;
    for (const auto& a : r.artifacts) files.push_back(slurp(a));
    return files;
  };
  for (const auto e : {Experiment::Flow, Experiment::Transport, Experiment::WeakCheck, Experiment::Commutator}) {
    ExperimentConfig c = default_config(e);
    c.n_paths = 2;
    c.out_dir = scratch_dir("replay").string();
    const RunResult a = run(c);
    REQUIRE(a.exit_code == 0);
    const auto first = snapshot(a);
    fs::remove_all(c.out_dir);
    const auto second = snapshot(run(c));
    CHECK(first == second);
    c.parallel = false;
    const RunResult s = run(c);
    REQUIRE(s.artifacts.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      const fs::path tmp = fs::path(c.out_dir) / "first.tmp";
      std::ofstream(tmp) << first[i];
      CHECK(data_lines(tmp) == data_lines(s.artifacts[i]));
    }
  }
}

TEST_CASE("nonuniqueness default config reproduces the direct report") {
  ExperimentConfig c = default_config(Experiment::NonUniqueness);
  c.out_dir = scratch_dir("nonuniq").string();
  const RunResult r = run(c);
  REQUIRE(r.exit_code == 0);
  const auto quiet = nonuniqueness_demo(0.5, 4.0, std::nullopt, {1e-2, 1e-4, 1e-6}, 1, 2.0, 1e-3, c.master_seed);
  const auto noisy =
      nonuniqueness_demo(0.5, 4.0, StableSpec::make(1.5, 1.0, 1), {1e-2, 1e-4, 1e-6}, 100, 2.0, 1e-3, c.master_seed);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = format_real(quiet.curves[i].perturbation);
    CHECK(*r.report.find("noiseless.final_separation[" + p + "]") == format_real(quiet.curves[i].final_median));
    CHECK(*r.report.find("noisy.final_separation[" + p + "]") == format_real(noisy.curves[i].final_median));
  }
  CHECK(parse_real(*r.report.find("noiseless.final_separation[0.01]"), "sep") >= 3.8);
  CHECK(*r.report.find("noisy.decreasing") == "true");
}

TEST_CASE("resolvent report carries lambda, alpha, residual, iterations and ||Du||") {
  ExperimentConfig c = default_config(Experiment::Resolvent);
  c.format = OutputFormat::Json;
  c.out_dir = scratch_dir("resolvent").string();
  const RunResult r = run(c);
  REQUIRE(r.exit_code == 0);
  for (const char* key : {"lambda", "alpha", "residual", "iterations", "du_norm"}) CHECK(r.report.find(key) != nullptr);
  CHECK(parse_real(*r.report.find("du_norm"), "du") <= 1.0 / 3.0);
  CHECK(fs::path(r.artifacts.back()).filename() == "report.json");
}

TEST_CASE("convergence fits on synthetic series") {
  const double e = 0.37;
  SUBCASE("first order") {
    const auto t = fit_convergence({1.0, 0.5, 0.25}, {e, e / 2, e / 4});
    CHECK(t.order == doctest::Approx(1.0).epsilon(0.01));
    CHECK(t.order_text() == "1.0000");
    CHECK(t.monotone);
    CHECK(t.ratios[0] == doctest::Approx(2.0));
  }
  SUBCASE("exact zero series") {
    const auto t = fit_convergence({1.0, 0.5, 0.25}, {0.0, 0.0, 0.0});
    CHECK(t.exact);
    CHECK(t.order_text() == "exact");
  }
  SUBCASE("non-monotone is flagged, not fatal") {
    const auto t = fit_convergence({1.0, 0.5, 0.25, 0.125}, {e, e / 2, e, e / 8});
    CHECK_FALSE(t.monotone);
    CHECK(std::isfinite(t.order));
  }
  SUBCASE("a stray zero leaves the order undefined") {
    const auto t = fit_convergence({1.0, 0.5, 0.25}, {e, 0.0, e / 4});
    CHECK(t.order_text() == "undefined");
  }
  SUBCASE("too few levels") { CHECK_THROWS_AS(fit_convergence({1.0, 0.5}, {e, e / 2}), Error); }
  SUBCASE("random power laws recover their order") {
    CounterRng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const double order = 0.2 + 2.8 * rng.uniform_open();
      const double c0 = std::exp(4.0 * rng.uniform_open() - 2.0);
      const double h0 = 0.5 * rng.uniform_open() + 0.01;
      std::vector<double> steps;
      std::vector<double> values;
      for (int l = 0; l < 3 + trial % 4; ++l) {
        steps.push_back(h0 / std::pow(2.0, l));
        values.push_back(c0 * std::pow(steps.back(), order));
      }
      const auto t = fit_convergence(steps, values);
      REQUIRE(t.order == doctest::Approx(order).epsilon(1e-9));
      REQUIRE(t.monotone);
    }
  }
}

TEST_CASE("end-to-end perturbative convergence for a smooth drift") {
  ExperimentConfig c = default_config(Experiment::Convergence);
  c.drift = "trig(1,1)";
  c.mollify_epsilon = 0.0;
  c.n_paths = 3;
  const auto t = convergence_table(c, 3);
  CHECK(t.steps.size() == 3);
  CHECK(t.monotone);
  CHECK(t.order >= 0.8);
  CHECK_THROWS_AS(convergence_table(c, 2), Error);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch_dir("cli");
  fs::create_directories(dir);
  CHECK(cli("sample-path --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "path_0000.csv"));
  CHECK(cli("sample-path --seed 5 --format json --out " + (dir / "json").string()) == 0);
  CHECK(fs::exists(dir / "json" / "report.json"));
  CHECK(slurp(dir / "json" / "report.json").find("\"ensemble.master_seed\": \"5\"") != std::string::npos);
  CHECK(cli("no-such-command") == 2);
  CHECK(cli("flow --config " + (dir / "missing.cfg").string()) == 2);
  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "schema = 1\nexperiment = flow\nnoise.speed = 3\n";
  }
  CHECK(cli("flow --config " + (dir / "bad.cfg").string()) == 2);
  {
    std::ofstream cfg(dir / "gate.cfg");
    cfg << "schema = 1\nexperiment = flow\nnoise.alpha = 0.5\ndrift.field = counterexample(0.6,1)\n";
  }
  CHECK(cli("flow --config " + (dir / "gate.cfg").string() + " --out " + (dir / "gate").string()) == 2);
  CHECK(cli("flow --config " + (dir / "gate.cfg").string() + " --override-gate --out " + (dir / "gate").string()) == 0);
  CHECK(cli("flow --set 'drift.field=linear(1e6)' --out " + (dir / "blow").string()) == 3);
  CHECK(cli("weak-check --set noise.mode=exact --set ensemble.n_paths=1 --out " + (dir / "cap").string()) == 4);
  CHECK(cli("flow --set nonsense --out " + (dir / "x").string()) == 2);
}
