#include "levyflow/studies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace levyflow {

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::InvalidSpec, "median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double log_log_slope(const std::vector<double>& steps, const std::vector<double>& values) {
  if (steps.size() != values.size() || steps.size() < 2) fail(ErrorKind::InvalidSpec, "slope needs two or more matching points");
  const std::size_t n = steps.size();
  std::vector<double> lx(n);
  std::vector<double> ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(steps[i] > 0.0) || !(values[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    lx[i] = std::log(steps[i]);
    ly[i] = std::log(values[i]);
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) fail(ErrorKind::InvalidSpec, "slope needs distinct steps");
  return sxy / sxx;
}

DriftField prepared_drift(const DriftField& raw, double epsilon) {
  if (epsilon == 0.0) return raw;
  DriftField m = mollify(raw, MollifierSpec::make(epsilon, raw.dim));
  if (raw.dim == 1 && m.has_jacobian()) return tabulate(m, -30.0, 30.0, 60001);
  return m;
}

namespace {

std::size_t coarsening(int levels, int level) { return std::size_t{1} << (levels - 1 - level); }

void require_levels(int levels) {
  if (levels < 1 || levels > 20) fail(ErrorKind::InvalidSpec, "levels must lie in [1, 20]");
}

LevelSeries collect(const std::vector<std::vector<double>>& per_path, double base_dt, int levels) {
  LevelSeries out;
  for (int l = 0; l < levels; ++l) {
    std::vector<double> column;
    column.reserve(per_path.size());
    for (const auto& row : per_path) column.push_back(row[static_cast<std::size_t>(l)]);
    out.steps.push_back(base_dt * static_cast<double>(coarsening(levels, l)));
    out.values.push_back(median(std::move(column)));
  }
  return out;
}

}  // namespace

LevelSeries roundtrip_study(const DriftField& b, const StableSpec& spec, const std::vector<Vec>& points,
                            double horizon, double base_dt, int levels, const EnsembleSettings& ens) {
  require_levels(levels);
  const auto per_path = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t p) {
    const LevyPath path = sample_path(spec, horizon, base_dt, stream_seed(ens.master_seed, p));
    std::vector<double> row;
    for (int l = 0; l < levels; ++l) {
      const TimeGrid grid = TimeGrid::bind(path, coarsening(levels, l));
      const std::size_t last = grid.nodes() - 1;
      double worst = 0.0;
      for (const Vec& x : points) {
        const Vec y = flow_map(b, x, grid, 0, last);
        worst = std::max(worst, (inverse_flow_map(b, y, grid, 0, last) - x).norm());
      }
      row.push_back(worst);
    }
    return row;
  });
  return collect(per_path, base_dt, levels);
}

LevelSeries perturbative_study(const DriftField& b, const StableSpec& spec, const ResidualSetting& setting,
                               double horizon, double base_dt, int levels, const EnsembleSettings& ens) {
  require_levels(levels);
  const auto per_path = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t p) {
    const LevyPath path = sample_path(spec, horizon, base_dt, stream_seed(ens.master_seed, p));
    std::vector<double> row;
    for (int l = 0; l < levels; ++l) {
      const double h = setting.h0 / static_cast<double>(std::size_t{1} << l);
      const TimeGrid grid = TimeGrid::bind(path, coarsening(levels, l));
      const TransportSolution sol =
          solve(b, setting.u0, grid, {}, box_lattice(setting.theta.center, 1.0, h), Exec::Serial);
      row.push_back(perturbative_residual(sol, setting.theta, grid.nodes() - 1, h, Exec::Serial));
    }
    return row;
  });
  return collect(per_path, base_dt, levels);
}

LevelSeries weak_study(const DriftField& b, double alpha, double c_alpha, const ResidualSetting& setting,
                       double horizon, double base_dt, int levels, const EnsembleSettings& ens) {
  require_levels(levels);
  const double finest = std::pow(0.25, levels - 1);
  const StableSpec spec =
      StableSpec::make(alpha, c_alpha, b.dim, SimulationMode::JumpDecomposition, finest, SmallJumpPolicy::Drop);
  const auto per_path = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t p) {
    const LevyPath fine = sample_path(spec, horizon, base_dt, stream_seed(ens.master_seed, p));
    std::vector<double> row;
    for (int l = 0; l < levels; ++l) {
      const double h = setting.h0 / static_cast<double>(std::size_t{1} << l);
      const LevyPath path = recut(fine, std::pow(0.25, l));
      const TimeGrid grid = TimeGrid::bind(path, coarsening(levels, l));
      const TransportSolution sol =
          solve(b, setting.u0, grid, {}, box_lattice(setting.theta.center, 1.0, h), Exec::Serial);
      row.push_back(weak_residual(sol, setting.theta, grid.nodes() - 1, h, Exec::Serial));
    }
    return row;
  });
  return collect(per_path, base_dt, levels);
}

ConjugationStudy conjugation_study(const DriftField& b, const StableSpec& spec, const TorusGrid& torus, const Vec& x,
                                   double horizon, double base_dt, int levels, const EnsembleSettings& ens) {
  require_levels(levels);
  ConjugationStudy out;
  out.search = ito_tanaka_lambda_search(b, spec, torus);
  const PsiTransform psi = psi_transform(out.search.u);
  out.min_singular = psi.min_singular;
  out.max_singular = psi.max_singular;
  const double lambda = out.search.lambda;
  const auto per_path = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t p) {
    const LevyPath path = sample_path(spec, horizon, base_dt, stream_seed(ens.master_seed, p));
    std::vector<double> row;
    for (int l = 0; l < levels; ++l)
      row.push_back(verify_conjugation(b, psi, lambda, TimeGrid::bind(path, coarsening(levels, l)), x).sup);
    return row;
  });
  out.defects = collect(per_path, base_dt, levels);
  return out;
}

MomentStudy moment_study(const DriftField& b, const StableSpec& spec, const Vec& x,
                         const std::vector<double>& separations, double p, const EnsembleSettings& ens) {
  MomentStudy out;
  out.separations = separations;
  std::vector<double> means;
  for (const double s : separations) {
    Vec y = x;
    y(0) += s;
    out.moments.push_back(moment_estimate(b, spec, x, y, p, ens));
    means.push_back(out.moments.back().mean);
  }
  if (separations.size() >= 2) out.slope = log_log_slope(separations, means);
  return out;
}

SweepStudy stability_study(const DriftField& raw, const StableSpec& spec, const std::vector<double>& epsilons,
                           double ratio, const std::vector<Vec>& points, double p, const EnsembleSettings& ens) {
  if (!(ratio > 1.0)) fail(ErrorKind::InvalidSpec, "reference ratio must exceed 1");
  SweepStudy out;
  out.epsilons = epsilons;
  for (const double eps : epsilons) {
    const DriftField reference = prepared_drift(raw, eps / ratio);
    const DriftField coarse = prepared_drift(raw, eps);
    const auto row = stability_sweep(reference, {coarse}, spec, points, p, ens);
    out.values.push_back(row[0].mean);
    out.std_errors.push_back(row[0].std_error);
  }
  return out;
}

SweepStudy commutator_study(const DriftField& b, const StableSpec& spec, const std::vector<double>& epsilons,
                            const CommutatorSetting& setting, const EnsembleSettings& ens) {
  if (b.dim != 1) fail(ErrorKind::Capability, "the commutator study is one-dimensional");
  if (!(setting.flow_hi > setting.flow_lo)) fail(ErrorKind::InvalidSpec, "empty flow window");
  const Lattice sites = Lattice::midpoint(1, setting.flow_lo, setting.flow_hi, setting.flow_h);
  const double center = 0.5 * (setting.flow_lo + setting.flow_hi);
  const double half = 0.5 * (setting.flow_hi - setting.flow_lo);
  const auto rho = [&](const Vec& y) {
    const double s = (y(0) - center) / half;
    return std::abs(s) < 1.0 ? 1.0 - s * s : 0.0;
  };
  // rows[p][e]: |pairing| on path p at epsilons[e]
  const auto rows = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t p) {
    const TimeGrid grid =
        TimeGrid::bind(sample_path(spec, ens.horizon, ens.base_dt, stream_seed(ens.master_seed, p)));
    const std::size_t last = grid.nodes() - 1;
    FlowSamples flow;
    flow.weights.assign(sites.size(), sites.cell_volume());
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      flow.points.push_back(sites.point(i));
      flow.images.push_back(flow_map(b, flow.points[i], grid, 0, last));
      lo = std::min(lo, flow.images[i](0));
      hi = std::max(hi, flow.images[i](0));
    }
    const Lattice ulat = Lattice::midpoint(1, lo - 1.0, hi + 1.0, setting.u_h);
    const InitialDatum bump = bump_datum(Vec::Constant(1, 0.5 * (lo + hi)), 0.5 * (hi - lo) + 0.5);
    const GridField u = sample_on(ulat, [&](const Vec& y) { return bump(y); });
    std::vector<double> row;
    for (const double eps : epsilons)
      row.push_back(std::abs(commutator_pairing(b, u, flow, rho, MollifierSpec::make(eps, 1))));
    return row;
  });
  SweepStudy out;
  out.epsilons = epsilons;
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    std::vector<double> column;
    for (const auto& row : rows) column.push_back(row[e]);
    const MonteCarloEstimate est = summarize(column);
    out.values.push_back(est.mean);
    out.std_errors.push_back(est.std_error);
  }
  return out;
}

SweepStudy sobolev_study(const DriftField& raw, const StableSpec& spec, const std::vector<double>& epsilons,
                         const SobolevSetting& setting, const EnsembleSettings& ens) {
  const Lattice lat = Lattice::midpoint(raw.dim, setting.lo, setting.hi, setting.h);
  SweepStudy out;
  out.epsilons = epsilons;
  for (const double eps : epsilons) {
    const DriftField b = prepared_drift(raw, eps);
    const auto per_path = map_indices<double>(ens.exec, ens.n_paths, [&](std::size_t p) {
      const TimeGrid grid =
          TimeGrid::bind(sample_path(spec, ens.horizon, ens.base_dt, stream_seed(ens.master_seed, p)));
      std::vector<std::vector<double>> logj(lat.size());
      for (std::size_t i = 0; i < lat.size(); ++i) logj[i] = log_jacobian(b, lat.point(i), grid);
      double acc = 0.0;
      GridField g{lat, std::vector<double>(lat.size())};
      for (std::size_t k = 1; k < grid.nodes(); ++k) {
        for (std::size_t i = 0; i < lat.size(); ++i) g.values[i] = logj[i][k];
        acc += std::pow(discrete_sobolev_seminorm(g, setting.radius, setting.delta, setting.p), 1.0 / setting.p);
      }
      return acc / static_cast<double>(grid.nodes() - 1);
    });
    const MonteCarloEstimate est = summarize(per_path);
    out.values.push_back(est.mean);
    out.std_errors.push_back(est.std_error);
  }
  return out;
}

}  // namespace levyflow
