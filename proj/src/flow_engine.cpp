#include "levyflow/flow_engine.hpp"

#include <algorithm>
#include <cmath>

namespace levyflow {

namespace {

void check_finite(const Vec& x, std::size_t step, const char* what) {
  if (!x.allFinite()) throw NumericFailure(std::string(what) + " produced a non-finite state", step);
}

}  // namespace

TimeGrid TimeGrid::bind(const LevyPath& path, std::size_t coarsen) {
  if (coarsen == 0) fail(ErrorKind::InvalidSpec, "coarsening factor must be positive");
  TimeGrid g;
  g.base_dt = path.base_dt * static_cast<double>(coarsen);
  g.path_seed = path.seed;
  g.dim = path.dim();
  g.spec = path.spec;
  g.noiseless = path.noiseless;
  g.times.push_back(path.times.front());
  g.origin.push_back(NodeOrigin::Uniform);
  std::size_t uniform_index = 0;
  std::size_t jump = 0;
  Vec acc = Vec::Zero(g.dim);
  const std::size_t last = path.times.size() - 1;
  for (std::size_t node = 1; node <= last; ++node) {
    acc += path.increments[node - 1];
    const bool uniform = path.origin[node] == NodeOrigin::Uniform;
    if (uniform) ++uniform_index;
    const bool keep = !uniform || uniform_index % coarsen == 0 || node == last;
    if (!keep) continue;
    g.times.push_back(path.times[node]);
    g.origin.push_back(path.origin[node]);
    g.increments.push_back(acc);
    acc = Vec::Zero(g.dim);
    if (!uniform) {
      const BigJump& j = path.big_jumps[jump++];
      g.big_jumps.push_back({j.time, j.jump, g.times.size() - 1});
    }
  }
  return g;
}

std::size_t TimeGrid::node_of(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) fail(ErrorKind::Query, "time is not a grid node");
  return static_cast<std::size_t>(it - times.begin());
}

double TimeGrid::max_cell() const {
  double m = 0.0;
  for (std::size_t k = 0; k < cells(); ++k) m = std::max(m, dt(k));
  return m;
}

std::vector<Vec> TimeGrid::noise_values() const {
  std::vector<Vec> out;
  out.reserve(times.size());
  Vec acc = Vec::Zero(dim);
  out.push_back(acc);
  for (const auto& inc : increments) {
    acc += inc;
    out.push_back(acc);
  }
  return out;
}

Trajectory solve_forward(const DriftField& b, const Vec& x0, const TimeGrid& grid, std::size_t start,
                         std::optional<std::size_t> end) {
  const std::size_t stop = end.value_or(grid.nodes() - 1);
  if (start > stop || stop >= grid.nodes()) fail(ErrorKind::Query, "forward solve range is outside the grid");
  Trajectory traj;
  traj.reserve(stop - start + 1);
  Vec x = x0;
  traj.push_back(x);
  for (std::size_t k = start; k < stop; ++k) {
    x = x + b(x) * grid.dt(k) + grid.increments[k];
    check_finite(x, k, "forward Euler step");
    traj.push_back(x);
  }
  return traj;
}

Vec flow_map(const DriftField& b, const Vec& x, const TimeGrid& grid, std::size_t s, std::size_t t) {
  if (s > t || t >= grid.nodes()) fail(ErrorKind::Query, "flow map range is outside the grid");
  Vec y = x;
  for (std::size_t k = s; k < t; ++k) {
    y = y + b(y) * grid.dt(k) + grid.increments[k];
    check_finite(y, k, "forward Euler step");
  }
  return y;
}

std::vector<Vec> inverse_flow(const DriftField& b, const Vec& y, const TimeGrid& grid, std::size_t end) {
  if (end >= grid.nodes()) fail(ErrorKind::Query, "inverse flow end node is outside the grid");
  std::vector<Vec> out(end + 1);
  out[end] = y;
  for (std::size_t k = end; k-- > 0;) {
    out[k] = out[k + 1] - b(out[k + 1]) * grid.dt(k) - grid.increments[k];
    check_finite(out[k], k, "backward Euler step");
  }
  return out;
}

Vec inverse_flow_map(const DriftField& b, const Vec& y, const TimeGrid& grid, std::size_t s, std::size_t t) {
  if (s > t || t >= grid.nodes()) fail(ErrorKind::Query, "inverse flow range is outside the grid");
  Vec z = y;
  for (std::size_t k = t; k-- > s;) {
    z = z - b(z) * grid.dt(k) - grid.increments[k];
    check_finite(z, k, "backward Euler step");
  }
  return z;
}

FlowResult solve_flow(const DriftField& b, const std::vector<Vec>& points, const TimeGrid& grid, Exec exec) {
  FlowResult r;
  r.initial_points = points;
  r.path_seed = grid.path_seed;
  r.grid = &grid;
  r.trajectories = map_indices<Trajectory>(exec, points.size(), [&](std::size_t i) {
    return solve_forward(b, points[i], grid);
  });
  return r;
}

DerivativeFlow derivative_flow_variational(const DriftField& b, const Vec& x, const TimeGrid& grid) {
  if (!b.has_jacobian())
    fail(ErrorKind::Capability, "variational derivative needs a Jacobian handle; mollify the field first");
  const int d = static_cast<int>(x.size());
  DerivativeFlow out;
  out.method = DerivativeMethod::Variational;
  out.matrices.reserve(grid.nodes());
  Mat M = Mat::Identity(d, d);
  Vec X = x;
  out.matrices.push_back(M);
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double dt = grid.dt(k);
    M = M + b.jacobian(X) * M * dt;
    X = X + b(X) * dt + grid.increments[k];
    check_finite(X, k, "variational step");
    out.matrices.push_back(M);
  }
  return out;
}

std::vector<Vec> derivative_flow_fd(const DriftField& b, const Vec& x, const TimeGrid& grid, double lambda,
                                    int axis) {
  if (lambda == 0.0) fail(ErrorKind::InvalidSpec, "difference-quotient step must be non-zero");
  if (axis < 0 || axis >= x.size()) fail(ErrorKind::InvalidSpec, "difference-quotient axis out of range");
  Vec xs = x;
  xs(axis) += lambda;
  const Trajectory base = solve_forward(b, x, grid);
  const Trajectory shifted = solve_forward(b, xs, grid);
  std::vector<Vec> col(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) col[k] = (shifted[k] - base[k]) / lambda;
  return col;
}

DerivativeFlow derivative_flow_fd(const DriftField& b, const Vec& x, const TimeGrid& grid, double lambda) {
  if (lambda <= 0.0) lambda = 1e-5 * (1.0 + x.norm());
  const int d = static_cast<int>(x.size());
  DerivativeFlow out;
  out.method = DerivativeMethod::DifferenceQuotient;
  out.lambda = lambda;
  out.matrices.assign(grid.nodes(), Mat::Zero(d, d));
  for (int j = 0; j < d; ++j) {
    const auto col = derivative_flow_fd(b, x, grid, lambda, j);
    for (std::size_t k = 0; k < col.size(); ++k) out.matrices[k].col(j) = col[k];
  }
  return out;
}

std::vector<double> log_jacobian(const DriftField& b, const Vec& x, const TimeGrid& grid) {
  if (!b.has_divergence()) fail(ErrorKind::Capability, "log-Jacobian needs a divergence handle");
  std::vector<double> out;
  out.reserve(grid.nodes());
  double acc = 0.0;
  Vec X = x;
  out.push_back(acc);
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double dt = grid.dt(k);
    acc += b.divergence(X) * dt;
    X = X + b(X) * dt + grid.increments[k];
    check_finite(X, k, "log-Jacobian step");
    out.push_back(acc);
  }
  return out;
}

double semiflow_defect(const DriftField& b, const TimeGrid& grid, std::size_t s, std::size_t r, std::size_t t,
                       const Vec& x) {
  if (!(s <= r && r <= t)) fail(ErrorKind::Query, "semiflow defect needs s <= r <= t");
  const Vec direct = flow_map(b, x, grid, s, t);
  const Vec composed = flow_map(b, flow_map(b, x, grid, s, r), grid, r, t);
  return (direct - composed).norm();
}

MonteCarloEstimate summarize(const std::vector<double>& values) {
  MonteCarloEstimate e;
  e.samples = values.size();
  if (values.empty()) return e;
  double sum = 0.0;
  for (double v : values) sum += v;
  e.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.std_error = std::sqrt(ss / (values.size() - 1) / values.size());
  }
  return e;
}

MonteCarloEstimate moment_estimate(const DriftField& b, const StableSpec& spec, const Vec& x, const Vec& y, double p,
                                   const EnsembleSettings& ens) {
  if (!(p >= 1.0)) fail(ErrorKind::InvalidSpec, "moment order p must be >= 1");
  const auto per_path = map_indices<double>(ens.exec, ens.n_paths, [&](std::size_t i) {
    const LevyPath path = sample_path(spec, ens.horizon, ens.base_dt, stream_seed(ens.master_seed, i));
    const TimeGrid grid = TimeGrid::bind(path);
    Vec a = x;
    Vec c = y;
    double sup = (a - c).norm();
    for (std::size_t k = 0; k < grid.cells(); ++k) {
      const double dt = grid.dt(k);
      a = a + b(a) * dt + grid.increments[k];
      c = c + b(c) * dt + grid.increments[k];
      check_finite(a, k, "moment estimate");
      check_finite(c, k, "moment estimate");
      sup = std::max(sup, (a - c).norm());
    }
    return std::pow(sup, p);
  });
  return summarize(per_path);
}

double discrete_sobolev_seminorm(const GridField& values, double radius, double delta, double p) {
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::InvalidSpec, "Sobolev order must lie in (0,1)");
  if (!(p >= 1.0)) fail(ErrorKind::InvalidSpec, "Sobolev exponent must be >= 1");
  const Lattice& lat = values.lattice;
  std::vector<Vec> pts;
  std::vector<double> vals;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const Vec x = lat.point(i);
    if (x.norm() <= radius + 1e-12) {
      pts.push_back(x);
      vals.push_back(values.values[i]);
    }
  }
  const double power = lat.dim + delta * p;
  const double vol2 = std::pow(lat.cell_volume(), 2);
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const double diff = std::abs(vals[i] - vals[j]);
      if (diff == 0.0) continue;
      row += std::pow(diff, p) / std::pow((pts[i] - pts[j]).norm(), power);
    }
    acc += row;
  }
  return acc * vol2;
}

std::vector<MonteCarloEstimate> stability_sweep(const DriftField& b, const std::vector<DriftField>& b_sequence,
                                                const StableSpec& spec, const std::vector<Vec>& points, double p,
                                                const EnsembleSettings& ens) {
  const std::size_t m = b_sequence.size();
  const auto per_path = map_indices<std::vector<double>>(ens.exec, ens.n_paths, [&](std::size_t i) {
    const LevyPath path = sample_path(spec, ens.horizon, ens.base_dt, stream_seed(ens.master_seed, i));
    const TimeGrid grid = TimeGrid::bind(path);
    std::vector<double> row(m, 0.0);
    for (const Vec& x : points) {
      const Trajectory ref = solve_forward(b, x, grid);
      for (std::size_t n = 0; n < m; ++n) {
        const Trajectory other = solve_forward(b_sequence[n], x, grid);
        double sup = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) sup = std::max(sup, (ref[k] - other[k]).norm());
        row[n] += std::pow(sup, p) / static_cast<double>(points.size());
      }
    }
    return row;
  });
  std::vector<MonteCarloEstimate> out;
  for (std::size_t n = 0; n < m; ++n) {
    std::vector<double> col(ens.n_paths);
    for (std::size_t i = 0; i < ens.n_paths; ++i) col[i] = per_path[i][n];
    out.push_back(summarize(col));
  }
  return out;
}

}  // namespace levyflow
