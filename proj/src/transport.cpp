#include "levyflow/transport.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace levyflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// exp(1 - 1/(1 - s)) and its first two derivatives in s = |x - c|^2 / r^2.
struct BumpProfile {
  double v, d1, d2;
};

BumpProfile bump_profile(double s) {
  if (s >= 1.0) return {0.0, 0.0, 0.0};
  const double q = 1.0 / (1.0 - s);
  const double v = std::exp(1.0 - q);
  return {v, -v * q * q, v * (q * q * q * q - 2.0 * q * q * q)};
}

// Antipodal direction pairs with weights summing to 1, one representative per pair.
struct DirectionSet {
  std::vector<Vec> dirs;
  std::vector<double> weights;
};

const DirectionSet& direction_pairs(int dim) {
  static const DirectionSet sets[3] = {
      [] {
        DirectionSet s;
        s.dirs.push_back(Vec::Constant(1, 1.0));
        s.weights.push_back(1.0);
        return s;
      }(),
      [] {
        DirectionSet s;
        const int m = 32;  // equally spaced half circle; exact for trigonometric degree < 2m
        for (int j = 0; j < m; ++j) {
          const double phi = std::numbers::pi * (j + 0.5) / m;
          Vec w(2);
          w << std::cos(phi), std::sin(phi);
          s.dirs.push_back(w);
          s.weights.push_back(1.0 / m);
        }
        return s;
      }(),
      [] {
        DirectionSet s;
        using Rule = boost::math::quadrature::gauss<double, 8>;
        const int m = 16;
        for (std::size_t i = 0; i < Rule::abscissa().size(); ++i) {
          for (int sign : {1, -1}) {
            if (sign < 0 && Rule::abscissa()[i] == 0.0) continue;
            const double ct = 0.5 * (1.0 + sign * Rule::abscissa()[i]);  // cos(polar) in (0,1)
            const double wt = 0.5 * Rule::weights()[i];
            const double st = std::sqrt(1.0 - ct * ct);
            for (int j = 0; j < m; ++j) {
              const double phi = 2.0 * std::numbers::pi * j / m;
              Vec w(3);
              w << st * std::cos(phi), st * std::sin(phi), ct;
              s.dirs.push_back(w);
              s.weights.push_back(wt / m);
            }
          }
        }
        return s;
      }(),
  };
  if (dim < 1 || dim > 3) fail(ErrorKind::InvalidSpec, "direction sets exist for d <= 3");
  return sets[dim - 1];
}

std::vector<std::size_t> support_points(const Lattice& lat, const Vec& center, double radius) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < lat.size(); ++i)
    if ((lat.point(i) - center).norm() < radius) out.push_back(i);
  return out;
}

double sum_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void require_support(const TestFunction& theta) {
  if (!std::isfinite(theta.support_radius))
    fail(ErrorKind::InvalidSpec, "lattice pairings need a compactly supported test function");
}

}  // namespace

InitialDatum constant_datum(double c) {
  return {"constant", [c](const Vec&) { return c; }, std::abs(c)};
}

InitialDatum bump_datum(const Vec& center, double radius, double height) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidSpec, "bump radius must be positive");
  return {"bump", [=](const Vec& x) { return height * bump_profile((x - center).squaredNorm() / (radius * radius)).v; },
          std::abs(height)};
}

InitialDatum function_datum(std::string name, std::function<double(const Vec&)> f, double bound_M) {
  return {std::move(name), std::move(f), bound_M};
}

TestFunction bump_test_function(const Vec& center, double radius, double height) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidSpec, "bump radius must be positive");
  TestFunction t;
  t.name = "bump";
  t.center = center;
  t.support_radius = radius;
  const double r2 = radius * radius;
  t.eval = [=](const Vec& x) { return height * bump_profile((x - center).squaredNorm() / r2).v; };
  t.gradient = [=](const Vec& x) -> Vec {
    const Vec y = x - center;
    return height * bump_profile(y.squaredNorm() / r2).d1 * (2.0 / r2) * y;
  };
  t.hessian = [=](const Vec& x) -> Mat {
    const Vec y = x - center;
    const BumpProfile p = bump_profile(y.squaredNorm() / r2);
    const auto d = y.size();
    return height * (p.d2 * (4.0 / (r2 * r2)) * y * y.transpose() + p.d1 * (2.0 / r2) * Mat::Identity(d, d));
  };
  return t;
}

TestFunction quadratic_test_function(const Mat& Q, const Vec& g) {
  TestFunction t;
  t.name = "quadratic";
  t.center = Vec::Zero(g.size());
  t.support_radius = kInf;
  t.eval = [=](const Vec& x) { return 0.5 * x.dot(Q * x) + g.dot(x); };
  t.gradient = [=](const Vec& x) -> Vec { return 0.5 * (Q + Q.transpose()) * x + g; };
  t.hessian = [=](const Vec&) -> Mat { return 0.5 * (Q + Q.transpose()); };
  return t;
}

TestFunction zero_test_function(int dim) {
  TestFunction t;
  t.name = "zero";
  t.center = Vec::Zero(dim);
  t.support_radius = 0.0;
  t.eval = [](const Vec&) { return 0.0; };
  t.gradient = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
  t.hessian = [dim](const Vec&) -> Mat { return Mat::Zero(dim, dim); };
  return t;
}

Lattice box_lattice(const Vec& center, double radius, double h) {
  if (!(radius > 0.0 && h > 0.0)) fail(ErrorKind::InvalidSpec, "box lattice needs positive radius and spacing");
  const int d = static_cast<int>(center.size());
  const int n = std::max(1, static_cast<int>(std::ceil(2.0 * radius / h - 1e-9)));
  Lattice lat;
  lat.dim = d;
  lat.h = 2.0 * radius / n;
  lat.origin = center - Vec::Constant(d, radius - 0.5 * lat.h);
  for (int i = 0; i < d; ++i) lat.n[i] = n;
  return lat;
}

double TransportSolution::value(std::size_t node, const Vec& x) const {
  return u0(inverse_flow_map(b, x, *grid, 0, node));
}

std::vector<double> TransportSolution::values(std::size_t node, const std::vector<Vec>& points, Exec exec) const {
  return map_indices<double>(exec, points.size(), [&](std::size_t i) { return value(node, points[i]); });
}

const std::vector<double>& TransportSolution::snapshot(std::size_t node) const {
  const auto it = std::find(snapshot_nodes.begin(), snapshot_nodes.end(), node);
  if (it == snapshot_nodes.end()) fail(ErrorKind::Coverage, "no snapshot stored for the requested node");
  return snapshots[static_cast<std::size_t>(it - snapshot_nodes.begin())];
}

double TransportSolution::max_abs() const {
  double m = 0.0;
  for (const auto& s : snapshots)
    for (double v : s) m = std::max(m, std::abs(v));
  return m;
}

TransportSolution solve(const DriftField& b, const InitialDatum& u0, const TimeGrid& grid,
                        const std::vector<std::size_t>& nodes, const Lattice& xgrid, Exec exec) {
  for (std::size_t n : nodes)
    if (n >= grid.nodes()) fail(ErrorKind::Query, "snapshot node is outside the grid");
  TransportSolution sol;
  sol.b = b;
  sol.u0 = u0;
  sol.grid = &grid;
  sol.xgrid = xgrid;
  sol.snapshot_nodes = nodes;
  std::vector<Vec> pts(xgrid.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = xgrid.point(i);
  for (std::size_t n : nodes) sol.snapshots.push_back(sol.values(n, pts, exec));
  return sol;
}

double pairing(const TransportSolution& sol, const TestFunction& theta, std::size_t node) {
  require_support(theta);
  const Lattice& lat = sol.xgrid;
  const Vec lo = lat.lower() - Vec::Constant(lat.dim, 0.5 * lat.h);
  const Vec hi = lat.upper() + Vec::Constant(lat.dim, 0.5 * lat.h);
  for (int i = 0; i < lat.dim; ++i)
    if (theta.center(i) - theta.support_radius < lo(i) - 1e-12 || theta.center(i) + theta.support_radius > hi(i) + 1e-12)
      fail(ErrorKind::Coverage, "snapshot lattice does not cover the support of the test function");
  const auto& u = sol.snapshot(node);
  double acc = 0.0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const double t = theta(lat.point(i));
    if (t != 0.0) acc += t * u[i];
  }
  return acc * lat.cell_volume();
}

double pairing_on_demand(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                         Exec exec) {
  require_support(theta);
  if (theta.support_radius == 0.0) return 0.0;
  const Lattice lat = box_lattice(theta.center, theta.support_radius, h);
  const auto idx = support_points(lat, theta.center, theta.support_radius);
  const auto terms = map_indices<double>(exec, idx.size(), [&](std::size_t i) {
    const Vec y = lat.point(idx[i]);
    return theta(y) * sol.value(node, y);
  });
  return sum_in_order(terms) * lat.cell_volume();
}

double levy_generator(const TestFunction& theta, const StableSpec& spec, const Vec& x, double rmin, double rmax) {
  if (!(rmin >= 0.0 && rmin < rmax)) fail(ErrorKind::InvalidSpec, "generator range must satisfy 0 <= rmin < rmax");
  const double dist = (x - theta.center).norm();
  if (std::isfinite(theta.support_radius) && dist >= theta.support_radius + rmax) return 0.0;
  spec.validate();
  const int d = spec.dim;
  const double alpha = spec.alpha;
  const double mass = sphere_area(d) * spec.levy_density_constant;
  const DirectionSet& ds = direction_pairs(d);
  const double t0 = theta(x);

  // Below r_taylor the second difference cancels; integrate r^2 lap / (2d) exactly.
  const double r_taylor = std::min(rmax, 1e-3 * std::min(1.0, theta.support_radius));
  double total = 0.0;
  if (rmin < r_taylor)
    total += theta.hessian(x).trace() / (2.0 * d) * mass *
             (std::pow(r_taylor, 2.0 - alpha) - std::pow(rmin, 2.0 - alpha)) / (2.0 - alpha);
  const double lo = std::max(rmin, r_taylor);
  if (lo >= rmax) return total;

  const auto g = [&](double r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < ds.dirs.size(); ++j)
      acc += ds.weights[j] * 0.5 * (theta(x + r * ds.dirs[j]) + theta(x - r * ds.dirs[j]));
    return acc - t0;
  };
  // Panels in u = log r, broken where the sphere of radius r meets the support edge.
  std::vector<double> breaks{lo, rmax};
  if (std::isfinite(theta.support_radius))
    for (double e : {theta.support_radius - dist, theta.support_radius + dist, dist - theta.support_radius})
      if (e > lo && e < rmax) breaks.push_back(e);
  std::sort(breaks.begin(), breaks.end());
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] <= breaks[i]) continue;
    const auto f = [&](double u) { return g(std::exp(u)) * std::exp(-alpha * u); };
    total += mass * GK::integrate(f, std::log(breaks[i]), std::log(breaks[i + 1]), 15, 1e-11);
  }
  return total;
}

double MarcusTerms::residual() const { return std::abs(pairing - sum()); }

MarcusTerms marcus_weak_terms(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                              Exec exec) {
  const TimeGrid& grid = *sol.grid;
  const StableSpec& spec = grid.spec;
  if (!grid.noiseless && spec.mode != SimulationMode::JumpDecomposition)
    fail(ErrorKind::Capability, "the Marcus weak form needs a JumpDecomposition path with a jump ledger");
  if (!sol.b.has_divergence()) fail(ErrorKind::Capability, "the Marcus weak form needs a divergence handle");
  require_support(theta);
  if (node >= grid.nodes()) fail(ErrorKind::Query, "node is outside the grid");

  MarcusTerms out;
  if (theta.support_radius == 0.0) return out;
  const double rho = theta.support_radius;
  const double delta = spec.cutoff_delta;
  // On a noiseless grid the Levy measure is absent and only terms (1) and (2) remain.
  const bool levy = !grid.noiseless;
  const bool gaussian = levy && spec.small_jump_policy == SmallJumpPolicy::Gaussian;
  const double sigma2 = gaussian ? small_jump_variance(spec, delta) : 0.0;

  // One lattice covers supp theta + B(1), where the compensator densities live.
  const Lattice lat = box_lattice(theta.center, rho + 1.0, h);
  const double vol = lat.cell_volume();
  const auto inner = support_points(lat, theta.center, rho);
  const auto outer = levy ? support_points(lat, theta.center, rho + 1.0) : std::vector<std::size_t>{};

  struct InnerData {
    Vec y;
    double theta, lap, drift;
  };
  std::vector<InnerData> in(inner.size());
  for_each_index(exec, inner.size(), [&](std::size_t i) {
    const Vec y = lat.point(inner[i]);
    in[i] = {y, theta(y), theta.hessian(y).trace(),
             sol.b(y).dot(theta.gradient(y)) + sol.b.divergence(y) * theta(y)};
  });
  struct OuterData {
    Vec x;
    double full, mid;
  };
  std::vector<OuterData> ou(outer.size());
  for_each_index(exec, outer.size(), [&](std::size_t i) {
    const Vec x = lat.point(outer[i]);
    ou[i] = {x, levy_generator(theta, spec, x, 0.0, 1.0), delta < 1.0 ? levy_generator(theta, spec, x, delta, 1.0) : 0.0};
  });

  // Ledger jump ending at node k+1, if any.
  std::vector<const BigJump*> jump_of_cell(grid.cells(), nullptr);
  for (const auto& j : grid.big_jumps) jump_of_cell[j.node - 1] = &j;

  struct CellTerms {
    double drift = 0.0, small = 0.0, large = 0.0, comp = 0.0;
  };
  const auto cells = map_indices<CellTerms>(exec, node, [&](std::size_t k) {
    CellTerms c;
    const double dt = grid.dt(k);
    // Right-point rule: the drift and compensators act on u_{k+1}.
    for (const auto& p : in) c.drift += p.drift * sol.value(k + 1, p.y);
    for (const auto& p : ou) {
      if (p.full == 0.0 && p.mid == 0.0) continue;
      const double u = sol.value(k + 1, p.x);
      c.comp += p.full * u;
      c.small -= p.mid * u;
    }
    c.drift *= dt * vol;
    c.comp *= dt * vol;
    c.small *= dt * vol;

    // The cell shift is dW + z (Gaussian part, then ledger jump), all seen by u_k = u(s-).
    const Vec z = jump_of_cell[k] ? jump_of_cell[k]->jump : Vec::Zero(grid.dim);
    const Vec w = grid.increments[k] - z;
    const bool has_w = gaussian && w.squaredNorm() > 0.0;
    double jump_part = 0.0;
    double gauss_part = 0.0;
    for (const auto& p : in) {
      const double uw = has_w ? sol.value(k, p.y - w) : 0.0;
      const double u0 = sol.value(k, p.y);
      if (jump_of_cell[k]) jump_part += p.theta * (sol.value(k, p.y - w - z) - (has_w ? uw : u0));
      if (has_w) gauss_part += p.theta * (uw - u0);
      if (gaussian) gauss_part -= 0.5 * sigma2 * dt * p.lap * u0;
    }
    if (jump_of_cell[k] && z.norm() > 1.0)
      c.large += jump_part * vol;
    else
      c.small += jump_part * vol;
    c.small += gauss_part * vol;
    return c;
  });

  for (const auto& c : cells) {
    out.drift += c.drift;
    out.small_jumps += c.small;
    out.large_jumps += c.large;
    out.compensator += c.comp;
  }
  const auto pair_terms = map_indices<std::pair<double, double>>(exec, in.size(), [&](std::size_t i) {
    return std::make_pair(in[i].theta * sol.value(node, in[i].y), in[i].theta * sol.u0(in[i].y));
  });
  for (const auto& [p, i0] : pair_terms) {
    out.pairing += p * vol;
    out.initial += i0 * vol;
  }
  return out;
}

double weak_residual(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h, Exec exec) {
  if (node == 0) return 0.0;
  return marcus_weak_terms(sol, theta, node, h, exec).residual();
}

double perturbative_residual(const TransportSolution& sol, const TestFunction& theta, std::size_t node, double h,
                             Exec exec) {
  const TimeGrid& grid = *sol.grid;
  if (!sol.b.has_divergence()) fail(ErrorKind::Capability, "the perturbative form needs a divergence handle");
  require_support(theta);
  if (node >= grid.nodes()) fail(ErrorKind::Coverage, "no solution data at the requested node");
  if (node == 0 || theta.support_radius == 0.0) return 0.0;

  const Lattice lat = box_lattice(theta.center, theta.support_radius, h);
  const double vol = lat.cell_volume();
  const auto idx = support_points(lat, theta.center, theta.support_radius);
  struct Point {
    Vec y;
    double theta;
    Vec grad;
  };
  std::vector<Point> pts;
  for (std::size_t i : idx) {
    const Vec y = lat.point(i);
    pts.push_back({y, theta(y), theta.gradient(y)});
  }
  const auto L = grid.noise_values();
  const Vec Lt = L[node];

  // Term k integrates over x = y - a with a = L_t - L_{k+1}, so theta is evaluated at y.
  const auto cell = map_indices<double>(exec, node, [&](std::size_t k) {
    const Vec a = Lt - L[k + 1];
    double acc = 0.0;
    for (const auto& p : pts) {
      const Vec x = p.y - a;
      acc += (sol.b(x).dot(p.grad) + sol.b.divergence(x) * p.theta) * sol.value(k + 1, x);
    }
    return acc * grid.dt(k) * vol;
  });
  const auto ends = map_indices<std::pair<double, double>>(exec, pts.size(), [&](std::size_t i) {
    return std::make_pair(pts[i].theta * sol.value(node, pts[i].y), pts[i].theta * sol.u0(pts[i].y - Lt));
  });
  double lhs = 0.0, shifted = 0.0;
  for (const auto& [p, s] : ends) {
    lhs += p * vol;
    shifted += s * vol;
  }
  return std::abs(lhs - shifted - sum_in_order(cell));
}

NonuniquenessReport nonuniqueness_demo(double gamma, double R, const std::optional<StableSpec>& noise,
                                       const std::vector<double>& perturbations, std::size_t n_paths,
                                       double horizon, double dt, std::uint64_t master_seed, Exec exec) {
  const DriftField b = counterexample_field(gamma, R);
  NonuniquenessReport rep;
  rep.gamma = gamma;
  rep.R = R;
  rep.horizon = horizon;
  rep.dt = dt;
  rep.noisy = noise.has_value();
  rep.n_paths = noise ? n_paths : 1;
  rep.master_seed = master_seed;
  if (rep.n_paths == 0) fail(ErrorKind::InvalidSpec, "nonuniqueness demo needs at least one path");

  // Per path: separations at the uniform nodes for every perturbation.
  const auto per_path = map_indices<std::vector<std::vector<double>>>(exec, rep.n_paths, [&](std::size_t i) {
    const LevyPath path = noise ? sample_path(*noise, horizon, dt, stream_seed(master_seed, i))
                                : zero_path(StableSpec::make(1.0, 1.0, 1), horizon, dt);
    const TimeGrid grid = TimeGrid::bind(path);
    const Trajectory base = solve_forward(b, Vec::Zero(1), grid);
    std::vector<std::vector<double>> seps;
    for (double p : perturbations) {
      const Trajectory pert = solve_forward(b, Vec::Constant(1, p), grid);
      std::vector<double> s;
      for (std::size_t k = 0; k < grid.nodes(); ++k)
        if (grid.origin[k] == NodeOrigin::Uniform) s.push_back(std::abs(pert[k](0) - base[k](0)));
      seps.push_back(std::move(s));
    }
    return seps;
  });

  const LevyPath reference = zero_path(StableSpec::make(1.0, 1.0, 1), horizon, dt);
  for (std::size_t j = 0; j < perturbations.size(); ++j) {
    SeparationCurve c;
    c.perturbation = perturbations[j];
    c.times = reference.times;
    for (std::size_t k = 0; k < c.times.size(); ++k) {
      std::vector<double> col;
      for (const auto& p : per_path) col.push_back(p[j][k]);
      const std::size_t m = col.size() / 2;
      std::nth_element(col.begin(), col.begin() + m, col.end());
      double med = col[m];
      if (col.size() % 2 == 0) med = 0.5 * (med + *std::max_element(col.begin(), col.begin() + m));
      c.median_separation.push_back(med);
    }
    c.final_median = c.median_separation.back();
    rep.curves.push_back(std::move(c));
  }
  return rep;
}

}  // namespace levyflow
