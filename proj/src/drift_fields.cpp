#include "levyflow/drift_fields.hpp"

#include "levyflow/levy_noise.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace levyflow {

namespace {

constexpr double kInner = 0.25;
constexpr double kOuter = 2.0;

double smooth_step(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double smooth_step_derivative(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

template <int N>
void gauss_legendre_rule(std::vector<double>& x, std::vector<double>& w) {
  using Rule = boost::math::quadrature::gauss<double, N>;
  const auto& a = Rule::abscissa();
  const auto& wt = Rule::weights();
  x.clear();
  w.clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      x.push_back(0.0);
      w.push_back(wt[i]);
    } else {
      x.push_back(a[i]);
      w.push_back(wt[i]);
      x.push_back(-a[i]);
      w.push_back(wt[i]);
    }
  }
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  switch (n) {
    case 8: gauss_legendre_rule<8>(x, w); break;
    case 16: gauss_legendre_rule<16>(x, w); break;
    case 24: gauss_legendre_rule<24>(x, w); break;
    case 32: gauss_legendre_rule<32>(x, w); break;
    case 64: gauss_legendre_rule<64>(x, w); break;
    default: fail(ErrorKind::InvalidSpec, "supported Gauss-Legendre orders: 8, 16, 24, 32, 64");
  }
}

std::vector<double> parse_args(const std::string& inner) {
  std::vector<double> out;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) fail(ErrorKind::InvalidSpec, "empty field argument");
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item.substr(b), &used));
      if (item.find_first_not_of(" \t", b + used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidSpec, "field argument is not a number: '" + item + "'");
    }
  }
  return out;
}

// Tensor quadrature nodes of the mollifier with prenormalised weights.
struct MollifierStencil {
  std::vector<Vec> offsets;
  std::vector<double> value_weight;
  std::vector<Vec> gradient_weight;
};

struct AxisRule {
  std::vector<double> y;
  std::vector<double> w;
};

void append_panel(AxisRule& rule, const std::vector<double>& x1, const std::vector<double>& w1, double a,
                  double b, bool graded_at_a, bool graded_at_b) {
  // Each panel is split at its midpoint; a half that ends on a kink uses the map
  // y = end + (mid - end) s^3, which removes the endpoint singularity.
  const double m = 0.5 * (a + b);
  const auto half = [&](double end, double mid, bool graded) {
    for (std::size_t j = 0; j < x1.size(); ++j) {
      const double t = 0.5 * (x1[j] + 1.0);  // (0, 1)
      const double wt = 0.5 * w1[j];
      if (graded) {
        rule.y.push_back(end + (mid - end) * t * t * t);
        rule.w.push_back(std::abs(mid - end) * 3.0 * t * t * wt);
      } else {
        rule.y.push_back(end + (mid - end) * t);
        rule.w.push_back(std::abs(mid - end) * wt);
      }
    }
  };
  half(a, m, graded_at_a);
  half(b, m, graded_at_b);
}

AxisRule axis_rule(const std::vector<double>& x1, const std::vector<double>& w1, double reach,
                   std::vector<double> breaks) {
  AxisRule rule;
  if (breaks.empty()) {
    for (std::size_t j = 0; j < x1.size(); ++j) {
      rule.y.push_back(reach * x1[j]);
      rule.w.push_back(reach * w1[j]);
    }
    return rule;
  }
  std::sort(breaks.begin(), breaks.end());
  double a = -reach;
  bool a_kink = false;
  for (double c : breaks) {
    if (c - a > 1e-14 * reach) append_panel(rule, x1, w1, a, c, a_kink, true);
    a = c;
    a_kink = true;
  }
  if (reach - a > 1e-14 * reach) append_panel(rule, x1, w1, a, reach, a_kink, false);
  return rule;
}

// In 1D the kernel is flat on |y| < eps/4 and not analytic at its edge; panel
// breaks there restore fast Gauss-Legendre convergence. Tensor rules in d > 1
// cannot follow the sphere, so no breaks are added.
std::vector<double> plateau_breaks(const MollifierSpec& spec) {
  if (spec.dim != 1) return {};
  return {-kInner * spec.epsilon, kInner * spec.epsilon};
}

std::shared_ptr<const MollifierStencil> build_stencil(const MollifierSpec& spec, const std::vector<AxisRule>& axes) {
  const int d = spec.dim;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= axes[i].y.size();

  auto st = std::make_shared<MollifierStencil>();
  double mass = 0.0;
  double grad_mass = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Vec y(d);
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      const std::size_t n1 = axes[i].y.size();
      const std::size_t j = rem % n1;
      rem /= n1;
      y(i) = axes[i].y[j];
      w *= axes[i].w[j];
    }
    const double k = spec.kernel(y);
    const Vec g = spec.kernel_gradient(y);
    if (k == 0.0 && g.squaredNorm() == 0.0) continue;
    st->offsets.push_back(y);
    st->value_weight.push_back(w * k);
    st->gradient_weight.push_back(w * g);
    mass += w * k;
    grad_mass += -w * y.dot(g);
  }
  grad_mass /= d;
  for (auto& v : st->value_weight) v /= mass;
  for (auto& g : st->gradient_weight) g /= grad_mass;
  return st;
}

}  // namespace

DriftField counterexample_field(double gamma, double R, double eta) {
  if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorKind::InvalidSpec, "counterexample needs gamma in (0,1)");
  if (!(R > 0.0)) fail(ErrorKind::InvalidSpec, "counterexample needs R > 0");
  DriftField f;
  f.name = "counterexample(" + std::to_string(gamma) + "," + std::to_string(R) + ")";
  f.dim = 1;
  const double scale = 1.0 / (1.0 - gamma);
  f.eval = [=](const Vec& x) {
    const double a = std::abs(x(0));
    const double s = x(0) > 0.0 ? 1.0 : (x(0) < 0.0 ? -1.0 : 0.0);
    Vec out(1);
    out(0) = scale * s * std::pow(std::min(a, R), gamma);
    return out;
  };
  f.divergence = [=](const Vec& x) {
    const double a = std::abs(x(0));
    if (a >= R) return 0.0;
    return scale * gamma * std::pow(std::max(a, eta), gamma - 1.0);
  };
  f.holder_beta = gamma;
  f.bound_sup = scale * std::pow(R, gamma);
  // |x|^g + |y|^g <= 2^{1-g} (|x| + |y|)^g across the origin.
  f.bound_holder = scale * std::pow(2.0, 1.0 - gamma);
  f.kinks = {-R, 0.0, R};
  return f;
}

DriftField trig_field(int dim, double amplitude, double frequency, double phase) {
  DriftField f;
  f.name = "trig";
  f.dim = dim;
  f.eval = [=](const Vec& x) {
    Vec out(x.size());
    for (int i = 0; i < x.size(); ++i) out(i) = amplitude * std::sin(frequency * x(i) + phase);
    return out;
  };
  f.jacobian = [=](const Vec& x) {
    Mat J = Mat::Zero(x.size(), x.size());
    for (int i = 0; i < x.size(); ++i) J(i, i) = amplitude * frequency * std::cos(frequency * x(i) + phase);
    return J;
  };
  f.divergence = [=](const Vec& x) {
    double s = 0.0;
    for (int i = 0; i < x.size(); ++i) s += amplitude * frequency * std::cos(frequency * x(i) + phase);
    return s;
  };
  f.holder_beta = 1.0;
  f.bound_sup = std::abs(amplitude) * std::sqrt(static_cast<double>(dim));
  f.bound_holder = std::abs(amplitude * frequency);
  f.identically_zero = amplitude == 0.0;
  return f;
}

DriftField linear_field(const Mat& A) {
  if (A.rows() != A.cols()) fail(ErrorKind::InvalidSpec, "linear field needs a square matrix");
  DriftField f;
  f.name = "linear";
  f.dim = static_cast<int>(A.rows());
  f.eval = [A](const Vec& x) -> Vec { return A * x; };
  f.jacobian = [A](const Vec&) -> Mat { return A; };
  const double tr = A.trace();
  f.divergence = [tr](const Vec&) { return tr; };
  f.holder_beta = 1.0;
  f.bound_sup = A.isZero(0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  f.bound_holder = A.operatorNorm();
  f.identically_zero = A.isZero(0.0);
  return f;
}

DriftField constant_field(const Vec& c) {
  DriftField f;
  f.name = "constant";
  f.dim = static_cast<int>(c.size());
  f.eval = [c](const Vec&) { return c; };
  f.jacobian = [d = f.dim](const Vec&) -> Mat { return Mat::Zero(d, d); };
  f.divergence = [](const Vec&) { return 0.0; };
  f.holder_beta = 1.0;
  f.bound_sup = c.norm();
  f.bound_holder = 0.0;
  f.identically_zero = c.isZero(0.0);
  return f;
}

DriftField zero_field(int dim) {
  DriftField f = constant_field(Vec::Zero(dim));
  f.name = "zero";
  return f;
}

DriftField field_from_registry(const std::string& text, int dim) {
  const auto open = text.find('(');
  std::string name = text.substr(0, open);
  name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
  std::vector<double> args;
  if (open != std::string::npos) {
    const auto close = text.rfind(')');
    if (close == std::string::npos || close < open) fail(ErrorKind::InvalidSpec, "unbalanced parentheses in field '" + text + "'");
    args = parse_args(text.substr(open + 1, close - open - 1));
  }
  const auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi)
      fail(ErrorKind::InvalidSpec, "wrong number of arguments for field '" + name + "'");
  };
  if (name == "zero") {
    need(0, 0);
    return zero_field(dim);
  }
  if (name == "counterexample") {
    need(2, 2);
    if (dim != 1) fail(ErrorKind::InvalidSpec, "counterexample field is one-dimensional");
    return counterexample_field(args[0], args[1]);
  }
  if (name == "trig") {
    need(2, 3);
    return trig_field(dim, args[0], args[1], args.size() == 3 ? args[2] : 0.0);
  }
  if (name == "linear") {
    const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(args.size()))));
    if (n * n != static_cast<int>(args.size()) || n != dim)
      fail(ErrorKind::InvalidSpec, "linear field needs dim*dim matrix entries");
    Mat A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = args[i * n + j];
    return linear_field(A);
  }
  if (name == "constant") {
    if (static_cast<int>(args.size()) != dim) fail(ErrorKind::InvalidSpec, "constant field needs dim entries");
    Vec c(dim);
    for (int i = 0; i < dim; ++i) c(i) = args[i];
    return constant_field(c);
  }
  fail(ErrorKind::InvalidSpec, "unknown drift field '" + name + "'");
}

double mollifier_base(double r) {
  r = std::abs(r);
  if (r <= kInner) return 1.0;
  if (r >= kOuter) return 0.0;
  const double a = smooth_step(kOuter - r);
  const double b = smooth_step(r - kInner);
  return a / (a + b);
}

double mollifier_base_derivative(double r) {
  r = std::abs(r);
  if (r <= kInner || r >= kOuter) return 0.0;
  const double a = smooth_step(kOuter - r);
  const double b = smooth_step(r - kInner);
  const double da = -smooth_step_derivative(kOuter - r);
  const double db = smooth_step_derivative(r - kInner);
  return (da * b - a * db) / ((a + b) * (a + b));
}

MollifierSpec MollifierSpec::make(double epsilon, int dim, int nodes) {
  if (!(epsilon > 0.0)) fail(ErrorKind::InvalidSpec, "mollifier epsilon must be positive");
  if (dim < 1 || dim > kMaxDim) fail(ErrorKind::InvalidSpec, "mollifier dimension out of range");
  MollifierSpec s;
  s.epsilon = epsilon;
  s.dim = dim;
  s.nodes = nodes;
  const auto radial = [dim](double r) { return mollifier_base(r) * std::pow(r, dim - 1); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double mass = GK::integrate(radial, 0.0, kInner, 15, 1e-14) + GK::integrate(radial, kInner, kOuter, 15, 1e-14);
  s.normalization = 1.0 / (sphere_area(dim) * mass);
  return s;
}

double MollifierSpec::kernel(const Vec& y) const {
  const double r = y.norm() / epsilon;
  return normalization * std::pow(epsilon, -dim) * mollifier_base(r);
}

Vec MollifierSpec::kernel_gradient(const Vec& y) const {
  const double n = y.norm();
  if (n == 0.0) return Vec::Zero(y.size());
  const double dr = mollifier_base_derivative(n / epsilon);
  return (normalization * std::pow(epsilon, -dim - 1) * dr / n) * y;
}

DriftField mollify(const DriftField& field, const MollifierSpec& spec) {
  if (spec.dim != field.dim) fail(ErrorKind::InvalidSpec, "mollifier and field dimensions differ");
  auto x1 = std::make_shared<std::vector<double>>();
  auto w1 = std::make_shared<std::vector<double>>();
  gauss_legendre(spec.nodes, *x1, *w1);
  const double reach = kOuter * spec.epsilon;
  std::shared_ptr<const MollifierStencil> fixed;
  if (field.kinks.empty())
    fixed = build_stencil(spec, std::vector<AxisRule>(spec.dim, axis_rule(*x1, *w1, reach, plateau_breaks(spec))));
  const auto kinks = field.kinks;
  // Offsets y with x - y on a kink hyperplane must be quadrature breakpoints.
  const auto stencil_at = [=](const Vec& x) {
    if (fixed) return fixed;
    std::vector<AxisRule> axes;
    for (int i = 0; i < spec.dim; ++i) {
      std::vector<double> breaks = plateau_breaks(spec);
      for (double c : kinks)
        if (std::abs(x(i) - c) < reach) breaks.push_back(x(i) - c);
      axes.push_back(axis_rule(*x1, *w1, reach, breaks));
    }
    return build_stencil(spec, axes);
  };

  DriftField out;
  out.name = field.name + "*theta_" + std::to_string(spec.epsilon);
  out.dim = field.dim;
  const auto base = field.eval;
  out.eval = [stencil_at, base](const Vec& x) {
    const auto st = stencil_at(x);
    Vec acc = Vec::Zero(x.size());
    for (std::size_t q = 0; q < st->offsets.size(); ++q) acc += st->value_weight[q] * base(x - st->offsets[q]);
    return acc;
  };
  out.jacobian = [stencil_at, base](const Vec& x) {
    const auto st = stencil_at(x);
    Mat J = Mat::Zero(x.size(), x.size());
    for (std::size_t q = 0; q < st->offsets.size(); ++q) J += base(x - st->offsets[q]) * st->gradient_weight[q].transpose();
    return J;
  };
  out.divergence = [stencil_at, base](const Vec& x) {
    const auto st = stencil_at(x);
    double acc = 0.0;
    for (std::size_t q = 0; q < st->offsets.size(); ++q) acc += base(x - st->offsets[q]).dot(st->gradient_weight[q]);
    return acc;
  };
  out.holder_beta = field.holder_beta;
  out.bound_sup = field.bound_sup;
  out.bound_holder = field.bound_holder;
  out.identically_zero = field.identically_zero;
  return out;
}

double commutator(const DriftField& b, const GridField& u, const MollifierSpec& spec, const Vec& x) {
  if (!b.has_divergence()) fail(ErrorKind::Capability, "commutator needs a divergence handle");
  const Lattice& lat = u.lattice;
  const int d = lat.dim;
  if (d != b.dim || x.size() != d) fail(ErrorKind::InvalidSpec, "commutator dimension mismatch");
  const double reach = kOuter * spec.epsilon;
  std::array<int, kMaxDim> lo{};
  std::array<int, kMaxDim> hi{};
  for (int i = 0; i < d; ++i) {
    const double first = lat.origin(i);
    const double last = first + (lat.n[i] - 1) * lat.h;
    if (!(first - lat.h < x(i) - reach && last + lat.h > x(i) + reach))
      fail(ErrorKind::Coverage, "grid field does not cover the mollifier support around the point");
    lo[i] = std::max(0, static_cast<int>(std::ceil((x(i) - reach - first) / lat.h)));
    hi[i] = std::min(lat.n[i] - 1, static_cast<int>(std::floor((x(i) + reach - first) / lat.h)));
  }
  const Vec bx = b(x);
  const double vol = lat.cell_volume();
  double acc = 0.0;
  std::array<int, kMaxDim> idx = lo;
  for (;;) {
    Vec y = lat.origin;
    for (int i = 0; i < d; ++i) y(i) += idx[i] * lat.h;
    const Vec z = x - y;
    const double k = spec.kernel(z);
    const Vec g = spec.kernel_gradient(z);
    if (k != 0.0 || g.squaredNorm() != 0.0) {
      const double uy = u.values[lat.flat_index(idx)];
      // Cell flux average of div b: stays bounded next to a singular divergence.
      double flux = 0.0;
      for (int i = 0; i < d; ++i) {
        Vec e = Vec::Zero(d);
        e(i) = 0.5 * lat.h;
        flux += b(y + e)(i) - b(y - e)(i);
      }
      acc += uy * ((b(y) - bx).dot(g) - flux / lat.h * k);
    }
    int axis = d - 1;
    while (axis >= 0 && ++idx[axis] > hi[axis]) {
      idx[axis] = lo[axis];
      --axis;
    }
    if (axis < 0) break;
  }
  return acc * vol;
}

double commutator_pairing(const DriftField& b, const GridField& u, const FlowSamples& flow,
                          const std::function<double(const Vec&)>& rho, const MollifierSpec& spec) {
  if (flow.points.size() != flow.images.size() || flow.points.size() != flow.weights.size())
    fail(ErrorKind::InvalidSpec, "flow samples are inconsistent");
  double acc = 0.0;
  for (std::size_t i = 0; i < flow.points.size(); ++i) {
    const double r = rho(flow.points[i]);
    if (r == 0.0) continue;
    acc += flow.weights[i] * r * commutator(b, u, spec, flow.images[i]);
  }
  return acc;
}

DriftField tabulate(const DriftField& field, double lo, double hi, std::size_t n) {
  if (field.dim != 1 || !field.has_jacobian()) fail(ErrorKind::Capability, "tabulation needs a 1D field with a Jacobian");
  if (!(hi > lo) || n < 2) fail(ErrorKind::InvalidSpec, "tabulation needs lo < hi and n >= 2");
  const double h = (hi - lo) / static_cast<double>(n - 1);
  auto v = std::make_shared<std::vector<double>>(n);
  auto d = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = Vec::Constant(1, lo + h * static_cast<double>(i));
    (*v)[i] = field(x)(0);
    (*d)[i] = field.jacobian(x)(0, 0);
  }
  // Returns (value, slope) of the Hermite cubic on the cell containing x.
  const auto interp = [=](double x) -> std::pair<double, double> {
    const double s = (x - lo) / h;
    const std::size_t i = std::min(static_cast<std::size_t>(s), n - 2);
    const double t = s - static_cast<double>(i);
    const double y0 = (*v)[i], y1 = (*v)[i + 1], m0 = (*d)[i] * h, m1 = (*d)[i + 1] * h;
    const double t2 = t * t, t3 = t2 * t;
    const double val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
    const double der = (6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * m1;
    return {val, der / h};
  };
  const auto inside = [=](const Vec& x) { return x(0) >= lo && x(0) <= hi; };
  DriftField out = field;
  out.name = "tabulated " + field.name;
  out.eval = [=](const Vec& x) -> Vec { return inside(x) ? Vec::Constant(1, interp(x(0)).first) : field(x); };
  out.jacobian = [=](const Vec& x) -> Mat {
    return inside(x) ? Mat::Constant(1, 1, interp(x(0)).second) : field.jacobian(x);
  };
  out.divergence = [=](const Vec& x) { return inside(x) ? interp(x(0)).second : field.jacobian(x)(0, 0); };
  out.kinks.clear();
  return out;
}

double lattice_sup(const DriftField& b, const Lattice& lattice) {
  double m = 0.0;
  for (std::size_t i = 0; i < lattice.size(); ++i) m = std::max(m, b(lattice.point(i)).norm());
  return m;
}

double lattice_holder(const DriftField& b, const Lattice& lattice, double beta) {
  const std::size_t n = lattice.size();
  std::vector<Vec> pts(n);
  std::vector<Vec> vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = lattice.point(i);
    vals[i] = b(pts[i]);
  }
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      m = std::max(m, (vals[i] - vals[j]).norm() / std::pow((pts[i] - pts[j]).norm(), beta));
  return m;
}

}  // namespace levyflow
