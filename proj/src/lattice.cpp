#include "levyflow/lattice.hpp"

#include <cmath>

namespace levyflow {

Lattice Lattice::midpoint(int dim, double lo, double hi, double h) {
  if (!(hi > lo) || !(h > 0.0)) fail(ErrorKind::InvalidSpec, "lattice needs lo < hi and h > 0");
  Lattice l;
  l.dim = dim;
  const int count = std::max(1, static_cast<int>(std::lround((hi - lo) / h)));
  l.h = (hi - lo) / count;
  l.origin = Vec::Constant(dim, lo + 0.5 * l.h);
  for (int i = 0; i < dim; ++i) l.n[i] = count;
  return l;
}

Lattice Lattice::nodes(int dim, double lo, double hi, int count) {
  if (!(hi > lo) || count < 2) fail(ErrorKind::InvalidSpec, "node lattice needs lo < hi and count >= 2");
  Lattice l;
  l.dim = dim;
  l.h = (hi - lo) / (count - 1);
  l.origin = Vec::Constant(dim, lo);
  for (int i = 0; i < dim; ++i) l.n[i] = count;
  return l;
}

std::size_t Lattice::size() const {
  std::size_t s = 1;
  for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(n[i]);
  return s;
}

std::array<int, kMaxDim> Lattice::multi_index(std::size_t flat) const {
  std::array<int, kMaxDim> idx{};
  for (int i = dim - 1; i >= 0; --i) {
    idx[i] = static_cast<int>(flat % n[i]);
    flat /= n[i];
  }
  return idx;
}

std::size_t Lattice::flat_index(const std::array<int, kMaxDim>& idx) const {
  std::size_t flat = 0;
  for (int i = 0; i < dim; ++i) flat = flat * n[i] + idx[i];
  return flat;
}

Vec Lattice::point(std::size_t flat) const {
  const auto idx = multi_index(flat);
  Vec p = origin;
  for (int i = 0; i < dim; ++i) p(i) += idx[i] * h;
  return p;
}

double Lattice::cell_volume() const { return std::pow(h, dim); }

Vec Lattice::upper() const {
  Vec p = origin;
  for (int i = 0; i < dim; ++i) p(i) += (n[i] - 1) * h;
  return p;
}

}  // namespace levyflow
