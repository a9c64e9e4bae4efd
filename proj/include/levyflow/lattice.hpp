#pragma once

#include "levyflow/core.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace levyflow {

/// Uniform tensor lattice: point(i) = origin + multi_index(i) * h.
struct Lattice {
  int dim = 1;
  Vec origin;
  double h = 0.0;
  std::array<int, kMaxDim> n{};

  /// Cell-centred lattice covering [lo, hi]^dim (midpoint rule nodes).
  static Lattice midpoint(int dim, double lo, double hi, double h);
  /// `count` equispaced nodes per axis including both ends of [lo, hi].
  static Lattice nodes(int dim, double lo, double hi, int count);

  std::size_t size() const;
  std::array<int, kMaxDim> multi_index(std::size_t flat) const;
  std::size_t flat_index(const std::array<int, kMaxDim>& idx) const;
  Vec point(std::size_t flat) const;
  double cell_volume() const;
  Vec lower() const { return origin; }
  Vec upper() const;
};

/// Scalar samples on a lattice.
struct GridField {
  Lattice lattice;
  std::vector<double> values;

  double operator[](std::size_t i) const { return values[i]; }
};

template <class F>
GridField sample_on(const Lattice& lattice, F&& f) {
  GridField g{lattice, std::vector<double>(lattice.size())};
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = f(lattice.point(i));
  return g;
}

}  // namespace levyflow
