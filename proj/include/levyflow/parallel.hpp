#pragma once

// Index-parallel kernels. Every kernel exists in a serial reference form and an
// OpenMP form; results are written to per-index slots and merged in index
// order, so both forms are bit-identical.

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace levyflow {

enum class Exec { Serial, Parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class F>
void for_each_index_serial(std::size_t n, F&& f) {
  for (std::size_t i = 0; i < n; ++i) f(i);
}

template <class F>
void for_each_index_omp(std::size_t n, F&& f) {
  // Exceptions cannot cross the parallel region; keep the one with the lowest index.
  std::exception_ptr first;
  std::size_t first_index = n;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(levyflow_exception)
      {
        if (static_cast<std::size_t>(i) < first_index) {
          first_index = static_cast<std::size_t>(i);
          first = std::current_exception();
        }
      }
    }
  }
  if (first) std::rethrow_exception(first);
}

template <class F>
void for_each_index(Exec exec, std::size_t n, F&& f) {
  if (exec == Exec::Serial)
    for_each_index_serial(n, f);
  else
    for_each_index_omp(n, f);
}

/// out[i] = f(i) for i < n.
template <class T, class F>
std::vector<T> map_indices(Exec exec, std::size_t n, F&& f) {
  std::vector<T> out(n);
  for_each_index(exec, n, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

}  // namespace levyflow
