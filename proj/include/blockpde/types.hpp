#pragma once

#include <cmath>
#include <complex>
#include <vector>

namespace blockpde {

using Vec = std::vector<double>;
using CVec = std::vector<std::complex<double>>;

// Row-major dense matrix, plain storage shared by the serial and OpenMP
// kernel paths.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return d[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return d[static_cast<size_t>(i) * cols + j]; }
  const double* row(int i) const { return d.data() + static_cast<size_t>(i) * cols; }
  double* row(int i) { return d.data() + static_cast<size_t>(i) * cols; }
};

struct CMat {
  int rows = 0;
  int cols = 0;
  CVec d;

  CMat() = default;
  CMat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c) {}

  std::complex<double>& operator()(int i, int j) {
    return d[static_cast<size_t>(i) * cols + j];
  }
  const std::complex<double>& operator()(int i, int j) const {
    return d[static_cast<size_t>(i) * cols + j];
  }
};

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace blockpde
