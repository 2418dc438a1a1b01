#include "blockpde/quadrature.hpp"

#include <cmath>

#include "blockpde/errors.hpp"

namespace blockpde {

double QuadratureGrid::weight_sum() const {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

void legendre_all(int n, double x, double* L, double* dL) {
  L[0] = 1.0;
  if (dL) dL[0] = 0.0;
  if (n == 0) return;
  L[1] = x;
  if (dL) dL[1] = 1.0;
  for (int k = 1; k < n; ++k) {
    L[k + 1] = ((2.0 * k + 1.0) * x * L[k] - k * L[k - 1]) / (k + 1.0);
    // L'_{k+1} = L'_{k-1} + (2k+1) L_k ; exact at the endpoints as well.
    if (dL) dL[k + 1] = dL[k - 1] + (2.0 * k + 1.0) * L[k];
  }
}

double legendre(int n, double x) {
  std::vector<double> L(n + 1);
  legendre_all(n, x, L.data(), nullptr);
  return L[n];
}

QuadratureGrid gauss_legendre_grid(int Q) {
  require(Q >= 1, "gauss_legendre_grid: Q must be >= 1");
  QuadratureGrid g;
  g.dim = 1;
  g.x.assign(Q, 0.0);
  g.w.assign(Q, 0.0);

  if (Q == 1) {
    g.x[0] = 0.0;
    g.w[0] = 2.0;
    return g;
  }

  std::vector<double> L(Q + 1), dL(Q + 1);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (Q + 1) / 2; ++i) {
    // initial guess for the i-th root (descending), then Newton
    double xr = std::cos(pi * (i + 0.75) / (Q + 0.5));
    for (int it = 0; it < 100; ++it) {
      legendre_all(Q, xr, L.data(), dL.data());
      const double dx = -L[Q] / dL[Q];
      xr += dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre_all(Q, xr, L.data(), dL.data());
    const double wq = 2.0 / ((1.0 - xr * xr) * dL[Q] * dL[Q]);
    // store ascending, mirrored pair
    g.x[i] = -xr;
    g.x[Q - 1 - i] = xr;
    g.w[i] = wq;
    g.w[Q - 1 - i] = wq;
  }
  if (Q % 2 == 1) {
    g.x[Q / 2] = 0.0;
    legendre_all(Q, 0.0, L.data(), dL.data());
    g.w[Q / 2] = 2.0 / (dL[Q] * dL[Q]);
  }
  return g;
}

}  // namespace blockpde
