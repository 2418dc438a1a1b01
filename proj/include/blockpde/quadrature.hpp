#pragma once

#include "blockpde/types.hpp"

namespace blockpde {

// Quadrature/grid nodes shared by every block acting on one trial space.
// For dim == 2 a node q has coordinates (x[q], y[q]).
struct QuadratureGrid {
  int dim = 1;
  Vec x;
  Vec y;
  Vec w;

  int Q() const { return static_cast<int>(w.size()); }
  double weight_sum() const;
};

// Q-point Gauss-Legendre rule on (-1, 1); exact for polynomials of degree
// <= 2Q-1. Nodes are the Legendre roots found by Newton iteration.
QuadratureGrid gauss_legendre_grid(int Q);

// Legendre evaluation helpers (recurrence based).
// Fills L[0..n] with L_k(x) and dL[0..n] with L_k'(x).
void legendre_all(int n, double x, double* L, double* dL);
double legendre(int n, double x);

}  // namespace blockpde
