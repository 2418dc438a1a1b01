#pragma once

#include <functional>
#include <memory>
#include <string>

#include "blockpde/quadrature.hpp"
#include "blockpde/types.hpp"

namespace blockpde {

enum class Family { shen_legendre_1d, fourier_2d, cosine_2d };

std::string family_name(Family f);
Family family_from_name(const std::string& s);

// Explicit boundary-data carrier u_lift(x, t). For 1D baseplates the y
// coordinate of a node is ignored.
struct LiftingField {
  std::function<double(double, double, double)> value;  // (x, y, t)
  std::function<double(double, double, double)> time_derivative;
  bool is_zero = true;

  static LiftingField zero() {
    LiftingField l;
    l.value = [](double, double, double) { return 0.0; };
    l.time_derivative = [](double, double, double) { return 0.0; };
    l.is_zero = true;
    return l;
  }
};

// Shared state all blocks act on: the retained-coefficient vector.
struct CoefficientState {
  Vec a;
  std::string baseplate_id;
  double time = 0.0;
};

// Per-slot metadata of the packed coefficient vector.
//  - Shen: k is the basis index (1-based), j/l unused.
//  - Fourier: (j, l) wavenumbers; imag marks the imaginary slot of a
//    conjugate-pair representative. DC is slot 0, real only.
//  - cosine: (j, l) >= 0, imag unused.
struct ModeInfo {
  int k = 0;
  int j = 0;
  int l = 0;
  bool imag = false;
};

class Baseplate {
public:
  Family family;
  int K = 0;
  QuadratureGrid grid;
  std::vector<ModeInfo> mode_table;
  int dealias_cutoff = 0;  // K_cut for Fourier/cosine, K for Shen
  int N = 0;               // grid points per direction (2D families)

  // --- Shen data ---
  Mat phi;   // Q x K basis values
  Mat dphi;  // Q x K basis derivative values
  Mat M;     // mass <phi_i, phi_j>
  Mat S;     // derivative form <phi_i, d_x phi_j> (skew)
  Mat A;     // stiffness <d_x phi_i, d_x phi_j>

  // --- Fourier data ---
  CMat Wc;  // N x (2K_cut+1), Wc[q][ji] = exp(i * j * x_q)

  // --- cosine data ---
  Mat Cx;        // N x (K_cut+1), cos(pi j x_q)
  Vec w1d;       // 1D trapezoid weights
  Vec cos_norm;  // 1D discrete norms (1 for j=0, 1/2 otherwise)

  ~Baseplate();

  // u_lift(x_q, t) + (Phi a)_q on all nodes
  Vec reconstruct(const Vec& a, const LiftingField& lift, double t) const;
  Vec reconstruct(const Vec& a) const;
  // 1D only: evaluate the reconstruction at an arbitrary point
  double reconstruct_at(const Vec& a, const LiftingField& lift, double t,
                        double x) const;

  // discrete L2 projection of nodal values onto the retained trial space
  Vec project(const Vec& field) const;

  // identity on retained coefficients (truncation already realizes the
  // 2/3 rule; see build preconditions)
  Vec dealias(const Vec& a) const;

  // solve M y = v (Shen); identity otherwise
  Vec mass_solve(const Vec& v) const;

  // nodal derivative values of the trial-space field with coefficients a
  // (Shen only)
  Vec nodal_derivative(const Vec& a) const;

  // Fourier packing
  CMat unpack(const Vec& a) const;
  Vec pack(const CMat& modes) const;
  // nodal values of d/dx or d/dy of the packed field (Fourier only)
  Vec fourier_nodal_deriv(const Vec& a, int axis) const;

  // -(j^2+l^2) per packed slot (Fourier), -pi^2 (j^2+l^2) (cosine)
  const Vec& laplacian_multiplier() const { return lap_mult_; }

  std::string manifest_json() const;
  const std::string& hash() const { return hash_; }

  // internal: set up derived members after family data is filled
  void finalize();

private:
  Vec lap_mult_;
  std::string hash_;
  struct MassFactor;                     // Eigen LLT, hidden
  std::shared_ptr<MassFactor> mass_factor_;

  friend Baseplate build_shen_baseplate(int Q, int K);
};

// Shen-Legendre Dirichlet baseplate on (-1,1): phi_k = L_{k-1} - L_{k+1}.
// Requires Q >= K+2 so quadrature is exact for mass-matrix integrands.
Baseplate build_shen_baseplate(int Q, int K);

// Periodic Fourier baseplate on [0,2pi)^2, N x N uniform grid, retained
// modes |j|,|l| <= K_cut packed into K = (2K_cut+1)^2 reals. Requires
// N >= 3 K_cut (de-aliasing headroom) and N even.
Baseplate build_fourier2d_baseplate(int N, int K_cut);

// Neumann cosine baseplate on [0,1]^2, endpoint N x N grid (N odd),
// basis cos(pi j x) cos(pi l y), 0 <= j,l <= K_cut, K = (K_cut+1)^2.
// Requires K_cut <= (N-1)/3.
Baseplate build_cosine2d_baseplate(int N, int K_cut);

}  // namespace blockpde
