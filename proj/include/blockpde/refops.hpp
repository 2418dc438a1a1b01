#pragma once

#include <functional>
#include <string>
#include <utility>

#include "blockpde/baseplate.hpp"

namespace blockpde {

enum class KindHint { dissipative, conservative, residual, auxiliary };

// Exact coefficient-space vector field of one mechanism, realized by the
// reconstruct-evaluate-project pipeline. These are the training targets and
// the reference solver's blocks.
struct ReferenceOp {
  std::string name;
  KindHint kind_hint = KindHint::residual;
  bool lift_aware = false;
  std::function<Vec(const Baseplate&, const Vec&, const LiftingField&, double)>
      eval;

  Vec operator()(const Baseplate& bp, const Vec& a) const {
    return eval(bp, a, LiftingField::zero(), 0.0);
  }
};

// Galerkin projection of d^2/dx^2 on the Shen trial space, assembled weakly:
// M y = -A a with A the stiffness matrix (boundary terms vanish).
Vec ref_shen_uxx(const Baseplate& bp, const Vec& a);

// -P(u u_x) with the product formed pointwise on quadrature nodes.
Vec ref_shen_uux(const Baseplate& bp, const Vec& a);

// Modewise multiplication by -(j^2+l^2) (Fourier) or -pi^2 (j^2+l^2)
// (cosine).
Vec ref_fourier_laplacian(const Baseplate& bp, const Vec& a);

// psi modes = omega modes / (j^2+l^2); DC gauge psi_00 = 0.
Vec ref_poisson_inverse(const Baseplate& bp, const Vec& omega);

// project(f applied nodewise to reconstruct(a) + lift).
Vec ref_pointwise(const Baseplate& bp, const Vec& a,
                  const std::function<double(double)>& f,
                  const LiftingField& lift, double t);

// Space-time forcing g(x, t) projected onto the trial space.
Vec ref_forcing(const Baseplate& bp,
                const std::function<double(double, double, double)>& g,
                double t);

// Pseudospectral vector transport on the Fourier baseplate:
// (-(u u_x + v u_y), -(u v_x + v v_y)), de-aliased by truncation.
std::pair<Vec, Vec> ref_transport_2d(const Baseplate& bp, const Vec& a_u,
                                     const Vec& a_v);

// Single-field vorticity transport -(u . grad omega) with velocity
// (psi_y, -psi_x) from the streamfunction psi = (-Lap)^{-1} omega.
Vec ref_vorticity_transport(const Baseplate& bp, const Vec& a_omega);

// Named ops usable as dataset/training targets. Names are stable; dataset
// files re-verify their targets against them on load.
ReferenceOp ref_registry(const std::string& name);

}  // namespace blockpde
