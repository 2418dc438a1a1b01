#include "blockpde/refops.hpp"

#include <cmath>

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"

namespace blockpde {

Vec ref_shen_uxx(const Baseplate& bp, const Vec& a) {
  require(bp.family == Family::shen_legendre_1d, "ref_shen_uxx: Shen baseplate required");
  require(static_cast<int>(a.size()) == bp.K, "ref_shen_uxx: size mismatch");
  Vec rhs = kern::matvec(bp.A, a);
  for (auto& v : rhs) v = -v;
  return bp.mass_solve(rhs);
}

Vec ref_shen_uux(const Baseplate& bp, const Vec& a) {
  require(bp.family == Family::shen_legendre_1d, "ref_shen_uux: Shen baseplate required");
  const Vec u = bp.reconstruct(a);
  const Vec ux = bp.nodal_derivative(a);
  Vec p(u.size());
  for (size_t q = 0; q < u.size(); ++q) p[q] = -u[q] * ux[q];
  return bp.project(p);
}

Vec ref_fourier_laplacian(const Baseplate& bp, const Vec& a) {
  require(bp.family == Family::fourier_2d || bp.family == Family::cosine_2d,
          "ref_fourier_laplacian: Fourier or cosine baseplate required");
  require(static_cast<int>(a.size()) == bp.K, "ref_fourier_laplacian: size mismatch");
  const Vec& mult = bp.laplacian_multiplier();
  Vec out(bp.K);
  for (int k = 0; k < bp.K; ++k) out[k] = mult[k] * a[k];
  return out;
}

Vec ref_poisson_inverse(const Baseplate& bp, const Vec& omega) {
  require(bp.family == Family::fourier_2d, "ref_poisson_inverse: Fourier baseplate required");
  const Vec& mult = bp.laplacian_multiplier();
  Vec psi(bp.K, 0.0);
  for (int k = 0; k < bp.K; ++k)
    psi[k] = mult[k] == 0.0 ? 0.0 : omega[k] / (-mult[k]);
  return psi;
}

Vec ref_pointwise(const Baseplate& bp, const Vec& a,
                  const std::function<double(double)>& f,
                  const LiftingField& lift, double t) {
  Vec u = bp.reconstruct(a, lift, t);
  for (size_t q = 0; q < u.size(); ++q) {
    u[q] = f(u[q]);
    if (!std::isfinite(u[q]))
      throw NumericError("ref_pointwise: non-finite value at node " + std::to_string(q));
  }
  return bp.project(u);
}

Vec ref_forcing(const Baseplate& bp,
                const std::function<double(double, double, double)>& g,
                double t) {
  const int Q = bp.grid.Q();
  Vec f(Q);
  for (int q = 0; q < Q; ++q)
    f[q] = g(bp.grid.x[q], bp.grid.dim == 2 ? bp.grid.y[q] : 0.0, t);
  return bp.project(f);
}

std::pair<Vec, Vec> ref_transport_2d(const Baseplate& bp, const Vec& a_u,
                                     const Vec& a_v) {
  require(bp.family == Family::fourier_2d, "ref_transport_2d: Fourier baseplate required");
  const Vec u = bp.reconstruct(a_u);
  const Vec v = bp.reconstruct(a_v);
  const Vec ux = bp.fourier_nodal_deriv(a_u, 0);
  const Vec uy = bp.fourier_nodal_deriv(a_u, 1);
  const Vec vx = bp.fourier_nodal_deriv(a_v, 0);
  const Vec vy = bp.fourier_nodal_deriv(a_v, 1);
  Vec p1(u.size()), p2(u.size());
  for (size_t q = 0; q < u.size(); ++q) {
    p1[q] = -(u[q] * ux[q] + v[q] * uy[q]);
    p2[q] = -(u[q] * vx[q] + v[q] * vy[q]);
  }
  return {bp.dealias(bp.project(p1)), bp.dealias(bp.project(p2))};
}

Vec ref_vorticity_transport(const Baseplate& bp, const Vec& a_omega) {
  require(bp.family == Family::fourier_2d, "ref_vorticity_transport: Fourier baseplate required");
  const Vec psi = ref_poisson_inverse(bp, a_omega);
  const Vec u = bp.fourier_nodal_deriv(psi, 1);   // psi_y
  const Vec vx = bp.fourier_nodal_deriv(psi, 0);  // psi_x
  const Vec wx = bp.fourier_nodal_deriv(a_omega, 0);
  const Vec wy = bp.fourier_nodal_deriv(a_omega, 1);
  Vec p(u.size());
  for (size_t q = 0; q < u.size(); ++q)
    p[q] = -(u[q] * wx[q] - vx[q] * wy[q]);
  return bp.dealias(bp.project(p));
}

ReferenceOp ref_registry(const std::string& name) {
  ReferenceOp op;
  op.name = name;
  if (name == "shen_uxx") {
    op.kind_hint = KindHint::dissipative;
    op.eval = [](const Baseplate& bp, const Vec& a, const LiftingField&, double) {
      return ref_shen_uxx(bp, a);
    };
  } else if (name == "shen_uux") {
    op.kind_hint = KindHint::conservative;
    op.eval = [](const Baseplate& bp, const Vec& a, const LiftingField&, double) {
      return ref_shen_uux(bp, a);
    };
  } else if (name == "fourier_laplacian") {
    op.kind_hint = KindHint::dissipative;
    op.eval = [](const Baseplate& bp, const Vec& a, const LiftingField&, double) {
      return ref_fourier_laplacian(bp, a);
    };
  } else if (name == "fourier_poisson_inverse") {
    op.kind_hint = KindHint::auxiliary;
    op.eval = [](const Baseplate& bp, const Vec& a, const LiftingField&, double) {
      return ref_poisson_inverse(bp, a);
    };
  } else if (name == "vorticity_transport") {
    op.kind_hint = KindHint::residual;
    op.eval = [](const Baseplate& bp, const Vec& a, const LiftingField&, double) {
      return ref_vorticity_transport(bp, a);
    };
  } else {
    throw ParseError("unknown reference op: " + name);
  }
  return op;
}

}  // namespace blockpde
