#include "blockpde/generators.hpp"

#include <cmath>

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/rng.hpp"

namespace blockpde {

namespace {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void ensure_ws(const ScalarGenerator& g, GenWorkspace& ws) {
  if (ws.ready) return;
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    ws.mlp_ws.match(m->net);
  } else if (const auto* d = std::get_if<DensityGenerator>(&g.payload)) {
    ws.mlp_ws.match(d->rho);
    ws.mlp_grads.match(d->rho);
  }
  ws.ready = true;
}

// nodal reconstruction used by the density generators
void density_nodal(bool include_lift, const Baseplate& bp, const Vec& a,
                   const LiftingField& lift, double t, Vec& u) {
  if (include_lift && !lift.is_zero)
    u = bp.reconstruct(a, lift, t);
  else
    u = bp.reconstruct(a);
}

// dual vector Phi^T (w . rhop) from nodal density slopes
void density_dual(const Baseplate& bp, const Vec& rhop, Vec& wbuf, Vec& out) {
  if (bp.family == Family::shen_legendre_1d) {
    wbuf.resize(rhop.size());
    for (size_t i = 0; i < rhop.size(); ++i) wbuf[i] = bp.grid.w[i] * rhop[i];
    out = kern::matvec_t(bp.phi, wbuf);
    return;
  }
  // Phi^T W f = (diagonal packed metric) . project(f)
  const Vec proj = bp.project(rhop);
  out.resize(bp.K);
  if (bp.family == Family::fourier_2d) {
    const double measure = 4.0 * 3.14159265358979323846 * 3.14159265358979323846;
    for (int k = 0; k < bp.K; ++k) {
      const ModeInfo& mi = bp.mode_table[k];
      const bool dc = (mi.j == 0 && mi.l == 0);
      out[k] = proj[k] * (dc ? measure : 2.0 * measure);
    }
  } else {
    for (int k = 0; k < bp.K; ++k) {
      const ModeInfo& mi = bp.mode_table[k];
      out[k] = proj[k] * (bp.cos_norm[mi.j] * bp.cos_norm[mi.l]);
    }
  }
}

}  // namespace

std::string ScalarGenerator::variant_name() const {
  if (std::holds_alternative<MlpGenerator>(payload)) return "mlp";
  if (std::holds_alternative<QuadLowRank>(payload)) return "quadratic_lowrank";
  if (std::holds_alternative<QuadDiagSoftplus>(payload))
    return "quadratic_diagonal_softplus";
  if (std::holds_alternative<AnalyticDensity>(payload)) return "analytic_density";
  return "density";
}

size_t ScalarGenerator::param_size() const {
  if (const auto* m = std::get_if<MlpGenerator>(&payload)) return m->net.param_count();
  if (const auto* q = std::get_if<QuadLowRank>(&payload))
    return q->kdiag.size() + q->U.d.size();
  if (const auto* q = std::get_if<QuadDiagSoftplus>(&payload)) return q->c_raw.size();
  if (std::holds_alternative<AnalyticDensity>(payload)) return 0;
  return std::get<DensityGenerator>(payload).rho.param_count();
}

Vec ScalarGenerator::flatten_params() const {
  if (const auto* m = std::get_if<MlpGenerator>(&payload)) return mlp_flatten(m->net);
  if (const auto* q = std::get_if<QuadLowRank>(&payload)) {
    Vec f = q->kdiag;
    f.insert(f.end(), q->U.d.begin(), q->U.d.end());
    return f;
  }
  if (const auto* q = std::get_if<QuadDiagSoftplus>(&payload)) return q->c_raw;
  if (std::holds_alternative<AnalyticDensity>(payload)) return {};
  return mlp_flatten(std::get<DensityGenerator>(payload).rho);
}

void ScalarGenerator::unflatten_params(const Vec& flat) {
  if (auto* m = std::get_if<MlpGenerator>(&payload)) {
    mlp_unflatten(m->net, flat);
  } else if (auto* q = std::get_if<QuadLowRank>(&payload)) {
    require(flat.size() == q->kdiag.size() + q->U.d.size(), "unflatten: size mismatch");
    std::copy(flat.begin(), flat.begin() + q->kdiag.size(), q->kdiag.begin());
    std::copy(flat.begin() + q->kdiag.size(), flat.end(), q->U.d.begin());
  } else if (auto* q = std::get_if<QuadDiagSoftplus>(&payload)) {
    require(flat.size() == q->c_raw.size(), "unflatten: size mismatch");
    q->c_raw = flat;
  } else if (std::holds_alternative<AnalyticDensity>(payload)) {
    require(flat.empty(), "unflatten: analytic density has no parameters");
  } else {
    mlp_unflatten(std::get<DensityGenerator>(payload).rho, flat);
  }
}

double gen_value(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
                 const LiftingField& lift, double t) {
  require(static_cast<int>(a.size()) == bp.K, "gen_value: state size mismatch");
  double val = 0.0;
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    val = mlp_forward(m->net, a)[0];
  } else if (const auto* q = std::get_if<QuadLowRank>(&g.payload)) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) s += q->kdiag[k] * a[k] * a[k];
    const Vec uta = kern::matvec_t(q->U, a);
    val = 0.5 * (s + kern::dot(uta, uta));
  } else if (const auto* q = std::get_if<QuadDiagSoftplus>(&g.payload)) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) s += softplus(q->c_raw[k]) * a[k] * a[k];
    val = 0.5 * q->sign * s;
  } else if (const auto* ad = std::get_if<AnalyticDensity>(&g.payload)) {
    Vec u;
    density_nodal(ad->include_lift, bp, a, lift, t, u);
    double s = 0.0;
    for (int q2 = 0; q2 < bp.grid.Q(); ++q2) s += bp.grid.w[q2] * ad->rho(u[q2]);
    val = s;
  } else {
    const auto& d = std::get<DensityGenerator>(g.payload);
    Vec u;
    density_nodal(d.include_lift, bp, a, lift, t, u);
    MlpWorkspace ws;
    ws.match(d.rho);
    double s = 0.0;
    Vec in(1);
    for (int q2 = 0; q2 < bp.grid.Q(); ++q2) {
      in[0] = u[q2];
      s += bp.grid.w[q2] * mlp_forward_scalar(d.rho, ws, in);
    }
    val = s;
  }
  if (!std::isfinite(val)) throw NumericError("gen_value: non-finite generator value");
  return val;
}

void gen_grad(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
              const LiftingField& lift, double t, GenWorkspace& ws, Vec& out) {
  require(static_cast<int>(a.size()) == bp.K, "gen_grad: state size mismatch");
  ensure_ws(g, ws);
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    mlp_input_gradient(m->net, ws.mlp_ws, a, out);
  } else if (const auto* q = std::get_if<QuadLowRank>(&g.payload)) {
    const Vec uta = kern::matvec_t(q->U, a);
    out = kern::matvec(q->U, uta);
    for (size_t k = 0; k < a.size(); ++k) out[k] += q->kdiag[k] * a[k];
  } else if (const auto* q = std::get_if<QuadDiagSoftplus>(&g.payload)) {
    out.resize(a.size());
    for (size_t k = 0; k < a.size(); ++k)
      out[k] = q->sign * softplus(q->c_raw[k]) * a[k];
  } else if (const auto* ad = std::get_if<AnalyticDensity>(&g.payload)) {
    Vec& u = ws.scratch_q;
    density_nodal(ad->include_lift, bp, a, lift, t, u);
    Vec& rhop = ws.scratch_q2;
    rhop.resize(u.size());
    for (size_t q2 = 0; q2 < u.size(); ++q2) rhop[q2] = ad->drho(u[q2]);
    density_dual(bp, rhop, ws.scratch_k, out);
  } else {
    // true partial derivative: grad_k = Phi^T (w . rho'(u)) (dual vector;
    // structure operators carry the metric)
    const auto& d = std::get<DensityGenerator>(g.payload);
    Vec& u = ws.scratch_q;
    density_nodal(d.include_lift, bp, a, lift, t, u);
    Vec& rhop = ws.scratch_q2;
    rhop.resize(u.size());
    Vec in(1), gr(1);
    for (int q2 = 0; q2 < bp.grid.Q(); ++q2) {
      in[0] = u[q2];
      mlp_input_gradient(d.rho, ws.mlp_ws, in, gr);
      rhop[q2] = gr[0];
    }
    density_dual(bp, rhop, ws.scratch_k, out);
  }
  if (!all_finite(out)) throw NumericError("gen_grad: non-finite gradient");
}

Vec gen_grad(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
             const LiftingField& lift, double t) {
  GenWorkspace ws;
  Vec out;
  gen_grad(g, bp, a, lift, t, ws, out);
  return out;
}

void vjp_begin(const ScalarGenerator& g, GenWorkspace& ws) {
  ensure_ws(g, ws);
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    ws.mlp_grads.match(m->net);
    ws.mlp_grads.zero();
  } else if (const auto* d = std::get_if<DensityGenerator>(&g.payload)) {
    ws.mlp_grads.match(d->rho);
    ws.mlp_grads.zero();
  } else {
    ws.small_grad.assign(g.param_size(), 0.0);
  }
}

void vjp_accumulate(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
                    const LiftingField& lift, double t, const Vec& v,
                    double scale, GenWorkspace& ws) {
  require(v.size() == a.size(), "vjp_accumulate: direction size mismatch");
  if (const auto* m = std::get_if<MlpGenerator>(&g.payload)) {
    mlp_dir_grad_param(m->net, ws.mlp_ws, a, v, scale, ws.mlp_grads);
  } else if (const auto* q = std::get_if<QuadLowRank>(&g.payload)) {
    // d/dk_m [ v^T (k.a + U U^T a) ] = v_m a_m
    // d/dU   [ v^T U U^T a ] = v (U^T a)^T + a (U^T v)^T
    Vec& out = ws.small_grad;
    const size_t K = q->kdiag.size();
    for (size_t k = 0; k < K; ++k) out[k] += scale * v[k] * a[k];
    const Vec uta = kern::matvec_t(q->U, a);
    const Vec utv = kern::matvec_t(q->U, v);
    const int r = q->U.cols;
    for (size_t i = 0; i < K; ++i)
      for (int j = 0; j < r; ++j)
        out[K + i * r + j] += scale * (v[i] * uta[j] + a[i] * utv[j]);
  } else if (const auto* q = std::get_if<QuadDiagSoftplus>(&g.payload)) {
    Vec& out = ws.small_grad;
    for (size_t k = 0; k < q->c_raw.size(); ++k)
      out[k] += scale * q->sign * v[k] * a[k] * sigmoid(q->c_raw[k]);
  } else if (std::holds_alternative<AnalyticDensity>(g.payload)) {
    // no parameters
  } else {
    // density: sum_q (w_q s_q) d/dtheta rho'(u_q), s = Phi v
    const auto& d = std::get<DensityGenerator>(g.payload);
    Vec& u = ws.scratch_q;
    density_nodal(d.include_lift, bp, a, lift, t, u);
    const Vec s = bp.reconstruct(v);
    Vec in(1), dir(1);
    for (int q2 = 0; q2 < bp.grid.Q(); ++q2) {
      in[0] = u[q2];
      dir[0] = bp.grid.w[q2] * s[q2];
      mlp_dir_grad_param(d.rho, ws.mlp_ws, in, dir, scale, ws.mlp_grads);
    }
  }
}

void vjp_flush(const ScalarGenerator& g, GenWorkspace& ws, Vec& flat_grad) {
  require(flat_grad.size() == g.param_size(), "vjp_flush: grad buffer size");
  if (std::holds_alternative<MlpGenerator>(g.payload) ||
      std::holds_alternative<DensityGenerator>(g.payload)) {
    ws.mlp_grads.axpy_into(flat_grad);
  } else if (!std::holds_alternative<AnalyticDensity>(g.payload)) {
    for (size_t i = 0; i < flat_grad.size(); ++i) flat_grad[i] += ws.small_grad[i];
  }
}

void gen_grad_param_vjp(const ScalarGenerator& g, const Baseplate& bp,
                        const Vec& a, const LiftingField& lift, double t,
                        const Vec& v, double scale, GenWorkspace& ws,
                        Vec& flat_grad) {
  require(flat_grad.size() == g.param_size(), "gen_grad_param_vjp: grad buffer size");
  vjp_begin(g, ws);
  vjp_accumulate(g, bp, a, lift, t, v, scale, ws);
  vjp_flush(g, ws, flat_grad);
}

ScalarGenerator make_mlp_generator(int K, uint64_t seed) {
  ScalarGenerator g;
  g.payload = MlpGenerator{mlp_init({K, 128, 128, 128, 128, 1}, Activation::gelu, seed)};
  return g;
}

ScalarGenerator make_density_generator(uint64_t seed, bool include_lift,
                                       int width, int depth) {
  std::vector<int> widths(depth + 2, width);
  widths.front() = 1;
  widths.back() = 1;
  ScalarGenerator g;
  g.payload = DensityGenerator{mlp_init(widths, Activation::gelu, seed), include_lift};
  return g;
}

ScalarGenerator make_quad_diag_softplus(int K, double sign, double c_raw_init) {
  ScalarGenerator g;
  g.payload = QuadDiagSoftplus{Vec(K, c_raw_init), sign};
  return g;
}

ScalarGenerator make_quad_lowrank(int K, int rank, uint64_t seed) {
  QuadLowRank q;
  q.kdiag.assign(K, 0.0);
  q.U = Mat(K, rank);
  rng::Stream s(seed);
  for (auto& x : q.U.d) x = 0.01 * s.normal();
  ScalarGenerator g;
  g.payload = q;
  return g;
}

ScalarGenerator make_cubic_density(double coeff, bool include_lift) {
  AnalyticDensity d;
  d.name = "cubic:" + std::to_string(coeff);
  d.rho = [coeff](double u) { return coeff * u * u * u; };
  d.drho = [coeff](double u) { return 3.0 * coeff * u * u; };
  d.include_lift = include_lift;
  ScalarGenerator g;
  g.payload = d;
  return g;
}

}  // namespace blockpde
