#include "blockpde/blocks.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"

namespace blockpde {

std::string struct_kind_name(StructKind k) {
  switch (k) {
    case StructKind::identity: return "identity";
    case StructKind::shen_mass_inverse: return "shen_mass_inverse";
    case StructKind::shen_derivative: return "shen_derivative";
    case StructKind::fourier_dx: return "fourier_dx";
    case StructKind::fourier_dy: return "fourier_dy";
    case StructKind::cosine_laplacian_metric: return "cosine_laplacian_metric";
  }
  return "?";
}

StructKind struct_kind_from_name(const std::string& s) {
  if (s == "identity") return StructKind::identity;
  if (s == "shen_mass_inverse") return StructKind::shen_mass_inverse;
  if (s == "shen_derivative") return StructKind::shen_derivative;
  if (s == "fourier_dx") return StructKind::fourier_dx;
  if (s == "fourier_dy") return StructKind::fourier_dy;
  if (s == "cosine_laplacian_metric") return StructKind::cosine_laplacian_metric;
  throw ParseError("unknown structure kind: " + s);
}

std::string block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::E: return "E";
    case BlockKind::H: return "H";
    case BlockKind::R: return "R";
    case BlockKind::auxiliary: return "auxiliary";
  }
  return "?";
}

BlockKind block_kind_from_name(const std::string& s) {
  if (s == "E") return BlockKind::E;
  if (s == "H") return BlockKind::H;
  if (s == "R") return BlockKind::R;
  if (s == "auxiliary") return BlockKind::auxiliary;
  throw ParseError("unknown block kind: " + s);
}

namespace {
Vec rotate_by_wavenumber(const Baseplate& bp, const Vec& v, int axis) {
  Vec out(bp.K, 0.0);
  for (int k = 1; k < bp.K; k += 2) {
    const ModeInfo& mi = bp.mode_table[k];
    const double wn = axis == 0 ? mi.j : mi.l;
    out[k] = -wn * v[k + 1];
    out[k + 1] = wn * v[k];
  }
  return out;
}
}  // namespace

Vec StructureOp::apply(const Baseplate& bp, const Vec& v) const {
  switch (kind) {
    case StructKind::identity:
      return v;
    case StructKind::shen_mass_inverse:
      return bp.mass_solve(v);
    case StructKind::shen_derivative: {
      // M^{-1} S M^{-1}: plain-skew realization of d/dx through the
      // discrete L2 Riesz map
      Vec c = bp.mass_solve(v);
      return bp.mass_solve(kern::matvec(bp.S, c));
    }
    case StructKind::fourier_dx:
      return rotate_by_wavenumber(bp, v, 0);
    case StructKind::fourier_dy:
      return rotate_by_wavenumber(bp, v, 1);
    case StructKind::cosine_laplacian_metric: {
      Vec out(bp.K);
      const Vec& lm = bp.laplacian_multiplier();
      for (int k = 0; k < bp.K; ++k) out[k] = -lm[k] * v[k];
      return out;
    }
  }
  return v;
}

Vec StructureOp::apply_transpose(const Baseplate& bp, const Vec& v) const {
  Vec out = apply(bp, v);
  if (is_skew())
    for (auto& x : out) x = -x;
  return out;
}

std::optional<Vec> StructureOp::diagonal(const Baseplate& bp) const {
  if (kind == StructKind::identity) return Vec(bp.K, 1.0);
  if (kind == StructKind::cosine_laplacian_metric) {
    Vec d(bp.K);
    const Vec& lm = bp.laplacian_multiplier();
    for (int k = 0; k < bp.K; ++k) d[k] = -lm[k];
    return d;
  }
  return std::nullopt;
}

void Block::eval(const Baseplate& bp, const Vec& a, const LiftingField& lift,
                 double t, GenWorkspace& ws, Vec& out) const {
  if (generator) {
    Vec& g = ws.scratch_k;
    gen_grad(*generator, bp, a, lift, t, ws, g);
    out = structure.apply(bp, g);
    const double s = kind == BlockKind::E ? -scale : scale;
    for (auto& x : out) x *= s;
  } else {
    require(static_cast<bool>(residual), "block '" + name + "' has no field");
    out = residual(bp, a, lift, t);
    for (auto& x : out) x *= scale;
  }
  if (!shift.empty())
    for (int k = 0; k < bp.K; ++k) out[k] += shift[k];
}

Vec Block::eval(const Baseplate& bp, const Vec& a, const LiftingField& lift,
                double t) const {
  GenWorkspace ws;
  Vec out;
  eval(bp, a, lift, t, ws, out);
  return out;
}

Vec Block::eval(const Baseplate& bp, const Vec& a) const {
  return eval(bp, a, LiftingField::zero(), 0.0);
}

double Block::generator_value(const Baseplate& bp, const Vec& a,
                              const LiftingField& lift, double t) const {
  require(static_cast<bool>(generator), "block '" + name + "' has no generator");
  return gen_value(*generator, bp, a, lift, t);
}

std::optional<Vec> Block::field_diagonal(const Baseplate& bp) const {
  if (explicit_diag) {
    Vec d(bp.K);
    for (int k = 0; k < bp.K; ++k) d[k] = scale * (*explicit_diag)[k];
    return d;
  }
  if (!generator) return std::nullopt;
  const auto sd = structure.diagonal(bp);
  if (!sd) return std::nullopt;
  const double s = kind == BlockKind::E ? -scale : scale;
  if (const auto* q = std::get_if<QuadDiagSoftplus>(&generator->payload)) {
    Vec d(bp.K);
    for (int k = 0; k < bp.K; ++k) {
      const double sp =
          q->c_raw[k] > 30.0 ? q->c_raw[k] : std::log1p(std::exp(q->c_raw[k]));
      d[k] = s * (*sd)[k] * q->sign * sp;
    }
    return d;
  }
  if (const auto* q = std::get_if<QuadLowRank>(&generator->payload)) {
    if (q->U.cols != 0) return std::nullopt;
    Vec d(bp.K);
    for (int k = 0; k < bp.K; ++k) d[k] = s * (*sd)[k] * q->kdiag[k];
    return d;
  }
  return std::nullopt;
}

const Block& BlockSet::by_name(const std::string& n) const {
  for (const auto& b : blocks)
    if (b.name == n) return b;
  throw std::invalid_argument("no block named '" + n + "'");
}

Vec eval_block(const Block& b, const Baseplate& bp, const Vec& a,
               const LiftingField& lift, double t) {
  return b.eval(bp, a, lift, t);
}

Vec sum_field(const BlockSet& bs, const Baseplate& bp, const Vec& a,
              const LiftingField& lift, double t) {
  require(!bs.blocks.empty(), "sum_field: empty block set");
  Vec acc(bp.K, 0.0);
  bool any = false;
  for (const auto& b : bs.blocks) {
    if (b.kind == BlockKind::auxiliary) continue;
    const Vec f = b.eval(bp, a, lift, t);
    for (int k = 0; k < bp.K; ++k) acc[k] += f[k];
    any = true;
  }
  require(any, "sum_field: only auxiliary blocks present");
  return acc;
}

std::function<Vec(const Vec&)> compose_repeated(const Block& b,
                                                const Baseplate& bp, int times) {
  require(b.linear, "compose_repeated: linear blocks only");
  require(times >= 1, "compose_repeated: times must be >= 1");
  const Block* blk = &b;
  const Baseplate* base = &bp;
  return [blk, base, times](const Vec& a) {
    Vec v = a;
    for (int i = 0; i < times; ++i) v = blk->eval(*base, v);
    return v;
  };
}

Mismatch block_mismatch(const Block& b, const ReferenceOp& ref,
                        const Baseplate& bp, const std::vector<Vec>& samples) {
  require(!samples.empty(), "block_mismatch: no samples");
  Mismatch out;
  GenWorkspace ws;
  Vec f;
  for (const auto& a : samples) {
    b.eval(bp, a, LiftingField::zero(), 0.0, ws, f);
    const Vec r = ref(bp, a);
    double s = 0.0;
    for (int k = 0; k < bp.K; ++k) s += (f[k] - r[k]) * (f[k] - r[k]);
    const double n = std::sqrt(s);
    out.max = std::max(out.max, n);
    out.mean += n;
  }
  out.mean /= static_cast<double>(samples.size());
  return out;
}

Block make_e_block(const std::string& name, ScalarGenerator gen, StructKind G,
                   double scale) {
  Block b;
  b.name = name;
  b.kind = BlockKind::E;
  b.scale = scale;
  b.structure.kind = G;
  b.generator = std::make_shared<ScalarGenerator>(std::move(gen));
  b.linear = std::holds_alternative<QuadDiagSoftplus>(b.generator->payload) ||
             std::holds_alternative<QuadLowRank>(b.generator->payload);
  return b;
}

Block make_h_block(const std::string& name, ScalarGenerator gen, StructKind J,
                   double scale) {
  Block b;
  b.name = name;
  b.kind = BlockKind::H;
  b.scale = scale;
  b.structure.kind = J;
  b.generator = std::make_shared<ScalarGenerator>(std::move(gen));
  b.linear = std::holds_alternative<QuadDiagSoftplus>(b.generator->payload) ||
             std::holds_alternative<QuadLowRank>(b.generator->payload);
  return b;
}

Block make_r_block(const std::string& name, ResidualFn fn, double scale,
                   bool linear, bool time_dependent) {
  Block b;
  b.name = name;
  b.kind = BlockKind::R;
  b.scale = scale;
  b.residual = std::move(fn);
  b.linear = linear;
  b.time_dependent = time_dependent;
  return b;
}

Block make_aux_block(const std::string& name, ScalarGenerator gen, StructKind S) {
  Block b;
  b.name = name;
  b.kind = BlockKind::auxiliary;
  b.scale = 1.0;
  b.structure.kind = S;
  b.generator = std::make_shared<ScalarGenerator>(std::move(gen));
  b.linear = std::holds_alternative<QuadDiagSoftplus>(b.generator->payload);
  return b;
}

ScalarGenerator make_shen_stiffness_generator(const Baseplate& bp) {
  require(bp.family == Family::shen_legendre_1d,
          "make_shen_stiffness_generator: Shen baseplate required");
  const int K = bp.K;
  Eigen::MatrixXd Ae(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) Ae(i, j) = bp.A(i, j);
  Eigen::LLT<Eigen::MatrixXd> llt(Ae);
  if (llt.info() != Eigen::Success)
    throw NumericError("shen stiffness matrix not SPD");
  const Eigen::MatrixXd L = llt.matrixL();
  QuadLowRank q;
  q.kdiag.assign(K, 0.0);
  q.U = Mat(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) q.U(i, j) = L(i, j);
  ScalarGenerator g;
  g.payload = q;
  return g;
}

ScalarGenerator make_exact_diag_generator(const Vec& multipliers) {
  QuadLowRank q;
  q.kdiag = multipliers;
  q.U = Mat(static_cast<int>(multipliers.size()), 0);
  ScalarGenerator g;
  g.payload = q;
  return g;
}

Block make_ref_block(const std::string& name, BlockKind kind,
                     const ReferenceOp& op, double scale, bool linear,
                     std::optional<Vec> diagonal) {
  Block b;
  b.name = name;
  b.kind = kind;
  b.scale = scale;
  b.linear = linear;
  auto opc = op;
  b.residual = [opc](const Baseplate& bp, const Vec& a, const LiftingField& lift,
                     double t) { return opc.eval(bp, a, lift, t); };
  if (diagonal) {
    // stored with the block scale applied by eval; field_diagonal multiplies
    b.explicit_diag = std::move(diagonal);
  }
  return b;
}

}  // namespace blockpde
