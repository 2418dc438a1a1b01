#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "blockpde/generators.hpp"
#include "blockpde/refops.hpp"

namespace blockpde {

enum class StructKind {
  identity,
  shen_mass_inverse,        // G = M^{-1}
  shen_derivative,          // J = M^{-1} S M^{-1} (Riesz-corrected d/dx)
  fourier_dx,               // modewise multiplication by i j
  fourier_dy,               // modewise multiplication by i l
  cosine_laplacian_metric,  // G = -Lap = diag(pi^2 (j^2+l^2))
};

std::string struct_kind_name(StructKind k);
StructKind struct_kind_from_name(const std::string& s);

// Fixed baseplate-consistent operator; G-kinds are symmetric PSD, J-kinds
// skew, in the packed coordinates.
struct StructureOp {
  StructKind kind = StructKind::identity;

  bool is_skew() const {
    return kind == StructKind::shen_derivative || kind == StructKind::fourier_dx ||
           kind == StructKind::fourier_dy;
  }
  Vec apply(const Baseplate& bp, const Vec& v) const;
  // transpose action: equal for G-kinds, negated for J-kinds
  Vec apply_transpose(const Baseplate& bp, const Vec& v) const;
  // diagonal of the operator in packed coordinates, when it is diagonal
  std::optional<Vec> diagonal(const Baseplate& bp) const;
};

enum class BlockKind { E, H, R, auxiliary };

std::string block_kind_name(BlockKind k);
BlockKind block_kind_from_name(const std::string& s);

using ResidualFn =
    std::function<Vec(const Baseplate&, const Vec&, const LiftingField&, double)>;

// One mechanism of the right-hand side: every block returns its additive
// contribution to a_t = sum_i F_i(a). Transport blocks carry their minus
// sign internally.
struct Block {
  std::string name;
  BlockKind kind = BlockKind::R;
  double scale = 1.0;
  StructureOp structure;
  std::shared_ptr<ScalarGenerator> generator;  // E/H/auxiliary kinds
  ResidualFn residual;                         // R kind or reference fields
  bool linear = false;
  bool time_dependent = false;  // field depends on t (forcing through lift)
  Vec shift;                    // optional constant field perturbation
  std::optional<Vec> explicit_diag;  // unscaled d with F(a) = scale * d . a

  // kind E -> scale * (-G grad E); kind H -> scale * (J grad H);
  // kind R -> scale * R(a); auxiliary -> scale * (S grad gen) or residual
  Vec eval(const Baseplate& bp, const Vec& a, const LiftingField& lift,
           double t) const;
  Vec eval(const Baseplate& bp, const Vec& a) const;
  void eval(const Baseplate& bp, const Vec& a, const LiftingField& lift,
            double t, GenWorkspace& ws, Vec& out) const;

  double generator_value(const Baseplate& bp, const Vec& a,
                         const LiftingField& lift, double t) const;

  // F(a) = d . a for diagonal-linear blocks, nullopt otherwise (the shift,
  // if any, is handled separately by the integrators)
  std::optional<Vec> field_diagonal(const Baseplate& bp) const;
};

struct BlockSet {
  std::vector<Block> blocks;
  std::string baseplate_id;

  const Block& by_name(const std::string& n) const;
};

Vec eval_block(const Block& b, const Baseplate& bp, const Vec& a,
               const LiftingField& lift, double t);

// sum of the evolution blocks (auxiliary blocks are maps used inside other
// components, never summed)
Vec sum_field(const BlockSet& bs, const Baseplate& bp, const Vec& a,
              const LiftingField& lift, double t);

// a |-> b applied `times` times; linear blocks only
std::function<Vec(const Vec&)> compose_repeated(const Block& b,
                                                const Baseplate& bp, int times);

// empirical block mismatch statistics over admissible states
struct Mismatch {
  double max = 0.0;
  double mean = 0.0;
};
Mismatch block_mismatch(const Block& b, const ReferenceOp& ref,
                        const Baseplate& bp, const std::vector<Vec>& samples);

// ---- assembly helpers ----

// E-block from a generator (dissipative, -G grad E)
Block make_e_block(const std::string& name, ScalarGenerator gen, StructKind G,
                   double scale);
// H-block from a generator (conservative, +J grad H)
Block make_h_block(const std::string& name, ScalarGenerator gen, StructKind J,
                   double scale);
// residual block from a closed-form field
Block make_r_block(const std::string& name, ResidualFn fn, double scale,
                   bool linear = false, bool time_dependent = false);
// auxiliary map (+S grad gen), excluded from sum_field
Block make_aux_block(const std::string& name, ScalarGenerator gen, StructKind S);

// reference blocks: same kinds, fields given by reference ops
Block make_ref_block(const std::string& name, BlockKind kind,
                     const ReferenceOp& op, double scale, bool linear,
                     std::optional<Vec> diagonal = std::nullopt);

// Exact quadratic generator E(a) = 1/2 a^T A a with A the Shen stiffness
// matrix, stored as the full-rank factor A = U U^T. With G = M^{-1} the
// induced E-block reproduces the weak-form u_xx reference.
ScalarGenerator make_shen_stiffness_generator(const Baseplate& bp);

// Exact diagonal quadratic generator with kdiag = multipliers (U = 0).
ScalarGenerator make_exact_diag_generator(const Vec& multipliers);

}  // namespace blockpde
