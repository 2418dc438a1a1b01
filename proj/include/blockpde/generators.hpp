#pragma once

#include <string>
#include <variant>

#include "blockpde/baseplate.hpp"
#include "blockpde/nnet.hpp"

namespace blockpde {

// Free scalar generator E(a) or H(a) as a compact MLP R^K -> R.
struct MlpGenerator {
  Mlp net;
};

// 1/2 a^T (diag(k) + U U^T) a ; symmetric by construction.
struct QuadLowRank {
  Vec kdiag;
  Mat U;  // K x r
};

// 1/2 sign * a^T diag(softplus(c_raw)) a ; strictly positive diagonal.
struct QuadDiagSoftplus {
  Vec c_raw;
  double sign = 1.0;
};

// Integral generator: sum_q w_q rho(u(x_q)) with a pointwise density net.
struct DensityGenerator {
  Mlp rho;  // 1 -> ... -> 1
  bool include_lift = true;
};

// Integral generator with a closed-form density; used by exact reference
// blocks (e.g. rho(u) = -u^3/6 for transport). Not trainable.
struct AnalyticDensity {
  std::string name;
  std::function<double(double)> rho;
  std::function<double(double)> drho;
  bool include_lift = true;
};

struct ScalarGenerator {
  std::variant<MlpGenerator, QuadLowRank, QuadDiagSoftplus, DensityGenerator,
               AnalyticDensity>
      payload;

  std::string variant_name() const;
  size_t param_size() const;
  Vec flatten_params() const;
  void unflatten_params(const Vec& flat);
  bool trainable() const { return param_size() > 0; }
};

// Scratch reused across evaluations (sized lazily per generator).
struct GenWorkspace {
  MlpWorkspace mlp_ws;
  MlpGrads mlp_grads;
  Vec small_grad;  // flat accumulator for the quadratic variants
  Vec scratch_q;   // length-Q buffers
  Vec scratch_q2;
  Vec scratch_k;
  bool ready = false;
};

double gen_value(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
                 const LiftingField& lift, double t);

Vec gen_grad(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
             const LiftingField& lift, double t);
void gen_grad(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
              const LiftingField& lift, double t, GenWorkspace& ws, Vec& out);

// Accumulates scale * d/dtheta [ v . grad_a g(a) ] into `flat_grad`
// (layout matching flatten_params).
void gen_grad_param_vjp(const ScalarGenerator& g, const Baseplate& bp,
                        const Vec& a, const LiftingField& lift, double t,
                        const Vec& v, double scale, GenWorkspace& ws,
                        Vec& flat_grad);

// Chunked form used by the training hot loop: begin zeroes the workspace
// accumulators, accumulate adds one sample, flush adds the total into a
// flat gradient. Equivalent to repeated gen_grad_param_vjp calls.
void vjp_begin(const ScalarGenerator& g, GenWorkspace& ws);
void vjp_accumulate(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
                    const LiftingField& lift, double t, const Vec& v,
                    double scale, GenWorkspace& ws);
void vjp_flush(const ScalarGenerator& g, GenWorkspace& ws, Vec& flat_grad);

// Convenience constructors with the default architectures.
ScalarGenerator make_mlp_generator(int K, uint64_t seed);
ScalarGenerator make_density_generator(uint64_t seed, bool include_lift = true,
                                       int width = 128, int depth = 4);
ScalarGenerator make_quad_diag_softplus(int K, double sign = 1.0,
                                        double c_raw_init = 0.0);
ScalarGenerator make_quad_lowrank(int K, int rank, uint64_t seed);
// rho(u) = coeff * u^3 (drho = 3 coeff u^2)
ScalarGenerator make_cubic_density(double coeff, bool include_lift = true);

}  // namespace blockpde
