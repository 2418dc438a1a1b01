#pragma once

#include <cstdint>
#include <string>

#include "blockpde/types.hpp"

namespace blockpde {

enum class Activation { gelu, tanh_act, softplus };

// Multilayer perceptron in double precision; hidden layers share one
// activation, the output layer is affine.
struct Mlp {
  std::vector<Mat> W;  // layer l: (width_{l+1} x width_l)
  std::vector<Vec> b;
  Activation act = Activation::gelu;

  int layers() const { return static_cast<int>(W.size()); }
  int in_dim() const { return W.empty() ? 0 : W.front().cols; }
  int out_dim() const { return W.empty() ? 0 : W.back().rows; }
  size_t param_count() const;
};

// Parameter-shaped gradient buffer.
struct MlpGrads {
  std::vector<Mat> dW;
  std::vector<Vec> db;

  void zero();
  void match(const Mlp& m);
  void axpy_into(Vec& flat) const;  // append-accumulate into a flat vector
};

// Scratch buffers reused across per-sample passes.
struct MlpWorkspace {
  std::vector<Vec> h;   // activations per layer boundary
  std::vector<Vec> z;   // pre-activations
  std::vector<Vec> ht;  // forward tangents
  std::vector<Vec> zt;
  std::vector<Vec> r;   // reverse adjoints
  std::vector<Vec> rt;
  std::vector<Vec> d1;  // cached activation derivatives
  std::vector<Vec> d2;
  void match(const Mlp& m);
};

// He-style uniform fan-in initialization with a seeded generator; biases 0.
Mlp mlp_init(const std::vector<int>& widths, Activation act, uint64_t seed);

// activation value and first/second derivatives
double act_value(Activation a, double x);
double act_d1(Activation a, double x);
double act_d2(Activation a, double x);
// fused evaluation sharing the transcendental calls
void act_all(Activation a, double x, double& v, double& d1, double& d2);

Vec mlp_forward(const Mlp& m, const Vec& x);

// Scalar-output forward; workspace variant avoids allocation.
double mlp_forward_scalar(const Mlp& m, MlpWorkspace& ws, const Vec& x);

// Exact reverse-mode gradient of the scalar output with respect to x.
Vec mlp_input_gradient(const Mlp& m, const Vec& x);
void mlp_input_gradient(const Mlp& m, MlpWorkspace& ws, const Vec& x, Vec& g);

// Exact mixed second derivative d/dtheta [ v . grad_x f_theta(x) ], computed
// by a forward tangent in direction v followed by reverse mode over the
// tangent program. Accumulates scale * gradient into `out`; returns the
// directional derivative v . grad_x f.
double mlp_dir_grad_param(const Mlp& m, MlpWorkspace& ws, const Vec& x,
                          const Vec& v, double scale, MlpGrads& out);

// Batched variants processing B samples layer by layer (training hot path;
// results are exact and deterministic, samples laid out as rows).
struct MlpBatchWorkspace {
  std::vector<Mat> H, Z, Ht, Zt, R, Rt;
  std::vector<Mat> D1, D2;  // cached activation derivatives
  Mat Ta, Tb;               // transpose scratch
  void match(const Mlp& m, int batch);
};

// rows of X are inputs; writes f(x_i) into f_out (size B) and the input
// gradients into rows of G
void mlp_input_gradient_batch(const Mlp& m, MlpBatchWorkspace& ws, const Mat& X,
                              Vec& f_out, Mat& G);

// accumulates scale * sum_i d/dtheta [ v_i . grad_x f(x_i) ] into `out`
void mlp_dir_grad_param_batch(const Mlp& m, MlpBatchWorkspace& ws, const Mat& X,
                              const Mat& V, double scale, MlpGrads& out);

// ---- optimizer ----

struct StepSchedule {
  int step_size = 0;     // 0 disables the schedule
  double decay = 1.0;
};

// Decoupled-weight-decay Adam over a flat parameter vector.
struct AdamW {
  double base_lr = 1e-3;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  StepSchedule schedule;
  long step_count = 0;
  Vec m1, m2;

  void init(size_t n);
  // lr = base_lr * decay^(epoch / step_size)
  void on_epoch(int epoch);
  void step(double* params, const double* grads, size_t n);
};

// flat views over MLP parameters (layer order: W0, b0, W1, b1, ...)
Vec mlp_flatten(const Mlp& m);
void mlp_unflatten(Mlp& m, const Vec& flat);
void grads_flatten(const MlpGrads& g, Vec& flat);

}  // namespace blockpde
