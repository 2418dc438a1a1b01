#include "blockpde/nnet.hpp"

#include <cmath>

#include "blockpde/errors.hpp"
#include "blockpde/rng.hpp"

namespace blockpde {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gauss_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// four-accumulator dot product; fixed evaluation order, so results are
// reproducible run to run while the lanes vectorize
inline double dot4(const double* r, const double* x, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += r[j] * x[j];
    s1 += r[j + 1] * x[j + 1];
    s2 += r[j + 2] * x[j + 2];
    s3 += r[j + 3] * x[j + 3];
  }
  for (; j < n; ++j) s0 += r[j] * x[j];
  return (s0 + s1) + (s2 + s3);
}

// y = W x + b, all raw loops (hot path, called per sample)
inline void affine(const Mat& W, const Vec& b, const Vec& x, Vec& y) {
  y.resize(W.rows);
  for (int i = 0; i < W.rows; ++i) y[i] = b[i] + dot4(W.row(i), x.data(), W.cols);
}

inline void affine_nob(const Mat& W, const Vec& x, Vec& y) {
  y.resize(W.rows);
  for (int i = 0; i < W.rows; ++i) y[i] = dot4(W.row(i), x.data(), W.cols);
}

// y = W^T x
inline void affine_t(const Mat& W, const Vec& x, Vec& y) {
  y.assign(W.cols, 0.0);
  for (int i = 0; i < W.rows; ++i) {
    const double* r = W.row(i);
    const double xi = x[i];
    for (int j = 0; j < W.cols; ++j) y[j] += r[j] * xi;
  }
}
}  // namespace

double act_value(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return x * gauss_cdf(x);  // exact erf form
    case Activation::tanh_act: return std::tanh(x);
    case Activation::softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
  }
  return 0.0;
}

double act_d1(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return gauss_cdf(x) + x * gauss_pdf(x);
    case Activation::tanh_act: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::softplus: return 1.0 / (1.0 + std::exp(-x));
  }
  return 0.0;
}

double act_d2(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return (2.0 - x * x) * gauss_pdf(x);
    case Activation::tanh_act: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::softplus: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

void act_all(Activation a, double x, double& v, double& d1, double& d2) {
  switch (a) {
    case Activation::gelu: {
      const double cdf = gauss_cdf(x);
      const double pdf = gauss_pdf(x);
      v = x * cdf;
      d1 = cdf + x * pdf;
      d2 = (2.0 - x * x) * pdf;
      return;
    }
    case Activation::tanh_act: {
      const double t = std::tanh(x);
      v = t;
      d1 = 1.0 - t * t;
      d2 = -2.0 * t * d1;
      return;
    }
    case Activation::softplus: {
      const double sg = 1.0 / (1.0 + std::exp(-x));
      v = x > 30.0 ? x : std::log1p(std::exp(x));
      d1 = sg;
      d2 = sg * (1.0 - sg);
      return;
    }
  }
}

size_t Mlp::param_count() const {
  size_t n = 0;
  for (size_t l = 0; l < W.size(); ++l) n += W[l].d.size() + b[l].size();
  return n;
}

void MlpGrads::match(const Mlp& m) {
  const bool same = dW.size() == m.W.size() && db.size() == m.b.size() &&
                    (m.W.empty() || (dW.front().rows == m.W.front().rows &&
                                     dW.front().cols == m.W.front().cols &&
                                     dW.back().rows == m.W.back().rows &&
                                     dW.back().cols == m.W.back().cols));
  if (same) return;
  dW.resize(m.W.size());
  db.resize(m.b.size());
  for (size_t l = 0; l < m.W.size(); ++l) {
    dW[l] = Mat(m.W[l].rows, m.W[l].cols);
    db[l].assign(m.b[l].size(), 0.0);
  }
}

void MlpGrads::zero() {
  for (auto& g : dW) std::fill(g.d.begin(), g.d.end(), 0.0);
  for (auto& g : db) std::fill(g.begin(), g.end(), 0.0);
}

void MlpGrads::axpy_into(Vec& flat) const {
  size_t o = 0;
  for (size_t l = 0; l < dW.size(); ++l) {
    for (double v : dW[l].d) flat[o++] += v;
    for (double v : db[l]) flat[o++] += v;
  }
}

void MlpWorkspace::match(const Mlp& m) {
  const size_t L = m.W.size();
  h.resize(L + 1);
  z.resize(L);
  ht.resize(L + 1);
  zt.resize(L);
  r.resize(L + 1);
  rt.resize(L + 1);
  d1.resize(L);
  d2.resize(L);
}

Mlp mlp_init(const std::vector<int>& widths, Activation act, uint64_t seed) {
  require(widths.size() >= 2, "mlp_init: need at least input and output widths");
  Mlp m;
  m.act = act;
  const int L = static_cast<int>(widths.size()) - 1;
  m.W.resize(L);
  m.b.resize(L);
  for (int l = 0; l < L; ++l) {
    m.W[l] = Mat(widths[l + 1], widths[l]);
    m.b[l].assign(widths[l + 1], 0.0);
    rng::Stream s(rng::derive(seed, 1000 + l));
    const double bound = std::sqrt(6.0 / widths[l]);
    for (auto& v : m.W[l].d) v = s.uniform(-bound, bound);
  }
  return m;
}

Vec mlp_forward(const Mlp& m, const Vec& x) {
  require(static_cast<int>(x.size()) == m.in_dim(), "mlp_forward: input width mismatch");
  Vec h = x, z;
  for (int l = 0; l < m.layers(); ++l) {
    affine(m.W[l], m.b[l], h, z);
    if (l + 1 < m.layers()) {
      h.resize(z.size());
      for (size_t i = 0; i < z.size(); ++i) h[i] = act_value(m.act, z[i]);
    } else {
      h = z;
    }
  }
  return h;
}

double mlp_forward_scalar(const Mlp& m, MlpWorkspace& ws, const Vec& x) {
  require(m.out_dim() == 1, "mlp_forward_scalar: scalar-output network required");
  require(static_cast<int>(x.size()) == m.in_dim(), "mlp_forward_scalar: input width mismatch");
  const int L = m.layers();
  ws.h[0] = x;
  for (int l = 0; l < L; ++l) {
    affine(m.W[l], m.b[l], ws.h[l], ws.z[l]);
    if (l + 1 < L) {
      ws.h[l + 1].resize(ws.z[l].size());
      for (size_t i = 0; i < ws.z[l].size(); ++i)
        ws.h[l + 1][i] = act_value(m.act, ws.z[l][i]);
    } else {
      ws.h[l + 1] = ws.z[l];
    }
  }
  return ws.h[L][0];
}

void mlp_input_gradient(const Mlp& m, MlpWorkspace& ws, const Vec& x, Vec& g) {
  require(m.out_dim() == 1, "mlp_input_gradient: scalar-output network required");
  require(static_cast<int>(x.size()) == m.in_dim(),
          "mlp_input_gradient: input width mismatch");
  const int L = m.layers();
  ws.h[0] = x;
  for (int l = 0; l < L; ++l) {
    affine(m.W[l], m.b[l], ws.h[l], ws.z[l]);
    if (l + 1 < L) {
      const size_t n = ws.z[l].size();
      ws.h[l + 1].resize(n);
      ws.d1[l].resize(n);
      double d2v;
      for (size_t i = 0; i < n; ++i)
        act_all(m.act, ws.z[l][i], ws.h[l + 1][i], ws.d1[l][i], d2v);
    } else {
      ws.h[l + 1] = ws.z[l];
    }
  }
  // seed and walk backwards; r[l] = d f / d h[l]
  ws.r[L].assign(1, 1.0);
  for (int l = L - 1; l >= 0; --l) {
    Vec& rz = ws.rt[l];  // reuse as d f / d z[l]
    if (l + 1 < L) {
      rz.resize(ws.z[l].size());
      for (size_t i = 0; i < rz.size(); ++i) rz[i] = ws.r[l + 1][i] * ws.d1[l][i];
    } else {
      rz = ws.r[l + 1];
    }
    affine_t(m.W[l], rz, ws.r[l]);
  }
  g = ws.r[0];
}

Vec mlp_input_gradient(const Mlp& m, const Vec& x) {
  MlpWorkspace ws;
  ws.match(m);
  Vec g;
  mlp_input_gradient(m, ws, x, g);
  return g;
}

double mlp_dir_grad_param(const Mlp& m, MlpWorkspace& ws, const Vec& x,
                          const Vec& v, double scale, MlpGrads& out) {
  require(m.out_dim() == 1, "mlp_dir_grad_param: scalar-output network required");
  require(x.size() == static_cast<size_t>(m.in_dim()) && v.size() == x.size(),
          "mlp_dir_grad_param: shape mismatch");
  const int L = m.layers();

  // forward with tangent: ht = d h / ds for input x + s v
  ws.h[0] = x;
  ws.ht[0] = v;
  for (int l = 0; l < L; ++l) {
    affine(m.W[l], m.b[l], ws.h[l], ws.z[l]);
    affine_nob(m.W[l], ws.ht[l], ws.zt[l]);
    if (l + 1 < L) {
      const size_t n = ws.z[l].size();
      ws.h[l + 1].resize(n);
      ws.ht[l + 1].resize(n);
      ws.d1[l].resize(n);
      ws.d2[l].resize(n);
      for (size_t i = 0; i < n; ++i) {
        act_all(m.act, ws.z[l][i], ws.h[l + 1][i], ws.d1[l][i], ws.d2[l][i]);
        ws.ht[l + 1][i] = ws.d1[l][i] * ws.zt[l][i];
      }
    } else {
      ws.h[l + 1] = ws.z[l];
      ws.ht[l + 1] = ws.zt[l];
    }
  }
  const double dir = ws.ht[L][0];  // v . grad_x f

  // reverse over the (primal, tangent) program; g = ht[L][0].
  // r[l] = dg/dh[l], rt[l] = dg/dht[l]
  ws.r[L].assign(1, 0.0);
  ws.rt[L].assign(1, 1.0);
  Vec rz, rzt;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) {
      const size_t n = ws.z[l].size();
      rz.resize(n);
      rzt.resize(n);
      for (size_t i = 0; i < n; ++i) {
        rz[i] = ws.r[l + 1][i] * ws.d1[l][i] +
                ws.rt[l + 1][i] * ws.d2[l][i] * ws.zt[l][i];
        rzt[i] = ws.rt[l + 1][i] * ws.d1[l][i];
      }
    } else {
      rz = ws.r[l + 1];
      rzt = ws.rt[l + 1];
    }
    // z = W h + b, zt = W ht:
    //   dg/dW += rz h^T + rzt ht^T ;  dg/db += rz
    Mat& dW = out.dW[l];
    Vec& db = out.db[l];
    for (int i = 0; i < m.W[l].rows; ++i) {
      const double a1 = scale * rz[i];
      const double a2 = scale * rzt[i];
      double* drow = dW.row(i);
      const double* hrow = ws.h[l].data();
      const double* htrow = ws.ht[l].data();
      for (int j = 0; j < m.W[l].cols; ++j)
        drow[j] += a1 * hrow[j] + a2 * htrow[j];
      db[i] += a1;
    }
    affine_t(m.W[l], rz, ws.r[l]);
    affine_t(m.W[l], rzt, ws.rt[l]);
  }
  return dir;
}

namespace {

// C = A (B x k) * W^T (rows x k) -> (B x rows)
void gemm_nt(const Mat& A, const Mat& W, Mat& C) {
  C.rows = A.rows;
  C.cols = W.rows;
  C.d.resize(static_cast<size_t>(C.rows) * C.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* a = A.row(i);
    double* c = C.row(i);
    for (int r = 0; r < W.rows; ++r) c[r] = dot4(W.row(r), a, W.cols);
  }
}

// C = A (B x rows) * W (rows x cols) -> (B x cols)
void gemm_nn(const Mat& A, const Mat& W, Mat& C) {
  C.rows = A.rows;
  C.cols = W.cols;
  C.d.assign(static_cast<size_t>(C.rows) * C.cols, 0.0);
  for (int i = 0; i < A.rows; ++i) {
    const double* a = A.row(i);
    double* c = C.row(i);
    for (int r = 0; r < W.rows; ++r) {
      const double air = a[r];
      const double* w = W.row(r);
      for (int j = 0; j < W.cols; ++j) c[j] += air * w[j];
    }
  }
}

void transpose_into(const Mat& A, Mat& T) {
  T.rows = A.cols;
  T.cols = A.rows;
  T.d.resize(A.d.size());
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
}

// dW (rows x cols) += alpha * R^T H with R (B x rows), H (B x cols);
// transposed copies make every dW entry one contiguous dot product, so the
// large dW buffer is swept exactly once per call
void gemm_tn_acc(const Mat& R, const Mat& H, double alpha, Mat& dW, Mat& Rt,
                 Mat& Ht) {
  transpose_into(R, Rt);
  transpose_into(H, Ht);
  const int B = R.rows;
  for (int p = 0; p < R.cols; ++p) {
    double* w = dW.row(p);
    const double* r = Rt.row(p);
    for (int c = 0; c < H.cols; ++c) w[c] += alpha * dot4(r, Ht.row(c), B);
  }
}

}  // namespace

void MlpBatchWorkspace::match(const Mlp& m, int batch) {
  const size_t L = m.W.size();
  H.resize(L + 1);
  Z.resize(L);
  Ht.resize(L + 1);
  Zt.resize(L);
  R.resize(L + 1);
  Rt.resize(L + 1);
  D1.resize(L);
  D2.resize(L);
  (void)batch;
}

void mlp_input_gradient_batch(const Mlp& m, MlpBatchWorkspace& ws, const Mat& X,
                              Vec& f_out, Mat& G) {
  require(m.out_dim() == 1, "mlp_input_gradient_batch: scalar-output network");
  require(X.cols == m.in_dim(), "mlp_input_gradient_batch: input width mismatch");
  ws.match(m, X.rows);
  const int L = m.layers();
  const int B = X.rows;

  ws.H[0] = X;
  for (int l = 0; l < L; ++l) {
    gemm_nt(ws.H[l], m.W[l], ws.Z[l]);
    for (int i = 0; i < B; ++i) {
      double* z = ws.Z[l].row(i);
      for (size_t j = 0; j < m.b[l].size(); ++j) z[j] += m.b[l][j];
    }
    if (l + 1 < L) {
      const size_t n = ws.Z[l].d.size();
      ws.H[l + 1].rows = ws.D1[l].rows = B;
      ws.H[l + 1].cols = ws.D1[l].cols = ws.Z[l].cols;
      ws.H[l + 1].d.resize(n);
      ws.D1[l].d.resize(n);
      double d2v;
      for (size_t i = 0; i < n; ++i)
        act_all(m.act, ws.Z[l].d[i], ws.H[l + 1].d[i], ws.D1[l].d[i], d2v);
    } else {
      ws.H[l + 1] = ws.Z[l];
    }
  }
  f_out.resize(B);
  for (int i = 0; i < B; ++i) f_out[i] = ws.H[L](i, 0);

  // reverse: R[L] = ones (B x 1)
  ws.R[L].rows = B;
  ws.R[L].cols = 1;
  ws.R[L].d.assign(B, 1.0);
  Mat rz;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) {
      rz.rows = B;
      rz.cols = ws.Z[l].cols;
      rz.d.resize(ws.Z[l].d.size());
      for (size_t i = 0; i < rz.d.size(); ++i)
        rz.d[i] = ws.R[l + 1].d[i] * ws.D1[l].d[i];
    } else {
      rz = ws.R[l + 1];
    }
    gemm_nn(rz, m.W[l], ws.R[l]);
  }
  G = ws.R[0];
}

void mlp_dir_grad_param_batch(const Mlp& m, MlpBatchWorkspace& ws, const Mat& X,
                              const Mat& V, double scale, MlpGrads& out) {
  require(m.out_dim() == 1, "mlp_dir_grad_param_batch: scalar-output network");
  require(X.cols == m.in_dim() && V.cols == X.cols && V.rows == X.rows,
          "mlp_dir_grad_param_batch: shape mismatch");
  ws.match(m, X.rows);
  const int L = m.layers();
  const int B = X.rows;

  ws.H[0] = X;
  ws.Ht[0] = V;
  for (int l = 0; l < L; ++l) {
    gemm_nt(ws.H[l], m.W[l], ws.Z[l]);
    gemm_nt(ws.Ht[l], m.W[l], ws.Zt[l]);
    for (int i = 0; i < B; ++i) {
      double* z = ws.Z[l].row(i);
      for (size_t j = 0; j < m.b[l].size(); ++j) z[j] += m.b[l][j];
    }
    if (l + 1 < L) {
      const size_t n = ws.Z[l].d.size();
      ws.H[l + 1].rows = ws.Ht[l + 1].rows = B;
      ws.H[l + 1].cols = ws.Ht[l + 1].cols = ws.Z[l].cols;
      ws.D1[l].rows = ws.D2[l].rows = B;
      ws.D1[l].cols = ws.D2[l].cols = ws.Z[l].cols;
      ws.H[l + 1].d.resize(n);
      ws.Ht[l + 1].d.resize(n);
      ws.D1[l].d.resize(n);
      ws.D2[l].d.resize(n);
      for (size_t i = 0; i < n; ++i) {
        act_all(m.act, ws.Z[l].d[i], ws.H[l + 1].d[i], ws.D1[l].d[i],
                ws.D2[l].d[i]);
        ws.Ht[l + 1].d[i] = ws.D1[l].d[i] * ws.Zt[l].d[i];
      }
    } else {
      ws.H[l + 1] = ws.Z[l];
      ws.Ht[l + 1] = ws.Zt[l];
    }
  }

  ws.R[L].rows = ws.Rt[L].rows = B;
  ws.R[L].cols = ws.Rt[L].cols = 1;
  ws.R[L].d.assign(B, 0.0);
  ws.Rt[L].d.assign(B, 1.0);
  Mat rz, rzt;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L) {
      const size_t n = ws.Z[l].d.size();
      rz.rows = rzt.rows = B;
      rz.cols = rzt.cols = ws.Z[l].cols;
      rz.d.resize(n);
      rzt.d.resize(n);
      for (size_t i = 0; i < n; ++i) {
        rz.d[i] = ws.R[l + 1].d[i] * ws.D1[l].d[i] +
                  ws.Rt[l + 1].d[i] * ws.D2[l].d[i] * ws.Zt[l].d[i];
        rzt.d[i] = ws.Rt[l + 1].d[i] * ws.D1[l].d[i];
      }
    } else {
      rz = ws.R[l + 1];
      rzt = ws.Rt[l + 1];
    }
    gemm_tn_acc(rz, ws.H[l], scale, out.dW[l], ws.Ta, ws.Tb);
    gemm_tn_acc(rzt, ws.Ht[l], scale, out.dW[l], ws.Ta, ws.Tb);
    for (int i = 0; i < B; ++i) {
      const double* r = rz.row(i);
      for (size_t j = 0; j < out.db[l].size(); ++j) out.db[l][j] += scale * r[j];
    }
    gemm_nn(rz, m.W[l], ws.R[l]);
    gemm_nn(rzt, m.W[l], ws.Rt[l]);
  }
}

void AdamW::init(size_t n) {
  m1.assign(n, 0.0);
  m2.assign(n, 0.0);
  step_count = 0;
  lr = base_lr;
}

void AdamW::on_epoch(int epoch) {
  if (schedule.step_size > 0)
    lr = base_lr * std::pow(schedule.decay, epoch / schedule.step_size);
}

void AdamW::step(double* params, const double* grads, size_t n) {
  require(m1.size() == n, "AdamW::step: state size mismatch");
  step_count++;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) throw NumericError("AdamW::step: non-finite gradient");
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
    const double mhat = m1[i] / bc1;
    const double vhat = m2[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
  }
}

Vec mlp_flatten(const Mlp& m) {
  Vec flat;
  flat.reserve(m.param_count());
  for (size_t l = 0; l < m.W.size(); ++l) {
    flat.insert(flat.end(), m.W[l].d.begin(), m.W[l].d.end());
    flat.insert(flat.end(), m.b[l].begin(), m.b[l].end());
  }
  return flat;
}

void mlp_unflatten(Mlp& m, const Vec& flat) {
  size_t o = 0;
  for (size_t l = 0; l < m.W.size(); ++l) {
    for (auto& v : m.W[l].d) v = flat[o++];
    for (auto& v : m.b[l]) v = flat[o++];
  }
  require(o == flat.size(), "mlp_unflatten: size mismatch");
}

void grads_flatten(const MlpGrads& g, Vec& flat) {
  size_t o = 0;
  for (size_t l = 0; l < g.dW.size(); ++l) {
    for (double v : g.dW[l].d) flat[o++] = v;
    for (double v : g.db[l]) flat[o++] = v;
  }
}

}  // namespace blockpde
