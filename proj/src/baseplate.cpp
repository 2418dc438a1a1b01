#include "blockpde/baseplate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"

namespace blockpde {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}
}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::shen_legendre_1d: return "shen_legendre_1d";
    case Family::fourier_2d: return "fourier_2d";
    case Family::cosine_2d: return "cosine_2d";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  if (s == "shen_legendre_1d") return Family::shen_legendre_1d;
  if (s == "fourier_2d") return Family::fourier_2d;
  if (s == "cosine_2d") return Family::cosine_2d;
  throw ParseError("unknown baseplate family: " + s);
}

struct Baseplate::MassFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
};

Baseplate::~Baseplate() = default;

void Baseplate::finalize() {
  // Laplacian multipliers per packed slot.
  lap_mult_.assign(K, 0.0);
  if (family == Family::fourier_2d) {
    for (int k = 0; k < K; ++k) {
      const ModeInfo& m = mode_table[k];
      lap_mult_[k] = -static_cast<double>(m.j * m.j + m.l * m.l);
    }
  } else if (family == Family::cosine_2d) {
    for (int k = 0; k < K; ++k) {
      const ModeInfo& m = mode_table[k];
      lap_mult_[k] = -kPi * kPi * static_cast<double>(m.j * m.j + m.l * m.l);
    }
  }

  // Mass factorization (Shen).
  if (family == Family::shen_legendre_1d) {
    Eigen::MatrixXd Me(K, K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) Me(i, j) = M(i, j);
    mass_factor_ = std::make_shared<MassFactor>();
    mass_factor_->llt.compute(Me);
    if (mass_factor_->llt.info() != Eigen::Success)
      throw NumericError("shen mass matrix not SPD");
  }

  uint64_t h = 1469598103934665603ULL;
  const std::string fam = family_name(family);
  h = fnv1a(h, fam.data(), fam.size());
  h = fnv1a(h, &K, sizeof(K));
  h = fnv1a(h, &dealias_cutoff, sizeof(dealias_cutoff));
  h = fnv1a(h, grid.x.data(), grid.x.size() * sizeof(double));
  if (!grid.y.empty()) h = fnv1a(h, grid.y.data(), grid.y.size() * sizeof(double));
  h = fnv1a(h, grid.w.data(), grid.w.size() * sizeof(double));
  hash_ = hex64(h);
}

std::string Baseplate::manifest_json() const {
  std::ostringstream os;
  os << "{\"family\":\"" << family_name(family) << "\"";
  if (family == Family::shen_legendre_1d)
    os << ",\"Q\":" << grid.Q();
  else
    os << ",\"N\":" << N;
  os << ",\"K\":" << K << ",\"K_cut\":" << dealias_cutoff
     << ",\"grid_hash\":\"" << hash_ << "\"}";
  return os.str();
}

Vec Baseplate::mass_solve(const Vec& v) const {
  if (family != Family::shen_legendre_1d) return v;
  Eigen::Map<const Eigen::VectorXd> ve(v.data(), v.size());
  Eigen::VectorXd y = mass_factor_->llt.solve(ve);
  return Vec(y.data(), y.data() + y.size());
}

Vec Baseplate::reconstruct(const Vec& a) const {
  return reconstruct(a, LiftingField::zero(), 0.0);
}

Vec Baseplate::reconstruct(const Vec& a, const LiftingField& lift,
                           double t) const {
  require(static_cast<int>(a.size()) == K, "reconstruct: coefficient size mismatch");
  const int Q = grid.Q();
  Vec u(Q, 0.0);

  if (family == Family::shen_legendre_1d) {
    kern::matvec(phi, a.data(), u.data());
  } else if (family == Family::fourier_2d) {
    CMat C = unpack(a);
    CMat T;  // C * Wc^T  (m x N)
    // build Wc^T once per call via cmatmul with transposed access: instead
    // compute T[j][q] = sum_l C(j,l) Wc(q,l) by multiplying C with Wc^T.
    CMat WcT(Wc.cols, Wc.rows);
    for (int q = 0; q < Wc.rows; ++q)
      for (int m = 0; m < Wc.cols; ++m) WcT(m, q) = Wc(q, m);
    kern::cmatmul(C, WcT, T);
    CMat U;
    kern::cmatmul(Wc, T, U);  // N x N
    for (int ix = 0; ix < N; ++ix)
      for (int iy = 0; iy < N; ++iy) u[static_cast<size_t>(ix) * N + iy] = U(ix, iy).real();
  } else {  // cosine
    // U = Cx * Amat * Cy^T with Amat[j][l] = a_{j,l}
    const int m = dealias_cutoff + 1;
    Mat Amat(m, m);
    for (int k = 0; k < K; ++k) Amat(mode_table[k].j, mode_table[k].l) = a[k];
    Mat T;  // m x N  = Amat * Cx^T
    Mat CxT(Cx.cols, Cx.rows);
    for (int q = 0; q < Cx.rows; ++q)
      for (int j = 0; j < Cx.cols; ++j) CxT(j, q) = Cx(q, j);
    kern::matmul(Amat, CxT, T);
    Mat U;
    kern::matmul(Cx, T, U);
    for (int ix = 0; ix < N; ++ix)
      for (int iy = 0; iy < N; ++iy) u[static_cast<size_t>(ix) * N + iy] = U(ix, iy);
  }

  if (!lift.is_zero) {
    for (int q = 0; q < Q; ++q)
      u[q] += lift.value(grid.x[q], grid.dim == 2 ? grid.y[q] : 0.0, t);
  }
  return u;
}

double Baseplate::reconstruct_at(const Vec& a, const LiftingField& lift,
                                 double t, double x) const {
  require(family == Family::shen_legendre_1d, "reconstruct_at: 1D baseplate only");
  std::vector<double> L(K + 2);
  legendre_all(K + 1, x, L.data(), nullptr);
  double s = 0.0;
  for (int k = 1; k <= K; ++k) s += a[k - 1] * (L[k - 1] - L[k + 1]);
  if (!lift.is_zero) s += lift.value(x, 0.0, t);
  return s;
}

Vec Baseplate::project(const Vec& field) const {
  require(static_cast<int>(field.size()) == grid.Q(), "project: field length != Q");
  if (!all_finite(field)) throw NumericError("project: non-finite field values");

  if (family == Family::shen_legendre_1d) {
    Vec wf(grid.Q());
    for (int q = 0; q < grid.Q(); ++q) wf[q] = grid.w[q] * field[q];
    Vec rhs = kern::matvec_t(phi, wf);
    return mass_solve(rhs);
  }

  if (family == Family::fourier_2d) {
    CMat U(N, N);
    for (int ix = 0; ix < N; ++ix)
      for (int iy = 0; iy < N; ++iy) U(ix, iy) = field[static_cast<size_t>(ix) * N + iy];
    CMat T;  // Wc^H U  (m x N)
    kern::cmatmul_ah(Wc, U, T);
    // C = (1/N^2) T conj(Wc)  (m x m)
    CMat Wconj(Wc.rows, Wc.cols);
    for (int q = 0; q < Wc.rows; ++q)
      for (int m = 0; m < Wc.cols; ++m) Wconj(q, m) = std::conj(Wc(q, m));
    CMat C;
    kern::cmatmul(T, Wconj, C);
    const double inv = 1.0 / (static_cast<double>(N) * N);
    for (auto& z : C.d) z *= inv;
    return pack(C);
  }

  // cosine: a_{jl} = (Cx^T Wx U Wy Cy)[j][l] / (norm_j norm_l)
  const int m = dealias_cutoff + 1;
  Mat U(N, N);
  for (int ix = 0; ix < N; ++ix)
    for (int iy = 0; iy < N; ++iy)
      U(ix, iy) = w1d[ix] * w1d[iy] * field[static_cast<size_t>(ix) * N + iy];
  Mat T;  // Cx^T U  (m x N)
  Mat CxT(Cx.cols, Cx.rows);
  for (int q = 0; q < Cx.rows; ++q)
    for (int j = 0; j < Cx.cols; ++j) CxT(j, q) = Cx(q, j);
  kern::matmul(CxT, U, T);
  Mat C;
  kern::matmul(T, Cx, C);  // m x m
  Vec a(K, 0.0);
  for (int k = 0; k < K; ++k) {
    const ModeInfo& mi = mode_table[k];
    a[k] = C(mi.j, mi.l) / (cos_norm[mi.j] * cos_norm[mi.l]);
  }
  (void)m;
  return a;
}

Vec Baseplate::dealias(const Vec& a) const {
  require(static_cast<int>(a.size()) == K, "dealias: size mismatch");
  return a;
}

Vec Baseplate::nodal_derivative(const Vec& a) const {
  require(family == Family::shen_legendre_1d, "nodal_derivative: Shen only");
  Vec du(grid.Q());
  kern::matvec(dphi, a.data(), du.data());
  return du;
}

CMat Baseplate::unpack(const Vec& a) const {
  require(family == Family::fourier_2d, "unpack: Fourier only");
  const int Kc = dealias_cutoff;
  const int m = 2 * Kc + 1;
  CMat C(m, m);  // index (j + Kc, l + Kc)
  C(Kc, Kc) = a[0];
  for (int k = 1; k < K; k += 2) {
    const ModeInfo& mi = mode_table[k];
    const std::complex<double> c(a[k], a[k + 1]);
    C(mi.j + Kc, mi.l + Kc) = c;
    C(-mi.j + Kc, -mi.l + Kc) = std::conj(c);
  }
  return C;
}

Vec Baseplate::pack(const CMat& modes) const {
  require(family == Family::fourier_2d, "pack: Fourier only");
  const int Kc = dealias_cutoff;
  Vec a(K, 0.0);
  a[0] = modes(Kc, Kc).real();
  for (int k = 1; k < K; k += 2) {
    const ModeInfo& mi = mode_table[k];
    const std::complex<double> c = modes(mi.j + Kc, mi.l + Kc);
    a[k] = c.real();
    a[k + 1] = c.imag();
  }
  return a;
}

Vec Baseplate::fourier_nodal_deriv(const Vec& a, int axis) const {
  require(family == Family::fourier_2d, "fourier_nodal_deriv: Fourier only");
  // multiply packed pair (re, im) by i*j (axis wavenumber), then reconstruct
  Vec da(K, 0.0);
  for (int k = 1; k < K; k += 2) {
    const ModeInfo& mi = mode_table[k];
    const double wn = axis == 0 ? mi.j : mi.l;
    da[k] = -wn * a[k + 1];
    da[k + 1] = wn * a[k];
  }
  return reconstruct(da);
}

Baseplate build_shen_baseplate(int Q, int K) {
  require(K >= 1, "build_shen_baseplate: K must be >= 1");
  require(Q >= K + 2, "build_shen_baseplate: need Q >= K+2");
  Baseplate bp;
  bp.family = Family::shen_legendre_1d;
  bp.K = K;
  bp.dealias_cutoff = K;
  bp.grid = gauss_legendre_grid(Q);

  bp.phi = Mat(Q, K);
  bp.dphi = Mat(Q, K);
  std::vector<double> L(K + 2), dL(K + 2);
  for (int q = 0; q < Q; ++q) {
    legendre_all(K + 1, bp.grid.x[q], L.data(), dL.data());
    for (int k = 1; k <= K; ++k) {
      bp.phi(q, k - 1) = L[k - 1] - L[k + 1];
      bp.dphi(q, k - 1) = dL[k - 1] - dL[k + 1];
    }
  }

  // Quadrature assembly; integrands are polynomials within the rule's
  // exactness range. M and A are symmetrized, S is skew-symmetrized, to
  // remove summation-order roundoff from the exact symmetries.
  bp.M = Mat(K, K);
  bp.S = Mat(K, K);
  bp.A = Mat(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      double m = 0.0, s = 0.0, a = 0.0;
      for (int q = 0; q < Q; ++q) {
        m += bp.grid.w[q] * bp.phi(q, i) * bp.phi(q, j);
        s += bp.grid.w[q] * bp.phi(q, i) * bp.dphi(q, j);
        a += bp.grid.w[q] * bp.dphi(q, i) * bp.dphi(q, j);
      }
      bp.M(i, j) = m;
      bp.S(i, j) = s;
      bp.A(i, j) = a;
    }
  }
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < i; ++j) {
      const double m = 0.5 * (bp.M(i, j) + bp.M(j, i));
      bp.M(i, j) = bp.M(j, i) = m;
      const double a = 0.5 * (bp.A(i, j) + bp.A(j, i));
      bp.A(i, j) = bp.A(j, i) = a;
      const double s = 0.5 * (bp.S(i, j) - bp.S(j, i));
      bp.S(i, j) = s;
      bp.S(j, i) = -s;
    }
    bp.S(i, i) = 0.0;
  }

  bp.mode_table.resize(K);
  for (int k = 0; k < K; ++k) bp.mode_table[k].k = k + 1;

  bp.finalize();
  return bp;
}

Baseplate build_fourier2d_baseplate(int N, int K_cut) {
  require(K_cut >= 1, "build_fourier2d_baseplate: K_cut must be >= 1");
  require(N % 2 == 0, "build_fourier2d_baseplate: N must be even");
  require(N >= 3 * K_cut, "build_fourier2d_baseplate: need N >= 3*K_cut (aliasing risk)");
  Baseplate bp;
  bp.family = Family::fourier_2d;
  bp.N = N;
  bp.dealias_cutoff = K_cut;
  bp.K = (2 * K_cut + 1) * (2 * K_cut + 1);

  bp.grid.dim = 2;
  const double h = kTwoPi / N;
  bp.grid.x.resize(static_cast<size_t>(N) * N);
  bp.grid.y.resize(static_cast<size_t>(N) * N);
  bp.grid.w.assign(static_cast<size_t>(N) * N, h * h);
  for (int ix = 0; ix < N; ++ix)
    for (int iy = 0; iy < N; ++iy) {
      bp.grid.x[static_cast<size_t>(ix) * N + iy] = ix * h;
      bp.grid.y[static_cast<size_t>(ix) * N + iy] = iy * h;
    }

  const int m = 2 * K_cut + 1;
  bp.Wc = CMat(N, m);
  for (int q = 0; q < N; ++q)
    for (int ji = 0; ji < m; ++ji) {
      const int j = ji - K_cut;
      const double th = j * (q * h);
      bp.Wc(q, ji) = std::complex<double>(std::cos(th), std::sin(th));
    }

  // Packing: DC first as one real, then lexicographic (j,l) over the
  // half-plane {j>0} united with {j=0, l>0}; re/im per representative.
  bp.mode_table.clear();
  bp.mode_table.reserve(bp.K);
  bp.mode_table.push_back({0, 0, 0, false});
  auto push_pair = [&bp](int j, int l) {
    bp.mode_table.push_back({0, j, l, false});
    bp.mode_table.push_back({0, j, l, true});
  };
  for (int l = 1; l <= K_cut; ++l) push_pair(0, l);
  for (int j = 1; j <= K_cut; ++j)
    for (int l = -K_cut; l <= K_cut; ++l) push_pair(j, l);
  require(static_cast<int>(bp.mode_table.size()) == bp.K,
          "fourier packing size mismatch");

  bp.finalize();
  return bp;
}

Baseplate build_cosine2d_baseplate(int N, int K_cut) {
  require(K_cut >= 1, "build_cosine2d_baseplate: K_cut must be >= 1");
  require(N % 2 == 1, "build_cosine2d_baseplate: N must be odd");
  require(K_cut <= (N - 1) / 3, "build_cosine2d_baseplate: need K_cut <= (N-1)/3");
  Baseplate bp;
  bp.family = Family::cosine_2d;
  bp.N = N;
  bp.dealias_cutoff = K_cut;
  bp.K = (K_cut + 1) * (K_cut + 1);

  const int M1 = N - 1;
  const double h = 1.0 / M1;
  bp.w1d.assign(N, h);
  bp.w1d[0] = 0.5 * h;
  bp.w1d[N - 1] = 0.5 * h;

  bp.grid.dim = 2;
  bp.grid.x.resize(static_cast<size_t>(N) * N);
  bp.grid.y.resize(static_cast<size_t>(N) * N);
  bp.grid.w.resize(static_cast<size_t>(N) * N);
  for (int ix = 0; ix < N; ++ix)
    for (int iy = 0; iy < N; ++iy) {
      const size_t q = static_cast<size_t>(ix) * N + iy;
      bp.grid.x[q] = ix * h;
      bp.grid.y[q] = iy * h;
      bp.grid.w[q] = bp.w1d[ix] * bp.w1d[iy];
    }

  bp.Cx = Mat(N, K_cut + 1);
  for (int q = 0; q < N; ++q)
    for (int j = 0; j <= K_cut; ++j) bp.Cx(q, j) = std::cos(kPi * j * (q * h));

  bp.cos_norm.assign(K_cut + 1, 0.5);
  bp.cos_norm[0] = 1.0;

  bp.mode_table.clear();
  bp.mode_table.reserve(bp.K);
  for (int j = 0; j <= K_cut; ++j)
    for (int l = 0; l <= K_cut; ++l) bp.mode_table.push_back({0, j, l, false});

  bp.finalize();
  return bp;
}

}  // namespace blockpde
