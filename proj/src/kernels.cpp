#include "blockpde/kernels.hpp"

#include <cstring>

namespace blockpde::kern {

// Below this many multiply-adds the OpenMP fork is not worth it.
static constexpr long kParThreshold = 16384;

// Per-output-element helpers shared by the serial and parallel paths.
// noinline pins a single code generation for the inner loop, so both paths
// round (and fuse) identically and results stay bitwise equal.
#define BPDE_NOINLINE __attribute__((noinline))

namespace {

BPDE_NOINLINE double row_dot(const double* r, const double* x, int n) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += r[j] * x[j];
  return s;
}

BPDE_NOINLINE double col_dot(const double* base, const double* x, int rows,
                             int stride) {
  double s = 0.0;
  for (int i = 0; i < rows; ++i) s += base[static_cast<size_t>(i) * stride] * x[i];
  return s;
}

BPDE_NOINLINE void mm_row(const double* a, const Mat& B, double* c) {
  for (int k = 0; k < B.rows; ++k) {
    const double aik = a[k];
    const double* b = B.row(k);
    for (int j = 0; j < B.cols; ++j) c[j] += aik * b[j];
  }
}

BPDE_NOINLINE void cmm_row(const CMat& A, int i, const CMat& B,
                           std::complex<double>* c) {
  for (int k = 0; k < A.cols; ++k) {
    const std::complex<double> aik = A(i, k);
    for (int j = 0; j < B.cols; ++j) c[j] += aik * B(k, j);
  }
}

BPDE_NOINLINE void cmm_ah_row(const CMat& A, int i, const CMat& B,
                              std::complex<double>* c) {
  for (int k = 0; k < A.rows; ++k) {
    const std::complex<double> aki = std::conj(A(k, i));
    for (int j = 0; j < B.cols; ++j) c[j] += aki * B(k, j);
  }
}

}  // namespace

namespace serial {

void matvec(const Mat& A, const double* x, double* y) {
  for (int i = 0; i < A.rows; ++i) y[i] = row_dot(A.row(i), x, A.cols);
}

void matvec_t(const Mat& A, const double* x, double* y) {
  for (int j = 0; j < A.cols; ++j) y[j] = col_dot(A.d.data() + j, x, A.rows, A.cols);
}

void matmul(const Mat& A, const Mat& B, Mat& C) {
  C = Mat(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) mm_row(A.row(i), B, C.row(i));
}

void cmatmul(const CMat& A, const CMat& B, CMat& C) {
  C = CMat(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) cmm_row(A, i, B, &C(i, 0));
}

void cmatmul_ah(const CMat& A, const CMat& B, CMat& C) {
  C = CMat(A.cols, B.cols);
  for (int i = 0; i < A.cols; ++i) cmm_ah_row(A, i, B, &C(i, 0));
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dotw(const Vec& w, const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += w[i] * a[i] * b[i];
  return s;
}

void apply_pointwise(const std::function<double(double)>& f, const Vec& in,
                     Vec& out) {
  out.resize(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
}

void chunked_accumulate(int n, const std::function<void(int, Vec&)>& work,
                        Vec& acc) {
  const int nchunks = (n + kAccumChunk - 1) / kAccumChunk;
  std::vector<Vec> parts(nchunks);
  for (int c = 0; c < nchunks; ++c) {
    parts[c].assign(acc.size(), 0.0);
    const int lo = c * kAccumChunk;
    const int hi = std::min(n, lo + kAccumChunk);
    for (int i = lo; i < hi; ++i) work(i, parts[c]);
  }
  for (int c = 0; c < nchunks; ++c)
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += parts[c][k];
}

}  // namespace serial

void matvec(const Mat& A, const double* x, double* y) {
  if (static_cast<long>(A.rows) * A.cols < kParThreshold) {
    serial::matvec(A, x, y);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.rows; ++i) y[i] = row_dot(A.row(i), x, A.cols);
}

void matvec_t(const Mat& A, const double* x, double* y) {
  if (static_cast<long>(A.rows) * A.cols < kParThreshold) {
    serial::matvec_t(A, x, y);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int j = 0; j < A.cols; ++j) y[j] = col_dot(A.d.data() + j, x, A.rows, A.cols);
}

void matmul(const Mat& A, const Mat& B, Mat& C) {
  if (static_cast<long>(A.rows) * A.cols * B.cols < kParThreshold) {
    serial::matmul(A, B, C);
    return;
  }
  C = Mat(A.rows, B.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.rows; ++i) mm_row(A.row(i), B, C.row(i));
}

void cmatmul(const CMat& A, const CMat& B, CMat& C) {
  if (static_cast<long>(A.rows) * A.cols * B.cols < kParThreshold / 4) {
    serial::cmatmul(A, B, C);
    return;
  }
  C = CMat(A.rows, B.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.rows; ++i) cmm_row(A, i, B, &C(i, 0));
}

void cmatmul_ah(const CMat& A, const CMat& B, CMat& C) {
  if (static_cast<long>(A.rows) * A.cols * B.cols < kParThreshold / 4) {
    serial::cmatmul_ah(A, B, C);
    return;
  }
  C = CMat(A.cols, B.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.cols; ++i) cmm_ah_row(A, i, B, &C(i, 0));
}

double dot(const Vec& a, const Vec& b) { return serial::dot(a, b); }

double dotw(const Vec& w, const Vec& a, const Vec& b) {
  return serial::dotw(w, a, b);
}

void apply_pointwise(const std::function<double(double)>& f, const Vec& in,
                     Vec& out) {
  serial::apply_pointwise(f, in, out);
}

void chunked_accumulate(int n, const std::function<void(int, Vec&)>& work,
                        Vec& acc) {
  const int nchunks = (n + kAccumChunk - 1) / kAccumChunk;
  if (nchunks <= 1) {
    serial::chunked_accumulate(n, work, acc);
    return;
  }
  std::vector<Vec> parts(nchunks);
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < nchunks; ++c) {
    parts[c].assign(acc.size(), 0.0);
    const int lo = c * kAccumChunk;
    const int hi = std::min(n, lo + kAccumChunk);
    for (int i = lo; i < hi; ++i) work(i, parts[c]);
  }
  for (int c = 0; c < nchunks; ++c)
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += parts[c][k];
}

}  // namespace blockpde::kern
