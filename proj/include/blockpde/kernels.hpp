#pragma once

#include <functional>

#include "blockpde/types.hpp"

// Dense kernels used across the solver. Every kernel exists twice: a plain
// serial implementation under kern::serial (the reference used by tests and
// the benchmark) and the default OpenMP version under kern. The parallel
// versions assign each output element to exactly one thread, so results are
// bitwise identical to the serial path for any thread count.

namespace blockpde::kern {

namespace serial {

// y = A x
void matvec(const Mat& A, const double* x, double* y);
// y = A^T x
void matvec_t(const Mat& A, const double* x, double* y);
// C = A B
void matmul(const Mat& A, const Mat& B, Mat& C);
// C = A B (complex)
void cmatmul(const CMat& A, const CMat& B, CMat& C);
// C = A^H B
void cmatmul_ah(const CMat& A, const CMat& B, CMat& C);
double dot(const Vec& a, const Vec& b);
// sum_i w_i a_i b_i
double dotw(const Vec& w, const Vec& a, const Vec& b);
void apply_pointwise(const std::function<double(double)>& f, const Vec& in,
                     Vec& out);

}  // namespace serial

void matvec(const Mat& A, const double* x, double* y);
void matvec_t(const Mat& A, const double* x, double* y);
void matmul(const Mat& A, const Mat& B, Mat& C);
void cmatmul(const CMat& A, const CMat& B, CMat& C);
void cmatmul_ah(const CMat& A, const CMat& B, CMat& C);
double dot(const Vec& a, const Vec& b);
double dotw(const Vec& w, const Vec& a, const Vec& b);
void apply_pointwise(const std::function<double(double)>& f, const Vec& in,
                     Vec& out);

inline Vec matvec(const Mat& A, const Vec& x) {
  Vec y(A.rows);
  matvec(A, x.data(), y.data());
  return y;
}

inline Vec matvec_t(const Mat& A, const Vec& x) {
  Vec y(A.cols);
  matvec_t(A, x.data(), y.data());
  return y;
}

// Deterministic parallel accumulation: `work(i, acc)` adds sample i's
// contribution into acc. Samples are grouped into fixed-size chunks; chunks
// run in parallel, each summing its samples in index order into a private
// accumulator, and chunk accumulators merge in chunk order. The result does
// not depend on the number of threads.
inline constexpr int kAccumChunk = 32;

void chunked_accumulate(int n, const std::function<void(int, Vec&)>& work,
                        Vec& acc);

namespace serial {
void chunked_accumulate(int n, const std::function<void(int, Vec&)>& work,
                        Vec& acc);
}

}  // namespace blockpde::kern
