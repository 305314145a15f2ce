#include "usamkit/gemm.hpp"

#include <cstddef>

namespace usamkit {

void gemm_nn(int M, int K, int N, const double* A, const double* B,
             double* C) {
  for (size_t i = 0; i < size_t(M) * N; ++i) C[i] = 0.0;
  for (int i = 0; i < M; ++i) {
    double* ci = C + size_t(i) * N;
    const double* ai = A + size_t(i) * K;
    for (int k = 0; k < K; ++k) {
      const double a = ai[k];
      const double* bk = B + size_t(k) * N;
      for (int j = 0; j < N; ++j) ci[j] += a * bk[j];
    }
  }
}

void gemm_tn(int M, int K, int N, const double* A, const double* B,
             double* C) {
  for (size_t i = 0; i < size_t(M) * N; ++i) C[i] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double* ak = A + size_t(k) * M;
    const double* bk = B + size_t(k) * N;
    for (int i = 0; i < M; ++i) {
      double* ci = C + size_t(i) * N;
      const double a = ak[i];
      for (int j = 0; j < N; ++j) ci[j] += a * bk[j];
    }
  }
}

void gemm_nt(int M, int K, int N, const double* A, const double* B,
             double* C) {
  for (int i = 0; i < M; ++i) {
    const double* ai = A + size_t(i) * K;
    for (int j = 0; j < N; ++j) {
      const double* bj = B + size_t(j) * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += ai[k] * bj[k];
      C[size_t(i) * N + j] = acc;
    }
  }
}

}  // namespace usamkit
