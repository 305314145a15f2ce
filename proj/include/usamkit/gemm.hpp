#pragma once

// Deterministic f64 matrix products with fixed accumulation order (k
// ascending for every output element). No parallel reduction: training
// reproducibility depends on it.

namespace usamkit {

// C(MxN) = A(MxK) * B(KxN)
void gemm_nn(int M, int K, int N, const double* A, const double* B, double* C);

// C(MxN) = A^T * B where A is KxM, B is KxN
void gemm_tn(int M, int K, int N, const double* A, const double* B, double* C);

// C(MxN) = A * B^T where A is MxK, B is NxK
void gemm_nt(int M, int K, int N, const double* A, const double* B, double* C);

}  // namespace usamkit
