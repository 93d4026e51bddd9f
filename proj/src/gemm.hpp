#pragma once

// Row-major single-precision matrix products backed by Eigen. All routines
// accumulate into C (C += op(A) * op(B)).

namespace pyrseg::detail {

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c);
// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c);
// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c);

}  // namespace pyrseg::detail
