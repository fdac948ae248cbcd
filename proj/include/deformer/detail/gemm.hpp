#pragma once

#include <cstddef>

// Row-major dense kernels shared by matmul and the fused layers. All of
// them accumulate into `c`.
namespace deformer::detail {

// c[n x m] += a[n x k] * b[k x m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m);

// c[n x k] += a[n x m] * b[k x m]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m);

// c[k x m] += a[n x k]^T * b[n x m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m);

}  // namespace deformer::detail
