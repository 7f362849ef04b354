#pragma once

#include <cstddef>

// Hot inner loops, each in an OpenMP and a serial flavor. The serial versions
// are the reference the tests compare against; kernel_bench times both.
namespace fedsim::kernels {

// C[m x n] = A[m x k] * B[k x n]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);

// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);

// out += w * in, element-wise
void axpy(double w, const double* in, double* out, std::size_t n);
void axpy_serial(double w, const double* in, double* out, std::size_t n);

}  // namespace fedsim::kernels
