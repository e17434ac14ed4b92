#pragma once

// Dense GEMM entry points over row-major real buffers, backed by Eigen.

#include <cstddef>

#include "camc/tensor.hpp"

namespace camc::kernels {

// C = A(m×k) · B(k×n), or C += when accumulate.
void gemm(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate = false);
// C(m×n) (+)= Aᵀ · B with A stored k×m, B stored k×n.
void gemm_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false);
// C(m×n) (+)= A · Bᵀ with A stored m×k, B stored n×k.
void gemm_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate = false);

}  // namespace camc::kernels
