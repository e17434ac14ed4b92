#include "kernels.hpp"

#include <Eigen/Core>

namespace camc::kernels {
namespace {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void gemm(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    MMap cm(c, ix(m), ix(n));
    if (k == 0) {
        if (!accumulate) cm.setZero();
        return;
    }
    CMap am(a, ix(m), ix(k));
    CMap bm(b, ix(k), ix(n));
    if (accumulate)
        cm.noalias() += am * bm;
    else
        cm.noalias() = am * bm;
}

void gemm_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    MMap cm(c, ix(m), ix(n));
    if (k == 0) {
        if (!accumulate) cm.setZero();
        return;
    }
    CMap am(a, ix(k), ix(m));
    CMap bm(b, ix(k), ix(n));
    if (accumulate)
        cm.noalias() += am.transpose() * bm;
    else
        cm.noalias() = am.transpose() * bm;
}

void gemm_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    MMap cm(c, ix(m), ix(n));
    if (k == 0) {
        if (!accumulate) cm.setZero();
        return;
    }
    CMap am(a, ix(m), ix(k));
    CMap bm(b, ix(n), ix(k));
    if (accumulate)
        cm.noalias() += am * bm.transpose();
    else
        cm.noalias() = am * bm.transpose();
}

}  // namespace camc::kernels
