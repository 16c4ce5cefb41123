#pragma once

#include <Eigen/Core>

namespace hcm::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

/// C[m x n] = A[m x k] * B[k x n], all row-major contiguous.
inline void gemm(const double* a, const double* b, double* c,
                 int64_t m, int64_t k, int64_t n) {
    ConstRowMap A(a, m, k);
    ConstRowMap B(b, k, n);
    RowMap C(c, m, n);
    C.noalias() = A * B;
}

/// C += A * B.
inline void gemm_acc(const double* a, const double* b, double* c,
                     int64_t m, int64_t k, int64_t n) {
    ConstRowMap A(a, m, k);
    ConstRowMap B(b, k, n);
    RowMap C(c, m, n);
    C.noalias() += A * B;
}

/// C[m x n] = A^T[m x k] * B[k x n] where A is stored as [k x m].
inline void gemm_at(const double* a, const double* b, double* c,
                    int64_t m, int64_t k, int64_t n) {
    ConstRowMap A(a, k, m);
    ConstRowMap B(b, k, n);
    RowMap C(c, m, n);
    C.noalias() = A.transpose() * B;
}

/// C += A * B^T where B is stored as [n x k].
inline void gemm_bt_acc(const double* a, const double* b, double* c,
                        int64_t m, int64_t k, int64_t n) {
    ConstRowMap A(a, m, k);
    ConstRowMap B(b, n, k);
    RowMap C(c, m, n);
    C.noalias() += A * B.transpose();
}

}  // namespace hcm::detail
