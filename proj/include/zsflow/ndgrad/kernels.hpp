#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace zsflow::nd::kernels {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapC = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using Map = Eigen::Map<RowMat<Real>>;

// C (+)= op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
template <typename Real>
void gemm(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  Map<Real> C(c, M, N);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate)
      C.noalias() += lhs * rhs;
    else
      C.noalias() = lhs * rhs;
  };
  if (!trans_a && !trans_b) run(MapC<Real>(a, M, K), MapC<Real>(b, K, N));
  else if (!trans_a && trans_b) run(MapC<Real>(a, M, K), MapC<Real>(b, N, K).transpose());
  else if (trans_a && !trans_b) run(MapC<Real>(a, K, M).transpose(), MapC<Real>(b, K, N));
  else run(MapC<Real>(a, K, M).transpose(), MapC<Real>(b, N, K).transpose());
}

}  // namespace zsflow::nd::kernels
