#define EIGEN_DONT_PARALLELIZE
#include "exface/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace exface::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::kParallel};

// Below this many multiply-adds a product is not worth splitting across threads.
constexpr double kParallelMinMacs = 2.0e6;

template <typename T>
void check_shapes(Op op_a, Op op_b, ConstMatRef<T> a, ConstMatRef<T> b, MatRef<T> c) {
  const int m = op_a == Op::kNone ? a.rows : a.cols;
  const int ka = op_a == Op::kNone ? a.cols : a.rows;
  const int kb = op_b == Op::kNone ? b.rows : b.cols;
  const int n = op_b == Op::kNone ? b.cols : b.rows;
  if (m != c.rows || n != c.cols || ka != kb) {
    throw std::invalid_argument("gemm shape mismatch: op(A) " + std::to_string(m) + "x" +
                                std::to_string(ka) + ", op(B) " + std::to_string(kb) + "x" +
                                std::to_string(n) + ", C " + std::to_string(c.rows) + "x" +
                                std::to_string(c.cols));
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMut = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MapConst = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T, typename LhsExpr, typename RhsExpr>
void panel_product(const LhsExpr& lhs, const RhsExpr& rhs, T alpha, T beta, MapMut<T>& c, int r0,
                   int rows) {
  auto block = c.middleRows(r0, rows);
  if (beta == T(0)) {
    block.noalias() = alpha * (lhs.middleRows(r0, rows) * rhs);
  } else {
    if (beta != T(1)) block *= beta;
    block.noalias() += alpha * (lhs.middleRows(r0, rows) * rhs);
  }
}

template <typename T, typename LhsExpr, typename RhsExpr>
void split_product(const LhsExpr& lhs, const RhsExpr& rhs, T alpha, T beta, MapMut<T>& c, int k) {
  const int m = static_cast<int>(c.rows());
  const double macs = static_cast<double>(m) * static_cast<double>(c.cols()) * k;
  int workers = 1;
#ifdef _OPENMP
  if (macs >= kParallelMinMacs && !omp_in_parallel()) workers = omp_get_max_threads();
#endif
  if (workers <= 1 || m < 2 * workers) {
    panel_product<T>(lhs, rhs, alpha, beta, c, 0, m);
    return;
  }
  const int chunk = (m + workers - 1) / workers;
#pragma omp parallel for num_threads(workers) schedule(static)
  for (int w = 0; w < workers; ++w) {
    const int r0 = w * chunk;
    const int rows = std::min(chunk, m - r0);
    if (rows > 0) panel_product<T>(lhs, rhs, alpha, beta, c, r0, rows);
  }
}

}  // namespace

Backend active_backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

int max_threads() {
  if (g_backend == Backend::kReference) return 1;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c) {
  check_shapes(op_a, op_b, a, b, c);
  const int k = op_a == Op::kNone ? a.cols : a.rows;
  for (int i = 0; i < c.rows; ++i) {
    for (int j = 0; j < c.cols; ++j) {
      T acc = T(0);
      for (int p = 0; p < k; ++p) {
        const T av = op_a == Op::kNone ? a(i, p) : a(p, i);
        const T bv = op_b == Op::kNone ? b(p, j) : b(j, p);
        acc += av * bv;
      }
      c(i, j) = beta == T(0) ? alpha * acc : alpha * acc + beta * c(i, j);
    }
  }
}

template void gemm<float>(Op, Op, float, ConstMatRef<float>, ConstMatRef<float>, float, MatRef<float>);
template void gemm<double>(Op, Op, double, ConstMatRef<double>, ConstMatRef<double>, double,
                           MatRef<double>);

}  // namespace reference

namespace parallel {

template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c) {
  check_shapes(op_a, op_b, a, b, c);
  if (c.rows == 0 || c.cols == 0) return;
  const int k = op_a == Op::kNone ? a.cols : a.rows;
  MapConst<T> am(a.data, a.rows, a.cols, Eigen::OuterStride<>(a.ld));
  MapConst<T> bm(b.data, b.rows, b.cols, Eigen::OuterStride<>(b.ld));
  MapMut<T> cm(c.data, c.rows, c.cols, Eigen::OuterStride<>(c.ld));
  if (k == 0) {
    if (beta == T(0)) {
      cm.setZero();
    } else {
      cm *= beta;
    }
    return;
  }
  if (op_a == Op::kNone && op_b == Op::kNone) {
    split_product<T>(am, bm, alpha, beta, cm, k);
  } else if (op_a == Op::kNone) {
    split_product<T>(am, bm.transpose(), alpha, beta, cm, k);
  } else if (op_b == Op::kNone) {
    split_product<T>(am.transpose(), bm, alpha, beta, cm, k);
  } else {
    split_product<T>(am.transpose(), bm.transpose(), alpha, beta, cm, k);
  }
}

template void gemm<float>(Op, Op, float, ConstMatRef<float>, ConstMatRef<float>, float, MatRef<float>);
template void gemm<double>(Op, Op, double, ConstMatRef<double>, ConstMatRef<double>, double,
                           MatRef<double>);

}  // namespace parallel

template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c) {
  if (g_backend == Backend::kReference) {
    reference::gemm(op_a, op_b, alpha, a, b, beta, c);
  } else {
    parallel::gemm(op_a, op_b, alpha, a, b, beta, c);
  }
}

template void gemm<float>(Op, Op, float, ConstMatRef<float>, ConstMatRef<float>, float, MatRef<float>);
template void gemm<double>(Op, Op, double, ConstMatRef<double>, ConstMatRef<double>, double,
                           MatRef<double>);

}  // namespace exface::kernels
