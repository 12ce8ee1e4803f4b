#pragma once

// Dense row-major matrix kernels used by the networks.
//
// Two backends share one interface: `reference` is a plain serial triple loop
// kept as the test oracle, `parallel` is the production path (vectorized GEMM,
// OpenMP row-panel split on large products). The active backend is process-wide
// and selected with ScopedBackend, so a whole model pass can be replayed through
// the reference kernels and compared.

#include <cstddef>

namespace exface::kernels {

template <typename T>
struct MatRef {
  T* data;
  int rows;
  int cols;
  int ld;  // row stride in elements

  T& operator()(int r, int c) const { return data[static_cast<std::ptrdiff_t>(r) * ld + c]; }
};

template <typename T>
struct ConstMatRef {
  const T* data;
  int rows;
  int cols;
  int ld;

  ConstMatRef(const T* d, int r, int c, int stride) : data(d), rows(r), cols(c), ld(stride) {}
  ConstMatRef(MatRef<T> m) : data(m.data), rows(m.rows), cols(m.cols), ld(m.ld) {}  // NOLINT

  const T& operator()(int r, int c) const { return data[static_cast<std::ptrdiff_t>(r) * ld + c]; }
};

template <typename T>
MatRef<T> mat(T* data, int rows, int cols) {
  return {data, rows, cols, cols};
}

template <typename T>
ConstMatRef<T> cmat(const T* data, int rows, int cols) {
  return {data, rows, cols, cols};
}

enum class Op { kNone, kTranspose };

enum class Backend { kParallel, kReference };

Backend active_backend();
void set_backend(Backend b);

class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

/// C = alpha * op(A) * op(B) + beta * C. With beta == 0, C is not read.
template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c);

namespace reference {
template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c);
}

namespace parallel {
template <typename T>
void gemm(Op op_a, Op op_b, T alpha, ConstMatRef<T> a, ConstMatRef<T> b, T beta, MatRef<T> c);
}

/// Worker count the parallel backend will use (1 under the reference backend).
int max_threads();

}  // namespace exface::kernels
