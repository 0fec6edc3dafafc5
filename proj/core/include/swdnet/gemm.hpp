#pragma once

#include <cstddef>

namespace swdnet {

// C[M x N] += A[M x K] * B[K x N], row-major. The ikj order keeps the inner
// loop contiguous so the compiler vectorizes it without reassociating sums;
// each C element is accumulated in a fixed order, which keeps results
// bit-reproducible.
template <typename T>
void gemm_nn(int M, int K, int N, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// out[C x R] = in[R x C]^T
template <typename T>
void transpose(int R, int C, const T* in, T* out) {
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out[static_cast<size_t>(c) * R + r] = in[static_cast<size_t>(r) * C + c];
}

}  // namespace swdnet
