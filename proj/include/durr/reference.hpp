#pragma once

#include <cstdint>
#include <vector>

namespace durr::ref {

// Deliberately naive serial kernels. These are the independent oracles the
// test suites compare the OpenMP kernels against, and the baseline side of
// the kernel benchmark. Keep them loop-literal; do not "optimize" them or
// share code with src/ops.cpp.

// Quadruple-loop convolution, NCHW, zero padding.
template <typename T>
std::vector<T> conv2d_naive(const std::vector<T>& in, int64_t B, int64_t Ci, int64_t H,
                            int64_t W, const std::vector<T>& w, int64_t Co, int64_t k,
                            const std::vector<T>& bias, int64_t stride, int64_t dilation,
                            int64_t padding);

// Scatter-add transposed convolution: every input element distributes its
// weighted kernel stamp into the output.
template <typename T>
std::vector<T> conv2d_transpose_naive(const std::vector<T>& in, int64_t B, int64_t Co,
                                      int64_t Hi, int64_t Wi, const std::vector<T>& w,
                                      int64_t Ci, int64_t k, const std::vector<T>& bias,
                                      int64_t stride, int64_t padding);

// Double-loop matrix multiply: out[b, o] = sum_i in[b, i] * w[o, i] + bias[o].
template <typename T>
std::vector<T> dense_naive(const std::vector<T>& in, int64_t B, int64_t In,
                           const std::vector<T>& w, int64_t Out, const std::vector<T>& bias);

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b);

}  // namespace durr::ref
