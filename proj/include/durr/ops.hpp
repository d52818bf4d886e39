#pragma once

#include <utility>

#include "durr/tensor.hpp"

namespace durr {

// Output spatial size of a strided/dilated convolution.
int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t dilation,
                     int64_t padding);
// Output spatial size of the transposed convolution.
int64_t conv_transpose_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t padding);

// 2-D convolution, NCHW. weight (out_ch, in_ch, k, k), bias (out_ch), zero
// padding. Gather form: every output element is one serial reduction, so the
// result is bit-identical for any thread count.
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, int stride, int dilation, int padding);

// Transposed convolution (fractional stride upsampling). Shares the weight
// layout of the forward convolution it is adjoint to: weight (co, ci, k, k)
// maps an input with co channels onto an output with ci channels, so
// <conv2d(x, w), u> == <x, conv2d_transpose(u, w)> for matched stride/padding.
template <typename T>
TensorPtr<T> conv2d_transpose(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                              const TensorPtr<T>& bias, int stride, int padding);

enum class Activation { Relu, Prelu };

// relu / prelu dispatch per the layer tables. prelu takes one learnable slope
// per channel; passing a slope with relu is an error.
template <typename T>
TensorPtr<T> activation(const TensorPtr<T>& input, Activation kind,
                        const TensorPtr<T>& slope = nullptr);

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& input);

template <typename T>
TensorPtr<T> prelu(const TensorPtr<T>& input, const TensorPtr<T>& slope);

// (B, C, H, W) -> (B, C) spatial mean.
template <typename T>
TensorPtr<T> global_avg_pool(const TensorPtr<T>& input);

// input (B, in), weight (out, in), bias (out) -> input * weight^T + bias.
template <typename T>
TensorPtr<T> dense(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                   const TensorPtr<T>& bias);

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& input);

template <typename T>
TensorPtr<T> tanh_op(const TensorPtr<T>& input);

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& a, T factor);

// Columns [from, to) of a rank-2 tensor.
template <typename T>
TensorPtr<T> slice_cols(const TensorPtr<T>& input, int64_t from, int64_t to);

// Concatenate along the channel axis of NCHW tensors.
template <typename T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b);

// Mean of squared differences over all elements; scalar output. The target
// is treated as a constant (no gradient flows into it).
template <typename T>
TensorPtr<T> mse_loss(const TensorPtr<T>& pred, const TensorPtr<T>& target);

template <typename T>
TensorPtr<T> sum_all(const TensorPtr<T>& input);

// Standard four-gate LSTM cell. x (B, F), h/c (B, H), w_ih (4H, F),
// w_hh (4H, H), bias (4H); gate order i, f, g, o. Returns (h_next, c_next).
template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_step(const TensorPtr<T>& x, const TensorPtr<T>& h,
                                                const TensorPtr<T>& c, const TensorPtr<T>& w_ih,
                                                const TensorPtr<T>& w_hh,
                                                const TensorPtr<T>& bias);

// Edge-replication padding on H/W (non-differentiable; inference helper for
// odd-sized images).
template <typename T>
TensorPtr<T> pad_replicate(const TensorPtr<T>& input, int top, int bottom, int left, int right);

template <typename T>
TensorPtr<T> crop(const TensorPtr<T>& input, int64_t top, int64_t left, int64_t height,
                  int64_t width);

// Throws NumericError naming `what` if any element is non-finite.
template <typename T>
void check_finite(const TensorPtr<T>& t, const std::string& what);

}  // namespace durr
