#include "durr/ops.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace durr {

namespace {

// ceil(a/b) for b > 0, correct for negative a
inline int64_t ceil_div(int64_t a, int64_t b) { return a >= 0 ? (a + b - 1) / b : a / b; }

// range of ow with 0 <= ow*stride - pad + k*dil < limit, clamped to [0, n)
inline void ow_range(int64_t n, int64_t limit, int64_t stride, int64_t pad, int64_t koff,
                     int64_t& lo, int64_t& hi) {
    lo = std::max<int64_t>(0, ceil_div(pad - koff, stride));
    hi = std::min<int64_t>(n, ceil_div(limit + pad - koff, stride));
    if (hi < lo) hi = lo;
}

template <typename T>
bool should_record(std::initializer_list<const TensorPtr<T>*> inputs) {
    if (!GradMode::enabled()) return false;
    for (const auto* p : inputs)
        if (*p && (*p)->requires_grad) return true;
    return false;
}

template <typename T>
void require_rank(const TensorPtr<T>& t, int rank, const char* op, const char* what) {
    if (t->rank() != rank)
        throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(t->shape));
}

}  // namespace

int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t dilation,
                     int64_t padding) {
    return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

int64_t conv_transpose_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t padding) {
    return (in - 1) * stride - 2 * padding + kernel;
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

// out[b,oc] plane accumulation; serial per output element. With accumulate
// set, adds into `out` (used for gradient passes) instead of initializing.
template <typename T>
void conv2d_forward_kernel(const T* in, const T* w, const T* bias, T* out, int64_t B, int64_t Ci,
                           int64_t H, int64_t W, int64_t Co, int64_t k, int64_t s, int64_t d,
                           int64_t p, int64_t Ho, int64_t Wo, bool accumulate = false) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t oc = 0; oc < Co; ++oc) {
            T* outp = out + (b * Co + oc) * Ho * Wo;
            if (!accumulate) {
                const T bv = bias ? bias[oc] : T(0);
                for (int64_t i = 0; i < Ho * Wo; ++i) outp[i] = bv;
            }
            for (int64_t ic = 0; ic < Ci; ++ic) {
                const T* inp = in + (b * Ci + ic) * H * W;
                const T* wp = w + (oc * Ci + ic) * k * k;
                for (int64_t kh = 0; kh < k; ++kh) {
                    for (int64_t kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        if (wv == T(0)) continue;
                        int64_t lo, hi;
                        ow_range(Wo, W, s, p, kw * d, lo, hi);
                        for (int64_t oh = 0; oh < Ho; ++oh) {
                            const int64_t ih = oh * s - p + kh * d;
                            if (ih < 0 || ih >= H) continue;
                            const T* inrow = inp + ih * W - p + kw * d;
                            T* outrow = outp + oh * Wo;
                            if (s == 1) {
                                for (int64_t ow = lo; ow < hi; ++ow)
                                    outrow[ow] += wv * inrow[ow];
                            } else {
                                for (int64_t ow = lo; ow < hi; ++ow)
                                    outrow[ow] += wv * inrow[ow * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

// gin[b,ic] planes; each plane owned by one thread
template <typename T>
void conv2d_backward_input_kernel(const T* gout, const T* w, T* gin, int64_t B, int64_t Ci,
                                  int64_t H, int64_t W, int64_t Co, int64_t k, int64_t s,
                                  int64_t d, int64_t p, int64_t Ho, int64_t Wo) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t ic = 0; ic < Ci; ++ic) {
            T* ginp = gin + (b * Ci + ic) * H * W;
            for (int64_t oc = 0; oc < Co; ++oc) {
                const T* gp = gout + (b * Co + oc) * Ho * Wo;
                const T* wp = w + (oc * Ci + ic) * k * k;
                for (int64_t kh = 0; kh < k; ++kh) {
                    for (int64_t kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        if (wv == T(0)) continue;
                        int64_t lo, hi;
                        ow_range(Wo, W, s, p, kw * d, lo, hi);
                        for (int64_t oh = 0; oh < Ho; ++oh) {
                            const int64_t ih = oh * s - p + kh * d;
                            if (ih < 0 || ih >= H) continue;
                            T* ginrow = ginp + ih * W - p + kw * d;
                            const T* grow = gp + oh * Wo;
                            if (s == 1) {
                                for (int64_t ow = lo; ow < hi; ++ow)
                                    ginrow[ow] += wv * grow[ow];
                            } else {
                                for (int64_t ow = lo; ow < hi; ++ow)
                                    ginrow[ow * s] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

// gw[oc,ic,kh,kw]; each (oc,ic) filter slice owned by one thread. Row pairs
// are streamed once per kh with all kw taps accumulated locally.
template <typename T>
void conv2d_backward_weight_kernel(const T* gout, const T* in, T* gw, int64_t B, int64_t Ci,
                                   int64_t H, int64_t W, int64_t Co, int64_t k, int64_t s,
                                   int64_t d, int64_t p, int64_t Ho, int64_t Wo) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t oc = 0; oc < Co; ++oc) {
        for (int64_t ic = 0; ic < Ci; ++ic) {
            T acc_buf[64];
            std::vector<T> acc_big;
            T* acc = acc_buf;
            if (k * k > 64) {
                acc_big.assign(static_cast<size_t>(k * k), T(0));
                acc = acc_big.data();
            }
            for (int64_t i = 0; i < k * k; ++i) acc[i] = T(0);
            for (int64_t b = 0; b < B; ++b) {
                const T* gp = gout + (b * Co + oc) * Ho * Wo;
                const T* inp = in + (b * Ci + ic) * H * W;
                for (int64_t kh = 0; kh < k; ++kh) {
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        const int64_t ih = oh * s - p + kh * d;
                        if (ih < 0 || ih >= H) continue;
                        const T* grow = gp + oh * Wo;
                        const T* base = inp + ih * W - p;
                        for (int64_t kw = 0; kw < k; ++kw) {
                            int64_t lo, hi;
                            ow_range(Wo, W, s, p, kw * d, lo, hi);
                            const T* inrow = base + kw * d;
                            T sum = T(0);
                            if (s == 1) {
                                // eight fixed accumulation lanes so the strict-FP
                                // reduction still vectorizes; order is fixed and
                                // thread-count independent
                                T lanes[8] = {T(0), T(0), T(0), T(0),
                                              T(0), T(0), T(0), T(0)};
                                int64_t ow = lo;
                                for (; ow + 8 <= hi; ow += 8)
                                    for (int l = 0; l < 8; ++l)
                                        lanes[l] += grow[ow + l] * inrow[ow + l];
                                for (; ow < hi; ++ow) sum += grow[ow] * inrow[ow];
                                for (int l = 0; l < 8; ++l) sum += lanes[l];
                            } else {
                                for (int64_t ow = lo; ow < hi; ++ow)
                                    sum += grow[ow] * inrow[ow * s];
                            }
                            acc[kh * k + kw] += sum;
                        }
                    }
                }
            }
            T* gwp = gw + (oc * Ci + ic) * k * k;
            for (int64_t i = 0; i < k * k; ++i) gwp[i] += acc[i];
        }
    }
}

template <typename T>
void sum_per_channel_kernel(const T* gout, T* gb, int64_t B, int64_t C, int64_t plane) {
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
        T acc = T(0);
        for (int64_t b = 0; b < B; ++b) {
            const T* gp = gout + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) acc += gp[i];
        }
        gb[c] += acc;
    }
}

}  // namespace

template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, int stride, int dilation, int padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    if (bias) require_rank(bias, 1, "conv2d", "bias");
    if (stride < 1 || dilation < 1 || padding < 0)
        throw ValueError("conv2d: stride/dilation must be >= 1 and padding >= 0");
    const int64_t B = input->dim(0), Ci = input->dim(1), H = input->dim(2), W = input->dim(3);
    const int64_t Co = weight->dim(0), k = weight->dim(2);
    if (weight->dim(2) != weight->dim(3))
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(weight->shape));
    if (weight->dim(1) != Ci)
        throw ShapeError("conv2d: input has " + std::to_string(Ci) +
                         " channels but weight expects " + std::to_string(weight->dim(1)));
    if (bias && bias->dim(0) != Co)
        throw ShapeError("conv2d: bias size " + std::to_string(bias->dim(0)) +
                         " != out channels " + std::to_string(Co));
    const int64_t Ho = conv_out_dim(H, k, stride, dilation, padding);
    const int64_t Wo = conv_out_dim(W, k, stride, dilation, padding);
    if (Ho <= 0 || Wo <= 0)
        throw ShapeError("conv2d: empty output for input " + shape_str(input->shape) +
                         ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                         ", dilation " + std::to_string(dilation));

    auto out = zeros<T>({B, Co, Ho, Wo});
    conv2d_forward_kernel(input->data.data(), weight->data.data(),
                          bias ? bias->data.data() : nullptr, out->data.data(), B, Ci, H, W, Co,
                          k, stride, dilation, padding, Ho, Wo);

    if (should_record<T>({&input, &weight, &bias})) {
        out->requires_grad = true;
        out->parents = {input, weight};
        if (bias) out->parents.push_back(bias);
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        Tensor<T>* pw = weight.get();
        Tensor<T>* pb = bias ? bias.get() : nullptr;
        const int64_t s = stride, d = dilation, p = padding;
        out->backward_fn = [=]() {
            const T* g = op->grad_ptr();
            if (px->requires_grad)
                conv2d_backward_input_kernel(g, pw->data.data(), px->grad_ptr(), B, Ci, H, W, Co,
                                             k, s, d, p, Ho, Wo);
            if (pw->requires_grad)
                conv2d_backward_weight_kernel(g, px->data.data(), pw->grad_ptr(), B, Ci, H, W,
                                              Co, k, s, d, p, Ho, Wo);
            if (pb && pb->requires_grad)
                sum_per_channel_kernel(g, pb->grad_ptr(), B, Co, Ho * Wo);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d_transpose
//
// Same kernels as conv2d with the roles of the two sides swapped: forward is
// the conv backward-input pass plus bias, backward-input is the conv forward
// pass, backward-weight swaps the operand feeding each side.

template <typename T>
TensorPtr<T> conv2d_transpose(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                              const TensorPtr<T>& bias, int stride, int padding) {
    require_rank(input, 4, "conv2d_transpose", "input");
    require_rank(weight, 4, "conv2d_transpose", "weight");
    if (bias) require_rank(bias, 1, "conv2d_transpose", "bias");
    if (stride < 1 || padding < 0)
        throw ValueError("conv2d_transpose: stride must be >= 1 and padding >= 0");
    const int64_t B = input->dim(0), Co = input->dim(1), Hi = input->dim(2), Wi = input->dim(3);
    const int64_t k = weight->dim(2), Ci = weight->dim(1);
    if (weight->dim(2) != weight->dim(3))
        throw ShapeError("conv2d_transpose: kernel must be square, got " +
                         shape_str(weight->shape));
    if (weight->dim(0) != Co)
        throw ShapeError("conv2d_transpose: input has " + std::to_string(Co) +
                         " channels but weight expects " + std::to_string(weight->dim(0)));
    if (bias && bias->dim(0) != Ci)
        throw ShapeError("conv2d_transpose: bias size " + std::to_string(bias->dim(0)) +
                         " != out channels " + std::to_string(Ci));
    const int64_t Ho = conv_transpose_out_dim(Hi, k, stride, padding);
    const int64_t Wo = conv_transpose_out_dim(Wi, k, stride, padding);
    if (Ho <= 0 || Wo <= 0)
        throw ShapeError("conv2d_transpose: empty output for input " + shape_str(input->shape));

    auto out = zeros<T>({B, Ci, Ho, Wo});
    // bias fill then scatter-accumulate, one (b, ci) plane per thread
    {
        const T* in = input->data.data();
        const T* w = weight->data.data();
        const T* bv = bias ? bias->data.data() : nullptr;
        T* o = out->data.data();
        const int64_t s = stride, p = padding;
#pragma omp parallel for collapse(2) schedule(static)
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t ci = 0; ci < Ci; ++ci) {
                T* outp = o + (b * Ci + ci) * Ho * Wo;
                const T fill = bv ? bv[ci] : T(0);
                for (int64_t i = 0; i < Ho * Wo; ++i) outp[i] = fill;
                for (int64_t co = 0; co < Co; ++co) {
                    const T* inp = in + (b * Co + co) * Hi * Wi;
                    const T* wp = w + (co * Ci + ci) * k * k;
                    for (int64_t kh = 0; kh < k; ++kh) {
                        for (int64_t kw = 0; kw < k; ++kw) {
                            const T wv = wp[kh * k + kw];
                            if (wv == T(0)) continue;
                            int64_t lo, hi;
                            ow_range(Wi, Wo, s, p, kw, lo, hi);
                            for (int64_t ih = 0; ih < Hi; ++ih) {
                                const int64_t oh = ih * s - p + kh;
                                if (oh < 0 || oh >= Ho) continue;
                                T* outrow = outp + oh * Wo - p + kw;
                                const T* inrow = inp + ih * Wi;
                                for (int64_t iw = lo; iw < hi; ++iw)
                                    outrow[iw * s] += wv * inrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }

    if (should_record<T>({&input, &weight, &bias})) {
        out->requires_grad = true;
        out->parents = {input, weight};
        if (bias) out->parents.push_back(bias);
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        Tensor<T>* pw = weight.get();
        Tensor<T>* pb = bias ? bias.get() : nullptr;
        const int64_t s = stride, p = padding;
        out->backward_fn = [=]() {
            const T* g = op->grad_ptr();
            // d/d input: ordinary convolution of the upstream gradient
            if (px->requires_grad)
                conv2d_forward_kernel<T>(g, pw->data.data(), static_cast<const T*>(nullptr),
                                         px->grad_ptr(), B, Ci, Ho, Wo, Co, k, s, 1, p, Hi, Wi,
                                         /*accumulate=*/true);
            if (pw->requires_grad)
                conv2d_backward_weight_kernel<T>(px->data.data(), g, pw->grad_ptr(), B, Ci, Ho,
                                                 Wo, Co, k, s, 1, p, Hi, Wi);
            if (pb && pb->requires_grad)
                sum_per_channel_kernel(g, pb->grad_ptr(), B, Ci, Ho * Wo);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& input) {
    const int64_t n = input->size();
    auto out = zeros<T>(input->shape);
    const T* x = input->data.data();
    T* y = out->data.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, n]() {
            const T* g = op->grad_ptr();
            const T* x = px->data.data();
            T* gx = px->grad_ptr();
#pragma omp parallel for schedule(static) if (n > 16384)
            for (int64_t i = 0; i < n; ++i)
                if (x[i] > T(0)) gx[i] += g[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> prelu(const TensorPtr<T>& input, const TensorPtr<T>& slope) {
    if (!slope) throw ValueError("prelu: slope tensor required");
    if (input->rank() < 2)
        throw ShapeError("prelu: input must have a channel axis, got shape " +
                         shape_str(input->shape));
    const int64_t C = input->dim(1);
    if (slope->rank() != 1 || slope->dim(0) != C)
        throw ShapeError("prelu: slope shape " + shape_str(slope->shape) +
                         " does not match " + std::to_string(C) + " channels");
    const int64_t B = input->dim(0);
    int64_t plane = 1;
    for (int i = 2; i < input->rank(); ++i) plane *= input->dim(i);

    auto out = zeros<T>(input->shape);
    {
        const T* x = input->data.data();
        const T* a = slope->data.data();
        T* y = out->data.data();
#pragma omp parallel for collapse(2) schedule(static) if (B * C * plane > 16384)
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T av = a[c];
                const T* xp = x + (b * C + c) * plane;
                T* yp = y + (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i)
                    yp[i] = xp[i] > T(0) ? xp[i] : av * xp[i];
            }
    }

    if (should_record<T>({&input, &slope})) {
        out->requires_grad = true;
        out->parents = {input, slope};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        Tensor<T>* pa = slope.get();
        out->backward_fn = [op, px, pa, B, C, plane]() {
            const T* g = op->grad_ptr();
            const T* x = px->data.data();
            const T* a = pa->data.data();
            if (px->requires_grad) {
                T* gx = px->grad_ptr();
#pragma omp parallel for collapse(2) schedule(static) if (B * C * plane > 16384)
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        const T av = a[c];
                        const int64_t off = (b * C + c) * plane;
                        for (int64_t i = 0; i < plane; ++i)
                            gx[off + i] += g[off + i] * (x[off + i] > T(0) ? T(1) : av);
                    }
            }
            if (pa->requires_grad) {
                T* ga = pa->grad_ptr();
#pragma omp parallel for schedule(static)
                for (int64_t c = 0; c < C; ++c) {
                    T acc = T(0);
                    for (int64_t b = 0; b < B; ++b) {
                        const int64_t off = (b * C + c) * plane;
                        for (int64_t i = 0; i < plane; ++i)
                            if (x[off + i] <= T(0)) acc += g[off + i] * x[off + i];
                    }
                    ga[c] += acc;
                }
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> activation(const TensorPtr<T>& input, Activation kind, const TensorPtr<T>& slope) {
    if (kind == Activation::Relu) {
        if (slope) throw ValueError("activation: relu takes no slope parameter");
        return relu(input);
    }
    return prelu(input, slope);
}

// ---------------------------------------------------------------------------
// pooling / dense / pointwise

template <typename T>
TensorPtr<T> global_avg_pool(const TensorPtr<T>& input) {
    require_rank(input, 4, "global_avg_pool", "input");
    const int64_t B = input->dim(0), C = input->dim(1), plane = input->dim(2) * input->dim(3);
    auto out = zeros<T>({B, C});
    const T* x = input->data.data();
    T* y = out->data.data();
    const T inv = T(1) / static_cast<T>(plane);
    for (int64_t bc = 0; bc < B * C; ++bc) {
        T acc = T(0);
        const T* xp = x + bc * plane;
        for (int64_t i = 0; i < plane; ++i) acc += xp[i];
        y[bc] = acc * inv;
    }

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, B, C, plane, inv]() {
            const T* g = op->grad_ptr();
            T* gx = px->grad_ptr();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const T gv = g[bc] * inv;
                T* gp = gx + bc * plane;
                for (int64_t i = 0; i < plane; ++i) gp[i] += gv;
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> dense(const TensorPtr<T>& input, const TensorPtr<T>& weight,
                   const TensorPtr<T>& bias) {
    require_rank(input, 2, "dense", "input");
    require_rank(weight, 2, "dense", "weight");
    const int64_t B = input->dim(0), In = input->dim(1);
    const int64_t Out = weight->dim(0);
    if (weight->dim(1) != In)
        throw ShapeError("dense: input features " + std::to_string(In) +
                         " != weight columns " + std::to_string(weight->dim(1)));
    if (bias) {
        require_rank(bias, 1, "dense", "bias");
        if (bias->dim(0) != Out)
            throw ShapeError("dense: bias size " + std::to_string(bias->dim(0)) +
                             " != out features " + std::to_string(Out));
    }

    auto out = zeros<T>({B, Out});
    {
        const T* x = input->data.data();
        const T* w = weight->data.data();
        const T* bv = bias ? bias->data.data() : nullptr;
        T* y = out->data.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t o = 0; o < Out; ++o) {
                T acc = bv ? bv[o] : T(0);
                const T* xp = x + b * In;
                const T* wp = w + o * In;
                for (int64_t i = 0; i < In; ++i) acc += xp[i] * wp[i];
                y[b * Out + o] = acc;
            }
    }

    if (should_record<T>({&input, &weight, &bias})) {
        out->requires_grad = true;
        out->parents = {input, weight};
        if (bias) out->parents.push_back(bias);
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        Tensor<T>* pw = weight.get();
        Tensor<T>* pb = bias ? bias.get() : nullptr;
        out->backward_fn = [=]() {
            const T* g = op->grad_ptr();
            const T* x = px->data.data();
            const T* w = pw->data.data();
            if (px->requires_grad) {
                T* gx = px->grad_ptr();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t o = 0; o < Out; ++o) {
                        const T gv = g[b * Out + o];
                        const T* wp = w + o * In;
                        T* gxp = gx + b * In;
                        for (int64_t i = 0; i < In; ++i) gxp[i] += gv * wp[i];
                    }
            }
            if (pw->requires_grad) {
                T* gw = pw->grad_ptr();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t o = 0; o < Out; ++o) {
                        const T gv = g[b * Out + o];
                        const T* xp = x + b * In;
                        T* gwp = gw + o * In;
                        for (int64_t i = 0; i < In; ++i) gwp[i] += gv * xp[i];
                    }
            }
            if (pb && pb->requires_grad) {
                T* gb = pb->grad_ptr();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t o = 0; o < Out; ++o) gb[o] += g[b * Out + o];
            }
        };
    }
    return out;
}

namespace {

template <typename T, typename Fwd, typename Bwd>
TensorPtr<T> pointwise_unary(const TensorPtr<T>& input, Fwd fwd, Bwd dydx_from_y) {
    const int64_t n = input->size();
    auto out = zeros<T>(input->shape);
    const T* x = input->data.data();
    T* y = out->data.data();
    for (int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, n, dydx_from_y]() {
            const T* g = op->grad_ptr();
            const T* y = op->data.data();
            T* gx = px->grad_ptr();
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * dydx_from_y(y[i]);
        };
    }
    return out;
}

}  // namespace

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& input) {
    return pointwise_unary(
        input, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T y) { return y * (T(1) - y); });
}

template <typename T>
TensorPtr<T> tanh_op(const TensorPtr<T>& input) {
    return pointwise_unary(
        input, [](T v) { return std::tanh(v); }, [](T y) { return T(1) - y * y; });
}

namespace {

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
    if (a->shape != b->shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
}

}  // namespace

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(a, b, "add");
    const int64_t n = a->size();
    auto out = zeros<T>(a->shape);
    const T* pa = a->data.data();
    const T* pb = b->data.data();
    T* y = out->data.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] + pb[i];

    if (should_record<T>({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor<T>* op = out.get();
        Tensor<T>* ta = a.get();
        Tensor<T>* tb = b.get();
        out->backward_fn = [op, ta, tb, n]() {
            const T* g = op->grad_ptr();
            if (ta->requires_grad) {
                T* ga = ta->grad_ptr();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (tb->requires_grad) {
                T* gb = tb->grad_ptr();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(a, b, "sub");
    const int64_t n = a->size();
    auto out = zeros<T>(a->shape);
    const T* pa = a->data.data();
    const T* pb = b->data.data();
    T* y = out->data.data();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] - pb[i];

    if (should_record<T>({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor<T>* op = out.get();
        Tensor<T>* ta = a.get();
        Tensor<T>* tb = b.get();
        out->backward_fn = [op, ta, tb, n]() {
            const T* g = op->grad_ptr();
            if (ta->requires_grad) {
                T* ga = ta->grad_ptr();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (tb->requires_grad) {
                T* gb = tb->grad_ptr();
                for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same_shape(a, b, "mul");
    const int64_t n = a->size();
    auto out = zeros<T>(a->shape);
    const T* pa = a->data.data();
    const T* pb = b->data.data();
    T* y = out->data.data();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] * pb[i];

    if (should_record<T>({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor<T>* op = out.get();
        Tensor<T>* ta = a.get();
        Tensor<T>* tb = b.get();
        out->backward_fn = [op, ta, tb, n]() {
            const T* g = op->grad_ptr();
            if (ta->requires_grad) {
                T* ga = ta->grad_ptr();
                const T* vb = tb->data.data();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
            }
            if (tb->requires_grad) {
                T* gb = tb->grad_ptr();
                const T* va = ta->data.data();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& a, T factor) {
    const int64_t n = a->size();
    auto out = zeros<T>(a->shape);
    const T* pa = a->data.data();
    T* y = out->data.data();
    for (int64_t i = 0; i < n; ++i) y[i] = pa[i] * factor;

    if (should_record<T>({&a})) {
        out->requires_grad = true;
        out->parents = {a};
        Tensor<T>* op = out.get();
        Tensor<T>* ta = a.get();
        out->backward_fn = [op, ta, n, factor]() {
            const T* g = op->grad_ptr();
            T* ga = ta->grad_ptr();
            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> slice_cols(const TensorPtr<T>& input, int64_t from, int64_t to) {
    require_rank(input, 2, "slice_cols", "input");
    const int64_t B = input->dim(0), F = input->dim(1);
    if (from < 0 || to > F || from >= to)
        throw ShapeError("slice_cols: invalid range [" + std::to_string(from) + ", " +
                         std::to_string(to) + ") for " + std::to_string(F) + " columns");
    const int64_t n = to - from;
    auto out = zeros<T>({B, n});
    const T* x = input->data.data();
    T* y = out->data.data();
    for (int64_t b = 0; b < B; ++b)
        std::memcpy(y + b * n, x + b * F + from, static_cast<size_t>(n) * sizeof(T));

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, B, F, from, n]() {
            const T* g = op->grad_ptr();
            T* gx = px->grad_ptr();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < n; ++i) gx[b * F + from + i] += g[b * n + i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_rank(a, 4, "concat_channels", "first input");
    require_rank(b, 4, "concat_channels", "second input");
    if (a->dim(0) != b->dim(0) || a->dim(2) != b->dim(2) || a->dim(3) != b->dim(3))
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    const int64_t B = a->dim(0), Ca = a->dim(1), Cb = b->dim(1);
    const int64_t plane = a->dim(2) * a->dim(3);
    auto out = zeros<T>({B, Ca + Cb, a->dim(2), a->dim(3)});
    T* y = out->data.data();
    const T* pa = a->data.data();
    const T* pb = b->data.data();
    for (int64_t i = 0; i < B; ++i) {
        std::memcpy(y + i * (Ca + Cb) * plane, pa + i * Ca * plane,
                    static_cast<size_t>(Ca * plane) * sizeof(T));
        std::memcpy(y + (i * (Ca + Cb) + Ca) * plane, pb + i * Cb * plane,
                    static_cast<size_t>(Cb * plane) * sizeof(T));
    }

    if (should_record<T>({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor<T>* op = out.get();
        Tensor<T>* ta = a.get();
        Tensor<T>* tb = b.get();
        out->backward_fn = [op, ta, tb, B, Ca, Cb, plane]() {
            const T* g = op->grad_ptr();
            if (ta->requires_grad) {
                T* ga = ta->grad_ptr();
                for (int64_t i = 0; i < B; ++i) {
                    const T* gp = g + i * (Ca + Cb) * plane;
                    T* gap = ga + i * Ca * plane;
                    for (int64_t j = 0; j < Ca * plane; ++j) gap[j] += gp[j];
                }
            }
            if (tb->requires_grad) {
                T* gb = tb->grad_ptr();
                for (int64_t i = 0; i < B; ++i) {
                    const T* gp = g + (i * (Ca + Cb) + Ca) * plane;
                    T* gbp = gb + i * Cb * plane;
                    for (int64_t j = 0; j < Cb * plane; ++j) gbp[j] += gp[j];
                }
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> mse_loss(const TensorPtr<T>& pred, const TensorPtr<T>& target) {
    require_same_shape(pred, target, "mse_loss");
    const int64_t n = pred->size();
    const T* p = pred->data.data();
    const T* t = target->data.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    auto out = make_tensor<T>({1}, {static_cast<T>(acc / static_cast<double>(n))});

    if (should_record<T>({&pred})) {
        out->requires_grad = true;
        out->parents = {pred, target};
        Tensor<T>* op = out.get();
        Tensor<T>* pp = pred.get();
        Tensor<T>* pt = target.get();
        out->backward_fn = [op, pp, pt, n]() {
            const T g = op->grad_ptr()[0];
            if (!pp->requires_grad) return;
            const T* p = pp->data.data();
            const T* t = pt->data.data();
            T* gp = pp->grad_ptr();
            const T f = g * T(2) / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) gp[i] += f * (p[i] - t[i]);
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> sum_all(const TensorPtr<T>& input) {
    const int64_t n = input->size();
    const T* x = input->data.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    auto out = make_tensor<T>({1}, {static_cast<T>(acc)});

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, n]() {
            const T g = op->grad_ptr()[0];
            T* gx = px->grad_ptr();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return out;
}

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_step(const TensorPtr<T>& x, const TensorPtr<T>& h,
                                                const TensorPtr<T>& c, const TensorPtr<T>& w_ih,
                                                const TensorPtr<T>& w_hh,
                                                const TensorPtr<T>& bias) {
    require_rank(x, 2, "lstm_step", "x");
    require_rank(h, 2, "lstm_step", "h");
    require_rank(c, 2, "lstm_step", "c");
    const int64_t H = h->dim(1);
    if (c->dim(1) != H || w_hh->dim(1) != H || w_ih->dim(0) != 4 * H || w_hh->dim(0) != 4 * H ||
        (bias && bias->dim(0) != 4 * H))
        throw ShapeError("lstm_step: hidden width mismatch (h " + shape_str(h->shape) + ", c " +
                         shape_str(c->shape) + ", w_ih " + shape_str(w_ih->shape) + ", w_hh " +
                         shape_str(w_hh->shape) + ")");
    if (w_ih->dim(1) != x->dim(1))
        throw ShapeError("lstm_step: input width " + std::to_string(x->dim(1)) +
                         " != w_ih columns " + std::to_string(w_ih->dim(1)));

    auto gates = add(dense(x, w_ih, bias), dense<T>(h, w_hh, nullptr));
    auto i_gate = sigmoid(slice_cols(gates, 0, H));
    auto f_gate = sigmoid(slice_cols(gates, H, 2 * H));
    auto g_gate = tanh_op(slice_cols(gates, 2 * H, 3 * H));
    auto o_gate = sigmoid(slice_cols(gates, 3 * H, 4 * H));
    auto c_next = add(mul(f_gate, c), mul(i_gate, g_gate));
    auto h_next = mul(o_gate, tanh_op(c_next));
    return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// structural helpers

template <typename T>
TensorPtr<T> pad_replicate(const TensorPtr<T>& input, int top, int bottom, int left, int right) {
    require_rank(input, 4, "pad_replicate", "input");
    if (GradMode::enabled() && input->requires_grad)
        throw ValueError("pad_replicate is not differentiable; wrap calls in NoGradGuard");
    const int64_t B = input->dim(0), C = input->dim(1), H = input->dim(2), W = input->dim(3);
    const int64_t Ho = H + top + bottom, Wo = W + left + right;
    auto out = zeros<T>({B, C, Ho, Wo});
    const T* x = input->data.data();
    T* y = out->data.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* xp = x + bc * H * W;
        T* yp = y + bc * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh) {
            const int64_t ih = std::clamp<int64_t>(oh - top, 0, H - 1);
            for (int64_t ow = 0; ow < Wo; ++ow) {
                const int64_t iw = std::clamp<int64_t>(ow - left, 0, W - 1);
                yp[oh * Wo + ow] = xp[ih * W + iw];
            }
        }
    }
    return out;
}

template <typename T>
TensorPtr<T> crop(const TensorPtr<T>& input, int64_t top, int64_t left, int64_t height,
                  int64_t width) {
    require_rank(input, 4, "crop", "input");
    const int64_t B = input->dim(0), C = input->dim(1), H = input->dim(2), W = input->dim(3);
    if (top < 0 || left < 0 || top + height > H || left + width > W)
        throw ShapeError("crop: window out of bounds for input " + shape_str(input->shape));
    auto out = zeros<T>({B, C, height, width});
    const T* x = input->data.data();
    T* y = out->data.data();
    for (int64_t bc = 0; bc < B * C; ++bc)
        for (int64_t oh = 0; oh < height; ++oh)
            std::memcpy(y + (bc * height + oh) * width, x + (bc * H + top + oh) * W + left,
                        static_cast<size_t>(width) * sizeof(T));

    if (should_record<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor<T>* op = out.get();
        Tensor<T>* px = input.get();
        out->backward_fn = [op, px, B, C, H, W, top, left, height, width]() {
            const T* g = op->grad_ptr();
            T* gx = px->grad_ptr();
            for (int64_t bc = 0; bc < B * C; ++bc)
                for (int64_t oh = 0; oh < height; ++oh) {
                    const T* gp = g + (bc * height + oh) * width;
                    T* gxp = gx + (bc * H + top + oh) * W + left;
                    for (int64_t i = 0; i < width; ++i) gxp[i] += gp[i];
                }
        };
    }
    return out;
}

template <typename T>
void check_finite(const TensorPtr<T>& t, const std::string& what) {
    const T* x = t->data.data();
    const int64_t n = t->size();
    for (int64_t i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(x[i])))
            throw NumericError("non-finite value in " + what + " at flat index " +
                               std::to_string(i));
}

// ---------------------------------------------------------------------------

#define DURR_INSTANTIATE_OPS(T)                                                              \
    template TensorPtr<T> conv2d<T>(const TensorPtr<T>&, const TensorPtr<T>&,               \
                                    const TensorPtr<T>&, int, int, int);                     \
    template TensorPtr<T> conv2d_transpose<T>(const TensorPtr<T>&, const TensorPtr<T>&,     \
                                              const TensorPtr<T>&, int, int);               \
    template TensorPtr<T> relu<T>(const TensorPtr<T>&);                                     \
    template TensorPtr<T> prelu<T>(const TensorPtr<T>&, const TensorPtr<T>&);               \
    template TensorPtr<T> activation<T>(const TensorPtr<T>&, Activation, const TensorPtr<T>&); \
    template TensorPtr<T> global_avg_pool<T>(const TensorPtr<T>&);                          \
    template TensorPtr<T> dense<T>(const TensorPtr<T>&, const TensorPtr<T>&,               \
                                   const TensorPtr<T>&);                                     \
    template TensorPtr<T> sigmoid<T>(const TensorPtr<T>&);                                  \
    template TensorPtr<T> tanh_op<T>(const TensorPtr<T>&);                                  \
    template TensorPtr<T> add<T>(const TensorPtr<T>&, const TensorPtr<T>&);                 \
    template TensorPtr<T> sub<T>(const TensorPtr<T>&, const TensorPtr<T>&);                 \
    template TensorPtr<T> mul<T>(const TensorPtr<T>&, const TensorPtr<T>&);                 \
    template TensorPtr<T> scale<T>(const TensorPtr<T>&, T);                                 \
    template TensorPtr<T> slice_cols<T>(const TensorPtr<T>&, int64_t, int64_t);             \
    template TensorPtr<T> concat_channels<T>(const TensorPtr<T>&, const TensorPtr<T>&);     \
    template TensorPtr<T> mse_loss<T>(const TensorPtr<T>&, const TensorPtr<T>&);            \
    template TensorPtr<T> sum_all<T>(const TensorPtr<T>&);                                  \
    template std::pair<TensorPtr<T>, TensorPtr<T>> lstm_step<T>(                            \
        const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&, \
        const TensorPtr<T>&, const TensorPtr<T>&);                                          \
    template TensorPtr<T> pad_replicate<T>(const TensorPtr<T>&, int, int, int, int);        \
    template TensorPtr<T> crop<T>(const TensorPtr<T>&, int64_t, int64_t, int64_t, int64_t); \
    template void check_finite<T>(const TensorPtr<T>&, const std::string&);

DURR_INSTANTIATE_OPS(float)
DURR_INSTANTIATE_OPS(double)

#undef DURR_INSTANTIATE_OPS

}  // namespace durr
