#include "durr/reference.hpp"

#include <cassert>

namespace durr::ref {

template <typename T>
std::vector<T> conv2d_naive(const std::vector<T>& in, int64_t B, int64_t Ci, int64_t H,
                            int64_t W, const std::vector<T>& w, int64_t Co, int64_t k,
                            const std::vector<T>& bias, int64_t stride, int64_t dilation,
                            int64_t padding) {
    const int64_t Ho = (H + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    const int64_t Wo = (W + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    std::vector<T> out(static_cast<size_t>(B * Co * Ho * Wo), T(0));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Co; ++oc)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    T acc = bias.empty() ? T(0) : bias[static_cast<size_t>(oc)];
                    for (int64_t ic = 0; ic < Ci; ++ic)
                        for (int64_t kh = 0; kh < k; ++kh)
                            for (int64_t kw = 0; kw < k; ++kw) {
                                const int64_t ih = oh * stride - padding + kh * dilation;
                                const int64_t iw = ow * stride - padding + kw * dilation;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += in[static_cast<size_t>(((b * Ci + ic) * H + ih) * W + iw)] *
                                       w[static_cast<size_t>(((oc * Ci + ic) * k + kh) * k + kw)];
                            }
                    out[static_cast<size_t>(((b * Co + oc) * Ho + oh) * Wo + ow)] = acc;
                }
    return out;
}

template <typename T>
std::vector<T> conv2d_transpose_naive(const std::vector<T>& in, int64_t B, int64_t Co,
                                      int64_t Hi, int64_t Wi, const std::vector<T>& w,
                                      int64_t Ci, int64_t k, const std::vector<T>& bias,
                                      int64_t stride, int64_t padding) {
    const int64_t Ho = (Hi - 1) * stride - 2 * padding + k;
    const int64_t Wo = (Wi - 1) * stride - 2 * padding + k;
    std::vector<T> out(static_cast<size_t>(B * Ci * Ho * Wo), T(0));
    if (!bias.empty())
        for (int64_t b = 0; b < B; ++b)
            for (int64_t ci = 0; ci < Ci; ++ci)
                for (int64_t i = 0; i < Ho * Wo; ++i)
                    out[static_cast<size_t>((b * Ci + ci) * Ho * Wo + i)] =
                        bias[static_cast<size_t>(ci)];
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t ih = 0; ih < Hi; ++ih)
                for (int64_t iw = 0; iw < Wi; ++iw) {
                    const T v = in[static_cast<size_t>(((b * Co + co) * Hi + ih) * Wi + iw)];
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t kh = 0; kh < k; ++kh)
                            for (int64_t kw = 0; kw < k; ++kw) {
                                const int64_t oh = ih * stride - padding + kh;
                                const int64_t ow = iw * stride - padding + kw;
                                if (oh < 0 || oh >= Ho || ow < 0 || ow >= Wo) continue;
                                out[static_cast<size_t>(((b * Ci + ci) * Ho + oh) * Wo + ow)] +=
                                    v * w[static_cast<size_t>(((co * Ci + ci) * k + kh) * k + kw)];
                            }
                }
    return out;
}

template <typename T>
std::vector<T> dense_naive(const std::vector<T>& in, int64_t B, int64_t In,
                           const std::vector<T>& w, int64_t Out, const std::vector<T>& bias) {
    std::vector<T> out(static_cast<size_t>(B * Out), T(0));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t o = 0; o < Out; ++o) {
            T acc = bias.empty() ? T(0) : bias[static_cast<size_t>(o)];
            for (int64_t i = 0; i < In; ++i)
                acc += in[static_cast<size_t>(b * In + i)] * w[static_cast<size_t>(o * In + i)];
            out[static_cast<size_t>(b * Out + o)] = acc;
        }
    return out;
}

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b) {
    assert(a.size() == b.size());
    T acc = T(0);
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

#define DURR_INSTANTIATE_REF(T)                                                               \
    template std::vector<T> conv2d_naive<T>(const std::vector<T>&, int64_t, int64_t, int64_t, \
                                            int64_t, const std::vector<T>&, int64_t, int64_t, \
                                            const std::vector<T>&, int64_t, int64_t, int64_t); \
    template std::vector<T> conv2d_transpose_naive<T>(                                        \
        const std::vector<T>&, int64_t, int64_t, int64_t, int64_t, const std::vector<T>&,     \
        int64_t, int64_t, const std::vector<T>&, int64_t, int64_t);                           \
    template std::vector<T> dense_naive<T>(const std::vector<T>&, int64_t, int64_t,           \
                                           const std::vector<T>&, int64_t,                    \
                                           const std::vector<T>&);                            \
    template T dot<T>(const std::vector<T>&, const std::vector<T>&);

DURR_INSTANTIATE_REF(float)
DURR_INSTANTIATE_REF(double)

#undef DURR_INSTANTIATE_REF

}  // namespace durr::ref
