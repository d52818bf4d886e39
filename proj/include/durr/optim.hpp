#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durr/tensor.hpp"

namespace durr {

enum class OptMethod { Adam, RmsProp };

// Per-parameter moment buffers plus the shared step counter. Zero-initialized
// on the first step against a given parameter set.
template <typename T>
struct OptState {
    OptMethod method = OptMethod::Adam;
    int64_t step = 0;
    // first moment (Adam only) and second moment, keyed by parameter order
    std::vector<std::pair<std::string, std::vector<T>>> m;
    std::vector<std::pair<std::string, std::vector<T>>> v;

    bool empty() const { return step == 0 && m.empty() && v.empty(); }
};

// Adam: beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected.
// RMSprop: alpha 0.99, eps 1e-8.
// In-place update of params from grads; state is created/advanced as needed.
// Throws ValueError for lr <= 0 and NumericError naming the parameter on a
// non-finite gradient.
template <typename T>
void optimizer_step(NetworkParams<T>& params, const GradStore<T>& grads, OptState<T>& state,
                    OptMethod method, double lr);

extern template struct OptState<float>;
extern template struct OptState<double>;
extern template void optimizer_step<float>(NetworkParams<float>&, const GradStore<float>&,
                                           OptState<float>&, OptMethod, double);
extern template void optimizer_step<double>(NetworkParams<double>&, const GradStore<double>&,
                                            OptState<double>&, OptMethod, double);

}  // namespace durr
