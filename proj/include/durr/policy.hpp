#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durr/image.hpp"
#include "durr/restorer.hpp"
#include "durr/tensor.hpp"

namespace durr {

// Policy unit: estimates Q(continue) for the current restored estimate.
// Q(stop) is fixed at zero, so the greedy policy continues while the single
// head is positive.
//
// Full-width stack: conv 5x5/16, then three residual blocks
//   [conv 3x3/16, conv 3x3/16, conv 3x3/16 + skip]
//   [conv 3x3 s2/32, conv 3x3/32, conv 3x3/32 + skip]
//   [conv 3x3 s2/64, conv 3x3/64, conv 3x3/64 + skip]
// (ReLU after every conv, skip added before the closing ReLU), global average
// pooling, LSTM with 32 hidden units, dense head to one scalar.
struct PolicyArch {
    double width_scale = 1.0;

    int64_t hidden() const;    // LSTM width
    int64_t features() const;  // trunk output width feeding the LSTM

    std::string to_string() const;
    static PolicyArch from_string(const std::string& s);
};

std::vector<ConvLayerSpec> policy_conv_layers(const PolicyArch& arch);

template <typename T>
NetworkParams<T> build_policy_unit(const PolicyArch& arch, std::uint64_t seed);

// Recurrent evaluation state, reset to zeros at the start of every episode.
struct PolicyState {
    TensorPtr<float> h;
    TensorPtr<float> c;
    int step_index = 0;
};

PolicyState make_policy_state(const PolicyArch& arch, int64_t batch = 1);

struct StopDecision {
    bool stop = false;
    double q_continue = 0.0;
    int step = 0;
};

// Batched core: x (B,1,H,W), h/c (B,hidden) -> (q (B,1), h', c').
template <typename T>
struct PolicyStepOut {
    TensorPtr<T> q;
    TensorPtr<T> h;
    TensorPtr<T> c;
};

template <typename T>
PolicyStepOut<T> policy_forward(const TensorPtr<T>& x, const TensorPtr<T>& h,
                                const TensorPtr<T>& c, const NetworkParams<T>& params);

// Single-image step: q value plus the advanced recurrent state.
std::pair<double, PolicyState> policy_q_step(const Image& x_current, const PolicyState& state,
                                             const NetworkParams<float>& params);

struct DecideResult {
    Image restored;
    Trajectory trajectory;
    int stop_step = 0;
    std::vector<double> q_values;  // q at steps 0..(evaluations-1)
};

// Greedy stop-controlled restoration: continue while q > 0 and
// step < max_steps. Stopping is absorbing; no restorer step runs after it.
DecideResult policy_decide(const Image& x0, const NetworkParams<float>& restorer,
                           const NetworkParams<float>& policy, int max_steps);

// Handcrafted rule: stop where |pearson(X_0 - X_n, X_n)| over pixels is
// minimal (n >= 1, earliest on ties). Zero-variance correlations count as 0.
int decorrelation_stop_index(const Trajectory& traj);

// argmax of the recorded PSNRs, earliest on ties. Requires ground-truth
// PSNRs on the trajectory.
int oracle_peak_index(const Trajectory& traj);

// Pearson correlation over pixel pairs; 0 when either side has zero variance.
double pearson_correlation(const Image& a, const Image& b);

extern template NetworkParams<float> build_policy_unit<float>(const PolicyArch&, std::uint64_t);
extern template NetworkParams<double> build_policy_unit<double>(const PolicyArch&, std::uint64_t);
extern template PolicyStepOut<float> policy_forward<float>(const TensorPtr<float>&,
                                                           const TensorPtr<float>&,
                                                           const TensorPtr<float>&,
                                                           const NetworkParams<float>&);
extern template PolicyStepOut<double> policy_forward<double>(const TensorPtr<double>&,
                                                             const TensorPtr<double>&,
                                                             const TensorPtr<double>&,
                                                             const NetworkParams<double>&);

}  // namespace durr
