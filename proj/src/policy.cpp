#include "durr/policy.hpp"

#include <cmath>
#include <limits>

#include "durr/degrade.hpp"

namespace durr {

namespace {

int64_t scaled(int64_t width, double scale) {
    const auto w = static_cast<int64_t>(std::lround(width * scale));
    return w < 1 ? 1 : w;
}

std::string format_scale(double ws) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", ws);
    return buf;
}

}  // namespace

int64_t PolicyArch::hidden() const { return scaled(32, width_scale); }
int64_t PolicyArch::features() const { return scaled(64, width_scale); }

std::string PolicyArch::to_string() const {
    return "policy;width_scale=" + format_scale(width_scale);
}

PolicyArch PolicyArch::from_string(const std::string& s) {
    const std::string key = "policy;width_scale=";
    if (s.rfind(key, 0) != 0)
        throw ValueError("bad arch descriptor: '" + s + "' (expected '" + key + "<scale>')");
    PolicyArch arch;
    try {
        arch.width_scale = std::stod(s.substr(key.size()));
    } catch (const std::exception&) {
        throw ValueError("bad width scale in arch descriptor: '" + s + "'");
    }
    if (arch.width_scale <= 0.0 || arch.width_scale > 1.0)
        throw ValueError("policy width_scale must be in (0,1]");
    return arch;
}

std::vector<ConvLayerSpec> policy_conv_layers(const PolicyArch& arch) {
    if (arch.width_scale <= 0.0 || arch.width_scale > 1.0)
        throw ValueError("policy width_scale must be in (0,1]");
    const int64_t w16 = scaled(16, arch.width_scale);
    const int64_t w32 = scaled(32, arch.width_scale);
    const int64_t w64 = scaled(64, arch.width_scale);
    return {
        {"conv1", LayerKind::Conv, 5, 1, 1, 2, 1, w16, false},
        {"conv2", LayerKind::Conv, 3, 1, 1, 1, w16, w16, false},  // link 1 tap
        {"conv3", LayerKind::Conv, 3, 1, 1, 1, w16, w16, false},
        {"conv4", LayerKind::Conv, 3, 1, 1, 1, w16, w16, false},  // + link 1
        {"conv5", LayerKind::Conv, 3, 2, 1, 1, w16, w32, false},  // link 2 tap
        {"conv6", LayerKind::Conv, 3, 1, 1, 1, w32, w32, false},
        {"conv7", LayerKind::Conv, 3, 1, 1, 1, w32, w32, false},  // + link 2
        {"conv8", LayerKind::Conv, 3, 2, 1, 1, w32, w64, false},  // link 3 tap
        {"conv9", LayerKind::Conv, 3, 1, 1, 1, w64, w64, false},
        {"conv10", LayerKind::Conv, 3, 1, 1, 1, w64, w64, false},  // + link 3
    };
}

template <typename T>
NetworkParams<T> build_policy_unit(const PolicyArch& arch, std::uint64_t seed) {
    NetworkParams<T> params = build_conv_stack<T>(policy_conv_layers(arch), seed,
                                                  arch.to_string());
    const int64_t H = arch.hidden();
    const int64_t F = arch.features();
    Rng rng(Rng::mix(seed, 0x4c53544dULL));  // decorrelated from the conv stream
    const double bound_ih = 1.0 / std::sqrt(static_cast<double>(F));
    const double bound_hh = 1.0 / std::sqrt(static_cast<double>(H));

    auto uniform_tensor = [&](Shape shape, double bound) {
        std::vector<T> d(static_cast<size_t>(numel(shape)));
        for (auto& v : d) v = static_cast<T>(rng.uniform(-bound, bound));
        return make_tensor<T>(std::move(shape), std::move(d), true);
    };

    params.add("lstm.w_ih", uniform_tensor({4 * H, F}, bound_ih));
    params.add("lstm.w_hh", uniform_tensor({4 * H, H}, bound_hh));
    params.add("lstm.b", zeros<T>({4 * H}, true));
    params.add("head.w", uniform_tensor({1, H}, bound_hh));
    params.add("head.b", zeros<T>({1}, true));
    return params;
}

template <typename T>
PolicyStepOut<T> policy_forward(const TensorPtr<T>& x, const TensorPtr<T>& h,
                                const TensorPtr<T>& c, const NetworkParams<T>& params) {
    auto cv = [&](const TensorPtr<T>& t, const char* name, int stride) {
        return conv2d(t, params.at(std::string(name) + ".w"),
                      params.at(std::string(name) + ".b"), stride, 1, 1);
    };

    auto t1 = relu(conv2d(x, params.at("conv1.w"), params.at("conv1.b"), 1, 1, 2));
    auto link1 = relu(cv(t1, "conv2", 1));
    auto t3 = relu(cv(link1, "conv3", 1));
    auto t4 = relu(add(cv(t3, "conv4", 1), link1));
    auto link2 = relu(cv(t4, "conv5", 2));
    auto t6 = relu(cv(link2, "conv6", 1));
    auto t7 = relu(add(cv(t6, "conv7", 1), link2));
    auto link3 = relu(cv(t7, "conv8", 2));
    auto t9 = relu(cv(link3, "conv9", 1));
    auto t10 = relu(add(cv(t9, "conv10", 1), link3));

    auto features = global_avg_pool(t10);
    auto [h_next, c_next] =
        lstm_step(features, h, c, params.at("lstm.w_ih"), params.at("lstm.w_hh"),
                  params.at("lstm.b"));
    auto q = dense(h_next, params.at("head.w"), params.at("head.b"));
    return {q, h_next, c_next};
}

PolicyState make_policy_state(const PolicyArch& arch, int64_t batch) {
    PolicyState state;
    state.h = zeros<float>({batch, arch.hidden()});
    state.c = zeros<float>({batch, arch.hidden()});
    state.step_index = 0;
    return state;
}

std::pair<double, PolicyState> policy_q_step(const Image& x_current, const PolicyState& state,
                                             const NetworkParams<float>& params) {
    NoGradGuard guard;
    auto x = image_to_tensor<float>(x_current);
    auto out = policy_forward(x, state.h, state.c, params);
    PolicyState next;
    next.h = out.h;
    next.c = out.c;
    next.step_index = state.step_index + 1;
    return {static_cast<double>(out.q->data[0]), next};
}

DecideResult policy_decide(const Image& x0, const NetworkParams<float>& restorer,
                           const NetworkParams<float>& policy, int max_steps) {
    if (max_steps < 1) throw ValueError("policy_decide: max_steps must be >= 1");
    DecideResult result;
    result.trajectory.states.push_back(x0);

    PolicyState state = make_policy_state(PolicyArch::from_string(policy.arch));
    int step = 0;
    while (step < max_steps) {
        auto [q, next_state] = policy_q_step(result.trajectory.states.back(), state, policy);
        result.q_values.push_back(q);
        if (q <= 0.0) break;  // stop is absorbing
        result.trajectory.states.push_back(
            unfold_step(result.trajectory.states.back(), x0, restorer));
        state = next_state;
        ++step;
    }
    result.trajectory.n_steps = step;
    result.stop_step = step;
    result.restored = result.trajectory.states.back();
    return result;
}

double pearson_correlation(const Image& a, const Image& b) {
    if (a.size() != b.size()) throw ShapeError("pearson_correlation: size mismatch");
    const auto n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        mean_a += a.pixels[i];
        mean_b += b.pixels[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a.pixels[i] - mean_a;
        const double db = b.pixels[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return 0.0;
    return cov / std::sqrt(var_a * var_b);
}

int decorrelation_stop_index(const Trajectory& traj) {
    if (traj.states.size() < 2)
        throw ValueError("decorrelation_stop_index: trajectory must have at least two states");
    int best = 1;
    double best_abs = std::numeric_limits<double>::infinity();
    for (size_t n = 1; n < traj.states.size(); ++n) {
        Image noise(traj.states[n].width, traj.states[n].height);
        for (size_t i = 0; i < noise.size(); ++i)
            noise.pixels[i] = traj.states[0].pixels[i] - traj.states[n].pixels[i];
        const double r = std::abs(pearson_correlation(noise, traj.states[n]));
        if (r < best_abs) {
            best_abs = r;
            best = static_cast<int>(n);
        }
    }
    return best;
}

int oracle_peak_index(const Trajectory& traj) {
    if (!traj.has_psnr())
        throw ValueError("oracle_peak_index: trajectory has no ground-truth PSNRs");
    int best = 0;
    double best_psnr = traj.psnrs[0];
    for (size_t n = 1; n < traj.psnrs.size(); ++n) {
        if (traj.psnrs[n] > best_psnr) {
            best_psnr = traj.psnrs[n];
            best = static_cast<int>(n);
        }
    }
    return best;
}

template NetworkParams<float> build_policy_unit<float>(const PolicyArch&, std::uint64_t);
template NetworkParams<double> build_policy_unit<double>(const PolicyArch&, std::uint64_t);
template PolicyStepOut<float> policy_forward<float>(const TensorPtr<float>&,
                                                    const TensorPtr<float>&,
                                                    const TensorPtr<float>&,
                                                    const NetworkParams<float>&);
template PolicyStepOut<double> policy_forward<double>(const TensorPtr<double>&,
                                                      const TensorPtr<double>&,
                                                      const TensorPtr<double>&,
                                                      const NetworkParams<double>&);

}  // namespace durr
