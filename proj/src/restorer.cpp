#include "durr/restorer.hpp"

#include <cmath>

#include "durr/degrade.hpp"

namespace durr {

namespace {

int64_t scaled(int64_t width, double scale) {
    const auto w = static_cast<int64_t>(std::lround(width * scale));
    return w < 1 ? 1 : w;
}

double parse_width_scale(const std::string& s, const std::string& prefix) {
    const std::string key = prefix + ";width_scale=";
    if (s.rfind(key, 0) != 0)
        throw ValueError("bad arch descriptor: '" + s + "' (expected '" + key + "<scale>')");
    try {
        return std::stod(s.substr(key.size()));
    } catch (const std::exception&) {
        throw ValueError("bad width scale in arch descriptor: '" + s + "'");
    }
}

std::string format_scale(double ws) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", ws);
    return buf;
}

}  // namespace

std::string RestorerArch::to_string() const {
    return "restorer;width_scale=" + format_scale(width_scale);
}

RestorerArch RestorerArch::from_string(const std::string& s) {
    RestorerArch arch;
    arch.width_scale = parse_width_scale(s, "restorer");
    if (arch.width_scale <= 0.0 || arch.width_scale > 1.0)
        throw ValueError("restorer width_scale must be in (0,1], got " +
                         format_scale(arch.width_scale));
    return arch;
}

std::vector<ConvLayerSpec> restorer_layers(const RestorerArch& arch) {
    if (arch.width_scale <= 0.0 || arch.width_scale > 1.0)
        throw ValueError("restorer width_scale must be in (0,1]");
    const int64_t w32 = scaled(32, arch.width_scale);
    const int64_t w64 = scaled(64, arch.width_scale);
    return {
        {"conv1", LayerKind::Conv, 5, 1, 1, 2, 2, w32, true},
        {"conv2", LayerKind::Conv, 3, 1, 1, 1, w32, w32, true},
        {"conv3", LayerKind::Conv, 3, 2, 1, 1, w32, w64, true},
        {"conv4", LayerKind::Conv, 3, 1, 1, 1, w64, w64, true},
        {"conv5", LayerKind::Conv, 3, 1, 2, 2, w64, w64, true},
        {"conv6", LayerKind::Conv, 3, 1, 4, 4, w64, w64, true},
        {"deconv7", LayerKind::ConvTranspose, 4, 2, 1, 1, w64, w64, true},
        {"conv8", LayerKind::Conv, 3, 1, 1, 1, w64 + w32, w32, true},
        {"conv9", LayerKind::Conv, 5, 1, 1, 2, w32, 1, false},
    };
}

template <typename T>
NetworkParams<T> build_conv_stack(const std::vector<ConvLayerSpec>& layers, std::uint64_t seed,
                                  const std::string& arch_str) {
    NetworkParams<T> params;
    params.arch = arch_str;
    Rng rng(seed);
    for (const auto& layer : layers) {
        const int64_t k = layer.kernel;
        // weight layout (out,in,k,k) for conv; (in,out,k,k) holds for the
        // transpose because its contraction runs over dim 0
        const Shape wshape = layer.kind == LayerKind::Conv
                                 ? Shape{layer.out_ch, layer.in_ch, k, k}
                                 : Shape{layer.in_ch, layer.out_ch, k, k};
        const double fan_in = static_cast<double>(layer.in_ch) * k * k;
        const double stddev = std::sqrt(2.0 / fan_in);
        params.add(layer.name + ".w", randn<T>(wshape, rng, stddev, true));
        params.add(layer.name + ".b", zeros<T>({layer.out_ch}, true));
        if (layer.prelu) params.add(layer.name + ".a", full<T>({layer.out_ch}, T(0.25), true));
    }
    return params;
}

template <typename T>
NetworkParams<T> build_restoration_unit(const RestorerArch& arch, std::uint64_t seed) {
    return build_conv_stack<T>(restorer_layers(arch), seed, arch.to_string());
}

template <typename T>
TensorPtr<T> restorer_residual(const TensorPtr<T>& x_prev, const TensorPtr<T>& x0,
                               const NetworkParams<T>& params) {
    if (x_prev->shape != x0->shape)
        throw ShapeError("restorer: state shape " + shape_str(x_prev->shape) +
                         " != observation shape " + shape_str(x0->shape));
    if (x_prev->dim(2) % 2 != 0 || x_prev->dim(3) % 2 != 0)
        throw ShapeError("restorer: spatial dims must be even for the down/up pair, got " +
                         shape_str(x_prev->shape));

    auto act = [&](const TensorPtr<T>& t, const char* name) {
        return prelu(t, params.at(std::string(name) + ".a"));
    };
    auto cv = [&](const TensorPtr<T>& t, const char* name, int stride, int dilation,
                  int padding) {
        return conv2d(t, params.at(std::string(name) + ".w"),
                      params.at(std::string(name) + ".b"), stride, dilation, padding);
    };

    auto x = concat_channels(x_prev, x0);
    auto t1 = act(cv(x, "conv1", 1, 1, 2), "conv1");
    auto t2 = act(cv(t1, "conv2", 1, 1, 1), "conv2");  // skip tap
    auto t3 = act(cv(t2, "conv3", 2, 1, 1), "conv3");
    auto t4 = act(cv(t3, "conv4", 1, 1, 1), "conv4");
    auto t5 = act(cv(t4, "conv5", 1, 2, 2), "conv5");
    auto t6 = act(cv(t5, "conv6", 1, 4, 4), "conv6");
    auto t7 = act(conv2d_transpose(t6, params.at("deconv7.w"), params.at("deconv7.b"), 2, 1),
                  "deconv7");
    auto t8 = act(cv(concat_channels(t7, t2), "conv8", 1, 1, 1), "conv8");
    return cv(t8, "conv9", 1, 1, 2);
}

template <typename T>
TensorPtr<T> unfold_step_t(const TensorPtr<T>& x_prev, const TensorPtr<T>& x0,
                           const NetworkParams<T>& params) {
    return add(x_prev, restorer_residual(x_prev, x0, params));
}

Image unfold_step(const Image& x_prev, const Image& x0, const NetworkParams<float>& params) {
    if (x_prev.width != x0.width || x_prev.height != x0.height)
        throw ShapeError("unfold_step: image dimension mismatch");
    NoGradGuard guard;
    auto tp = image_to_tensor<float>(x_prev);
    auto t0 = image_to_tensor<float>(x0);
    const int pad_h = x_prev.height % 2, pad_w = x_prev.width % 2;
    if (pad_h || pad_w) {
        tp = pad_replicate(tp, 0, pad_h, 0, pad_w);
        t0 = pad_replicate(t0, 0, pad_h, 0, pad_w);
    }
    auto res = restorer_residual(tp, t0, params);
    if (pad_h || pad_w) res = crop(res, 0, 0, x_prev.height, x_prev.width);

    Image out(x_prev.width, x_prev.height);
    for (size_t i = 0; i < out.size(); ++i)
        out.pixels[i] = x_prev.pixels[i] + res->data[i];
    return out;
}

Trajectory unfold_trajectory(const Image& x0, const NetworkParams<float>& params, int n_steps,
                             const Image* ground_truth) {
    if (n_steps < 0) throw ValueError("unfold_trajectory: n_steps must be >= 0");
    Trajectory traj;
    traj.n_steps = n_steps;
    traj.states.reserve(static_cast<size_t>(n_steps) + 1);
    traj.states.push_back(x0);

    auto record_psnr = [&](const Image& state) {
        if (!ground_truth) return;
        Image shown = state;
        shown.clamp01();
        traj.psnrs.push_back(metric_psnr(shown, *ground_truth));
    };
    record_psnr(x0);

    for (int n = 0; n < n_steps; ++n) {
        traj.states.push_back(unfold_step(traj.states.back(), x0, params));
        record_psnr(traj.states.back());
    }
    return traj;
}

template NetworkParams<float> build_restoration_unit<float>(const RestorerArch&, std::uint64_t);
template NetworkParams<double> build_restoration_unit<double>(const RestorerArch&, std::uint64_t);
template TensorPtr<float> restorer_residual<float>(const TensorPtr<float>&,
                                                   const TensorPtr<float>&,
                                                   const NetworkParams<float>&);
template TensorPtr<double> restorer_residual<double>(const TensorPtr<double>&,
                                                     const TensorPtr<double>&,
                                                     const NetworkParams<double>&);
template TensorPtr<float> unfold_step_t<float>(const TensorPtr<float>&, const TensorPtr<float>&,
                                               const NetworkParams<float>&);
template TensorPtr<double> unfold_step_t<double>(const TensorPtr<double>&,
                                                 const TensorPtr<double>&,
                                                 const NetworkParams<double>&);

// used by the policy builder as well
template NetworkParams<float> build_conv_stack<float>(const std::vector<ConvLayerSpec>&,
                                                      std::uint64_t, const std::string&);
template NetworkParams<double> build_conv_stack<double>(const std::vector<ConvLayerSpec>&,
                                                        std::uint64_t, const std::string&);

}  // namespace durr
