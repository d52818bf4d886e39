#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "durr/image.hpp"
#include "durr/ops.hpp"
#include "durr/tensor.hpp"

namespace durr {

// Restoration unit: a residual convolutional recurrence. One application is
// one forward-Euler step x_{n+1} = x_n + f([x_n, x_0]); the network input is
// the current estimate concatenated with the original degraded observation.
//
// Full-width layer stack (channel widths scale with width_scale, minimum 1):
//   conv 5x5/32, conv 3x3/32 (skip tap), conv 3x3 s2/64, conv 3x3/64,
//   conv 3x3 d2/64, conv 3x3 d4/64, deconv 4x4 up2/64,
//   conv 3x3/32 (skip concat), conv 5x5/1
// PReLU after every conv except the last. "Same" padding everywhere, so the
// spatial size is preserved except across the stride-2/up-2 pair.
struct RestorerArch {
    double width_scale = 1.0;

    std::string to_string() const;
    static RestorerArch from_string(const std::string& s);
};

enum class LayerKind { Conv, ConvTranspose };

struct ConvLayerSpec {
    std::string name;
    LayerKind kind;
    int kernel;
    int stride;
    int dilation;
    int padding;
    int64_t in_ch;
    int64_t out_ch;
    bool prelu;
};

// The resolved layer table for a given width scale.
std::vector<ConvLayerSpec> restorer_layers(const RestorerArch& arch);

// Seeded init of a conv/deconv stack: He fan-in weights, zero biases, PReLU
// slopes 0.25. Shared by the restorer and policy builders.
template <typename T>
NetworkParams<T> build_conv_stack(const std::vector<ConvLayerSpec>& layers, std::uint64_t seed,
                                  const std::string& arch_str);

// He fan-in init for conv weights, zero biases, PReLU slopes 0.25.
// Identical seeds give identical parameters.
template <typename T>
NetworkParams<T> build_restoration_unit(const RestorerArch& arch, std::uint64_t seed);

// Residual prediction f([x_prev, x0]). Both inputs (B,1,H,W) with H, W even.
template <typename T>
TensorPtr<T> restorer_residual(const TensorPtr<T>& x_prev, const TensorPtr<T>& x0,
                               const NetworkParams<T>& params);

// One forward-Euler step on tensors (training path, differentiable).
template <typename T>
TensorPtr<T> unfold_step_t(const TensorPtr<T>& x_prev, const TensorPtr<T>& x0,
                           const NetworkParams<T>& params);

// One step on images (inference path). Odd sizes are edge-padded to even and
// cropped back. States are not clamped.
Image unfold_step(const Image& x_prev, const Image& x0, const NetworkParams<float>& params);

struct Trajectory {
    std::vector<Image> states;   // X_0 .. X_N
    std::vector<double> psnrs;   // display PSNR per state when ground truth given
    int n_steps = 0;

    bool has_psnr() const { return !psnrs.empty(); }
};

// Iterates unfold_step n_steps times from the degraded input. When ground
// truth is supplied, records the PSNR of each state (clamped to [0,1] for the
// metric, as displayed output would be).
Trajectory unfold_trajectory(const Image& x0, const NetworkParams<float>& params, int n_steps,
                             const Image* ground_truth = nullptr);

extern template NetworkParams<float> build_conv_stack<float>(const std::vector<ConvLayerSpec>&,
                                                             std::uint64_t, const std::string&);
extern template NetworkParams<double> build_conv_stack<double>(const std::vector<ConvLayerSpec>&,
                                                               std::uint64_t,
                                                               const std::string&);
extern template NetworkParams<float> build_restoration_unit<float>(const RestorerArch&,
                                                                   std::uint64_t);
extern template NetworkParams<double> build_restoration_unit<double>(const RestorerArch&,
                                                                     std::uint64_t);
extern template TensorPtr<float> restorer_residual<float>(const TensorPtr<float>&,
                                                          const TensorPtr<float>&,
                                                          const NetworkParams<float>&);
extern template TensorPtr<double> restorer_residual<double>(const TensorPtr<double>&,
                                                            const TensorPtr<double>&,
                                                            const NetworkParams<double>&);
extern template TensorPtr<float> unfold_step_t<float>(const TensorPtr<float>&,
                                                      const TensorPtr<float>&,
                                                      const NetworkParams<float>&);
extern template TensorPtr<double> unfold_step_t<double>(const TensorPtr<double>&,
                                                        const TensorPtr<double>&,
                                                        const NetworkParams<double>&);

}  // namespace durr
