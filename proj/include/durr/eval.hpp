#pragma once

#include <optional>
#include <string>
#include <vector>

#include "durr/degrade.hpp"
#include "durr/image.hpp"
#include "durr/policy.hpp"
#include "durr/restorer.hpp"

namespace durr {

// How to choose the stopping step during evaluation.
struct PolicySpecifier {
    enum class Kind { Dqn, Decorrelation, Fixed, Oracle };
    Kind kind = Kind::Fixed;
    int fixed_steps = 0;

    // "dqn" | "decorr" | "fixed:N" | "oracle"
    static PolicySpecifier parse(const std::string& text);
    std::string name() const;
};

struct EvalRow {
    double level = 0.0;
    std::string policy;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_stop_step = 0.0;
    int image_count = 0;
};

struct EvalDetailRow {
    double level = 0.0;
    std::string policy;
    int image_index = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    int stop_step = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<EvalDetailRow> detail;

    void write_csv(const std::string& path) const;
    void write_detail_csv(const std::string& path) const;
};

// Peak-PSNR harness: unfolds max_steps, reports the per-level mean of the
// best PSNR along each trajectory, the mean argmax step ("peak time") and the
// SSIM at the peak. Degradation is seeded per (image, level).
EvalReport eval_peak_psnr(const std::vector<Image>& corpus,
                          const NetworkParams<float>& restorer,
                          const std::vector<double>& levels, int max_steps, Degradation task,
                          std::uint64_t seed);

// Stop-controlled evaluation under a policy specifier. The DQN variant needs
// the policy parameters; oracle rows pick the argmax-PSNR state.
EvalReport eval_durr(const std::vector<Image>& corpus, const NetworkParams<float>& restorer,
                     const PolicySpecifier& spec, const NetworkParams<float>* policy,
                     const std::vector<double>& levels, int max_steps, Degradation task,
                     std::uint64_t seed);

// Per-step CSV (step, psnr?, ssim?, q_continue?) plus one PGM per state.
// Optional columns appear only when ground truth / policy params are given.
void export_trajectory(const Image& input, const Image* ground_truth,
                       const NetworkParams<float>& restorer,
                       const NetworkParams<float>* policy, int n_steps,
                       const std::string& out_csv, const std::string& out_images_dir);

}  // namespace durr
