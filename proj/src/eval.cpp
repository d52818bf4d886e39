#include "durr/eval.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace durr {

namespace {

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Image clamped(const Image& img) {
    Image out = img;
    out.clamp01();
    return out;
}

std::uint64_t degradation_seed(std::uint64_t base, size_t image_index, size_t level_index) {
    return Rng::mix(Rng::mix(base, 0x6576616cULL + image_index), level_index + 1);
}

}  // namespace

PolicySpecifier PolicySpecifier::parse(const std::string& text) {
    PolicySpecifier spec;
    if (text == "dqn") {
        spec.kind = Kind::Dqn;
    } else if (text == "decorr") {
        spec.kind = Kind::Decorrelation;
    } else if (text == "oracle") {
        spec.kind = Kind::Oracle;
    } else if (text.rfind("fixed:", 0) == 0) {
        spec.kind = Kind::Fixed;
        try {
            spec.fixed_steps = std::stoi(text.substr(6));
        } catch (const std::exception&) {
            throw UsageError("bad fixed policy '" + text + "' (expected fixed:N)");
        }
        if (spec.fixed_steps < 0) throw UsageError("fixed policy steps must be >= 0");
    } else {
        throw UsageError("unknown policy spec '" + text +
                         "' (expected dqn, decorr, fixed:N or oracle)");
    }
    return spec;
}

std::string PolicySpecifier::name() const {
    switch (kind) {
        case Kind::Dqn:
            return "dqn";
        case Kind::Decorrelation:
            return "decorr";
        case Kind::Oracle:
            return "oracle";
        case Kind::Fixed:
            return "fixed:" + std::to_string(fixed_steps);
    }
    return "?";
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "level,policy,mean_psnr,mean_ssim,mean_stop_step,image_count\n";
    for (const auto& r : rows)
        out << fmt6(r.level) << "," << r.policy << "," << fmt6(r.mean_psnr) << ","
            << fmt6(r.mean_ssim) << "," << fmt6(r.mean_stop_step) << "," << r.image_count
            << "\n";
    if (!out) throw IoError("write failed for " + path);
}

void EvalReport::write_detail_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "level,policy,image_index,psnr,ssim,stop_step\n";
    for (const auto& r : detail)
        out << fmt6(r.level) << "," << r.policy << "," << r.image_index << "," << fmt6(r.psnr)
            << "," << fmt6(r.ssim) << "," << r.stop_step << "\n";
    if (!out) throw IoError("write failed for " + path);
}

EvalReport eval_peak_psnr(const std::vector<Image>& corpus,
                          const NetworkParams<float>& restorer,
                          const std::vector<double>& levels, int max_steps, Degradation task,
                          std::uint64_t seed) {
    if (corpus.empty()) throw ValueError("eval_peak_psnr: empty corpus");
    EvalReport report;
    for (size_t li = 0; li < levels.size(); ++li) {
        EvalRow row;
        row.level = levels[li];
        row.policy = "peak";
        for (size_t i = 0; i < corpus.size(); ++i) {
            DegradationSpec spec{task, levels[li], degradation_seed(seed, i, li)};
            const Image degraded = apply_degradation(corpus[i], spec);
            const Trajectory traj = unfold_trajectory(degraded, restorer, max_steps, &corpus[i]);
            const int peak = oracle_peak_index(traj);
            const Image shown = clamped(traj.states[static_cast<size_t>(peak)]);
            EvalDetailRow d;
            d.level = levels[li];
            d.policy = row.policy;
            d.image_index = static_cast<int>(i);
            d.psnr = traj.psnrs[static_cast<size_t>(peak)];
            d.ssim = metric_ssim(shown, corpus[i]);
            d.stop_step = peak;
            report.detail.push_back(d);
            row.mean_psnr += d.psnr;
            row.mean_ssim += d.ssim;
            row.mean_stop_step += peak;
            ++row.image_count;
        }
        row.mean_psnr /= row.image_count;
        row.mean_ssim /= row.image_count;
        row.mean_stop_step /= row.image_count;
        report.rows.push_back(row);
    }
    return report;
}

EvalReport eval_durr(const std::vector<Image>& corpus, const NetworkParams<float>& restorer,
                     const PolicySpecifier& spec, const NetworkParams<float>* policy,
                     const std::vector<double>& levels, int max_steps, Degradation task,
                     std::uint64_t seed) {
    if (corpus.empty()) throw ValueError("eval_durr: empty corpus");
    if (spec.kind == PolicySpecifier::Kind::Dqn && policy == nullptr)
        throw ValueError("eval_durr: dqn policy requires policy parameters");

    EvalReport report;
    for (size_t li = 0; li < levels.size(); ++li) {
        EvalRow row;
        row.level = levels[li];
        row.policy = spec.name();
        for (size_t i = 0; i < corpus.size(); ++i) {
            DegradationSpec dspec{task, levels[li], degradation_seed(seed, i, li)};
            const Image degraded = apply_degradation(corpus[i], dspec);

            Image chosen;
            int stop_step = 0;
            switch (spec.kind) {
                case PolicySpecifier::Kind::Dqn: {
                    DecideResult res = policy_decide(degraded, restorer, *policy, max_steps);
                    chosen = std::move(res.restored);
                    stop_step = res.stop_step;
                    break;
                }
                case PolicySpecifier::Kind::Decorrelation: {
                    Trajectory traj = unfold_trajectory(degraded, restorer, max_steps);
                    stop_step = decorrelation_stop_index(traj);
                    chosen = traj.states[static_cast<size_t>(stop_step)];
                    break;
                }
                case PolicySpecifier::Kind::Fixed: {
                    Trajectory traj = unfold_trajectory(degraded, restorer, spec.fixed_steps);
                    stop_step = spec.fixed_steps;
                    chosen = traj.states.back();
                    break;
                }
                case PolicySpecifier::Kind::Oracle: {
                    Trajectory traj =
                        unfold_trajectory(degraded, restorer, max_steps, &corpus[i]);
                    stop_step = oracle_peak_index(traj);
                    chosen = traj.states[static_cast<size_t>(stop_step)];
                    break;
                }
            }

            const Image shown = clamped(chosen);
            EvalDetailRow d;
            d.level = levels[li];
            d.policy = row.policy;
            d.image_index = static_cast<int>(i);
            d.psnr = metric_psnr(shown, corpus[i]);
            d.ssim = metric_ssim(shown, corpus[i]);
            d.stop_step = stop_step;
            report.detail.push_back(d);
            row.mean_psnr += d.psnr;
            row.mean_ssim += d.ssim;
            row.mean_stop_step += stop_step;
            ++row.image_count;
        }
        row.mean_psnr /= row.image_count;
        row.mean_ssim /= row.image_count;
        row.mean_stop_step /= row.image_count;
        report.rows.push_back(row);
    }
    return report;
}

void export_trajectory(const Image& input, const Image* ground_truth,
                       const NetworkParams<float>& restorer,
                       const NetworkParams<float>* policy, int n_steps,
                       const std::string& out_csv, const std::string& out_images_dir) {
    const Trajectory traj = unfold_trajectory(input, restorer, n_steps, ground_truth);

    std::vector<double> q_values;
    if (policy) {
        PolicyState state = make_policy_state(PolicyArch::from_string(policy->arch));
        for (const Image& state_img : traj.states) {
            auto [q, next] = policy_q_step(state_img, state, *policy);
            q_values.push_back(q);
            state = next;
        }
    }

    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write " + out_csv);
    out << "step";
    if (ground_truth) out << ",psnr,ssim";
    if (policy) out << ",q_continue";
    out << "\n";
    for (size_t n = 0; n < traj.states.size(); ++n) {
        out << n;
        if (ground_truth) {
            const Image shown = clamped(traj.states[n]);
            out << "," << fmt6(traj.psnrs[n]) << "," << fmt6(metric_ssim(shown, *ground_truth));
        }
        if (policy) out << "," << fmt6(q_values[n]);
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + out_csv);

    if (!out_images_dir.empty()) {
        std::filesystem::create_directories(out_images_dir);
        char name[64];
        for (size_t n = 0; n < traj.states.size(); ++n) {
            std::snprintf(name, sizeof name, "step_%03zu.pgm", n);
            write_pgm(clamped(traj.states[n]),
                      (std::filesystem::path(out_images_dir) / name).string());
        }
    }
}

}  // namespace durr
