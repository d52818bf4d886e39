#include "durr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "durr/checkpoint.hpp"
#include "durr/degrade.hpp"
#include "durr/eval.hpp"
#include "durr/pipelines.hpp"

namespace durr {

namespace fs = std::filesystem;

namespace {

Degradation parse_task(const std::string& task) {
    if (task == "denoise") return Degradation::Gaussian;
    if (task == "deblock") return Degradation::Jpeg;
    throw UsageError("unknown task '" + task + "' (expected denoise or deblock)");
}

std::vector<double> parse_levels(const std::string& text) {
    std::vector<double> levels;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            levels.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("bad level '" + item + "' in '" + text + "'");
        }
    }
    if (levels.empty()) throw UsageError("empty level list '" + text + "'");
    return levels;
}

std::vector<Image> load_corpus_dir(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            names.push_back(entry.path().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no .pgm images found in " + dir);
    std::vector<Image> corpus;
    corpus.reserve(names.size());
    for (const auto& name : names) corpus.push_back(read_pgm(name));
    return corpus;
}

// --corpus selects a directory of PGM images; without it a seeded synthetic
// corpus stands in
std::vector<Image> resolve_corpus(const std::string& dir, int synthetic_count,
                                  std::uint64_t seed) {
    if (!dir.empty()) return load_corpus_dir(dir);
    return generate_synthetic_corpus(synthetic_count, 96, 96, Rng::mix(seed, 0x636f7270ULL));
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash_hex(const std::string& summary) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(summary)));
    return buf;
}

struct CommonTrainFlags {
    std::string corpus_dir;
    int synthetic_count = 64;
    std::string task = "denoise";
    std::uint64_t seed = 1;
    int threads = 0;
    double width_scale = 1.0;
    int patch = 64;
    int batch = 24;
    std::string log_path;
    std::string out_path;
};

}  // namespace

int cli_run(int argc, const char* const* argv) {
    CLI::App app{"dynamically unfolding recurrent restorer"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads for the kernels (0 = default)");

    // ---- gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "write a synthetic PGM corpus");
    std::string gen_out;
    int gen_count = 64, gen_w = 96, gen_h = 96;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--count", gen_count, "number of images");
    gen->add_option("--width", gen_w, "image width");
    gen->add_option("--height", gen_h, "image height");
    gen->add_option("--seed", gen_seed, "corpus seed");

    // ---- degrade
    auto* deg = app.add_subcommand("degrade", "apply a degradation to one image");
    std::string deg_in, deg_out, deg_task = "denoise";
    double deg_sigma = 25.0;
    int deg_qf = 20;
    std::uint64_t deg_seed = 1;
    deg->add_option("--in", deg_in, "input PGM")->required();
    deg->add_option("--out", deg_out, "output PGM")->required();
    deg->add_option("--task", deg_task, "denoise or deblock");
    deg->add_option("--sigma", deg_sigma, "noise sigma on the 0-255 scale");
    deg->add_option("--qf", deg_qf, "JPEG quality factor");
    deg->add_option("--seed", deg_seed, "noise seed");

    // ---- train-restorer
    auto* tr = app.add_subcommand("train-restorer", "train the restoration unit");
    CommonTrainFlags trf;
    std::string tr_schedule = "25:4,35:6,45:9,55:12";
    int tr_iters = 2000, tr_eval_every = 50;
    double tr_lr = 1e-3, tr_val_fraction = 0.25;
    tr->add_option("--corpus", trf.corpus_dir, "PGM corpus directory (default: synthetic)");
    tr->add_option("--synthetic-count", trf.synthetic_count, "synthetic corpus size");
    tr->add_option("--task", trf.task, "denoise or deblock");
    tr->add_option("--schedule", tr_schedule, "level:loops pairs, e.g. 25:4,35:6");
    tr->add_option("--iters", tr_iters, "optimizer steps");
    tr->add_option("--batch", trf.batch, "batch size");
    tr->add_option("--patch", trf.patch, "training patch size");
    tr->add_option("--width-scale", trf.width_scale, "channel width multiplier in (0,1]");
    tr->add_option("--lr", tr_lr, "Adam learning rate");
    tr->add_option("--eval-every", tr_eval_every, "iterations between validations");
    tr->add_option("--val-fraction", tr_val_fraction, "corpus fraction held out");
    tr->add_option("--seed", trf.seed, "training seed");
    tr->add_option("--log", trf.log_path, "append-only CSV training log");
    tr->add_option("--out", trf.out_path, "checkpoint path")->required();

    // ---- train-policy
    auto* tp = app.add_subcommand("train-policy", "train the stopping policy with DQN");
    CommonTrainFlags tpf;
    tpf.patch = 32;
    std::string tp_restorer, tp_levels = "25,35,45,55";
    int tp_env_steps = 4000, tp_max_steps = 20;
    double tp_lr = 1e-4, tp_lambda = 100.0, tp_gamma = 0.99;
    tp->add_option("--corpus", tpf.corpus_dir, "PGM corpus directory (default: synthetic)");
    tp->add_option("--synthetic-count", tpf.synthetic_count, "synthetic corpus size");
    tp->add_option("--task", tpf.task, "denoise or deblock");
    tp->add_option("--levels", tp_levels, "degradation levels, e.g. 25,35,45");
    tp->add_option("--restorer", tp_restorer, "frozen restorer checkpoint")->required();
    tp->add_option("--env-steps", tp_env_steps, "environment steps");
    tp->add_option("--batch", tpf.batch, "replay minibatch size");
    tp->add_option("--patch", tpf.patch, "episode patch size");
    tp->add_option("--width-scale", tpf.width_scale, "policy width multiplier in (0,1]");
    tp->add_option("--lr", tp_lr, "RMSprop learning rate");
    tp->add_option("--lambda", tp_lambda, "reward scale");
    tp->add_option("--gamma", tp_gamma, "discount factor");
    tp->add_option("--max-steps", tp_max_steps, "episode step cap");
    tp->add_option("--seed", tpf.seed, "training seed");
    tp->add_option("--log", tpf.log_path, "append-only CSV training log");
    tp->add_option("--out", tpf.out_path, "checkpoint path")->required();

    // ---- restore
    auto* rs = app.add_subcommand("restore", "restore one image");
    std::string rs_in, rs_out, rs_restorer, rs_policy;
    int rs_steps = -1, rs_max_steps = 20;
    bool rs_decorr = false;
    rs->add_option("--in", rs_in, "degraded input PGM")->required();
    rs->add_option("--out", rs_out, "restored output PGM")->required();
    rs->add_option("--restorer", rs_restorer, "restorer checkpoint")->required();
    rs->add_option("--policy", rs_policy, "DQN policy checkpoint");
    rs->add_option("--steps", rs_steps, "fixed unfolding count");
    rs->add_flag("--decorr", rs_decorr, "stop by the decorrelation rule");
    rs->add_option("--max-steps", rs_max_steps, "step cap for policy/decorr stopping");

    // ---- eval
    auto* ev = app.add_subcommand("eval", "evaluate policies over a corpus");
    std::string ev_corpus, ev_task = "denoise", ev_levels = "25,35,45";
    std::string ev_restorer, ev_policy_spec = "oracle", ev_policy_ckpt;
    std::string ev_out, ev_detail;
    int ev_max_steps = 20, ev_synth = 64;
    std::uint64_t ev_seed = 1;
    ev->add_option("--corpus", ev_corpus, "PGM corpus directory (default: synthetic)");
    ev->add_option("--synthetic-count", ev_synth, "synthetic corpus size");
    ev->add_option("--task", ev_task, "denoise or deblock");
    ev->add_option("--levels", ev_levels, "levels to evaluate");
    ev->add_option("--restorer", ev_restorer, "restorer checkpoint")->required();
    ev->add_option("--policy", ev_policy_spec, "dqn | decorr | fixed:N | oracle | peak");
    ev->add_option("--policy-ckpt", ev_policy_ckpt, "policy checkpoint (for dqn)");
    ev->add_option("--max-steps", ev_max_steps, "trajectory cap");
    ev->add_option("--seed", ev_seed, "degradation seed");
    ev->add_option("--out", ev_out, "summary CSV")->required();
    ev->add_option("--detail", ev_detail, "per-image CSV");

    // ---- trajectory
    auto* tj = app.add_subcommand("trajectory", "export a per-step trajectory");
    std::string tj_in, tj_gt, tj_restorer, tj_policy, tj_csv, tj_dir;
    int tj_steps = 20;
    tj->add_option("--in", tj_in, "degraded input PGM")->required();
    tj->add_option("--gt", tj_gt, "ground-truth PGM (adds psnr/ssim columns)");
    tj->add_option("--restorer", tj_restorer, "restorer checkpoint")->required();
    tj->add_option("--policy", tj_policy, "policy checkpoint (adds q_continue column)");
    tj->add_option("--steps", tj_steps, "number of unfolding steps");
    tj->add_option("--out-csv", tj_csv, "CSV path")->required();
    tj->add_option("--out-dir", tj_dir, "directory for per-step PGMs");

    // ---- inspect-ckpt
    auto* ic = app.add_subcommand("inspect-ckpt", "print checkpoint contents");
    std::string ic_in;
    ic->add_option("--in", ic_in, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        set_num_threads(threads);

        if (*gen) {
            fs::create_directories(gen_out);
            auto corpus = generate_synthetic_corpus(gen_count, gen_w, gen_h, gen_seed);
            char name[64];
            for (size_t i = 0; i < corpus.size(); ++i) {
                std::snprintf(name, sizeof name, "img_%04zu.pgm", i);
                write_pgm(corpus[i], (fs::path(gen_out) / name).string());
            }
            std::cout << "wrote " << corpus.size() << " images to " << gen_out << "\n";
        } else if (*deg) {
            const Image img = read_pgm(deg_in);
            const Degradation task = parse_task(deg_task);
            const double level = task == Degradation::Gaussian ? deg_sigma : deg_qf;
            write_pgm(apply_degradation(img, {task, level, deg_seed}), deg_out);
        } else if (*tr) {
            TrainConfig cfg;
            cfg.task = parse_task(trf.task);
            cfg.batch = trf.batch;
            cfg.patch = trf.patch;
            cfg.restorer_lr = tr_lr;
            cfg.iterations = tr_iters;
            cfg.eval_every = tr_eval_every;
            cfg.val_fraction = tr_val_fraction;
            cfg.seed = trf.seed;
            cfg.log_path = trf.log_path;
            const Schedule schedule = Schedule::parse(tr_schedule);
            const RestorerArch arch{trf.width_scale};
            auto corpus = resolve_corpus(trf.corpus_dir, trf.synthetic_count, trf.seed);

            TrainResult result = train_restorer(corpus, schedule, arch, cfg);

            Checkpoint ckpt;
            ckpt.kind = UnitKind::Restorer;
            ckpt.params = std::move(result.params);
            ckpt.opt_state = std::move(result.opt_state);
            ckpt.metadata["seed"] = std::to_string(cfg.seed);
            ckpt.metadata["iteration"] = std::to_string(result.iterations_run);
            ckpt.metadata["schedule"] = schedule.to_string();
            ckpt.metadata["task"] = trf.task;
            ckpt.metadata["config_hash"] = config_hash_hex(
                schedule.to_string() + "|" + std::to_string(cfg.batch) + "|" +
                std::to_string(cfg.patch) + "|" + std::to_string(cfg.iterations) + "|" +
                std::to_string(cfg.seed));
            checkpoint_save(ckpt, trf.out_path);
            if (result.aborted) {
                std::cerr << "training aborted on non-finite loss; last-good checkpoint saved\n";
                return 3;
            }
            std::cout << "trained " << result.iterations_run << " iterations, best val PSNR "
                      << result.best_val_psnr << " dB\n";
        } else if (*tp) {
            Checkpoint restorer_ckpt = checkpoint_load(tp_restorer, UnitKind::Restorer);
            restorer_ckpt.params.set_requires_grad(false);

            TrainConfig cfg;
            cfg.task = parse_task(tpf.task);
            cfg.batch = tpf.batch;
            cfg.patch = tpf.patch;
            cfg.policy_lr = tp_lr;
            cfg.lambda = tp_lambda;
            cfg.gamma = tp_gamma;
            cfg.env_steps = tp_env_steps;
            cfg.max_steps = tp_max_steps;
            cfg.seed = tpf.seed;
            cfg.log_path = tpf.log_path;

            auto corpus = resolve_corpus(tpf.corpus_dir, tpf.synthetic_count, tpf.seed);
            std::vector<Image> train_images, val_images;
            split_corpus(corpus, 0.25, train_images, val_images);
            RestorationEnv env(train_images, parse_levels(tp_levels), cfg.task, cfg.patch,
                               &restorer_ckpt.params);
            const PolicyArch arch{tpf.width_scale};

            PolicyTrainResult result = train_policy_dqn(env, arch, cfg);

            Checkpoint ckpt;
            ckpt.kind = UnitKind::Policy;
            ckpt.params = std::move(result.params);
            ckpt.opt_state = std::move(result.opt_state);
            ckpt.metadata["seed"] = std::to_string(cfg.seed);
            ckpt.metadata["iteration"] = std::to_string(result.env_steps_run);
            ckpt.metadata["levels"] = tp_levels;
            ckpt.metadata["task"] = tpf.task;
            ckpt.metadata["restorer"] = tp_restorer;
            ckpt.metadata["config_hash"] = config_hash_hex(
                tp_levels + "|" + std::to_string(cfg.env_steps) + "|" +
                std::to_string(cfg.max_steps) + "|" + std::to_string(cfg.seed));
            checkpoint_save(ckpt, tpf.out_path);
            std::cout << "trained " << result.env_steps_run << " env steps, mean return "
                      << result.mean_return << ", mean stop step " << result.mean_stop_step
                      << "\n";
        } else if (*rs) {
            const Image input = read_pgm(rs_in);
            Checkpoint restorer = checkpoint_load(rs_restorer, UnitKind::Restorer);
            Image out;
            if (!rs_policy.empty()) {
                Checkpoint policy = checkpoint_load(rs_policy, UnitKind::Policy);
                DecideResult res =
                    policy_decide(input, restorer.params, policy.params, rs_max_steps);
                out = std::move(res.restored);
                std::cout << "stopped after " << res.stop_step << " steps\n";
            } else if (rs_decorr) {
                Trajectory traj = unfold_trajectory(input, restorer.params, rs_max_steps);
                const int n = decorrelation_stop_index(traj);
                out = traj.states[static_cast<size_t>(n)];
                std::cout << "decorrelation stop at step " << n << "\n";
            } else {
                const int steps = rs_steps >= 0 ? rs_steps : 8;
                Trajectory traj = unfold_trajectory(input, restorer.params, steps);
                out = traj.states.back();
            }
            out.clamp01();
            write_pgm(out, rs_out);
        } else if (*ev) {
            Checkpoint restorer = checkpoint_load(ev_restorer, UnitKind::Restorer);
            auto corpus = resolve_corpus(ev_corpus, ev_synth, ev_seed);
            std::vector<Image> train_images, val_images;
            split_corpus(corpus, 0.25, train_images, val_images);
            const auto levels = parse_levels(ev_levels);
            const Degradation task = parse_task(ev_task);

            EvalReport report;
            if (ev_policy_spec == "peak") {
                report = eval_peak_psnr(val_images, restorer.params, levels, ev_max_steps, task,
                                        ev_seed);
            } else {
                const PolicySpecifier spec = PolicySpecifier::parse(ev_policy_spec);
                std::optional<Checkpoint> policy;
                if (spec.kind == PolicySpecifier::Kind::Dqn) {
                    if (ev_policy_ckpt.empty())
                        throw UsageError("--policy dqn requires --policy-ckpt");
                    policy = checkpoint_load(ev_policy_ckpt, UnitKind::Policy);
                }
                report = eval_durr(val_images, restorer.params, spec,
                                   policy ? &policy->params : nullptr, levels, ev_max_steps,
                                   task, ev_seed);
            }
            report.write_csv(ev_out);
            if (!ev_detail.empty()) report.write_detail_csv(ev_detail);
            for (const auto& row : report.rows)
                std::cout << "level " << row.level << " policy " << row.policy << ": "
                          << row.mean_psnr << " dB, ssim " << row.mean_ssim << ", stop "
                          << row.mean_stop_step << "\n";
        } else if (*tj) {
            const Image input = read_pgm(tj_in);
            std::optional<Image> gt;
            if (!tj_gt.empty()) gt = read_pgm(tj_gt);
            Checkpoint restorer = checkpoint_load(tj_restorer, UnitKind::Restorer);
            std::optional<Checkpoint> policy;
            if (!tj_policy.empty()) policy = checkpoint_load(tj_policy, UnitKind::Policy);
            export_trajectory(input, gt ? &*gt : nullptr, restorer.params,
                              policy ? &policy->params : nullptr, tj_steps, tj_csv, tj_dir);
        } else if (*ic) {
            const Checkpoint ckpt = checkpoint_load(ic_in);
            std::cout << "kind: "
                      << (ckpt.kind == UnitKind::Restorer ? "restorer" : "policy") << "\n";
            std::cout << "version: " << kCheckpointVersion << "\n";
            std::cout << "arch: " << ckpt.params.arch << "\n";
            std::cout << "parameters: " << ckpt.params.parameter_count() << " in "
                      << ckpt.params.count() << " tensors\n";
            for (const auto& [name, t] : ckpt.params.entries())
                std::cout << "  " << name << " " << shape_str(t->shape) << " [" << t->size()
                          << "]\n";
            std::cout << "optimizer: "
                      << (ckpt.opt_state.empty()
                              ? "none"
                              : (ckpt.opt_state.method == OptMethod::Adam ? "adam" : "rmsprop"))
                      << " step " << ckpt.opt_state.step << "\n";
            for (const auto& [key, value] : ckpt.metadata)
                std::cout << "meta " << key << ": " << value << "\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace durr
