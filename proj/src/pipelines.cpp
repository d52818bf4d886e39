#include "durr/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace durr {

// ---------------------------------------------------------------------------
// schedules

Schedule Schedule::refined(std::vector<std::pair<double, int>> pairs) {
    Schedule s;
    s.entries = std::move(pairs);
    if (s.entries.empty()) throw ValueError("Schedule: no entries");
    for (const auto& [level, loops] : s.entries) {
        if (loops < 1) throw ValueError("Schedule: loop count must be >= 1");
        int seen = 0;
        for (const auto& [l2, n2] : s.entries)
            if (l2 == level) ++seen;
        if (seen != 1) throw ValueError("Schedule: duplicate level " + std::to_string(level));
    }
    return s;
}

Schedule Schedule::naive(const std::vector<double>& levels, int loop_times) {
    std::vector<std::pair<double, int>> pairs;
    pairs.reserve(levels.size());
    for (double l : levels) pairs.emplace_back(l, loop_times);
    return refined(std::move(pairs));
}

Schedule Schedule::parse(const std::string& text) {
    std::vector<std::pair<double, int>> pairs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw UsageError("bad schedule entry '" + item + "' (expected level:loops)");
        try {
            pairs.emplace_back(std::stod(item.substr(0, colon)),
                               std::stoi(item.substr(colon + 1)));
        } catch (const std::exception&) {
            throw UsageError("bad schedule entry '" + item + "'");
        }
    }
    if (pairs.empty()) throw UsageError("empty schedule '" + text + "'");
    return refined(std::move(pairs));
}

int Schedule::loops_for(double level) const {
    for (const auto& [l, n] : entries)
        if (l == level) return n;
    throw ValueError("Schedule: level " + std::to_string(level) + " not in schedule");
}

std::vector<double> Schedule::levels() const {
    std::vector<double> out;
    out.reserve(entries.size());
    for (const auto& [l, n] : entries) out.push_back(l);
    return out;
}

int Schedule::max_loops() const {
    int m = 1;
    for (const auto& [l, n] : entries) m = std::max(m, n);
    return m;
}

std::string Schedule::to_string() const {
    std::string out;
    char buf[64];
    for (const auto& [l, n] : entries) {
        if (!out.empty()) out += ",";
        std::snprintf(buf, sizeof buf, "%g:%d", l, n);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// reward

double reward(double loss_prev, double loss_next, StopAction action, double lambda) {
    if (lambda <= 0.0) throw ValueError("reward: lambda must be positive");
    if (loss_prev < 0.0 || loss_next < 0.0) throw ValueError("reward: losses must be >= 0");
    if (action == StopAction::Stop) return 0.0;
    return lambda * (loss_prev - loss_next);
}

// ---------------------------------------------------------------------------
// restorer training

namespace {

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// fixed validation set: center crops degraded once per level, reused across
// rounds so plateau comparisons are stable
struct ValSet {
    std::vector<double> levels;
    std::vector<int> loops;
    // [level][image]
    std::vector<std::vector<Image>> clean;
    std::vector<std::vector<Image>> degraded;
};

Image center_crop(const Image& img, int size) {
    const int s = std::min({size, img.width, img.height});
    const int even = s - (s % 2);
    const int y0 = (img.height - even) / 2, x0 = (img.width - even) / 2;
    Image out(even, even);
    for (int y = 0; y < even; ++y)
        for (int x = 0; x < even; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
    return out;
}

ValSet make_val_set(const std::vector<Image>& val_images, const Schedule& schedule,
                    Degradation task, std::uint64_t seed) {
    ValSet vs;
    for (const auto& [level, loops] : schedule.entries) {
        vs.levels.push_back(level);
        vs.loops.push_back(loops);
    }
    vs.clean.resize(vs.levels.size());
    vs.degraded.resize(vs.levels.size());
    for (size_t li = 0; li < vs.levels.size(); ++li) {
        for (size_t i = 0; i < val_images.size(); ++i) {
            Image crop = center_crop(val_images[i], 48);
            DegradationSpec spec{task, vs.levels[li],
                                 Rng::mix(Rng::mix(seed, 0x76616c736574ULL), Rng::mix(li, i))};
            vs.clean[li].push_back(crop);
            vs.degraded[li].push_back(apply_degradation(crop, spec));
        }
    }
    return vs;
}

std::vector<double> validate(const ValSet& vs, const NetworkParams<float>& params) {
    std::vector<double> psnr_per_level(vs.levels.size(), 0.0);
    for (size_t li = 0; li < vs.levels.size(); ++li) {
        double acc = 0.0;
        for (size_t i = 0; i < vs.degraded[li].size(); ++i) {
            Image x = vs.degraded[li][i];
            const Image& x0 = vs.degraded[li][i];
            for (int n = 0; n < vs.loops[li]; ++n) x = unfold_step(x, x0, params);
            x.clamp01();
            acc += metric_psnr(x, vs.clean[li][i]);
        }
        psnr_per_level[li] = acc / static_cast<double>(vs.degraded[li].size());
    }
    return psnr_per_level;
}

}  // namespace

TrainResult train_restorer(const std::vector<Image>& corpus, const Schedule& schedule,
                           const RestorerArch& arch, const TrainConfig& cfg) {
    if (corpus.empty()) throw ValueError("train_restorer: empty corpus");
    if (cfg.patch % 2 != 0) throw ValueError("train_restorer: patch size must be even");

    std::vector<Image> train_images, val_images;
    split_corpus(corpus, cfg.val_fraction, train_images, val_images);

    NetworkParams<float> params = build_restoration_unit<float>(arch, cfg.seed);
    OptState<float> opt;
    Rng rng(Rng::mix(cfg.seed, 0x7265737472ULL));

    const ValSet vs = make_val_set(val_images, schedule, cfg.task, cfg.seed);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw IoError("cannot open log " + cfg.log_path);
        log << "iteration,lr,train_loss";
        for (double l : vs.levels) log << ",psnr_" << fmt6(l);
        log << "\n";
    }

    TrainResult result;
    NetworkParams<float> last_good = clone_params(params);
    double lr = cfg.restorer_lr;
    double best_avg = -1e30;
    int rounds_since_improve = 0;
    double loss_window = 0.0;
    int loss_count = 0;

    auto run_validation = [&](int iter) {
        const std::vector<double> per_level = validate(vs, params);
        double avg = 0.0;
        for (double p : per_level) avg += p;
        avg /= static_cast<double>(per_level.size());
        if (log.is_open()) {
            log << iter << "," << fmt6(lr) << ","
                << fmt6(loss_count ? loss_window / loss_count : 0.0);
            for (double p : per_level) log << "," << fmt6(p);
            log << "\n";
            log.flush();
        }
        loss_window = 0.0;
        loss_count = 0;
        if (avg > best_avg + cfg.plateau_min_delta) {
            best_avg = avg;
            rounds_since_improve = 0;
        } else {
            ++rounds_since_improve;
            if (rounds_since_improve >= cfg.plateau_patience) {
                lr = std::max(lr * cfg.plateau_factor, cfg.lr_floor);
                rounds_since_improve = 0;
            }
        }
        result.best_val_psnr = std::max(result.best_val_psnr, avg);
        last_good = clone_params(params);
    };

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto& [level, loops] =
            schedule.entries[static_cast<size_t>((iter - 1) % schedule.entries.size())];

        // batch of random crops from the training images, degraded at `level`
        const int s = cfg.patch;
        std::vector<float> clean(static_cast<size_t>(cfg.batch) * s * s);
        std::vector<float> degraded(clean.size());
        for (int b = 0; b < cfg.batch; ++b) {
            const auto idx = static_cast<size_t>(rng.uniform_int(train_images.size()));
            const Image& src = train_images[idx];
            const int y0 = static_cast<int>(
                rng.uniform_int(static_cast<std::uint64_t>(src.height - s + 1)));
            const int x0 = static_cast<int>(
                rng.uniform_int(static_cast<std::uint64_t>(src.width - s + 1)));
            Image patch(s, s);
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) patch.at(y, x) = src.at(y0 + y, x0 + x);
            DegradationSpec spec{cfg.task, level, rng.next_u64()};
            const Image dg = apply_degradation(patch, spec);
            std::copy(patch.pixels.begin(), patch.pixels.end(),
                      clean.begin() + static_cast<int64_t>(b) * s * s);
            std::copy(dg.pixels.begin(), dg.pixels.end(),
                      degraded.begin() + static_cast<int64_t>(b) * s * s);
        }
        auto clean_t = make_tensor<float>({cfg.batch, 1, s, s}, std::move(clean));
        auto x0_t = make_tensor<float>({cfg.batch, 1, s, s}, std::move(degraded));

        // unroll and terminal-only MSE
        TensorPtr<float> x = x0_t;
        for (int n = 0; n < loops; ++n) x = unfold_step_t(x, x0_t, params);
        auto loss = mse_loss(x, clean_t);
        const double loss_v = static_cast<double>(loss->data[0]);
        if (!std::isfinite(loss_v)) {
            result.aborted = true;
            result.params = std::move(last_good);
            result.opt_state = opt;
            result.final_lr = lr;
            result.iterations_run = iter - 1;
            return result;
        }
        loss_window += loss_v;
        ++loss_count;

        try {
            GradStore<float> grads = autodiff_backward(loss, params);
            optimizer_step(params, grads, opt, OptMethod::Adam, lr);
        } catch (const NumericError&) {
            result.aborted = true;
            result.params = std::move(last_good);
            result.opt_state = opt;
            result.final_lr = lr;
            result.iterations_run = iter - 1;
            return result;
        }

        if (iter % cfg.eval_every == 0 || iter == cfg.iterations) run_validation(iter);
    }

    result.params = std::move(params);
    result.opt_state = std::move(opt);
    result.final_lr = lr;
    result.iterations_run = cfg.iterations;
    return result;
}

// ---------------------------------------------------------------------------
// DQN policy training

RestorationEnv::RestorationEnv(std::vector<Image> corpus, std::vector<double> levels,
                               Degradation kind, int patch, const NetworkParams<float>* restorer)
    : corpus_(std::move(corpus)), levels_(std::move(levels)), kind_(kind), patch_(patch),
      restorer_(restorer) {
    if (corpus_.empty()) throw ValueError("RestorationEnv: empty corpus");
    if (levels_.empty()) throw ValueError("RestorationEnv: no levels");
    for (const auto& img : corpus_)
        if (img.width < patch_ || img.height < patch_)
            throw ValueError("RestorationEnv: image smaller than patch size");
}

RolloutEnv::Start RestorationEnv::reset(Rng& rng) {
    const auto idx = static_cast<size_t>(rng.uniform_int(corpus_.size()));
    const Image& src = corpus_[idx];
    const int y0 =
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.height - patch_ + 1)));
    const int x0 =
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.width - patch_ + 1)));
    Image patch(patch_, patch_);
    for (int y = 0; y < patch_; ++y)
        for (int x = 0; x < patch_; ++x) patch.at(y, x) = src.at(y0 + y, x0 + x);

    Start start;
    start.clean = patch;
    start.level = levels_[static_cast<size_t>(rng.uniform_int(levels_.size()))];
    DegradationSpec spec{kind_, start.level, rng.next_u64()};
    start.x0 = apply_degradation(patch, spec);
    return start;
}

Image RestorationEnv::step(const Image& x, const Image& x0) {
    return unfold_step(x, x0, *restorer_);
}

namespace {

std::vector<float> tensor_row(const TensorPtr<float>& t, int64_t row) {
    const int64_t w = t->dim(1);
    return std::vector<float>(t->data.begin() + row * w, t->data.begin() + (row + 1) * w);
}

}  // namespace

PolicyTrainResult train_policy_dqn(RolloutEnv& env, const PolicyArch& arch,
                                   const TrainConfig& cfg) {
    NetworkParams<float> online = build_policy_unit<float>(arch, cfg.seed);
    NetworkParams<float> target = clone_params(online);
    target.set_requires_grad(false);
    OptState<float> opt;
    ReplayBuffer replay(static_cast<size_t>(cfg.replay_capacity));
    Rng rng(Rng::mix(cfg.seed, 0x706f6c696379ULL));

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw IoError("cannot open log " + cfg.log_path);
        log << "env_step,epsilon,loss,episode_return,stop_step\n";
    }

    const int64_t hidden = arch.hidden();
    auto zeros_state = [&]() { return std::vector<float>(static_cast<size_t>(hidden), 0.0f); };

    bool episode_active = false;
    RolloutEnv::Start start;
    Image x;
    std::vector<float> h, c;
    int step_in_ep = 0;
    double ep_return = 0.0;

    int updates = 0;
    double window_loss = 0.0;
    int window_loss_n = 0;
    double window_return = 0.0, window_stop = 0.0;
    int window_episodes = 0;
    double trail_return = 0.0, trail_stop = 0.0;
    int trail_episodes = 0;

    const int eps_steps = std::max(1, static_cast<int>(cfg.eps_fraction * cfg.env_steps));

    auto q_eval = [&](const Image& img, const std::vector<float>& hv,
                      const std::vector<float>& cv, const NetworkParams<float>& net) {
        NoGradGuard guard;
        auto xt = image_to_tensor<float>(img);
        auto ht = make_tensor<float>({1, hidden}, hv);
        auto ct = make_tensor<float>({1, hidden}, cv);
        auto out = policy_forward(xt, ht, ct, net);
        return std::make_tuple(static_cast<double>(out.q->data[0]), tensor_row(out.h, 0),
                               tensor_row(out.c, 0));
    };

    auto do_update = [&]() {
        auto sampled = replay.sample(static_cast<size_t>(cfg.batch), rng);
        std::vector<const Transition*> batch;
        for (const auto* t : sampled)
            if (t->action == StopAction::Continue) batch.push_back(t);
        if (batch.empty()) return;

        const auto K = static_cast<int64_t>(batch.size());
        const int64_t hw = batch[0]->x.width, hh = batch[0]->x.height;
        std::vector<float> xs, nxs, hs, cs, nhs, ncs;
        xs.reserve(static_cast<size_t>(K * hw * hh));
        nxs.reserve(xs.capacity());
        for (const auto* t : batch) {
            xs.insert(xs.end(), t->x.pixels.begin(), t->x.pixels.end());
            nxs.insert(nxs.end(), t->next_x.pixels.begin(), t->next_x.pixels.end());
            hs.insert(hs.end(), t->h.begin(), t->h.end());
            cs.insert(cs.end(), t->c.begin(), t->c.end());
            nhs.insert(nhs.end(), t->next_h.begin(), t->next_h.end());
            ncs.insert(ncs.end(), t->next_c.begin(), t->next_c.end());
        }
        auto x_t = make_tensor<float>({K, 1, hh, hw}, std::move(xs));
        auto h_t = make_tensor<float>({K, hidden}, std::move(hs));
        auto c_t = make_tensor<float>({K, hidden}, std::move(cs));

        // Bellman targets from the frozen target network
        std::vector<float> y(static_cast<size_t>(K));
        {
            NoGradGuard guard;
            auto nx_t = make_tensor<float>({K, 1, hh, hw}, std::move(nxs));
            auto nh_t = make_tensor<float>({K, hidden}, std::move(nhs));
            auto nc_t = make_tensor<float>({K, hidden}, std::move(ncs));
            auto qn = policy_forward(nx_t, nh_t, nc_t, target).q;
            for (int64_t i = 0; i < K; ++i) {
                const double q_next =
                    batch[static_cast<size_t>(i)]->terminal
                        ? 0.0
                        : std::max(static_cast<double>(qn->data[static_cast<size_t>(i)]), 0.0);
                y[static_cast<size_t>(i)] = static_cast<float>(
                    batch[static_cast<size_t>(i)]->reward + cfg.gamma * q_next);
            }
        }
        auto y_t = make_tensor<float>({K, 1}, std::move(y));

        auto pred = policy_forward(x_t, h_t, c_t, online).q;
        auto loss = mse_loss(pred, y_t);
        window_loss += static_cast<double>(loss->data[0]);
        ++window_loss_n;
        GradStore<float> grads = autodiff_backward(loss, online);
        optimizer_step(online, grads, opt, OptMethod::RmsProp, cfg.policy_lr);
        ++updates;
        if (updates % cfg.target_sync == 0) {
            target = clone_params(online);
            target.set_requires_grad(false);
        }
    };

    auto finish_episode = [&](int stop_step) {
        window_return += ep_return;
        window_stop += stop_step;
        ++window_episodes;
        trail_return += ep_return;
        trail_stop += stop_step;
        ++trail_episodes;
        episode_active = false;
    };

    for (int env_step = 0; env_step < cfg.env_steps; ++env_step) {
        if (!episode_active) {
            start = env.reset(rng);
            x = start.x0;
            h = zeros_state();
            c = zeros_state();
            step_in_ep = 0;
            ep_return = 0.0;
            episode_active = true;
        }

        const double frac = std::min(1.0, static_cast<double>(env_step) / eps_steps);
        const double epsilon = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;

        auto [q, h_next, c_next] = q_eval(x, h, c, online);
        const bool explore = rng.uniform() < epsilon;
        const bool go_on = explore ? (rng.uniform() < 0.5) : (q > 0.0);

        if (go_on) {
            Image x_next = env.step(x, start.x0);
            const double r = reward(image_mse(x, start.clean), image_mse(x_next, start.clean),
                                    StopAction::Continue, cfg.lambda);
            const bool terminal = step_in_ep + 1 >= cfg.max_steps;
            Transition t;
            t.x = x;
            t.h = h;
            t.c = c;
            t.action = StopAction::Continue;
            t.reward = r;
            t.next_x = x_next;
            t.next_h = h_next;
            t.next_c = c_next;
            t.terminal = terminal;
            replay.push(std::move(t));
            x = std::move(x_next);
            h = std::move(h_next);
            c = std::move(c_next);
            ep_return += r;
            ++step_in_ep;
            if (terminal) finish_episode(step_in_ep);
        } else {
            Transition t;
            t.x = x;
            t.h = h;
            t.c = c;
            t.action = StopAction::Stop;
            t.reward = reward(0.0, 0.0, StopAction::Stop, cfg.lambda);
            t.next_x = x;
            t.next_h = h_next;
            t.next_c = c_next;
            t.terminal = true;
            replay.push(std::move(t));
            finish_episode(step_in_ep);
        }

        if (replay.size() >= static_cast<size_t>(cfg.replay_warmup)) do_update();

        if (log.is_open() && (env_step + 1) % 50 == 0) {
            log << (env_step + 1) << "," << fmt6(epsilon) << ","
                << fmt6(window_loss_n ? window_loss / window_loss_n : 0.0) << ","
                << fmt6(window_episodes ? window_return / window_episodes : 0.0) << ","
                << fmt6(window_episodes ? window_stop / window_episodes : 0.0) << "\n";
            log.flush();
            window_loss = 0.0;
            window_loss_n = 0;
            window_return = 0.0;
            window_stop = 0.0;
            window_episodes = 0;
        }
    }

    PolicyTrainResult result;
    result.params = std::move(online);
    result.opt_state = std::move(opt);
    result.env_steps_run = cfg.env_steps;
    result.mean_return = trail_episodes ? trail_return / trail_episodes : 0.0;
    result.mean_stop_step = trail_episodes ? trail_stop / trail_episodes : 0.0;
    return result;
}

}  // namespace durr
