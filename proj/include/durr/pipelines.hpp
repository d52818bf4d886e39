#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "durr/degrade.hpp"
#include "durr/image.hpp"
#include "durr/optim.hpp"
#include "durr/policy.hpp"
#include "durr/restorer.hpp"

namespace durr {

// Training schedule: per degradation level, the number of unfolding steps.
// The naive policy assigns one fixed count to every level.
struct Schedule {
    std::vector<std::pair<double, int>> entries;

    static Schedule refined(std::vector<std::pair<double, int>> pairs);
    static Schedule naive(const std::vector<double>& levels, int loop_times);
    // "25:4,35:6,45:9"
    static Schedule parse(const std::string& text);

    int loops_for(double level) const;
    std::vector<double> levels() const;
    int max_loops() const;
    std::string to_string() const;
};

enum class StopAction { Continue, Stop };

// Per-step reward: lambda * (loss_prev - loss_next) on continue, 0 on stop.
// Negative when the step made things worse. Episode sums telescope to
// lambda * (L(x_0) - L(x_N)).
double reward(double loss_prev, double loss_next, StopAction action, double lambda);

struct TrainConfig {
    int batch = 24;
    int patch = 64;
    double restorer_lr = 1e-3;    // Adam
    double policy_lr = 1e-4;      // RMSprop
    double plateau_factor = 0.1;  // lr scale on validation plateau
    int plateau_patience = 5;     // evaluation rounds without improvement
    double plateau_min_delta = 0.01;  // dB
    double lr_floor = 1e-6;
    double lambda = 100.0;  // reward scale
    double gamma = 0.99;    // DQN discount
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_fraction = 0.3;  // fraction of env steps for the linear decay
    int replay_capacity = 10000;
    int replay_warmup = 500;
    int target_sync = 200;  // updates between target network syncs
    std::uint64_t seed = 1;
    int iterations = 2000;  // restorer optimizer steps
    int env_steps = 4000;   // DQN environment steps
    int max_steps = 20;     // episode cap
    int eval_every = 50;    // iterations per validation round
    double val_fraction = 0.25;
    Degradation task = Degradation::Gaussian;
    std::string log_path;  // append-only CSV; empty disables logging
};

struct TrainResult {
    NetworkParams<float> params;
    OptState<float> opt_state;
    bool aborted = false;  // non-finite loss hit; params hold the last good state
    double final_lr = 0.0;
    int iterations_run = 0;
    double best_val_psnr = 0.0;
};

// Supervised training of the restoration unit under a schedule. Each batch
// draws one scheduled level, unrolls exactly loops_for(level) steps from the
// degraded patches, and minimizes MSE at the terminal state only (BPTT
// through every step). Adam with plateau-decayed learning rate. On a
// non-finite loss the last validated parameters are returned with `aborted`.
TrainResult train_restorer(const std::vector<Image>& corpus, const Schedule& schedule,
                           const RestorerArch& arch, const TrainConfig& cfg);

// One DQN transition. State snapshots carry the image patch plus the LSTM
// state so Bellman targets replay the recurrent state faithfully.
struct Transition {
    Image x;
    std::vector<float> h, c;
    StopAction action = StopAction::Continue;
    double reward = 0.0;
    Image next_x;
    std::vector<float> next_h, next_c;
    bool terminal = false;
};

// FIFO-bounded uniform-sampling replay buffer.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ValueError("ReplayBuffer: capacity must be positive");
    }

    void push(Transition t) {
        if (buffer_.size() == capacity_) buffer_.pop_front();
        buffer_.push_back(std::move(t));
    }

    size_t size() const { return buffer_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& at(size_t i) const { return buffer_[i]; }

    std::vector<const Transition*> sample(size_t count, Rng& rng) const {
        if (buffer_.empty()) throw ValueError("ReplayBuffer: sample from empty buffer");
        std::vector<const Transition*> out;
        out.reserve(count);
        for (size_t i = 0; i < count; ++i)
            out.push_back(&buffer_[static_cast<size_t>(rng.uniform_int(buffer_.size()))]);
        return out;
    }

private:
    std::deque<Transition> buffer_;
    size_t capacity_;
};

// Episode dynamics the DQN trainer rolls against. The production environment
// wraps the frozen restoration unit; tests substitute synthetic dynamics.
class RolloutEnv {
public:
    virtual ~RolloutEnv() = default;
    struct Start {
        Image x0;
        Image clean;
        double level = 0.0;
    };
    virtual Start reset(Rng& rng) = 0;
    virtual Image step(const Image& x, const Image& x0) = 0;
};

// Degrades random patches and steps them through a frozen restoration unit.
class RestorationEnv : public RolloutEnv {
public:
    RestorationEnv(std::vector<Image> corpus, std::vector<double> levels, Degradation kind,
                   int patch, const NetworkParams<float>* restorer);
    Start reset(Rng& rng) override;
    Image step(const Image& x, const Image& x0) override;

private:
    std::vector<Image> corpus_;
    std::vector<double> levels_;
    Degradation kind_;
    int patch_;
    const NetworkParams<float>* restorer_;
};

struct PolicyTrainResult {
    NetworkParams<float> params;
    OptState<float> opt_state;
    int env_steps_run = 0;
    double mean_return = 0.0;     // over the trailing window
    double mean_stop_step = 0.0;  // over the trailing window
};

// Deep Q-learning of the stopping policy against a frozen environment:
// epsilon-greedy rollouts, FIFO replay, Bellman target
// r + gamma * max(q_target(s'), 0) with Q(stop) = 0 and terminal masking,
// periodically synced target network, RMSprop updates.
PolicyTrainResult train_policy_dqn(RolloutEnv& env, const PolicyArch& arch,
                                   const TrainConfig& cfg);

}  // namespace durr
