// Kernel benchmark: the OpenMP gather kernels against the serial naive
// reference, plus a full restorer-step timing. Run manually:
//   build/bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "durr/common.hpp"
#include "durr/ops.hpp"
#include "durr/reference.hpp"
#include "durr/restorer.hpp"

using durr::Rng;
using durr::TensorPtr;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct ConvCase {
    const char* name;
    int64_t B, Ci, H, W, Co, k, stride, dilation, padding;
};

double gmacs(const ConvCase& c, double ms) {
    const int64_t Ho = durr::conv_out_dim(c.H, c.k, c.stride, c.dilation, c.padding);
    const int64_t Wo = durr::conv_out_dim(c.W, c.k, c.stride, c.dilation, c.padding);
    const double macs = static_cast<double>(c.B) * c.Co * Ho * Wo * c.Ci * c.k * c.k;
    return macs / (ms * 1e6);
}

template <typename T>
void bench_conv(const ConvCase& c, int repeats) {
    Rng rng(7);
    auto x = durr::randn<T>({c.B, c.Ci, c.H, c.W}, rng);
    auto w = durr::randn<T>({c.Co, c.Ci, c.k, c.k}, rng);
    auto b = durr::randn<T>({c.Co}, rng);

    // naive serial reference
    double t0 = now_ms();
    auto ref = durr::ref::conv2d_naive(x->data, c.B, c.Ci, c.H, c.W, w->data, c.Co, c.k, b->data,
                                       c.stride, c.dilation, c.padding);
    double naive_ms = now_ms() - t0;

    // OpenMP kernel
    TensorPtr<T> out;
    t0 = now_ms();
    for (int r = 0; r < repeats; ++r)
        out = durr::conv2d(x, w, b, static_cast<int>(c.stride), static_cast<int>(c.dilation),
                           static_cast<int>(c.padding));
    const double fast_ms = (now_ms() - t0) / repeats;

    double max_err = 0.0;
    for (size_t i = 0; i < ref.size(); ++i)
        max_err = std::max(max_err, std::abs(static_cast<double>(ref[i] - out->data[i])));

    std::printf("%-26s naive %8.2f ms (%5.2f GMAC/s)   omp %8.2f ms (%5.2f GMAC/s)   x%5.1f   maxerr %.2e\n",
                c.name, naive_ms, gmacs(c, naive_ms), fast_ms, gmacs(c, fast_ms),
                naive_ms / fast_ms, max_err);
}

void bench_restorer_step(int repeats) {
    durr::RestorerArch arch{0.25};
    auto params = durr::build_restoration_unit<float>(arch, 11);
    Rng rng(3);
    auto x = durr::randn<float>({16, 1, 32, 32}, rng);

    durr::NoGradGuard guard;
    double t0 = now_ms();
    for (int r = 0; r < repeats; ++r) (void)durr::unfold_step_t(x, x, params);
    const double ms = (now_ms() - t0) / repeats;
    std::printf("%-26s %8.2f ms per step (batch 16, 32x32, width 0.25)\n", "restorer unfold",
                ms);

    // training step: forward + backward through a 4-step unroll
    params.set_requires_grad(true);
    durr::GradMode::set(true);
    t0 = now_ms();
    const int train_reps = std::max(1, repeats / 4);
    for (int r = 0; r < train_reps; ++r) {
        auto xt = x;
        for (int n = 0; n < 4; ++n) xt = durr::unfold_step_t(xt, x, params);
        auto loss = durr::mse_loss(xt, x);
        params.zero_grads();
        durr::backward(loss);
    }
    const double train_ms = (now_ms() - t0) / train_reps;
    std::printf("%-26s %8.2f ms per iteration (4-step unroll fwd+bwd)\n", "restorer train iter",
                train_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::stoi(argv[1]) : 5;
    std::printf("threads: %d\n", durr::num_threads());

    const ConvCase cases[] = {
        {"conv 3x3 s1 16ch 32px", 16, 16, 32, 32, 16, 3, 1, 1, 1},
        {"conv 3x3 s2 8->16 32px", 16, 8, 32, 32, 16, 3, 2, 1, 1},
        {"conv 3x3 d2 16ch 16px", 16, 16, 16, 16, 16, 3, 1, 2, 2},
        {"conv 5x5 s1 2->8 32px", 16, 2, 32, 32, 8, 5, 1, 1, 2},
        {"conv 3x3 s1 64ch 64px", 4, 64, 64, 64, 64, 3, 1, 1, 1},
    };
    std::printf("-- float32 --\n");
    for (const auto& c : cases) bench_conv<float>(c, repeats);
    std::printf("-- float64 --\n");
    for (const auto& c : cases) bench_conv<double>(c, repeats);
    std::printf("-- composite --\n");
    bench_restorer_step(repeats);
    return 0;
}
