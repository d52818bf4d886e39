#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace durr {

// Error taxonomy. The CLI maps these onto exit codes: UsageError -> 1,
// DataError and subclasses -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

struct ValueError : DataError {
    explicit ValueError(const std::string& msg) : DataError(msg) {}
};

struct IoError : DataError {
    explicit IoError(const std::string& msg) : DataError(msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Thread control for the OpenMP kernels. All kernels are written in gather
// form (every output element is reduced serially by exactly one thread), so
// results are bit-identical for any thread count. set_num_threads(1) selects
// the mandatory deterministic single-threaded mode; the bit pattern of every
// result is unchanged either way.
void set_num_threads(int n);
int num_threads();

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions are hand-rolled (the std ones are implementation-defined),
// so identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ULL) {
        // splitmix64 warmup to decorrelate small seeds
        for (int i = 0; i < 4; ++i) next_u64();
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection sampling, no modulo bias
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // independent child stream, stable under reordering of draws elsewhere
    Rng fork(std::uint64_t tag) const {
        return Rng(mix(s_, tag));
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        return z ^ (z >> 27);
    }

private:
    std::uint64_t s_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace durr
