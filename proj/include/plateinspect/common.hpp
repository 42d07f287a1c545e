#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace plateinspect {

// Deterministic, platform-stable RNG: xoshiro256** seeded via splitmix64.
// std::mt19937 + distributions are implementation-defined, which would break
// byte-reproducible corpora and RANSAC runs, so all randomness flows through
// this class.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    // Independent stream derived from (seed, stream_id); parallel generation
    // over samples stays identical to serial generation.
    static Rng derive(uint64_t seed, uint64_t stream_id) {
        uint64_t x = seed;
        uint64_t a = splitmix64(x);
        x ^= stream_id * 0x9e3779b97f4a7c15ULL;
        return Rng(a ^ splitmix64(x));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n), n >= 1 (Lemire-style rejection).
    uint64_t uniform_int(uint64_t n) {
        uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<uint64_t>(m);
        if (lo < n) {
            uint64_t t = (-n) % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller (pair cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feature matching / RANSAC could not produce a usable model.
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reference could not be aligned to the captured plate; the pipeline maps
// this to the defective_unverifiable verdict.
struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DetectorUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when the training loss goes non-finite.
struct TrainingDivergedError : std::runtime_error {
    TrainingDivergedError(const std::string& msg, int epoch, int batch_index, double last_lr)
        : std::runtime_error(msg), epoch(epoch), batch_index(batch_index), last_lr(last_lr) {}
    int epoch;
    int batch_index;
    double last_lr;
};

}  // namespace plateinspect
