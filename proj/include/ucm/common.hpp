#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ucm {

// Error taxonomy. The CLI maps these onto exit codes: config/usage -> 2,
// I/O and file-format problems -> 3, verification failures -> 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct VersionError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ResourceError : Error {
    using Error::Error;
};

// Deterministic RNG: mt19937_64 core (portable by the standard) with
// hand-rolled distributions, so streams are bit-identical across stdlibs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased via rejection
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::uniform_below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // standard normal, Box-Muller
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
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// NaN/Inf detection on op outputs. Off by default; tests and debugging turn
// it on explicitly.
void set_debug_check_finite(bool enabled);
bool debug_check_finite_enabled();

// Byte budget for the dense (H*W)^2 position-attention map; exceeding it is
// a ResourceError that reports the required size.
void set_attention_memory_budget(std::uint64_t bytes);
std::uint64_t attention_memory_budget();

// Keeps large allocations on the reusable heap instead of mmap so the big
// per-batch attention buffers do not re-fault every step. Idempotent.
void tune_allocator_for_training();

}  // namespace ucm
