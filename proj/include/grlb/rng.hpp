#pragma once

#include <cmath>
#include <cstdint>

namespace grlb {

// Counter-based generator: value k of stream `key` is the splitmix64
// finalizer applied to key + k*golden. State is just (key, counter), which
// makes streams forkable and checkpointable, and test vectors reproducible
// across languages.
class Rng {
public:
    explicit Rng(uint64_t key = 0, uint64_t counter = 0) : key_(key), counter_(counter) {}

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t next_u64() {
        counter_++;
        return mix(key_ + counter_ * 0x9E3779B97F4A7C15ull);
    }

    // Independent stream derived from this one's key; does not consume state.
    Rng fork(uint64_t salt) const { return Rng(mix(key_ ^ mix(salt + 0x9E3779B97F4A7C15ull))); }

    // Uniform in [0, 1), 24-bit resolution (exact in float).
    float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // Standard normal via Box-Muller. The sine branch is discarded so that
    // (key, counter) fully captures generator state for checkpoint/resume.
    float normal() {
        // u1 in (0,1] so the log is finite.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        return static_cast<float>(r * std::cos(a));
    }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }
    void set_state(uint64_t key, uint64_t counter) {
        key_ = key;
        counter_ = counter;
    }

private:
    uint64_t key_;
    uint64_t counter_;
};

}  // namespace grlb
