#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace fetalpose {

// All randomness in the project flows from one root seed through named
// substreams ("data", "init", "actor-0", "eval-2", ...), so any component can
// be reproduced in isolation. The engine is std::mt19937_64 (deterministic by
// the standard); distributions are hand-rolled because the standard library's
// distribution algorithms are implementation-defined.

uint64_t hash_stream_name(const std::string& name);

// SplitMix64 finalizer; good avalanche for seed derivation.
uint64_t mix64(uint64_t x);

// Seed of the substream `name[index]` under `root`.
uint64_t derive_seed(uint64_t root, const std::string& name, uint64_t index = 0);

class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, n). Modulo bias is ~n/2^64, far below anything our
    // statistical tests can resolve.
    uint64_t uniform_index(uint64_t n) { return engine_() % n; }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    bool bernoulli(double p) { return uniform_real() < p; }

    // Box-Muller, no cached second value so the engine state is the whole state.
    double normal(double mean = 0.0, double stddev = 1.0);

    std::string serialize() const;
    void deserialize(const std::string& text);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace fetalpose
