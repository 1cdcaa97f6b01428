#pragma once

#include <array>
#include <cstdint>

#include "fetalpose/pose_graph.hpp"
#include "fetalpose/rng.hpp"

namespace fetalpose {

// Linear decay eps_start -> eps_end over decay_steps, constant afterwards.
struct EpsilonSchedule {
    double eps_start = 1.0;
    double eps_end = 0.1;
    uint64_t decay_steps = 50000;

    double at(uint64_t step) const {
        if (decay_steps == 0 || step >= decay_steps) return eps_end;
        return eps_start + (eps_end - eps_start) * (static_cast<double>(step) / decay_steps);
    }
};

// Greedy argmax per agent (ties to the lowest action index), replaced by a
// uniform action with probability eps, independently per agent.
template <class T>
std::array<int, kNumLandmarks> select_actions(const T* q, double eps, Rng& rng) {
    std::array<int, kNumLandmarks> out{};
    for (int k = 0; k < kNumLandmarks; ++k) {
        if (eps > 0.0 && rng.uniform_real() < eps) {
            out[k] = static_cast<int>(rng.uniform_index(kNumActions));
        } else {
            const T* row = q + k * kNumActions;
            int best = 0;
            for (int a = 1; a < kNumActions; ++a) {
                if (row[a] > row[best]) best = a;
            }
            out[k] = best;
        }
    }
    return out;
}

// One-step bootstrapped target; the max term is dropped on terminal samples.
inline double td_target(double reward, double max_next_q, double gamma, bool terminal) {
    return terminal ? reward : reward + gamma * max_next_q;
}

}  // namespace fetalpose
