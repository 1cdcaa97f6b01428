#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fetalpose/nn/qnet.hpp"
#include "fetalpose/phantom.hpp"
#include "fetalpose/reward.hpp"

namespace fetalpose {

// Everything a run needs, with working defaults for every field. Sources
// layer as: built-in defaults, then config file, then command-line overrides.
struct RunConfig {
    uint64_t seed = 1234;
    std::string out_dir = "out";

    // Network preset: paper | desk | tiny.
    std::string preset = "desk";

    PhantomSpec phantom;
    RewardConfig reward;

    // Training (defaults follow the reference protocol: 4 actors, 4 learners,
    // batch 3, lr 3e-4, clip 50, action step 1).
    int n_actors = 4;
    int m_learners = 4;
    int batch_size = 3;
    double lr = 3e-4;
    double clip = 50.0;
    double gamma = 0.9;
    uint64_t target_sync_period = 2500;
    uint64_t replay_capacity = 4096;
    uint64_t actor_snapshot_period = 64;
    uint64_t total_learner_steps = 2000;
    uint64_t warmup = 3;  // replay size before the first learner step
    int episode_horizon = 60;
    int action_step = 1;
    bool synchronous = false;  // 1 actor / 1 learner, interleaved, deterministic
    double eps_start = 1.0;
    double eps_end = 0.1;
    uint64_t eps_decay_steps = 50000;
    double inner_fraction = 0.15;
    bool augment = true;
    double augment_scale_lo = 0.8;
    double augment_scale_hi = 1.5;
    uint64_t checkpoint_period = 0;  // learner steps between checkpoints; 0 = final only
    uint64_t metrics_period = 25;
    double max_wall_seconds = 0.0;  // 0 = unlimited

    // Evaluation.
    int eval_repeats = 3;
    double eval_threshold_mm = 10.0;
    int eval_max_steps = 100;

    void apply_kv(const std::string& key, const std::string& value);  // throws ConfigError
    std::vector<std::pair<std::string, std::string>> to_kv() const;   // canonical order
    std::string to_text() const;                                      // "key = value" lines
    void validate() const;                                            // throws ConfigError
};

// Parses "key = value" lines ('#' comments, blank lines ignored) on top of
// the given base config.
RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig{});
RunConfig load_config_file(const std::string& path, RunConfig base = RunConfig{});

nn::NetConfig make_net_config(const RunConfig& cfg);

}  // namespace fetalpose
