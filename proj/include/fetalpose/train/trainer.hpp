#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "fetalpose/augment.hpp"
#include "fetalpose/dqn/policy.hpp"
#include "fetalpose/dqn/replay.hpp"
#include "fetalpose/train/config.hpp"
#include "fetalpose/train/global_model.hpp"
#include "fetalpose/train/metrics.hpp"

namespace fetalpose {

struct Dataset {
    std::vector<std::shared_ptr<const LabeledVolume>> volumes;

    static Dataset from_manifest(const std::string& manifest_path);
    static Dataset from_volumes(std::vector<LabeledVolume> vols);
};

// The volume an episode runs on: the manifest volume, augmented under
// episode_seed when augmentation is enabled. Deterministic, so replay records
// and resumed actors can rebuild it exactly.
std::shared_ptr<const LabeledVolume> make_episode_volume(const Dataset& data, int volume_index,
                                                         uint64_t episode_seed,
                                                         const RunConfig& cfg);

struct TrainCounters {
    std::atomic<uint64_t> actor_steps{0};
    std::atomic<uint64_t> gradients_pushed{0};
    std::atomic<uint64_t> snapshot_fetches{0};
    std::atomic<uint64_t> checksum_mismatches{0};
};

// Rolls out epsilon-greedy episodes on augmented volumes with a periodically
// refreshed parameter snapshot, pushing one experience per step. Never
// mutates shared parameters.
class Actor {
public:
    Actor(int id, const RunConfig& cfg, const PoseGraph& graph, const Dataset& data,
          ReplayBuffer& replay, GlobalModel& global, TrainCounters& counters);

    void step_once();

    struct State {
        std::string rng;
        int volume_index = -1;
        uint64_t episode_seed = 0;
        int t = 0;
        bool active = false;
        uint64_t local_steps = 0;
        std::array<IVec3, kNumLandmarks> positions{};
    };
    State get_state() const;
    void set_state(const State& s);

    // The actor's working copy of the policy parameters (the snapshot it last
    // fetched). Checkpointed so a resumed actor acts on the same policy until
    // its next scheduled fetch.
    nn::QNetwork<float>& net() { return net_; }

private:
    void begin_episode();
    void fetch_snapshot();

    int id_;
    const RunConfig& cfg_;
    const PoseGraph& graph_;
    const Dataset& data_;
    ReplayBuffer& replay_;
    GlobalModel& global_;
    TrainCounters& counters_;
    EpsilonSchedule eps_;
    Rng rng_;
    nn::QNetwork<float> net_;

    std::shared_ptr<const LabeledVolume> volume_;
    int volume_index_ = -1;
    uint64_t episode_seed_ = 0;
    int t_ = 0;
    uint64_t local_steps_ = 0;
    std::array<IVec3, kNumLandmarks> positions_{};
};

// Copies the published global model, samples a batch, computes the DQN loss
// gradient and pushes it to the global optimizer, tagged with the source
// version.
class Learner {
public:
    Learner(int id, const RunConfig& cfg, ReplayBuffer& replay, GlobalModel& global,
            TrainCounters& counters);

    // Returns the loss of this step. Throws BufferTooSmall until the replay
    // holds a batch.
    double step_once();

    std::string rng_state() const { return rng_.serialize(); }
    void set_rng_state(const std::string& s) { rng_.deserialize(s); }

private:
    int id_;
    const RunConfig& cfg_;
    ReplayBuffer& replay_;
    GlobalModel& global_;
    TrainCounters& counters_;
    Rng rng_;
    nn::QNetwork<float> net_;
    nn::QNetwork<float> target_;
};

class Trainer {
public:
    Trainer(RunConfig cfg, Dataset data);

    void init_fresh();

    // Writes metrics (and periodic checkpoints when configured) under dir.
    void set_output(const std::string& dir, bool append_metrics = false);

    // Runs until total_learner_steps gradient applications (or stop/wall
    // limit). Synchronous mode interleaves one actor step with one learner
    // step on the calling thread; asynchronous mode spawns the threads.
    void run();
    void request_stop() { stop_.store(true); }

    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);

    GlobalModel& global() { return global_; }
    ReplayBuffer& replay() { return replay_; }
    const TrainCounters& counters() const { return counters_; }
    const RunConfig& config() const { return cfg_; }
    const PoseGraph& graph() const { return graph_; }

    // Deep copy of the current global parameters (for in-process evaluation).
    nn::QNetwork<float> current_params();

private:
    void run_sync();
    void run_async();
    void maybe_periodic_output(uint64_t step, double loss);
    double eps_now() const {
        return EpsilonSchedule{cfg_.eps_start, cfg_.eps_end, cfg_.eps_decay_steps}.at(
            counters_.actor_steps.load());
    }

    RunConfig cfg_;
    Dataset data_;
    PoseGraph graph_;
    ReplayBuffer replay_;
    GlobalModel global_;
    TrainCounters counters_;
    std::vector<std::unique_ptr<Actor>> actors_;
    std::vector<std::unique_ptr<Learner>> learners_;
    MetricsWriter metrics_;
    std::string out_dir_;
    std::atomic<bool> stop_{false};
};

// Reads just the embedded config of a checkpoint (for resume).
RunConfig read_checkpoint_config(const std::string& path);

// Loads the config and global parameters only — no replay or actor state —
// which is all evaluation and tracing need.
std::pair<RunConfig, nn::QNetwork<float>> load_checkpoint_params(const std::string& path);

}  // namespace fetalpose
