#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "fetalpose/rng.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

// What the learner consumes: per-agent observation patches before and after
// the step, the joint action, rewards and the terminal flag.
struct Experience {
    std::vector<float> patches_t;   // [15][patch^3]
    std::vector<float> patches_t1;  // [15][patch^3]
    std::array<uint8_t, kNumLandmarks> actions{};
    std::array<float, kNumLandmarks> rewards{};
    bool terminal = false;
};

// What the buffer stores: positions plus a reference to the (episode-
// augmented) volume. Patches are pure crops, so they are regenerated exactly
// at sample time; this keeps the buffer and checkpoints small and lets a
// resumed run rebuild identical contents from (volume_index, episode_seed).
struct ExperienceRecord {
    int volume_index = -1;
    uint64_t episode_seed = 0;
    std::array<IVec3, kNumLandmarks> positions_t{};
    std::array<IVec3, kNumLandmarks> positions_t1{};
    std::array<uint8_t, kNumLandmarks> actions{};
    std::array<float, kNumLandmarks> rewards{};
    bool terminal = false;
    std::shared_ptr<const LabeledVolume> volume;  // not serialized; rebuilt on load
};

Experience materialize(const ExperienceRecord& rec, int patch_size);

// Ring buffer, oldest-overwrite, uniform sampling with replacement. push and
// sample are linearizable (one mutex); records are copied out under the lock
// so no torn reads are possible.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity);

    void push(ExperienceRecord rec);
    std::vector<ExperienceRecord> sample_records(size_t batch_size, Rng& rng) const;
    std::vector<Experience> sample(size_t batch_size, int patch_size, Rng& rng) const;

    size_t size() const;
    size_t capacity() const { return capacity_; }
    uint64_t total_pushed() const;

    // Checkpoint support: contents oldest-first, and restore.
    std::vector<ExperienceRecord> snapshot_all() const;
    void restore(const std::vector<ExperienceRecord>& records, uint64_t total_pushed);

private:
    mutable std::mutex mu_;
    size_t capacity_;
    std::vector<ExperienceRecord> ring_;
    size_t next_ = 0;
    size_t size_ = 0;
    uint64_t pushed_ = 0;
};

}  // namespace fetalpose
