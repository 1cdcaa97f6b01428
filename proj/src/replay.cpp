#include "fetalpose/dqn/replay.hpp"

#include "fetalpose/errors.hpp"

namespace fetalpose {

Experience materialize(const ExperienceRecord& rec, int patch_size) {
    if (!rec.volume) throw Error("experience record has no volume attached");
    Experience e;
    const size_t p3 = static_cast<size_t>(patch_size) * patch_size * patch_size;
    e.patches_t.resize(kNumLandmarks * p3);
    e.patches_t1.resize(kNumLandmarks * p3);
    for (int k = 0; k < kNumLandmarks; ++k) {
        const auto a = extract_patch(*rec.volume, rec.positions_t[k], patch_size);
        const auto b = extract_patch(*rec.volume, rec.positions_t1[k], patch_size);
        std::copy(a.begin(), a.end(), e.patches_t.begin() + k * p3);
        std::copy(b.begin(), b.end(), e.patches_t1.begin() + k * p3);
    }
    e.actions = rec.actions;
    e.rewards = rec.rewards;
    e.terminal = rec.terminal;
    return e;
}

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity), ring_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(ExperienceRecord rec) {
    std::lock_guard<std::mutex> lock(mu_);
    ring_[next_] = std::move(rec);
    next_ = (next_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
    ++pushed_;
}

std::vector<ExperienceRecord> ReplayBuffer::sample_records(size_t batch_size, Rng& rng) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (size_ < batch_size) {
        throw BufferTooSmall("replay holds " + std::to_string(size_) + " < batch " +
                             std::to_string(batch_size));
    }
    std::vector<ExperienceRecord> out;
    out.reserve(batch_size);
    const size_t oldest = (next_ + capacity_ - size_) % capacity_;
    for (size_t i = 0; i < batch_size; ++i) {
        const size_t offset = rng.uniform_index(size_);
        out.push_back(ring_[(oldest + offset) % capacity_]);
    }
    return out;
}

std::vector<Experience> ReplayBuffer::sample(size_t batch_size, int patch_size, Rng& rng) const {
    const auto records = sample_records(batch_size, rng);
    std::vector<Experience> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(materialize(r, patch_size));
    return out;
}

size_t ReplayBuffer::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return size_;
}

uint64_t ReplayBuffer::total_pushed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return pushed_;
}

std::vector<ExperienceRecord> ReplayBuffer::snapshot_all() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<ExperienceRecord> out;
    out.reserve(size_);
    const size_t oldest = (next_ + capacity_ - size_) % capacity_;
    for (size_t i = 0; i < size_; ++i) out.push_back(ring_[(oldest + i) % capacity_]);
    return out;
}

void ReplayBuffer::restore(const std::vector<ExperienceRecord>& records, uint64_t total_pushed) {
    std::lock_guard<std::mutex> lock(mu_);
    if (records.size() > capacity_) throw FormatError("replay restore exceeds capacity");
    ring_.assign(capacity_, ExperienceRecord{});
    for (size_t i = 0; i < records.size(); ++i) ring_[i] = records[i];
    size_ = records.size();
    next_ = records.size() % capacity_;
    pushed_ = total_pushed;
}

}  // namespace fetalpose
