#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "fetalpose/nn/adam.hpp"
#include "fetalpose/nn/qnet.hpp"

namespace fetalpose {

// Gradient bundle pushed by a learner: per-tensor gradients in canonical
// parameter order, the batch statistics of the learner's batch-norm forward,
// and the parameter version the gradient was computed at. Stale versions are
// applied like any other (pure asynchrony).
struct GradientMsg {
    std::vector<std::vector<float>> grads;
    std::vector<nn::BnStats> bn_stats;
    uint64_t source_version = 0;
    double loss = 0.0;
};

// Immutable published copy of the global model (theta and theta^-), flattened
// in state-tensor order. checksum covers both buffers.
struct ParamSnapshot {
    std::vector<float> params_flat;
    std::vector<float> target_flat;
    uint64_t version = 0;
    uint64_t checksum = 0;
};

uint64_t fnv1a64(const void* data, size_t bytes, uint64_t seed = 1469598103934665603ull);

// The single authoritative parameter copy plus its frozen target. Gradient
// applications are serialized under one mutex; a fresh snapshot is published
// after every application, and the target is refreshed every
// target_sync_period applications.
class GlobalModel {
public:
    GlobalModel(const nn::NetConfig& net_cfg, double lr, double clip,
                uint64_t target_sync_period);

    void init(uint64_t seed);

    uint64_t apply(const GradientMsg& msg);

    std::shared_ptr<const ParamSnapshot> snapshot() const;

    uint64_t version() const { return version_.load(); }
    uint64_t applied_count() const { return applied_.load(); }
    double last_loss() const;

    // Quiesced access for checkpointing (no concurrent apply allowed).
    nn::QNetwork<float>& params_unlocked() { return params_; }
    nn::QNetwork<float>& target_unlocked() { return target_; }
    nn::AdamState<float>& opt_unlocked() { return opt_; }
    void set_version(uint64_t v);
    void publish_current();  // re-publish after external mutation (restore)

    // Loads a snapshot into a network (canonical state-tensor order).
    static void load_snapshot_params(const ParamSnapshot& snap, nn::QNetwork<float>& dst);
    static void load_snapshot_target(const ParamSnapshot& snap, nn::QNetwork<float>& dst);
    static std::vector<float> flatten_state(nn::QNetwork<float>& net);

private:
    std::shared_ptr<const ParamSnapshot> make_snapshot_locked();

    mutable std::mutex mu_;
    nn::QNetwork<float> params_;
    nn::QNetwork<float> target_;
    nn::AdamState<float> opt_;
    double lr_;
    double clip_;
    uint64_t target_sync_period_;
    std::atomic<uint64_t> version_{0};
    std::atomic<uint64_t> applied_{0};
    double last_loss_ = 0.0;

    mutable std::mutex snap_mu_;
    std::shared_ptr<const ParamSnapshot> snap_;
};

}  // namespace fetalpose
