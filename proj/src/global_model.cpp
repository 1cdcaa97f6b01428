#include "fetalpose/train/global_model.hpp"

#include <cstring>

#include "fetalpose/errors.hpp"

namespace fetalpose {

uint64_t fnv1a64(const void* data, size_t bytes, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

GlobalModel::GlobalModel(const nn::NetConfig& net_cfg, double lr, double clip,
                         uint64_t target_sync_period)
    : params_(net_cfg),
      target_(net_cfg),
      lr_(lr),
      clip_(clip),
      target_sync_period_(target_sync_period) {
    opt_.init(params_.params());
}

void GlobalModel::init(uint64_t seed) {
    std::lock_guard<std::mutex> lock(mu_);
    params_.init(seed);
    params_.version = 0;
    target_ = params_;
    opt_.init(params_.params());
    version_ = 0;
    applied_ = 0;
    auto snap = make_snapshot_locked();
    std::lock_guard<std::mutex> slock(snap_mu_);
    snap_ = std::move(snap);
}

std::vector<float> GlobalModel::flatten_state(nn::QNetwork<float>& net) {
    std::vector<float> flat;
    for (const auto& ref : net.state_tensors()) {
        flat.insert(flat.end(), ref.tensor->data.begin(), ref.tensor->data.end());
    }
    return flat;
}

std::shared_ptr<const ParamSnapshot> GlobalModel::make_snapshot_locked() {
    auto snap = std::make_shared<ParamSnapshot>();
    snap->params_flat = flatten_state(params_);
    snap->target_flat = flatten_state(target_);
    snap->version = version_.load();
    uint64_t h = fnv1a64(snap->params_flat.data(), snap->params_flat.size() * sizeof(float));
    h = fnv1a64(snap->target_flat.data(), snap->target_flat.size() * sizeof(float), h);
    snap->checksum = h;
    return snap;
}

uint64_t GlobalModel::apply(const GradientMsg& msg) {
    std::lock_guard<std::mutex> lock(mu_);
    auto params = params_.params();
    if (msg.grads.size() != params.size()) throw ShapeMismatch("gradient message tensor count");
    for (size_t i = 0; i < params.size(); ++i) {
        if (msg.grads[i].size() != params[i].tensor->size()) {
            throw ShapeMismatch("gradient message size at " + params[i].name);
        }
        params[i].tensor->grad = msg.grads[i];
    }
    uint64_t v = version_.load();
    nn::adam_step(params, opt_, lr_, clip_, &v);
    params_.version = v;
    version_.store(v);
    params_.fold_batch_stats(msg.bn_stats);
    applied_.fetch_add(1);
    last_loss_ = msg.loss;

    if (target_sync_period_ > 0 && v % target_sync_period_ == 0) {
        target_ = params_;
    }

    auto snap = make_snapshot_locked();
    {
        std::lock_guard<std::mutex> slock(snap_mu_);
        snap_ = std::move(snap);
    }
    return v;
}

std::shared_ptr<const ParamSnapshot> GlobalModel::snapshot() const {
    std::lock_guard<std::mutex> slock(snap_mu_);
    return snap_;
}

double GlobalModel::last_loss() const {
    std::lock_guard<std::mutex> lock(mu_);
    return last_loss_;
}

void GlobalModel::set_version(uint64_t v) {
    // Versions are gap-free (+1 per application), so the applied count is the
    // version.
    version_.store(v);
    applied_.store(v);
    params_.version = v;
}

void GlobalModel::publish_current() {
    std::lock_guard<std::mutex> lock(mu_);
    auto snap = make_snapshot_locked();
    std::lock_guard<std::mutex> slock(snap_mu_);
    snap_ = std::move(snap);
}

namespace {

void load_flat(const std::vector<float>& flat, nn::QNetwork<float>& dst) {
    size_t off = 0;
    for (auto& ref : dst.state_tensors()) {
        if (off + ref.tensor->size() > flat.size()) {
            throw ShapeMismatch("snapshot shorter than network state");
        }
        std::copy(flat.begin() + off, flat.begin() + off + ref.tensor->size(),
                  ref.tensor->data.begin());
        off += ref.tensor->size();
    }
    if (off != flat.size()) throw ShapeMismatch("snapshot longer than network state");
}

}  // namespace

void GlobalModel::load_snapshot_params(const ParamSnapshot& snap, nn::QNetwork<float>& dst) {
    load_flat(snap.params_flat, dst);
    dst.version = snap.version;
}

void GlobalModel::load_snapshot_target(const ParamSnapshot& snap, nn::QNetwork<float>& dst) {
    load_flat(snap.target_flat, dst);
}

}  // namespace fetalpose
