#pragma once

#include <array>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fetalpose/nn/graph_layer.hpp"
#include "fetalpose/nn/layers.hpp"
#include "fetalpose/pose_graph.hpp"
#include "fetalpose/rng.hpp"

namespace fetalpose::nn {

// One encoder block: conv(k3, s2) + BN + ReLU, conv(k3, s1) + BN + ReLU,
// then stride-2 max pooling. Only the first conv strides; striding both (as a
// literal reading of the architecture caption would have it) collapses a 48^3
// patch below one voxel before the last block.
struct EncoderConfig {
    std::vector<int> channels{8, 16};
    int patch_size = 24;
};

struct NetConfig {
    EncoderConfig encoder;
    std::vector<int> graph_widths{256, 128, 6};

    // Full-size architecture: 4 blocks of 32/64/128/256 channels on 48^3
    // observations, graph widths 256/128/6.
    static NetConfig paper() {
        NetConfig c;
        c.encoder.channels = {32, 64, 128, 256};
        c.encoder.patch_size = 48;
        return c;
    }
    // CPU-tractable default: same family, 2 blocks on 24^3 observations.
    static NetConfig desk() { return NetConfig{}; }
    // Gradient-check scale: 1 block, 8 channels, 8^3 observations.
    static NetConfig tiny() {
        NetConfig c;
        c.encoder.channels = {8};
        c.encoder.patch_size = 8;
        c.graph_widths = {16, 8, 6};
        return c;
    }
};

struct BnStats {
    std::vector<double> mean, var;
};

enum class ForwardMode {
    train,  // batch statistics, activations recorded for backward
    train_no_record,  // batch statistics only (finite-difference evaluations)
    eval,   // running statistics, nothing recorded
};

template <class T>
class QNetwork {
public:
    explicit QNetwork(const NetConfig& cfg = NetConfig{},
                      const PoseGraph& graph = build_fetal_graph())
        : cfg_(cfg) {
        const auto mask = build_adjacency_mask(graph);
        support_ = mask.A;

        int prev = 1;
        int side = cfg.encoder.patch_size;
        for (int ch : cfg.encoder.channels) {
            blocks_.push_back(std::make_unique<Block>(prev, ch));
            side = Block::out_side(side);
            prev = ch;
        }
        if (side < 1) throw ShapeMismatch("encoder collapses below one voxel");
        feature_side_ = side;
        feature_width_ = prev * side * side * side;

        if (cfg.graph_widths.empty() || cfg.graph_widths.back() != kNumActions) {
            throw ShapeMismatch("final graph layer width must equal the action count");
        }
        int gin = feature_width_;
        for (size_t i = 0; i < cfg.graph_widths.size(); ++i) {
            const bool relu = i + 1 < cfg.graph_widths.size();
            glayers_.push_back(
                std::make_unique<GraphCommLayer<T>>(gin, cfg.graph_widths[i], relu, support_));
            gin = cfg.graph_widths[i];
        }
    }

    QNetwork(const QNetwork& other) : QNetwork(other.cfg_) { copy_state_from(other); }
    QNetwork& operator=(const QNetwork& other) {
        if (this != &other) copy_state_from(other);
        return *this;
    }

    const NetConfig& config() const { return cfg_; }
    int patch_size() const { return cfg_.encoder.patch_size; }
    int feature_width() const { return feature_width_; }
    uint64_t version = 0;

    std::string signature() const {
        std::ostringstream os;
        os << "patch=" << cfg_.encoder.patch_size << ";channels=";
        for (size_t i = 0; i < cfg_.encoder.channels.size(); ++i) {
            os << (i ? "," : "") << cfg_.encoder.channels[i];
        }
        os << ";widths=";
        for (size_t i = 0; i < cfg_.graph_widths.size(); ++i) {
            os << (i ? "," : "") << cfg_.graph_widths[i];
        }
        return os.str();
    }

    // patches: [groups][15][patch^3] -> Q values [groups][15][6]
    std::vector<T> forward(const std::vector<T>& patches, int groups, ForwardMode mode) {
        const int n = groups * kNumLandmarks;
        const int S = cfg_.encoder.patch_size;
        if (patches.size() != static_cast<size_t>(n) * S * S * S) {
            throw ShapeMismatch("QNetwork::forward patch buffer size");
        }
        const bool batch_stats = mode != ForwardMode::eval;
        const bool record = mode == ForwardMode::train;

        std::vector<T> x = patches;
        int side = S;
        for (auto& blk : blocks_) {
            x = blk->conv_a.forward(x, n, side, record);
            side = blk->conv_a.out_side(side);
            const size_t sp = static_cast<size_t>(side) * side * side;
            x = blk->bn_a.forward(x, n, sp, batch_stats, record);
            x = blk->relu_a.forward(x, record);
            x = blk->conv_b.forward(x, n, side, record);
            x = blk->bn_b.forward(x, n, sp, batch_stats, record);
            x = blk->relu_b.forward(x, record);
            x = blk->pool.forward(x, n, blk->conv_b.out_channels(), side, record);
            side = MaxPool3d<T>::out_side(side);
        }
        // x is [n][C][side^3]; per instance that is one contiguous feature row.
        for (auto& gl : glayers_) x = gl->forward(x, groups, record);
        return x;
    }

    // dq: [groups][15][6]; accumulates gradients on every parameter.
    void backward(const std::vector<T>& dq) {
        std::vector<T> d = dq;
        std::vector<T> dprev;
        for (size_t i = glayers_.size(); i-- > 0;) {
            glayers_[i]->backward(d, &dprev);
            d = std::move(dprev);
        }
        for (size_t i = blocks_.size(); i-- > 0;) {
            auto& blk = *blocks_[i];
            blk.pool.backward(d, &dprev);
            d = std::move(dprev);
            blk.relu_b.backward(d, &dprev);
            d = std::move(dprev);
            blk.bn_b.backward(d, &dprev);
            d = std::move(dprev);
            blk.conv_b.backward(d, &dprev);
            d = std::move(dprev);
            blk.relu_a.backward(d, &dprev);
            d = std::move(dprev);
            blk.bn_a.backward(d, &dprev);
            d = std::move(dprev);
            blk.conv_a.backward(d, i == 0 ? nullptr : &dprev);
            if (i != 0) d = std::move(dprev);
        }
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "encoder.b" + std::to_string(i) + ".";
            out.push_back({p + "conv_a.w", &blocks_[i]->conv_a.weight});
            out.push_back({p + "bn_a.gamma", &blocks_[i]->bn_a.gamma});
            out.push_back({p + "bn_a.beta", &blocks_[i]->bn_a.beta});
            out.push_back({p + "conv_b.w", &blocks_[i]->conv_b.weight});
            out.push_back({p + "bn_b.gamma", &blocks_[i]->bn_b.gamma});
            out.push_back({p + "bn_b.beta", &blocks_[i]->bn_b.beta});
        }
        for (size_t i = 0; i < glayers_.size(); ++i) {
            const std::string p = "graph" + std::to_string(i) + ".";
            out.push_back({p + "w", &glayers_[i]->kernels});
            out.push_back({p + "m", &glayers_[i]->mask});
        }
        return out;
    }

    // Optimized params plus batch-norm running statistics: everything that a
    // snapshot, target copy or checkpoint must carry.
    std::vector<ParamRef<T>> state_tensors() {
        auto out = params();
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "encoder.b" + std::to_string(i) + ".";
            out.push_back({p + "bn_a.rmean", &blocks_[i]->bn_a.running_mean});
            out.push_back({p + "bn_a.rvar", &blocks_[i]->bn_a.running_var});
            out.push_back({p + "bn_b.rmean", &blocks_[i]->bn_b.running_mean});
            out.push_back({p + "bn_b.rvar", &blocks_[i]->bn_b.running_var});
        }
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.tensor->zero_grad();
    }

    // He-uniform conv and graph kernels; M starts at zero so the softmax
    // gives uniform attention over each row's support. Batch-norm state goes
    // back to gamma 1 / beta 0 / running N(0,1).
    void init(uint64_t seed) {
        Rng rng(seed);
        for (auto& blk : blocks_) {
            he_uniform(blk->conv_a.weight, blk->conv_a.in_channels() * 27, rng);
            he_uniform(blk->conv_b.weight, blk->conv_b.in_channels() * 27, rng);
            for (auto* bn : {&blk->bn_a, &blk->bn_b}) {
                bn->gamma.fill(T(1));
                bn->beta.fill(T(0));
                bn->running_mean.fill(T(0));
                bn->running_var.fill(T(1));
            }
        }
        for (auto& gl : glayers_) {
            he_uniform(gl->kernels, gl->in_channels(), rng);
            gl->mask.fill(T(0));
        }
        version = 0;
    }

    std::vector<BnStats> collect_batch_stats() const {
        std::vector<BnStats> out;
        for (const auto& blk : blocks_) {
            for (const auto* bn : {&blk->bn_a, &blk->bn_b}) {
                BnStats s;
                s.mean.assign(bn->last_batch_mean.begin(), bn->last_batch_mean.end());
                s.var.assign(bn->last_batch_var.begin(), bn->last_batch_var.end());
                out.push_back(std::move(s));
            }
        }
        return out;
    }

    void fold_batch_stats(const std::vector<BnStats>& stats) {
        size_t idx = 0;
        for (auto& blk : blocks_) {
            for (auto* bn : {&blk->bn_a, &blk->bn_b}) {
                if (idx >= stats.size() || stats[idx].mean.empty()) {
                    ++idx;
                    continue;
                }
                const double mom = bn->momentum;
                for (int c = 0; c < bn->channels(); ++c) {
                    bn->running_mean.data[c] = static_cast<T>(
                        (1.0 - mom) * bn->running_mean.data[c] + mom * stats[idx].mean[c]);
                    bn->running_var.data[c] = static_cast<T>(
                        (1.0 - mom) * bn->running_var.data[c] + mom * stats[idx].var[c]);
                }
                ++idx;
            }
        }
    }

    GraphCommLayer<T>& graph_layer(size_t i) { return *glayers_[i]; }
    size_t num_graph_layers() const { return glayers_.size(); }
    const std::array<double, kNumLandmarks * kNumLandmarks>& support() const { return support_; }

private:
    struct Block {
        Block(int in_ch, int ch)
            : conv_a(in_ch, ch, 2), bn_a(ch), conv_b(ch, ch, 1), bn_b(ch), pool() {}
        static int out_side(int s) { return MaxPool3d<T>::out_side((s - 1) / 2 + 1); }

        Conv3d<T> conv_a;
        BatchNorm3d<T> bn_a;
        ReLU<T> relu_a;
        Conv3d<T> conv_b;
        BatchNorm3d<T> bn_b;
        ReLU<T> relu_b;
        MaxPool3d<T> pool;
    };

    void he_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
        const double limit = std::sqrt(6.0 / fan_in);
        for (auto& v : t.data) v = static_cast<T>(rng.uniform_real(-limit, limit));
    }

    void copy_state_from(const QNetwork& other) {
        auto dst = state_tensors();
        auto src = const_cast<QNetwork&>(other).state_tensors();
        if (dst.size() != src.size()) throw ShapeMismatch("QNetwork copy: state mismatch");
        for (size_t i = 0; i < dst.size(); ++i) {
            if (dst[i].tensor->shape != src[i].tensor->shape) {
                throw ShapeMismatch("QNetwork copy: tensor shape mismatch at " + dst[i].name);
            }
            dst[i].tensor->data = src[i].tensor->data;
        }
        version = other.version;
    }

    NetConfig cfg_;
    std::array<double, kNumLandmarks * kNumLandmarks> support_{};
    std::vector<std::unique_ptr<Block>> blocks_;
    std::vector<std::unique_ptr<GraphCommLayer<T>>> glayers_;
    int feature_side_ = 0;
    int feature_width_ = 0;
};

// Policy evaluation interface; lets tests substitute scripted Q functions for
// the real network in rollout code.
class QFunction {
public:
    virtual ~QFunction() = default;
    virtual int patch_size() const = 0;
    // patches: one group, [15][patch^3]; q: [15][6] row-major
    virtual void q_values(const std::vector<float>& patches,
                          std::array<float, kNumLandmarks * kNumActions>& q) = 0;
};

class NetworkQFunction : public QFunction {
public:
    explicit NetworkQFunction(QNetwork<float>& net) : net_(net) {}
    int patch_size() const override { return net_.patch_size(); }
    void q_values(const std::vector<float>& patches,
                  std::array<float, kNumLandmarks * kNumActions>& q) override {
        const auto out = net_.forward(patches, 1, ForwardMode::eval);
        std::copy(out.begin(), out.end(), q.begin());
    }

private:
    QNetwork<float>& net_;
};

}  // namespace fetalpose::nn
