#include "fetalpose/train/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "fetalpose/dqn/loss.hpp"
#include "fetalpose/errors.hpp"
#include "fetalpose/reward.hpp"
#include "fetalpose/train/checkpoint.hpp"

namespace fs = std::filesystem;

namespace fetalpose {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset Dataset::from_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot read manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long index;
        std::string file;
        if (!(ls >> index >> file)) throw FormatError("bad manifest line: " + line);
        fs::path p(file);
        if (p.is_relative()) p = base / p;
        out.volumes.push_back(
            std::make_shared<const LabeledVolume>(load_volume(p.string())));
    }
    if (out.volumes.empty()) throw FormatError("manifest lists no volumes: " + manifest_path);
    return out;
}

Dataset Dataset::from_volumes(std::vector<LabeledVolume> vols) {
    Dataset out;
    for (auto& v : vols) {
        out.volumes.push_back(std::make_shared<const LabeledVolume>(std::move(v)));
    }
    return out;
}

std::shared_ptr<const LabeledVolume> make_episode_volume(const Dataset& data, int volume_index,
                                                         uint64_t episode_seed,
                                                         const RunConfig& cfg) {
    if (volume_index < 0 || volume_index >= static_cast<int>(data.volumes.size())) {
        throw FormatError("volume index out of range: " + std::to_string(volume_index));
    }
    const auto& base = data.volumes[volume_index];
    if (!cfg.augment) return base;
    Rng rng(episode_seed);
    const auto draw = sample_augment_draw(rng, cfg.augment_scale_lo, cfg.augment_scale_hi);
    return std::make_shared<const LabeledVolume>(augment(*base, draw));
}

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

Actor::Actor(int id, const RunConfig& cfg, const PoseGraph& graph, const Dataset& data,
             ReplayBuffer& replay, GlobalModel& global, TrainCounters& counters)
    : id_(id),
      cfg_(cfg),
      graph_(graph),
      data_(data),
      replay_(replay),
      global_(global),
      counters_(counters),
      eps_{cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps},
      rng_(derive_seed(cfg.seed, "actor-" + std::to_string(id))),
      net_(make_net_config(cfg)) {}

void Actor::begin_episode() {
    volume_index_ = static_cast<int>(rng_.uniform_index(data_.volumes.size()));
    episode_seed_ = rng_.next_u64();
    volume_ = make_episode_volume(data_, volume_index_, episode_seed_, cfg_);
    positions_ = initial_positions(volume_->dims, rng_, cfg_.inner_fraction);
    t_ = 0;
}

void Actor::fetch_snapshot() {
    auto snap = global_.snapshot();
    if (snap) GlobalModel::load_snapshot_params(*snap, net_);
}

void Actor::step_once() {
    if (!volume_ || t_ >= cfg_.episode_horizon) {
        begin_episode();
    }
    const uint64_t period = std::max<uint64_t>(1, cfg_.actor_snapshot_period);
    if (local_steps_ % period == 0) fetch_snapshot();

    const int S = net_.patch_size();
    const size_t p3 = static_cast<size_t>(S) * S * S;
    std::vector<float> patches(kNumLandmarks * p3);
    for (int k = 0; k < kNumLandmarks; ++k) {
        const auto p = extract_patch(*volume_, positions_[k], S);
        std::copy(p.begin(), p.end(), patches.begin() + k * p3);
    }
    const auto q = net_.forward(patches, 1, nn::ForwardMode::eval);
    const double eps = eps_.at(counters_.actor_steps.load());
    const auto actions = select_actions(q.data(), eps, rng_);

    std::array<Action, kNumLandmarks> acts{};
    for (int k = 0; k < kNumLandmarks; ++k) acts[k] = static_cast<Action>(actions[k]);
    const auto next = env_step(positions_, acts, volume_->dims, cfg_.action_step);

    ExperienceRecord rec;
    rec.volume_index = volume_index_;
    rec.episode_seed = episode_seed_;
    rec.positions_t = positions_;
    rec.positions_t1 = next;
    for (int k = 0; k < kNumLandmarks; ++k) {
        rec.actions[k] = static_cast<uint8_t>(actions[k]);
        rec.rewards[k] = static_cast<float>(agent_reward(k, positions_[k].to_vec3(),
                                                         next[k].to_vec3(), volume_->landmarks_gt,
                                                         graph_, cfg_.reward));
    }
    rec.terminal = false;  // horizon ends truncate, they are not goal states
    rec.volume = volume_;
    replay_.push(std::move(rec));

    positions_ = next;
    ++t_;
    ++local_steps_;
    counters_.actor_steps.fetch_add(1);
}

Actor::State Actor::get_state() const {
    State s;
    s.rng = rng_.serialize();
    s.volume_index = volume_index_;
    s.episode_seed = episode_seed_;
    s.t = t_;
    s.active = volume_ != nullptr;
    s.local_steps = local_steps_;
    s.positions = positions_;
    return s;
}

void Actor::set_state(const State& s) {
    rng_.deserialize(s.rng);
    volume_index_ = s.volume_index;
    episode_seed_ = s.episode_seed;
    t_ = s.t;
    local_steps_ = s.local_steps;
    positions_ = s.positions;
    volume_ = s.active ? make_episode_volume(data_, volume_index_, episode_seed_, cfg_) : nullptr;
}

// ---------------------------------------------------------------------------
// Learner
// ---------------------------------------------------------------------------

Learner::Learner(int id, const RunConfig& cfg, ReplayBuffer& replay, GlobalModel& global,
                 TrainCounters& counters)
    : id_(id),
      cfg_(cfg),
      replay_(replay),
      global_(global),
      counters_(counters),
      rng_(derive_seed(cfg.seed, "learner-" + std::to_string(id))),
      net_(make_net_config(cfg)),
      target_(make_net_config(cfg)) {}

double Learner::step_once() {
    const auto snap = global_.snapshot();
    if (!snap) throw ChannelClosed("no published snapshot");
    counters_.snapshot_fetches.fetch_add(1);
    uint64_t h = fnv1a64(snap->params_flat.data(), snap->params_flat.size() * sizeof(float));
    h = fnv1a64(snap->target_flat.data(), snap->target_flat.size() * sizeof(float), h);
    if (h != snap->checksum) counters_.checksum_mismatches.fetch_add(1);
    GlobalModel::load_snapshot_params(*snap, net_);
    GlobalModel::load_snapshot_target(*snap, target_);

    const auto batch = replay_.sample(cfg_.batch_size, net_.patch_size(), rng_);

    net_.zero_grads();
    const double loss = dqn_loss_and_grads(batch, net_, target_, cfg_.gamma);

    GradientMsg msg;
    for (auto& p : net_.params()) msg.grads.push_back(p.tensor->grad);
    msg.bn_stats = net_.collect_batch_stats();
    msg.source_version = snap->version;
    msg.loss = loss;
    global_.apply(msg);
    counters_.gradients_pushed.fetch_add(1);
    return loss;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(RunConfig cfg, Dataset data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      graph_(build_fetal_graph()),
      replay_(cfg_.replay_capacity),
      global_(make_net_config(cfg_), cfg_.lr, cfg_.clip, cfg_.target_sync_period) {
    cfg_.validate();
    if (data_.volumes.empty()) throw ConfigError("trainer needs at least one volume");
    if (cfg_.synchronous && (cfg_.n_actors != 1 || cfg_.m_learners != 1)) {
        throw ConfigError("synchronous mode requires 1 actor and 1 learner");
    }
    for (int i = 0; i < cfg_.n_actors; ++i) {
        actors_.push_back(
            std::make_unique<Actor>(i, cfg_, graph_, data_, replay_, global_, counters_));
    }
    for (int i = 0; i < cfg_.m_learners; ++i) {
        learners_.push_back(std::make_unique<Learner>(i, cfg_, replay_, global_, counters_));
    }
}

void Trainer::init_fresh() { global_.init(derive_seed(cfg_.seed, "init")); }

void Trainer::set_output(const std::string& dir, bool append_metrics) {
    fs::create_directories(dir);
    out_dir_ = dir;
    metrics_.open((fs::path(dir) / "metrics.txt").string(), append_metrics);
}

void Trainer::maybe_periodic_output(uint64_t step, double loss) {
    if (cfg_.metrics_period > 0 && metrics_.is_open() && step % cfg_.metrics_period == 0) {
        metrics_.record_train(step, loss, eps_now(), global_.version());
    }
    if (cfg_.checkpoint_period > 0 && !out_dir_.empty() && step % cfg_.checkpoint_period == 0) {
        save_checkpoint((fs::path(out_dir_) / "checkpoint.lsc").string());
    }
}

void Trainer::run_sync() {
    const uint64_t warmup = std::max<uint64_t>(cfg_.warmup, cfg_.batch_size);
    while (!stop_.load() && global_.applied_count() < cfg_.total_learner_steps) {
        actors_[0]->step_once();
        if (replay_.size() >= warmup) {
            const double loss = learners_[0]->step_once();
            maybe_periodic_output(global_.applied_count(), loss);
        }
    }
}

void Trainer::run_async() {
    const auto t0 = std::chrono::steady_clock::now();
    auto deadline_passed = [&]() {
        if (cfg_.max_wall_seconds <= 0.0) return false;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return secs >= cfg_.max_wall_seconds;
    };

    std::vector<std::thread> threads;
    for (auto& actor : actors_) {
        threads.emplace_back([&]() {
            while (!stop_.load()) actor->step_once();
        });
    }
    for (auto& learner : learners_) {
        threads.emplace_back([&]() {
            while (!stop_.load() && global_.applied_count() < cfg_.total_learner_steps) {
                try {
                    learner->step_once();
                } catch (const BufferTooSmall&) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(2));
                } catch (const ChannelClosed&) {
                    break;
                }
            }
        });
    }

    uint64_t last_logged = 0;
    while (!stop_.load() && global_.applied_count() < cfg_.total_learner_steps &&
           !deadline_passed()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        const uint64_t step = global_.applied_count();
        if (cfg_.metrics_period > 0 && metrics_.is_open() &&
            step >= last_logged + cfg_.metrics_period) {
            metrics_.record_train(step, global_.last_loss(), eps_now(), global_.version());
            last_logged = step;
        }
    }
    stop_.store(true);
    for (auto& t : threads) t.join();
    stop_.store(false);
}

void Trainer::run() {
    if (cfg_.synchronous) run_sync();
    else run_async();
}

nn::QNetwork<float> Trainer::current_params() {
    const auto snap = global_.snapshot();
    nn::QNetwork<float> net(make_net_config(cfg_));
    if (snap) GlobalModel::load_snapshot_params(*snap, net);
    return net;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

NamedTensorBlock to_block(const std::string& name, const nn::Tensor<float>& t) {
    NamedTensorBlock b;
    b.name = name;
    for (int d : t.shape) b.shape.push_back(d);
    b.data.assign(t.data.begin(), t.data.end());
    return b;
}

NamedTensorBlock vec_block(const std::string& name, const std::vector<float>& v) {
    NamedTensorBlock b;
    b.name = name;
    b.shape.push_back(static_cast<int64_t>(v.size()));
    b.data.assign(v.begin(), v.end());
    return b;
}

void from_block(const NamedTensorBlock& b, nn::Tensor<float>& t) {
    if (b.data.size() != t.size()) {
        throw FormatError("checkpoint tensor '" + b.name + "' has " +
                          std::to_string(b.data.size()) + " values, expected " +
                          std::to_string(t.size()));
    }
    for (size_t i = 0; i < b.data.size(); ++i) t.data[i] = static_cast<float>(b.data[i]);
}

void from_block_vec(const NamedTensorBlock& b, std::vector<float>& v) {
    v.assign(b.data.begin(), b.data.end());
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) {
    CheckpointData data;
    {
        // The output directory is environment, not run state; keep
        // checkpoints location-independent.
        RunConfig c = cfg_;
        c.out_dir = "";
        data.config_text = c.to_text();
    }
    data.graph_edges = graph_.ordered_edge_list();

    auto& params = global_.params_unlocked();
    auto& target = global_.target_unlocked();
    auto& opt = global_.opt_unlocked();
    for (auto& ref : params.state_tensors()) data.tensors.push_back(to_block("params/" + ref.name, *ref.tensor));
    for (auto& ref : target.state_tensors()) data.tensors.push_back(to_block("target/" + ref.name, *ref.tensor));
    {
        auto prefs = params.params();
        for (size_t i = 0; i < prefs.size(); ++i) {
            data.tensors.push_back(vec_block("adam/m/" + prefs[i].name, opt.m[i]));
            data.tensors.push_back(vec_block("adam/v/" + prefs[i].name, opt.v[i]));
        }
    }

    data.counters["adam_t"] = opt.t;
    data.counters["version"] = static_cast<int64_t>(global_.version());
    data.counters["actor_steps"] = static_cast<int64_t>(counters_.actor_steps.load());
    data.counters["gradients_pushed"] = static_cast<int64_t>(counters_.gradients_pushed.load());
    data.counters["metrics_records"] = static_cast<int64_t>(metrics_.records_written());
    data.counters["replay_pushed"] = static_cast<int64_t>(replay_.total_pushed());

    for (size_t i = 0; i < actors_.size(); ++i) {
        const auto s = actors_[i]->get_state();
        const std::string p = "actor" + std::to_string(i) + ".";
        data.rng_states[p + "rng"] = s.rng;
        data.counters[p + "volume_index"] = s.volume_index;
        data.counters[p + "episode_seed"] = static_cast<int64_t>(s.episode_seed);
        data.counters[p + "t"] = s.t;
        data.counters[p + "active"] = s.active ? 1 : 0;
        data.counters[p + "local_steps"] = static_cast<int64_t>(s.local_steps);
        data.counters[p + "net_version"] = static_cast<int64_t>(actors_[i]->net().version);
        for (int k = 0; k < kNumLandmarks; ++k) {
            data.counters[p + "pos" + std::to_string(k) + ".x"] = s.positions[k].x;
            data.counters[p + "pos" + std::to_string(k) + ".y"] = s.positions[k].y;
            data.counters[p + "pos" + std::to_string(k) + ".z"] = s.positions[k].z;
        }
        // The working policy copy: without it a resumed actor would act on a
        // different parameter version than the uninterrupted run until its
        // next snapshot fetch.
        for (auto& ref : actors_[i]->net().state_tensors()) {
            data.tensors.push_back(to_block("actor" + std::to_string(i) + "/" + ref.name,
                                            *ref.tensor));
        }
    }
    for (size_t i = 0; i < learners_.size(); ++i) {
        data.rng_states["learner" + std::to_string(i) + ".rng"] = learners_[i]->rng_state();
    }

    for (const auto& rec : replay_.snapshot_all()) {
        ReplayRecordSer s;
        s.volume_index = rec.volume_index;
        s.episode_seed = rec.episode_seed;
        s.positions_t = rec.positions_t;
        s.positions_t1 = rec.positions_t1;
        s.actions = rec.actions;
        for (int k = 0; k < kNumLandmarks; ++k) s.rewards[k] = rec.rewards[k];
        s.terminal = rec.terminal ? 1 : 0;
        data.replay.push_back(std::move(s));
    }

    write_checkpoint(path, data);
}

void Trainer::load_checkpoint(const std::string& path) {
    const CheckpointData data = read_checkpoint(path);

    // Architecture compatibility: every expected tensor must exist with the
    // right size. Extra or missing blocks are a config/architecture mismatch.
    std::map<std::string, const NamedTensorBlock*> by_name;
    for (const auto& t : data.tensors) by_name[t.name] = &t;
    auto expect = [&](const std::string& name) -> const NamedTensorBlock& {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint missing tensor '" + name +
                              "' (architecture mismatch?)");
        }
        return *it->second;
    };

    auto& params = global_.params_unlocked();
    auto& target = global_.target_unlocked();
    auto& opt = global_.opt_unlocked();
    for (auto& ref : params.state_tensors()) from_block(expect("params/" + ref.name), *ref.tensor);
    for (auto& ref : target.state_tensors()) from_block(expect("target/" + ref.name), *ref.tensor);
    {
        auto prefs = params.params();
        opt.init(prefs);
        for (size_t i = 0; i < prefs.size(); ++i) {
            const auto& mb = expect("adam/m/" + prefs[i].name);
            const auto& vb = expect("adam/v/" + prefs[i].name);
            if (mb.data.size() != prefs[i].tensor->size() ||
                vb.data.size() != prefs[i].tensor->size()) {
                throw FormatError("optimizer state size mismatch at " + prefs[i].name);
            }
            from_block_vec(mb, opt.m[i]);
            from_block_vec(vb, opt.v[i]);
        }
    }

    auto counter = [&](const std::string& name) -> int64_t {
        auto it = data.counters.find(name);
        if (it == data.counters.end()) throw FormatError("checkpoint missing counter " + name);
        return it->second;
    };
    opt.t = counter("adam_t");
    global_.set_version(static_cast<uint64_t>(counter("version")));
    counters_.actor_steps.store(static_cast<uint64_t>(counter("actor_steps")));
    counters_.gradients_pushed.store(static_cast<uint64_t>(counter("gradients_pushed")));
    metrics_.set_records_written(static_cast<uint64_t>(counter("metrics_records")));

    for (size_t i = 0; i < actors_.size(); ++i) {
        const std::string p = "actor" + std::to_string(i) + ".";
        auto rng_it = data.rng_states.find(p + "rng");
        if (rng_it == data.rng_states.end()) {
            throw FormatError("checkpoint missing rng state for actor " + std::to_string(i));
        }
        Actor::State s;
        s.rng = rng_it->second;
        s.volume_index = static_cast<int>(counter(p + "volume_index"));
        s.episode_seed = static_cast<uint64_t>(counter(p + "episode_seed"));
        s.t = static_cast<int>(counter(p + "t"));
        s.active = counter(p + "active") != 0;
        s.local_steps = static_cast<uint64_t>(counter(p + "local_steps"));
        for (int k = 0; k < kNumLandmarks; ++k) {
            s.positions[k].x = static_cast<int>(counter(p + "pos" + std::to_string(k) + ".x"));
            s.positions[k].y = static_cast<int>(counter(p + "pos" + std::to_string(k) + ".y"));
            s.positions[k].z = static_cast<int>(counter(p + "pos" + std::to_string(k) + ".z"));
        }
        actors_[i]->set_state(s);
        for (auto& ref : actors_[i]->net().state_tensors()) {
            from_block(expect("actor" + std::to_string(i) + "/" + ref.name), *ref.tensor);
        }
        actors_[i]->net().version = static_cast<uint64_t>(counter(p + "net_version"));
    }
    for (size_t i = 0; i < learners_.size(); ++i) {
        auto it = data.rng_states.find("learner" + std::to_string(i) + ".rng");
        if (it == data.rng_states.end()) {
            throw FormatError("checkpoint missing rng state for learner " + std::to_string(i));
        }
        learners_[i]->set_rng_state(it->second);
    }

    std::vector<ExperienceRecord> records;
    records.reserve(data.replay.size());
    std::map<std::pair<int, uint64_t>, std::shared_ptr<const LabeledVolume>> episode_cache;
    for (const auto& s : data.replay) {
        ExperienceRecord rec;
        rec.volume_index = s.volume_index;
        rec.episode_seed = s.episode_seed;
        rec.positions_t = s.positions_t;
        rec.positions_t1 = s.positions_t1;
        rec.actions = s.actions;
        for (int k = 0; k < kNumLandmarks; ++k) rec.rewards[k] = static_cast<float>(s.rewards[k]);
        rec.terminal = s.terminal != 0;
        auto key = std::make_pair(s.volume_index, s.episode_seed);
        auto it = episode_cache.find(key);
        if (it == episode_cache.end()) {
            it = episode_cache
                     .emplace(key, make_episode_volume(data_, s.volume_index, s.episode_seed, cfg_))
                     .first;
        }
        rec.volume = it->second;
        records.push_back(std::move(rec));
    }
    replay_.restore(records, static_cast<uint64_t>(counter("replay_pushed")));

    global_.publish_current();
}

RunConfig read_checkpoint_config(const std::string& path) {
    const CheckpointData data = read_checkpoint(path);
    return parse_config_text(data.config_text);
}

std::pair<RunConfig, nn::QNetwork<float>> load_checkpoint_params(const std::string& path) {
    const CheckpointData data = read_checkpoint(path);
    RunConfig cfg = parse_config_text(data.config_text);
    nn::QNetwork<float> net(make_net_config(cfg));

    std::map<std::string, const NamedTensorBlock*> by_name;
    for (const auto& t : data.tensors) by_name[t.name] = &t;
    for (auto& ref : net.state_tensors()) {
        auto it = by_name.find("params/" + ref.name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint missing tensor 'params/" + ref.name +
                              "' (architecture mismatch?)");
        }
        from_block(*it->second, *ref.tensor);
    }
    auto vit = data.counters.find("version");
    if (vit != data.counters.end()) net.version = static_cast<uint64_t>(vit->second);
    return {std::move(cfg), std::move(net)};
}

}  // namespace fetalpose
