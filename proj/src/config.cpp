#include "fetalpose/train/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fetalpose/errors.hpp"

namespace fetalpose {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    int64_t i = parse_int(key, v);
    if (i < 0) throw ConfigError("negative value for " + key);
    return static_cast<uint64_t>(i);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

// Shortest representation that round-trips the double exactly.
std::string fmt_double(double d) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, d);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == d) break;
    }
    return buf;
}

}  // namespace

void RunConfig::apply_kv(const std::string& rawkey, const std::string& rawvalue) {
    const std::string key = trim(rawkey);
    const std::string v = trim(rawvalue);

    if (key == "seed") seed = parse_u64(key, v);
    else if (key == "out_dir") out_dir = v;
    else if (key == "net.preset") preset = v;
    else if (key == "phantom.dims") {
        int d = static_cast<int>(parse_int(key, v));
        phantom.dims = {d, d, d};
    } else if (key == "phantom.dims_x") phantom.dims.x = static_cast<int>(parse_int(key, v));
    else if (key == "phantom.dims_y") phantom.dims.y = static_cast<int>(parse_int(key, v));
    else if (key == "phantom.dims_z") phantom.dims.z = static_cast<int>(parse_int(key, v));
    else if (key == "phantom.figure_scale") phantom.figure_scale = parse_double(key, v);
    else if (key == "phantom.limb_radius") phantom.limb_radius = parse_double(key, v);
    else if (key == "phantom.head_radius") phantom.head_radius = parse_double(key, v);
    else if (key == "phantom.eye_radius") phantom.eye_radius = parse_double(key, v);
    else if (key == "phantom.background_level") phantom.background_level = parse_double(key, v);
    else if (key == "phantom.torso_level") phantom.torso_level = parse_double(key, v);
    else if (key == "phantom.limb_level") phantom.limb_level = parse_double(key, v);
    else if (key == "phantom.noise_sigma") phantom.noise_sigma = parse_double(key, v);
    else if (key == "phantom.joint_angle_range") phantom.joint_angle_range = parse_double(key, v);
    else if (key == "phantom.global_rotation_range")
        phantom.global_rotation_range = parse_double(key, v);
    else if (key == "phantom.translation_range") phantom.translation_range = parse_double(key, v);
    else if (key == "phantom.spacing_mm") {
        double s = parse_double(key, v);
        phantom.spacing_mm = {s, s, s};
    }
    else if (key == "reward.beta") reward.beta = parse_double(key, v);
    else if (key == "reward.use_structure_reward")
        reward.use_structure_reward = parse_bool(key, v);
    else if (key == "train.n_actors") n_actors = static_cast<int>(parse_int(key, v));
    else if (key == "train.m_learners") m_learners = static_cast<int>(parse_int(key, v));
    else if (key == "train.batch_size") batch_size = static_cast<int>(parse_int(key, v));
    else if (key == "train.lr") lr = parse_double(key, v);
    else if (key == "train.clip") clip = parse_double(key, v);
    else if (key == "train.gamma") gamma = parse_double(key, v);
    else if (key == "train.target_sync_period") target_sync_period = parse_u64(key, v);
    else if (key == "train.replay_capacity") replay_capacity = parse_u64(key, v);
    else if (key == "train.actor_snapshot_period") actor_snapshot_period = parse_u64(key, v);
    else if (key == "train.total_learner_steps") total_learner_steps = parse_u64(key, v);
    else if (key == "train.warmup") warmup = parse_u64(key, v);
    else if (key == "train.episode_horizon") episode_horizon = static_cast<int>(parse_int(key, v));
    else if (key == "train.action_step") action_step = static_cast<int>(parse_int(key, v));
    else if (key == "train.synchronous") synchronous = parse_bool(key, v);
    else if (key == "train.eps_start") eps_start = parse_double(key, v);
    else if (key == "train.eps_end") eps_end = parse_double(key, v);
    else if (key == "train.eps_decay_steps") eps_decay_steps = parse_u64(key, v);
    else if (key == "train.inner_fraction") inner_fraction = parse_double(key, v);
    else if (key == "train.augment") augment = parse_bool(key, v);
    else if (key == "train.augment_scale_lo") augment_scale_lo = parse_double(key, v);
    else if (key == "train.augment_scale_hi") augment_scale_hi = parse_double(key, v);
    else if (key == "train.checkpoint_period") checkpoint_period = parse_u64(key, v);
    else if (key == "train.metrics_period") metrics_period = parse_u64(key, v);
    else if (key == "train.max_wall_seconds") max_wall_seconds = parse_double(key, v);
    else if (key == "eval.repeats") eval_repeats = static_cast<int>(parse_int(key, v));
    else if (key == "eval.threshold_mm") eval_threshold_mm = parse_double(key, v);
    else if (key == "eval.max_steps") eval_max_steps = static_cast<int>(parse_int(key, v));
    else throw ConfigError("unknown config key: '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto add = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    add("seed", std::to_string(seed));
    add("out_dir", out_dir);
    add("net.preset", preset);
    add("phantom.dims_x", std::to_string(phantom.dims.x));
    add("phantom.dims_y", std::to_string(phantom.dims.y));
    add("phantom.dims_z", std::to_string(phantom.dims.z));
    add("phantom.figure_scale", fmt_double(phantom.figure_scale));
    add("phantom.limb_radius", fmt_double(phantom.limb_radius));
    add("phantom.head_radius", fmt_double(phantom.head_radius));
    add("phantom.eye_radius", fmt_double(phantom.eye_radius));
    add("phantom.background_level", fmt_double(phantom.background_level));
    add("phantom.torso_level", fmt_double(phantom.torso_level));
    add("phantom.limb_level", fmt_double(phantom.limb_level));
    add("phantom.noise_sigma", fmt_double(phantom.noise_sigma));
    add("phantom.joint_angle_range", fmt_double(phantom.joint_angle_range));
    add("phantom.global_rotation_range", fmt_double(phantom.global_rotation_range));
    add("phantom.translation_range", fmt_double(phantom.translation_range));
    add("phantom.spacing_mm", fmt_double(phantom.spacing_mm.x));
    add("reward.beta", fmt_double(reward.beta));
    add("reward.use_structure_reward", reward.use_structure_reward ? "true" : "false");
    add("train.n_actors", std::to_string(n_actors));
    add("train.m_learners", std::to_string(m_learners));
    add("train.batch_size", std::to_string(batch_size));
    add("train.lr", fmt_double(lr));
    add("train.clip", fmt_double(clip));
    add("train.gamma", fmt_double(gamma));
    add("train.target_sync_period", std::to_string(target_sync_period));
    add("train.replay_capacity", std::to_string(replay_capacity));
    add("train.actor_snapshot_period", std::to_string(actor_snapshot_period));
    add("train.total_learner_steps", std::to_string(total_learner_steps));
    add("train.warmup", std::to_string(warmup));
    add("train.episode_horizon", std::to_string(episode_horizon));
    add("train.action_step", std::to_string(action_step));
    add("train.synchronous", synchronous ? "true" : "false");
    add("train.eps_start", fmt_double(eps_start));
    add("train.eps_end", fmt_double(eps_end));
    add("train.eps_decay_steps", std::to_string(eps_decay_steps));
    add("train.inner_fraction", fmt_double(inner_fraction));
    add("train.augment", augment ? "true" : "false");
    add("train.augment_scale_lo", fmt_double(augment_scale_lo));
    add("train.augment_scale_hi", fmt_double(augment_scale_hi));
    add("train.checkpoint_period", std::to_string(checkpoint_period));
    add("train.metrics_period", std::to_string(metrics_period));
    add("train.max_wall_seconds", fmt_double(max_wall_seconds));
    add("eval.repeats", std::to_string(eval_repeats));
    add("eval.threshold_mm", fmt_double(eval_threshold_mm));
    add("eval.max_steps", std::to_string(eval_max_steps));
    return kv;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_kv()) os << k << " = " << v << "\n";
    return os.str();
}

void RunConfig::validate() const {
    if (n_actors < 1 || m_learners < 1) throw ConfigError("actor/learner counts must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
    if (reward.beta < 0.0) throw ConfigError("reward.beta must be >= 0");
    if (replay_capacity < static_cast<uint64_t>(batch_size)) {
        throw ConfigError("replay_capacity must be >= batch_size");
    }
    if (episode_horizon < 1) throw ConfigError("episode_horizon must be >= 1");
    if (action_step < 1) throw ConfigError("action_step must be >= 1");
    if (inner_fraction <= 0.0 || inner_fraction > 1.0) {
        throw ConfigError("inner_fraction must be in (0, 1]");
    }
    if (augment_scale_lo > augment_scale_hi || augment_scale_lo <= 0.0) {
        throw ConfigError("bad augment scale range");
    }
    if (eval_repeats < 1) throw ConfigError("eval.repeats must be >= 1");
    if (preset != "paper" && preset != "desk" && preset != "tiny") {
        throw ConfigError("unknown net.preset '" + preset + "'");
    }
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
        }
        base.apply_kv(line.substr(0, eq), line.substr(eq + 1));
    }
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

nn::NetConfig make_net_config(const RunConfig& cfg) {
    if (cfg.preset == "paper") return nn::NetConfig::paper();
    if (cfg.preset == "tiny") return nn::NetConfig::tiny();
    if (cfg.preset == "desk") return nn::NetConfig::desk();
    throw ConfigError("unknown net.preset '" + cfg.preset + "'");
}

}  // namespace fetalpose
