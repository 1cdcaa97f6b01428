#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fetalpose/pose_graph.hpp"
#include "fetalpose/vec3.hpp"

namespace fetalpose {

// "LSC1" checkpoint container: magic + format version, length-prefixed config
// text, the pose graph as an ordered edge list, named tensor blocks (name,
// shape, little-endian f64), rng state blobs, named counters, and the replay
// records. Fully deterministic layout: save -> load -> save is byte-identical.

struct NamedTensorBlock {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> data;
};

struct ReplayRecordSer {
    int32_t volume_index = -1;
    uint64_t episode_seed = 0;
    std::array<IVec3, kNumLandmarks> positions_t{};
    std::array<IVec3, kNumLandmarks> positions_t1{};
    std::array<uint8_t, kNumLandmarks> actions{};
    std::array<double, kNumLandmarks> rewards{};
    uint8_t terminal = 0;
};

struct CheckpointData {
    std::string config_text;
    std::vector<std::pair<int, int>> graph_edges;
    std::vector<NamedTensorBlock> tensors;
    std::map<std::string, std::string> rng_states;
    std::map<std::string, int64_t> counters;
    std::vector<ReplayRecordSer> replay;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);  // FormatError / IoError

}  // namespace fetalpose
