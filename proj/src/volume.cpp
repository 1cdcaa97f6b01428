#include "fetalpose/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fetalpose/errors.hpp"

namespace fetalpose {

IVec3 action_delta(Action a, int step_voxels) {
    switch (a) {
        case Action::pos_x: return {step_voxels, 0, 0};
        case Action::neg_x: return {-step_voxels, 0, 0};
        case Action::pos_y: return {0, step_voxels, 0};
        case Action::neg_y: return {0, -step_voxels, 0};
        case Action::pos_z: return {0, 0, step_voxels};
        case Action::neg_z: return {0, 0, -step_voxels};
    }
    return {};
}

namespace {

constexpr char kMagic[4] = {'L', 'S', 'V', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated LSV1 header");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void save_volume(const LabeledVolume& v, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);

    nlohmann::ordered_json header;
    header["dims"] = {v.dims.x, v.dims.y, v.dims.z};
    header["spacing_mm"] = {v.spacing_mm.x, v.spacing_mm.y, v.spacing_mm.z};
    nlohmann::ordered_json lms;
    const auto& names = landmark_names();
    for (int i = 0; i < kNumLandmarks; ++i) {
        lms[names[i]] = {v.landmarks_gt[i].x, v.landmarks_gt[i].y, v.landmarks_gt[i].z};
    }
    header["landmarks"] = lms;
    header["meta"] = v.meta;
    const std::string text = header.dump();

    os.write(kMagic, 4);
    write_u32(os, static_cast<uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    static_assert(sizeof(float) == 4);
    // Little-endian host assumed; the format pins LE on disk.
    os.write(reinterpret_cast<const char*>(v.voxels.data()),
             static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (!os) throw IoError("write failed: " + path);
}

LabeledVolume load_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);

    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("truncated LSV1 file: " + path);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad LSV1 magic: " + path);

    const uint32_t header_len = read_u32(is);
    std::string text(header_len, '\0');
    if (!is.read(text.data(), header_len)) throw FormatError("truncated LSV1 header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad LSV1 header json: ") + e.what());
    }

    LabeledVolume v;
    try {
        auto dims = header.at("dims");
        v.dims = {dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
        auto sp = header.at("spacing_mm");
        v.spacing_mm = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
        auto lms = header.at("landmarks");
        const auto& names = landmark_names();
        for (int i = 0; i < kNumLandmarks; ++i) {
            auto p = lms.at(names[i]);
            v.landmarks_gt[i] = {p.at(0).get<double>(), p.at(1).get<double>(),
                                 p.at(2).get<double>()};
        }
        if (header.contains("meta")) {
            for (auto& [key, val] : header.at("meta").items()) {
                v.meta[key] = val.get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete LSV1 header: ") + e.what());
    }

    if (v.dims.x <= 0 || v.dims.y <= 0 || v.dims.z <= 0) throw FormatError("bad LSV1 dims");
    if (v.spacing_mm.x <= 0 || v.spacing_mm.y <= 0 || v.spacing_mm.z <= 0) {
        throw FormatError("bad LSV1 spacing");
    }

    v.voxels.resize(v.voxel_count());
    is.read(reinterpret_cast<char*>(v.voxels.data()),
            static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (static_cast<size_t>(is.gcount()) != v.voxels.size() * sizeof(float)) {
        throw FormatError("LSV1 payload shorter than header dims: " + path);
    }
    // Trailing bytes mean the header dims disagree with the payload.
    char extra;
    if (is.read(&extra, 1)) throw FormatError("LSV1 payload longer than header dims: " + path);
    return v;
}

std::vector<float> extract_patch(const LabeledVolume& v, const IVec3& center, int size) {
    std::vector<float> patch(static_cast<size_t>(size) * size * size, 0.0f);
    const int half = size / 2;
    const int x0 = center.x - half, y0 = center.y - half, z0 = center.z - half;

    const int qx_lo = std::max(0, -x0), qx_hi = std::min(size, v.dims.x - x0);
    const int qy_lo = std::max(0, -y0), qy_hi = std::min(size, v.dims.y - y0);
    const int qz_lo = std::max(0, -z0), qz_hi = std::min(size, v.dims.z - z0);
    if (qx_lo >= qx_hi || qy_lo >= qy_hi || qz_lo >= qz_hi) return patch;

    for (int qz = qz_lo; qz < qz_hi; ++qz) {
        for (int qy = qy_lo; qy < qy_hi; ++qy) {
            const float* src = &v.voxels[v.index(x0 + qx_lo, y0 + qy, z0 + qz)];
            float* dst = &patch[static_cast<size_t>(qx_lo) +
                                static_cast<size_t>(size) * (qy + static_cast<size_t>(size) * qz)];
            std::copy(src, src + (qx_hi - qx_lo), dst);
        }
    }
    return patch;
}

IVec3 clamp_to_volume(const IVec3& p, const IVec3& dims) {
    return {std::clamp(p.x, 0, dims.x - 1), std::clamp(p.y, 0, dims.y - 1),
            std::clamp(p.z, 0, dims.z - 1)};
}

std::array<IVec3, kNumLandmarks> env_step(const std::array<IVec3, kNumLandmarks>& positions,
                                          const std::array<Action, kNumLandmarks>& actions,
                                          const IVec3& dims, int step_voxels) {
    std::array<IVec3, kNumLandmarks> out;
    for (int k = 0; k < kNumLandmarks; ++k) {
        const IVec3 d = action_delta(actions[k], step_voxels);
        out[k] = clamp_to_volume({positions[k].x + d.x, positions[k].y + d.y, positions[k].z + d.z},
                                 dims);
    }
    return out;
}

std::pair<IVec3, IVec3> initial_position_box(const IVec3& dims, double inner_fraction) {
    IVec3 lo, hi;
    for (int axis = 0; axis < 3; ++axis) {
        const int d = dims[axis];
        const int side = std::min(d, static_cast<int>(std::ceil(inner_fraction * d)));
        const int start = (d - side + 1) / 2;  // centered, biased up on ties
        lo[axis] = start;
        hi[axis] = start + side - 1;
    }
    return {lo, hi};
}

std::array<IVec3, kNumLandmarks> initial_positions(const IVec3& dims, Rng& rng,
                                                   double inner_fraction) {
    const auto [lo, hi] = initial_position_box(dims, inner_fraction);
    std::array<IVec3, kNumLandmarks> out;
    for (int k = 0; k < kNumLandmarks; ++k) {
        for (int axis = 0; axis < 3; ++axis) {
            out[k][axis] = rng.uniform_int(lo[axis], hi[axis]);
        }
    }
    return out;
}

}  // namespace fetalpose
