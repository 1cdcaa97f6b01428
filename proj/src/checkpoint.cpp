#include "fetalpose/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fetalpose/errors.hpp"

namespace fetalpose {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'C', '1'};
constexpr uint32_t kFormatVersion = 1;

struct Writer {
    std::ofstream os;
    explicit Writer(const std::string& path) : os(path, std::ios::binary) {
        if (!os) throw IoError("cannot open checkpoint for write: " + path);
    }
    void bytes(const void* p, size_t n) { os.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v));
        u32(static_cast<uint32_t>(v >> 32));
    }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    std::ifstream is;
    explicit Reader(const std::string& path) : is(path, std::ios::binary) {
        if (!is) throw IoError("cannot open checkpoint for read: " + path);
    }
    void bytes(void* p, size_t n) {
        if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
            throw FormatError("truncated checkpoint");
        }
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
               (uint32_t(b[3]) << 24);
    }
    uint64_t u64() {
        uint64_t lo = u32();
        uint64_t hi = u32();
        return lo | (hi << 32);
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        if (n > (1u << 30)) throw FormatError("unreasonable string length in checkpoint");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
};

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);
    w.str(data.config_text);

    w.u32(static_cast<uint32_t>(data.graph_edges.size()));
    for (const auto& [a, b] : data.graph_edges) {
        w.u32(static_cast<uint32_t>(a));
        w.u32(static_cast<uint32_t>(b));
    }

    w.u32(static_cast<uint32_t>(data.tensors.size()));
    for (const auto& t : data.tensors) {
        w.str(t.name);
        w.u32(static_cast<uint32_t>(t.shape.size()));
        size_t n = 1;
        for (int64_t d : t.shape) {
            w.i64(d);
            n *= static_cast<size_t>(d);
        }
        if (n != t.data.size()) throw Error("tensor block size mismatch at save: " + t.name);
        for (double v : t.data) w.f64(v);
    }

    w.u32(static_cast<uint32_t>(data.rng_states.size()));
    for (const auto& [name, state] : data.rng_states) {
        w.str(name);
        w.str(state);
    }

    w.u32(static_cast<uint32_t>(data.counters.size()));
    for (const auto& [name, value] : data.counters) {
        w.str(name);
        w.i64(value);
    }

    w.u32(static_cast<uint32_t>(data.replay.size()));
    for (const auto& r : data.replay) {
        w.i32(r.volume_index);
        w.u64(r.episode_seed);
        for (const auto& p : r.positions_t) {
            w.i32(p.x);
            w.i32(p.y);
            w.i32(p.z);
        }
        for (const auto& p : r.positions_t1) {
            w.i32(p.x);
            w.i32(p.y);
            w.i32(p.z);
        }
        for (uint8_t a : r.actions) w.u8(a);
        for (double rw : r.rewards) w.f64(rw);
        w.u8(r.terminal);
    }
    w.os.flush();
    if (!w.os) throw IoError("checkpoint write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic: " + path);
    const uint32_t fv = r.u32();
    if (fv != kFormatVersion) {
        throw FormatError("unsupported checkpoint format version " + std::to_string(fv));
    }

    CheckpointData data;
    data.config_text = r.str();

    const uint32_t n_edges = r.u32();
    for (uint32_t i = 0; i < n_edges; ++i) {
        const int a = static_cast<int>(r.u32());
        const int b = static_cast<int>(r.u32());
        data.graph_edges.emplace_back(a, b);
    }

    const uint32_t n_tensors = r.u32();
    for (uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensorBlock t;
        t.name = r.str();
        const uint32_t nd = r.u32();
        size_t n = 1;
        for (uint32_t d = 0; d < nd; ++d) {
            t.shape.push_back(r.i64());
            if (t.shape.back() < 0) throw FormatError("negative tensor dim in checkpoint");
            n *= static_cast<size_t>(t.shape.back());
        }
        if (n > (1ull << 32)) throw FormatError("unreasonable tensor size in checkpoint");
        t.data.resize(n);
        for (size_t j = 0; j < n; ++j) t.data[j] = r.f64();
        data.tensors.push_back(std::move(t));
    }

    const uint32_t n_rng = r.u32();
    for (uint32_t i = 0; i < n_rng; ++i) {
        std::string name = r.str();
        data.rng_states[name] = r.str();
    }

    const uint32_t n_counters = r.u32();
    for (uint32_t i = 0; i < n_counters; ++i) {
        std::string name = r.str();
        data.counters[name] = r.i64();
    }

    const uint32_t n_replay = r.u32();
    for (uint32_t i = 0; i < n_replay; ++i) {
        ReplayRecordSer rec;
        rec.volume_index = r.i32();
        rec.episode_seed = r.u64();
        for (auto& p : rec.positions_t) {
            p.x = r.i32();
            p.y = r.i32();
            p.z = r.i32();
        }
        for (auto& p : rec.positions_t1) {
            p.x = r.i32();
            p.y = r.i32();
            p.z = r.i32();
        }
        for (auto& a : rec.actions) a = r.u8();
        for (auto& rw : rec.rewards) rw = r.f64();
        rec.terminal = r.u8();
        data.replay.push_back(rec);
    }

    char extra;
    if (r.is.read(&extra, 1)) throw FormatError("trailing bytes in checkpoint: " + path);
    return data;
}

}  // namespace fetalpose
