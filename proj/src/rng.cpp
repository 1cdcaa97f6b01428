#include "fetalpose/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace fetalpose {

uint64_t hash_stream_name(const std::string& name) {
    // FNV-1a 64-bit.
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t root, const std::string& name, uint64_t index) {
    return mix64(mix64(root ^ hash_stream_name(name)) + index);
}

double Rng::normal(double mean, double stddev) {
    // u1 in (0,1] to keep the log finite.
    double u1 = 1.0 - uniform_real();
    double u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
}

}  // namespace fetalpose
