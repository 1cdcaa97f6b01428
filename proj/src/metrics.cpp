#include "fetalpose/train/metrics.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "fetalpose/errors.hpp"

namespace fetalpose {

MetricsWriter::MetricsWriter(const std::string& path, bool append) { open(path, append); }

void MetricsWriter::open(const std::string& path, bool append) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics file: " + path);
}

void MetricsWriter::record(const std::vector<std::pair<std::string, std::string>>& fields) {
    const double wall =
        std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    std::ostringstream line;
    char wb[32];
    std::snprintf(wb, sizeof(wb), "%.3f", wall);
    line << "wall_time=" << wb;
    for (const auto& [k, v] : fields) line << " " << k << "=" << v;
    std::lock_guard<std::mutex> lock(mu_);
    if (out_.is_open()) {
        out_ << line.str() << "\n";
        out_.flush();
    }
    ++records_;
}

void MetricsWriter::record_train(uint64_t learner_step, double loss, double eps,
                                 uint64_t version) {
    char lb[32], eb[32];
    std::snprintf(lb, sizeof(lb), "%.6g", loss);
    std::snprintf(eb, sizeof(eb), "%.6g", eps);
    record({{"kind", "train"},
            {"learner_step", std::to_string(learner_step)},
            {"loss", lb},
            {"eps", eb},
            {"version", std::to_string(version)}});
}

std::vector<MetricsRecord> parse_metrics_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read metrics file: " + path);
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        MetricsRecord rec;
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            const size_t eq = tok.find('=');
            if (eq != std::string::npos) rec[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace fetalpose
