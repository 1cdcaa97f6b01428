#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace fetalpose {

// Append-only stream of structured text records, one per line:
//   wall_time=... learner_step=... loss=... eps=... version=...
// Evaluation records add kind=eval plus metric fields. wall_time is the only
// nondeterministic field; comparisons in tests skip it.
class MetricsWriter {
public:
    MetricsWriter() = default;
    explicit MetricsWriter(const std::string& path, bool append = false);

    void open(const std::string& path, bool append);
    bool is_open() const { return out_.is_open(); }

    void record(const std::vector<std::pair<std::string, std::string>>& fields);
    void record_train(uint64_t learner_step, double loss, double eps, uint64_t version);

    uint64_t records_written() const { return records_; }
    void set_records_written(uint64_t n) { records_ = n; }

private:
    std::mutex mu_;
    std::ofstream out_;
    uint64_t records_ = 0;
};

using MetricsRecord = std::map<std::string, std::string>;
std::vector<MetricsRecord> parse_metrics_file(const std::string& path);

}  // namespace fetalpose
