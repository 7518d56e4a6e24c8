#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rforge {

// One evaluation row emitted by a trainer. Metric fields use NaN for "not
// applicable" (e.g. critic_loss for GRPO); such fields serialize as empty
// CSV cells.
struct RunLogRow {
    int step = 0;
    std::string method;
    std::uint64_t seed = 0;
    double proxy_mean = 0.0;
    double shaped_mean = 0.0;
    double gold_winrate = 0.0;
    double kl_mean = 0.0;
    double policy_loss = 0.0;
    double critic_loss = 0.0;
    double mean_len = 0.0;
};

struct RunLog {
    std::vector<RunLogRow> rows;
};

// Frozen column order.
extern const char* const kRunLogHeader;

// Named access for compare/plot tooling. Throws std::invalid_argument for an
// unknown metric name.
double runlog_metric(const RunLogRow& row, const std::string& metric);
const std::vector<std::string>& runlog_metric_names();

void write_runlog_csv(std::ostream& out, const RunLog& log);
void write_runlog_csv_file(const std::string& path, const RunLog& log);

// Throws std::invalid_argument on a header mismatch or malformed row.
RunLog read_runlog_csv(std::istream& in);
RunLog read_runlog_csv_file(const std::string& path);

// Shortest decimal text that round-trips the double exactly; empty for NaN.
std::string format_metric(double v);

}  // namespace rforge
