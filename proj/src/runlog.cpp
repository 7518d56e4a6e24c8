#include "rforge/runlog.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rforge {

const char* const kRunLogHeader =
    "step,method,seed,proxy_mean,shaped_mean,gold_winrate,kl_mean,policy_loss,critic_loss,"
    "mean_len";

namespace {

const std::vector<std::string> kMetricNames = {
    "proxy_mean", "shaped_mean", "gold_winrate", "kl_mean",
    "policy_loss", "critic_loss", "mean_len",
};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_metric(const std::string& s) {
    if (s.empty()) return std::nan("");
    return std::strtod(s.c_str(), nullptr);
}

}  // namespace

double runlog_metric(const RunLogRow& row, const std::string& metric) {
    if (metric == "proxy_mean") return row.proxy_mean;
    if (metric == "shaped_mean") return row.shaped_mean;
    if (metric == "gold_winrate") return row.gold_winrate;
    if (metric == "kl_mean") return row.kl_mean;
    if (metric == "policy_loss") return row.policy_loss;
    if (metric == "critic_loss") return row.critic_loss;
    if (metric == "mean_len") return row.mean_len;
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

const std::vector<std::string>& runlog_metric_names() { return kMetricNames; }

std::string format_metric(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    // Shortest representation that parses back to the same double.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

void write_runlog_csv(std::ostream& out, const RunLog& log) {
    out << kRunLogHeader << "\n";
    for (const RunLogRow& r : log.rows) {
        out << r.step << "," << r.method << "," << r.seed << "," << format_metric(r.proxy_mean)
            << "," << format_metric(r.shaped_mean) << "," << format_metric(r.gold_winrate) << ","
            << format_metric(r.kl_mean) << "," << format_metric(r.policy_loss) << ","
            << format_metric(r.critic_loss) << "," << format_metric(r.mean_len) << "\n";
    }
}

void write_runlog_csv_file(const std::string& path, const RunLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    write_runlog_csv(out, log);
}

RunLog read_runlog_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("runlog: empty file");
    }
    if (line != kRunLogHeader) {
        throw std::invalid_argument("runlog: header mismatch: '" + line + "'");
    }
    RunLog log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_fields(line);
        if (f.size() != 10) {
            throw std::invalid_argument("runlog: malformed row '" + line + "'");
        }
        RunLogRow row;
        row.step = std::atoi(f[0].c_str());
        row.method = f[1];
        row.seed = std::strtoull(f[2].c_str(), nullptr, 10);
        row.proxy_mean = parse_metric(f[3]);
        row.shaped_mean = parse_metric(f[4]);
        row.gold_winrate = parse_metric(f[5]);
        row.kl_mean = parse_metric(f[6]);
        row.policy_loss = parse_metric(f[7]);
        row.critic_loss = parse_metric(f[8]);
        row.mean_len = parse_metric(f[9]);
        log.rows.push_back(std::move(row));
    }
    return log;
}

RunLog read_runlog_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    return read_runlog_csv(in);
}

}  // namespace rforge
