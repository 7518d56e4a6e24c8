#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rforge/config.hpp"
#include "rforge/runlog.hpp"

namespace rforge {

struct RunResult {
    std::string method;  // run label, incl. "grpo:" prefix or "dpo"
    std::uint64_t seed = 0;
    std::string csv_path;
    bool aborted = false;
    std::string error;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::string merged_csv;
    std::vector<std::string> svg_paths;

    int aborted_count() const;
};

// Launches one run per (method, seed), in parallel up to REWARD_FORGE_THREADS
// (default: hardware concurrency). Each run writes its own CSV and
// checkpoints; afterwards a merged CSV and one SVG per metric are produced
// from the CSV data. All emitted bytes are deterministic in the config except
// run_meta.txt, which holds the timestamp.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct CompareRow {
    std::string method;
    int seeds = 0;
    double final_mean = 0.0;
    double final_std = 0.0;
    double peak_mean = 0.0;
    double peak_std = 0.0;
    double peak_step_mean = 0.0;
    int hacked_seeds = 0;            // seeds where detect_hacking fired
    double first_hack_step_mean = 0.0;  // NaN when no seed hacked
};

struct CompareTable {
    std::string metric;
    std::vector<CompareRow> rows;
};

// Final and peak values of one metric per method, aggregated across seeds
// (population std), plus the hacking-detector summary. Throws
// std::invalid_argument when the metric is unknown or entirely missing.
CompareTable compare_runs(const std::vector<RunLog>& logs, const std::string& metric);

std::string format_table(const CompareTable& table);

}  // namespace rforge
