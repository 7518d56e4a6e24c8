#include "rforge/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rforge/diagnostics.hpp"
#include "rforge/dpo.hpp"
#include "rforge/grpo.hpp"
#include "rforge/svgplot.hpp"

namespace fs = std::filesystem;

namespace rforge {

namespace {

struct Job {
    std::string label;       // method label as written into the CSV
    std::string method_name; // shaping method name ("" for dpo)
    std::uint64_t seed = 0;
    std::string csv_path;
    std::string checkpoint_dir;
};

std::string sanitize(const std::string& label) {
    std::string out = label;
    for (char& c : out) {
        if (c == ':' || c == '/' || c == ' ') c = '-';
    }
    return out;
}

int thread_cap(int jobs) {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    if (const char* env = std::getenv("REWARD_FORGE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) cap = v;
    }
    return std::min(cap, std::max(1, jobs));
}

RunLogRow abort_marker(const std::string& label, std::uint64_t seed, int step) {
    RunLogRow row;
    row.step = step;
    row.method = label + "!aborted";
    row.seed = seed;
    row.proxy_mean = std::nan("");
    row.shaped_mean = std::nan("");
    row.gold_winrate = std::nan("");
    row.kl_mean = std::nan("");
    row.policy_loss = std::nan("");
    row.critic_loss = std::nan("");
    row.mean_len = std::nan("");
    return row;
}

void write_checkpoint(const std::string& dir, int step, const SoftmaxPolicy& policy) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06d.txt", step);
    std::ofstream out(fs::path(dir) / name, std::ios::trunc);
    if (out) policy.save(out);
}

void plot_metrics_from_csv(const std::string& merged_csv, const std::string& out_dir,
                           std::vector<std::string>& svg_paths) {
    const RunLog merged = read_runlog_csv_file(merged_csv);
    // Method label order as first seen in the CSV.
    std::vector<std::string> labels;
    for (const RunLogRow& row : merged.rows) {
        if (row.method.find("!aborted") != std::string::npos) continue;
        if (std::find(labels.begin(), labels.end(), row.method) == labels.end()) {
            labels.push_back(row.method);
        }
    }
    for (const std::string& metric : runlog_metric_names()) {
        std::vector<SvgSeries> series;
        for (const std::string& label : labels) {
            // Mean across seeds at each step.
            std::map<int, std::pair<double, int>> acc;
            for (const RunLogRow& row : merged.rows) {
                if (row.method != label) continue;
                const double v = runlog_metric(row, metric);
                if (std::isnan(v)) continue;
                auto& slot = acc[row.step];
                slot.first += v;
                slot.second += 1;
            }
            if (acc.empty()) continue;
            SvgSeries s;
            s.label = label;
            for (const auto& [step, sum_count] : acc) {
                s.x.push_back(step);
                s.y.push_back(sum_count.first / sum_count.second);
            }
            series.push_back(std::move(s));
        }
        if (series.empty()) continue;
        const std::string path = (fs::path(out_dir) / (metric + ".svg")).string();
        std::ofstream out(path, std::ios::trunc);
        out << render_line_chart(metric, "step", metric, series);
        svg_paths.push_back(path);
    }
}

}  // namespace

int ExperimentResult::aborted_count() const {
    int n = 0;
    for (const RunResult& r : runs) n += r.aborted ? 1 : 0;
    return n;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    std::vector<Job> jobs;
    const std::vector<std::string> method_names =
        cfg.algo == "dpo" ? std::vector<std::string>{""} : cfg.methods;
    for (const std::string& name : method_names) {
        std::string label;
        if (cfg.algo == "dpo") {
            label = "dpo";
        } else if (cfg.algo == "grpo") {
            label = "grpo:" + name;
        } else {
            label = name;
        }
        for (std::uint64_t seed : cfg.seeds) {
            Job job;
            job.label = label;
            job.method_name = name;
            job.seed = seed;
            const std::string stem = sanitize(label) + "_" + std::to_string(seed);
            job.csv_path = (fs::path(cfg.out_dir) / (stem + ".csv")).string();
            job.checkpoint_dir = (fs::path(cfg.out_dir) / "checkpoints" / stem).string();
            jobs.push_back(std::move(job));
        }
    }

    std::vector<RunResult> results(jobs.size());
    std::vector<RunLog> logs(jobs.size());
    std::atomic<std::size_t> next{0};
    const int workers = thread_cap(static_cast<int>(jobs.size()));

    const auto run_job = [&](std::size_t j) {
        const Job& job = jobs[j];
        RunResult& res = results[j];
        res.method = job.label;
        res.seed = job.seed;
        res.csv_path = job.csv_path;
        fs::create_directories(job.checkpoint_dir);

        RunLog log;
        TrainHooks hooks;
        hooks.on_row = [&log](const RunLogRow& row) { log.rows.push_back(row); };
        hooks.on_eval = [&job](int step, const SoftmaxPolicy& policy) {
            write_checkpoint(job.checkpoint_dir, step, policy);
        };
        // train_* also returns the rows; on_row keeps them recoverable when
        // the run aborts mid-way.
        try {
            if (cfg.algo == "dpo") {
                train_online_dpo(cfg.env, cfg.dpo, job.seed, hooks);
            } else if (cfg.algo == "grpo") {
                train_grpo(cfg.env, cfg.shaping_for(job.method_name), cfg.ppo, job.seed, hooks);
            } else {
                train_ppo(cfg.env, cfg.shaping_for(job.method_name), cfg.ppo, job.seed, hooks);
            }
        } catch (const TrainingAbort& abort) {
            res.aborted = true;
            res.error = abort.what();
            log.rows.push_back(abort_marker(job.label, job.seed, abort.step));
        }
        write_runlog_csv_file(job.csv_path, log);
        logs[j] = std::move(log);
    };

    if (workers <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t j = next.fetch_add(1);
                    if (j >= jobs.size()) return;
                    run_job(j);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    ExperimentResult out;
    out.runs = results;

    // Merged CSV in job order.
    RunLog merged;
    for (const RunLog& log : logs) {
        merged.rows.insert(merged.rows.end(), log.rows.begin(), log.rows.end());
    }
    out.merged_csv = (fs::path(cfg.out_dir) / "merged.csv").string();
    write_runlog_csv_file(out.merged_csv, merged);

    // Plots are derived from the merged CSV file, not from in-memory state.
    plot_metrics_from_csv(out.merged_csv, cfg.out_dir, out.svg_paths);

    // Timestamps live only in the sidecar.
    {
        std::ofstream meta(fs::path(cfg.out_dir) / "run_meta.txt", std::ios::trunc);
        const std::time_t now = std::time(nullptr);
        char stamp[64];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        meta << "finished " << stamp << "\n";
        meta << "algo " << cfg.algo << "\n";
        for (const RunResult& r : out.runs) {
            meta << "run " << r.method << " seed=" << r.seed
                 << (r.aborted ? " ABORTED: " + r.error : " ok") << "\n";
        }
    }
    return out;
}

CompareTable compare_runs(const std::vector<RunLog>& logs, const std::string& metric) {
    // Validates the metric name up front.
    (void)runlog_metric(RunLogRow{}, metric);

    struct PerSeed {
        double final_value = 0.0;
        double peak = 0.0;
        int peak_step = 0;
        std::optional<int> hack_step;
    };
    std::vector<std::string> order;
    std::map<std::string, std::map<std::uint64_t, RunLog>> grouped;
    for (const RunLog& log : logs) {
        for (const RunLogRow& row : log.rows) {
            if (row.method.find("!aborted") != std::string::npos) continue;
            if (grouped.find(row.method) == grouped.end()) order.push_back(row.method);
            grouped[row.method][row.seed].rows.push_back(row);
        }
    }
    if (grouped.empty()) {
        throw std::invalid_argument("compare: no runs found");
    }

    CompareTable table;
    table.metric = metric;
    for (const std::string& method : order) {
        std::vector<PerSeed> per_seed;
        for (auto& [seed, run] : grouped[method]) {
            std::stable_sort(run.rows.begin(), run.rows.end(),
                             [](const RunLogRow& a, const RunLogRow& b) { return a.step < b.step; });
            PerSeed ps;
            bool any = false;
            for (const RunLogRow& row : run.rows) {
                const double v = runlog_metric(row, metric);
                if (std::isnan(v)) continue;
                if (!any || v > ps.peak) {
                    ps.peak = v;
                    ps.peak_step = row.step;
                }
                ps.final_value = v;
                any = true;
            }
            if (!any) {
                throw std::invalid_argument("compare: missing metric '" + metric +
                                            "' for method '" + method + "'");
            }
            ps.hack_step = detect_hacking(run);
            per_seed.push_back(ps);
        }

        CompareRow row;
        row.method = method;
        row.seeds = static_cast<int>(per_seed.size());
        double fsum = 0.0, psum = 0.0, ssum = 0.0;
        for (const PerSeed& ps : per_seed) {
            fsum += ps.final_value;
            psum += ps.peak;
            ssum += ps.peak_step;
            if (ps.hack_step) {
                ++row.hacked_seeds;
                row.first_hack_step_mean += *ps.hack_step;
            }
        }
        const double n = static_cast<double>(per_seed.size());
        row.final_mean = fsum / n;
        row.peak_mean = psum / n;
        row.peak_step_mean = ssum / n;
        double fvar = 0.0, pvar = 0.0;
        for (const PerSeed& ps : per_seed) {
            fvar += (ps.final_value - row.final_mean) * (ps.final_value - row.final_mean);
            pvar += (ps.peak - row.peak_mean) * (ps.peak - row.peak_mean);
        }
        row.final_std = std::sqrt(fvar / n);
        row.peak_std = std::sqrt(pvar / n);
        row.first_hack_step_mean =
            row.hacked_seeds > 0 ? row.first_hack_step_mean / row.hacked_seeds : std::nan("");
        table.rows.push_back(row);
    }
    return table;
}

std::string format_table(const CompareTable& table) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-18s %5s %12s %10s %12s %10s %10s %7s %10s\n",
                  ("metric=" + table.metric).c_str(), "seeds", "final_mean", "final_std",
                  "peak_mean", "peak_std", "peak_step", "hacked", "hack_step");
    os << buf;
    for (const CompareRow& r : table.rows) {
        std::snprintf(buf, sizeof buf, "%-18s %5d %12.5g %10.4g %12.5g %10.4g %10.1f %7d %10.1f\n",
                      r.method.c_str(), r.seeds, r.final_mean, r.final_std, r.peak_mean,
                      r.peak_std, r.peak_step_mean, r.hacked_seeds, r.first_hack_step_mean);
        os << buf;
    }
    return os.str();
}

}  // namespace rforge
