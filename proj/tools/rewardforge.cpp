#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rforge/config.hpp"
#include "rforge/diagnostics.hpp"
#include "rforge/experiment.hpp"
#include "rforge/rng.hpp"

namespace fs = std::filesystem;
using namespace rforge;

namespace {

int cmd_train(const std::string& config_path, const std::string& algo,
              const std::string& methods, const std::string& seeds, const std::string& out) {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    std::string overrides;
    if (!algo.empty()) overrides += "run.algo=" + algo + "\n";
    if (!methods.empty()) overrides += "run.methods=" + methods + "\n";
    if (!seeds.empty()) overrides += "run.seeds=" + seeds + "\n";
    if (!out.empty()) overrides += "run.out_dir=" + out + "\n";
    if (!overrides.empty()) {
        // Re-parse with the command-line overrides appended.
        std::ifstream in(config_path);
        std::ostringstream buf;
        buf << in.rdbuf() << "\n" << overrides;
        cfg = ExperimentConfig::from_string(buf.str(), config_path);
    }

    const ExperimentResult result = run_experiment(cfg);
    for (const RunResult& r : result.runs) {
        std::cout << (r.aborted ? "ABORTED " : "done    ") << r.method << " seed=" << r.seed
                  << " -> " << r.csv_path;
        if (r.aborted) std::cout << "  (" << r.error << ")";
        std::cout << "\n";
    }
    std::cout << "merged: " << result.merged_csv << "\n";
    for (const std::string& svg : result.svg_paths) std::cout << "plot:   " << svg << "\n";
    return result.aborted_count() > 0 ? 1 : 0;
}

int cmd_compare(const std::vector<std::string>& inputs, const std::string& metric,
                const std::string& out_csv) {
    std::vector<RunLog> logs;
    logs.reserve(inputs.size());
    for (const std::string& path : inputs) {
        logs.push_back(read_runlog_csv_file(path));
    }
    const CompareTable table = compare_runs(logs, metric);
    std::cout << format_table(table);
    if (!out_csv.empty()) {
        std::ofstream out(out_csv, std::ios::trunc);
        out << "method,seeds,final_mean,final_std,peak_mean,peak_std,peak_step_mean,"
               "hacked_seeds,first_hack_step_mean\n";
        for (const CompareRow& r : table.rows) {
            out << r.method << "," << r.seeds << "," << format_metric(r.final_mean) << ","
                << format_metric(r.final_std) << "," << format_metric(r.peak_mean) << ","
                << format_metric(r.peak_std) << "," << format_metric(r.peak_step_mean) << ","
                << r.hacked_seeds << "," << format_metric(r.first_hack_step_mean) << "\n";
        }
    }
    return 0;
}

int diagnose_return_bound(std::uint64_t seed, int samples, const std::string& out_dir) {
    const double gammas[] = {0.0, 0.5, 0.9, 0.99};
    std::ostringstream csv;
    csv << "gamma,max_abs_return,return_cap,variance,bound,samples\n";
    bool ok = true;
    for (double gamma : gammas) {
        const VarianceReport rep =
            check_return_bound(uniform_reward_sampler, gamma, 200, samples, seed);
        const double cap = 1.0 / (1.0 - gamma);
        std::printf("gamma=%-5g max|G0|=%-10.5g cap=%-8.4g var=%-10.5g bound=%-8.4g %s\n",
                    gamma, rep.max_abs_return, cap, rep.empirical_return_variance, rep.bound,
                    "ok");
        csv << gamma << "," << rep.max_abs_return << "," << cap << ","
            << rep.empirical_return_variance << "," << rep.bound << "," << rep.samples << "\n";
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "return_bound.csv", std::ios::trunc);
        out << csv.str();
    }
    return ok ? 0 : 1;
}

int diagnose_pg_variance(const EnvSpec& env_in, std::uint64_t seed, int samples,
                         const std::string& out_dir) {
    // Small random policy/environment; the check is per logit parameter.
    EnvSpec env = env_in;
    env.vocab_size = std::min(env.vocab_size, 5);
    env.max_len = std::min(env.max_len, 4);
    env.num_prompts = std::min(env.num_prompts, 2);
    env.target_count = std::min(env.target_count, env.vocab_size - 2);
    env.validate();

    SoftmaxPolicy policy(env, SamplingControls{1.0, 0, 1.0});
    Rng rng(derive_seed(seed, 0x706f6cULL));
    for (int f = 0; f < policy.feature_count(); ++f) {
        for (int v = 0; v < policy.vocab_size(); ++v) {
            policy.set_logit(f, v, 0.5 * rng.normal());
        }
    }
    const SoftmaxPolicy ref = policy;

    const PgVarianceReport rep = pg_variance_compare(policy, env, ref, samples, seed);
    std::size_t within = 0;
    std::size_t order_ok = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < rep.gap.size(); ++k) {
        const double diff = std::abs(rep.gap[k] - rep.predicted_gap[k]);
        const double band = 3.0 * rep.gap_se[k] + 1e-12;
        if (diff <= band) ++within;
        if (rep.var_sigma[k] <= rep.var_bernoulli[k] + 3.0 * rep.gap_se[k] + 1e-12) ++order_ok;
        if (rep.gap_se[k] > 0.0) worst = std::max(worst, diff / rep.gap_se[k]);
    }
    const double n = static_cast<double>(rep.gap.size());
    std::printf("components=%zu samples=%d\n", rep.gap.size(), rep.samples);
    std::printf("gap within 3 SE of prediction: %.2f%%\n", 100.0 * within / n);
    std::printf("Var(g_sigma) <= Var(g_B) within band: %.2f%%\n", 100.0 * order_ok / n);
    std::printf("worst |gap - predicted| / SE: %.3g\n", worst);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "pg_variance.csv", std::ios::trunc);
        out << "component,var_bernoulli,var_sigma,gap,predicted_gap,gap_se\n";
        for (std::size_t k = 0; k < rep.gap.size(); ++k) {
            out << k << "," << rep.var_bernoulli[k] << "," << rep.var_sigma[k] << ","
                << rep.gap[k] << "," << rep.predicted_gap[k] << "," << rep.gap_se[k] << "\n";
        }
    }
    const bool pass = within >= 0.99 * n && order_ok >= 0.99 * n;
    std::printf("%s\n", pass ? "ok" : "FAILED");
    return pass ? 0 : 1;
}

int diagnose_calibration(const ExperimentConfig& cfg, std::uint64_t seed, int samples, int bins,
                         bool trained, const std::string& out_dir) {
    std::vector<CalibrationRecord> records;
    if (trained) {
        ShapingSpec identity;  // vanilla over-training
        records = calibration_over_training(cfg.env, identity, cfg.ppo, seed,
                                            std::max(1, samples / 10));
    } else {
        const SoftmaxPolicy sft(cfg.env, cfg.ppo.sampling);
        records = collect_calibration(cfg.env, sft, sft, samples, seed);
    }
    const std::vector<CalibrationBin> curve = calibration_curve(records, bins);
    std::printf("%-10s %-10s %s\n", "center", "winrate", "count");
    std::ostringstream csv;
    csv << "bin_center,winrate,count\n";
    for (const CalibrationBin& bin : curve) {
        if (bin.count > 0) {
            std::printf("%-10.3f %-10.4f %d\n", bin.center, bin.winrate, bin.count);
        } else {
            std::printf("%-10.3f %-10s %d\n", bin.center, "-", bin.count);
        }
        csv << bin.center << "," << (bin.count > 0 ? std::to_string(bin.winrate) : "") << ","
            << bin.count << "\n";
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "calibration.csv", std::ios::trunc);
        out << csv.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rewardforge: reward-shaping lab for PPO/GRPO/DPO on a hackable toy env"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run experiments from a config file");
    std::string config_path, algo, methods, seeds, out_dir;
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--algo", algo, "override run.algo (ppo|grpo|dpo)");
    train->add_option("--method", methods, "override run.methods (comma-separated)");
    train->add_option("--seed", seeds, "override run.seeds (comma-separated)");
    train->add_option("--out", out_dir, "override run.out_dir");

    // compare
    auto* compare = app.add_subcommand("compare", "tabulate final/peak metrics across runs");
    std::vector<std::string> inputs;
    std::string metric = "gold_winrate";
    std::string compare_out;
    compare->add_option("--in", inputs, "runlog CSV files")->required()->expected(-1);
    compare->add_option("--metric", metric, "metric column (default gold_winrate)");
    compare->add_option("--out", compare_out, "write the table as CSV");

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "numerical checks and analyses");
    std::string mode, diag_config, diag_out;
    std::uint64_t diag_seed = 1;
    int samples = 0;
    int bins = 10;
    bool trained = false;
    diagnose->add_option("--mode", mode, "return-bound | pg-variance | calibration")
        ->required()
        ->check(CLI::IsMember({"return-bound", "pg-variance", "calibration"}));
    diagnose->add_option("--config", diag_config, "config file (env/ppo sections)");
    diagnose->add_option("--seed", diag_seed, "rng seed");
    diagnose->add_option("--samples", samples, "sample count (mode-specific default)");
    diagnose->add_option("--bins", bins, "calibration bins");
    diagnose->add_flag("--trained", trained,
                       "calibration: collect over a vanilla PPO training run");
    diagnose->add_option("--out", diag_out, "directory for CSV reports");

    // dump-env
    auto* dump = app.add_subcommand("dump-env", "print the reward construction");
    std::string dump_config;
    dump->add_option("--config", dump_config, "config file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            return cmd_train(config_path, algo, methods, seeds, out_dir);
        }
        if (*compare) {
            return cmd_compare(inputs, metric, compare_out);
        }
        if (*diagnose) {
            ExperimentConfig cfg;
            if (!diag_config.empty()) cfg = ExperimentConfig::from_file(diag_config);
            if (mode == "return-bound") {
                return diagnose_return_bound(diag_seed, samples > 0 ? samples : 10000, diag_out);
            }
            if (mode == "pg-variance") {
                return diagnose_pg_variance(cfg.env, diag_seed, samples > 0 ? samples : 100000,
                                            diag_out);
            }
            return diagnose_calibration(cfg, diag_seed, samples > 0 ? samples : 20000, bins,
                                        trained, diag_out);
        }
        if (*dump) {
            ExperimentConfig cfg;
            if (!dump_config.empty()) cfg = ExperimentConfig::from_file(dump_config);
            std::cout << describe_env(cfg.env);
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
