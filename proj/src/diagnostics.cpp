#include "rforge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rforge/shaping.hpp"
#include "rforge/trajectory.hpp"

namespace rforge {

namespace {

constexpr std::uint64_t kStreamTag = 0x72657442ULL;
constexpr std::uint64_t kPgSampleTag = 0x70675321ULL;
constexpr std::uint64_t kPgRefTag = 0x70675221ULL;
constexpr std::uint64_t kCalPolicyTag = 0x63616c50ULL;
constexpr std::uint64_t kCalPrefTag = 0x63616c41ULL;
constexpr std::uint64_t kCalWinTag = 0x63616c42ULL;
constexpr std::uint64_t kCalTrainTag = 0x63616c54ULL;

}  // namespace

double uniform_reward_sampler(Rng& rng) {
    const double r = 2.0 * rng.uniform() - 1.0;
    // uniform() can return exactly 0; keep the sample strictly inside (-1, 1).
    return r <= -1.0 ? 0.0 : r;
}

VarianceReport check_return_bound(const std::function<double(Rng&)>& reward_sampler,
                                  double gamma, int horizon, int n, std::uint64_t seed) {
    if (gamma < 0.0 || gamma >= 1.0) {
        throw std::invalid_argument("check_return_bound: gamma must be in [0, 1)");
    }
    if (horizon < 1 || n < 2) {
        throw std::invalid_argument("check_return_bound: need horizon >= 1 and n >= 2");
    }
    VarianceReport report;
    report.gamma = gamma;
    report.bound = 1.0 / ((1.0 - gamma) * (1.0 - gamma));
    report.samples = n;

    RunningStats returns;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, kStreamTag, static_cast<std::uint64_t>(i)));
        double g = 0.0;
        double discount = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const double r = reward_sampler(rng);
            if (!(std::abs(r) < 1.0)) {
                throw std::invalid_argument("check_return_bound: sampler emitted |r| >= 1");
            }
            g += discount * r;
            discount *= gamma;
        }
        returns.update(g);
        report.max_abs_return = std::max(report.max_abs_return, std::abs(g));
    }
    report.empirical_return_variance = returns.variance();

    const double return_cap = 1.0 / (1.0 - gamma);
    if (report.max_abs_return > return_cap) {
        throw std::logic_error("check_return_bound: |G_0| exceeded 1/(1-gamma)");
    }
    if (report.empirical_return_variance > report.bound) {
        throw std::logic_error("check_return_bound: Var(G_0) exceeded 1/(1-gamma)^2");
    }
    return report;
}

PgVarianceReport pg_variance_compare(const SoftmaxPolicy& policy, const EnvSpec& env,
                                     const SoftmaxPolicy& ref_policy, int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("pg_variance_compare: n must be >= 2");

    // The estimator requires samples from the policy's own distribution.
    SoftmaxPolicy sampler = policy;
    sampler.controls() = SamplingControls{1.0, 0, 1.0};

    // One frozen reference response (and reward) per prompt.
    std::vector<double> ref_reward(static_cast<std::size_t>(env.num_prompts));
    for (int p = 0; p < env.num_prompts; ++p) {
        const Trajectory traj = ref_policy.sample(p, derive_seed(seed, kPgRefTag, p));
        ref_reward[static_cast<std::size_t>(p)] = proxy_reward(env, response_from(traj));
    }

    const std::size_t dims =
        static_cast<std::size_t>(sampler.feature_count()) * sampler.vocab_size();
    std::vector<double> sum_gb(dims, 0.0), ss_gb(dims, 0.0);
    std::vector<double> sum_gs(dims, 0.0), ss_gs(dims, 0.0);
    std::vector<double> sum_pred(dims, 0.0);
    std::vector<double> sum_w(dims, 0.0), ss_w(dims, 0.0);

    Rng feedback_rng(derive_seed(seed, 0xfeedULL));
    const int vocab = sampler.vocab_size();
    for (int i = 0; i < n; ++i) {
        const int prompt = i % env.num_prompts;
        const Trajectory traj = sampler.sample(prompt, derive_seed(seed, kPgSampleTag, i));
        const double z =
            proxy_reward(env, response_from(traj)) - ref_reward[static_cast<std::size_t>(prompt)];
        const double p_win = stable_sigmoid(z);
        const double b = feedback_rng.bernoulli(p_win) ? 1.0 : 0.0;
        const double spread = p_win * (1.0 - p_win);

        for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
            const int feature = traj.features[t];
            const std::vector<double> probs = sampler.probs(feature);
            for (int v = 0; v < vocab; ++v) {
                const double s_entry =
                    ((v == traj.tokens[t]) ? 1.0 : 0.0) - probs[static_cast<std::size_t>(v)];
                const std::size_t k =
                    static_cast<std::size_t>(feature) * static_cast<std::size_t>(vocab) +
                    static_cast<std::size_t>(v);
                const double gb = s_entry * b;
                const double gs = s_entry * p_win;
                const double w = s_entry * s_entry * (b - p_win);
                sum_gb[k] += gb;
                ss_gb[k] += gb * gb;
                sum_gs[k] += gs;
                ss_gs[k] += gs * gs;
                sum_pred[k] += s_entry * s_entry * spread;
                sum_w[k] += w;
                ss_w[k] += w * w;
            }
        }
    }

    PgVarianceReport report;
    report.samples = n;
    report.var_bernoulli.resize(dims);
    report.var_sigma.resize(dims);
    report.gap.resize(dims);
    report.predicted_gap.resize(dims);
    report.gap_se.resize(dims);
    const double dn = static_cast<double>(n);
    for (std::size_t k = 0; k < dims; ++k) {
        const double mb = sum_gb[k] / dn;
        const double ms = sum_gs[k] / dn;
        report.var_bernoulli[k] = std::max(0.0, ss_gb[k] / dn - mb * mb);
        report.var_sigma[k] = std::max(0.0, ss_gs[k] / dn - ms * ms);
        report.gap[k] = report.var_bernoulli[k] - report.var_sigma[k];
        report.predicted_gap[k] = sum_pred[k] / dn;
        const double mw = sum_w[k] / dn;
        const double var_w = std::max(0.0, ss_w[k] / dn - mw * mw);
        report.gap_se[k] = std::sqrt(var_w / dn);
    }
    return report;
}

std::vector<CalibrationRecord> collect_calibration(const EnvSpec& env,
                                                   const SoftmaxPolicy& policy,
                                                   const SoftmaxPolicy& ref_policy, int n,
                                                   std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("collect_calibration: n must be >= 1");
    std::vector<CalibrationRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int prompt = i % env.num_prompts;
        const Trajectory y = policy.sample(prompt, derive_seed(seed, kCalPolicyTag, i));
        const Trajectory pref_ref = ref_policy.sample(prompt, derive_seed(seed, kCalPrefTag, i));
        const Trajectory win_ref = ref_policy.sample(prompt, derive_seed(seed, kCalWinTag, i));

        CalibrationRecord rec;
        rec.preference = hidden_preference(proxy_reward(env, response_from(y)),
                                           proxy_reward(env, response_from(pref_ref)));
        const double gy = gold_reward(env, response_from(y));
        const double gr = gold_reward(env, response_from(win_ref));
        rec.win = gy > gr ? 1.0 : (gy == gr ? 0.5 : 0.0);
        out.push_back(rec);
    }
    return out;
}

std::vector<CalibrationBin> calibration_curve(const std::vector<CalibrationRecord>& records,
                                              int bins) {
    if (bins < 1) throw std::invalid_argument("calibration_curve: bins must be >= 1");
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    std::vector<double> wins(static_cast<std::size_t>(bins), 0.0);
    for (const CalibrationRecord& rec : records) {
        const double p = std::clamp(rec.preference, 0.0, 1.0);
        int idx = static_cast<int>(p * bins);
        idx = std::min(idx, bins - 1);
        ++counts[static_cast<std::size_t>(idx)];
        wins[static_cast<std::size_t>(idx)] += rec.win;
    }
    std::vector<CalibrationBin> out(static_cast<std::size_t>(bins));
    for (int i = 0; i < bins; ++i) {
        CalibrationBin& bin = out[static_cast<std::size_t>(i)];
        bin.center = (static_cast<double>(i) + 0.5) / static_cast<double>(bins);
        bin.count = counts[static_cast<std::size_t>(i)];
        bin.winrate = bin.count > 0 ? wins[static_cast<std::size_t>(i)] / bin.count : std::nan("");
    }
    return out;
}

std::vector<CalibrationRecord> calibration_over_training(const EnvSpec& env,
                                                         const ShapingSpec& spec,
                                                         const PpoConfig& cfg, std::uint64_t seed,
                                                         int samples_per_checkpoint) {
    std::vector<CalibrationRecord> records;
    const SoftmaxPolicy ref(env, cfg.sampling);
    TrainHooks hooks;
    hooks.on_eval = [&](int step, const SoftmaxPolicy& policy) {
        std::vector<CalibrationRecord> recs = collect_calibration(
            env, policy, ref, samples_per_checkpoint, derive_seed(seed, kCalTrainTag, step));
        records.insert(records.end(), recs.begin(), recs.end());
    };
    train_ppo(env, spec, cfg, seed, hooks);
    return records;
}

std::optional<int> detect_hacking(const RunLog& log, int window, double drop_points) {
    if (window < 2) throw std::invalid_argument("detect_hacking: window must be >= 2");
    std::vector<const RunLogRow*> rows;
    for (const RunLogRow& row : log.rows) {
        if (!std::isnan(row.proxy_mean) && !std::isnan(row.gold_winrate)) {
            rows.push_back(&row);
        }
    }
    if (rows.size() < 3) return std::nullopt;

    const double drop = drop_points / 100.0;
    double peak = -1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        peak = std::max(peak, rows[i]->gold_winrate);
        if (i + 1 < static_cast<std::size_t>(window)) continue;
        bool increasing = true;
        for (std::size_t j = i + 1 - static_cast<std::size_t>(window); j < i; ++j) {
            if (!(rows[j]->proxy_mean < rows[j + 1]->proxy_mean)) {
                increasing = false;
                break;
            }
        }
        if (increasing && peak - rows[i]->gold_winrate >= drop) {
            return rows[i]->step;
        }
    }
    return std::nullopt;
}

}  // namespace rforge
