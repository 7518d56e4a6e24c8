#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rforge/env.hpp"
#include "rforge/ppo.hpp"
#include "rforge/runlog.hpp"

namespace rforge {

// ---------------------------------------------------------------------------
// Return-variance bound (bounded per-step rewards)
// ---------------------------------------------------------------------------

struct VarianceReport {
    double gamma = 0.0;
    double max_abs_return = 0.0;
    double empirical_return_variance = 0.0;
    double bound = 0.0;  // 1 / (1 - gamma)^2
    int samples = 0;
};

// Simulates n reward streams of the given horizon with |r| < 1 per step,
// computes G_0 for each, and asserts |G_0| <= 1/(1-gamma) and
// Var(G_0) <= 1/(1-gamma)^2 (throws std::logic_error on violation; the bound
// is analytic). The sampler must emit values with |r| < 1; violations are a
// test-setup error (std::invalid_argument).
VarianceReport check_return_bound(const std::function<double(Rng&)>& reward_sampler,
                                  double gamma, int horizon, int n, std::uint64_t seed);

// Uniform(-1, 1) stream for the default check.
double uniform_reward_sampler(Rng& rng);

// ---------------------------------------------------------------------------
// Policy-gradient variance: Bernoulli feedback vs sigmoid shaping
// ---------------------------------------------------------------------------

struct PgVarianceReport {
    std::vector<double> var_bernoulli;  // per-parameter Var(g_B)
    std::vector<double> var_sigma;      // per-parameter Var(g_sigma)
    std::vector<double> gap;            // var_bernoulli - var_sigma
    std::vector<double> predicted_gap;  // E[S^2 sigma(z)(1 - sigma(z))]
    std::vector<double> gap_se;         // MC standard error of gap - predicted
    int samples = 0;
};

// Monte-Carlo comparison of the REINFORCE estimator with Bernoulli feedback
// B ~ Bernoulli(sigma(z)) against the sigmoid-shaped estimator, where
// z = proxy(x, y) - proxy(x, y_ref) with one frozen reference response per
// prompt. Sampling always uses the unfiltered temperature-1 policy.
PgVarianceReport pg_variance_compare(const SoftmaxPolicy& policy, const EnvSpec& env,
                                     const SoftmaxPolicy& ref_policy, int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Calibration of the hidden preference score vs gold winrate
// ---------------------------------------------------------------------------

struct CalibrationRecord {
    double preference = 0.0;  // sigma(proxy(y) - proxy(y_ref)) in (0, 1)
    double win = 0.0;         // gold comparison vs an independent reference: 0, 0.5 or 1
};

struct CalibrationBin {
    double center = 0.0;
    double winrate = 0.0;  // NaN when the bin is empty
    int count = 0;
};

// Scores n policy responses against reference rollouts: the preference uses
// one reference sample, the gold comparison an independent one.
std::vector<CalibrationRecord> collect_calibration(const EnvSpec& env,
                                                   const SoftmaxPolicy& policy,
                                                   const SoftmaxPolicy& ref_policy, int n,
                                                   std::uint64_t seed);

// Equal-width bins on [0, 1]. Bin counts sum to records.size().
std::vector<CalibrationBin> calibration_curve(const std::vector<CalibrationRecord>& records,
                                              int bins);

// Runs PPO and collects calibration records at every eval checkpoint, so the
// records span the preference range the policy traverses during training.
std::vector<CalibrationRecord> calibration_over_training(const EnvSpec& env,
                                                         const ShapingSpec& spec,
                                                         const PpoConfig& cfg, std::uint64_t seed,
                                                         int samples_per_checkpoint);

// ---------------------------------------------------------------------------
// Hacking detection
// ---------------------------------------------------------------------------

// Earliest eval step where proxy_mean is strictly increasing over a trailing
// window while gold_winrate sits at least `drop_points` percentage points
// below its running peak; nullopt when that never happens.
std::optional<int> detect_hacking(const RunLog& log, int window = 3, double drop_points = 10.0);

}  // namespace rforge
