#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "rforge/diagnostics.hpp"

using namespace rforge;

namespace {

bool nan_equal(double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

RunLogRow row(int step, double proxy, double winrate) {
    RunLogRow r;
    r.step = step;
    r.method = "x";
    r.proxy_mean = proxy;
    r.gold_winrate = winrate;
    return r;
}

SoftmaxPolicy random_policy(const EnvSpec& env, std::uint64_t seed, double scale = 0.5) {
    SoftmaxPolicy policy(env, SamplingControls{1.0, 0, 1.0});
    Rng rng(seed);
    for (int f = 0; f < policy.feature_count(); ++f) {
        for (int v = 0; v < policy.vocab_size(); ++v) {
            policy.set_logit(f, v, scale * rng.normal());
        }
    }
    return policy;
}

EnvSpec micro_env() {
    EnvSpec env;
    env.vocab_size = 4;
    env.max_len = 3;
    env.num_prompts = 2;
    env.target_count = 2;
    env.exploit_weight = 0.3;
    env.noise_std = 0.05;
    env.seed = 17;
    return env;
}

}  // namespace

TEST_CASE("return bound: gamma = 0 caps returns and variance at 1") {
    const VarianceReport rep = check_return_bound(uniform_reward_sampler, 0.0, 200, 10000, 1);
    CHECK(rep.max_abs_return <= 1.0);
    CHECK(rep.empirical_return_variance <= 1.0);
    CHECK(rep.bound == 1.0);
}

TEST_CASE("return bound: gamma = 0.9 stays within the analytic bounds") {
    const VarianceReport rep = check_return_bound(uniform_reward_sampler, 0.9, 200, 10000, 2);
    CHECK(rep.max_abs_return <= 10.0);
    CHECK(rep.empirical_return_variance <= 100.0);
    CHECK(rep.bound == doctest::Approx(100.0));
}

TEST_CASE("return bound: constant reward stream is deterministic") {
    const auto constant = [](Rng&) { return 0.5; };
    const VarianceReport rep = check_return_bound(constant, 0.5, 200, 100, 3);
    // G_0 = 0.5 * (1 - 0.5^200) / (1 - 0.5)
    CHECK(rep.max_abs_return == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.empirical_return_variance == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("return bound: a sampler violating |r| < 1 is a setup error") {
    const auto bad = [](Rng&) { return 1.0; };
    CHECK_THROWS_AS(check_return_bound(bad, 0.5, 10, 10, 4), std::invalid_argument);
    CHECK_THROWS_AS(check_return_bound(uniform_reward_sampler, 1.0, 10, 10, 4),
                    std::invalid_argument);
}

TEST_CASE("pg variance: gap matches the predicted gap within 3 MC standard errors") {
    const EnvSpec env = micro_env();
    const SoftmaxPolicy policy = random_policy(env, 21);
    const SoftmaxPolicy ref = random_policy(env, 22);
    const int n = 40000;
    const PgVarianceReport rep = pg_variance_compare(policy, env, ref, n, 5);
    REQUIRE(rep.gap.size() ==
            static_cast<std::size_t>(policy.feature_count()) * policy.vocab_size());
    std::size_t within = 0;
    std::size_t order = 0;
    for (std::size_t k = 0; k < rep.gap.size(); ++k) {
        const double band = 3.0 * rep.gap_se[k] + 1e-12;
        if (std::abs(rep.gap[k] - rep.predicted_gap[k]) <= band) ++within;
        if (rep.var_sigma[k] <= rep.var_bernoulli[k] + band) ++order;
        CHECK(rep.predicted_gap[k] >= 0.0);
    }
    CHECK(static_cast<double>(within) >= 0.99 * static_cast<double>(rep.gap.size()));
    CHECK(static_cast<double>(order) >= 0.99 * static_cast<double>(rep.gap.size()));
}

TEST_CASE("pg variance: near-zero rewards make the predicted gap a quarter of E[S^2]") {
    // All responses score ~0, so z ~ 0 and sigma(z)(1-sigma(z)) = 1/4 up to
    // O(z^2). E[S^2] comes from exhaustive enumeration of the uniform policy.
    EnvSpec env;
    env.vocab_size = 3;
    env.max_len = 2;
    env.num_prompts = 1;
    env.target_count = 1;
    env.exploit_weight = 0.0;
    env.noise_std = 0.0;
    env.gold_scale = 1e-12;
    env.redundancy_rate = 0.0;
    env.seed = 3;

    const SoftmaxPolicy policy(env, SamplingControls{1.0, 0, 1.0});  // uniform
    const int n = 30000;
    const PgVarianceReport rep = pg_variance_compare(policy, env, policy, n, 6);

    // Exhaustive E[S_k^2]: rollout shapes are [0] (p=1/3) and [t,u], t!=0
    // (p=1/9 each). S has entries (indicator - 1/3) at each visited state.
    std::map<std::size_t, double> es2;
    const int vocab = env.vocab_size;
    const auto s_entry = [&](int token, int v) { return (v == token ? 1.0 : 0.0) - 1.0 / 3.0; };
    const auto add_seq = [&](const std::vector<int>& tokens, double prob) {
        int prev = -1;
        for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
            const int f = policy.state_feature(0, static_cast<int>(pos), prev);
            for (int v = 0; v < vocab; ++v) {
                const double s = s_entry(tokens[pos], v);
                es2[static_cast<std::size_t>(f * vocab + v)] += prob * s * s;
            }
            prev = tokens[pos];
        }
    };
    add_seq({0}, 1.0 / 3.0);
    for (int t = 1; t < 3; ++t) {
        for (int u = 0; u < 3; ++u) {
            add_seq({t, u}, 1.0 / 9.0);
        }
    }

    for (const auto& [k, expected_s2] : es2) {
        if (expected_s2 < 0.01) continue;
        CHECK(rep.predicted_gap[k] ==
              doctest::Approx(0.25 * expected_s2).epsilon(0.1));
    }
}

TEST_CASE("pg variance: saturated preferences shrink the gap to zero") {
    // The frozen reference spams filler (reward ~ 3 * 500) while the sampling
    // policy is content-heavy, so z sits hundreds below zero for any response
    // the sampler realistically produces and the Bernoulli feedback becomes
    // deterministic.
    EnvSpec env = micro_env();
    env.exploit_weight = 500.0;
    env.noise_std = 0.0;
    SoftmaxPolicy policy(env, SamplingControls{1.0, 0, 1.0});
    for (int f = 0; f < policy.feature_count(); ++f) {
        policy.set_logit(f, 2, 5.0);
    }
    SoftmaxPolicy ref(env, SamplingControls{1.0, 0, 1.0});
    for (int f = 0; f < ref.feature_count(); ++f) {
        ref.set_logit(f, kFillerToken, 40.0);
    }
    const PgVarianceReport rep = pg_variance_compare(policy, env, ref, 5000, 8);
    for (std::size_t k = 0; k < rep.predicted_gap.size(); ++k) {
        CHECK(rep.predicted_gap[k] <= 1e-6);
        CHECK(std::abs(rep.gap[k]) <= 3.0 * rep.gap_se[k] + 1e-9);
    }
}

TEST_CASE("calibration curve: bins partition and counts sum") {
    std::vector<CalibrationRecord> records;
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        records.push_back({rng.uniform(), rng.bernoulli(0.5) ? 1.0 : 0.0});
    }
    const std::vector<CalibrationBin> curve = calibration_curve(records, 10);
    REQUIRE(curve.size() == 10);
    int total = 0;
    for (const CalibrationBin& bin : curve) total += bin.count;
    CHECK(total == 1000);
    CHECK(curve[0].center == doctest::Approx(0.05));
    CHECK(curve[9].center == doctest::Approx(0.95));
}

TEST_CASE("calibration curve: single bin aggregates everything") {
    const std::vector<CalibrationRecord> records{{0.2, 1.0}, {0.7, 0.0}, {0.9, 0.5}};
    const std::vector<CalibrationBin> curve = calibration_curve(records, 1);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].count == 3);
    CHECK(curve[0].winrate == doctest::Approx(0.5));
}

TEST_CASE("calibration curve: identical responses occupy one bin at 0.5") {
    std::vector<CalibrationRecord> records(50, CalibrationRecord{0.5, 0.5});
    const std::vector<CalibrationBin> curve = calibration_curve(records, 10);
    int occupied = 0;
    for (const CalibrationBin& bin : curve) {
        if (bin.count > 0) {
            ++occupied;
            CHECK(bin.count == 50);
            CHECK(bin.winrate == 0.5);
        } else {
            CHECK(std::isnan(bin.winrate));
        }
    }
    CHECK(occupied == 1);
    CHECK_THROWS_AS(calibration_curve(records, 0), std::invalid_argument);
}

TEST_CASE("calibration on the exact-proxy env is monotone within 3 sigma") {
    EnvSpec env;
    env.exploit_weight = 0.0;
    env.noise_std = 0.0;
    const SoftmaxPolicy sft(env, SamplingControls{1.0, 0, 1.0});
    const std::vector<CalibrationRecord> records = collect_calibration(env, sft, sft, 20000, 9);
    const std::vector<CalibrationBin> curve = calibration_curve(records, 10);

    std::vector<const CalibrationBin*> occupied;
    for (const CalibrationBin& bin : curve) {
        if (bin.count >= 30) occupied.push_back(&bin);
    }
    REQUIRE(occupied.size() >= 4);
    for (std::size_t i = 0; i + 1 < occupied.size(); ++i) {
        const CalibrationBin& lo = *occupied[i];
        const CalibrationBin& hi = *occupied[i + 1];
        const double se = std::sqrt(0.25 / lo.count + 0.25 / hi.count);
        CHECK(hi.winrate >= lo.winrate - 3.0 * se);
    }
    // The extremes are clearly ordered.
    CHECK(occupied.back()->winrate > occupied.front()->winrate + 0.2);
}

TEST_CASE("detect_hacking: monotone curves are clean") {
    RunLog log;
    for (int i = 0; i < 10; ++i) {
        log.rows.push_back(row(i * 10, 1.0 + 0.2 * i, 0.5 + 0.03 * i));
    }
    CHECK_FALSE(detect_hacking(log).has_value());
}

TEST_CASE("detect_hacking: flat curves are clean") {
    RunLog log;
    for (int i = 0; i < 10; ++i) {
        log.rows.push_back(row(i * 10, 2.0, 0.6));
    }
    CHECK_FALSE(detect_hacking(log).has_value());
}

TEST_CASE("detect_hacking: winrate collapse during a proxy climb is flagged at the right step") {
    RunLog log;
    // Proxy strictly rises throughout. Winrate peaks (0.8) at step 50 and
    // falls 3 points per eval afterwards; the cumulative drop reaches 10+
    // points at step 90 (0.68, drop 12).
    const double win[] = {0.50, 0.56, 0.62, 0.70, 0.76, 0.80, 0.77, 0.74, 0.71, 0.68, 0.65};
    for (int i = 0; i < 11; ++i) {
        log.rows.push_back(row(i * 10, 1.0 + 0.3 * i, win[i]));
    }
    const std::optional<int> hit = detect_hacking(log, 3, 10.0);
    REQUIRE(hit.has_value());
    CHECK(*hit == 90);
    // A deeper required drop fires later.
    const std::optional<int> deeper = detect_hacking(log, 3, 15.0);
    REQUIRE(deeper.has_value());
    CHECK(*deeper == 100);
}

TEST_CASE("detect_hacking: needs at least three usable points") {
    RunLog log;
    log.rows.push_back(row(0, 1.0, 0.9));
    log.rows.push_back(row(10, 2.0, 0.2));
    CHECK_FALSE(detect_hacking(log).has_value());
    CHECK(nan_equal(std::nan(""), std::nan("")));
}

TEST_CASE("detect_hacking: proxy plateau breaks the strict-increase window") {
    RunLog log;
    const double win[] = {0.8, 0.7, 0.6, 0.5, 0.4};
    for (int i = 0; i < 5; ++i) {
        log.rows.push_back(row(i * 10, 3.0, win[i]));  // proxy flat
    }
    CHECK_FALSE(detect_hacking(log).has_value());
}
