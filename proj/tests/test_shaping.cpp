#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rforge/rng.hpp"
#include "rforge/shaping.hpp"

using namespace rforge;

namespace {

// Two-pass oracle for mean/variance (population).
std::pair<double, double> two_pass_moments(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, var};
}

// Inverse standard-normal CDF by bisection on erf.
double normal_quantile_oracle(double p) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Least-squares fit oracle: degree-5 polynomial to the logistic on [-6, 6],
// 1001 uniform samples, solved via normal equations.
std::array<double, 6> poly_fit_oracle() {
    constexpr int n = 1001;
    constexpr int d = 6;
    double ata[d][d] = {};
    double atb[d] = {};
    for (int i = 0; i < n; ++i) {
        const double x = -6.0 + 12.0 * i / (n - 1);
        const double y = 1.0 / (1.0 + std::exp(-x));
        double pow_cache[2 * d - 1];
        pow_cache[0] = 1.0;
        for (int k = 1; k < 2 * d - 1; ++k) pow_cache[k] = pow_cache[k - 1] * x;
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) ata[r][c] += pow_cache[r + c];
            atb[r] += pow_cache[r] * y;
        }
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < d; ++col) {
        int pivot = col;
        for (int r = col + 1; r < d; ++r) {
            if (std::abs(ata[r][col]) > std::abs(ata[pivot][col])) pivot = r;
        }
        std::swap(ata[col], ata[pivot]);
        std::swap(atb[col], atb[pivot]);
        for (int r = col + 1; r < d; ++r) {
            const double f = ata[r][col] / ata[col][col];
            for (int c = col; c < d; ++c) ata[r][c] -= f * ata[col][c];
            atb[r] -= f * atb[col];
        }
    }
    std::array<double, 6> coeffs{};
    for (int r = d - 1; r >= 0; --r) {
        double acc = atb[r];
        for (int c = r + 1; c < d; ++c) acc -= ata[r][c] * coeffs[static_cast<std::size_t>(c)];
        coeffs[static_cast<std::size_t>(r)] = acc / ata[r][r];
    }
    return coeffs;
}

double poly_oracle_eval(const std::array<double, 6>& c, double x) {
    double v = c[5];
    for (int i = 4; i >= 0; --i) v = v * x + c[static_cast<std::size_t>(i)];
    return v;
}

RunningStats stats_of(std::initializer_list<double> xs) {
    RunningStats s;
    for (double x : xs) s.update(x);
    return s;
}

}  // namespace

TEST_CASE("running stats single observation") {
    RunningStats s;
    s.update(5.0);
    CHECK(s.count == 1);
    CHECK(s.mean == 5.0);
    CHECK(s.m2 == 0.0);
    CHECK(s.min == 5.0);
    CHECK(s.max == 5.0);
}

TEST_CASE("running stats two-value sample") {
    const RunningStats s = stats_of({1.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.variance() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("running stats constant sample") {
    const RunningStats s = stats_of({-2.0, -2.0, -2.0});
    CHECK(s.mean == -2.0);
    CHECK(s.variance() == 0.0);
    CHECK(s.min == -2.0);
    CHECK(s.max == -2.0);
}

TEST_CASE("running stats rejects non-finite input") {
    RunningStats s;
    CHECK_THROWS_AS(s.update(std::nan("")), std::domain_error);
    CHECK_THROWS_AS(s.update(INFINITY), std::domain_error);
    CHECK(s.count == 0);
}

TEST_CASE("running stats matches two-pass oracle on random streams") {
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(40));
        std::vector<double> xs(static_cast<std::size_t>(n));
        RunningStats s;
        const double scale = std::pow(10.0, rng.uniform_range(-2.0, 4.0));
        const double offset = scale * rng.uniform_range(-30.0, 30.0);
        for (double& x : xs) {
            x = offset + scale * rng.normal();
            s.update(x);
        }
        const auto [mean, var] = two_pass_moments(xs);
        CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12).scale(std::abs(mean) + scale));
        CHECK(s.variance() == doctest::Approx(var).epsilon(1e-10).scale(std::abs(var)));
        CHECK(s.min <= s.mean);
        CHECK(s.mean <= s.max);
    }
}

TEST_CASE("running stats stays accurate at large offsets") {
    // Values near 1e6 with unit spread: a naive sum-of-squares accumulator
    // loses most digits here, the single-pass moment update does not.
    Rng rng(31);
    RunningStats s;
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) {
        const double x = 1e6 + rng.normal();
        xs.push_back(x);
        s.update(x);
    }
    const auto [mean, var] = two_pass_moments(xs);
    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.variance() == doctest::Approx(var).epsilon(1e-6));
    CHECK(s.variance() > 0.9);
    CHECK(s.variance() < 1.1);
}

TEST_CASE("update_stats value form") {
    const RunningStats s = update_stats(update_stats(RunningStats{}, 1.0), 3.0);
    CHECK(s.count == 2);
    CHECK(s.mean == doctest::Approx(2.0));
}

TEST_CASE("par identities") {
    const std::vector<double> one{1.3};
    CHECK(shape_par(1.3, one) == 0.5);

    const std::vector<double> ref1{1.0};
    CHECK(shape_par(2.0, ref1) == doctest::Approx(0.7310585786).epsilon(1e-9));

    const std::vector<double> sym{-1.0, 1.0};
    CHECK(shape_par(0.0, sym) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(shape_par(1.0, std::span<const double>{}), std::domain_error);
}

TEST_CASE("par equals mean of single-reference preferences") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const double r = rng.uniform_range(-20.0, 20.0);
        const int m = 1 + static_cast<int>(rng.uniform_int(10));
        std::vector<double> refs(static_cast<std::size_t>(m));
        for (double& ref : refs) ref = rng.uniform_range(-20.0, 20.0);
        double mean = 0.0;
        for (double ref : refs) {
            const std::vector<double> single{ref};
            mean += shape_par(r, single);
        }
        mean /= static_cast<double>(m);
        CHECK(shape_par(r, refs) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("par stays in (0,1) and is monotone") {
    const std::vector<double> refs{0.0, 2.0, -3.0};
    double prev = 0.0;
    for (double r = -1e6; r <= 1e6; r += 4e4) {
        const double v = shape_par(r, refs);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        CHECK(std::isfinite(v));
        if (r > -1e6) CHECK(v >= prev);
        prev = v;
    }
    // Strict increase away from saturation.
    CHECK(shape_par(1.0, refs) > shape_par(0.5, refs));
}

TEST_CASE("par with single reference equals hidden preference exactly") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const double r = rng.uniform_range(-30.0, 30.0);
        const double ref = rng.uniform_range(-30.0, 30.0);
        const std::vector<double> refs{ref};
        CHECK(shape_par(r, refs) == hidden_preference(r, ref));
    }
}

TEST_CASE("hidden preference basics") {
    CHECK(hidden_preference(1.7, 1.7) == 0.5);
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = rng.uniform_range(-15.0, 15.0);
        const double b = rng.uniform_range(-15.0, 15.0);
        CHECK(hidden_preference(a, b) + hidden_preference(b, a) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("lsc at the quantile point gives -ln 2") {
    const RunningStats ref = stats_of({1.0, 2.0, 3.0, 4.0});
    const double z = kNormalQuantile85;
    const double r = ref.mean + z * ref.stddev();
    CHECK(shape_lsc(r, ref, z) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("frozen 0.85 normal quantile matches the bisection oracle") {
    CHECK(kNormalQuantile85 == doctest::Approx(normal_quantile_oracle(0.85)).epsilon(1e-12));
    CHECK(kNormalQuantile85 == doctest::Approx(1.03643).epsilon(1e-4));
}

TEST_CASE("lsc is strictly negative, monotone, and saturates towards 0") {
    const RunningStats ref = stats_of({0.0, 1.0, 2.0});
    double prev = -INFINITY;
    for (double r = -50.0; r <= 700.0; r += 10.0) {
        const double v = shape_lsc(r, ref, kNormalQuantile85);
        CHECK(v < 0.0);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(shape_lsc(600.0, ref, kNormalQuantile85) > -1e-12);

    RunningStats single;
    single.update(1.0);
    CHECK_THROWS_AS(shape_lsc(0.0, single, kNormalQuantile85), std::domain_error);
}

TEST_CASE("meanstd examples") {
    const RunningStats s = stats_of({0.0, 2.0});  // mean 1, population std 1
    CHECK(shape_meanstd(1.0, s) == 0.0);
    CHECK(shape_meanstd(2.0, s) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(shape_meanstd(3.0, s) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("meanstd rejects degenerate statistics") {
    const RunningStats s = stats_of({1.0, 1.0, 1.0});
    CHECK_THROWS_WITH_AS(shape_meanstd(1.0, s), doctest::Contains("degenerate"),
                         std::domain_error);
    RunningStats one;
    one.update(3.0);
    CHECK_THROWS_AS(shape_meanstd(3.0, one), std::domain_error);
}

TEST_CASE("clip clamps to one standard deviation around the mean") {
    const RunningStats s = stats_of({0.0, 2.0});  // mean 1, std 1
    CHECK(shape_clip(1.4, s) == 1.4);
    CHECK(shape_clip(1.0 + 2.0, s) == doctest::Approx(2.0));
    CHECK(shape_clip(1.0 - 3.0, s) == doctest::Approx(0.0));
}

TEST_CASE("minmax examples") {
    const RunningStats s = stats_of({2.0, 6.0, 4.0});
    CHECK(shape_minmax(2.0, s) == 0.0);
    CHECK(shape_minmax(6.0, s) == 1.0);
    CHECK(shape_minmax(4.0, s) == doctest::Approx(0.5).epsilon(1e-12));
    const RunningStats flat = stats_of({3.0, 3.0});
    CHECK_THROWS_AS(shape_minmax(3.0, flat), std::domain_error);
}

TEST_CASE("meanstd and minmax are affine (two-point linearity)") {
    const RunningStats s = stats_of({-1.0, 0.5, 2.0, 7.0});
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const double r1 = rng.uniform_range(-10.0, 10.0);
        const double r2 = rng.uniform_range(-10.0, 10.0);
        const double mid = 0.5 * (r1 + r2);
        CHECK(shape_meanstd(mid, s) ==
              doctest::Approx(0.5 * (shape_meanstd(r1, s) + shape_meanstd(r2, s)))
                  .epsilon(1e-12));
        CHECK(shape_minmax(mid, s) ==
              doctest::Approx(0.5 * (shape_minmax(r1, s) + shape_minmax(r2, s))).epsilon(1e-12));
    }
}

TEST_CASE("ceiling examples") {
    CHECK(shape_ceiling(7.0, 5.0) == 5.0);
    CHECK(shape_ceiling(3.0, 5.0) == 3.0);
    CHECK(shape_ceiling(5.0, 5.0) == 5.0);
}

TEST_CASE("sigmoid_k identities") {
    CHECK(shape_sigmoid_k(0.0, 1.0) == 0.5);
    CHECK(shape_sigmoid_k(0.0, 7.5) == 0.5);
    CHECK(shape_sigmoid_k(1.0, 3.0) == doctest::Approx(0.952574).epsilon(1e-6));
    CHECK(shape_sigmoid_k(1.0, 3.0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-12));
    CHECK_THROWS_AS(shape_sigmoid_k(1.0, 0.0), std::domain_error);
}

TEST_CASE("sigmoid_k antisymmetry and saturation") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = rng.uniform_range(-40.0, 40.0);
        const double k = rng.uniform_range(0.1, 5.0);
        CHECK(shape_sigmoid_k(x, k) + shape_sigmoid_k(-x, k) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    for (double x : {700.0, 1e5, 1e6}) {
        const double hi = shape_sigmoid_k(x, 1.0);
        const double lo = shape_sigmoid_k(-x, 1.0);
        CHECK(std::isfinite(hi));
        CHECK(hi > 0.0);
        CHECK(hi < 1.0);
        CHECK(lo > 0.0);
        CHECK(lo < 1.0);
    }
}

TEST_CASE("sgfc is a shifted steep sigmoid") {
    CHECK(shape_sgfc(3.0) == 0.5);
    CHECK(shape_sgfc(0.0) == doctest::Approx(1.0 / (1.0 + std::exp(9.0))).epsilon(1e-12));
    CHECK(shape_sgfc(0.0) == doctest::Approx(1.234e-4).epsilon(1e-3));
    CHECK(shape_sgfc(4.0) == doctest::Approx(0.952574).epsilon(1e-6));
    CHECK(shape_sgfc(4.0) == shape_sigmoid_k(1.0, 3.0));
}

TEST_CASE("poly_fitted approximates the logistic on the fit interval") {
    CHECK(shape_poly_fitted(0.0) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(shape_poly_fitted(6.0) - 0.99753) <= 0.05);
    CHECK(shape_poly_fitted(10.0) == shape_poly_fitted(6.0));
    CHECK(shape_poly_fitted(-10.0) == shape_poly_fitted(-6.0));
    for (double x = -8.0; x <= 8.0; x += 0.25) {
        const double v = shape_poly_fitted(x);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("poly_fitted matches an independent least-squares fit") {
    const std::array<double, 6> oracle = poly_fit_oracle();
    for (double x = -6.0; x <= 6.0; x += 0.1) {
        const double expected = std::clamp(poly_oracle_eval(oracle, x), 0.0, 1.0);
        CHECK(shape_poly_fitted(x) == doctest::Approx(expected).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("tanh shaping") {
    const std::vector<double> refs{0.7};
    CHECK(shape_tanh(0.7, refs, true) == 0.0);
    CHECK(shape_tanh(0.0, {}, false) == 0.0);
    const std::vector<double> zero{0.0};
    CHECK(shape_tanh(1.0, zero, true) == doctest::Approx(0.761594).epsilon(1e-6));
    CHECK_THROWS_AS(shape_tanh(1.0, std::span<const double>{}, true), std::domain_error);
}

TEST_CASE("shaping methods are monotone non-decreasing in r") {
    const RunningStats s = stats_of({-1.0, 0.0, 2.0, 5.0});
    const std::vector<double> refs{0.0, 1.0};
    const ShapingSpec ceiling{.method = ShapingMethod::kCeiling, .ceiling = 5.0};
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const double a = rng.uniform_range(-20.0, 20.0);
        const double b = a + rng.uniform_range(0.0, 5.0);
        CHECK(shape_lsc(b, s, kNormalQuantile85) >= shape_lsc(a, s, kNormalQuantile85));
        CHECK(shape_meanstd(b, s) >= shape_meanstd(a, s));
        CHECK(shape_minmax(b, s) >= shape_minmax(a, s));
        CHECK(shape_clip(b, s) >= shape_clip(a, s));
        CHECK(apply_shaping(ceiling, b, refs, s) >= apply_shaping(ceiling, a, refs, s));
        CHECK(shape_par(b, refs) >= shape_par(a, refs));
    }
}

TEST_CASE("all shaping outputs stay finite up to |r| = 1e6") {
    const RunningStats s = stats_of({-3.0, 1.0, 4.0});
    const std::vector<double> refs{0.0, 2.0};
    for (double r : {-1e6, -1234.5, 0.0, 987.0, 1e6}) {
        CHECK(std::isfinite(shape_par(r, refs)));
        CHECK(std::isfinite(shape_lsc(r, s, kNormalQuantile85)));
        CHECK(std::isfinite(shape_meanstd(r, s)));
        CHECK(std::isfinite(shape_clip(r, s)));
        CHECK(std::isfinite(shape_minmax(r, s)));
        CHECK(std::isfinite(shape_ceiling(r, 5.0)));
        CHECK(std::isfinite(shape_sigmoid_k(r, 3.0)));
        CHECK(std::isfinite(shape_sgfc(r)));
        CHECK(std::isfinite(shape_poly_fitted(r)));
        CHECK(std::isfinite(shape_tanh(r, refs, true)));
    }
}

TEST_CASE("shaping spec validation and method names") {
    ShapingSpec spec;
    spec.method = ShapingMethod::kPar;
    spec.m_refs = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.m_refs = 1;
    CHECK_NOTHROW(spec.validate());
    spec.k = -1.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

    for (const char* name :
         {"par", "sigmoid_uncentered", "tanh_centered", "tanh_uncentered", "sigmoid_k", "sgfc",
          "poly_fitted", "lsc", "meanstd", "clip", "minmax", "ceiling", "identity"}) {
        CHECK(to_string(parse_shaping_method(name)) == name);
    }
    CHECK_THROWS_AS(parse_shaping_method("warp"), std::invalid_argument);
}

TEST_CASE("apply_shaping dispatch covers the centered family") {
    const std::vector<double> refs{1.0, 3.0};
    const RunningStats s = stats_of({0.0, 2.0});
    ShapingSpec spec;

    spec.method = ShapingMethod::kIdentity;
    CHECK(apply_shaping(spec, 2.5, refs, s) == 2.5);

    spec.method = ShapingMethod::kPar;
    CHECK(apply_shaping(spec, 2.0, refs, s) ==
          doctest::Approx(0.5 * (stable_sigmoid(1.0) + stable_sigmoid(-1.0))).epsilon(1e-12));

    spec.method = ShapingMethod::kSigmoidK;
    spec.k = 2.0;
    CHECK(apply_shaping(spec, 2.0, refs, s) ==
          doctest::Approx(0.5 * (shape_sigmoid_k(1.0, 2.0) + shape_sigmoid_k(-1.0, 2.0)))
              .epsilon(1e-12));

    spec.method = ShapingMethod::kSgfc;
    CHECK(apply_shaping(spec, 2.0, refs, s) ==
          doctest::Approx(0.5 * (shape_sgfc(1.0) + shape_sgfc(-1.0))).epsilon(1e-12));

    spec.method = ShapingMethod::kPolyFitted;
    CHECK(apply_shaping(spec, 2.0, refs, s) ==
          doctest::Approx(0.5 * (shape_poly_fitted(1.0) + shape_poly_fitted(-1.0)))
              .epsilon(1e-12));

    spec.method = ShapingMethod::kSigmoidUncentered;
    spec.k = 1.0;
    CHECK(apply_shaping(spec, 2.0, refs, s) == shape_sigmoid_k(2.0, 1.0));

    spec.method = ShapingMethod::kTanhUncentered;
    CHECK(apply_shaping(spec, 2.0, refs, s) == std::tanh(2.0));

    spec.method = ShapingMethod::kMeanstd;
    CHECK(apply_shaping(spec, 2.0, refs, s) == shape_meanstd(2.0, s));
}

TEST_CASE("log_sigmoid stable branches") {
    CHECK(log_sigmoid(0.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK(log_sigmoid(-745.0) == doctest::Approx(-745.0 + std::log1p(std::exp(-745.0))));
    CHECK(std::isfinite(log_sigmoid(1e6)));
    CHECK(std::isfinite(log_sigmoid(-1e6)));
    CHECK(log_sigmoid(1e6) < 0.0);
    CHECK(log_sigmoid(-1e6) == doctest::Approx(-1e6));
}
