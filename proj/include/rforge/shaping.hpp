#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace rforge {

// ---------------------------------------------------------------------------
// Numerically stable logistic helpers
// ---------------------------------------------------------------------------

// Logistic sigmoid, evaluated in the branch that never overflows. The result
// is clamped into the open interval (0, 1) so downstream log/ratio code never
// sees an exact 0 or 1 even for saturating arguments.
double stable_sigmoid(double x);

// log(sigmoid(x)) without overflow: -log1p(exp(-x)) for x >= 0,
// x - log1p(exp(x)) for x < 0. Always strictly negative.
double log_sigmoid(double x);

// Inverse standard-normal CDF at 0.85, frozen from a root-finding pass on
// Phi(z) = 0.5*(1+erf(z/sqrt(2))).
inline constexpr double kNormalQuantile85 = 1.0364333894937894;

// ---------------------------------------------------------------------------
// Running statistics
// ---------------------------------------------------------------------------

// Streaming count/mean/variance/min/max over a reward stream. Single-pass
// Welford moment update; variance is the population variance (divide by n).
// Single-writer: the owning training loop mutates it, everyone else reads.
struct RunningStats {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;  // sum of squared deviations from the running mean
    double min = 0.0;
    double max = 0.0;

    // Throws std::domain_error on non-finite input.
    void update(double r);

    double variance() const;  // population; requires count >= 1
    double stddev() const;
};

// Value-returning form of RunningStats::update.
RunningStats update_stats(RunningStats stats, double r);

// ---------------------------------------------------------------------------
// Shaping methods
// ---------------------------------------------------------------------------

enum class ShapingMethod {
    kPar,
    kSigmoidUncentered,
    kTanhCentered,
    kTanhUncentered,
    kSigmoidK,
    kSgfc,
    kPolyFitted,
    kLsc,
    kMeanstd,
    kClip,
    kMinmax,
    kCeiling,
    kIdentity,
};

// Which shaping function maps the proxy reward to the RL reward, plus its
// parameters. Constructed from config; method names are the lowercase
// strings returned by to_string().
struct ShapingSpec {
    ShapingMethod method = ShapingMethod::kIdentity;
    int m_refs = 10;        // reference rewards per shaping call
    double k = 1.0;         // sigmoid steepness
    double ceiling = 5.0;   // cap for kCeiling
    double shift = 3.0;     // horizontal shift for kSgfc
    double z_percentile = kNormalQuantile85;  // LSC normal quantile

    // True for methods that consume reference rewards (centered family + LSC).
    bool needs_refs() const;
    // True for methods that read running statistics of the training rewards.
    bool needs_stats() const;
    // True when the method reads statistics of reference rewards (LSC).
    bool needs_ref_stats() const;

    // Throws std::invalid_argument when parameters violate the method's
    // requirements (m_refs >= 1 where refs are needed, k > 0).
    void validate() const;
};

ShapingMethod parse_shaping_method(const std::string& name);
std::string to_string(ShapingMethod method);

// mean_m sigmoid(r - refs[m]); the reward model's hidden preference of the
// scored response over the reference responses. Strictly inside (0, 1).
// Throws std::domain_error when refs is empty or contains a non-finite value.
double shape_par(double r, std::span<const double> refs);

// log sigmoid(r - (ref_mean + z*ref_std)). Requires ref_stats.count >= 2.
double shape_lsc(double r, const RunningStats& ref_stats, double z);

// (r - mean)/std. Requires count >= 2 and a non-degenerate std.
double shape_meanstd(double r, const RunningStats& stats);

// clip(r, mean - std, mean + std). Requires count >= 2.
double shape_clip(double r, const RunningStats& stats);

// (r - min)/(max - min). Requires count >= 2 and max > min.
double shape_minmax(double r, const RunningStats& stats);

// min(r, c).
double shape_ceiling(double r, double c);

// 1/(1+exp(-k*x)); requires k > 0. Saturates smoothly for |k*x| beyond the
// exp() range instead of overflowing.
double shape_sigmoid_k(double x, double k);

// sigmoid_3(x - 3): slow growth near zero, fast convergence after the shift.
double shape_sgfc(double x);

// Fifth-order polynomial approximation of the logistic sigmoid. Input is
// clamped to the fit interval [-6, 6], output to [0, 1].
double shape_poly_fitted(double x);

// centered: mean_m tanh(r - refs[m]); uncentered: tanh(r).
double shape_tanh(double r, std::span<const double> refs, bool centered);

// sigmoid(r - r_other): Bradley-Terry win probability implied by the reward
// model. shape_par with a single reference equals this exactly.
double hidden_preference(double r, double r_other);

// Dispatch on spec.method. `refs` feeds the centered family, `stats` feeds
// meanstd/clip/minmax (training-reward statistics) or LSC (reference-reward
// statistics); unused arguments are ignored.
double apply_shaping(const ShapingSpec& spec, double r, std::span<const double> refs,
                     const RunningStats& stats);

}  // namespace rforge
