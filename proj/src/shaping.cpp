#include "rforge/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rforge {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::domain_error(std::string(what) + ": non-finite value");
    }
}

// Degree-5 least-squares fit of the logistic sigmoid on [-6, 6] over 1001
// uniform samples (ascending powers). The fit target is odd around (0, 1/2),
// so the even coefficients vanish.
constexpr double kPolyCoeffs[6] = {
    0.5,
    0.2170327540460132,
    0.0,
    -0.00781116198452141,
    0.0,
    0.00011790645594018789,
};

}  // namespace

double stable_sigmoid(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    // Keep the result strictly inside (0, 1) at saturation.
    constexpr double kLo = std::numeric_limits<double>::denorm_min();
    const double kHi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::clamp(s, kLo, kHi);
}

double log_sigmoid(double x) {
    double v;
    if (x >= 0.0) {
        v = -std::log1p(std::exp(-x));
    } else {
        v = x - std::log1p(std::exp(x));
    }
    // log sigmoid saturates at 0 from below; never report an exact 0.
    return std::min(v, -std::numeric_limits<double>::denorm_min());
}

void RunningStats::update(double r) {
    require_finite(r, "RunningStats::update");
    ++count;
    if (count == 1) {
        mean = r;
        m2 = 0.0;
        min = r;
        max = r;
        return;
    }
    const double delta = r - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (r - mean);
    min = std::min(min, r);
    max = std::max(max, r);
}

double RunningStats::variance() const {
    if (count == 0) {
        throw std::domain_error("RunningStats::variance: empty statistics");
    }
    return std::max(0.0, m2 / static_cast<double>(count));
}

double RunningStats::stddev() const { return std::sqrt(variance()); }

RunningStats update_stats(RunningStats stats, double r) {
    stats.update(r);
    return stats;
}

bool ShapingSpec::needs_refs() const {
    switch (method) {
        case ShapingMethod::kPar:
        case ShapingMethod::kTanhCentered:
        case ShapingMethod::kSigmoidK:
        case ShapingMethod::kSgfc:
        case ShapingMethod::kPolyFitted:
        case ShapingMethod::kLsc:
            return true;
        default:
            return false;
    }
}

bool ShapingSpec::needs_stats() const {
    switch (method) {
        case ShapingMethod::kMeanstd:
        case ShapingMethod::kClip:
        case ShapingMethod::kMinmax:
            return true;
        default:
            return false;
    }
}

bool ShapingSpec::needs_ref_stats() const { return method == ShapingMethod::kLsc; }

void ShapingSpec::validate() const {
    if (needs_refs() && m_refs < 1) {
        throw std::invalid_argument("ShapingSpec: method '" + to_string(method) +
                                    "' requires m_refs >= 1");
    }
    if (k <= 0.0 || !std::isfinite(k)) {
        throw std::invalid_argument("ShapingSpec: k must be > 0");
    }
    if (!std::isfinite(ceiling) || !std::isfinite(shift) || !std::isfinite(z_percentile)) {
        throw std::invalid_argument("ShapingSpec: non-finite parameter");
    }
}

ShapingMethod parse_shaping_method(const std::string& name) {
    if (name == "par") return ShapingMethod::kPar;
    if (name == "sigmoid_uncentered") return ShapingMethod::kSigmoidUncentered;
    if (name == "tanh_centered") return ShapingMethod::kTanhCentered;
    if (name == "tanh_uncentered") return ShapingMethod::kTanhUncentered;
    if (name == "sigmoid_k") return ShapingMethod::kSigmoidK;
    if (name == "sgfc") return ShapingMethod::kSgfc;
    if (name == "poly_fitted") return ShapingMethod::kPolyFitted;
    if (name == "lsc") return ShapingMethod::kLsc;
    if (name == "meanstd") return ShapingMethod::kMeanstd;
    if (name == "clip") return ShapingMethod::kClip;
    if (name == "minmax") return ShapingMethod::kMinmax;
    if (name == "ceiling") return ShapingMethod::kCeiling;
    if (name == "identity") return ShapingMethod::kIdentity;
    throw std::invalid_argument("unknown shaping method '" + name + "'");
}

std::string to_string(ShapingMethod method) {
    switch (method) {
        case ShapingMethod::kPar: return "par";
        case ShapingMethod::kSigmoidUncentered: return "sigmoid_uncentered";
        case ShapingMethod::kTanhCentered: return "tanh_centered";
        case ShapingMethod::kTanhUncentered: return "tanh_uncentered";
        case ShapingMethod::kSigmoidK: return "sigmoid_k";
        case ShapingMethod::kSgfc: return "sgfc";
        case ShapingMethod::kPolyFitted: return "poly_fitted";
        case ShapingMethod::kLsc: return "lsc";
        case ShapingMethod::kMeanstd: return "meanstd";
        case ShapingMethod::kClip: return "clip";
        case ShapingMethod::kMinmax: return "minmax";
        case ShapingMethod::kCeiling: return "ceiling";
        case ShapingMethod::kIdentity: return "identity";
    }
    throw std::invalid_argument("invalid ShapingMethod");
}

double shape_par(double r, std::span<const double> refs) {
    if (refs.empty()) {
        throw std::domain_error("shape_par: empty reference rewards");
    }
    require_finite(r, "shape_par");
    double acc = 0.0;
    for (double ref : refs) {
        require_finite(ref, "shape_par reference");
        acc += stable_sigmoid(r - ref);
    }
    return acc / static_cast<double>(refs.size());
}

double shape_lsc(double r, const RunningStats& ref_stats, double z) {
    if (ref_stats.count < 2) {
        throw std::domain_error("shape_lsc: need at least 2 reference rewards");
    }
    require_finite(r, "shape_lsc");
    const double threshold = ref_stats.mean + z * ref_stats.stddev();
    return log_sigmoid(r - threshold);
}

double shape_meanstd(double r, const RunningStats& stats) {
    if (stats.count < 2) {
        throw std::domain_error("shape_meanstd: need at least 2 observations");
    }
    const double s = stats.stddev();
    if (s <= 0.0) {
        throw std::domain_error("shape_meanstd: degenerate statistics (zero std)");
    }
    require_finite(r, "shape_meanstd");
    return (r - stats.mean) / s;
}

double shape_clip(double r, const RunningStats& stats) {
    if (stats.count < 2) {
        throw std::domain_error("shape_clip: need at least 2 observations");
    }
    require_finite(r, "shape_clip");
    const double s = stats.stddev();
    return std::clamp(r, stats.mean - s, stats.mean + s);
}

double shape_minmax(double r, const RunningStats& stats) {
    if (stats.count < 2) {
        throw std::domain_error("shape_minmax: need at least 2 observations");
    }
    if (!(stats.max > stats.min)) {
        throw std::domain_error("shape_minmax: degenerate statistics (max == min)");
    }
    require_finite(r, "shape_minmax");
    return (r - stats.min) / (stats.max - stats.min);
}

double shape_ceiling(double r, double c) {
    require_finite(r, "shape_ceiling");
    return std::min(r, c);
}

double shape_sigmoid_k(double x, double k) {
    if (k <= 0.0) {
        throw std::domain_error("shape_sigmoid_k: k must be > 0");
    }
    require_finite(x, "shape_sigmoid_k");
    return stable_sigmoid(k * x);
}

double shape_sgfc(double x) { return shape_sigmoid_k(x - 3.0, 3.0); }

double shape_poly_fitted(double x) {
    require_finite(x, "shape_poly_fitted");
    const double t = std::clamp(x, -6.0, 6.0);
    // Horner evaluation, ascending powers.
    double v = kPolyCoeffs[5];
    for (int i = 4; i >= 0; --i) {
        v = v * t + kPolyCoeffs[i];
    }
    return std::clamp(v, 0.0, 1.0);
}

double shape_tanh(double r, std::span<const double> refs, bool centered) {
    require_finite(r, "shape_tanh");
    if (!centered) {
        return std::tanh(r);
    }
    if (refs.empty()) {
        throw std::domain_error("shape_tanh: centered variant needs reference rewards");
    }
    double acc = 0.0;
    for (double ref : refs) {
        require_finite(ref, "shape_tanh reference");
        acc += std::tanh(r - ref);
    }
    return acc / static_cast<double>(refs.size());
}

double hidden_preference(double r, double r_other) {
    require_finite(r, "hidden_preference");
    require_finite(r_other, "hidden_preference");
    return stable_sigmoid(r - r_other);
}

double apply_shaping(const ShapingSpec& spec, double r, std::span<const double> refs,
                     const RunningStats& stats) {
    switch (spec.method) {
        case ShapingMethod::kPar:
            return shape_par(r, refs);
        case ShapingMethod::kSigmoidUncentered:
            return shape_sigmoid_k(r, spec.k);
        case ShapingMethod::kTanhCentered:
            return shape_tanh(r, refs, true);
        case ShapingMethod::kTanhUncentered:
            return shape_tanh(r, refs, false);
        case ShapingMethod::kSigmoidK:
        case ShapingMethod::kSgfc:
        case ShapingMethod::kPolyFitted: {
            if (refs.empty()) {
                throw std::domain_error("apply_shaping: centered method needs reference rewards");
            }
            double acc = 0.0;
            for (double ref : refs) {
                const double x = r - ref;
                if (spec.method == ShapingMethod::kSigmoidK) {
                    acc += shape_sigmoid_k(x, spec.k);
                } else if (spec.method == ShapingMethod::kSgfc) {
                    acc += shape_sgfc(x);
                } else {
                    acc += shape_poly_fitted(x);
                }
            }
            return acc / static_cast<double>(refs.size());
        }
        case ShapingMethod::kLsc:
            return shape_lsc(r, stats, spec.z_percentile);
        case ShapingMethod::kMeanstd:
            return shape_meanstd(r, stats);
        case ShapingMethod::kClip:
            return shape_clip(r, stats);
        case ShapingMethod::kMinmax:
            return shape_minmax(r, stats);
        case ShapingMethod::kCeiling:
            return shape_ceiling(r, spec.ceiling);
        case ShapingMethod::kIdentity:
            require_finite(r, "apply_shaping");
            return r;
    }
    throw std::invalid_argument("apply_shaping: invalid method");
}

}  // namespace rforge
