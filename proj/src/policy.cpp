#include "rforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rforge/rng.hpp"

namespace rforge {

void PolicyGrad::add(int feature, int token, double v, int vocab_size) {
    auto it = rows.find(feature);
    if (it == rows.end()) {
        it = rows.emplace(feature, std::vector<double>(vocab_size, 0.0)).first;
    }
    it->second[static_cast<std::size_t>(token)] += v;
}

double PolicyGrad::norm() const {
    double acc = 0.0;
    for (const auto& [f, row] : rows) {
        for (double v : row) acc += v * v;
    }
    return std::sqrt(acc);
}

bool PolicyGrad::finite() const {
    for (const auto& [f, row] : rows) {
        for (double v : row) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

double ValueGrad::norm() const {
    double acc = 0.0;
    for (const auto& [f, v] : entries) acc += v * v;
    return std::sqrt(acc);
}

bool ValueGrad::finite() const {
    for (const auto& [f, v] : entries) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

SoftmaxPolicy::SoftmaxPolicy(const EnvSpec& env, SamplingControls controls)
    : vocab_size_(env.vocab_size),
      max_len_(env.max_len),
      num_prompts_(env.num_prompts),
      controls_(controls) {
    env.validate();
    // (prompt, position, previous token incl. the start marker)
    feature_count_ = num_prompts_ * max_len_ * (vocab_size_ + 1);
    logits_.assign(static_cast<std::size_t>(feature_count_) * vocab_size_, 0.0);
}

int SoftmaxPolicy::state_feature(int prompt_id, int position, int prev_token) const {
    const int prev_slot = prev_token + 1;  // -1 (start) maps to slot 0
    return (prompt_id * max_len_ + position) * (vocab_size_ + 1) + prev_slot;
}

std::vector<double> SoftmaxPolicy::probs(int feature) const {
    std::vector<double> p(static_cast<std::size_t>(vocab_size_));
    const double* row = logits_.data() + static_cast<std::size_t>(feature) * vocab_size_;
    const double m = *std::max_element(row, row + vocab_size_);
    double z = 0.0;
    for (int v = 0; v < vocab_size_; ++v) {
        p[static_cast<std::size_t>(v)] = std::exp(row[v] - m);
        z += p[static_cast<std::size_t>(v)];
    }
    for (double& q : p) q /= z;
    return p;
}

double SoftmaxPolicy::log_prob(int feature, int token) const {
    const double* row = logits_.data() + static_cast<std::size_t>(feature) * vocab_size_;
    const double m = *std::max_element(row, row + vocab_size_);
    double z = 0.0;
    for (int v = 0; v < vocab_size_; ++v) z += std::exp(row[v] - m);
    return row[token] - m - std::log(z);
}

std::vector<double> SoftmaxPolicy::sampling_probs(int feature) const {
    const double* row = logits_.data() + static_cast<std::size_t>(feature) * vocab_size_;
    const double temp = controls_.temperature > 0.0 ? controls_.temperature : 1e-6;
    std::vector<double> p(static_cast<std::size_t>(vocab_size_));
    const double m = *std::max_element(row, row + vocab_size_);
    double z = 0.0;
    for (int v = 0; v < vocab_size_; ++v) {
        p[static_cast<std::size_t>(v)] = std::exp((row[v] - m) / temp);
        z += p[static_cast<std::size_t>(v)];
    }
    for (double& q : p) q /= z;

    const bool use_top_k = controls_.top_k > 0 && controls_.top_k < vocab_size_;
    const bool use_top_p = controls_.top_p < 1.0;
    if (!use_top_k && !use_top_p) return p;

    // Sort token ids by probability (ties broken by id for determinism).
    std::vector<int> order(static_cast<std::size_t>(vocab_size_));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
    });

    int keep = use_top_k ? controls_.top_k : vocab_size_;
    if (use_top_p) {
        double cum = 0.0;
        int nucleus = 0;
        for (int i = 0; i < vocab_size_; ++i) {
            cum += p[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
            ++nucleus;
            if (cum >= controls_.top_p) break;
        }
        keep = std::min(keep, nucleus);
    }
    keep = std::max(keep, 1);

    std::vector<double> filtered(static_cast<std::size_t>(vocab_size_), 0.0);
    double z2 = 0.0;
    for (int i = 0; i < keep; ++i) {
        const int v = order[static_cast<std::size_t>(i)];
        filtered[static_cast<std::size_t>(v)] = p[static_cast<std::size_t>(v)];
        z2 += p[static_cast<std::size_t>(v)];
    }
    for (double& q : filtered) q /= z2;
    return filtered;
}

Trajectory SoftmaxPolicy::sample(int prompt_id, std::uint64_t seed) const {
    if (prompt_id < 0 || prompt_id >= num_prompts_) {
        throw std::domain_error("sample: prompt_id out of range");
    }
    Rng rng(seed);
    Trajectory traj;
    traj.prompt_id = prompt_id;
    int prev = -1;
    for (int pos = 0; pos < max_len_; ++pos) {
        const int feature = state_feature(prompt_id, pos, prev);
        const std::vector<double> p = sampling_probs(feature);
        const double u = rng.uniform();
        double cum = 0.0;
        int action = vocab_size_ - 1;
        for (int v = 0; v < vocab_size_; ++v) {
            cum += p[static_cast<std::size_t>(v)];
            if (u < cum) {
                action = v;
                break;
            }
        }
        traj.tokens.push_back(action);
        traj.features.push_back(feature);
        traj.log_probs.push_back(log_prob(feature, action));
        if (action == kStopToken) break;
        prev = action;
    }
    return traj;
}

double SoftmaxPolicy::state_kl(const SoftmaxPolicy& other, int feature) const {
    const std::vector<double> p = probs(feature);
    double kl = 0.0;
    for (int v = 0; v < vocab_size_; ++v) {
        const double lp = log_prob(feature, v);
        const double lq = other.log_prob(feature, v);
        kl += p[static_cast<std::size_t>(v)] * (lp - lq);
    }
    return std::max(0.0, kl);
}

void SoftmaxPolicy::save(std::ostream& out) const {
    out << "softmax_policy v1\n";
    out << "dims " << num_prompts_ << " " << max_len_ << " " << vocab_size_ << "\n";
    char buf[64];
    for (int f = 0; f < feature_count_; ++f) {
        for (int v = 0; v < vocab_size_; ++v) {
            const double w = logit(f, v);
            if (w != 0.0) {
                std::snprintf(buf, sizeof buf, "%d %d %.17g\n", f, v, w);
                out << buf;
            }
        }
    }
}

SoftmaxPolicy SoftmaxPolicy::load(std::istream& in, const EnvSpec& env) {
    std::string header;
    std::getline(in, header);
    if (header != "softmax_policy v1") {
        throw std::invalid_argument("policy load: bad header '" + header + "'");
    }
    std::string word;
    int prompts = 0, len = 0, vocab = 0;
    in >> word >> prompts >> len >> vocab;
    if (word != "dims" || prompts != env.num_prompts || len != env.max_len ||
        vocab != env.vocab_size) {
        throw std::invalid_argument("policy load: dimension mismatch with environment");
    }
    SoftmaxPolicy policy(env);
    int f = 0, v = 0;
    double w = 0.0;
    while (in >> f >> v >> w) {
        if (f < 0 || f >= policy.feature_count() || v < 0 || v >= vocab) {
            throw std::invalid_argument("policy load: index out of range");
        }
        policy.set_logit(f, v, w);
    }
    return policy;
}

std::vector<double> policy_log_probs(const SoftmaxPolicy& policy, const Trajectory& traj) {
    std::vector<double> out(traj.tokens.size());
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        out[t] = policy.log_prob(traj.features[t], traj.tokens[t]);
    }
    return out;
}

void accumulate_log_prob_grad(const SoftmaxPolicy& policy, const Trajectory& traj,
                              std::span<const double> weights, PolicyGrad& grad) {
    const int vocab = policy.vocab_size();
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const double w = weights[t];
        if (w == 0.0) continue;
        const int feature = traj.features[t];
        const std::vector<double> p = policy.probs(feature);
        for (int v = 0; v < vocab; ++v) {
            const double indicator = (v == traj.tokens[t]) ? 1.0 : 0.0;
            grad.add(feature, v, w * (indicator - p[static_cast<std::size_t>(v)]), vocab);
        }
    }
}

void policy_step(SoftmaxPolicy& policy, const PolicyGrad& grad, double lr, double clip_norm) {
    if (!grad.finite()) {
        throw TrainingAbort("policy_step: non-finite gradient");
    }
    double scale = 1.0;
    if (clip_norm > 0.0) {
        const double n = grad.norm();
        if (n > clip_norm) scale = clip_norm / n;
    }
    for (const auto& [feature, row] : grad.rows) {
        for (int v = 0; v < policy.vocab_size(); ++v) {
            const double g = row[static_cast<std::size_t>(v)];
            if (g != 0.0) {
                policy.set_logit(feature, v, policy.logit(feature, v) - lr * scale * g);
            }
        }
    }
}

void critic_step(ValueFn& critic, const ValueGrad& grad, double lr, double clip_norm) {
    if (!grad.finite()) {
        throw TrainingAbort("critic_step: non-finite gradient");
    }
    double scale = 1.0;
    if (clip_norm > 0.0) {
        const double n = grad.norm();
        if (n > clip_norm) scale = clip_norm / n;
    }
    for (const auto& [feature, g] : grad.entries) {
        critic.set_value(feature, critic.value(feature) - lr * scale * g);
    }
}

}  // namespace rforge
