#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "rforge/env.hpp"
#include "rforge/trajectory.hpp"

namespace rforge {

class Rng;

// Sampling controls (temperature / top-k / top-p affect sampling only; the
// log-probs stored in trajectories always come from the unfiltered
// temperature-1 softmax so importance ratios stay well-defined).
struct SamplingControls {
    double temperature = 0.9;
    int top_k = 50;      // <= 0 disables
    double top_p = 0.9;  // >= 1 disables
};

// Sparse gradient over the policy's logit table: feature index -> dense row
// over the vocabulary. Ordered map so accumulation order is deterministic.
struct PolicyGrad {
    std::map<int, std::vector<double>> rows;

    void add(int feature, int token, double v, int vocab_size);
    double norm() const;
    bool finite() const;
};

// Gradient over the critic's value table: feature index -> d(loss)/d(value).
struct ValueGrad {
    std::map<int, double> entries;

    double norm() const;
    bool finite() const;
};

// Contextual tabular softmax token policy. States are (prompt, position,
// previous token) triples packed injectively into a fixed feature space, the
// smallest context under which repetition strategies are learnable.
class SoftmaxPolicy {
public:
    SoftmaxPolicy() = default;
    SoftmaxPolicy(const EnvSpec& env, SamplingControls controls = {});

    int vocab_size() const { return vocab_size_; }
    int max_len() const { return max_len_; }
    int num_prompts() const { return num_prompts_; }
    int feature_count() const { return feature_count_; }
    const SamplingControls& controls() const { return controls_; }
    SamplingControls& controls() { return controls_; }

    // Injective packing of (prompt_id, position, previous token) into
    // [0, feature_count). prev_token == -1 denotes the sequence start.
    int state_feature(int prompt_id, int position, int prev_token) const;

    double logit(int feature, int token) const { return logits_[index(feature, token)]; }
    void set_logit(int feature, int token, double v) { logits_[index(feature, token)] = v; }
    std::span<const double> logits() const { return logits_; }

    // Temperature-1 softmax over the unfiltered logit row.
    std::vector<double> probs(int feature) const;
    double log_prob(int feature, int token) const;

    // Autoregressive rollout for one prompt: stops at the stop token or at
    // max_len tokens. Deterministic given seed. Fills tokens, features and
    // unfiltered log-probs of the trajectory.
    Trajectory sample(int prompt_id, std::uint64_t seed) const;

    // Full KL(this || other) at one state; >= 0, and 0 when rows are equal.
    double state_kl(const SoftmaxPolicy& other, int feature) const;

    // Flat text serialization (feature token logit), zero rows omitted.
    void save(std::ostream& out) const;
    static SoftmaxPolicy load(std::istream& in, const EnvSpec& env);

private:
    int index(int feature, int token) const { return feature * vocab_size_ + token; }
    std::vector<double> sampling_probs(int feature) const;

    int vocab_size_ = 0;
    int max_len_ = 0;
    int num_prompts_ = 0;
    int feature_count_ = 0;
    SamplingControls controls_{};
    std::vector<double> logits_;
};

// Tabular critic over the same feature space as the policy.
class ValueFn {
public:
    ValueFn() = default;
    explicit ValueFn(int feature_count) : values_(feature_count, 0.0) {}

    double value(int feature) const { return values_[static_cast<std::size_t>(feature)]; }
    void set_value(int feature, double v) { values_[static_cast<std::size_t>(feature)] = v; }
    int feature_count() const { return static_cast<int>(values_.size()); }
    std::span<const double> values() const { return values_; }

private:
    std::vector<double> values_;
};

// log pi(a_t | s_t) for every step of the trajectory under `policy`.
std::vector<double> policy_log_probs(const SoftmaxPolicy& policy, const Trajectory& traj);

// Accumulates d/d(logits) of sum_t weights[t] * log pi(a_t | s_t): the
// analytic softmax gradient (indicator - probability) at each visited state.
void accumulate_log_prob_grad(const SoftmaxPolicy& policy, const Trajectory& traj,
                              std::span<const double> weights, PolicyGrad& grad);

// Gradient-descent step with global gradient-norm clipping (no clipping when
// clip_norm <= 0). Throws TrainingAbort on a non-finite gradient.
void policy_step(SoftmaxPolicy& policy, const PolicyGrad& grad, double lr, double clip_norm);
void critic_step(ValueFn& critic, const ValueGrad& grad, double lr, double clip_norm);

// Raised when a run must stop (non-finite loss or gradient). `step` records
// the training step at which the run died, -1 when unknown.
struct TrainingAbort : std::runtime_error {
    explicit TrainingAbort(const std::string& msg, int at_step = -1)
        : std::runtime_error(msg), step(at_step) {}
    int step = -1;
};

}  // namespace rforge
