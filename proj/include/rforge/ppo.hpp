#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rforge/env.hpp"
#include "rforge/policy.hpp"
#include "rforge/rng.hpp"
#include "rforge/runlog.hpp"
#include "rforge/shaping.hpp"
#include "rforge/trajectory.hpp"

namespace rforge {

struct PpoConfig {
    double epsilon = 0.2;        // surrogate clip range
    double lambda_gae = 0.95;
    double gamma = 1.0;
    double eta_kl = 0.005;       // per-token KL penalty coefficient
    int buffer_size = 4;
    double policy_lr = 0.08;
    double critic_lr = 0.15;
    double value_clip_delta = 0.2;
    int length_penalty_threshold = 300;
    double length_penalty_rate = 0.01;
    int m_refs = 10;             // reference rewards per response (spec-level m_refs wins)
    int steps = 1600;
    int eval_interval = 0;       // 0 -> steps / 10
    int eval_samples = 256;      // rollouts per eval for reward/KL/length means
    int winrate_samples = 1024;  // paired samples per winrate estimate
    int stats_warmup = 8;        // reference rollouts seeding the running stats
    int group_size = 5;          // GRPO only
    double grad_clip = 5.0;      // global gradient-norm clip for policy and critic
    SamplingControls sampling{};

    void validate() const;  // throws std::invalid_argument
    int effective_eval_interval() const;
};

// The tuple stored in the replay buffer: the trajectory carries old log-probs,
// returns, advantages, values, states and actions.
struct PpoBatch {
    Trajectory traj;
    double kl_sum = 0.0;
    int build_step = -1;
};

// Fixed-capacity pool; once full, each insertion evicts (and returns) a
// uniformly random resident.
template <typename Batch>
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity) : capacity_(capacity) {}

    std::optional<Batch> substitute(Batch batch, Rng& rng) {
        if (static_cast<int>(pool_.size()) < capacity_) {
            pool_.push_back(std::move(batch));
            return std::nullopt;
        }
        const std::size_t idx = static_cast<std::size_t>(rng.uniform_int(pool_.size()));
        Batch evicted = std::move(pool_[idx]);
        pool_.erase(pool_.begin() + static_cast<std::ptrdiff_t>(idx));
        pool_.push_back(std::move(batch));
        return evicted;
    }

    int size() const { return static_cast<int>(pool_.size()); }
    int capacity() const { return capacity_; }

private:
    std::vector<Batch> pool_;
    int capacity_ = 0;
};

// r - rate * (length - threshold) when length exceeds the threshold.
double length_penalty(double r, int length, int threshold, double rate);

// Final token gets r_RL - eta*kl, earlier tokens -eta*kl.
std::vector<double> per_token_rewards(double r_rl, std::span<const double> kl_per_token,
                                      double eta);

// Discounted returns G_t by backward recursion.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

// GAE by backward recursion over TD errors. `values` has length T+1, with the
// terminal value as its last entry (0 for episodic ends).
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double gamma, double lambda);

// Length penalty first, then dispatch to the shaping method. `stats` must be
// the reference-reward statistics for LSC and the training-reward statistics
// for meanstd/clip/minmax.
double reward_reshape(double r, std::span<const double> refs, int length,
                      const ShapingSpec& spec, const RunningStats& stats,
                      int lp_threshold, double lp_rate);

// Picks which running statistics a shaping method reads.
const RunningStats& shaping_stats(const ShapingSpec& spec, const RunningStats& reward_stats,
                                  const RunningStats& ref_stats);

// Clipped-surrogate policy loss over given ratios/advantages (no
// normalization applied here) plus d(loss)/d(log pi) per token.
struct SurrogateResult {
    double loss = 0.0;
    std::vector<double> log_prob_weights;
};
SurrogateResult clipped_surrogate(std::span<const double> ratios,
                                  std::span<const double> advantages, double epsilon);

struct LossResult {
    double policy_loss = 0.0;
    double critic_loss = 0.0;
    PolicyGrad policy_grad;
    ValueGrad critic_grad;
    bool advantages_normalized = false;
};

// Policy surrogate on per-batch-normalized advantages plus the clipped-value
// critic regression. Degenerate advantage spread (std < 1e-8) skips
// normalization with a warning.
LossResult calculate_loss(const PpoBatch& batch, const SoftmaxPolicy& policy,
                          const ValueFn& critic, const PpoConfig& cfg);

// Rollout + reference sampling + shaping + per-token rewards + GAE/returns,
// packaged for the buffer. Updates reward_stats (penalized proxy, before
// shaping) and ref_stats (raw reference rewards) as a side effect.
PpoBatch build_ppo_batch(int prompt_id, const SoftmaxPolicy& policy,
                         const SoftmaxPolicy& ref_policy, const ValueFn& critic,
                         const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                         std::uint64_t seed, RunningStats& reward_stats,
                         RunningStats& ref_stats);

struct TrainHooks {
    // Called after each RunLog row is appended (partial-output persistence).
    std::function<void(const RunLogRow&)> on_row;
    // Called at every evaluation point with the current policy.
    std::function<void(int step, const SoftmaxPolicy& policy)> on_eval;
};

// Full PPO run. Deterministic given (env, spec, cfg, seed). Throws
// TrainingAbort on non-finite losses; rows emitted so far are recoverable
// through hooks.on_row.
RunLog train_ppo(const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                 std::uint64_t seed, const TrainHooks& hooks = {});

// Shared evaluation row used by all trainers.
RunLogRow evaluate_policy(const EnvSpec& env, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& ref_policy, const SoftmaxPolicy& sft_policy,
                          const ShapingSpec& spec, const PpoConfig& cfg,
                          const RunningStats& reward_stats, const RunningStats& ref_stats,
                          int step, const std::string& method, std::uint64_t run_seed,
                          bool compute_shaped = true);

// Linear warmup factor over the first tenth of total steps.
double warmup_lr_scale(int step, int total_steps);

}  // namespace rforge
