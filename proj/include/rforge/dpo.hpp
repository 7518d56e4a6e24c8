#pragma once

#include <cstdint>

#include "rforge/ppo.hpp"

namespace rforge {

struct DpoConfig {
    double beta = 0.1;   // DPO temperature
    double lr = 0.05;
    int steps = 1600;
    int eval_interval = 0;  // 0 -> steps / 10
    int eval_samples = 256;
    int winrate_samples = 1024;
    double grad_clip = 5.0;
    SamplingControls sampling{};

    void validate() const;
    int effective_eval_interval() const;
};

struct DpoLossResult {
    double loss = 0.0;
    PolicyGrad grad;
};

// Strict comparison from the online-DPO ranking step: on a tie the second
// sample is the winner.
inline bool dpo_first_wins(double r1, double r2) { return r1 > r2; }

// -log sigmoid(beta * (winner log-ratio - loser log-ratio)) with sequence
// log-ratios summed over tokens. The caller orders the pair by proxy reward.
DpoLossResult dpo_loss(const Trajectory& winner, const Trajectory& loser,
                       const SoftmaxPolicy& policy, const SoftmaxPolicy& ref_policy, double beta);

// Online DPO: sample two responses per prompt, rank by proxy reward (ties go
// to the second sample), take one gradient step on the DPO loss. RunLog rows
// use policy_loss for the DPO loss; shaped_mean and critic_loss stay empty.
RunLog train_online_dpo(const EnvSpec& env, const DpoConfig& cfg, std::uint64_t seed,
                        const TrainHooks& hooks = {});

}  // namespace rforge
