#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rforge/ppo.hpp"

namespace rforge {

// One prompt's group of sampled responses with shaped rewards and
// group-normalized advantages (one advantage per response, constant across
// its token positions).
struct GroupBatch {
    int prompt_id = 0;
    std::vector<Trajectory> responses;
    std::vector<double> rewards;     // shaped rewards, one per response
    std::vector<double> advantages;  // (r_i - mean) / population std
    bool degenerate = false;         // reward spread below epsilon; advantages zeroed
    int build_step = -1;
};

// (r_i - mu) / s with population standard deviation. Requires N >= 2. A
// spread below 1e-8 yields all-zero advantages (degenerate group).
std::vector<double> group_advantages(std::span<const double> rewards);

// Critic-free GRPO run: per prompt, sample `cfg.group_size` responses, shape
// their rewards, normalize within the group, and apply the clipped surrogate
// with a per-token KL penalty. Emits the same RunLog schema as PPO with
// critic_loss empty and the method label prefixed "grpo:".
RunLog train_grpo(const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks = {});

}  // namespace rforge
