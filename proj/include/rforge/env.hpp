#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rforge {

class SoftmaxPolicy;
struct Trajectory;

// ---------------------------------------------------------------------------
// Synthetic RLHF environment
// ---------------------------------------------------------------------------
//
// A toy token-sequence task with two reward functions:
//
//   gold  — the true quality signal: a concave function of how many of the
//           prompt's target tokens the response covers, minus a penalty for
//           repeated tokens, floored at 0. Bounded in [0, gold_scale].
//   proxy — gold plus an exploitable term: every occurrence of the designated
//           filler token adds exploit_weight to the proxy without adding
//           anything to gold (repeats actively hurt gold). Plus frozen
//           Gaussian observation noise.
//
// Token roles: id 0 terminates a response, id 1 is the filler token, ids
// 2..vocab_size-1 are content tokens. Each prompt owns a seed-derived subset
// of the content tokens as its target set.
//
// Optimizing gold means covering targets without repetition; optimizing the
// proxy eventually means spamming filler tokens, which drives the proxy past
// hack_threshold while gold collapses to its floor.

inline constexpr int kStopToken = 0;
inline constexpr int kFillerToken = 1;
inline constexpr int kFirstContentToken = 2;

struct EnvSpec {
    int vocab_size = 16;
    int max_len = 24;
    int num_prompts = 8;
    double hack_threshold = 6.0;   // proxy level past which proxy and gold diverge
    double exploit_weight = 0.75;  // proxy bonus per filler token
    double noise_std = 0.1;        // std of the frozen proxy observation noise
    std::uint64_t seed = 42;       // derives target sets and the noise function
    double gold_scale = 4.0;       // gold value of full coverage
    int target_count = 6;          // target tokens per prompt
    double redundancy_rate = 0.25; // gold penalty per repeated token
    double proxy_bias = -6.0;      // constant offset of the proxy scores, like the
                                   // arbitrary zero point of a learned reward head

    void validate() const;  // throws std::invalid_argument

    // The target token set for one prompt, ascending. Deterministic in
    // (seed, prompt_id).
    std::vector<int> targets(int prompt_id) const;
};

struct Response {
    int prompt_id = 0;
    std::vector<int> tokens;  // emitted tokens, including a terminal stop token if any

    int length() const { return static_cast<int>(tokens.size()); }
};

Response response_from(const Trajectory& traj);

// Count of filler tokens; the degenerate pattern the proxy overpays for.
int exploit_feature(const Response& resp);

// True task quality: gold_scale * sqrt(coverage / target_count) minus
// redundancy_rate per repeated token, floored at 0. Independent of the
// exploit term. Throws std::domain_error on invalid token ids.
double gold_reward(const EnvSpec& env, const Response& resp);

// gold + exploit_weight * exploit_feature + frozen noise. The noise is a
// deterministic function of (env.seed, prompt, tokens), so repeated scoring
// of the same response always returns the same value.
double proxy_reward(const EnvSpec& env, const Response& resp);

// M reference rollouts from ref_policy with their proxy rewards.
// Deterministic given seed.
std::vector<std::pair<Response, double>> sample_references(const EnvSpec& env,
                                                           const SoftmaxPolicy& ref_policy,
                                                           int prompt_id, int m,
                                                           std::uint64_t seed);

// Fraction of n paired samples (prompts cycled) where the policy response
// beats the SFT response on gold reward; ties count 0.5.
double gold_winrate(const EnvSpec& env, const SoftmaxPolicy& policy,
                    const SoftmaxPolicy& sft_policy, int n, std::uint64_t seed);

// Human-readable dump of the reward construction for auditing.
std::string describe_env(const EnvSpec& env);

}  // namespace rforge
