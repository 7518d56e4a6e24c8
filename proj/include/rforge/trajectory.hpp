#pragma once

#include <vector>

namespace rforge {

// One prompt/response rollout plus the per-token quantities the trainers
// attach to it. All per-token vectors share the same length T once filled.
struct Trajectory {
    int prompt_id = 0;
    std::vector<int> tokens;        // actions a_t (token ids), incl. terminal stop
    std::vector<int> features;      // state feature index per position
    std::vector<double> log_probs;  // log pi(a_t | s_t) under the sampling policy
    std::vector<double> rewards;    // per-token rewards r_t
    std::vector<double> values;     // V(s_t), length T (terminal value is 0)
    std::vector<double> advantages; // GAE estimates A_t
    std::vector<double> returns;    // discounted returns G_t
    double proxy_reward = 0.0;      // r, before shaping
    double shaped_reward = 0.0;     // r_RL

    int length() const { return static_cast<int>(tokens.size()); }
};

}  // namespace rforge
