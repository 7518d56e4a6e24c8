#include "rforge/grpo.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rforge {

namespace {

constexpr std::uint64_t kStepTag = 0x6772706f2121ULL;
constexpr std::uint64_t kRefsTag = 0x6772726566ULL;
constexpr std::uint64_t kBufferTag = 0x677262756666ULL;
constexpr std::uint64_t kWarmupTag = 0x7761726d7570ULL;
constexpr double kDegenerateStd = 1e-8;

struct GroupLoss {
    double loss = 0.0;
    PolicyGrad grad;
};

// Clipped surrogate over every token of the group plus the per-token KL
// penalty (sample estimator at the current policy), averaged over all tokens.
GroupLoss group_loss(const GroupBatch& batch, const SoftmaxPolicy& policy,
                     const SoftmaxPolicy& ref_policy, const PpoConfig& cfg) {
    std::size_t total_tokens = 0;
    for (const Trajectory& traj : batch.responses) total_tokens += traj.tokens.size();
    if (total_tokens == 0) throw std::invalid_argument("group_loss: empty group");
    const double inv_n = 1.0 / static_cast<double>(total_tokens);

    GroupLoss out;
    for (std::size_t i = 0; i < batch.responses.size(); ++i) {
        const Trajectory& traj = batch.responses[i];
        const double a = batch.advantages[i];
        const std::vector<double> cur = policy_log_probs(policy, traj);
        std::vector<double> weights(traj.tokens.size(), 0.0);
        for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
            const double rho = std::exp(cur[t] - traj.log_probs[t]);
            const double unclipped = rho * a;
            const double clipped = std::clamp(rho, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * a;
            out.loss -= inv_n * std::min(unclipped, clipped);
            const bool in_band = rho > 1.0 - cfg.epsilon && rho < 1.0 + cfg.epsilon;
            if (unclipped <= clipped || in_band) {
                weights[t] = -inv_n * rho * a;
            }
            const double kl = cur[t] - ref_policy.log_prob(traj.features[t], traj.tokens[t]);
            out.loss += cfg.eta_kl * inv_n * kl;
            weights[t] += cfg.eta_kl * inv_n;
        }
        accumulate_log_prob_grad(policy, traj, weights, out.grad);
    }
    return out;
}

}  // namespace

std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("group_advantages: need at least 2 rewards");
    }
    double mean = 0.0;
    for (double r : rewards) {
        if (!std::isfinite(r)) throw std::domain_error("group_advantages: non-finite reward");
        mean += r;
    }
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    const double s = std::sqrt(var);
    std::vector<double> adv(rewards.size(), 0.0);
    if (s < kDegenerateStd) {
        return adv;  // degenerate group
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        adv[i] = (rewards[i] - mean) / s;
    }
    return adv;
}

RunLog train_grpo(const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks) {
    env.validate();
    spec.validate();
    cfg.validate();

    const SoftmaxPolicy sft(env, cfg.sampling);
    SoftmaxPolicy policy = sft;
    const SoftmaxPolicy ref = sft;

    RunningStats reward_stats;
    RunningStats ref_stats;
    if (spec.needs_stats() || spec.needs_ref_stats()) {
        for (int i = 0; i < cfg.stats_warmup; ++i) {
            const int prompt = i % env.num_prompts;
            const Trajectory traj = ref.sample(prompt, derive_seed(seed, kWarmupTag, i));
            const double r = proxy_reward(env, response_from(traj));
            reward_stats.update(length_penalty(r, traj.length(), cfg.length_penalty_threshold,
                                               cfg.length_penalty_rate));
            ref_stats.update(r);
        }
    }
    ReplayBuffer<GroupBatch> buffer(cfg.buffer_size);
    Rng buffer_rng(derive_seed(seed, kBufferTag));
    const std::string method = "grpo:" + to_string(spec.method);
    const int interval = cfg.effective_eval_interval();

    RunLog log;
    double last_loss = std::nan("");
    const auto emit = [&](int step) {
        RunLogRow row = evaluate_policy(env, policy, ref, sft, spec, cfg, reward_stats, ref_stats,
                                        step, method, seed);
        row.policy_loss = last_loss;
        row.critic_loss = std::nan("");
        log.rows.push_back(row);
        if (hooks.on_row) hooks.on_row(row);
        if (hooks.on_eval) hooks.on_eval(step, policy);
    };

    emit(0);
    for (int step = 0; step < cfg.steps; ++step) {
        const int prompt = step % env.num_prompts;
        const std::uint64_t step_seed = derive_seed(seed, kStepTag, step);

        GroupBatch batch;
        batch.prompt_id = prompt;
        batch.build_step = step;
        std::vector<double> raw(static_cast<std::size_t>(cfg.group_size));
        for (int i = 0; i < cfg.group_size; ++i) {
            Trajectory traj = policy.sample(prompt, derive_seed(step_seed, 1, i));
            raw[static_cast<std::size_t>(i)] = proxy_reward(env, response_from(traj));
            batch.responses.push_back(std::move(traj));
        }
        std::vector<double> refs;
        if (spec.needs_refs()) {
            std::vector<std::pair<Response, double>> pairs =
                sample_references(env, ref, prompt, spec.m_refs, derive_seed(step_seed, kRefsTag));
            for (auto& [resp, rr] : pairs) {
                refs.push_back(rr);
                ref_stats.update(rr);
            }
        }
        // The whole group enters the running statistics before any member is
        // shaped, so one affine map applies to all N rewards of the group.
        std::vector<double> penalized(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            penalized[i] = length_penalty(raw[i], batch.responses[i].length(),
                                          cfg.length_penalty_threshold, cfg.length_penalty_rate);
            reward_stats.update(penalized[i]);
        }
        const RunningStats& stats = shaping_stats(spec, reward_stats, ref_stats);
        batch.rewards.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            batch.responses[i].proxy_reward = raw[i];
            batch.rewards[i] = apply_shaping(spec, penalized[i], refs, stats);
            batch.responses[i].shaped_reward = batch.rewards[i];
        }
        batch.advantages = group_advantages(batch.rewards);
        batch.degenerate = true;
        for (double a : batch.advantages) {
            if (a != 0.0) batch.degenerate = false;
        }

        std::optional<GroupBatch> replay = buffer.substitute(std::move(batch), buffer_rng);
        if (replay) {
            try {
                const GroupLoss loss = group_loss(*replay, policy, ref, cfg);
                if (!std::isfinite(loss.loss)) {
                    std::ostringstream os;
                    os << "train_grpo: non-finite loss at step " << step;
                    throw TrainingAbort(os.str(), step);
                }
                policy_step(policy, loss.grad, cfg.policy_lr * warmup_lr_scale(step, cfg.steps),
                            cfg.grad_clip);
                last_loss = loss.loss;
            } catch (TrainingAbort& abort) {
                if (abort.step < 0) abort.step = step;
                throw;
            }
        }
        if ((step + 1) % interval == 0) {
            emit(step + 1);
        }
    }
    return log;
}

}  // namespace rforge
