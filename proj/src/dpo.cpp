#include "rforge/dpo.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rforge/shaping.hpp"

namespace rforge {

namespace {

constexpr std::uint64_t kStepTag = 0x64706f2121ULL;

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

void DpoConfig::validate() const {
    if (beta <= 0.0) throw std::invalid_argument("dpo: beta must be > 0");
    if (lr < 0.0) throw std::invalid_argument("dpo: lr must be >= 0");
    if (steps < 1) throw std::invalid_argument("dpo: steps must be >= 1");
    if (eval_samples < 1 || winrate_samples < 1) {
        throw std::invalid_argument("dpo: eval sample counts must be >= 1");
    }
}

int DpoConfig::effective_eval_interval() const {
    if (eval_interval > 0) return eval_interval;
    return std::max(1, steps / 10);
}

DpoLossResult dpo_loss(const Trajectory& winner, const Trajectory& loser,
                       const SoftmaxPolicy& policy, const SoftmaxPolicy& ref_policy, double beta) {
    const std::vector<double> w_cur = policy_log_probs(policy, winner);
    const std::vector<double> l_cur = policy_log_probs(policy, loser);
    const std::vector<double> w_ref = policy_log_probs(ref_policy, winner);
    const std::vector<double> l_ref = policy_log_probs(ref_policy, loser);

    double delta_w = 0.0;
    double delta_l = 0.0;
    for (std::size_t t = 0; t < w_cur.size(); ++t) delta_w += w_cur[t] - w_ref[t];
    for (std::size_t t = 0; t < l_cur.size(); ++t) delta_l += l_cur[t] - l_ref[t];

    const double h = beta * (delta_w - delta_l);
    DpoLossResult res;
    res.loss = softplus(-h);

    // d(-log sigmoid(h))/dh = -sigmoid(-h)
    const double dh = -stable_sigmoid(-h);
    const std::vector<double> w_weights(winner.tokens.size(), beta * dh);
    const std::vector<double> l_weights(loser.tokens.size(), -beta * dh);
    accumulate_log_prob_grad(policy, winner, w_weights, res.grad);
    accumulate_log_prob_grad(policy, loser, l_weights, res.grad);
    return res;
}

RunLog train_online_dpo(const EnvSpec& env, const DpoConfig& cfg, std::uint64_t seed,
                        const TrainHooks& hooks) {
    env.validate();
    cfg.validate();

    const SoftmaxPolicy sft(env, cfg.sampling);
    SoftmaxPolicy policy = sft;
    const SoftmaxPolicy ref = sft;

    // Evaluation reuses the shared row builder with shaping disabled.
    ShapingSpec identity;
    PpoConfig eval_cfg;
    eval_cfg.eval_samples = cfg.eval_samples;
    eval_cfg.winrate_samples = cfg.winrate_samples;
    eval_cfg.sampling = cfg.sampling;
    RunningStats unused_stats;

    const int interval = cfg.effective_eval_interval();
    RunLog log;
    double last_loss = std::nan("");
    const auto emit = [&](int step) {
        RunLogRow row = evaluate_policy(env, policy, ref, sft, identity, eval_cfg, unused_stats,
                                        unused_stats, step, "dpo", seed, /*compute_shaped=*/false);
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
        Trajectory y1 = policy.sample(prompt, derive_seed(step_seed, 1));
        Trajectory y2 = policy.sample(prompt, derive_seed(step_seed, 2));
        const double r1 = proxy_reward(env, response_from(y1));
        const double r2 = proxy_reward(env, response_from(y2));
        const bool first_wins = dpo_first_wins(r1, r2);
        const Trajectory& winner = first_wins ? y1 : y2;
        const Trajectory& loser = first_wins ? y2 : y1;

        try {
            DpoLossResult loss = dpo_loss(winner, loser, policy, ref, cfg.beta);
            if (!std::isfinite(loss.loss)) {
                std::ostringstream os;
                os << "train_online_dpo: non-finite loss at step " << step;
                throw TrainingAbort(os.str(), step);
            }
            policy_step(policy, loss.grad, cfg.lr * warmup_lr_scale(step, cfg.steps),
                        cfg.grad_clip);
            last_loss = loss.loss;
        } catch (TrainingAbort& abort) {
            if (abort.step < 0) abort.step = step;
            throw;
        }

        if ((step + 1) % interval == 0) {
            emit(step + 1);
        }
    }
    return log;
}

}  // namespace rforge
