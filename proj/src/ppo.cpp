#include "rforge/ppo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace rforge {

namespace {

constexpr std::uint64_t kStepTag = 0x737465702121ULL;
constexpr std::uint64_t kSampleTag = 0x73616d706cULL;
constexpr std::uint64_t kRefsTag = 0x72656673ULL;
constexpr std::uint64_t kBufferTag = 0x627566666572ULL;
constexpr std::uint64_t kWarmupTag = 0x7761726d7570ULL;
constexpr std::uint64_t kEvalSampleTag = 0x6576616c53ULL;
constexpr std::uint64_t kEvalRefTag = 0x6576616c52ULL;
constexpr std::uint64_t kEvalWinTag = 0x6576616c57ULL;

std::atomic<bool> g_warned_degenerate_adv{false};

std::vector<double> reference_rewards(const EnvSpec& env, const SoftmaxPolicy& ref_policy,
                                      int prompt_id, int m, std::uint64_t seed) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m));
    for (auto& [resp, r] : sample_references(env, ref_policy, prompt_id, m, seed)) {
        out.push_back(r);
    }
    return out;
}

}  // namespace

void PpoConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("ppo: epsilon in (0,1)");
    if (lambda_gae < 0.0 || lambda_gae > 1.0) throw std::invalid_argument("ppo: lambda in [0,1]");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("ppo: gamma in [0,1]");
    if (eta_kl < 0.0) throw std::invalid_argument("ppo: eta_kl must be >= 0");
    if (buffer_size < 1) throw std::invalid_argument("ppo: buffer_size must be >= 1");
    if (policy_lr < 0.0 || critic_lr < 0.0) throw std::invalid_argument("ppo: negative lr");
    if (steps < 1) throw std::invalid_argument("ppo: steps must be >= 1");
    if (eval_samples < 1 || winrate_samples < 1) {
        throw std::invalid_argument("ppo: eval sample counts must be >= 1");
    }
    if (m_refs < 1) throw std::invalid_argument("ppo: m_refs must be >= 1");
    if (group_size < 2) throw std::invalid_argument("ppo: group_size must be >= 2");
    if (stats_warmup < 2) throw std::invalid_argument("ppo: stats_warmup must be >= 2");
}

int PpoConfig::effective_eval_interval() const {
    if (eval_interval > 0) return eval_interval;
    return std::max(1, steps / 10);
}

double length_penalty(double r, int length, int threshold, double rate) {
    if (length > threshold) {
        return r - rate * static_cast<double>(length - threshold);
    }
    return r;
}

std::vector<double> per_token_rewards(double r_rl, std::span<const double> kl_per_token,
                                      double eta) {
    if (kl_per_token.empty()) {
        throw std::invalid_argument("per_token_rewards: empty trajectory");
    }
    std::vector<double> out(kl_per_token.size());
    for (std::size_t t = 0; t < kl_per_token.size(); ++t) {
        out[t] = -eta * kl_per_token[t];
    }
    out.back() += r_rl;
    return out;
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
    if (rewards.empty()) {
        throw std::invalid_argument("compute_returns: empty rewards");
    }
    std::vector<double> g(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        g[i] = acc;
    }
    return g;
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double gamma, double lambda) {
    if (rewards.empty() || values.size() != rewards.size() + 1) {
        throw std::invalid_argument("compute_gae: values must have length T+1");
    }
    std::vector<double> adv(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        const double delta = rewards[i] + gamma * values[i + 1] - values[i];
        acc = delta + gamma * lambda * acc;
        adv[i] = acc;
    }
    return adv;
}

const RunningStats& shaping_stats(const ShapingSpec& spec, const RunningStats& reward_stats,
                                  const RunningStats& ref_stats) {
    return spec.needs_ref_stats() ? ref_stats : reward_stats;
}

double reward_reshape(double r, std::span<const double> refs, int length,
                      const ShapingSpec& spec, const RunningStats& stats,
                      int lp_threshold, double lp_rate) {
    const double penalized = length_penalty(r, length, lp_threshold, lp_rate);
    return apply_shaping(spec, penalized, refs, stats);
}

SurrogateResult clipped_surrogate(std::span<const double> ratios,
                                  std::span<const double> advantages, double epsilon) {
    if (ratios.empty() || ratios.size() != advantages.size()) {
        throw std::invalid_argument("clipped_surrogate: size mismatch");
    }
    SurrogateResult res;
    res.log_prob_weights.assign(ratios.size(), 0.0);
    const double inv_t = 1.0 / static_cast<double>(ratios.size());
    for (std::size_t t = 0; t < ratios.size(); ++t) {
        const double rho = ratios[t];
        const double a = advantages[t];
        const double unclipped = rho * a;
        const double clipped = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon) * a;
        res.loss -= inv_t * std::min(unclipped, clipped);
        // d(ratio)/d(log pi) = ratio; zero once the pessimistic branch is the
        // clipped one and the ratio sits outside the clip band.
        const bool in_band = rho > 1.0 - epsilon && rho < 1.0 + epsilon;
        if (unclipped <= clipped || in_band) {
            res.log_prob_weights[t] = -inv_t * rho * a;
        }
    }
    return res;
}

LossResult calculate_loss(const PpoBatch& batch, const SoftmaxPolicy& policy,
                          const ValueFn& critic, const PpoConfig& cfg) {
    const Trajectory& traj = batch.traj;
    const std::size_t T = traj.tokens.size();
    if (T == 0) throw std::invalid_argument("calculate_loss: empty batch");

    const std::vector<double> cur_log_probs = policy_log_probs(policy, traj);
    std::vector<double> ratios(T);
    for (std::size_t t = 0; t < T; ++t) {
        ratios[t] = std::exp(cur_log_probs[t] - traj.log_probs[t]);
    }

    // Per-batch advantage normalization (mean 0, std 1 over the batch tokens).
    LossResult res;
    std::vector<double> adv(traj.advantages.begin(), traj.advantages.end());
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(T);
    const double std = std::sqrt(var);
    if (std >= 1e-8) {
        for (double& a : adv) a = (a - mean) / std;
        res.advantages_normalized = true;
    } else if (!g_warned_degenerate_adv.exchange(true)) {
        std::cerr << "[rforge] warning: degenerate advantage std (<1e-8); normalization "
                     "skipped (suppressing further warnings)\n";
    }

    SurrogateResult surr = clipped_surrogate(ratios, adv, cfg.epsilon);
    res.policy_loss = surr.loss;
    accumulate_log_prob_grad(policy, traj, surr.log_prob_weights, res.policy_grad);

    // Critic regression to G_t with the clipped-value trick around the batch
    // values V_t.
    const double delta = cfg.value_clip_delta;
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        const int feature = traj.features[t];
        const double v = critic.value(feature);
        const double v_old = traj.values[t];
        const double g = traj.returns[t];
        const double e_raw = v - g;
        const double v_clip = std::clamp(v, v_old - delta, v_old + delta);
        const double e_clip = v_clip - g;
        double dv;
        if (e_raw * e_raw >= e_clip * e_clip) {
            res.critic_loss += inv_t * e_raw * e_raw;
            dv = 2.0 * inv_t * e_raw;
        } else {
            res.critic_loss += inv_t * e_clip * e_clip;
            const bool inside = v > v_old - delta && v < v_old + delta;
            dv = inside ? 2.0 * inv_t * e_clip : 0.0;
        }
        res.critic_grad.entries[feature] += dv;
    }
    return res;
}

PpoBatch build_ppo_batch(int prompt_id, const SoftmaxPolicy& policy,
                         const SoftmaxPolicy& ref_policy, const ValueFn& critic,
                         const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                         std::uint64_t seed, RunningStats& reward_stats,
                         RunningStats& ref_stats) {
    PpoBatch batch;
    batch.traj = policy.sample(prompt_id, derive_seed(seed, kSampleTag));
    Trajectory& traj = batch.traj;

    const double r = proxy_reward(env, response_from(traj));
    std::vector<double> refs;
    if (spec.needs_refs()) {
        refs = reference_rewards(env, ref_policy, prompt_id, spec.m_refs,
                                 derive_seed(seed, kRefsTag));
        for (double ref : refs) ref_stats.update(ref);
    }

    const double penalized = length_penalty(r, traj.length(), cfg.length_penalty_threshold,
                                            cfg.length_penalty_rate);
    reward_stats.update(penalized);

    traj.proxy_reward = r;
    traj.shaped_reward =
        reward_reshape(r, refs, traj.length(), spec, shaping_stats(spec, reward_stats, ref_stats),
                       cfg.length_penalty_threshold, cfg.length_penalty_rate);

    const std::size_t T = traj.tokens.size();
    std::vector<double> kl(T);
    for (std::size_t t = 0; t < T; ++t) {
        kl[t] = traj.log_probs[t] - ref_policy.log_prob(traj.features[t], traj.tokens[t]);
        batch.kl_sum += kl[t];
    }
    traj.rewards = per_token_rewards(traj.shaped_reward, kl, cfg.eta_kl);

    traj.values.resize(T);
    std::vector<double> values_ext(T + 1, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        traj.values[t] = critic.value(traj.features[t]);
        values_ext[t] = traj.values[t];
    }
    traj.advantages = compute_gae(traj.rewards, values_ext, cfg.gamma, cfg.lambda_gae);
    traj.returns = compute_returns(traj.rewards, cfg.gamma);
    return batch;
}

double warmup_lr_scale(int step, int total_steps) {
    const int warmup = std::max(1, (total_steps + 9) / 10);
    if (step + 1 >= warmup) return 1.0;
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
}

RunLogRow evaluate_policy(const EnvSpec& env, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& ref_policy, const SoftmaxPolicy& sft_policy,
                          const ShapingSpec& spec, const PpoConfig& cfg,
                          const RunningStats& reward_stats, const RunningStats& ref_stats,
                          int step, const std::string& method, std::uint64_t run_seed,
                          bool compute_shaped) {
    RunLogRow row;
    row.step = step;
    row.method = method;
    row.seed = run_seed;

    // Evaluation streams are fixed per run (not per eval point): common random
    // numbers across checkpoints, so metric differences track policy changes
    // rather than resampling noise.
    const std::uint64_t sample_base = derive_seed(run_seed, kEvalSampleTag);
    const std::uint64_t refs_base = derive_seed(run_seed, kEvalRefTag);
    const std::uint64_t win_seed = derive_seed(run_seed, kEvalWinTag);

    std::vector<std::vector<double>> refs_by_prompt;
    if (compute_shaped && spec.needs_refs()) {
        refs_by_prompt.resize(static_cast<std::size_t>(env.num_prompts));
        for (int p = 0; p < env.num_prompts; ++p) {
            refs_by_prompt[static_cast<std::size_t>(p)] =
                reference_rewards(env, ref_policy, p, spec.m_refs, derive_seed(refs_base, p));
        }
    }

    double proxy_acc = 0.0;
    double shaped_acc = 0.0;
    double kl_acc = 0.0;
    double len_acc = 0.0;
    std::size_t token_count = 0;
    const RunningStats& stats = shaping_stats(spec, reward_stats, ref_stats);
    static const std::vector<double> kNoRefs;
    for (int i = 0; i < cfg.eval_samples; ++i) {
        const int prompt = i % env.num_prompts;
        const Trajectory traj = policy.sample(prompt, derive_seed(sample_base, 0, i));
        const double r = proxy_reward(env, response_from(traj));
        proxy_acc += r;
        len_acc += traj.length();
        if (compute_shaped) {
            const std::vector<double>& refs =
                spec.needs_refs() ? refs_by_prompt[static_cast<std::size_t>(prompt)] : kNoRefs;
            shaped_acc += reward_reshape(r, refs, traj.length(), spec, stats,
                                         cfg.length_penalty_threshold, cfg.length_penalty_rate);
        }
        for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
            kl_acc += traj.log_probs[t] - ref_policy.log_prob(traj.features[t], traj.tokens[t]);
        }
        token_count += traj.tokens.size();
    }
    const double n = static_cast<double>(cfg.eval_samples);
    row.proxy_mean = proxy_acc / n;
    row.shaped_mean = compute_shaped ? shaped_acc / n : std::nan("");
    row.kl_mean = token_count > 0 ? kl_acc / static_cast<double>(token_count) : 0.0;
    row.mean_len = len_acc / n;
    row.gold_winrate = gold_winrate(env, policy, sft_policy, cfg.winrate_samples, win_seed);
    return row;
}

RunLog train_ppo(const EnvSpec& env, const ShapingSpec& spec, const PpoConfig& cfg,
                 std::uint64_t seed, const TrainHooks& hooks) {
    env.validate();
    spec.validate();
    cfg.validate();

    const SoftmaxPolicy sft(env, cfg.sampling);
    SoftmaxPolicy policy = sft;
    const SoftmaxPolicy ref = sft;
    ValueFn critic(policy.feature_count());

    RunningStats reward_stats;
    RunningStats ref_stats;
    if (spec.needs_stats() || spec.needs_ref_stats()) {
        // Seed the running statistics from reference rollouts so the first
        // shaping call already sees a usable spread.
        for (int i = 0; i < cfg.stats_warmup; ++i) {
            const int prompt = i % env.num_prompts;
            const Trajectory traj = ref.sample(prompt, derive_seed(seed, kWarmupTag, i));
            const double r = proxy_reward(env, response_from(traj));
            reward_stats.update(length_penalty(r, traj.length(), cfg.length_penalty_threshold,
                                               cfg.length_penalty_rate));
            ref_stats.update(r);
        }
    }

    ReplayBuffer<PpoBatch> buffer(cfg.buffer_size);
    Rng buffer_rng(derive_seed(seed, kBufferTag));
    const std::string method = to_string(spec.method);
    const int interval = cfg.effective_eval_interval();

    RunLog log;
    double last_policy_loss = std::nan("");
    double last_critic_loss = std::nan("");
    const auto emit = [&](int step) {
        RunLogRow row = evaluate_policy(env, policy, ref, sft, spec, cfg, reward_stats, ref_stats,
                                        step, method, seed);
        row.policy_loss = last_policy_loss;
        row.critic_loss = last_critic_loss;
        log.rows.push_back(row);
        if (hooks.on_row) hooks.on_row(row);
        if (hooks.on_eval) hooks.on_eval(step, policy);
    };

    emit(0);
    for (int step = 0; step < cfg.steps; ++step) {
        const int prompt = step % env.num_prompts;
        PpoBatch batch = build_ppo_batch(prompt, policy, ref, critic, env, spec, cfg,
                                         derive_seed(seed, kStepTag, step), reward_stats,
                                         ref_stats);
        batch.build_step = step;
        std::optional<PpoBatch> replay = buffer.substitute(std::move(batch), buffer_rng);
        if (replay) {
            try {
                const LossResult loss = calculate_loss(*replay, policy, critic, cfg);
                if (!std::isfinite(loss.policy_loss) || !std::isfinite(loss.critic_loss)) {
                    std::ostringstream os;
                    os << "train_ppo: non-finite loss at step " << step << " (policy="
                       << loss.policy_loss << ", critic=" << loss.critic_loss << ")";
                    throw TrainingAbort(os.str(), step);
                }
                const double scale = warmup_lr_scale(step, cfg.steps);
                policy_step(policy, loss.policy_grad, cfg.policy_lr * scale, cfg.grad_clip);
                critic_step(critic, loss.critic_grad, cfg.critic_lr * scale, cfg.grad_clip);
                last_policy_loss = loss.policy_loss;
                last_critic_loss = loss.critic_loss;
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
