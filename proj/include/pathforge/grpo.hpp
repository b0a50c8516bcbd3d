#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pathforge/cot.hpp"
#include "pathforge/error.hpp"
#include "pathforge/rng.hpp"

namespace pathforge::grpo {

using Token = std::int32_t;

/// A sampled response with the per-token log-probabilities reported by the
/// generating policy.
struct Rollout {
    std::vector<Token> tokens;
    std::vector<double> logprobs;
    std::string text;
};

/**
 * What the optimizer needs from a policy. Parameters are a flat vector; the
 * policy never stores the parameters it is evaluated at, so the same object
 * can be queried at theta and theta_old.
 *
 *   generate(prompt, theta, rng)       sample one response
 *   logprobs(prompt, tokens, theta)    per-token log pi_theta(o_t | q, o_<t)
 *   accumulate_logprob_gradient(prompt, tokens, theta, weights, grad)
 *                                      grad += sum_t weights[t] * d log pi(o_t) / d theta
 *   render(tokens)                     response text seen by the reward
 */
template <typename P>
concept Policy = requires(const P& p, const typename P::Prompt& q, std::span<const Token> tokens,
                          std::span<const double> theta, std::span<const double> weights, std::span<double> grad,
                          Rng& rng) {
    typename P::Prompt;
    { p.num_parameters() } -> std::convertible_to<std::size_t>;
    { p.generate(q, theta, rng) } -> std::same_as<Rollout>;
    { p.logprobs(q, tokens, theta) } -> std::same_as<std::vector<double>>;
    p.accumulate_logprob_gradient(q, tokens, theta, weights, grad);
    { p.render(tokens) } -> std::convertible_to<std::string>;
};

// ---------------------------------------------------------------------------
// Rewards

/// 1 iff the text is exactly "<think>T</think><answer>A</answer>" with
/// non-empty bodies and no repeated or stray tags.
inline int format_reward(std::string_view text) { return parse_tagged(text) ? 1 : 0; }

/// 1 iff the text parses and its answer body equals `truth` exactly.
inline int classification_reward(std::string_view text, std::string_view truth) {
    auto parsed = parse_tagged(text);
    return parsed && parsed->answer == truth ? 1 : 0;
}

struct RewardWeights {
    double format = 1.0;
    double classification = 1.0;
};

inline double reward(std::string_view text, std::string_view truth, const RewardWeights& w = {}) {
    return w.format * format_reward(text) + w.classification * classification_reward(text, truth);
}

// ---------------------------------------------------------------------------
// Advantages

struct Advantages {
    std::vector<double> values;
    bool effective = false;
    double mean = 0.0;
    double stddev = 0.0; // population
};

/// (R_i - mean) / popstd, or all zeros (ineffective) when popstd < floor.
inline Advantages group_advantages(std::span<const double> rewards, double floor = 1e-6) {
    if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "a group needs at least two rewards");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;

    Advantages out;
    out.mean = mean;
    out.stddev = std::sqrt(var);
    out.values.assign(rewards.size(), 0.0);
    if (out.stddev >= floor) {
        out.effective = true;
        for (std::size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - mean) / out.stddev;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Objective

template <typename PromptT>
struct RolloutGroup {
    PromptT prompt;
    std::string truth;
    std::vector<Rollout> responses;
    std::vector<double> rewards;
    std::vector<double> advantages; // one per response, shared by its tokens
    bool effective = false;
};

struct ObjectiveValue {
    double value = 0.0;
    std::vector<double> gradient;
};

/**
 * Clipped group-relative surrogate without a KL term:
 *
 *   J = mean_groups (1/G) sum_i (1/|o_i|) sum_t min(r_t A_i, clip(r_t, 1-eps, 1+eps) A_i)
 *   r_t = exp(log pi_theta(o_t) - log pi_old(o_t))
 *
 * The gradient is exact. A token contributes r_t A_i grad log pi_theta(o_t)
 * when the unclipped branch is selected, i.e. when A_i > 0 and r_t <= 1+eps
 * or A_i < 0 and r_t > 1-eps; clipped tokens contribute nothing. At a
 * breakpoint the derivative from below (in r_t) is used.
 */
template <Policy P>
ObjectiveValue grpo_objective(const P& policy, std::span<const double> theta, std::span<const double> theta_old,
                              std::span<const RolloutGroup<typename P::Prompt>> groups, double clip_eps) {
    ObjectiveValue out;
    out.gradient.assign(policy.num_parameters(), 0.0);
    if (groups.empty()) return out;
    const double group_weight = 1.0 / static_cast<double>(groups.size());

    std::vector<double> weights;
    for (const auto& group : groups) {
        const double response_weight = group_weight / static_cast<double>(group.responses.size());
        for (std::size_t i = 0; i < group.responses.size(); ++i) {
            const auto& tokens = group.responses[i].tokens;
            if (tokens.empty()) continue;
            const double adv = group.advantages[i];
            const auto lp_new = policy.logprobs(group.prompt, tokens, theta);
            const auto lp_old = policy.logprobs(group.prompt, tokens, theta_old);
            const double token_weight = response_weight / static_cast<double>(tokens.size());

            weights.assign(tokens.size(), 0.0);
            bool any_active = false;
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (lp_old[t] == -std::numeric_limits<double>::infinity())
                    throw Error(ErrorCode::DegenerateRatio, "token has zero probability under the old policy");
                const double ratio = std::exp(lp_new[t] - lp_old[t]);
                const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
                out.value += token_weight * std::min(ratio * adv, clipped * adv);
                const bool unclipped = (adv > 0.0 && ratio <= 1.0 + clip_eps) || (adv < 0.0 && ratio > 1.0 - clip_eps);
                if (unclipped) {
                    weights[t] = token_weight * adv * ratio;
                    any_active = true;
                }
            }
            if (any_active) policy.accumulate_logprob_gradient(group.prompt, tokens, theta, weights, out.gradient);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training step

struct GrpoConfig {
    std::size_t group_size = 8;
    double clip_eps = 0.2;
    double learning_rate = 1e-6;
    std::size_t steps = 500;
    double std_floor = 1e-6;
    std::size_t updates_per_step = 1;
    RewardWeights reward_weights;
};

template <typename PromptT>
struct PromptItem {
    std::string id;
    PromptT prompt;
    std::string truth;
};

struct GroupReport {
    std::size_t group_id = 0;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    bool effective = false;
};

struct StepReport {
    std::size_t step = 0;
    std::vector<GroupReport> groups;
    double objective = 0.0; // surrogate at the updated parameters
    double mean_reward = 0.0;
};

/**
 * One GRPO iteration: snapshot theta_old, sample G responses per prompt
 * (prompt k uses the stream derive_seed(step_seed, k)), score them, normalize
 * within each group and take `updates_per_step` gradient-ascent steps on the
 * surrogate.
 */
template <Policy P>
StepReport rl_step(const P& policy, std::vector<double>& theta,
                   std::span<const PromptItem<typename P::Prompt>> batch, const GrpoConfig& config,
                   std::uint64_t step_seed, std::size_t step_index) {
    if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "rl_step needs a non-empty batch");
    if (config.group_size < 2) throw Error(ErrorCode::GroupTooSmall, "group size must be at least 2");

    const std::vector<double> theta_old = theta;
    std::vector<RolloutGroup<typename P::Prompt>> groups;
    groups.reserve(batch.size());
    StepReport report;
    report.step = step_index;

    double reward_sum = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        Rng rng(derive_seed(step_seed, static_cast<std::uint64_t>(k)));
        RolloutGroup<typename P::Prompt> g{batch[k].prompt, batch[k].truth, {}, {}, {}, false};
        for (std::size_t i = 0; i < config.group_size; ++i) {
            Rollout r = policy.generate(batch[k].prompt, theta_old, rng);
            r.text = policy.render(r.tokens);
            g.rewards.push_back(reward(r.text, batch[k].truth, config.reward_weights));
            g.responses.push_back(std::move(r));
        }
        auto adv = group_advantages(g.rewards, config.std_floor);
        g.advantages = adv.values;
        g.effective = adv.effective;
        for (double r : g.rewards) reward_sum += r;
        report.groups.push_back({k, adv.mean, adv.stddev, adv.effective});
        groups.push_back(std::move(g));
    }
    report.mean_reward = reward_sum / static_cast<double>(batch.size() * config.group_size);

    const std::span<const RolloutGroup<typename P::Prompt>> view(groups);
    const bool any_effective = std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.effective; });
    if (any_effective) {
        for (std::size_t u = 0; u < config.updates_per_step; ++u) {
            auto obj = grpo_objective(policy, theta, theta_old, view, config.clip_eps);
            for (std::size_t p = 0; p < theta.size(); ++p) theta[p] += config.learning_rate * obj.gradient[p];
        }
    }
    report.objective = grpo_objective(policy, theta, theta_old, view, config.clip_eps).value;
    return report;
}

// ---------------------------------------------------------------------------
// Effectiveness accounting

struct LedgerPoint {
    std::size_t step = 0;
    std::size_t effective = 0;   // cumulative
    std::size_t ineffective = 0; // cumulative
};

/// Cumulative effective / ineffective (zero reward variance) group counts,
/// one point per step report.
inline std::vector<LedgerPoint> effectiveness_ledger(std::span<const StepReport> reports) {
    std::vector<LedgerPoint> curve;
    curve.reserve(reports.size());
    std::size_t eff = 0, ineff = 0;
    for (const auto& r : reports) {
        for (const auto& g : r.groups) (g.effective ? eff : ineff) += 1;
        curve.push_back({r.step, eff, ineff});
    }
    return curve;
}

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline void write_step_csv_header(std::ostream& out) { out << "step,group_id,reward_mean,reward_std,effective,objective\n"; }

inline void write_step_csv(std::ostream& out, const StepReport& r) {
    for (const auto& g : r.groups) {
        out << r.step << ',' << g.group_id << ',' << format_real(g.reward_mean) << ',' << format_real(g.reward_std)
            << ',' << (g.effective ? 1 : 0) << ',' << format_real(r.objective) << '\n';
    }
}

} // namespace pathforge::grpo
