#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "table_policy.hpp"
#include "test_support.hpp"

using namespace pathforge;
using namespace pathforge::grpo;
using pathforge::testing::RawPolicy;
using pathforge::testing::TablePolicy;
namespace pt = pathforge::testing;

namespace {

const std::vector<std::string> kTwoClassVocab{
    "<think>look</think><answer>real</answer>",
    "<think>look</think><answer>spoof</answer>",
    "<answer>real</answer>",
    "noise",
};

std::vector<PromptItem<int>> two_class_batch() {
    return {{"q0", 0, "real"}, {"q1", 1, "spoof"}};
}

RolloutGroup<int> random_group(const TablePolicy& policy, std::span<const double> theta, Rng& rng, int q, std::size_t g) {
    RolloutGroup<int> group{q, "real", {}, {}, {}, true};
    for (std::size_t i = 0; i < g; ++i) {
        group.responses.push_back(policy.generate(q, theta, rng));
        group.rewards.push_back(static_cast<double>(rng.index(3)));
    }
    group.rewards[0] = 0.0;
    group.rewards[1] = 2.0;
    group.advantages = group_advantages(group.rewards).values;
    return group;
}

} // namespace

TEST(Reward, GrammarTable) {
    struct Row {
        std::string text;
        int format;
        int classification; // truth "real"
    };
    const std::vector<Row> table{
        {"<think>x</think><answer>real</answer>", 1, 1},
        {"<think>x</think><answer>spoof</answer>", 1, 0},
        {"<answer>real</answer>", 0, 0},
        {"<think>x</think>", 0, 0},
        {"<think>x</think><answer>real</answer><answer>spoof</answer>", 0, 0},
        {"<think>x</think><think>y</think><answer>real</answer>", 0, 0},
        {"<answer>real</answer><think>x</think>", 0, 0},
        {"<think></think><answer>real</answer>", 0, 0},
        {"<think>x</think><answer></answer>", 0, 0},
        {"<think>x</think> <answer>real</answer>", 0, 0},
        {"<think>x</think><answer>real</answer>\n", 0, 0},
        {"<think>x<answer>real</answer>", 0, 0},
        {"<think>x</think><answer>Real</answer>", 1, 0},
        {"<think>x</think><answer> real</answer>", 1, 0},
        {"", 0, 0},
        {"real", 0, 0},
    };
    for (const auto& row : table) {
        EXPECT_EQ(format_reward(row.text), row.format) << row.text;
        EXPECT_EQ(classification_reward(row.text, "real"), row.classification) << row.text;
        EXPECT_DOUBLE_EQ(reward(row.text, "real"), row.format + row.classification);
    }
    EXPECT_DOUBLE_EQ(reward("<think>x</think><answer>real</answer>", "real", {0.5, 2.0}), 2.5);
}

TEST(Advantages, Examples) {
    const std::vector<double> two{2, 0};
    EXPECT_EQ(group_advantages(two).values, (std::vector<double>{1, -1}));
    const std::vector<double> flat{1, 1, 1, 1};
    const auto f = group_advantages(flat);
    EXPECT_FALSE(f.effective);
    EXPECT_EQ(f.values, (std::vector<double>(4, 0.0)));
    const std::vector<double> four{2, 1, 1, 0};
    const auto a = group_advantages(four);
    EXPECT_TRUE(a.effective);
    EXPECT_NEAR(a.values[0], 1.41421, 1e-5);
    EXPECT_EQ(a.values[1], 0.0);
    EXPECT_EQ(a.values[2], 0.0);
    EXPECT_NEAR(a.values[3], -1.41421, 1e-5);
    const std::vector<double> one{1};
    EXPECT_THROW(group_advantages(one), Error);
}

TEST(Advantages, NormalizedAndScaleInvariant) {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> r(2 + rng.index(15));
        for (auto& x : r) x = static_cast<double>(rng.index(3)) + 0.25 * rng.uniform();
        const auto a = group_advantages(r);
        ASSERT_TRUE(a.effective);
        double mean = 0, var = 0;
        for (double v : a.values) mean += v;
        mean /= static_cast<double>(r.size());
        for (double v : a.values) var += (v - mean) * (v - mean);
        EXPECT_LT(std::abs(mean), 1e-9);
        EXPECT_LT(std::abs(std::sqrt(var / static_cast<double>(r.size())) - 1.0), 1e-9);

        std::vector<double> scaled = r;
        for (auto& x : scaled) x = 3.5 * x - 7.0;
        const auto b = group_advantages(scaled);
        for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-9);
    }
}

TEST(Objective, ZeroAtOldParameters) {
    Rng rng(5);
    TablePolicy policy{3, 3, {"a", "b", "c", "d"}};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> theta(policy.num_parameters());
        for (auto& x : theta) x = 2.0 * rng.uniform() - 1.0;
        std::vector<RolloutGroup<int>> groups;
        for (std::size_t k = 0, n = 1 + rng.index(4); k < n; ++k)
            groups.push_back(random_group(policy, theta, rng, static_cast<int>(rng.index(3)), 2 + rng.index(7)));
        const auto v = grpo_objective<TablePolicy>(policy, theta, theta, groups, 0.2);
        EXPECT_LT(std::abs(v.value), 1e-12);
    }
}

TEST(Objective, HandExample) {
    RawPolicy policy;
    const std::vector<double> theta{std::log(1.5), std::log(0.5)};
    const std::vector<double> theta_old{0.0, 0.0};
    std::vector<RolloutGroup<int>> groups{{0, "real", {{{0}, {}, {}}, {{1}, {}, {}}}, {}, {1.0, -1.0}, true}};
    const auto v = grpo_objective<RawPolicy>(policy, theta, theta_old, groups, 0.2);
    EXPECT_NEAR(v.value, 0.2, 1e-12);
    // Both tokens sit on the clipped branch, so neither moves theta.
    EXPECT_EQ(v.gradient, (std::vector<double>{0.0, 0.0}));
}

TEST(Objective, ClippedValueIsBounded) {
    RawPolicy policy;
    std::vector<RolloutGroup<int>> groups{{0, "real", {{{0}, {}, {}}, {{1}, {}, {}}}, {}, {1.0, -1.0}, true}};
    for (double lr : {-3.0, -1.0, 0.0, 0.1, 1.0, 4.0}) {
        const std::vector<double> theta{lr, -lr};
        const auto v = grpo_objective<RawPolicy>(policy, theta, std::vector<double>{0, 0}, groups, 0.2);
        EXPECT_LE(v.value, 0.5 * ((1.2) + (-0.8)) + 1e-12);
    }
}

TEST(Objective, DegenerateRatio) {
    RawPolicy policy;
    std::vector<RolloutGroup<int>> groups{{0, "real", {{{0}, {}, {}}, {{1}, {}, {}}}, {}, {1.0, -1.0}, true}};
    const std::vector<double> old{-INFINITY, 0.0};
    try {
        grpo_objective<RawPolicy>(policy, std::vector<double>{0, 0}, old, groups, 0.2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateRatio);
    }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
    Rng rng(2024);
    const double eps = 0.2, h = 1e-5;
    int checked = 0;
    while (checked < 20) {
        TablePolicy policy{2, 1 + rng.index(3), std::vector<std::string>(2 + rng.index(4), "t")};
        std::vector<double> theta_old(policy.num_parameters()), theta(policy.num_parameters());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            theta_old[i] = rng.uniform() * 2.0 - 1.0;
            theta[i] = theta_old[i] + 0.4 * (rng.uniform() - 0.5);
        }
        std::vector<RolloutGroup<int>> groups;
        for (int q = 0; q < 2; ++q) groups.push_back(random_group(policy, theta_old, rng, q, 4));

        // Stay away from the clip breakpoints so the objective is smooth
        // within the difference stencil.
        bool near_break = false;
        for (const auto& g : groups) {
            for (const auto& r : g.responses) {
                const auto a = policy.logprobs(g.prompt, r.tokens, theta);
                const auto b = policy.logprobs(g.prompt, r.tokens, theta_old);
                for (std::size_t t = 0; t < a.size(); ++t) {
                    const double ratio = std::exp(a[t] - b[t]);
                    near_break |= std::abs(ratio - (1 + eps)) < 1e-3 || std::abs(ratio - (1 - eps)) < 1e-3;
                }
            }
        }
        if (near_break) continue;

        const auto analytic = grpo_objective<TablePolicy>(policy, theta, theta_old, groups, eps).gradient;
        std::vector<double> numeric(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            auto plus = theta, minus = theta;
            plus[i] += h;
            minus[i] -= h;
            numeric[i] = (grpo_objective<TablePolicy>(policy, plus, theta_old, groups, eps).value -
                          grpo_objective<TablePolicy>(policy, minus, theta_old, groups, eps).value) /
                         (2 * h);
        }
        double diff = 0, scale = 0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
            scale = std::max(scale, std::abs(numeric[i]));
        }
        if (scale == 0.0) {
            EXPECT_LT(diff, 1e-9);
        } else {
            EXPECT_LT(diff / scale, 1e-4) << "trial " << checked;
        }
        ++checked;
    }
}

TEST(RlStep, CorrectDeterministicPolicyIsAllIneffective) {
    TablePolicy policy{2, 1, kTwoClassVocab};
    std::vector<double> theta(policy.num_parameters(), -1000.0);
    theta[policy.offset(0, 0) + 0] = 0.0;
    theta[policy.offset(1, 0) + 1] = 0.0;
    const auto before = theta;
    const auto batch = two_class_batch();
    GrpoConfig cfg;
    cfg.learning_rate = 0.5;
    const auto report = rl_step<TablePolicy>(policy, theta, batch, cfg, 1, 0);
    EXPECT_EQ(theta, before);
    for (const auto& g : report.groups) EXPECT_FALSE(g.effective);
    EXPECT_DOUBLE_EQ(report.mean_reward, 2.0);
    EXPECT_EQ(report.objective, 0.0);
}

TEST(RlStep, UniformPolicyImprovesAndIsDeterministic) {
    TablePolicy policy{2, 1, kTwoClassVocab};
    const auto batch = two_class_batch();
    GrpoConfig cfg;
    cfg.learning_rate = 0.5;
    auto run = [&](std::string& csv) {
        std::vector<double> theta(policy.num_parameters(), 0.0);
        std::vector<StepReport> reports;
        std::ostringstream out;
        for (std::size_t s = 0; s < 200; ++s) {
            reports.push_back(rl_step<TablePolicy>(policy, theta, batch, cfg, derive_seed(77, s), s));
            write_step_csv(out, reports.back());
        }
        csv = out.str();
        return reports;
    };
    std::string a, b;
    const auto reports = run(a);
    run(b);
    EXPECT_EQ(a, b);
    // Step 1 reward is the uniform expectation; by step 200 the policy
    // emits the right tagged answer almost always.
    EXPECT_LT(reports.front().mean_reward, 1.5);
    EXPECT_GT(reports.back().mean_reward, 1.9);
    EXPECT_GT(reports.back().mean_reward, reports.front().mean_reward);
}

TEST(RlStep, RejectsBadInput) {
    TablePolicy policy{2, 1, kTwoClassVocab};
    std::vector<double> theta(policy.num_parameters(), 0.0);
    EXPECT_THROW(rl_step<TablePolicy>(policy, theta, std::vector<PromptItem<int>>{}, {}, 0, 0), Error);
    GrpoConfig one;
    one.group_size = 1;
    EXPECT_THROW(rl_step<TablePolicy>(policy, theta, two_class_batch(), one, 0, 0), Error);
}

TEST(Ledger, Examples) {
    std::vector<StepReport> flat, alternating;
    for (std::size_t s = 0; s < 10; ++s) {
        flat.push_back({s, {{0, 2, 0, false}, {1, 2, 0, false}}, 0, 2});
        alternating.push_back({s, {{0, 1, 1, s % 2 == 0}}, 0, 1});
    }
    for (const auto& p : effectiveness_ledger(flat)) {
        EXPECT_EQ(p.effective, 0u);
        EXPECT_EQ(p.ineffective, 2 * (p.step + 1));
    }
    const auto curve = effectiveness_ledger(alternating);
    EXPECT_EQ(curve.back().effective, 5u);
    EXPECT_EQ(curve.back().ineffective, 5u);
    for (const auto& p : curve) EXPECT_EQ(p.effective + p.ineffective, p.step + 1);
}

TEST(Ledger, GoldenOverfitVersusFresh) {
    TablePolicy policy{2, 1, kTwoClassVocab};
    const auto batch = two_class_batch();
    GrpoConfig cfg;
    cfg.learning_rate = 0.5;

    std::vector<double> overfit(policy.num_parameters(), 0.0);
    overfit[policy.offset(0, 0) + 0] = 6.0;
    overfit[policy.offset(1, 0) + 1] = 6.0;
    std::vector<double> fresh(policy.num_parameters(), 0.0);

    std::string actual = "policy,step,effective,ineffective\n";
    std::size_t final_ineffective[2] = {};
    int which = 0;
    for (auto* theta : {&overfit, &fresh}) {
        std::vector<StepReport> reports;
        for (std::size_t s = 0; s < 100; ++s)
            reports.push_back(rl_step<TablePolicy>(policy, *theta, batch, cfg, derive_seed(3, s), s));
        for (const auto& p : effectiveness_ledger(reports))
            actual += std::string(which == 0 ? "overfit" : "fresh") + "," + std::to_string(p.step) + "," +
                      std::to_string(p.effective) + "," + std::to_string(p.ineffective) + "\n";
        final_ineffective[which++] = effectiveness_ledger(reports).back().ineffective;
    }
    EXPECT_GT(final_ineffective[0], final_ineffective[1]);
    EXPECT_EQ(actual, pt::golden("golden_ledger.csv", actual));
}
