#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/cot.hpp"
#include "pathforge/dataset.hpp"
#include "pathforge/error.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/metrics.hpp"
#include "pathforge/path_sampler.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/taxonomy.hpp"
#include "pathforge/toy_policy.hpp"
#include "pathforge/toy_world.hpp"

namespace pathforge::lab {

/// A training record resolved to policy inputs.
struct EncodedRecord {
    CuePrompt prompt;
    std::vector<Token> tokens; // think steps, END_THINK, answer
};

using CueTable = std::map<std::string, CuePrompt>;

inline CueTable cue_table(const std::vector<SyntheticSample>& samples) {
    CueTable t;
    for (const auto& s : samples) t[s.sample_id] = to_prompt(s);
    return t;
}

inline std::vector<EncodedRecord> encode_records(const ToyPolicy& policy, const std::vector<TrainingRecord>& records,
                                                 const CueTable& cues) {
    std::vector<EncodedRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto it = cues.find(r.sample_id);
        if (it == cues.end()) throw Error(ErrorCode::InvalidRecord, "no cues for sample '" + r.sample_id + "'");
        out.push_back({it->second, policy.encode(r.cot.think(), r.cot.answer())});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning

struct SftConfig {
    std::size_t epochs = 10;
    double learning_rate = 0.1;
    bool answer_shuffle = false;
    bool reshuffle_each_epoch = false;
    ShuffleMode shuffle_mode = ShuffleMode::Permutation;
    std::uint64_t seed = 0;
};

struct LossValue {
    double value = 0.0; // mean negative log-likelihood per token
    std::vector<double> gradient;
};

/// Mean per-token negative log-likelihood and its exact gradient.
inline LossValue sft_loss(const ToyPolicy& policy, std::span<const double> theta,
                          std::span<const EncodedRecord> records) {
    LossValue out;
    out.gradient.assign(policy.num_parameters(), 0.0);
    std::size_t tokens = 0;
    for (const auto& r : records) tokens += r.tokens.size();
    if (tokens == 0) return out;
    const double scale = 1.0 / static_cast<double>(tokens);
    std::vector<double> weights;
    for (const auto& r : records) {
        for (double lp : policy.logprobs(r.prompt, r.tokens, theta)) out.value -= lp * scale;
        weights.assign(r.tokens.size(), -scale);
        policy.accumulate_logprob_gradient(r.prompt, r.tokens, theta, weights, out.gradient);
    }
    return out;
}

inline double perplexity(const ToyPolicy& policy, std::span<const double> theta, std::span<const EncodedRecord> records) {
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& r : records) {
        for (double lp : policy.logprobs(r.prompt, r.tokens, theta)) nll -= lp;
        tokens += r.tokens.size();
    }
    return tokens == 0 ? 1.0 : std::exp(nll / static_cast<double>(tokens));
}

/**
 * Per-record stochastic gradient ascent on the sequence log-likelihood of the
 * rendered records given the sample cues. With answer_shuffle the answers are
 * reassigned across records before the first pass (and before every pass when
 * reshuffle_each_epoch is set).
 */
inline void sft_train(const ToyPolicy& policy, std::vector<double>& theta, const std::vector<TrainingRecord>& records,
                      const CueTable& cues, const SftConfig& config) {
    if (config.epochs == 0 || records.empty()) return;
    auto encoded = encode_records(policy, records, cues);
    std::vector<double> weights;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.answer_shuffle && (epoch == 0 || config.reshuffle_each_epoch)) {
            const auto shuffled = shuffle_answers(records, derive_seed(config.seed, "answers:" + std::to_string(epoch)),
                                                  config.shuffle_mode);
            for (std::size_t i = 0; i < encoded.size(); ++i)
                encoded[i].tokens.back() = policy.answer_token(policy.class_of(shuffled[i].cot.answer()));
        }
        const auto order = shuffle_permutation(encoded.size(), derive_seed(config.seed, "order:" + std::to_string(epoch)));
        for (std::size_t k : order) {
            const auto& r = encoded[k];
            weights.assign(r.tokens.size(), config.learning_rate);
            policy.accumulate_logprob_gradient(r.prompt, r.tokens, theta, weights, theta);
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> scores; // probability of the live answer token
    std::vector<bool> is_live;
    std::optional<double> auc;
    std::optional<double> eer;
    std::optional<double> threshold;
    std::optional<double> hter;
    std::optional<double> perplexity;
};

/// Greedy decoding per sample. The score is the answer-phase probability of
/// `live_label` after the greedy think; HTER uses the EER threshold of the
/// same set.
inline EvalResult evaluate(const ToyPolicy& policy, std::span<const double> theta,
                           const std::vector<SyntheticSample>& samples, std::string_view live_label = "real",
                           std::span<const EncodedRecord> perplexity_records = {}) {
    EvalResult out;
    const std::size_t live_cls = policy.class_of(live_label);
    std::size_t correct = 0;
    metrics::ScoredSet set;
    for (const auto& s : samples) {
        const auto q = to_prompt(s);
        const auto tokens = policy.greedy(q, theta);
        const Token answer = tokens.back();
        if (policy.is_answer(answer) && answer == policy.answer_token(policy.class_of(s.label))) ++correct;
        const std::vector<Token> think(tokens.begin(), tokens.end() - 1);
        const double score = policy.answer_distribution(q, think, theta)[live_cls];
        out.scores.push_back(score);
        out.is_live.push_back(s.label == live_label);
        set.push_back({score, s.label == live_label});
    }
    out.accuracy = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
    try {
        out.auc = metrics::auc(set);
        const auto e = metrics::eer_threshold(set);
        out.eer = e.eer;
        out.threshold = e.threshold;
        out.hter = metrics::hter(set, e.threshold);
    } catch (const Error&) {
        // single-class evaluation set: threshold metrics stay undefined
    }
    if (!perplexity_records.empty()) out.perplexity = perplexity(policy, theta, perplexity_records);
    return out;
}

// ---------------------------------------------------------------------------
// Scenarios

inline constexpr std::array<std::string_view, 5> kScenarios{"raw_single_path", "path_aug", "path_aug_shuffle_answers",
                                                            "path_aug_shuffle_paths", "rl_only"};

inline bool is_scenario(std::string_view name) {
    return std::find(kScenarios.begin(), kScenarios.end(), name) != kScenarios.end();
}

/**
 * The shortcut world: annotated (SFT) samples come from one capture setup
 * whose artifact code always matches the label; RL prompts come from pooled
 * source domains where the artifact is mostly uninformative; evaluation uses
 * an unseen domain with more cue noise, one modality's code mapping rotated
 * and no artifact signal.
 */
struct LabConfig {
    std::uint64_t seed = 1;
    std::size_t codes = 4;

    std::size_t annotated_samples = 200;
    double annotated_noise = 0.5;
    double annotated_artifact_rate = 1.0;
    std::size_t rl_samples = 800;
    double rl_noise = 0.2;
    double rl_artifact_rate = 0.0;
    std::size_t eval_samples = 1000;
    double eval_noise = 0.3;
    double eval_artifact_rate = 0.0;
    int eval_permuted_modality = 2;

    double alpha = 3.0;
    std::size_t paths = 50;
    FlagScope flag_scope = FlagScope::PerPath;

    SftConfig sft{};
    double temperature = 1.0;

    grpo::GrpoConfig grpo{8, 0.2, 0.5, 500, 1e-6, 1, {}};
    std::size_t rl_batch = 16;
};

inline nlohmann::json lab_config_to_json(const LabConfig& c) {
    return {{"seed", c.seed},
            {"codes", c.codes},
            {"annotated_samples", c.annotated_samples},
            {"annotated_noise", c.annotated_noise},
            {"annotated_artifact_rate", c.annotated_artifact_rate},
            {"rl_samples", c.rl_samples},
            {"rl_noise", c.rl_noise},
            {"rl_artifact_rate", c.rl_artifact_rate},
            {"eval_samples", c.eval_samples},
            {"eval_noise", c.eval_noise},
            {"eval_artifact_rate", c.eval_artifact_rate},
            {"eval_permuted_modality", c.eval_permuted_modality},
            {"alpha", c.alpha},
            {"paths", c.paths},
            {"flag_scope", c.flag_scope == FlagScope::PerPath ? "per_path" : "global_literal"},
            {"sft_epochs", c.sft.epochs},
            {"sft_lr", c.sft.learning_rate},
            {"sft_reshuffle_each_epoch", c.sft.reshuffle_each_epoch},
            {"shuffle_mode", to_string(c.sft.shuffle_mode)},
            {"temperature", c.temperature},
            {"group_size", c.grpo.group_size},
            {"clip_eps", c.grpo.clip_eps},
            {"rl_lr", c.grpo.learning_rate},
            {"rl_steps", c.grpo.steps},
            {"std_floor", c.grpo.std_floor},
            {"updates_per_step", c.grpo.updates_per_step},
            {"format_weight", c.grpo.reward_weights.format},
            {"classification_weight", c.grpo.reward_weights.classification},
            {"rl_batch", c.rl_batch}};
}

/// Inverse of lab_config_to_json; missing keys keep their defaults.
inline LabConfig lab_config_from_json(const nlohmann::json& j, LabConfig c = {}) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("codes", c.codes);
    get("annotated_samples", c.annotated_samples);
    get("annotated_noise", c.annotated_noise);
    get("annotated_artifact_rate", c.annotated_artifact_rate);
    get("rl_samples", c.rl_samples);
    get("rl_noise", c.rl_noise);
    get("rl_artifact_rate", c.rl_artifact_rate);
    get("eval_samples", c.eval_samples);
    get("eval_noise", c.eval_noise);
    get("eval_artifact_rate", c.eval_artifact_rate);
    get("eval_permuted_modality", c.eval_permuted_modality);
    get("alpha", c.alpha);
    get("paths", c.paths);
    if (j.contains("flag_scope")) {
        const auto scope = j.at("flag_scope").get<std::string>();
        if (scope != "per_path" && scope != "global_literal")
            throw Error(ErrorCode::InvalidArgument, "unknown flag scope '" + scope + "' (valid: per_path, global_literal)");
        c.flag_scope = scope == "global_literal" ? FlagScope::GlobalLiteral : FlagScope::PerPath;
    }
    get("sft_epochs", c.sft.epochs);
    get("sft_lr", c.sft.learning_rate);
    get("sft_reshuffle_each_epoch", c.sft.reshuffle_each_epoch);
    if (j.contains("shuffle_mode")) c.sft.shuffle_mode = parse_shuffle_mode(j.at("shuffle_mode").get<std::string>());
    get("temperature", c.temperature);
    get("group_size", c.grpo.group_size);
    get("clip_eps", c.grpo.clip_eps);
    get("rl_lr", c.grpo.learning_rate);
    get("rl_steps", c.grpo.steps);
    get("std_floor", c.grpo.std_floor);
    get("updates_per_step", c.grpo.updates_per_step);
    get("format_weight", c.grpo.reward_weights.format);
    get("classification_weight", c.grpo.reward_weights.classification);
    get("rl_batch", c.rl_batch);
    return c;
}

struct ExperimentReport {
    std::string scenario;
    std::uint64_t seed = 0;
    double accuracy = 0.0; // shifted domain
    std::optional<double> auc;
    std::optional<double> hter;
    std::optional<double> perplexity;     // final policy on the SFT records
    std::optional<double> sft_perplexity; // right after SFT, on the records it was trained on
    double source_accuracy = 0.0;         // held-out samples from the RL source domain
    double sft_accuracy = 0.0;            // shifted domain, before RL
    std::size_t sft_records = 0;
    std::size_t final_effective = 0;
    std::size_t final_ineffective = 0;
    std::vector<grpo::StepReport> steps;
    std::vector<grpo::LedgerPoint> ledger;
    EvalResult shifted;
};

struct LabData {
    std::vector<SyntheticSample> annotated;
    std::vector<SyntheticSample> rl;
    std::vector<SyntheticSample> source_eval;
    std::vector<SyntheticSample> shifted_eval;
};

inline std::vector<std::string> lab_classes() { return {"real", "print attack", "replay attack", "mask attack"}; }

inline LabData make_lab_data(const LabConfig& c) {
    LabData d;
    const auto classes = lab_classes();
    auto world = [&](DomainSpec spec, const char* salt) {
        return generate_world({classes, c.codes, {std::move(spec)}, derive_seed(c.seed, salt)});
    };
    d.annotated = world({"annotated", c.annotated_samples, c.annotated_noise, c.annotated_artifact_rate, -1}, "annotated");
    d.rl = world({"source", c.rl_samples, c.rl_noise, c.rl_artifact_rate, -1}, "source");
    d.source_eval = world({"source-heldout", c.eval_samples, c.rl_noise, c.rl_artifact_rate, -1}, "source-heldout");
    d.shifted_eval = world({"target", c.eval_samples, c.eval_noise, c.eval_artifact_rate, c.eval_permuted_modality}, "target");
    return d;
}

/// Root-to-leaf forward walk to a leaf named after the sample label; the leaf
/// (one per modality branch) is chosen by the sample's sub-seed.
inline ReasoningPath direct_path(const ReasoningTree& tree, const std::string& label, std::uint64_t seed) {
    const auto leaves = leaves_with_name(tree, label);
    if (leaves.empty()) throw Error(ErrorCode::NoSuchLeaf, "no leaf is named '" + label + "'");
    Rng rng(seed);
    std::size_t v = tree.index_of(leaves[rng.index(leaves.size())]);
    std::vector<std::size_t> chain;
    while (v != tree.root_index()) {
        chain.push_back(v);
        v = *tree.parent_of(v);
    }
    ReasoningPath path;
    path.target = label;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        path.steps.push_back({Direction::Forward, tree.node(*it).id, tree.node(*it).name});
    return path;
}

inline std::vector<TrainingRecord> single_path_records(const std::vector<SampleRecord>& samples, const ReasoningTree& tree,
                                                       std::uint64_t seed) {
    std::vector<TrainingRecord> out;
    for (const auto& s : samples) {
        const std::uint64_t sub = derive_seed(seed, s.sample_id);
        TrainingRecord r{s.sample_id, s.prompt, s.modality_refs, compose(direct_path(tree, s.label, sub), tree, s.label, s.sample_id), {}};
        r.provenance = {seed, sub, r.cot.path_id(), {}};
        out.push_back(std::move(r));
    }
    return out;
}

/// SFT records for a scenario (before any SFT-time answer shuffling).
inline std::vector<TrainingRecord> scenario_records(std::string_view scenario, const LabConfig& c, const ReasoningTree& tree,
                                                    const std::vector<SyntheticSample>& annotated) {
    std::vector<SampleRecord> manifest;
    for (const auto& s : annotated) manifest.push_back(to_sample_record(s));
    const std::uint64_t forge_seed = derive_seed(c.seed, "forge");
    if (scenario == "raw_single_path") return single_path_records(manifest, tree, forge_seed);
    auto records = forge(manifest, tree, {c.alpha, c.paths, forge_seed, c.flag_scope}).records;
    if (scenario == "path_aug_shuffle_paths" && records.size() >= 2)
        records = shuffle_paths(std::move(records), derive_seed(c.seed, "shuffle_paths"));
    return records;
}

inline ExperimentReport run_scenario(std::string_view scenario, const LabConfig& c, const ReasoningTree& tree) {
    if (!is_scenario(scenario)) {
        std::string names;
        for (auto n : kScenarios) names += (names.empty() ? "" : ", ") + std::string(n);
        throw Error(ErrorCode::UnknownScenario, "unknown scenario '" + std::string(scenario) + "' (valid: " + names + ")");
    }
    ExperimentReport report;
    report.scenario = std::string(scenario);
    report.seed = c.seed;

    const auto data = make_lab_data(c);
    const auto cues = cue_table(data.annotated);
    const std::size_t l_max = path_length_bound(tree, c.alpha);
    const ToyPolicy policy(tree, lab_classes(), c.codes, l_max > 0 ? l_max - 1 : 0, c.temperature);
    std::vector<double> theta(policy.num_parameters(), 0.0);

    const bool with_sft = scenario != "rl_only";
    const auto records = scenario_records(with_sft ? scenario : std::string_view("path_aug"), c, tree, data.annotated);
    const auto encoded = encode_records(policy, records, cues);
    report.sft_records = with_sft ? records.size() : 0;

    if (with_sft) {
        SftConfig sft = c.sft;
        sft.seed = derive_seed(c.seed, "sft");
        sft.answer_shuffle = scenario == "path_aug_shuffle_answers";
        sft_train(policy, theta, records, cues, sft);
        report.sft_perplexity = perplexity(policy, theta, encoded);
        report.sft_accuracy = evaluate(policy, theta, data.shifted_eval).accuracy;
    }

    std::vector<grpo::PromptItem<CuePrompt>> prompts;
    for (const auto& s : data.rl) prompts.push_back({s.sample_id, to_prompt(s), s.label});
    const std::size_t batch = std::min(c.rl_batch, prompts.size());
    std::vector<std::size_t> order;
    std::size_t cursor = 0, pass = 0;
    for (std::size_t step = 0; step < c.grpo.steps && batch > 0; ++step) {
        std::vector<grpo::PromptItem<CuePrompt>> items;
        while (items.size() < batch) {
            if (cursor == order.size()) {
                order = shuffle_permutation(prompts.size(), derive_seed(c.seed, "rl-order:" + std::to_string(pass++)));
                cursor = 0;
            }
            items.push_back(prompts[order[cursor++]]);
        }
        report.steps.push_back(grpo::rl_step(policy, theta, std::span<const grpo::PromptItem<CuePrompt>>(items), c.grpo,
                                             derive_seed(c.seed, "rl-step:" + std::to_string(step)), step + 1));
    }
    report.ledger = grpo::effectiveness_ledger(report.steps);
    if (!report.ledger.empty()) {
        report.final_effective = report.ledger.back().effective;
        report.final_ineffective = report.ledger.back().ineffective;
    }

    report.shifted = evaluate(policy, theta, data.shifted_eval, "real", encoded);
    report.accuracy = report.shifted.accuracy;
    report.auc = report.shifted.auc;
    report.hter = report.shifted.hter;
    report.perplexity = report.shifted.perplexity;
    report.source_accuracy = evaluate(policy, theta, data.source_eval).accuracy;
    return report;
}

struct SweepPoint {
    std::size_t paths = 0;
    std::size_t records = 0;
    double perplexity = 0.0;
};

/// Training-set perplexity after SFT (no shuffling, no RL) on the annotated
/// samples forged with each path budget.
inline std::vector<SweepPoint> perplexity_sweep(const LabConfig& c, const ReasoningTree& tree,
                                                std::span<const std::size_t> budgets) {
    const auto data = make_lab_data(c);
    const auto cues = cue_table(data.annotated);
    const std::size_t l_max = path_length_bound(tree, c.alpha);
    const ToyPolicy policy(tree, lab_classes(), c.codes, l_max > 0 ? l_max - 1 : 0, c.temperature);
    std::vector<SampleRecord> manifest;
    for (const auto& s : data.annotated) manifest.push_back(to_sample_record(s));

    std::vector<SweepPoint> out;
    for (std::size_t n : budgets) {
        const auto records = forge(manifest, tree, {c.alpha, n, derive_seed(c.seed, "forge"), c.flag_scope}).records;
        std::vector<double> theta(policy.num_parameters(), 0.0);
        SftConfig sft = c.sft;
        sft.seed = derive_seed(c.seed, "sft");
        sft.answer_shuffle = false;
        sft_train(policy, theta, records, cues, sft);
        const auto encoded = encode_records(policy, records, cues);
        out.push_back({n, records.size(), perplexity(policy, theta, encoded)});
    }
    return out;
}

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json report_summary_json(const ExperimentReport& r) {
    return {{"scenario", r.scenario},
            {"seed", r.seed},
            {"accuracy", r.accuracy},
            {"auc", optional_json(r.auc)},
            {"hter", optional_json(r.hter)},
            {"perplexity", optional_json(r.perplexity)},
            {"sft_perplexity", optional_json(r.sft_perplexity)},
            {"sft_accuracy", r.sft_accuracy},
            {"source_accuracy", r.source_accuracy},
            {"sft_records", r.sft_records},
            {"final_effective", r.final_effective},
            {"final_ineffective", r.final_ineffective},
            {"effective_definition", "a group is effective iff its rewards have non-zero variance"}};
}

} // namespace pathforge::lab
