#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathforge/cot.hpp"
#include "pathforge/error.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/taxonomy.hpp"

namespace pathforge::lab {

using grpo::Token;

inline constexpr std::array<std::string_view, 3> kModalities{"RGB", "DEPTH", "IR"};

/// Categorical cue codes of one sample: one genuine code per modality (in
/// kModalities order) and one capture-artifact code (-1 when absent).
struct CuePrompt {
    std::array<int, 3> genuine{0, 0, 0};
    int artifact = -1;

    friend bool operator==(const CuePrompt&, const CuePrompt&) = default;
};

/**
 * Small autoregressive policy over a symbolic vocabulary:
 *
 *   forward / reflect step tokens for every tree node, END_THINK,
 *   one answer token per class, EMPTY_ANSWER.
 *
 * A response is a walk in the tree (the think part), END_THINK, then exactly
 * one answer token. Decoding is masked to moves that keep the walk valid
 * (each node entered and reflected out of at most once, at most
 * `max_think_steps` steps), so malformed outputs are limited to an empty
 * think or an empty answer, both of which fail the tag grammar.
 *
 * Logits are log-linear: logit(v) = sum_{f in active} theta[ctx][f][v] / T.
 * Think positions use the previous step token as context; the answer has one
 * shared context. Every position sees a bias and one-hots of all cues
 * including the capture artifact; the answer additionally sees a one-hot of
 * the last think step.
 */
class ToyPolicy {
public:
    using Prompt = CuePrompt;

    ToyPolicy(const ReasoningTree& tree, std::vector<std::string> classes, std::size_t codes,
              std::size_t max_think_steps, double temperature = 1.0)
        : tree_(&tree), classes_(std::move(classes)), codes_(codes), max_think_steps_(max_think_steps),
          temperature_(temperature) {
        if (classes_.empty()) throw Error(ErrorCode::InvalidArgument, "policy needs at least one class");
        if (codes_ == 0) throw Error(ErrorCode::InvalidArgument, "policy needs at least one cue code");
        if (!(temperature_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
        const std::size_t n = tree.size();
        num_steps_ = 2 * n;
        vocab_ = num_steps_ + classes_.size() + 2;
        think_contexts_ = 1 + num_steps_;
        contexts_ = think_contexts_ + 1;
        features_ = 4 * codes_ + 1 + think_contexts_;

        for (std::size_t i = 0; i < classes_.size(); ++i) class_index_[classes_[i]] = i;
        build_clause_index();
    }

    // -- vocabulary -------------------------------------------------------

    Token forward_token(std::size_t node) const { return static_cast<Token>(2 * node); }
    Token reflect_token(std::size_t node) const { return static_cast<Token>(2 * node + 1); }
    Token end_think_token() const { return static_cast<Token>(num_steps_); }
    Token answer_token(std::size_t cls) const { return static_cast<Token>(num_steps_ + 1 + cls); }
    Token empty_answer_token() const { return static_cast<Token>(num_steps_ + 1 + classes_.size()); }
    bool is_step(Token t) const { return t >= 0 && static_cast<std::size_t>(t) < num_steps_; }
    bool is_answer(Token t) const {
        return static_cast<std::size_t>(t) > num_steps_ && static_cast<std::size_t>(t) <= num_steps_ + classes_.size();
    }

    std::size_t vocab_size() const noexcept { return vocab_; }
    std::size_t num_parameters() const noexcept { return contexts_ * features_ * vocab_; }
    const std::vector<std::string>& classes() const noexcept { return classes_; }
    std::size_t max_think_steps() const noexcept { return max_think_steps_; }
    const ReasoningTree& tree() const noexcept { return *tree_; }

    std::size_t class_of(std::string_view label) const {
        auto it = class_index_.find(std::string(label));
        if (it == class_index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown class '" + std::string(label) + "'");
        return it->second;
    }

    // -- decoding state ---------------------------------------------------

    struct Cursor {
        std::size_t position = 0;
        std::vector<bool> entered;
        std::vector<bool> reflected;
        std::size_t steps = 0;
        int last_step = -1;
        enum class Phase { Think, Answer, Done } phase = Phase::Think;
    };

    Cursor start() const {
        Cursor c;
        c.position = tree_->root_index();
        c.entered.assign(tree_->size(), false);
        c.reflected.assign(tree_->size(), false);
        return c;
    }

    void legal_tokens(const Cursor& c, std::vector<Token>& out) const {
        out.clear();
        if (c.phase == Cursor::Phase::Think) {
            if (c.steps < max_think_steps_) {
                for (std::size_t ch : tree_->children_of(c.position)) {
                    if (!c.entered[ch]) out.push_back(forward_token(ch));
                }
                if (c.position != tree_->root_index() && !c.reflected[c.position])
                    out.push_back(reflect_token(c.position));
            }
            out.push_back(end_think_token());
        } else if (c.phase == Cursor::Phase::Answer) {
            for (std::size_t k = 0; k < classes_.size(); ++k) out.push_back(answer_token(k));
            out.push_back(empty_answer_token());
        }
    }

    std::size_t context(const Cursor& c) const {
        if (c.phase == Cursor::Phase::Think) return c.last_step < 0 ? 0 : 1 + static_cast<std::size_t>(c.last_step);
        return think_contexts_;
    }

    void active_features(const Cursor& c, const CuePrompt& q, std::vector<std::size_t>& out) const {
        out.clear();
        for (int m = 0; m < 3; ++m) out.push_back(genuine_feature(m, q.genuine[m]));
        if (q.artifact >= 0) out.push_back(artifact_feature(q.artifact));
        out.push_back(bias_feature());
        if (c.phase != Cursor::Phase::Think)
            out.push_back(bias_feature() + 1 + (c.last_step < 0 ? 0 : 1 + static_cast<std::size_t>(c.last_step)));
    }

    /// Applies a token; the caller guarantees it is legal.
    void advance(Cursor& c, Token t) const {
        if (c.phase == Cursor::Phase::Think) {
            if (t == end_think_token()) {
                c.phase = Cursor::Phase::Answer;
                return;
            }
            const std::size_t node = static_cast<std::size_t>(t) / 2;
            if (t % 2 == 0) {
                c.entered[node] = true;
                c.position = node;
            } else {
                c.reflected[node] = true;
                c.position = *tree_->parent_of(node);
            }
            ++c.steps;
            c.last_step = t;
        } else {
            c.phase = Cursor::Phase::Done;
        }
    }

    // -- probabilities ----------------------------------------------------

    /// Masked softmax at the cursor; `probs` is parallel to `legal`.
    void distribution(const Cursor& c, const CuePrompt& q, std::span<const double> theta, std::vector<Token>& legal,
                      std::vector<std::size_t>& feats, std::vector<double>& probs) const {
        legal_tokens(c, legal);
        active_features(c, q, feats);
        const std::size_t ctx = context(c);
        probs.assign(legal.size(), 0.0);
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < legal.size(); ++k) {
            double z = 0.0;
            for (std::size_t f : feats) z += theta[index(ctx, f, static_cast<std::size_t>(legal[k]))];
            probs[k] = z / temperature_;
            max_logit = std::max(max_logit, probs[k]);
        }
        double total = 0.0;
        for (double& p : probs) {
            p = std::exp(p - max_logit);
            total += p;
        }
        for (double& p : probs) p /= total;
    }

    grpo::Rollout generate(const CuePrompt& q, std::span<const double> theta, Rng& rng) const {
        grpo::Rollout out;
        Cursor c = start();
        std::vector<Token> legal;
        std::vector<std::size_t> feats;
        std::vector<double> probs;
        while (c.phase != Cursor::Phase::Done) {
            distribution(c, q, theta, legal, feats, probs);
            const std::size_t k = rng.categorical(probs);
            out.tokens.push_back(legal[k]);
            out.logprobs.push_back(std::log(probs[k]));
            advance(c, legal[k]);
        }
        out.text = render(out.tokens);
        return out;
    }

    /// Most probable token at every position (lowest token id on ties).
    std::vector<Token> greedy(const CuePrompt& q, std::span<const double> theta) const {
        std::vector<Token> tokens;
        Cursor c = start();
        std::vector<Token> legal;
        std::vector<std::size_t> feats;
        std::vector<double> probs;
        while (c.phase != Cursor::Phase::Done) {
            distribution(c, q, theta, legal, feats, probs);
            const std::size_t k = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
            tokens.push_back(legal[k]);
            advance(c, legal[k]);
        }
        return tokens;
    }

    /// Per-token log-probabilities; -inf for a token the mask forbids.
    std::vector<double> logprobs(const CuePrompt& q, std::span<const Token> tokens, std::span<const double> theta) const {
        std::vector<double> out;
        out.reserve(tokens.size());
        Cursor c = start();
        std::vector<Token> legal;
        std::vector<std::size_t> feats;
        std::vector<double> probs;
        bool broken = false;
        for (Token t : tokens) {
            if (broken || c.phase == Cursor::Phase::Done) {
                out.push_back(-std::numeric_limits<double>::infinity());
                broken = true;
                continue;
            }
            distribution(c, q, theta, legal, feats, probs);
            auto it = std::find(legal.begin(), legal.end(), t);
            if (it == legal.end()) {
                out.push_back(-std::numeric_limits<double>::infinity());
                broken = true;
                continue;
            }
            out.push_back(std::log(probs[static_cast<std::size_t>(it - legal.begin())]));
            advance(c, t);
        }
        return out;
    }

    /// grad += sum_t weights[t] * d log p(o_t) / d theta. All probabilities
    /// are evaluated before grad is written, so grad may alias theta (an
    /// in-place ascent step).
    void accumulate_logprob_gradient(const CuePrompt& q, std::span<const Token> tokens, std::span<const double> theta,
                                     std::span<const double> weights, std::span<double> grad) const {
        struct Update {
            std::size_t index;
            double delta;
        };
        std::vector<Update> updates;
        Cursor c = start();
        std::vector<Token> legal;
        std::vector<std::size_t> feats;
        std::vector<double> probs;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (c.phase == Cursor::Phase::Done)
                throw Error(ErrorCode::InvalidArgument, "token sequence runs past the end of a response");
            distribution(c, q, theta, legal, feats, probs);
            auto it = std::find(legal.begin(), legal.end(), tokens[t]);
            if (it == legal.end()) throw Error(ErrorCode::InvalidArgument, "token is not legal at its position");
            const std::size_t chosen = static_cast<std::size_t>(it - legal.begin());
            const double w = weights[t] / temperature_;
            if (w != 0.0) {
                const std::size_t ctx = context(c);
                for (std::size_t k = 0; k < legal.size(); ++k) {
                    const double d = w * ((k == chosen ? 1.0 : 0.0) - probs[k]);
                    for (std::size_t f : feats) updates.push_back({index(ctx, f, static_cast<std::size_t>(legal[k])), d});
                }
            }
            advance(c, tokens[t]);
        }
        for (const auto& u : updates) grad[u.index] += u.delta;
    }

    /// Answer-phase distribution after the given think tokens (END_THINK
    /// included). Indexed by class, with the empty answer last.
    std::vector<double> answer_distribution(const CuePrompt& q, std::span<const Token> think,
                                            std::span<const double> theta) const {
        Cursor c = start();
        for (Token t : think) advance(c, t);
        if (c.phase != Cursor::Phase::Answer) throw Error(ErrorCode::InvalidArgument, "think tokens do not end the think phase");
        std::vector<Token> legal;
        std::vector<std::size_t> feats;
        std::vector<double> probs;
        distribution(c, q, theta, legal, feats, probs);
        return probs;
    }

    // -- text -------------------------------------------------------------

    std::string render(std::span<const Token> tokens) const {
        std::string think, answer;
        for (Token t : tokens) {
            if (is_step(t)) {
                const auto& node = tree_->node(static_cast<std::size_t>(t) / 2);
                if (!think.empty()) think += ' ';
                think += t % 2 == 0 ? node.clause_positive : node.clause_negative;
            } else if (is_answer(t)) {
                answer = classes_[static_cast<std::size_t>(t) - num_steps_ - 1];
            }
        }
        std::string out;
        out.append(kThinkOpen).append(think).append(kThinkClose).append(kAnswerOpen).append(answer).append(kAnswerClose);
        return out;
    }

    /// Step tokens of a composed think text followed by END_THINK. Clauses are
    /// matched greedily (longest first); throws InvalidRecord when the text is
    /// not a legal walk.
    std::vector<Token> encode_think(std::string_view think) const {
        if (!clauses_unique_) throw Error(ErrorCode::InvalidArgument, "tree clauses are not unique; text cannot be encoded");
        std::vector<Token> tokens;
        std::size_t i = 0;
        while (i < think.size()) {
            bool matched = false;
            for (const auto& [clause, token] : clause_tokens_) {
                if (think.compare(i, clause.size(), clause) == 0 &&
                    (i + clause.size() == think.size() || think[i + clause.size()] == ' ')) {
                    tokens.push_back(token);
                    i += clause.size() + (i + clause.size() == think.size() ? 0 : 1);
                    matched = true;
                    break;
                }
            }
            if (!matched) throw Error(ErrorCode::InvalidRecord, "think text does not decompose into tree clauses");
        }
        tokens.push_back(end_think_token());
        Cursor c = start();
        std::vector<Token> legal;
        for (Token t : tokens) {
            legal_tokens(c, legal);
            if (std::find(legal.begin(), legal.end(), t) == legal.end())
                throw Error(ErrorCode::InvalidRecord, "think text is not a legal walk for this policy");
            advance(c, t);
        }
        return tokens;
    }

    std::vector<Token> encode(std::string_view think, std::string_view answer) const {
        auto tokens = encode_think(think);
        tokens.push_back(answer_token(class_of(answer)));
        return tokens;
    }

    // -- parameter layout -------------------------------------------------

    std::size_t genuine_feature(int modality, int code) const {
        return static_cast<std::size_t>(modality) * codes_ + static_cast<std::size_t>(code) % codes_;
    }
    std::size_t artifact_feature(int code) const { return 3 * codes_ + static_cast<std::size_t>(code) % codes_; }
    std::size_t bias_feature() const { return 4 * codes_; }
    std::size_t answer_context() const { return think_contexts_; }
    std::size_t index(std::size_t ctx, std::size_t feature, std::size_t token) const {
        return (ctx * features_ + feature) * vocab_ + token;
    }

private:

    void build_clause_index() {
        std::map<std::string, Token> seen;
        for (std::size_t i = 0; i < tree_->size(); ++i) {
            const auto& node = tree_->node(i);
            for (auto [text, token] : {std::pair{node.clause_positive, forward_token(i)},
                                       std::pair{node.clause_negative, reflect_token(i)}}) {
                if (!seen.emplace(text, token).second) clauses_unique_ = false;
            }
        }
        clause_tokens_.assign(seen.begin(), seen.end());
        std::stable_sort(clause_tokens_.begin(), clause_tokens_.end(),
                         [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    }

    const ReasoningTree* tree_;
    std::vector<std::string> classes_;
    std::map<std::string, std::size_t> class_index_;
    std::size_t codes_;
    std::size_t max_think_steps_;
    double temperature_;
    std::size_t num_steps_ = 0;
    std::size_t vocab_ = 0;
    std::size_t think_contexts_ = 0;
    std::size_t contexts_ = 0;
    std::size_t features_ = 0;
    std::vector<std::pair<std::string, Token>> clause_tokens_;
    bool clauses_unique_ = true;
};

static_assert(grpo::Policy<ToyPolicy>);

} // namespace pathforge::lab
