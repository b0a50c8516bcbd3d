#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "pathforge/error.hpp"
#include "pathforge/path_sampler.hpp"
#include "pathforge/taxonomy.hpp"

namespace pathforge {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline bool contains_tag(std::string_view text) {
    for (auto tag : std::array{kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
        if (text.find(tag) != std::string_view::npos) return true;
    }
    return false;
}

/// A reasoning text with its answer. Both bodies are non-empty and free of
/// the four tag strings, which is what makes render/parse a bijection.
class CoTRecord {
public:
    static CoTRecord make(std::string think, std::string answer, std::string path_id = {},
                          std::string source_sample = {}) {
        if (think.empty()) throw Error(ErrorCode::InvalidRecord, "think text is empty");
        if (answer.empty()) throw Error(ErrorCode::InvalidRecord, "answer is empty");
        if (contains_tag(think) || contains_tag(answer))
            throw Error(ErrorCode::InvalidRecord, "think or answer contains a reserved tag");
        CoTRecord r;
        r.think_ = std::move(think);
        r.answer_ = std::move(answer);
        r.path_id_ = std::move(path_id);
        r.source_sample_ = std::move(source_sample);
        return r;
    }

    const std::string& think() const noexcept { return think_; }
    const std::string& answer() const noexcept { return answer_; }
    const std::string& path_id() const noexcept { return path_id_; }
    const std::string& source_sample() const noexcept { return source_sample_; }

    CoTRecord with_answer(std::string answer) const {
        return make(think_, std::move(answer), path_id_, source_sample_);
    }
    CoTRecord with_think(std::string think, std::string path_id) const {
        return make(std::move(think), answer_, std::move(path_id), source_sample_);
    }

    friend bool operator==(const CoTRecord&, const CoTRecord&) = default;

private:
    CoTRecord() = default;

    std::string think_;
    std::string answer_;
    std::string path_id_;
    std::string source_sample_;
};

/// Clause text of each step (positive for forward, negative for reflect),
/// joined by single spaces. Throws StructuralMismatch if the path does not
/// walk the tree.
inline std::string compose_think(const ReasoningPath& path, const ReasoningTree& tree) {
    std::string out;
    std::size_t pos = tree.root_index();
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        const auto& step = path.steps[i];
        auto idx = tree.find(step.node);
        if (!idx) throw Error(ErrorCode::StructuralMismatch, "path references unknown node '" + step.node + "'");
        const auto& node = tree.node(*idx);
        if (step.direction == Direction::Forward) {
            if (tree.parent_of(*idx) != pos)
                throw Error(ErrorCode::StructuralMismatch, "forward step into '" + step.node + "' is not from its parent");
            pos = *idx;
        } else {
            if (*idx != pos || *idx == tree.root_index())
                throw Error(ErrorCode::StructuralMismatch, "reflect step out of '" + step.node + "' is not from it");
            pos = *tree.parent_of(*idx);
        }
        if (i > 0) out += ' ';
        out += step.direction == Direction::Forward ? node.clause_positive : node.clause_negative;
    }
    return out;
}

inline CoTRecord compose(const ReasoningPath& path, const ReasoningTree& tree, std::string answer,
                         std::string source_sample = {}) {
    return CoTRecord::make(compose_think(path, tree), std::move(answer), path_id(path), std::move(source_sample));
}

inline std::string render(const CoTRecord& record) {
    std::string out;
    out.reserve(record.think().size() + record.answer().size() + 32);
    out.append(kThinkOpen).append(record.think()).append(kThinkClose);
    out.append(kAnswerOpen).append(record.answer()).append(kAnswerClose);
    return out;
}

struct TaggedText {
    std::string think;
    std::string answer;
};

/// Exact-grammar parse: "<think>" T "</think><answer>" A "</answer>" with
/// non-empty tag-free bodies and nothing else.
inline std::optional<TaggedText> parse_tagged(std::string_view text) {
    if (!text.starts_with(kThinkOpen)) return std::nullopt;
    text.remove_prefix(kThinkOpen.size());
    const auto close = text.find(kThinkClose);
    if (close == std::string_view::npos) return std::nullopt;
    std::string_view think = text.substr(0, close);
    text.remove_prefix(close + kThinkClose.size());
    if (!text.starts_with(kAnswerOpen)) return std::nullopt;
    text.remove_prefix(kAnswerOpen.size());
    if (!text.ends_with(kAnswerClose)) return std::nullopt;
    std::string_view answer = text.substr(0, text.size() - kAnswerClose.size());
    if (think.empty() || answer.empty() || contains_tag(think) || contains_tag(answer)) return std::nullopt;
    return TaggedText{std::string(think), std::string(answer)};
}

} // namespace pathforge
