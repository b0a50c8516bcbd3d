#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/taxonomy.hpp"

namespace pathforge {

enum class Direction : std::uint8_t { Forward, Reflect };

inline const char* direction_symbol(Direction d) { return d == Direction::Forward ? "+" : "-"; }

struct PathStep {
    Direction direction = Direction::Forward;
    std::string node; // for Reflect: the node being departed
    std::string name;

    friend bool operator==(const PathStep&, const PathStep&) = default;
    friend auto operator<=>(const PathStep& a, const PathStep& b) {
        return std::tie(a.node, a.direction, a.name) <=> std::tie(b.node, b.direction, b.name);
    }
};

struct ReasoningPath {
    std::vector<PathStep> steps;
    std::string target;

    friend bool operator==(const ReasoningPath&, const ReasoningPath&) = default;
    friend auto operator<=>(const ReasoningPath& a, const ReasoningPath& b) {
        return std::tie(a.steps, a.target) <=> std::tie(b.steps, b.target);
    }
};

enum class FlagScope { PerPath, GlobalLiteral };

/// Requesting this many paths asks for every valid path.
inline constexpr std::size_t kExhaustive = std::numeric_limits<std::size_t>::max();

struct SamplerConfig {
    double alpha = 2.0;
    std::size_t paths = 50;
    std::uint64_t seed = 0;
    FlagScope flag_scope = FlagScope::PerPath;
};

/// floor(alpha * (D - 1)). The epsilon absorbs binary rounding of products
/// like 1.1 * 10 that are integral in exact arithmetic.
inline std::size_t path_length_bound(const ReasoningTree& tree, double alpha) {
    const double raw = alpha * static_cast<double>(tree.depth() - 1);
    if (raw <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(raw + 1e-9));
}

namespace detail {

struct IndexedStep {
    Direction direction;
    std::size_t node;
};

inline ReasoningPath materialize(const ReasoningTree& tree, const std::vector<IndexedStep>& steps,
                                 const std::string& target) {
    ReasoningPath path;
    path.target = target;
    path.steps.reserve(steps.size());
    for (const auto& s : steps) path.steps.push_back({s.direction, tree.node(s.node).id, tree.node(s.node).name});
    return path;
}

inline void require_target(const ReasoningTree& tree, const std::string& label) {
    if (leaves_with_name(tree, label).empty())
        throw Error(ErrorCode::NoSuchLeaf, "no leaf is named '" + label + "'");
}

} // namespace detail

/**
 * Positive-negative random path sampling.
 *
 * Depth-first search over (position, path) states starting at the root with
 * an empty path. From a position the walk may step forward into any child not
 * yet entered, or reflect back to the parent if the current node has not yet
 * been reflected out of. States whose path already has L_max steps are
 * discarded; a state sitting on a leaf named `label` (with a non-empty path)
 * is emitted and not expanded. Successors are shuffled with the seeded
 * generator before being pushed; pops are LIFO.
 *
 * With FlagScope::PerPath the enter/reflect flags belong to each search state,
 * so every emitted path uses each (direction, node) pair at most once. With
 * FlagScope::GlobalLiteral a single flag table is shared by the whole search
 * and flags are set at push time.
 */
inline std::vector<ReasoningPath> sample_paths(const ReasoningTree& tree, const std::string& label,
                                               const SamplerConfig& config) {
    if (!(config.alpha > 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be greater than 1");
    detail::require_target(tree, label);
    const std::size_t l_max = path_length_bound(tree, config.alpha);
    if (l_max == 0) throw Error(ErrorCode::DegenerateTree, "path length bound is 0 for a single-node tree");

    struct State {
        std::size_t position;
        std::vector<detail::IndexedStep> steps;
        std::vector<bool> entered;
        std::vector<bool> reflected;
    };

    const std::size_t n = tree.size();
    const bool per_path = config.flag_scope == FlagScope::PerPath;
    std::vector<bool> global_entered(n, false);
    std::vector<bool> global_reflected(n, false);

    Rng rng(config.seed);
    std::vector<ReasoningPath> found;
    std::vector<State> stack;
    stack.push_back({tree.root_index(), {}, per_path ? std::vector<bool>(n, false) : std::vector<bool>{},
                     per_path ? std::vector<bool>(n, false) : std::vector<bool>{}});

    struct Successor {
        Direction direction;
        std::size_t node; // node named by the step
    };
    std::vector<Successor> successors;

    while (!stack.empty()) {
        if (found.size() >= config.paths) break;
        State state = std::move(stack.back());
        stack.pop_back();
        if (state.steps.size() >= l_max) continue;
        const std::size_t pos = state.position;
        if (!state.steps.empty() && tree.is_leaf(pos) && tree.node(pos).name == label) {
            found.push_back(detail::materialize(tree, state.steps, label));
            continue;
        }

        const auto& entered = per_path ? state.entered : global_entered;
        const auto& reflected = per_path ? state.reflected : global_reflected;
        successors.clear();
        for (std::size_t c : tree.children_of(pos)) {
            if (!entered[c]) successors.push_back({Direction::Forward, c});
        }
        if (pos != tree.root_index() && !reflected[pos]) successors.push_back({Direction::Reflect, pos});
        rng.shuffle(successors);

        for (const auto& s : successors) {
            State next;
            next.steps = state.steps;
            next.steps.push_back({s.direction, s.node});
            next.position = s.direction == Direction::Forward ? s.node : *tree.parent_of(s.node);
            if (per_path) {
                next.entered = state.entered;
                next.reflected = state.reflected;
                (s.direction == Direction::Forward ? next.entered : next.reflected)[s.node] = true;
            } else {
                (s.direction == Direction::Forward ? global_entered : global_reflected)[s.node] = true;
            }
            stack.push_back(std::move(next));
        }
    }
    return found;
}

/// Exhaustive enumeration of per-path-scoped walks, for testing. Refuses trees
/// with more than 16 nodes. Output is sorted and duplicate-free.
inline std::vector<ReasoningPath> enumerate_paths(const ReasoningTree& tree, const std::string& label,
                                                  double alpha) {
    if (tree.size() > 16) throw Error(ErrorCode::OracleRefused, "tree has more than 16 nodes");
    if (!(alpha > 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be greater than 1");
    detail::require_target(tree, label);
    const std::size_t l_max = path_length_bound(tree, alpha);
    if (l_max == 0) throw Error(ErrorCode::DegenerateTree, "path length bound is 0 for a single-node tree");

    std::vector<ReasoningPath> out;
    std::vector<detail::IndexedStep> steps;
    std::vector<bool> entered(tree.size(), false);
    std::vector<bool> reflected(tree.size(), false);

    auto walk = [&](auto&& self, std::size_t pos) -> void {
        if (!steps.empty() && tree.is_leaf(pos) && tree.node(pos).name == label) {
            out.push_back(detail::materialize(tree, steps, label));
            return;
        }
        // Only walks that can still emit (length < l_max after the next step)
        // are worth extending.
        if (steps.size() + 1 >= l_max) return;
        for (std::size_t c : tree.children_of(pos)) {
            if (entered[c]) continue;
            entered[c] = true;
            steps.push_back({Direction::Forward, c});
            self(self, c);
            steps.pop_back();
            entered[c] = false;
        }
        if (pos != tree.root_index() && !reflected[pos]) {
            reflected[pos] = true;
            steps.push_back({Direction::Reflect, pos});
            self(self, *tree.parent_of(pos));
            steps.pop_back();
            reflected[pos] = false;
        }
    };
    walk(walk, tree.root_index());

    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Replays a path against the tree. Returns a diagnostic for the first broken
/// invariant, or nullopt if the path is valid for the given bound.
inline std::optional<std::string> check_path(const ReasoningTree& tree, const ReasoningPath& path,
                                             std::size_t l_max, bool unique_steps = true) {
    if (path.steps.empty()) return "path is empty";
    if (path.steps.size() >= l_max) return "path length " + std::to_string(path.steps.size()) + " >= bound";
    std::vector<bool> entered(tree.size(), false);
    std::vector<bool> reflected(tree.size(), false);
    std::size_t pos = tree.root_index();
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        const auto& step = path.steps[i];
        auto idx = tree.find(step.node);
        const std::string where = "step " + std::to_string(i) + ": ";
        if (!idx) return where + "unknown node '" + step.node + "'";
        if (tree.node(*idx).name != step.name) return where + "name does not match node '" + step.node + "'";
        if (step.direction == Direction::Forward) {
            if (tree.parent_of(*idx) != pos) return where + "forward step is not into a child";
            if (unique_steps && entered[*idx]) return where + "repeated forward step";
            entered[*idx] = true;
            pos = *idx;
        } else {
            if (*idx != pos) return where + "reflect step does not depart the current position";
            if (*idx == tree.root_index()) return where + "reflect from the root";
            if (unique_steps && reflected[*idx]) return where + "repeated reflect step";
            reflected[*idx] = true;
            pos = *tree.parent_of(*idx);
        }
    }
    if (path.steps.back().direction != Direction::Forward) return "final step is not forward";
    if (!tree.is_leaf(pos)) return "path does not end on a leaf";
    if (tree.node(pos).name != path.target) return "path ends on a leaf not named the target";
    return std::nullopt;
}

inline nlohmann::json path_to_json(const ReasoningPath& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : path.steps) arr.push_back({{"dir", direction_symbol(s.direction)}, {"node", s.node}, {"name", s.name}});
    return arr;
}

inline ReasoningPath path_from_json(const nlohmann::json& arr, std::string target = {}) {
    if (!arr.is_array()) throw Error(ErrorCode::InvalidArgument, "path must be a JSON array");
    ReasoningPath path;
    path.target = std::move(target);
    for (const auto& item : arr) {
        const auto dir = item.at("dir").get<std::string>();
        if (dir != "+" && dir != "-") throw Error(ErrorCode::InvalidArgument, "step dir must be '+' or '-'");
        path.steps.push_back({dir == "+" ? Direction::Forward : Direction::Reflect, item.at("node").get<std::string>(),
                              item.at("name").get<std::string>()});
    }
    if (path.target.empty() && !path.steps.empty()) path.target = path.steps.back().name;
    return path;
}

/// Stable 64-bit identity of a path's step sequence, as 16 hex digits.
inline std::string path_id(const ReasoningPath& path) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(path_to_json(path).dump())));
    return buf;
}

} // namespace pathforge
