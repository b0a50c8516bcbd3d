#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"

namespace pathforge {

struct TreeNode {
    std::string id;
    std::string name;
    std::string clause_positive;
    std::string clause_negative;
    std::vector<std::string> children;
    std::optional<std::string> parent; // derived on load, never serialized
};

/**
 * Reasoning taxonomy: a rooted tree whose nodes carry one clause for a forward
 * step into the node and one for a reflection back out of it.
 *
 * Nodes are stored sorted by id, so node indices are stable for a given tree
 * regardless of the order nodes appeared in the source file. The tree is
 * immutable once built.
 */
class ReasoningTree {
public:
    /// Validates and indexes the node table. Parent links are recomputed from
    /// the child lists; any parent already set on the input is ignored.
    static ReasoningTree build(std::string root, std::vector<TreeNode> nodes);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    const TreeNode& node(std::size_t index) const { return nodes_.at(index); }

    const std::string& root() const noexcept { return nodes_[root_].id; }
    std::size_t root_index() const noexcept { return root_; }

    /// Longest root-to-leaf path, counted in nodes.
    std::size_t depth() const noexcept { return depth_; }

    std::optional<std::size_t> find(std::string_view id) const {
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                                   [](const TreeNode& n, std::string_view key) { return n.id < key; });
        if (it == nodes_.end() || it->id != id) return std::nullopt;
        return static_cast<std::size_t>(it - nodes_.begin());
    }

    std::size_t index_of(std::string_view id) const {
        auto idx = find(id);
        if (!idx) throw Error(ErrorCode::StructuralMismatch, "unknown node id '" + std::string(id) + "'");
        return *idx;
    }

    std::span<const std::size_t> children_of(std::size_t index) const { return child_index_[index]; }
    std::optional<std::size_t> parent_of(std::size_t index) const {
        if (parent_index_[index] == npos) return std::nullopt;
        return parent_index_[index];
    }
    bool is_leaf(std::size_t index) const { return child_index_[index].empty(); }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::vector<TreeNode> nodes_;
    std::vector<std::vector<std::size_t>> child_index_;
    std::vector<std::size_t> parent_index_;
    std::size_t root_ = 0;
    std::size_t depth_ = 0;
};

namespace detail {

inline std::size_t subtree_depth(const std::vector<std::vector<std::size_t>>& children, std::size_t root) {
    // Iterative post-order so deep chains cannot overflow the stack.
    std::vector<std::size_t> depth(children.size(), 0);
    std::vector<std::pair<std::size_t, bool>> stack{{root, false}};
    while (!stack.empty()) {
        auto [v, expanded] = stack.back();
        stack.pop_back();
        if (!expanded) {
            stack.push_back({v, true});
            for (std::size_t c : children[v]) stack.push_back({c, false});
            continue;
        }
        std::size_t best = 0;
        for (std::size_t c : children[v]) best = std::max(best, depth[c]);
        depth[v] = best + 1;
    }
    return depth[root];
}

} // namespace detail

inline ReasoningTree ReasoningTree::build(std::string root, std::vector<TreeNode> nodes) {
    if (nodes.empty()) throw Error(ErrorCode::MalformedTree, "tree has no nodes");

    for (const auto& n : nodes) {
        if (n.id.empty()) throw Error(ErrorCode::MalformedTree, "node with empty id");
        if (n.clause_positive.empty())
            throw Error(ErrorCode::EmptyClause, "node '" + n.id + "' has an empty clause_positive");
        if (n.clause_negative.empty())
            throw Error(ErrorCode::EmptyClause, "node '" + n.id + "' has an empty clause_negative");
    }

    std::stable_sort(nodes.begin(), nodes.end(), [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (nodes[i].id == nodes[i - 1].id)
            throw Error(ErrorCode::DuplicateId, "duplicate node id '" + nodes[i].id + "'");
    }

    ReasoningTree tree;
    tree.nodes_ = std::move(nodes);
    const std::size_t n = tree.nodes_.size();
    tree.child_index_.assign(n, {});
    tree.parent_index_.assign(n, npos);

    auto root_idx = tree.find(root);
    if (!root_idx) throw Error(ErrorCode::MalformedTree, "root '" + root + "' is not a node");
    tree.root_ = *root_idx;

    for (std::size_t i = 0; i < n; ++i) {
        auto& node = tree.nodes_[i];
        node.parent.reset();
        for (const auto& child : node.children) {
            auto c = tree.find(child);
            if (!c)
                throw Error(ErrorCode::MalformedTree,
                            "node '" + node.id + "' lists unknown child '" + child + "'");
            if (*c == i) throw Error(ErrorCode::Cycle, "node '" + node.id + "' lists itself as a child");
            if (tree.parent_index_[*c] != npos) {
                const auto& other = tree.nodes_[tree.parent_index_[*c]].id;
                throw Error(ErrorCode::MalformedTree,
                            "node '" + child + "' is listed as a child more than once (by '" + other +
                                "' and '" + node.id + "')");
            }
            tree.parent_index_[*c] = i;
            tree.child_index_[i].push_back(*c);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (tree.parent_index_[i] != npos) tree.nodes_[i].parent = tree.nodes_[tree.parent_index_[i]].id;
    }

    if (tree.parent_index_[tree.root_] != npos)
        throw Error(ErrorCode::Cycle, "root '" + tree.root() + "' is listed as a child of '" +
                                          tree.nodes_[tree.parent_index_[tree.root_]].id + "'");
    for (std::size_t i = 0; i < n; ++i) {
        if (i != tree.root_ && tree.parent_index_[i] == npos)
            throw Error(ErrorCode::MultipleRoots,
                        "node '" + tree.nodes_[i].id + "' has no parent but is not the root '" + tree.root() + "'");
    }

    // Every node has exactly one parent here, so anything unreachable from the
    // root sits on a cycle.
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{tree.root_};
    seen[tree.root_] = true;
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t c : tree.child_index_[v]) {
            if (!seen[c]) {
                seen[c] = true;
                stack.push_back(c);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i]) throw Error(ErrorCode::Cycle, "node '" + tree.nodes_[i].id + "' lies on a cycle");
    }

    tree.depth_ = detail::subtree_depth(tree.child_index_, tree.root_);
    return tree;
}

inline std::size_t max_depth(const ReasoningTree& tree) { return tree.depth(); }

/// Ids of leaves whose name equals `label`, in id order.
inline std::vector<std::string> leaves_with_name(const ReasoningTree& tree, std::string_view label) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.is_leaf(i) && tree.node(i).name == label) out.push_back(tree.node(i).id);
    }
    return out;
}

inline ReasoningTree tree_from_json(const nlohmann::json& doc) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::MalformedTree, what); };
    if (!doc.is_object()) fail("top level must be an object");
    if (!doc.contains("root") || !doc["root"].is_string()) fail("missing string field 'root'");
    if (!doc.contains("nodes") || !doc["nodes"].is_array()) fail("missing array field 'nodes'");

    std::vector<TreeNode> nodes;
    std::size_t position = 0;
    for (const auto& item : doc["nodes"]) {
        const std::string where = "nodes[" + std::to_string(position++) + "]";
        if (!item.is_object()) fail(where + " is not an object");
        if (!item.contains("id") || !item["id"].is_string()) fail(where + " has no string 'id'");
        TreeNode node;
        node.id = item["id"].get<std::string>();
        for (const char* key : {"name", "clause_positive", "clause_negative"}) {
            if (!item.contains(key) || !item[key].is_string())
                fail("node '" + node.id + "' has no string '" + key + "'");
        }
        node.name = item["name"].get<std::string>();
        node.clause_positive = item["clause_positive"].get<std::string>();
        node.clause_negative = item["clause_negative"].get<std::string>();
        if (item.contains("children")) {
            if (!item["children"].is_array()) fail("node '" + node.id + "' children is not an array");
            for (const auto& c : item["children"]) {
                if (!c.is_string()) fail("node '" + node.id + "' has a non-string child id");
                node.children.push_back(c.get<std::string>());
            }
        }
        nodes.push_back(std::move(node));
    }
    return ReasoningTree::build(doc["root"].get<std::string>(), std::move(nodes));
}

inline ReasoningTree load_tree(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedTree, std::string("invalid JSON: ") + e.what());
    }
    return tree_from_json(doc);
}

inline ReasoningTree load_tree(std::istream& in) {
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return load_tree(std::string_view(text));
}

inline nlohmann::json tree_to_json(const ReasoningTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes()) {
        nodes.push_back({{"id", n.id},
                         {"name", n.name},
                         {"clause_positive", n.clause_positive},
                         {"clause_negative", n.clause_negative},
                         {"children", n.children}});
    }
    return {{"root", tree.root()}, {"nodes", std::move(nodes)}};
}

/// Canonical form: nodes sorted by id, object keys sorted, two-space indent,
/// trailing newline.
inline std::string save_tree(const ReasoningTree& tree) { return tree_to_json(tree).dump(2) + "\n"; }

} // namespace pathforge
