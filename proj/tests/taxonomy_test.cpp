#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace pathforge;
using pathforge::testing::make_node;

namespace {

ErrorCode load_error(const std::string& text) {
    try {
        load_tree(text);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "tree loaded: " << text;
    return ErrorCode::Io;
}

std::string message_of(const std::string& text) {
    try {
        load_tree(text);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

nlohmann::json fixture_json() { return nlohmann::json::parse(kFasTreeJson); }

} // namespace

TEST(Taxonomy, MinimalTwoNodeFile) {
    const auto tree = load_tree(R"({"root":"r","nodes":[
        {"id":"r","name":"face","clause_positive":"p","clause_negative":"n","children":["l"]},
        {"id":"l","name":"real","clause_positive":"p2","clause_negative":"n2","children":[]}]})");
    EXPECT_EQ(tree.size(), 2u);
    EXPECT_EQ(max_depth(tree), 2u);
    EXPECT_EQ(tree.root(), "r");
    EXPECT_EQ(tree.parent_of(tree.index_of("l")), tree.index_of("r"));
}

TEST(Taxonomy, FixtureShape) {
    const auto tree = load_tree(kFasTreeJson);
    EXPECT_EQ(max_depth(tree), 4u);
    EXPECT_EQ(tree.size(), 22u);
    EXPECT_EQ(leaves_with_name(tree, "print attack").size(), 3u);
    EXPECT_EQ(leaves_with_name(tree, "real").size(), 3u);
    EXPECT_TRUE(leaves_with_name(tree, "nonexistent").empty());
    // Internal nodes never count as targets even if a leaf shares the name.
    EXPECT_TRUE(leaves_with_name(tree, "2D attack").empty());
}

TEST(Taxonomy, LeavesWithNameOnTwoNodeTree) {
    const auto tree = pathforge::testing::two_node_tree();
    EXPECT_EQ(leaves_with_name(tree, "real"), std::vector<std::string>{"leaf"});
}

TEST(Taxonomy, DepthExamples) {
    EXPECT_EQ(max_depth(ReasoningTree::build("r", {make_node("r", "root")})), 1u);
    EXPECT_EQ(max_depth(pathforge::testing::chain_tree()), 3u);
    EXPECT_EQ(max_depth(pathforge::testing::binary7_tree()), 3u);
}

TEST(Taxonomy, DepthIsOnePlusDeepestChild) {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto tree = pathforge::testing::random_tree(rng, 2 + rng.index(14));
        auto d = [&](auto&& self, std::size_t v) -> std::size_t {
            std::size_t best = 0;
            for (std::size_t c : tree.children_of(v)) best = std::max(best, self(self, c));
            return best + 1;
        };
        EXPECT_EQ(max_depth(tree), d(d, tree.root_index()));
        EXPECT_GE(max_depth(tree), 2u);
    }
}

TEST(Taxonomy, SelfChildIsACycle) {
    const auto text = R"({"root":"r","nodes":[
        {"id":"r","name":"face","clause_positive":"p","clause_negative":"n","children":["r"]}]})";
    EXPECT_EQ(load_error(text), ErrorCode::Cycle);
    EXPECT_NE(message_of(text).find("'r'"), std::string::npos);
}

TEST(Taxonomy, DistinctDiagnostics) {
    auto doc = fixture_json();
    doc["nodes"].push_back(doc["nodes"][3]);
    EXPECT_EQ(load_error(doc.dump()), ErrorCode::DuplicateId);

    doc = fixture_json();
    doc["nodes"][2]["clause_negative"] = "";
    EXPECT_EQ(load_error(doc.dump()), ErrorCode::EmptyClause);

    doc = fixture_json();
    doc["nodes"].push_back({{"id", "orphan"}, {"name", "o"}, {"clause_positive", "p"}, {"clause_negative", "n"}});
    EXPECT_EQ(load_error(doc.dump()), ErrorCode::MultipleRoots);
    EXPECT_NE(message_of(doc.dump()).find("orphan"), std::string::npos);

    EXPECT_EQ(load_error("{not json"), ErrorCode::MalformedTree);
    EXPECT_EQ(load_error(R"({"root":"r"})"), ErrorCode::MalformedTree);
}

TEST(Taxonomy, TwoNodeLoopUnreachableFromRootIsACycle) {
    const auto text = R"({"root":"r","nodes":[
        {"id":"r","name":"face","clause_positive":"p","clause_negative":"n","children":[]},
        {"id":"a","name":"a","clause_positive":"p","clause_negative":"n","children":["b"]},
        {"id":"b","name":"b","clause_positive":"p","clause_negative":"n","children":["a"]}]})";
    EXPECT_EQ(load_error(text), ErrorCode::Cycle);
}

TEST(Taxonomy, CanonicalFixtureFileMatchesSave) {
    const auto on_disk = pathforge::testing::read_text(std::filesystem::path(PATHFORGE_SOURCE_DIR) / "data/fas_tree.json");
    EXPECT_EQ(on_disk, std::string(kFasTreeJson));
    EXPECT_EQ(save_tree(load_tree(on_disk)), on_disk);
}

TEST(Taxonomy, RoundTripIsCanonical) {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const auto tree = pathforge::testing::random_tree(rng, 1 + rng.index(16));
        const auto once = save_tree(tree);
        EXPECT_EQ(save_tree(load_tree(once)), once);
    }
    // Node order in the source does not matter.
    auto doc = fixture_json();
    std::reverse(doc["nodes"].begin(), doc["nodes"].end());
    EXPECT_EQ(save_tree(load_tree(doc.dump())), std::string(kFasTreeJson));
}

TEST(Taxonomy, FuzzedMutationsAreRejected) {
    Rng rng(99);
    const auto base = fixture_json();
    const std::size_t n = base["nodes"].size();
    for (int trial = 0; trial < 300; ++trial) {
        auto doc = base;
        auto& nodes = doc["nodes"];
        const std::size_t k = rng.index(n);
        switch (trial % 3) {
        case 0: { // drop the parent link of a non-root node
            const std::string victim = nodes[k]["id"];
            if (victim == base["root"].get<std::string>()) continue;
            for (auto& node : nodes) {
                auto& ch = node["children"];
                ch.erase(std::remove(ch.begin(), ch.end(), victim), ch.end());
            }
            break;
        }
        case 1: // duplicate an id
            nodes[k]["id"] = nodes[(k + 1 + rng.index(n - 1)) % n]["id"];
            break;
        case 2: // empty one clause
            nodes[k][rng.bernoulli(0.5) ? "clause_positive" : "clause_negative"] = "";
            break;
        }
        EXPECT_THROW(load_tree(doc.dump()), Error) << "mutation " << trial % 3 << " on node " << k;
    }
}
