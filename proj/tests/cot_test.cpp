#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace pathforge;
namespace pt = pathforge::testing;

namespace {

ReasoningTree clause_tree() {
    return ReasoningTree::build("r", {
                                         {"r", "face", "Start.", "Back at start.", {"a", "b"}, {}},
                                         {"a", "print attack", "The RGB face shows paper texture.", "No paper texture.", {}, {}},
                                         {"b", "real", "Skin looks natural.", "Skin cue is weak.", {}, {}},
                                     });
}

} // namespace

TEST(Compose, SingleForwardClause) {
    const auto tree = clause_tree();
    const ReasoningPath p{{{Direction::Forward, "a", "print attack"}}, "print attack"};
    const auto rec = compose(p, tree, "print attack", "s1");
    EXPECT_EQ(rec.think(), "The RGB face shows paper texture.");
    EXPECT_EQ(rec.answer(), "print attack");
    EXPECT_EQ(rec.path_id(), path_id(p));
    EXPECT_EQ(rec.source_sample(), "s1");
}

TEST(Compose, DirectionSelectsTemplate) {
    const auto tree = clause_tree();
    const ReasoningPath p{{{Direction::Forward, "a", "print attack"},
                           {Direction::Reflect, "a", "print attack"},
                           {Direction::Forward, "b", "real"}},
                          "real"};
    EXPECT_EQ(compose_think(p, tree), "The RGB face shows paper texture. No paper texture. Skin looks natural.");
}

TEST(Compose, UnknownNodeIsAStructuralMismatch) {
    const ReasoningPath p{{{Direction::Forward, "zz", "real"}}, "real"};
    try {
        compose(p, clause_tree(), "real");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StructuralMismatch);
    }
    const ReasoningPath disconnected{{{Direction::Reflect, "a", "print attack"}}, "print attack"};
    EXPECT_THROW(compose(disconnected, clause_tree(), "print attack"), Error);
}

TEST(Render, ExactBytes) {
    EXPECT_EQ(render(CoTRecord::make("x", "real")), "<think>x</think><answer>real</answer>");
}

TEST(CoTRecord, RejectsEmptyOrTaggedBodies) {
    EXPECT_THROW(CoTRecord::make("", "real"), Error);
    EXPECT_THROW(CoTRecord::make("x", ""), Error);
    EXPECT_THROW(CoTRecord::make("a <think> b", "real"), Error);
    EXPECT_THROW(CoTRecord::make("x", "real</answer>"), Error);
}

TEST(Compose, GoldenFixtureRecords) {
    const auto tree = load_tree(kFasTreeJson);
    std::string actual;
    const char* labels[] = {"real", "print attack", "replay attack", "mask attack"};
    for (std::size_t i = 0; i < 10; ++i) {
        const std::string label = labels[i % 4];
        const auto paths = sample_paths(tree, label, {2.0, 10, 1000 + i, FlagScope::PerPath});
        const auto& path = paths[i % paths.size()];
        actual += render(compose(path, tree, label)) + "\n";
    }
    EXPECT_EQ(actual, pt::golden("golden_cot_records.txt", actual));
}

TEST(Compose, InjectiveOnFixturePaths) {
    const auto tree = load_tree(kFasTreeJson);
    std::map<std::string, ReasoningPath> seen;
    for (const char* label : {"real", "print attack", "replay attack", "mask attack"}) {
        for (const auto& p : sample_paths(tree, label, {3.0, kExhaustive, 0, FlagScope::PerPath})) {
            auto [it, fresh] = seen.emplace(compose_think(p, tree), p);
            EXPECT_TRUE(fresh || it->second == p);
        }
    }
    EXPECT_GT(seen.size(), 200u);
}

TEST(ParseTagged, RoundTrip) {
    Rng rng(4);
    const std::string alphabet = "abc <>/xyz.";
    for (int i = 0; i < 500; ++i) {
        std::string think, answer;
        for (std::size_t k = 1 + rng.index(20); k > 0; --k) think += alphabet[rng.index(alphabet.size())];
        for (std::size_t k = 1 + rng.index(8); k > 0; --k) answer += alphabet[rng.index(alphabet.size())];
        if (contains_tag(think) || contains_tag(answer)) continue;
        const auto text = render(CoTRecord::make(think, answer));
        const auto parsed = parse_tagged(text);
        ASSERT_TRUE(parsed) << text;
        EXPECT_EQ(render(CoTRecord::make(parsed->think, parsed->answer)), text);
    }
}

TEST(ParseTagged, MutationsAreRejected) {
    const std::string good = "<think>look closely</think><answer>real</answer>";
    ASSERT_TRUE(parse_tagged(good));
    const std::vector<std::string> tags{"<think>", "</think>", "<answer>", "</answer>"};
    for (const auto& tag : tags) {
        const auto at = good.find(tag);
        std::string deleted = good;
        deleted.erase(at, tag.size());
        EXPECT_FALSE(parse_tagged(deleted)) << deleted;
        std::string duplicated = good;
        duplicated.insert(at, tag);
        EXPECT_FALSE(parse_tagged(duplicated)) << duplicated;
    }
    EXPECT_FALSE(parse_tagged("<answer>real</answer><think>look closely</think>"));
    EXPECT_FALSE(parse_tagged(" " + good));
    EXPECT_FALSE(parse_tagged(good + "\n"));
    EXPECT_FALSE(parse_tagged("<think></think><answer>real</answer>"));
}
