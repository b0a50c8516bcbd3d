#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace pathforge;
namespace pt = pathforge::testing;

namespace {

const ReasoningTree& fixture() {
    static const ReasoningTree tree = load_tree(kFasTreeJson);
    return tree;
}

std::vector<SampleRecord> manifest(std::size_t n) {
    const char* labels[] = {"real", "print attack", "replay attack", "mask attack"};
    std::vector<SampleRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "s%04zu", i);
        out.push_back(pt::sample(id, labels[i % 4]));
    }
    return out;
}

std::vector<TrainingRecord> hundred_records() {
    auto records = forge(manifest(20), fixture(), {2.0, 5, 3, FlagScope::PerPath}).records;
    records.erase(records.begin() + 100, records.end());
    return records;
}

std::vector<std::string> answers_of(const std::vector<TrainingRecord>& r) {
    std::vector<std::string> out;
    for (const auto& x : r) out.push_back(x.cot.answer());
    return out;
}

std::vector<std::string> thinks_of(const std::vector<TrainingRecord>& r) {
    std::vector<std::string> out;
    for (const auto& x : r) out.push_back(x.cot.think());
    return out;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Seeded Fisher-Yates written against the raw engine; item perm[k] lands in
// slot k.
std::vector<std::size_t> fisher_yates_oracle(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 engine(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % i;
        std::uint64_t x;
        do {
            x = engine();
        } while (x >= limit);
        std::swap(perm[i - 1], perm[x % i]);
    }
    return perm;
}

} // namespace

TEST(Forge, SingleSampleSinglePath) {
    const auto result = forge({pt::sample("a", "real")}, fixture(), {2.0, 1, 0, FlagScope::PerPath});
    ASSERT_EQ(result.records.size(), 1u);
    EXPECT_EQ(result.records[0].cot.answer(), "real");
    EXPECT_EQ(result.records[0].sample_id, "a");
    EXPECT_EQ(result.records[0].provenance.path_id, result.records[0].cot.path_id());
    EXPECT_TRUE(result.report.errors.empty());
}

TEST(Forge, PartialFailureIsReported) {
    const auto result = forge({pt::sample("a", "real"), pt::sample("b", "no such label")}, fixture(),
                              {2.0, 3, 0, FlagScope::PerPath});
    EXPECT_EQ(result.records.size(), 3u);
    ASSERT_EQ(result.report.errors.size(), 1u);
    EXPECT_EQ(result.report.errors[0].sample_id, "b");
    EXPECT_NE(result.report.errors[0].message.find("NoSuchLeaf"), std::string::npos);
}

TEST(Forge, CountIsSumOfMinAndShortfallsReported) {
    const auto samples = manifest(40);
    for (double alpha : {2.0, 3.0}) {
        for (std::size_t n : {std::size_t{1}, std::size_t{10}, std::size_t{50}}) {
            const auto result = forge(samples, fixture(), {alpha, n, 1, FlagScope::PerPath});
            std::size_t expected = 0, short_count = 0;
            for (const auto& s : samples) {
                const auto avail = sample_paths(fixture(), s.label, {alpha, kExhaustive, 0, FlagScope::PerPath}).size();
                expected += std::min(n, avail);
                short_count += avail < n ? 1 : 0;
            }
            EXPECT_EQ(result.records.size(), expected);
            EXPECT_EQ(result.report.records_written, expected);
            EXPECT_EQ(result.report.shortfalls.size(), short_count);
        }
    }
}

TEST(Forge, IndependentOfJobsAndSampleOrder) {
    auto samples = manifest(64);
    const SamplerConfig cfg{3.0, 20, 9, FlagScope::PerPath};
    const auto serial = forge(samples, fixture(), cfg, 1).records;
    EXPECT_EQ(forge(samples, fixture(), cfg, 6).records, serial);
    std::reverse(samples.begin(), samples.end());
    EXPECT_EQ(forge(samples, fixture(), cfg, 3).records, serial);
    EXPECT_TRUE(std::is_sorted(serial.begin(), serial.end(), [](const auto& a, const auto& b) {
        return std::tie(a.sample_id, a.provenance.path_id) < std::tie(b.sample_id, b.provenance.path_id);
    }));
}

TEST(Forge, ZeroPathsGivesNoRecords) {
    const auto result = forge(manifest(8), fixture(), {2.0, 0, 0, FlagScope::PerPath});
    EXPECT_TRUE(result.records.empty());
    EXPECT_TRUE(result.report.errors.empty());
}

TEST(ShuffleAnswers, SingleRecordPermutationIsIdentity) {
    auto records = forge({pt::sample("a", "real")}, fixture(), {2.0, 1, 0, FlagScope::PerPath}).records;
    const auto out = shuffle_answers(records, 5);
    EXPECT_EQ(out[0].cot, records[0].cot);
    ASSERT_EQ(out[0].provenance.transforms.size(), 1u);
    EXPECT_EQ(out[0].provenance.transforms[0], (TransformTag{"shuffle_answers", 5, "permutation"}));
}

TEST(ShuffleAnswers, TwoRecordDerangementSwaps) {
    auto records = forge({pt::sample("a", "real"), pt::sample("b", "mask attack")}, fixture(),
                         {2.0, 1, 0, FlagScope::PerPath})
                       .records;
    const auto out = shuffle_answers(records, 1, ShuffleMode::Derangement);
    EXPECT_EQ(out[0].cot.answer(), "mask attack");
    EXPECT_EQ(out[1].cot.answer(), "real");
    EXPECT_EQ(thinks_of(out), thinks_of(records));
}

TEST(ShuffleAnswers, DerangementInfeasibility) {
    auto same = forge({pt::sample("a", "real"), pt::sample("b", "real")}, fixture(), {2.0, 1, 0, FlagScope::PerPath}).records;
    try {
        shuffle_answers(same, 1, ShuffleMode::Derangement);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleDerangement);
    }
}

TEST(ShuffleAnswers, PreservesMultisetAndThinks) {
    const auto records = hundred_records();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (auto mode : {ShuffleMode::Permutation, ShuffleMode::Derangement}) {
            const auto out = shuffle_answers(records, seed, mode);
            EXPECT_EQ(sorted(answers_of(out)), sorted(answers_of(records)));
            EXPECT_EQ(thinks_of(out), thinks_of(records));
            if (mode == ShuffleMode::Derangement) {
                for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NE(out[i].cot.answer(), records[i].cot.answer());
            }
        }
    }
}

TEST(ShuffleAnswers, GoldenPermutationSeedSeven) {
    const auto out = shuffle_answers(hundred_records(), 7, ShuffleMode::Permutation);
    std::string actual;
    for (const auto& r : out) actual += r.sample_id + "\t" + r.cot.path_id() + "\t" + r.cot.answer() + "\n";
    EXPECT_EQ(actual, pt::golden("golden_shuffle_answers_seed7.tsv", actual));
}

TEST(ShufflePaths, TwoRecordsSwapThinks) {
    auto records = forge({pt::sample("a", "real"), pt::sample("b", "mask attack")}, fixture(),
                         {2.0, 1, 0, FlagScope::PerPath})
                       .records;
    const auto perm = shuffle_permutation(2, 3);
    const auto out = shuffle_paths(records, 3);
    EXPECT_EQ(answers_of(out), answers_of(records));
    EXPECT_EQ(out[0].cot.think(), records[perm[0]].cot.think());
    EXPECT_EQ(out[1].cot.think(), records[perm[1]].cot.think());
}

TEST(ShufflePaths, MatchesFisherYatesOracleAndInverts) {
    const auto records = hundred_records();
    for (std::uint64_t seed : {0ULL, 1ULL, 7ULL, 123456789ULL}) {
        const auto perm = fisher_yates_oracle(records.size(), seed);
        const auto out = shuffle_paths(records, seed);
        for (std::size_t k = 0; k < out.size(); ++k) EXPECT_EQ(out[k].cot.think(), records[perm[k]].cot.think());
        EXPECT_EQ(answers_of(out), answers_of(records));
        EXPECT_EQ(sorted(thinks_of(out)), sorted(thinks_of(records)));

        std::vector<std::string> restored(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) restored[perm[k]] = out[k].cot.think();
        EXPECT_EQ(restored, thinks_of(records));
    }
}

TEST(ShufflePaths, NeedsTwoRecords) {
    auto one = forge({pt::sample("a", "real")}, fixture(), {2.0, 1, 0, FlagScope::PerPath}).records;
    EXPECT_THROW(shuffle_paths(one, 1), Error);
}

TEST(Provenance, ReplayRebuildsEveryRecord) {
    const auto samples = manifest(30);
    const SamplerConfig cfg{3.0, 12, 44, FlagScope::PerPath};
    auto records = forge(samples, fixture(), cfg).records;
    records = shuffle_paths(std::move(records), 5);
    records = shuffle_answers(std::move(records), 6, ShuffleMode::Derangement);
    ASSERT_EQ(records.front().provenance.transforms.size(), 2u);
    EXPECT_EQ(replay(samples, fixture(), cfg, records.front().provenance.transforms), records);
}

TEST(Jsonl, RoundTripIsByteExact) {
    auto records = shuffle_answers(hundred_records(), 2, ShuffleMode::Derangement);
    std::ostringstream first;
    write_jsonl(first, records);
    std::istringstream in(first.str());
    const auto back = read_jsonl(in);
    EXPECT_EQ(back, records);
    std::ostringstream second;
    write_jsonl(second, back);
    EXPECT_EQ(second.str(), first.str());

    const auto line = first.str().substr(0, first.str().find('\n'));
    const auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"answer", "modalities", "prompt", "provenance", "sample_id", "think"}));
    EXPECT_EQ(line.find(": "), std::string::npos);
}

TEST(Jsonl, BadLineNamesItsNumber) {
    std::istringstream in("{\"x\":1}\n");
    try {
        read_jsonl(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(Manifest, BadRowsAreReportedNotFatal) {
    std::istringstream in(R"({"sample_id":"a","prompt":"p","modalities":{"RGB":"x"},"label":"real"}
{"sample_id":"b","prompt":"p","modalities":{},"label":"real"}
{"sample_id":"c","prompt":"p","modalities":{"THERMAL":"x"},"label":"real"}
not json
{"sample_id":"a","prompt":"p","modalities":{"IR":"x"},"label":"real"}
)");
    const auto m = read_manifest(in);
    ASSERT_EQ(m.samples.size(), 1u);
    EXPECT_EQ(m.samples[0].sample_id, "a");
    ASSERT_EQ(m.errors.size(), 4u);
    EXPECT_EQ(m.errors[0].sample_id, "b");
    EXPECT_EQ(m.errors[1].sample_id, "c");
    EXPECT_EQ(m.errors[2].sample_id, "line:4");
    EXPECT_NE(m.errors[3].message.find("duplicate"), std::string::npos);
}
