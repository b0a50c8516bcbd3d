#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pathforge/cot.hpp"
#include "pathforge/error.hpp"
#include "pathforge/path_sampler.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/taxonomy.hpp"

namespace pathforge {

inline const std::set<std::string>& known_modalities() {
    static const std::set<std::string> names{"DEPTH", "IR", "RGB"};
    return names;
}

struct SampleRecord {
    std::string sample_id;
    std::map<std::string, std::string> modality_refs; // modality -> asset reference
    std::string label;
    std::string prompt;
};

struct TransformTag {
    std::string op; // "shuffle_answers" | "shuffle_paths"
    std::uint64_t seed = 0;
    std::string mode; // shuffle_answers only

    friend bool operator==(const TransformTag&, const TransformTag&) = default;
};

struct Provenance {
    std::uint64_t seed = 0;        // forge seed
    std::uint64_t sample_seed = 0; // sampler seed derived for this sample
    std::string path_id;           // path forged for this record
    std::vector<TransformTag> transforms;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TrainingRecord {
    std::string sample_id;
    std::string prompt;
    std::map<std::string, std::string> modalities;
    CoTRecord cot;
    Provenance provenance;

    friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

struct Shortfall {
    std::string sample_id;
    std::size_t requested = 0;
    std::size_t available = 0;
};

struct SampleError {
    std::string sample_id;
    std::string message;
};

struct ForgeReport {
    std::size_t records_written = 0;
    std::vector<Shortfall> shortfalls;
    std::vector<SampleError> errors;
};

struct ForgeResult {
    std::vector<TrainingRecord> records;
    ForgeReport report;
};

// ---------------------------------------------------------------------------
// JSON shapes

inline nlohmann::json sample_to_json(const SampleRecord& s) {
    return {{"sample_id", s.sample_id}, {"prompt", s.prompt}, {"modalities", s.modality_refs}, {"label", s.label}};
}

/// Throws InvalidRecord naming the offending field.
inline SampleRecord sample_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidRecord, what); };
    if (!j.is_object()) fail("sample is not an object");
    for (const char* key : {"sample_id", "label", "prompt"}) {
        if (!j.contains(key) || !j[key].is_string()) fail(std::string("missing string field '") + key + "'");
    }
    SampleRecord s;
    s.sample_id = j["sample_id"].get<std::string>();
    s.label = j["label"].get<std::string>();
    s.prompt = j["prompt"].get<std::string>();
    if (s.sample_id.empty()) fail("empty sample_id");
    if (!j.contains("modalities") || !j["modalities"].is_object() || j["modalities"].empty())
        fail("sample '" + s.sample_id + "' needs a non-empty 'modalities' object");
    for (const auto& [k, v] : j["modalities"].items()) {
        if (!known_modalities().contains(k)) fail("sample '" + s.sample_id + "' has unknown modality '" + k + "'");
        if (!v.is_string()) fail("sample '" + s.sample_id + "' modality '" + k + "' is not a string");
        s.modality_refs[k] = v.get<std::string>();
    }
    return s;
}

inline nlohmann::json tag_to_json(const TransformTag& t) {
    nlohmann::json j{{"op", t.op}, {"seed", t.seed}};
    if (!t.mode.empty()) j["mode"] = t.mode;
    return j;
}

inline nlohmann::json record_to_json(const TrainingRecord& r) {
    nlohmann::json transforms = nlohmann::json::array();
    for (const auto& t : r.provenance.transforms) transforms.push_back(tag_to_json(t));
    return {{"sample_id", r.sample_id},
            {"prompt", r.prompt},
            {"modalities", r.modalities},
            {"think", r.cot.think()},
            {"answer", r.cot.answer()},
            {"provenance",
             {{"seed", r.provenance.seed},
              {"sample_seed", r.provenance.sample_seed},
              {"path_id", r.provenance.path_id},
              {"transforms", std::move(transforms)}}}};
}

inline TrainingRecord record_from_json(const nlohmann::json& j) {
    try {
        TrainingRecord r{j.at("sample_id").get<std::string>(),
                         j.at("prompt").get<std::string>(),
                         j.at("modalities").get<std::map<std::string, std::string>>(),
                         CoTRecord::make(j.at("think").get<std::string>(), j.at("answer").get<std::string>(),
                                         j.at("provenance").at("path_id").get<std::string>(),
                                         j.at("sample_id").get<std::string>()),
                         {}};
        const auto& p = j.at("provenance");
        r.provenance.seed = p.at("seed").get<std::uint64_t>();
        r.provenance.sample_seed = p.at("sample_seed").get<std::uint64_t>();
        r.provenance.path_id = p.at("path_id").get<std::string>();
        for (const auto& t : p.at("transforms")) {
            r.provenance.transforms.push_back(
                {t.at("op").get<std::string>(), t.at("seed").get<std::uint64_t>(), t.value("mode", std::string{})});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidRecord, e.what());
    }
}

/// One compact JSON object per line, keys sorted.
inline void write_jsonl(std::ostream& out, const std::vector<TrainingRecord>& records) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline std::vector<TrainingRecord> read_jsonl(std::istream& in) {
    std::vector<TrainingRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

struct Manifest {
    std::vector<SampleRecord> samples;
    std::vector<SampleError> errors; // rows that could not be ingested
};

/// Reads a JSON Lines manifest. Bad rows are reported, not fatal; the
/// sample_id of a bad row is "line:<n>" when it cannot be read.
inline Manifest read_manifest(std::istream& in) {
    Manifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string id = "line:" + std::to_string(line_no);
        try {
            auto j = nlohmann::json::parse(line);
            if (j.is_object() && j.contains("sample_id") && j["sample_id"].is_string())
                id = j["sample_id"].get<std::string>();
            auto s = sample_from_json(j);
            if (!seen.insert(s.sample_id).second)
                throw Error(ErrorCode::InvalidRecord, "duplicate sample_id '" + s.sample_id + "'");
            m.samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            m.errors.push_back({id, "line " + std::to_string(line_no) + ": " + e.what()});
        } catch (const Error& e) {
            m.errors.push_back({id, "line " + std::to_string(line_no) + ": " + e.what()});
        }
    }
    return m;
}

inline void write_manifest(std::ostream& out, const std::vector<SampleRecord>& samples) {
    for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

inline nlohmann::json report_to_json(const ForgeReport& r) {
    nlohmann::json shortfalls = nlohmann::json::array();
    for (const auto& s : r.shortfalls)
        shortfalls.push_back({{"sample_id", s.sample_id}, {"requested", s.requested}, {"available", s.available}});
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : r.errors) errors.push_back({{"sample_id", e.sample_id}, {"message", e.message}});
    return {{"records_written", r.records_written}, {"shortfalls", shortfalls}, {"errors", errors}};
}

// ---------------------------------------------------------------------------
// Forging

namespace detail {

struct SampleOutcome {
    std::vector<TrainingRecord> records;
    std::optional<Shortfall> shortfall;
    std::optional<SampleError> error;
};

inline SampleOutcome forge_one(const SampleRecord& sample, const ReasoningTree& tree, const SamplerConfig& config) {
    SampleOutcome out;
    SamplerConfig local = config;
    local.seed = derive_seed(config.seed, sample.sample_id);
    try {
        auto paths = sample_paths(tree, sample.label, local);
        if (config.paths != kExhaustive && paths.size() < config.paths)
            out.shortfall = Shortfall{sample.sample_id, config.paths, paths.size()};
        out.records.reserve(paths.size());
        for (const auto& path : paths) {
            TrainingRecord r{sample.sample_id, sample.prompt, sample.modality_refs,
                             compose(path, tree, sample.label, sample.sample_id), {}};
            r.provenance = {config.seed, local.seed, r.cot.path_id(), {}};
            out.records.push_back(std::move(r));
        }
    } catch (const Error& e) {
        out.records.clear();
        out.error = SampleError{sample.sample_id, e.what()};
    }
    return out;
}

} // namespace detail

/**
 * Maps each sample to up to N (sample, reasoning text) records, one per
 * sampled path. Each sample uses its own sub-seed derived from (seed,
 * sample_id), so the result does not depend on sample order or on `jobs`.
 * Output is sorted by (sample_id, path_id). Per-sample failures are reported
 * and skipped.
 */
inline ForgeResult forge(const std::vector<SampleRecord>& samples, const ReasoningTree& tree,
                         const SamplerConfig& config, unsigned jobs = 1) {
    if (!(config.alpha > 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be greater than 1");
    std::vector<detail::SampleOutcome> outcomes(samples.size());
    if (config.paths > 0) {
        const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(samples.size())));
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < samples.size(); i = next++)
                outcomes[i] = detail::forge_one(samples[i], tree, config);
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        }
    }

    ForgeResult result;
    for (auto& o : outcomes) {
        for (auto& r : o.records) result.records.push_back(std::move(r));
        if (o.shortfall) result.report.shortfalls.push_back(*o.shortfall);
        if (o.error) result.report.errors.push_back(*o.error);
    }
    std::sort(result.records.begin(), result.records.end(), [](const TrainingRecord& a, const TrainingRecord& b) {
        return std::tie(a.sample_id, a.provenance.path_id) < std::tie(b.sample_id, b.provenance.path_id);
    });
    auto by_id = [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; };
    std::sort(result.report.shortfalls.begin(), result.report.shortfalls.end(), by_id);
    std::sort(result.report.errors.begin(), result.report.errors.end(), by_id);
    result.report.records_written = result.records.size();
    return result;
}

// ---------------------------------------------------------------------------
// Transforms

enum class ShuffleMode { Permutation, Derangement };

inline const char* to_string(ShuffleMode m) { return m == ShuffleMode::Permutation ? "permutation" : "derangement"; }

inline ShuffleMode parse_shuffle_mode(std::string_view s) {
    if (s == "permutation") return ShuffleMode::Permutation;
    if (s == "derangement") return ShuffleMode::Derangement;
    throw Error(ErrorCode::InvalidArgument, "unknown shuffle mode '" + std::string(s) + "'");
}

/// Seeded uniform permutation of [0, n): record k receives item perm[k].
inline std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    return perm;
}

namespace detail {

// Assignment in which every record receives an answer different from its own.
// Records are put in random order, grouped by answer (groups in random
// order), and each takes the answer sitting `largest group size` places
// further along the cycle. That never lands inside the own group when no
// answer covers more than half of the records.
inline std::vector<std::size_t> value_derangement(const std::vector<std::string>& answers, std::uint64_t seed) {
    const std::size_t n = answers.size();
    std::map<std::string, std::size_t> counts;
    for (const auto& a : answers) ++counts[a];
    std::size_t largest = 0;
    for (const auto& [a, c] : counts) largest = std::max(largest, c);
    if (n < 2 || counts.size() < 2 || 2 * largest > n)
        throw Error(ErrorCode::InfeasibleDerangement,
                    "no assignment moves every answer: " + std::to_string(largest) + " of " + std::to_string(n) +
                        " records share one answer");

    Rng rng(seed);
    std::vector<std::string> group_order;
    for (const auto& [a, c] : counts) group_order.push_back(a);
    rng.shuffle(group_order);
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < group_order.size(); ++i) rank[group_order[i]] = i;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rank[answers[a]] < rank[answers[b]]; });

    std::vector<std::size_t> source(n);
    for (std::size_t k = 0; k < n; ++k) source[order[k]] = order[(k + largest) % n];
    return source;
}

} // namespace detail

/// Reassigns answers across records. Think texts stay put; the answer
/// multiset is preserved.
inline std::vector<TrainingRecord> shuffle_answers(std::vector<TrainingRecord> records, std::uint64_t seed,
                                                   ShuffleMode mode = ShuffleMode::Permutation) {
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "shuffle_answers needs at least one record");
    std::vector<std::string> answers;
    answers.reserve(records.size());
    for (const auto& r : records) answers.push_back(r.cot.answer());

    const auto source = mode == ShuffleMode::Permutation ? shuffle_permutation(records.size(), seed)
                                                         : detail::value_derangement(answers, seed);
    const TransformTag tag{"shuffle_answers", seed, to_string(mode)};
    for (std::size_t k = 0; k < records.size(); ++k) {
        records[k].cot = records[k].cot.with_answer(answers[source[k]]);
        records[k].provenance.transforms.push_back(tag);
    }
    return records;
}

/// Reassigns think texts across records with a seeded Fisher-Yates
/// permutation; answers stay put.
inline std::vector<TrainingRecord> shuffle_paths(std::vector<TrainingRecord> records, std::uint64_t seed) {
    if (records.size() < 2) throw Error(ErrorCode::InvalidArgument, "shuffle_paths needs at least two records");
    std::vector<std::string> thinks;
    thinks.reserve(records.size());
    for (const auto& r : records) thinks.push_back(r.cot.think());
    const auto source = shuffle_permutation(records.size(), seed);
    const TransformTag tag{"shuffle_paths", seed, {}};
    for (std::size_t k = 0; k < records.size(); ++k) {
        records[k].cot = records[k].cot.with_think(thinks[source[k]], records[k].cot.path_id());
        records[k].provenance.transforms.push_back(tag);
    }
    return records;
}

inline std::vector<TrainingRecord> apply_transform(std::vector<TrainingRecord> records, const TransformTag& tag) {
    if (tag.op == "shuffle_answers") return shuffle_answers(std::move(records), tag.seed, parse_shuffle_mode(tag.mode));
    if (tag.op == "shuffle_paths") return shuffle_paths(std::move(records), tag.seed);
    throw Error(ErrorCode::InvalidArgument, "unknown transform '" + tag.op + "'");
}

/// Rebuilds a dataset from its inputs and the transform chain recorded in
/// provenance.
inline std::vector<TrainingRecord> replay(const std::vector<SampleRecord>& samples, const ReasoningTree& tree,
                                          const SamplerConfig& config, const std::vector<TransformTag>& transforms) {
    auto records = forge(samples, tree, config).records;
    for (const auto& t : transforms) records = apply_transform(std::move(records), t);
    return records;
}

} // namespace pathforge
