#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathforge/dataset.hpp"
#include "pathforge/error.hpp"
#include "pathforge/rng.hpp"
#include "pathforge/toy_policy.hpp"

namespace pathforge::lab {

/// Cue vectors per modality: RGB = [texture, capture artifact],
/// DEPTH = [relief], IR = [reflectance].
struct SyntheticSample {
    std::string sample_id;
    std::map<std::string, std::vector<int>> cues;
    std::string label;
    std::string domain_tag;

    friend bool operator==(const SyntheticSample&, const SyntheticSample&) = default;
};

struct DomainSpec {
    std::string tag;
    std::size_t count = 0;
    double noise = 0.0;         // probability a genuine cue is replaced by a uniform code
    double artifact_rate = 0.0; // probability the capture artifact encodes the label
    int permuted_modality = -1; // modality whose code mapping is rotated, or -1
};

struct WorldConfig {
    std::vector<std::string> classes;
    std::size_t codes = 4;
    std::vector<DomainSpec> domains;
    std::uint64_t seed = 0;
};

/// Rule table: the genuine code a class shows in a modality. Fixed across
/// domains.
inline int rule_code(std::size_t modality, std::size_t cls, std::size_t codes) {
    return static_cast<int>((cls + modality) % codes);
}

/**
 * Labels cycle through the classes inside each domain, so every domain is
 * balanced to within one sample per class. Each sample draws from its own
 * stream derive_seed(seed, sample_id).
 */
inline std::vector<SyntheticSample> generate_world(const WorldConfig& config) {
    if (config.classes.empty()) throw Error(ErrorCode::InvalidArgument, "world needs classes");
    if (config.codes < config.classes.size())
        throw Error(ErrorCode::InvalidArgument, "need at least as many cue codes as classes");
    std::vector<SyntheticSample> out;
    for (const auto& d : config.domains) {
        if (d.noise < 0.0 || d.noise > 1.0 || d.artifact_rate < 0.0 || d.artifact_rate > 1.0)
            throw Error(ErrorCode::InvalidArgument, "domain '" + d.tag + "' has a rate outside [0, 1]");
        for (std::size_t i = 0; i < d.count; ++i) {
            SyntheticSample s;
            char id[64];
            std::snprintf(id, sizeof(id), "%s-%05zu", d.tag.c_str(), i);
            s.sample_id = id;
            s.domain_tag = d.tag;
            const std::size_t cls = i % config.classes.size();
            s.label = config.classes[cls];
            Rng rng(derive_seed(config.seed, s.sample_id));
            std::array<int, 3> genuine{};
            for (std::size_t m = 0; m < 3; ++m) {
                int code = rule_code(m, cls, config.codes);
                if (rng.bernoulli(d.noise)) code = static_cast<int>(rng.index(config.codes));
                if (static_cast<int>(m) == d.permuted_modality) code = (code + 1) % static_cast<int>(config.codes);
                genuine[m] = code;
            }
            int artifact = static_cast<int>(cls % config.codes);
            if (!rng.bernoulli(d.artifact_rate)) artifact = static_cast<int>(rng.index(config.codes));
            s.cues["RGB"] = {genuine[0], artifact};
            s.cues["DEPTH"] = {genuine[1]};
            s.cues["IR"] = {genuine[2]};
            out.push_back(std::move(s));
        }
    }
    return out;
}

inline CuePrompt to_prompt(const SyntheticSample& s) {
    CuePrompt q;
    for (std::size_t m = 0; m < 3; ++m) q.genuine[m] = s.cues.at(std::string(kModalities[m])).at(0);
    const auto& rgb = s.cues.at("RGB");
    q.artifact = rgb.size() > 1 ? rgb[1] : -1;
    return q;
}

/// Manifest row for the sample; modality references name the synthetic cue
/// vector, e.g. "syn:RGB:2,1".
inline SampleRecord to_sample_record(const SyntheticSample& s) {
    SampleRecord r;
    r.sample_id = s.sample_id;
    r.label = s.label;
    r.prompt = "Is this face live or a presentation attack? Reason over the RGB, depth and infrared views.";
    for (const auto& [m, v] : s.cues) {
        std::string ref = "syn:" + m + ":";
        for (std::size_t i = 0; i < v.size(); ++i) ref += (i ? "," : "") + std::to_string(v[i]);
        r.modality_refs[m] = ref;
    }
    return r;
}

inline nlohmann::json world_sample_to_json(const SyntheticSample& s) {
    return {{"sample_id", s.sample_id}, {"cues", s.cues}, {"label", s.label}, {"domain_tag", s.domain_tag}};
}

} // namespace pathforge::lab
