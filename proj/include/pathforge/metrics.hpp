#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pathforge/error.hpp"

namespace pathforge::metrics {

struct ScoredEntry {
    double score = 0.0;
    bool is_live = false;
};

using ScoredSet = std::vector<ScoredEntry>;

namespace detail {

inline void require_both_classes(std::span<const ScoredEntry> set) {
    bool live = false, spoof = false;
    for (const auto& e : set) {
        if (!std::isfinite(e.score)) throw Error(ErrorCode::UndefinedMetric, "score is not finite");
        (e.is_live ? live : spoof) = true;
    }
    if (!live || !spoof) throw Error(ErrorCode::UndefinedMetric, "both live and spoof entries are required");
}

} // namespace detail

/// Mann-Whitney AUC: probability that a live entry outscores a spoof entry,
/// ties counting one half. Computed from mid-ranks.
inline double auc(std::span<const ScoredEntry> set) {
    detail::require_both_classes(set);
    std::vector<ScoredEntry> sorted(set.begin(), set.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });

    double live_rank_sum = 0.0; // ranks are 1-based; doubled to stay integral
    double n_live = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) ++j;
        const double twice_mid_rank = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (sorted[k].is_live) {
                live_rank_sum += twice_mid_rank;
                n_live += 1.0;
            }
        }
        i = j;
    }
    const double n_spoof = static_cast<double>(sorted.size()) - n_live;
    const double u = live_rank_sum / 2.0 - n_live * (n_live + 1.0) / 2.0;
    return u / (n_live * n_spoof);
}

struct ErrorRates {
    double far = 0.0; // spoof accepted / spoof
    double frr = 0.0; // live rejected / live
};

/// An entry is accepted as live iff score >= threshold.
inline ErrorRates error_rates(std::span<const ScoredEntry> set, double threshold) {
    detail::require_both_classes(set);
    double live = 0, spoof = 0, live_rejected = 0, spoof_accepted = 0;
    for (const auto& e : set) {
        const bool accepted = e.score >= threshold;
        if (e.is_live) {
            ++live;
            if (!accepted) ++live_rejected;
        } else {
            ++spoof;
            if (accepted) ++spoof_accepted;
        }
    }
    return {spoof_accepted / spoof, live_rejected / live};
}

inline double hter(std::span<const ScoredEntry> set, double threshold) {
    const auto r = error_rates(set, threshold);
    return (r.far + r.frr) / 2.0;
}

struct EerPoint {
    double threshold = 0.0;
    double eer = 0.0;
};

/**
 * Sweeps the candidate thresholds -inf, the midpoints between adjacent
 * distinct scores, and +inf, and returns the one minimizing |FAR - FRR|
 * (lowest threshold on ties), with eer = (FAR + FRR) / 2 there.
 */
inline EerPoint eer_threshold(std::span<const ScoredEntry> set) {
    detail::require_both_classes(set);
    std::vector<ScoredEntry> sorted(set.begin(), set.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });

    double live = 0, spoof = 0;
    for (const auto& e : sorted) (e.is_live ? live : spoof) += 1.0;

    // Threshold below everything: all accepted.
    double live_rejected = 0, spoof_accepted = spoof;
    EerPoint best{-std::numeric_limits<double>::infinity(), (spoof_accepted / spoof + live_rejected / live) / 2.0};
    double best_gap = std::abs(spoof_accepted / spoof - live_rejected / live);

    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            if (sorted[j].is_live) {
                live_rejected += 1.0;
            } else {
                spoof_accepted -= 1.0;
            }
            ++j;
        }
        double threshold = std::numeric_limits<double>::infinity();
        if (j < sorted.size()) {
            threshold = sorted[i].score + (sorted[j].score - sorted[i].score) / 2.0;
            // Adjacent doubles have no midpoint; the upper score induces the
            // same accept/reject split.
            if (!(threshold > sorted[i].score && threshold < sorted[j].score)) threshold = sorted[j].score;
        }
        const double far = spoof_accepted / spoof;
        const double frr = live_rejected / live;
        const double gap = std::abs(far - frr);
        if (gap < best_gap) {
            best_gap = gap;
            best = {threshold, (far + frr) / 2.0};
        }
        i = j;
    }
    return best;
}

/// Fraction of entries classified correctly at the threshold.
inline double accuracy(std::span<const ScoredEntry> set, double threshold) {
    if (set.empty()) throw Error(ErrorCode::UndefinedMetric, "empty score set");
    double correct = 0;
    for (const auto& e : set) {
        if ((e.score >= threshold) == e.is_live) ++correct;
    }
    return correct / static_cast<double>(set.size());
}

} // namespace pathforge::metrics
