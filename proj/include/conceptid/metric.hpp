#pragma once

// Concept quality Q:
//
//   Q = sum_k coverage_k * mean_d r_kd  -  w_overlap * ov  -  w_size * sum_k pen_k  +  w_pref * p
//
//   coverage_k = m_k / N                  m_k = samples assigned to k
//   r_kd       = m_k / |inside(k, d)|     (0 when nothing is inside); samples
//                inside several concepts in space d are left to ov
//   ov         = contested (sample, space) pairs / (N * D)
//   pen_k      = max(0, s_min - coverage_k) + max(0, coverage_k - s_max)
//   p          = assigned preference samples / preference samples

#include "conceptid/error.hpp"
#include "conceptid/regions.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace conceptid {

struct MetricWeights {
    double w_overlap { 1.0 };
    double w_size { 1.0 };
    double w_pref { 0.5 };
    double s_min { 0.02 };
    double s_max { 0.6 };

    [[nodiscard]] auto valid() const -> bool
    {
        auto ok = [](double w) { return std::isfinite(w) && w >= 0.0; };
        return ok(w_overlap) && ok(w_size) && ok(w_pref) && ok(s_min) && ok(s_max) && s_min < 1.0 && s_min < s_max
            && s_max <= 1.0;
    }
    auto operator==(MetricWeights const&) const -> bool = default;
};

struct ConceptScore {
    std::size_t members { 0 };
    double coverage { 0.0 };
    std::vector<double> consistency; // r_kd per space
    double size_penalty { 0.0 };

    [[nodiscard]] auto mean_consistency() const -> double
    {
        if (consistency.empty()) {
            return 0.0;
        }
        double s = 0.0;
        for (double r : consistency) {
            s += r;
        }
        return s / static_cast<double>(consistency.size());
    }
};

struct MetricBreakdown {
    double q { 0.0 };
    std::vector<ConceptScore> concepts;
    double overlap_fraction { 0.0 };
    double preference_coverage { 0.0 };
    MetricWeights weights;

    [[nodiscard]] auto recompose() const -> double
    {
        double quality = 0.0;
        double penalty = 0.0;
        for (auto const& c : concepts) {
            quality += c.coverage * c.mean_consistency();
            penalty += c.size_penalty;
        }
        return quality - weights.w_overlap * overlap_fraction - weights.w_size * penalty
            + weights.w_pref * preference_coverage;
    }
};

// preference_rows index rows of the membership matrix.
inline auto evaluate(MembershipMatrix const& mm, MetricWeights const& weights,
    std::span<std::size_t const> preference_rows = {}) -> MetricBreakdown
{
    auto const n = mm.samples();
    auto const kc = mm.concepts();
    auto const dc = mm.spaces();
    if (n == 0 || dc == 0) {
        throw ContractViolation("evaluate: empty membership matrix");
    }

    std::vector<std::size_t> members(kc, 0);
    std::vector<std::size_t> inside(kc * dc, 0);
    std::size_t contested = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int a = mm.assigned(i);
        if (a != unassigned) {
            ++members[static_cast<std::size_t>(a)];
        }
        for (std::size_t d = 0; d < dc; ++d) {
            std::size_t hits = 0;
            std::size_t last = 0;
            for (std::size_t k = 0; k < kc; ++k) {
                if (mm.inside(i, k, d)) {
                    ++hits;
                    last = k;
                }
            }
            if (hits == 1) {
                ++inside[last * dc + d];
            } else if (hits >= 2) {
                ++contested;
            }
        }
    }

    MetricBreakdown out;
    out.weights = weights;
    auto const nf = static_cast<double>(n);
    out.overlap_fraction = static_cast<double>(contested) / (nf * static_cast<double>(dc));
    out.concepts.resize(kc);
    for (std::size_t k = 0; k < kc; ++k) {
        auto& c = out.concepts[k];
        c.members = members[k];
        c.coverage = static_cast<double>(members[k]) / nf;
        c.consistency.resize(dc);
        for (std::size_t d = 0; d < dc; ++d) {
            auto denom = inside[k * dc + d];
            c.consistency[d] = denom == 0 ? 0.0 : static_cast<double>(members[k]) / static_cast<double>(denom);
        }
        c.size_penalty = std::max(0.0, weights.s_min - c.coverage) + std::max(0.0, c.coverage - weights.s_max);
    }
    if (!preference_rows.empty()) {
        std::size_t covered = 0;
        for (auto r : preference_rows) {
            if (r >= n) {
                throw ContractViolation("evaluate: preference row out of range");
            }
            if (mm.assigned(r) != unassigned) {
                ++covered;
            }
        }
        out.preference_coverage = static_cast<double>(covered) / static_cast<double>(preference_rows.size());
    }
    out.q = out.recompose();
    return out;
}

inline void to_json(nlohmann::json& j, MetricWeights const& w)
{
    j = { { "w_overlap", w.w_overlap }, { "w_size", w.w_size }, { "w_pref", w.w_pref }, { "s_min", w.s_min },
        { "s_max", w.s_max } };
}

inline void from_json(nlohmann::json const& j, MetricWeights& w)
{
    MetricWeights d;
    w.w_overlap = j.value("w_overlap", d.w_overlap);
    w.w_size = j.value("w_size", d.w_size);
    w.w_pref = j.value("w_pref", d.w_pref);
    w.s_min = j.value("s_min", d.s_min);
    w.s_max = j.value("s_max", d.s_max);
}

inline void to_json(nlohmann::json& j, ConceptScore const& c)
{
    j = { { "members", c.members }, { "coverage", c.coverage }, { "consistency", c.consistency },
        { "size_penalty", c.size_penalty } };
}

inline void to_json(nlohmann::json& j, MetricBreakdown const& b)
{
    j = { { "Q", b.q }, { "concepts", b.concepts }, { "overlap_fraction", b.overlap_fraction },
        { "preference_coverage", b.preference_coverage }, { "weights", b.weights } };
}

} // namespace conceptid
