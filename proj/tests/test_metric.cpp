#include "conceptid/metric.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <optional>
#include <random>

using namespace conceptid;

namespace {

auto matrix(std::size_t n, std::size_t k, std::size_t d,
    std::function<bool(std::size_t, std::size_t, std::size_t)> const& in) -> MembershipMatrix
{
    std::vector<std::uint8_t> flags(n * k * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t s = 0; s < d; ++s) {
                flags[(i * k + c) * d + s] = in(i, c, s) ? 1 : 0;
            }
        }
    }
    return { n, k, d, std::move(flags) };
}

auto set_flag(MembershipMatrix const& mm, std::size_t i, std::size_t k, std::size_t d, bool value)
    -> MembershipMatrix
{
    auto flags = mm.flags();
    flags[(i * mm.concepts() + k) * mm.spaces() + d] = value ? 1 : 0;
    return { mm.samples(), mm.concepts(), mm.spaces(), std::move(flags) };
}

struct RandomMatrix {
    MembershipMatrix mm;
    std::size_t n, k, d;
};

auto random_matrix(std::mt19937_64& rng, double density) -> RandomMatrix
{
    std::size_t n = 20 + rng() % 41;
    std::size_t k = 1 + rng() % 4;
    std::size_t d = 1 + rng() % 3;
    std::bernoulli_distribution on(density);
    std::vector<std::uint8_t> flags(n * k * d);
    for (auto& f : flags) {
        f = on(rng) ? 1 : 0;
    }
    return { MembershipMatrix(n, k, d, std::move(flags)), n, k, d };
}

auto hits(MembershipMatrix const& mm, std::size_t i, std::size_t d) -> std::size_t
{
    std::size_t h = 0;
    for (std::size_t k = 0; k < mm.concepts(); ++k) {
        h += mm.inside(i, k, d);
    }
    return h;
}

// Concept 0 holds samples 1..4, concept 1 holds 6..9, in both spaces.
auto two_clean_concepts(std::size_t i, std::size_t k, std::size_t) -> bool
{
    return k == 0 ? (i >= 1 && i <= 4) : (i >= 6 && i <= 9);
}

} // namespace

TEST(Metric, TwoCleanConceptsScorePointEight)
{
    auto b = evaluate(matrix(10, 2, 2, two_clean_concepts), {});
    EXPECT_NEAR(b.q, 0.8, 1e-12);
    EXPECT_EQ(b.concepts[0].members, 4u);
    EXPECT_EQ(b.concepts[1].consistency, (std::vector<double> { 1.0, 1.0 }));
    EXPECT_EQ(b.overlap_fraction, 0.0);
}

TEST(Metric, OneContestedSampleInOneSpaceCostsOverlapOnly)
{
    auto mm = matrix(10, 2, 2, [](std::size_t i, std::size_t k, std::size_t d) {
        return two_clean_concepts(i, k, d) || (i == 5 && d == 0);
    });
    auto b = evaluate(mm, {});
    EXPECT_NEAR(b.overlap_fraction, 0.05, 1e-15);
    EXPECT_NEAR(b.q, 0.75, 1e-12);
    EXPECT_EQ(b.concepts[0].members, 4u);
}

TEST(Metric, EmptyRegionsScoreMinusSizePenalty)
{
    auto b = evaluate(matrix(10, 2, 2, [](auto, auto, auto) { return false; }), {});
    EXPECT_NEAR(b.q, -0.04, 1e-12);
    EXPECT_EQ(b.concepts[0].consistency, (std::vector<double> { 0.0, 0.0 }));
    EXPECT_NEAR(b.concepts[1].size_penalty, 0.02, 1e-15);
}

TEST(Metric, OversizedConceptIsPenalizedAboveTheWindow)
{
    auto b = evaluate(matrix(10, 1, 1, [](std::size_t i, auto, auto) { return i < 8; }), {});
    EXPECT_NEAR(b.concepts[0].size_penalty, 0.2, 1e-12);
    EXPECT_NEAR(b.q, 0.8 - 0.2, 1e-12);
}

TEST(Metric, InconsistentSamplesLowerConsistency)
{
    // samples 0..3 in both spaces, 4..5 only in space 1
    auto mm = matrix(10, 1, 2, [](std::size_t i, auto, std::size_t d) { return i < 4 || (d == 1 && i < 6); });
    auto b = evaluate(mm, {});
    EXPECT_EQ(b.concepts[0].members, 4u);
    EXPECT_NEAR(b.concepts[0].consistency[1], 4.0 / 6.0, 1e-15);
    EXPECT_NEAR(b.q, 0.4 * (1.0 + 4.0 / 6.0) / 2.0, 1e-12);
}

TEST(Metric, PreferenceCoverage)
{
    auto mm = matrix(10, 2, 2, two_clean_concepts);
    std::vector<std::size_t> prefs { 1, 5, 7, 0 };
    auto b = evaluate(mm, {}, prefs);
    EXPECT_NEAR(b.preference_coverage, 0.5, 1e-15);
    EXPECT_NEAR(b.q, 0.8 + 0.5 * 0.5, 1e-12);
    std::vector<std::size_t> bad { 10 };
    EXPECT_THROW(evaluate(mm, {}, bad), ContractViolation);
}

TEST(Metric, JsonUsesQKey)
{
    nlohmann::json j = evaluate(matrix(10, 2, 2, two_clean_concepts), {});
    EXPECT_NEAR(j["Q"].get<double>(), 0.8, 1e-12);
    EXPECT_EQ(j["concepts"].size(), 2u);
}

TEST(MetricProperty, AddingAnUncontestedMemberIncreasesQ)
{
    std::mt19937_64 rng(101);
    MetricWeights w;
    int checked = 0;
    while (checked < 50) {
        auto r = random_matrix(rng, 0.25);
        auto base = evaluate(r.mm, w);
        // A sample touching nothing becomes a member of concept k.
        std::size_t k = rng() % r.k;
        auto m = static_cast<double>(base.concepts[k].members);
        if ((m + 1) / r.n > w.s_max || m / r.n < w.s_min) {
            continue;
        }
        std::optional<std::size_t> free;
        for (std::size_t i = 0; i < r.n && !free; ++i) {
            bool touches = false;
            for (std::size_t d = 0; d < r.d; ++d) {
                touches = touches || hits(r.mm, i, d) > 0;
            }
            if (!touches) {
                free = i;
            }
        }
        if (!free) {
            continue;
        }
        auto mm = r.mm;
        for (std::size_t d = 0; d < r.d; ++d) {
            mm = set_flag(mm, *free, k, d, true);
        }
        ASSERT_EQ(mm.assigned(*free), static_cast<int>(k));
        auto after = evaluate(mm, w);
        EXPECT_GT(after.q, base.q);
        ++checked;
    }
}

TEST(MetricProperty, OneMoreContestedPairLowersQByTheOverlapWeight)
{
    std::mt19937_64 rng(202);
    MetricWeights w;
    w.w_overlap = 1.7;
    int checked = 0;
    while (checked < 50) {
        auto r = random_matrix(rng, 0.2);
        if (r.k < 2) {
            continue;
        }
        // An unassigned sample outside every region of space d enters two.
        std::optional<std::pair<std::size_t, std::size_t>> slot;
        for (std::size_t i = 0; i < r.n && !slot; ++i) {
            for (std::size_t d = 0; d < r.d && !slot; ++d) {
                if (r.mm.assigned(i) == unassigned && hits(r.mm, i, d) == 0) {
                    slot = std::pair { i, d };
                }
            }
        }
        if (!slot) {
            continue;
        }
        auto [i, d] = *slot;
        auto mm = set_flag(set_flag(r.mm, i, 0, d, true), i, 1, d, true);
        auto before = evaluate(r.mm, w);
        auto after = evaluate(mm, w);
        for (std::size_t k = 0; k < r.k; ++k) {
            ASSERT_EQ(after.concepts[k].members, before.concepts[k].members);
        }
        double const step = w.w_overlap / static_cast<double>(r.n * r.d);
        EXPECT_NEAR(after.overlap_fraction - before.overlap_fraction, 1.0 / static_cast<double>(r.n * r.d), 1e-12);
        EXPECT_NEAR(before.q - after.q, step, 1e-12);
        ++checked;
    }
}

TEST(MetricProperty, CoveringOneMorePreferenceAddsTheBonusShare)
{
    std::mt19937_64 rng(303);
    MetricWeights w;
    int checked = 0;
    while (checked < 50) {
        auto r = random_matrix(rng, 0.3);
        std::vector<std::size_t> assigned, loose;
        for (std::size_t i = 0; i < r.n; ++i) {
            (r.mm.assigned(i) == unassigned ? loose : assigned).push_back(i);
        }
        if (assigned.empty() || loose.size() < 2) {
            continue;
        }
        std::vector<std::size_t> prefs { loose[0], loose[1] };
        if (assigned.size() > 1) {
            prefs.push_back(assigned[1]);
        }
        auto before = evaluate(r.mm, w, prefs);
        prefs[0] = assigned[0];
        auto after = evaluate(r.mm, w, prefs);
        EXPECT_NEAR(after.q - before.q, w.w_pref / static_cast<double>(prefs.size()), 1e-12);
        ++checked;
    }
}

TEST(MetricProperty, BoundsAndRecomposition)
{
    std::mt19937_64 rng(404);
    MetricWeights w;
    for (int trial = 0; trial < 50; ++trial) {
        auto r = random_matrix(rng, 0.1 + 0.8 * static_cast<double>(trial) / 50.0);
        auto b = evaluate(r.mm, w);
        auto const k = static_cast<double>(r.k);
        EXPECT_LE(b.q, k);
        EXPECT_GE(b.q, -w.w_overlap * k - w.w_size * k * std::max(w.s_min, 1.0 - w.s_max));
        EXPECT_NEAR(b.recompose(), b.q, 1e-12);
        for (auto const& c : b.concepts) {
            for (double x : c.consistency) {
                EXPECT_GE(x, 0.0);
                EXPECT_LE(x, 1.0);
            }
        }
    }
}

TEST(MetricWeights, Validity)
{
    EXPECT_TRUE(MetricWeights {}.valid());
    MetricWeights w;
    w.s_min = 0.7;
    EXPECT_FALSE(w.valid());
    w = {};
    w.w_pref = -1;
    EXPECT_FALSE(w.valid());
}
