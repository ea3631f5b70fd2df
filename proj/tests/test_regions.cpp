#include "conceptid/regions.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace conceptid;
using conceptid::testing::make_dataset;
using conceptid::testing::one_d_spaces;

namespace {

auto pt(std::initializer_list<double> v) -> std::vector<double> { return v; }

// Brute-force reference for the assignment rule.
auto reference_assignment(MembershipMatrix const& mm, std::size_t i) -> int
{
    int found = unassigned;
    for (std::size_t k = 0; k < mm.concepts(); ++k) {
        bool all = true;
        for (std::size_t d = 0; d < mm.spaces(); ++d) {
            all = all && mm.inside(i, k, d);
        }
        if (!all) {
            continue;
        }
        bool exclusive = true;
        for (std::size_t j = 0; j < mm.concepts(); ++j) {
            for (std::size_t d = 0; d < mm.spaces() && j != k; ++d) {
                exclusive = exclusive && !mm.inside(i, j, d);
            }
        }
        if (exclusive) {
            found = static_cast<int>(k);
        }
    }
    return found;
}

} // namespace

TEST(Contains, CenterAndBoundary)
{
    EllipseRegion r { { 0.3, 0.6 }, { 0.2, 0.1 } };
    EXPECT_TRUE(contains(pt({ 0.3, 0.6 }), r));
    EXPECT_TRUE(contains(pt({ 0.7 }), EllipseRegion { { 0.5 }, { 0.2 } }));
    EXPECT_FALSE(contains(pt({ 0.7000001 }), EllipseRegion { { 0.5 }, { 0.2 } }));
}

TEST(Contains, QuadraticFormByHand)
{
    // 0.8^2 + 0.8^2 = 1.28 > 1
    EXPECT_FALSE(contains(pt({ 0.58, 0.58 }), EllipseRegion { { 0.5, 0.5 }, { 0.1, 0.1 } }));
    // 0.6^2 + 0.6^2 = 0.72
    EXPECT_TRUE(contains(pt({ 0.56, 0.56 }), EllipseRegion { { 0.5, 0.5 }, { 0.1, 0.1 } }));
}

TEST(Contains, DimensionMismatchIsAContractViolation)
{
    EXPECT_THROW(contains(pt({ 0.1 }), EllipseRegion { { 0.5, 0.5 }, { 0.1, 0.1 } }), ContractViolation);
}

TEST(Contains, HomogeneousUnderCommonScaling)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.05, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        EllipseRegion r { { u(rng), u(rng), u(rng) }, { pos(rng), pos(rng), pos(rng) } };
        std::vector<double> x { u(rng), u(rng), u(rng) };
        // Scale by a power of two so the scaled quadratic form is bit-identical.
        double s = std::ldexp(1.0, static_cast<int>(rng() % 7) - 3);
        EllipseRegion scaled = r;
        std::vector<double> y(3);
        for (std::size_t j = 0; j < 3; ++j) {
            scaled.radii[j] *= s;
            y[j] = r.center[j] + (x[j] - r.center[j]) * s;
        }
        EXPECT_EQ(contains(x, r), contains(y, scaled));
    }
}

TEST(GenomeLength, FollowsTheSpaceDimensions)
{
    std::vector<std::size_t> a { 1, 2 };
    EXPECT_EQ(genome_length(a, 2), 12u);
    EXPECT_EQ(genome_length(a, 3), 18u);
    std::vector<std::size_t> b { 2, 2, 2, 2 };
    EXPECT_EQ(genome_length(b, 3), 48u);
}

TEST(Decode, MidpointsAndLowerEnds)
{
    std::vector<std::size_t> dims { 1, 2 };
    RegionBounds b;
    auto mid = decode(std::vector<double>(12, 0.5), dims, 2);
    for (auto const& r : mid.regions) {
        for (double c : r.center) {
            EXPECT_DOUBLE_EQ(c, 0.5);
        }
        for (double x : r.radii) {
            EXPECT_DOUBLE_EQ(x, (b.radius_min + b.radius_max) / 2);
        }
    }
    auto low = decode(std::vector<double>(12, 0.0), dims, 2);
    EXPECT_EQ(low.at(1, 1).center, (std::vector<double> { -0.25, -0.25 }));
    EXPECT_EQ(low.at(1, 1).radii, (std::vector<double> { 0.01, 0.01 }));
}

TEST(Decode, GeneLayoutIsCentersThenRadiiPerConceptAndSpace)
{
    std::vector<std::size_t> dims { 1, 2 };
    std::vector<double> g(12, 0.0);
    g[6 + 1 + 2] = 1.0; // concept 1, space 1, second center gene
    auto crs = decode(g, dims, 2);
    EXPECT_DOUBLE_EQ(crs.at(1, 1).center[1], 1.25);
    EXPECT_DOUBLE_EQ(crs.at(1, 1).center[0], -0.25);
}

TEST(Decode, WrongLengthIsAContractViolation)
{
    std::vector<std::size_t> dims { 1, 2 };
    EXPECT_THROW(decode(std::vector<double>(11, 0.5), dims, 2), ContractViolation);
}

TEST(Decode, EncodeRoundTrip)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::size_t> dims { 2, 1, 3 };
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> g(genome_length(dims, 3));
        for (auto& x : g) {
            x = u(rng);
        }
        auto back = encode(decode(g, dims, 3));
        for (std::size_t j = 0; j < g.size(); ++j) {
            EXPECT_NEAR(back[j], g[j], 1e-12);
        }
    }
}

TEST(Regions, JsonRoundTrip)
{
    std::vector<std::size_t> dims { 1, 2 };
    auto crs = decode(std::vector<double>(12, 0.25), dims, 2);
    nlohmann::json j = crs;
    EXPECT_EQ(j["concepts"].size(), 2u);
    EXPECT_EQ(j["concepts"][0]["spaces"][1]["radii"].size(), 2u);
    EXPECT_EQ(j.get<ConceptRegionSet>(), crs);
}

TEST(Membership, SingleConceptAtCenter)
{
    auto ds = normalize(make_dataset(2, { { 0, 0 }, { 1, 1 }, { 0.5, 0.5 } }));
    ConceptRegionSet crs { 1, { 1, 1 }, { { { 0.5 }, { 0.1 } }, { { 0.5 }, { 0.1 } } } };
    auto mm = membership(ds, one_d_spaces(), crs);
    EXPECT_TRUE(mm.consistent(2, 0));
    EXPECT_EQ(mm.assigned(2), 0);
    EXPECT_EQ(mm.assigned(0), unassigned);
}

TEST(Membership, AndSemanticsAcrossSpaces)
{
    auto ds = normalize(make_dataset(2, { { 0, 0 }, { 1, 1 }, { 0.5, 0.9 } }));
    ConceptRegionSet crs { 1, { 1, 1 }, { { { 0.5 }, { 0.1 } }, { { 0.5 }, { 0.1 } } } };
    auto mm = membership(ds, one_d_spaces(), crs);
    EXPECT_TRUE(mm.inside(2, 0, 0));
    EXPECT_FALSE(mm.inside(2, 0, 1));
    EXPECT_FALSE(mm.consistent(2, 0));
    EXPECT_EQ(mm.assigned(2), unassigned);
}

TEST(Membership, ContestedSamplesStayUnassigned)
{
    auto ds = normalize(make_dataset(2, { { 0, 0 }, { 1, 1 }, { 0.5, 0.5 } }));
    EllipseRegion wide { { 0.5 }, { 0.2 } };
    ConceptRegionSet crs { 2, { 1, 1 }, { wide, wide, wide, wide } };
    auto mm = membership(ds, one_d_spaces(), crs);
    EXPECT_TRUE(mm.consistent(2, 0));
    EXPECT_TRUE(mm.consistent(2, 1));
    EXPECT_EQ(mm.assigned(2), unassigned);
}

TEST(Membership, TouchingAnotherConceptInOneSpaceIsEnoughToContest)
{
    auto ds = normalize(make_dataset(2, { { 0, 0 }, { 1, 1 }, { 0.5, 0.5 } }));
    EllipseRegion mid { { 0.5 }, { 0.2 } };
    EllipseRegion far { { 0.0 }, { 0.1 } };
    ConceptRegionSet crs { 2, { 1, 1 }, { mid, mid, mid, far } };
    auto mm = membership(ds, one_d_spaces(), crs);
    EXPECT_TRUE(mm.consistent(2, 0));
    EXPECT_FALSE(mm.consistent(2, 1));
    EXPECT_EQ(mm.assigned(2), unassigned);
}

TEST(Membership, MisalignedRegionsAreAContractViolation)
{
    auto ds = normalize(make_dataset(2, { { 0, 0 }, { 1, 1 } }));
    ConceptRegionSet crs { 1, { 2 }, { { { 0.5, 0.5 }, { 0.1, 0.1 } } } };
    EXPECT_THROW(membership(ds, one_d_spaces(), crs), ContractViolation);
}

TEST(Membership, MatchesBruteForceAndCountChain)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Partition p { { { "A", { "x0", "x1" } }, { "B", { "x2" } } } };
    std::vector<std::size_t> dims { 2, 1 };
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<double>> rows(80, std::vector<double>(3));
        for (auto& r : rows) {
            for (auto& v : r) {
                v = u(rng);
            }
        }
        auto ds = normalize(make_dataset(3, rows));
        std::vector<double> g(genome_length(dims, 3));
        for (auto& x : g) {
            x = u(rng);
        }
        auto crs = decode(g, dims, 3);
        auto mm = membership(ds, p, crs);
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            for (std::size_t k = 0; k < 3; ++k) {
                for (std::size_t d = 0; d < 2; ++d) {
                    std::vector<double> x;
                    for (auto const& f : p.spaces[d].features) {
                        x.push_back(ds.at(i, ds.schema().require(f)));
                    }
                    ASSERT_EQ(mm.inside(i, k, d), contains(x, crs.at(k, d)));
                }
            }
            ASSERT_EQ(mm.assigned(i), reference_assignment(mm, i));
        }
        for (std::size_t k = 0; k < 3; ++k) {
            std::size_t assigned = 0, consistent = 0;
            std::vector<std::size_t> in(2, 0);
            for (std::size_t i = 0; i < ds.rows(); ++i) {
                assigned += mm.assigned(i) == static_cast<int>(k);
                consistent += mm.consistent(i, k);
                for (std::size_t d = 0; d < 2; ++d) {
                    in[d] += mm.inside(i, k, d);
                }
            }
            EXPECT_LE(assigned, consistent);
            EXPECT_LE(consistent, std::min(in[0], in[1]));
        }
    }
}

// With two 1-D spaces and nothing contested, the members of different
// concepts occupy disjoint intervals in each space.
TEST(Membership, UncontestedOneDimensionalMembersHaveDisjointIntervals)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::size_t> dims { 1, 1 };
    int checked = 0;
    for (int trial = 0; trial < 3000 && checked < 50; ++trial) {
        std::vector<std::vector<double>> rows(60, std::vector<double>(2));
        for (auto& r : rows) {
            r = { u(rng), u(rng) };
        }
        auto ds = normalize(make_dataset(2, rows));
        std::vector<double> g(genome_length(dims, 3));
        // Genes alternate center, radius for each 1-D space; keep radii small.
        for (std::size_t j = 0; j < g.size(); ++j) {
            g[j] = j % 2 == 0 ? u(rng) * 0.8 : u(rng) * 0.12;
        }
        auto mm = membership(ds, one_d_spaces(), decode(g, dims, 3));
        bool contested = false;
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            for (std::size_t d = 0; d < 2; ++d) {
                int hits = 0;
                for (std::size_t k = 0; k < 3; ++k) {
                    hits += mm.inside(i, k, d);
                }
                contested = contested || hits >= 2;
            }
        }
        if (contested) {
            continue;
        }
        ++checked;
        for (std::size_t d = 0; d < 2; ++d) {
            std::vector<std::optional<std::pair<double, double>>> span(3);
            for (std::size_t i = 0; i < ds.rows(); ++i) {
                int a = mm.assigned(i);
                if (a == unassigned) {
                    continue;
                }
                double v = ds.at(i, d);
                auto& s = span[static_cast<std::size_t>(a)];
                s = s ? std::pair { std::min(s->first, v), std::max(s->second, v) } : std::pair { v, v };
            }
            for (std::size_t a = 0; a < 3; ++a) {
                for (std::size_t b = a + 1; b < 3; ++b) {
                    if (span[a] && span[b]) {
                        EXPECT_TRUE(span[a]->second < span[b]->first || span[b]->second < span[a]->first);
                    }
                }
            }
        }
    }
    EXPECT_GE(checked, 10);
}
