#pragma once

// Axis-aligned hyper-ellipse concept regions, the genome <-> region mapping
// used by the optimizer, and exact sample membership.

#include "conceptid/core_data.hpp"
#include "conceptid/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace conceptid {

struct EllipseRegion {
    std::vector<double> center;
    std::vector<double> radii;

    [[nodiscard]] auto dim() const -> std::size_t { return center.size(); }
    auto operator==(EllipseRegion const&) const -> bool = default;
};

// Box the genome is mapped onto. Centers may sit a quarter of the data range
// outside [0,1] so edge clusters can be covered by an ellipse interior.
struct RegionBounds {
    double center_lo { -0.25 };
    double center_hi { 1.25 };
    double radius_min { 0.01 };
    double radius_max { 1.5 };
};

// Boundary inclusive: sum(((x - c) / r)^2) <= 1.
inline auto contains(std::span<double const> point, EllipseRegion const& region) -> bool
{
    if (point.size() != region.dim() || region.radii.size() != region.dim()) {
        throw ContractViolation("contains: dimension mismatch");
    }
    double q = 0.0;
    for (std::size_t j = 0; j < point.size(); ++j) {
        double t = (point[j] - region.center[j]) / region.radii[j];
        q += t * t;
    }
    return q <= 1.0;
}

// K concepts x D description spaces, stored concept-major.
struct ConceptRegionSet {
    std::size_t concepts { 0 };
    std::vector<std::size_t> dims;
    std::vector<EllipseRegion> regions;

    [[nodiscard]] auto spaces() const -> std::size_t { return dims.size(); }
    [[nodiscard]] auto at(std::size_t k, std::size_t d) const -> EllipseRegion const& { return regions[k * dims.size() + d]; }
    [[nodiscard]] auto at(std::size_t k, std::size_t d) -> EllipseRegion& { return regions[k * dims.size() + d]; }
    auto operator==(ConceptRegionSet const&) const -> bool = default;
};

inline auto genome_length(std::span<std::size_t const> dims, std::size_t concepts) -> std::size_t
{
    return concepts * 2 * std::accumulate(dims.begin(), dims.end(), std::size_t { 0 });
}

// Per (k, d): n_d center genes followed by n_d radius genes, each mapped
// affinely from [0,1] onto the bounds box.
inline auto decode(std::span<double const> genome, std::span<std::size_t const> dims, std::size_t concepts,
    RegionBounds const& bounds = {}) -> ConceptRegionSet
{
    if (concepts == 0 || genome.size() != genome_length(dims, concepts)) {
        throw ContractViolation("decode: genome length " + std::to_string(genome.size()) + " does not match "
            + std::to_string(genome_length(dims, concepts)));
    }
    ConceptRegionSet crs;
    crs.concepts = concepts;
    crs.dims.assign(dims.begin(), dims.end());
    crs.regions.reserve(concepts * dims.size());
    auto const cw = bounds.center_hi - bounds.center_lo;
    auto const rw = bounds.radius_max - bounds.radius_min;
    std::size_t g = 0;
    for (std::size_t k = 0; k < concepts; ++k) {
        for (auto n : dims) {
            EllipseRegion r;
            r.center.resize(n);
            r.radii.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                r.center[j] = bounds.center_lo + genome[g + j] * cw;
                r.radii[j] = bounds.radius_min + genome[g + n + j] * rw;
            }
            g += 2 * n;
            crs.regions.push_back(std::move(r));
        }
    }
    return crs;
}

inline auto encode(ConceptRegionSet const& crs, RegionBounds const& bounds = {}) -> std::vector<double>
{
    std::vector<double> genome;
    genome.reserve(genome_length(crs.dims, crs.concepts));
    auto const cw = bounds.center_hi - bounds.center_lo;
    auto const rw = bounds.radius_max - bounds.radius_min;
    for (std::size_t k = 0; k < crs.concepts; ++k) {
        for (std::size_t d = 0; d < crs.spaces(); ++d) {
            auto const& r = crs.at(k, d);
            for (double c : r.center) {
                genome.push_back((c - bounds.center_lo) / cw);
            }
            for (double x : r.radii) {
                genome.push_back((x - bounds.radius_min) / rw);
            }
        }
    }
    return genome;
}

inline constexpr int unassigned = -1;

// inside(i,k,d): sample i lies in concept k's region of space d.
// consistent(i,k): inside in every space. assigned(i): the single concept i is
// consistent with while touching no other concept's region in any space.
class MembershipMatrix {
public:
    MembershipMatrix() = default;

    // Derives consistency and exclusive assignment from raw inside flags laid
    // out as ((i * K) + k) * D + d.
    MembershipMatrix(std::size_t n, std::size_t k, std::size_t d, std::vector<std::uint8_t> inside)
        : n_(n), k_(k), d_(d), inside_(std::move(inside))
    {
        if (inside_.size() != n * k * d) {
            throw ContractViolation("membership matrix: flag count mismatch");
        }
        derive();
    }

    [[nodiscard]] auto samples() const -> std::size_t { return n_; }
    [[nodiscard]] auto concepts() const -> std::size_t { return k_; }
    [[nodiscard]] auto spaces() const -> std::size_t { return d_; }

    [[nodiscard]] auto inside(std::size_t i, std::size_t k, std::size_t d) const -> bool
    {
        return inside_[(i * k_ + k) * d_ + d] != 0;
    }
    [[nodiscard]] auto consistent(std::size_t i, std::size_t k) const -> bool { return consistent_[i * k_ + k] != 0; }
    [[nodiscard]] auto assigned(std::size_t i) const -> int { return assigned_[i]; }
    [[nodiscard]] auto assignment() const -> std::vector<int> const& { return assigned_; }
    [[nodiscard]] auto flags() const -> std::vector<std::uint8_t> const& { return inside_; }

private:
    void derive()
    {
        consistent_.assign(n_ * k_, 0);
        assigned_.assign(n_, unassigned);
        for (std::size_t i = 0; i < n_; ++i) {
            std::size_t touching = 0;
            int candidate = unassigned;
            for (std::size_t k = 0; k < k_; ++k) {
                bool all = true;
                bool any = false;
                for (std::size_t d = 0; d < d_; ++d) {
                    bool in = inside(i, k, d);
                    all = all && in;
                    any = any || in;
                }
                consistent_[i * k_ + k] = all ? 1 : 0;
                if (any) {
                    ++touching;
                }
                if (all) {
                    candidate = static_cast<int>(k);
                }
            }
            // consistent implies touching, so a single toucher is the candidate
            if (touching == 1 && candidate != unassigned) {
                assigned_[i] = candidate;
            }
        }
    }

    std::size_t n_ { 0 };
    std::size_t k_ { 0 };
    std::size_t d_ { 0 };
    std::vector<std::uint8_t> inside_;
    std::vector<std::uint8_t> consistent_;
    std::vector<int> assigned_;
};

// Normalized data split into contiguous per-space blocks (N x n_d each).
class ProjectedData {
public:
    ProjectedData(DataSet const& normalized, Partition const& partition)
        : n_(normalized.rows())
    {
        auto report = validate_partition(normalized.schema(), partition);
        if (!report.valid()) {
            throw ValidationError(std::move(report));
        }
        for (auto const& space : partition.spaces) {
            std::vector<std::size_t> cols;
            for (auto const& f : space.features) {
                cols.push_back(normalized.schema().require(f));
            }
            std::vector<double> block(n_ * cols.size());
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t j = 0; j < cols.size(); ++j) {
                    block[i * cols.size() + j] = normalized.at(i, cols[j]);
                }
            }
            dims_.push_back(cols.size());
            blocks_.push_back(std::move(block));
        }
    }

    [[nodiscard]] auto samples() const -> std::size_t { return n_; }
    [[nodiscard]] auto dims() const -> std::vector<std::size_t> const& { return dims_; }
    [[nodiscard]] auto point(std::size_t d, std::size_t i) const -> std::span<double const>
    {
        return { blocks_[d].data() + i * dims_[d], dims_[d] };
    }
    [[nodiscard]] auto block(std::size_t d) const -> std::vector<double> const& { return blocks_[d]; }

private:
    std::size_t n_;
    std::vector<std::size_t> dims_;
    std::vector<std::vector<double>> blocks_;
};

inline auto membership(ProjectedData const& data, ConceptRegionSet const& crs) -> MembershipMatrix
{
    auto const n = data.samples();
    auto const kc = crs.concepts;
    auto const dc = crs.spaces();
    if (crs.dims != data.dims() || crs.regions.size() != kc * dc) {
        throw ContractViolation("membership: region set does not match the partition");
    }
    std::vector<std::uint8_t> flags(n * kc * dc, 0);
    std::vector<double> inv;
    for (std::size_t d = 0; d < dc; ++d) {
        auto const nd = data.dims()[d];
        auto const& block = data.block(d);
        for (std::size_t k = 0; k < kc; ++k) {
            auto const& r = crs.at(k, d);
            inv.resize(nd);
            for (std::size_t j = 0; j < nd; ++j) {
                inv[j] = 1.0 / r.radii[j];
            }
            for (std::size_t i = 0; i < n; ++i) {
                double const* x = block.data() + i * nd;
                double q = 0.0;
                for (std::size_t j = 0; j < nd; ++j) {
                    double t = (x[j] - r.center[j]) * inv[j];
                    q += t * t;
                }
                flags[(i * kc + k) * dc + d] = q <= 1.0 ? 1 : 0;
            }
        }
    }
    return { n, kc, dc, std::move(flags) };
}

inline auto membership(DataSet const& normalized, Partition const& partition, ConceptRegionSet const& crs)
    -> MembershipMatrix
{
    return membership(ProjectedData(normalized, partition), crs);
}

inline void to_json(nlohmann::json& j, EllipseRegion const& r)
{
    j = { { "center", r.center }, { "radii", r.radii } };
}

inline void from_json(nlohmann::json const& j, EllipseRegion& r)
{
    r.center = j.at("center").get<std::vector<double>>();
    r.radii = j.at("radii").get<std::vector<double>>();
    if (r.center.size() != r.radii.size()) {
        throw InputError("region: center and radii differ in length");
    }
}

inline void to_json(nlohmann::json& j, ConceptRegionSet const& crs)
{
    auto concepts = nlohmann::json::array();
    for (std::size_t k = 0; k < crs.concepts; ++k) {
        auto spaces = nlohmann::json::array();
        for (std::size_t d = 0; d < crs.spaces(); ++d) {
            spaces.push_back(crs.at(k, d));
        }
        concepts.push_back({ { "spaces", spaces } });
    }
    j = { { "concepts", concepts } };
}

inline void from_json(nlohmann::json const& j, ConceptRegionSet& crs)
{
    crs = {};
    auto const& concepts = j.at("concepts");
    crs.concepts = concepts.size();
    for (std::size_t k = 0; k < concepts.size(); ++k) {
        auto const& spaces = concepts[k].at("spaces");
        if (k == 0) {
            for (auto const& s : spaces) {
                crs.dims.push_back(s.at("center").size());
            }
        } else if (spaces.size() != crs.dims.size()) {
            throw InputError("region set: concepts disagree on the number of spaces");
        }
        for (std::size_t d = 0; d < spaces.size(); ++d) {
            auto r = spaces[d].get<EllipseRegion>();
            if (r.dim() != crs.dims[d]) {
                throw InputError("region set: dimension mismatch in space " + std::to_string(d));
            }
            crs.regions.push_back(std::move(r));
        }
    }
}

} // namespace conceptid
