#pragma once

#include "conceptid/core_data.hpp"

#include <random>
#include <string>
#include <vector>

namespace conceptid::testing {

// Schema of `n` parameter features named x0, x1, ...
inline auto plain_schema(std::size_t n) -> FeatureSchema
{
    std::vector<FeatureSpec> f;
    for (std::size_t j = 0; j < n; ++j) {
        f.push_back({ "x" + std::to_string(j), FeatureRole::parameter, Direction::none, "", std::nullopt });
    }
    return FeatureSchema(f);
}

inline auto make_dataset(std::size_t features, std::vector<std::vector<double>> const& rows) -> DataSet
{
    std::vector<double> values;
    std::vector<SampleId> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        values.insert(values.end(), rows[i].begin(), rows[i].end());
        ids.push_back(static_cast<SampleId>(i));
    }
    return DataSet(plain_schema(features), std::move(values), std::move(ids));
}

inline auto random_dataset(std::size_t rows, std::size_t features, std::uint64_t seed, double lo = -50.0,
    double hi = 50.0) -> DataSet
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<std::vector<double>> data(rows, std::vector<double>(features));
    for (auto& r : data) {
        for (auto& v : r) {
            v = u(rng);
        }
    }
    return make_dataset(features, data);
}

// Isotropic Gaussian blobs in two features, `per_blob` samples each.
inline auto blobs(std::vector<std::pair<double, double>> const& centers, std::size_t per_blob, double spread,
    std::uint64_t seed) -> DataSet
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, spread);
    std::vector<std::vector<double>> rows;
    for (auto const& [cx, cy] : centers) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            rows.push_back({ cx + n(rng), cy + n(rng) });
        }
    }
    return make_dataset(2, rows);
}

inline auto one_d_spaces() -> Partition { return Partition { { { "DS1", { "x0" } }, { "DS2", { "x1" } } } }; }

} // namespace conceptid::testing
