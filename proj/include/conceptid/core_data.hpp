#pragma once

// Tabular Pareto-set data: feature schema, immutable data sets, min-max
// normalization, description-space partitions and their validation.

#include "conceptid/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace conceptid {

using SampleId = std::int64_t;

enum class FeatureRole { parameter, objective };
enum class Direction { none, minimize, maximize };

NLOHMANN_JSON_SERIALIZE_ENUM(FeatureRole, {
    { FeatureRole::parameter, "parameter" },
    { FeatureRole::objective, "objective" },
})

NLOHMANN_JSON_SERIALIZE_ENUM(Direction, {
    { Direction::none, "none" },
    { Direction::minimize, "minimize" },
    { Direction::maximize, "maximize" },
})

struct Range {
    double min { 0.0 };
    double max { 0.0 };

    [[nodiscard]] auto width() const -> double { return max - min; }
    [[nodiscard]] auto constant() const -> bool { return !(max > min); }
    auto operator==(Range const&) const -> bool = default;
};

struct FeatureSpec {
    std::string name;
    FeatureRole role { FeatureRole::parameter };
    Direction direction { Direction::none };
    std::string unit;
    std::optional<Range> bounds;
};

class FeatureSchema {
public:
    FeatureSchema() = default;

    explicit FeatureSchema(std::vector<FeatureSpec> features)
        : features_(std::move(features))
    {
        for (std::size_t i = 0; i < features_.size(); ++i) {
            auto const& f = features_[i];
            if (f.name.empty()) {
                throw InputError("feature schema: feature " + std::to_string(i) + " has an empty name");
            }
            if (!index_.emplace(f.name, i).second) {
                throw InputError("feature schema: duplicate feature name '" + f.name + "'");
            }
            if (f.role == FeatureRole::objective && f.direction == Direction::none) {
                throw InputError("feature schema: objective '" + f.name + "' needs direction minimize or maximize");
            }
            if (f.role == FeatureRole::parameter && f.direction != Direction::none) {
                throw InputError("feature schema: parameter '" + f.name + "' must have direction none");
            }
        }
    }

    [[nodiscard]] auto size() const -> std::size_t { return features_.size(); }
    [[nodiscard]] auto features() const -> std::vector<FeatureSpec> const& { return features_; }
    [[nodiscard]] auto operator[](std::size_t i) const -> FeatureSpec const& { return features_[i]; }

    [[nodiscard]] auto index_of(std::string_view name) const -> std::optional<std::size_t>
    {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] auto require(std::string_view name) const -> std::size_t
    {
        auto idx = index_of(name);
        if (!idx) {
            throw NotFound("unknown feature '" + std::string(name) + "'");
        }
        return *idx;
    }

    [[nodiscard]] auto names() const -> std::vector<std::string>
    {
        std::vector<std::string> out;
        out.reserve(features_.size());
        for (auto const& f : features_) {
            out.push_back(f.name);
        }
        return out;
    }

private:
    std::vector<FeatureSpec> features_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Immutable N x F sample matrix (row-major) with observed per-feature ranges.
// A normalized data set additionally remembers the ranges it was scaled from.
class DataSet {
public:
    DataSet() = default;

    DataSet(FeatureSchema schema, std::vector<double> values, std::vector<SampleId> ids,
        std::optional<std::vector<Range>> scaled_from = std::nullopt)
        : schema_(std::move(schema))
        , values_(std::move(values))
        , ids_(std::move(ids))
        , scaled_from_(std::move(scaled_from))
    {
        auto const f = schema_.size();
        if (f == 0) {
            throw ContractViolation("data set needs at least one feature");
        }
        if (values_.size() != ids_.size() * f) {
            throw ContractViolation("data set: value count does not match rows x features");
        }
        if (scaled_from_ && scaled_from_->size() != f) {
            throw ContractViolation("data set: scaling ranges do not match feature count");
        }
        std::set<SampleId> seen;
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (!seen.insert(ids_[i]).second) {
                throw ContractViolation("data set: duplicate sample id " + std::to_string(ids_[i]));
            }
            row_of_.emplace(ids_[i], i);
        }
        stats_.assign(f, Range { 0.0, 0.0 });
        for (std::size_t i = 0; i < rows(); ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                double v = values_[i * f + j];
                if (!std::isfinite(v)) {
                    throw ContractViolation("data set: non-finite value at row " + std::to_string(i));
                }
                if (i == 0) {
                    stats_[j] = { v, v };
                } else {
                    stats_[j].min = std::min(stats_[j].min, v);
                    stats_[j].max = std::max(stats_[j].max, v);
                }
            }
        }
    }

    [[nodiscard]] auto rows() const -> std::size_t { return ids_.size(); }
    [[nodiscard]] auto cols() const -> std::size_t { return schema_.size(); }
    [[nodiscard]] auto schema() const -> FeatureSchema const& { return schema_; }
    [[nodiscard]] auto ids() const -> std::vector<SampleId> const& { return ids_; }
    [[nodiscard]] auto values() const -> std::vector<double> const& { return values_; }
    [[nodiscard]] auto stats() const -> std::vector<Range> const& { return stats_; }
    [[nodiscard]] auto scaled_from() const -> std::optional<std::vector<Range>> const& { return scaled_from_; }
    [[nodiscard]] auto is_normalized() const -> bool { return scaled_from_.has_value(); }

    [[nodiscard]] auto at(std::size_t row, std::size_t col) const -> double { return values_[row * cols() + col]; }

    [[nodiscard]] auto row(std::size_t i) const -> std::span<double const>
    {
        return { values_.data() + i * cols(), cols() };
    }

    [[nodiscard]] auto column(std::size_t col) const -> std::vector<double>
    {
        std::vector<double> out(rows());
        for (std::size_t i = 0; i < rows(); ++i) {
            out[i] = at(i, col);
        }
        return out;
    }

    [[nodiscard]] auto column(std::string_view name) const -> std::vector<double>
    {
        return column(schema_.require(name));
    }

    [[nodiscard]] auto row_of(SampleId id) const -> std::optional<std::size_t>
    {
        auto it = row_of_.find(id);
        if (it == row_of_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] auto contains(SampleId id) const -> bool { return row_of_.contains(id); }

private:
    FeatureSchema schema_;
    std::vector<double> values_;
    std::vector<SampleId> ids_;
    std::vector<Range> stats_;
    std::optional<std::vector<Range>> scaled_from_;
    std::unordered_map<SampleId, std::size_t> row_of_;
};

// ---------------------------------------------------------------------------
// CSV input

namespace detail {

    inline auto trim(std::string_view s) -> std::string_view
    {
        auto const ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string_view::npos) {
            return {};
        }
        auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    }

    inline auto split_csv_line(std::string_view line) -> std::vector<std::string_view>
    {
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            auto pos = line.find(',', start);
            if (pos == std::string_view::npos) {
                cells.push_back(trim(line.substr(start)));
                break;
            }
            cells.push_back(trim(line.substr(start, pos - start)));
            start = pos + 1;
        }
        return cells;
    }

    inline auto strip_bom(std::string& s) -> void
    {
        if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF && static_cast<unsigned char>(s[1]) == 0xBB
            && static_cast<unsigned char>(s[2]) == 0xBF) {
            s.erase(0, 3);
        }
    }

} // namespace detail

// Reads a header + numeric rows. Columns are matched to the schema by name and
// stored in schema order; sample ids are the 0-based data row indices.
inline auto read_csv(std::istream& in, FeatureSchema const& schema) -> DataSet
{
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaMismatch("", "csv: missing header row");
    }
    detail::strip_bom(line);
    auto header = detail::split_csv_line(line);

    std::vector<std::size_t> target(header.size());
    std::vector<bool> present(schema.size(), false);
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::string name(header[c]);
        auto idx = schema.index_of(name);
        if (!idx) {
            throw SchemaMismatch(name, "csv: column '" + name + "' is not in the schema");
        }
        if (present[*idx]) {
            throw SchemaMismatch(name, "csv: column '" + name + "' appears twice");
        }
        present[*idx] = true;
        target[c] = *idx;
    }
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (!present[j]) {
            throw SchemaMismatch(schema[j].name, "csv: missing column '" + schema[j].name + "'");
        }
    }

    std::vector<double> values;
    std::vector<SampleId> ids;
    std::size_t row = 0;
    std::vector<double> buffer(schema.size());
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(row, cells.size(),
                "csv: row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) + " cells, expected "
                    + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            auto cell = cells[c];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
                throw ParseError(row, c,
                    "csv: bad value '" + std::string(cell) + "' at row " + std::to_string(row + 1) + ", column '"
                        + std::string(header[c]) + "'");
            }
            buffer[target[c]] = v;
        }
        values.insert(values.end(), buffer.begin(), buffer.end());
        ids.push_back(static_cast<SampleId>(row));
        ++row;
    }
    if (ids.empty()) {
        throw ParseError(0, 0, "csv: no data rows");
    }
    return DataSet(schema, std::move(values), std::move(ids));
}

inline auto load_csv(std::string const& path, FeatureSchema const& schema) -> DataSet
{
    std::ifstream in(path);
    if (!in) {
        throw NotFound("cannot open data file '" + path + "'");
    }
    return read_csv(in, schema);
}

inline auto write_csv(std::ostream& out, DataSet const& ds) -> void
{
    auto const& schema = ds.schema();
    for (std::size_t j = 0; j < schema.size(); ++j) {
        out << (j ? "," : "") << schema[j].name;
    }
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < ds.cols(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.at(i, j));
            (void)ec;
            if (j) {
                out << ',';
            }
            out.write(buf, ptr - buf);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Normalization

// Non-constant features map affinely onto [0,1]; constant features map to 0.5.
inline auto normalize(DataSet const& ds) -> DataSet
{
    auto const& st = ds.stats();
    std::vector<double> out(ds.values().size());
    auto const f = ds.cols();
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            out[i * f + j] = st[j].constant() ? 0.5 : (ds.at(i, j) - st[j].min) / st[j].width();
        }
    }
    return DataSet(ds.schema(), std::move(out), ds.ids(), st);
}

inline auto denormalize(DataSet const& ds) -> DataSet
{
    if (!ds.scaled_from()) {
        throw ContractViolation("denormalize: data set was not produced by normalize");
    }
    auto const& st = *ds.scaled_from();
    std::vector<double> out(ds.values().size());
    auto const f = ds.cols();
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            out[i * f + j] = st[j].constant() ? st[j].min : st[j].min + ds.at(i, j) * st[j].width();
        }
    }
    return DataSet(ds.schema(), std::move(out), ds.ids());
}

// Rows for the given ids, in data set order. Ranges are recomputed.
inline auto subset(DataSet const& ds, std::span<SampleId const> ids) -> DataSet
{
    if (ids.empty()) {
        throw InputError("subset: empty id list");
    }
    std::vector<SampleId> missing;
    std::vector<bool> keep(ds.rows(), false);
    for (auto id : ids) {
        auto r = ds.row_of(id);
        if (!r) {
            missing.push_back(id);
        } else {
            keep[*r] = true;
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "subset: unknown sample ids [";
        for (std::size_t i = 0; i < missing.size(); ++i) {
            msg << (i ? ", " : "") << missing[i];
        }
        msg << "]";
        throw NotFound(msg.str());
    }
    std::vector<double> values;
    std::vector<SampleId> kept;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (keep[i]) {
            auto r = ds.row(i);
            values.insert(values.end(), r.begin(), r.end());
            kept.push_back(ds.ids()[i]);
        }
    }
    return DataSet(ds.schema(), std::move(values), std::move(kept));
}

// ---------------------------------------------------------------------------
// Partitions

struct DescriptionSpace {
    std::string name;
    std::vector<std::string> features;
    auto operator==(DescriptionSpace const&) const -> bool = default;
};

struct Partition {
    std::vector<DescriptionSpace> spaces;

    [[nodiscard]] auto size() const -> std::size_t { return spaces.size(); }
    [[nodiscard]] auto dims() const -> std::vector<std::size_t>
    {
        std::vector<std::size_t> d;
        d.reserve(spaces.size());
        for (auto const& s : spaces) {
            d.push_back(s.features.size());
        }
        return d;
    }
    auto operator==(Partition const&) const -> bool = default;
};

enum class ViolationKind { no_spaces, empty_space, unknown_feature, duplicate_feature, unknown_sample, invalid_setting };

NLOHMANN_JSON_SERIALIZE_ENUM(ViolationKind, {
    { ViolationKind::no_spaces, "no spaces" },
    { ViolationKind::empty_space, "empty space" },
    { ViolationKind::unknown_feature, "unknown feature" },
    { ViolationKind::duplicate_feature, "duplicate feature" },
    { ViolationKind::unknown_sample, "unknown sample" },
    { ViolationKind::invalid_setting, "invalid setting" },
})

struct Violation {
    ViolationKind kind;
    std::string space;
    std::string feature;
    std::string message;
    auto operator==(Violation const&) const -> bool = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] auto valid() const -> bool { return violations.empty(); }
    [[nodiscard]] auto has(ViolationKind kind) const -> bool
    {
        return std::any_of(violations.begin(), violations.end(), [kind](auto const& v) { return v.kind == kind; });
    }
    [[nodiscard]] auto summary() const -> std::string
    {
        std::string s;
        for (auto const& v : violations) {
            s += (s.empty() ? "" : "; ") + v.message;
        }
        return s;
    }
};

class ValidationError : public InputError {
public:
    explicit ValidationError(ValidationReport report)
        : InputError("validation failed: " + report.summary()), report_(std::move(report)) {}
    [[nodiscard]] auto report() const -> ValidationReport const& { return report_; }

private:
    ValidationReport report_;
};

inline auto validate_partition(FeatureSchema const& schema, Partition const& p) -> ValidationReport
{
    ValidationReport report;
    if (p.spaces.empty()) {
        report.violations.push_back({ ViolationKind::no_spaces, "", "", "partition has no description spaces" });
    }
    std::map<std::string, std::string> owner;
    for (auto const& space : p.spaces) {
        if (space.features.empty()) {
            report.violations.push_back(
                { ViolationKind::empty_space, space.name, "", "empty space: '" + space.name + "' has no features" });
        }
        for (auto const& f : space.features) {
            if (!schema.index_of(f)) {
                report.violations.push_back({ ViolationKind::unknown_feature, space.name, f,
                    "unknown feature: '" + f + "' in space '" + space.name + "'" });
            }
            auto [it, inserted] = owner.emplace(f, space.name);
            if (!inserted) {
                report.violations.push_back({ ViolationKind::duplicate_feature, space.name, f,
                    "duplicate feature: '" + f + "' in spaces '" + it->second + "' and '" + space.name + "'" });
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, Range const& r) { j = nlohmann::json::array({ r.min, r.max }); }
inline void from_json(nlohmann::json const& j, Range& r)
{
    r.min = j.at(0).get<double>();
    r.max = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, FeatureSpec const& f)
{
    j = { { "name", f.name }, { "role", f.role }, { "direction", f.direction }, { "unit", f.unit } };
    if (f.bounds) {
        j["bounds"] = *f.bounds;
    }
}

inline void from_json(nlohmann::json const& j, FeatureSpec& f)
{
    f.name = j.at("name").get<std::string>();
    f.role = j.value("role", FeatureRole::parameter);
    f.direction = j.value("direction", Direction::none);
    f.unit = j.value("unit", std::string {});
    if (j.contains("bounds") && !j["bounds"].is_null()) {
        f.bounds = j["bounds"].get<Range>();
    }
}

inline void to_json(nlohmann::json& j, FeatureSchema const& s) { j = { { "features", s.features() } }; }
inline void from_json(nlohmann::json const& j, FeatureSchema& s)
{
    s = FeatureSchema(j.at("features").get<std::vector<FeatureSpec>>());
}

inline void to_json(nlohmann::json& j, DescriptionSpace const& s)
{
    j = { { "name", s.name }, { "features", s.features } };
}
inline void from_json(nlohmann::json const& j, DescriptionSpace& s)
{
    s.name = j.value("name", std::string {});
    s.features = j.at("features").get<std::vector<std::string>>();
}

inline void to_json(nlohmann::json& j, Partition const& p) { j = { { "spaces", p.spaces } }; }
inline void from_json(nlohmann::json const& j, Partition& p)
{
    p.spaces = j.at("spaces").get<std::vector<DescriptionSpace>>();
    for (std::size_t i = 0; i < p.spaces.size(); ++i) {
        if (p.spaces[i].name.empty()) {
            p.spaces[i].name = "DS" + std::to_string(i + 1);
        }
    }
}

inline void to_json(nlohmann::json& j, Violation const& v)
{
    j = { { "kind", v.kind }, { "space", v.space }, { "feature", v.feature }, { "message", v.message } };
}

inline void to_json(nlohmann::json& j, ValidationReport const& r)
{
    j = { { "valid", r.valid() }, { "violations", r.violations } };
}

inline auto read_json_file(std::string const& path) -> nlohmann::json
{
    std::ifstream in(path);
    if (!in) {
        throw NotFound("cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (nlohmann::json::parse_error const& e) {
        throw InputError("invalid JSON in '" + path + "': " + e.what());
    }
}

} // namespace conceptid
