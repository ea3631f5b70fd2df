#pragma once

// Concept identification runs: normalize, search region parameters with
// CMA-ES maximizing Q, and package the best regions with their assignment.
// Refinement re-runs identification on the members of one concept.

#include "conceptid/cmaes.hpp"
#include "conceptid/core_data.hpp"
#include "conceptid/error.hpp"
#include "conceptid/metric.hpp"
#include "conceptid/parallel.hpp"
#include "conceptid/regions.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace conceptid {

// ---------------------------------------------------------------------------
// Preference selection

enum class PreferenceOrder { lowest, highest, tradeoff };

NLOHMANN_JSON_SERIALIZE_ENUM(PreferenceOrder, {
    { PreferenceOrder::lowest, "lowest" },
    { PreferenceOrder::highest, "highest" },
    { PreferenceOrder::tradeoff, "tradeoff" },
})

// lowest/highest use features[0]; tradeoff ranks by distance to the ideal
// point (per-feature minimum) over all features, min-max normalized.
struct PreferenceRule {
    PreferenceOrder order { PreferenceOrder::lowest };
    std::vector<std::string> features;
    std::size_t count { 0 };
    auto operator==(PreferenceRule const&) const -> bool = default;
};

// Rules are applied in order; a later rule skips ids an earlier one already
// picked, so disjoint rule sets add up. Ties break by sample id.
inline auto select_preferences(DataSet const& ds, std::vector<PreferenceRule> const& rules) -> std::vector<SampleId>
{
    std::set<SampleId> chosen;
    for (auto const& rule : rules) {
        if (rule.features.empty()) {
            throw InputError("preference rule without features");
        }
        if (rule.count > ds.rows()) {
            throw InputError("preference rule asks for " + std::to_string(rule.count) + " samples, data set has "
                + std::to_string(ds.rows()));
        }
        std::vector<std::size_t> cols;
        for (auto const& f : rule.features) {
            cols.push_back(ds.schema().require(f));
        }
        std::vector<double> key(ds.rows());
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            switch (rule.order) {
            case PreferenceOrder::lowest:
                key[i] = ds.at(i, cols[0]);
                break;
            case PreferenceOrder::highest:
                key[i] = -ds.at(i, cols[0]);
                break;
            case PreferenceOrder::tradeoff: {
                double s = 0.0;
                for (auto c : cols) {
                    auto const& st = ds.stats()[c];
                    double v = st.constant() ? 0.0 : (ds.at(i, c) - st.min) / st.width();
                    s += v * v;
                }
                key[i] = std::sqrt(s);
                break;
            }
            }
        }
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            if (!chosen.contains(ds.ids()[i])) {
                order.push_back(i);
            }
        }
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
            if (key[a] != key[b]) {
                return key[a] < key[b];
            }
            return ds.ids()[a] < ds.ids()[b];
        });
        for (std::size_t p = 0; p < std::min(rule.count, order.size()); ++p) {
            chosen.insert(ds.ids()[order[p]]);
        }
    }
    return { chosen.begin(), chosen.end() };
}

// ---------------------------------------------------------------------------
// Run specification and result

struct ParentRef {
    std::string run_id;
    std::size_t concept_id { 0 };
    auto operator==(ParentRef const&) const -> bool = default;
};

struct RunSpec {
    std::string label;
    std::string dataset;
    Partition partition;
    std::size_t concepts { 3 };
    MetricWeights weights;
    CmaesConfig cmaes; // dimension is derived from partition and concepts
    std::vector<SampleId> preference_ids;
    std::vector<PreferenceRule> preference_rules;
    std::optional<ParentRef> parent_run;

    [[nodiscard]] auto genome_length() const -> std::size_t
    {
        auto d = partition.dims();
        return conceptid::genome_length(d, concepts);
    }
};

struct RunResult {
    std::string run_id;
    RunSpec spec;
    ConceptRegionSet regions;
    std::vector<double> genome;
    std::vector<SampleId> sample_ids;
    std::vector<int> labels; // aligned with sample_ids, -1 = unassigned
    MetricBreakdown metric;
    OptimizerTrace trace;
    std::vector<std::size_t> concept_sizes;
    std::size_t unassigned_count { 0 };

    [[nodiscard]] auto members(std::size_t k) const -> std::vector<SampleId>
    {
        std::vector<SampleId> out;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == static_cast<int>(k)) {
                out.push_back(sample_ids[i]);
            }
        }
        return out;
    }
};

// Validation of everything a run needs from its data set.
inline auto validate_spec(RunSpec const& spec, DataSet const& ds) -> ValidationReport
{
    auto report = validate_partition(ds.schema(), spec.partition);
    auto add = [&](ViolationKind kind, std::string feature, std::string msg) {
        report.violations.push_back({ kind, "", std::move(feature), std::move(msg) });
    };
    if (spec.concepts < 1) {
        add(ViolationKind::invalid_setting, "", "K must be >= 1");
    }
    if (!spec.weights.valid()) {
        add(ViolationKind::invalid_setting, "", "metric weights must be finite, non-negative, with s_min < s_max <= 1");
    }
    if (spec.cmaes.population < 4 || spec.cmaes.generations < 1 || !(spec.cmaes.initial_sigma > 0.0)
        || spec.cmaes.mu() < 1 || spec.cmaes.mu() > spec.cmaes.population) {
        add(ViolationKind::invalid_setting, "", "cmaes settings need population >= 4, generations >= 1, sigma > 0");
    }
    for (auto id : spec.preference_ids) {
        if (!ds.contains(id)) {
            add(ViolationKind::unknown_sample, "", "preference id " + std::to_string(id) + " is not in the data set");
        }
    }
    for (auto const& r : spec.preference_rules) {
        for (auto const& f : r.features) {
            if (!ds.schema().index_of(f)) {
                add(ViolationKind::unknown_feature, f, "unknown feature: '" + f + "' in preference rule");
            }
        }
        if (r.count > ds.rows()) {
            add(ViolationKind::invalid_setting, "", "preference rule count exceeds the data set size");
        }
    }
    return report;
}

namespace detail {

    // FNV-1a, 64 bit. Used only as a stable content fingerprint for run ids.
    class Fingerprint {
    public:
        void bytes(void const* data, std::size_t n)
        {
            auto const* p = static_cast<unsigned char const*>(data);
            for (std::size_t i = 0; i < n; ++i) {
                h_ ^= p[i];
                h_ *= 0x100000001b3ULL;
            }
        }
        void text(std::string const& s) { bytes(s.data(), s.size()); }
        [[nodiscard]] auto hex() const -> std::string
        {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
            return buf;
        }

    private:
        std::uint64_t h_ { 0xcbf29ce484222325ULL };
    };

} // namespace detail

inline void to_json(nlohmann::json& j, RunSpec const& s);

inline auto run_fingerprint(RunSpec const& spec, DataSet const& ds) -> std::string
{
    detail::Fingerprint fp;
    nlohmann::json j = spec;
    fp.text(j.dump());
    fp.bytes(ds.values().data(), ds.values().size() * sizeof(double));
    fp.bytes(ds.ids().data(), ds.ids().size() * sizeof(SampleId));
    return "run-" + fp.hex();
}

struct IdentifyOptions {
    std::size_t workers { 1 };
    ProgressCallback progress;
};

// Evaluates Q for genomes over one normalized data set.
class ConceptObjective {
public:
    ConceptObjective(DataSet const& normalized, RunSpec const& spec)
        : data_(normalized, spec.partition)
        , concepts_(spec.concepts)
        , weights_(spec.weights)
    {
        for (auto id : spec.preference_ids) {
            auto r = normalized.row_of(id);
            if (!r) {
                throw NotFound("preference id " + std::to_string(id) + " is not in the data set");
            }
            preference_rows_.push_back(*r);
        }
    }

    [[nodiscard]] auto dims() const -> std::vector<std::size_t> const& { return data_.dims(); }
    [[nodiscard]] auto regions(std::span<double const> genome) const -> ConceptRegionSet
    {
        return decode(genome, data_.dims(), concepts_);
    }
    [[nodiscard]] auto membership(std::span<double const> genome) const -> MembershipMatrix
    {
        return conceptid::membership(data_, regions(genome));
    }
    [[nodiscard]] auto breakdown(std::span<double const> genome) const -> MetricBreakdown
    {
        return evaluate(membership(genome), weights_, preference_rows_);
    }
    auto operator()(std::span<double const> genome) const -> double { return breakdown(genome).q; }

private:
    ProjectedData data_;
    std::size_t concepts_;
    MetricWeights weights_;
    std::vector<std::size_t> preference_rows_;
};

inline auto identify(RunSpec spec, DataSet const& ds, IdentifyOptions const& options = {}) -> RunResult
{
    if (ds.rows() == 0) {
        throw InputError("identify: empty data set");
    }
    if (!spec.preference_rules.empty()) {
        auto report = validate_spec(spec, ds);
        if (!report.valid()) {
            throw ValidationError(std::move(report));
        }
        auto picked = select_preferences(ds, spec.preference_rules);
        std::set<SampleId> all(spec.preference_ids.begin(), spec.preference_ids.end());
        all.insert(picked.begin(), picked.end());
        spec.preference_ids.assign(all.begin(), all.end());
    }
    auto report = validate_spec(spec, ds);
    if (!report.valid()) {
        throw ValidationError(std::move(report));
    }
    spec.cmaes.dimension = spec.genome_length();

    auto const normalized = normalize(ds);
    ConceptObjective objective(normalized, spec);

    auto optimum = conceptid::run(
        spec.cmaes, [&](std::span<double const> g) { return objective(g); }, options.progress, options.workers);

    // Keep the starting point if the search never beat it.
    std::vector<double> genome = optimum.best_genome;
    auto metric = objective.breakdown(genome);
    std::vector<double> center(spec.cmaes.dimension, 0.5);
    auto center_metric = objective.breakdown(center);
    if (center_metric.q > metric.q) {
        genome = center;
        metric = center_metric;
    }

    RunResult result;
    result.run_id = run_fingerprint(spec, ds);
    result.regions = objective.regions(genome);
    result.genome = genome;
    result.sample_ids = ds.ids();
    result.labels = objective.membership(genome).assignment();
    result.metric = std::move(metric);
    result.trace = std::move(optimum.trace);
    result.concept_sizes.assign(spec.concepts, 0);
    for (int l : result.labels) {
        if (l == unassigned) {
            ++result.unassigned_count;
        } else {
            ++result.concept_sizes[static_cast<std::size_t>(l)];
        }
    }
    result.spec = std::move(spec);
    return result;
}

// Optional replacements for the parent's settings. Preferences are not
// inherited: the parent's anchors generally lie outside the refined subset.
struct RefineOverrides {
    std::optional<Partition> partition;
    std::optional<std::size_t> concepts;
    std::optional<MetricWeights> weights;
    std::optional<CmaesConfig> cmaes;
    std::vector<SampleId> preference_ids;
    std::vector<PreferenceRule> preference_rules;
    std::optional<std::string> label;
};

inline auto refine_spec(RunResult const& parent, std::size_t concept_id, RefineOverrides const& o) -> RunSpec
{
    RunSpec spec = parent.spec;
    if (o.partition) {
        spec.partition = *o.partition;
    }
    if (o.concepts) {
        spec.concepts = *o.concepts;
    }
    if (o.weights) {
        spec.weights = *o.weights;
    }
    if (o.cmaes) {
        spec.cmaes = *o.cmaes;
    }
    spec.preference_ids = o.preference_ids;
    spec.preference_rules = o.preference_rules;
    spec.label = o.label.value_or(parent.spec.label + "/concept-" + std::to_string(concept_id));
    spec.parent_run = ParentRef { parent.run_id, concept_id };
    return spec;
}

inline auto refine(RunResult const& parent, std::size_t concept_id, RefineOverrides const& overrides, DataSet const& ds,
    IdentifyOptions const& options = {}) -> RunResult
{
    if (concept_id >= parent.spec.concepts) {
        throw InputError("refine: concept " + std::to_string(concept_id) + " does not exist (K = "
            + std::to_string(parent.spec.concepts) + ")");
    }
    auto ids = parent.members(concept_id);
    if (ids.empty()) {
        throw InputError("cannot refine empty concept " + std::to_string(concept_id));
    }
    return identify(refine_spec(parent, concept_id, overrides), subset(ds, ids), options);
}

// Observed [min, max] of each concept's members on one feature (nullopt for
// empty concepts).
inline auto member_ranges(RunResult const& r, DataSet const& ds, std::string const& feature)
    -> std::vector<std::optional<Range>>
{
    auto col = ds.schema().require(feature);
    std::vector<std::optional<Range>> out(r.spec.concepts);
    for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
        if (r.labels[i] == unassigned) {
            continue;
        }
        auto row = ds.row_of(r.sample_ids[i]);
        if (!row) {
            throw NotFound("sample " + std::to_string(r.sample_ids[i]) + " is not in the data set");
        }
        double v = ds.at(*row, col);
        auto& slot = out[static_cast<std::size_t>(r.labels[i])];
        if (!slot) {
            slot = Range { v, v };
        } else {
            slot->min = std::min(slot->min, v);
            slot->max = std::max(slot->max, v);
        }
    }
    return out;
}

inline auto pairwise_disjoint(std::vector<std::optional<Range>> const& ranges) -> bool
{
    for (std::size_t a = 0; a < ranges.size(); ++a) {
        for (std::size_t b = a + 1; b < ranges.size(); ++b) {
            if (ranges[a] && ranges[b] && !(ranges[a]->max < ranges[b]->min || ranges[b]->max < ranges[a]->min)) {
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Presets for the energy-management experiments

inline auto experiment2_preferences() -> std::vector<PreferenceRule>
{
    return {
        { PreferenceOrder::lowest, { "C_invest" }, 10 },
        { PreferenceOrder::tradeoff, { "C_invest", "P_p" }, 10 },
        { PreferenceOrder::lowest, { "C_annual" }, 10 },
    };
}

inline auto preset_specs(FeatureSchema const& schema) -> std::map<std::string, RunSpec>
{
    auto make = [](std::string label, std::vector<DescriptionSpace> spaces, std::size_t population,
                    std::size_t generations) {
        RunSpec s;
        s.label = std::move(label);
        s.partition.spaces = std::move(spaces);
        s.concepts = 3;
        s.cmaes.population = population;
        s.cmaes.generations = generations;
        return s;
    };
    std::map<std::string, RunSpec> presets;
    presets.emplace("exp1a", make("exp1a", { { "DS1", { "C_invest" } }, { "DS2", { "C_annual", "R" } } }, 20, 1000));
    presets.emplace("exp1b", make("exp1b", { { "DS1", { "C_annual" } }, { "DS2", { "C_invest", "R" } } }, 20, 1000));
    auto exp2 = make("exp2",
        { { "DS1", { "P_PV", "C_b" } }, { "DS2", { "C_invest", "P_p" } }, { "DS3", { "C_annual", "E_d" } },
            { "DS4", { "b_mean", "E_f" } } },
        61, 370);
    exp2.preference_rules = experiment2_preferences();
    presets.emplace("exp2", std::move(exp2));
    presets.emplace("exp3", make("exp3", { { "DS1", { "C_invest" } }, { "DS2", { "C_annual", "R" } } }, 22, 400));

    for (auto const& [name, spec] : presets) {
        for (auto const& space : spec.partition.spaces) {
            for (auto const& f : space.features) {
                if (!schema.index_of(f)) {
                    throw NotFound("preset '" + name + "' needs feature '" + f + "' which the schema lacks");
                }
            }
        }
    }
    return presets;
}

inline auto is_preset_name(std::string const& name) -> bool
{
    return name == "exp1a" || name == "exp1b" || name == "exp2" || name == "exp3";
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, PreferenceRule const& r)
{
    j = { { "order", r.order }, { "features", r.features }, { "count", r.count } };
}

inline void from_json(nlohmann::json const& j, PreferenceRule& r)
{
    r.order = j.value("order", PreferenceOrder::lowest);
    if (j.contains("feature")) {
        r.features = { j.at("feature").get<std::string>() };
    } else {
        r.features = j.at("features").get<std::vector<std::string>>();
    }
    r.count = j.at("count").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, ParentRef const& p) { j = { { "run_id", p.run_id }, { "concept", p.concept_id } }; }
inline void from_json(nlohmann::json const& j, ParentRef& p)
{
    p.run_id = j.at("run_id").get<std::string>();
    p.concept_id = j.at("concept").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, RunSpec const& s)
{
    j = { { "label", s.label }, { "dataset", s.dataset }, { "partition", s.partition }, { "K", s.concepts },
        { "weights", s.weights }, { "cmaes", s.cmaes }, { "preference_ids", s.preference_ids },
        { "preference_rules", s.preference_rules }, { "parent_run", nullptr } };
    if (s.parent_run) {
        j["parent_run"] = *s.parent_run;
    }
}

// Applies the fields present in `j` on top of `base`. A "preset" key replaces
// the base with that preset first.
inline auto apply_spec_json(RunSpec base, nlohmann::json const& j, FeatureSchema const& schema) -> RunSpec
{
    if (!j.is_object()) {
        throw InputError("run spec must be a JSON object");
    }
    try {
        if (j.contains("preset")) {
            auto name = j.at("preset").get<std::string>();
            auto presets = preset_specs(schema);
            auto it = presets.find(name);
            if (it == presets.end()) {
                throw InputError("unknown preset '" + name + "'");
            }
            auto dataset = base.dataset;
            base = it->second;
            base.dataset = dataset;
        }
        if (j.contains("label")) {
            base.label = j["label"].get<std::string>();
        }
        if (j.contains("dataset")) {
            base.dataset = j["dataset"].get<std::string>();
        }
        if (j.contains("partition")) {
            base.partition = j["partition"].get<Partition>();
        }
        if (j.contains("K")) {
            base.concepts = j["K"].get<std::size_t>();
        }
        if (j.contains("weights")) {
            nlohmann::json w = base.weights;
            w.update(j["weights"]);
            base.weights = w.get<MetricWeights>();
        }
        if (j.contains("cmaes")) {
            auto c = base.cmaes;
            from_json(j["cmaes"], c);
            base.cmaes = c;
        }
        if (j.contains("preference_ids")) {
            base.preference_ids = j["preference_ids"].get<std::vector<SampleId>>();
        }
        if (j.contains("preference_rules")) {
            base.preference_rules = j["preference_rules"].get<std::vector<PreferenceRule>>();
        }
        if (j.contains("parent_run") && !j["parent_run"].is_null()) {
            base.parent_run = j["parent_run"].get<ParentRef>();
        }
    } catch (nlohmann::json::exception const& e) {
        throw InputError(std::string("run spec: ") + e.what());
    }
    return base;
}

inline auto overrides_from_json(nlohmann::json const& j, FeatureSchema const& schema) -> RefineOverrides
{
    RefineOverrides o;
    if (j.is_null()) {
        return o;
    }
    // Resolve through a scratch spec so presets and partial objects behave
    // like in apply_spec_json.
    RunSpec scratch;
    auto s = apply_spec_json(scratch, j, schema);
    bool preset = j.contains("preset");
    if (preset || j.contains("partition")) {
        o.partition = s.partition;
    }
    if (preset || j.contains("K")) {
        o.concepts = s.concepts;
    }
    if (preset || j.contains("weights")) {
        o.weights = s.weights;
    }
    if (preset || j.contains("cmaes")) {
        o.cmaes = s.cmaes;
    }
    o.preference_ids = s.preference_ids;
    o.preference_rules = s.preference_rules;
    if (j.contains("label")) {
        o.label = s.label;
    }
    return o;
}

inline void to_json(nlohmann::json& j, RunResult const& r)
{
    j = { { "run_id", r.run_id }, { "spec", r.spec }, { "regions", r.regions }, { "genome", r.genome },
        { "metric", r.metric }, { "concept_sizes", r.concept_sizes }, { "unassigned_count", r.unassigned_count },
        { "assignment", { { "sample_ids", r.sample_ids }, { "labels", r.labels } } }, { "trace", r.trace } };
}

// Restores enough of a stored result to refine it or check provenance.
inline auto result_from_json(nlohmann::json const& j, FeatureSchema const& schema) -> RunResult
{
    try {
        RunResult r;
        r.run_id = j.at("run_id").get<std::string>();
        r.spec = apply_spec_json(RunSpec {}, j.at("spec"), schema);
        r.regions = j.at("regions").get<ConceptRegionSet>();
        r.genome = j.value("genome", std::vector<double> {});
        r.sample_ids = j.at("assignment").at("sample_ids").get<std::vector<SampleId>>();
        r.labels = j.at("assignment").at("labels").get<std::vector<int>>();
        r.concept_sizes = j.at("concept_sizes").get<std::vector<std::size_t>>();
        r.unassigned_count = j.at("unassigned_count").get<std::size_t>();
        if (r.labels.size() != r.sample_ids.size() || r.concept_sizes.size() != r.spec.concepts) {
            throw InputError("run result: assignment does not match its spec");
        }
        auto const& m = j.at("metric");
        r.metric.q = m.at("Q").get<double>();
        r.metric.overlap_fraction = m.at("overlap_fraction").get<double>();
        r.metric.preference_coverage = m.at("preference_coverage").get<double>();
        r.metric.weights = m.at("weights").get<MetricWeights>();
        for (auto const& c : m.at("concepts")) {
            ConceptScore s;
            s.members = c.at("members").get<std::size_t>();
            s.coverage = c.at("coverage").get<double>();
            s.consistency = c.at("consistency").get<std::vector<double>>();
            s.size_penalty = c.at("size_penalty").get<double>();
            r.metric.concepts.push_back(std::move(s));
        }
        auto const& t = j.at("trace");
        r.trace.best_genome = t.at("best_genome").get<std::vector<double>>();
        r.trace.best_fitness = t.at("best_fitness").get<double>();
        r.trace.evaluations = t.at("evaluations").get<std::size_t>();
        r.trace.restarts_used = t.at("restarts_used").get<std::size_t>();
        for (auto const& g : t.at("generations")) {
            r.trace.generations.push_back({ g.at("restart").get<std::size_t>(), g.at("generation").get<std::size_t>(),
                g.at("best").get<double>(), g.at("mean").get<double>(), g.at("sigma").get<double>() });
        }
        return r;
    } catch (nlohmann::json::exception const& e) {
        throw InputError(std::string("run result: ") + e.what());
    }
}

} // namespace conceptid
