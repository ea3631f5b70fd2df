#pragma once

// Desk-scale stand-in for a simulated energy-management Pareto set: an
// analytic surrogate from the nine configuration parameters to the ten
// objectives, uniform sampling, and exact non-dominated filtering.
//
// The surrogate only reproduces qualitative trends (who is monotone in what).
// None of its coefficients are calibrated against a real facility.

#include "conceptid/core_data.hpp"
#include "conceptid/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace conceptid::synth {

struct EnergyConfig {
    double alpha_pv { 30.0 }; // PV inclination, degrees [0, 45]
    double beta_pv { 180.0 }; // PV orientation, degrees [0, 360]
    double p_pv { 100.0 };    // PV peak power, kW [10, 450]
    double c_b { 100.0 };     // battery capacity, kWh [5, 1000]
    double b_max { 0.9 };     // max SOC [0.50, 0.95]
    double b_min { 0.1 };     // min SOC [0.05, 0.40]
    double p_c { 0.0 };       // charging threshold, kW [-500, 149.9]
    double p_d { 400.0 };     // discharging threshold, kW [150, 700]
    double v { 2.0 };         // heat storage volume, m^3 [1, 5]
};

struct EnergyObjectives {
    double c_invest { 0 };
    double c_annual { 0 };
    double r { 0 };
    double g { 0 };
    double b_mean { 0 };
    double e_d { 0 };
    double p_p { 0 };
    double t { 0 };
    double e_f { 0 };
    double p_f { 0 };
};

inline constexpr std::size_t parameter_count = 9;
inline constexpr std::size_t objective_count = 10;

struct ParameterBounds {
    char const* name;
    char const* unit;
    double lo;
    double hi;
};

inline constexpr std::array<ParameterBounds, parameter_count> parameter_bounds { {
    { "alpha_PV", "deg", 0.0, 45.0 },
    { "beta_PV", "deg", 0.0, 360.0 },
    { "P_PV", "kW", 10.0, 450.0 },
    { "C_b", "kWh", 5.0, 1000.0 },
    { "b_max", "", 0.50, 0.95 },
    { "b_min", "", 0.05, 0.40 },
    { "P_c", "kW", -500.0, 149.9 },
    { "P_d", "kW", 150.0, 700.0 },
    { "V", "m3", 1.0, 5.0 },
} };

struct ObjectiveInfo {
    char const* name;
    char const* unit;
    Direction direction;
};

// b_mean and t are minimized (battery aging proxies); E_d and E_f are
// maximized (battery utilization, renewable export).
inline constexpr std::array<ObjectiveInfo, objective_count> objective_info { {
    { "C_invest", "EUR", Direction::minimize },
    { "C_annual", "EUR", Direction::minimize },
    { "R", "s", Direction::maximize },
    { "G", "t", Direction::minimize },
    { "b_mean", "", Direction::minimize },
    { "E_d", "kWh", Direction::maximize },
    { "P_p", "kW", Direction::minimize },
    { "t", "", Direction::minimize },
    { "E_f", "kWh", Direction::maximize },
    { "P_f", "kW", Direction::minimize },
} };

inline auto to_array(EnergyConfig const& c) -> std::array<double, parameter_count>
{
    return { c.alpha_pv, c.beta_pv, c.p_pv, c.c_b, c.b_max, c.b_min, c.p_c, c.p_d, c.v };
}

inline auto to_array(EnergyObjectives const& o) -> std::array<double, objective_count>
{
    return { o.c_invest, o.c_annual, o.r, o.g, o.b_mean, o.e_d, o.p_p, o.t, o.e_f, o.p_f };
}

inline auto config_from_array(std::span<double const> a) -> EnergyConfig
{
    return { a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8] };
}

inline auto valid(EnergyConfig const& c) -> bool
{
    auto a = to_array(c);
    for (std::size_t i = 0; i < parameter_count; ++i) {
        if (!(a[i] >= parameter_bounds[i].lo && a[i] <= parameter_bounds[i].hi)) {
            return false;
        }
    }
    return c.b_min < c.b_max;
}

// The 19-feature schema: nine parameters then ten objectives.
inline auto energy_schema() -> FeatureSchema
{
    std::vector<FeatureSpec> f;
    for (auto const& p : parameter_bounds) {
        f.push_back({ p.name, FeatureRole::parameter, Direction::none, p.unit, Range { p.lo, p.hi } });
    }
    for (auto const& o : objective_info) {
        f.push_back({ o.name, FeatureRole::objective, o.direction, o.unit, std::nullopt });
    }
    return FeatureSchema(std::move(f));
}

struct SurrogateCoefficients {
    // investment
    double pv_cost_per_kw { 1100.0 };
    double battery_cost_per_kwh { 450.0 };
    double storage_cost_per_m3 { 2500.0 };
    double fixed_cost { 20000.0 };
    // PV yield
    double specific_yield { 1000.0 }; // kWh per kWp and year at the best orientation
    double tilt_optimum { 30.0 };
    double azimuth_optimum { 180.0 };
    double tilt_falloff { 0.05 };
    double azimuth_falloff { 0.06 };
    double self_use_scale { 400.0 }; // kW of PV at which half the yield is surplus
    // battery operation
    double base_cycles { 100.0 };
    double usage_cycles { 30.0 };
    double absorb_scale { 300.0 }; // kWh
    double max_absorb_share { 0.6 };
    // load
    double base_load_energy { 6.0e5 }; // kWh per year
    double base_peak { 750.0 };        // kW
    double midday_load { 150.0 };      // kW
    double outage_load { 250.0 };      // kW drawn during a grid outage
    double shave_efficiency { 0.9 };
    double discharge_grid_offset { 0.9 }; // grid kWh avoided per discharged kWh
    double resilience_soc_weight { 0.1 }; // share of stored energy that depends on mean SOC
    double pv_resilience { 2.4 };         // kWh of outage supply per kW of PV
    double pv_peak_relief { 0.05 };
    // prices and emissions
    double grid_price { 0.25 };  // EUR/kWh
    double feed_in_tariff { 0.08 };
    double peak_price { 10.0 }; // EUR/kW/year
    double maintenance_rate { 0.005 };
    double chp_cost { 20000.0 };
    double grid_emission { 0.0004 }; // t CO2 per kWh
    double chp_emission { 80.0 };    // t CO2 per year
    // relative amplitude of the seeded multiplicative noise
    double noise { 0.02 };
};

// Intermediate physical quantities. C_annual is composed from these so its
// monotone dependencies can be probed directly.
struct SurrogateTerms {
    double yield_factor { 0 };
    double pv_energy { 0 };
    double self_used { 0 };
    double surplus { 0 };
    double usable_capacity { 0 };
    double usage { 0 };
    double grid_energy { 0 };
    double c_invest { 0 };
    double e_d { 0 };
    double p_p { 0 };
    double e_f { 0 };
};

inline auto deg2rad(double deg) -> double { return deg * std::numbers::pi / 180.0; }

// Orientation factor in (0, 1], equal to 1 exactly at the optimum tilt/azimuth.
inline auto yield_factor(double alpha, double beta, SurrogateCoefficients const& k) -> double
{
    double tilt = 1.0 - k.tilt_falloff * (1.0 - std::cos(deg2rad(alpha - k.tilt_optimum)));
    double azimuth = 1.0 - k.azimuth_falloff * (1.0 - std::cos(deg2rad(beta - k.azimuth_optimum)));
    return tilt * azimuth;
}

inline auto annual_cost(SurrogateTerms const& s, SurrogateCoefficients const& k) -> double
{
    return k.grid_price * s.grid_energy + k.peak_price * s.p_p - k.feed_in_tariff * s.e_f
        + k.maintenance_rate * s.c_invest + k.chp_cost;
}

inline auto surrogate_terms(EnergyConfig const& c, SurrogateCoefficients const& k) -> SurrogateTerms
{
    SurrogateTerms s;
    s.yield_factor = yield_factor(c.alpha_pv, c.beta_pv, k);
    s.pv_energy = k.specific_yield * c.p_pv * s.yield_factor;
    s.surplus = s.pv_energy * c.p_pv / (k.self_use_scale + c.p_pv);
    s.self_used = s.pv_energy - s.surplus;
    s.usable_capacity = c.c_b * (c.b_max - c.b_min);

    double const charge = (c.p_c - parameter_bounds[6].lo) / (parameter_bounds[6].hi - parameter_bounds[6].lo);
    double const discharge = (parameter_bounds[7].hi - c.p_d) / (parameter_bounds[7].hi - parameter_bounds[7].lo);
    s.usage = discharge * (0.4 + 0.6 * charge);

    s.c_invest = k.fixed_cost + k.pv_cost_per_kw * c.p_pv + k.battery_cost_per_kwh * c.c_b
        + k.storage_cost_per_m3 * c.v;
    s.e_d = s.usable_capacity * (k.base_cycles + k.usage_cycles * s.usage);

    double const shave = std::min(std::max(0.0, k.base_peak - c.p_d) * k.shave_efficiency, 0.5 * s.usable_capacity);
    s.p_p = k.base_peak - shave - k.pv_peak_relief * c.p_pv * s.yield_factor;

    double const absorb = k.max_absorb_share * s.usable_capacity / (s.usable_capacity + k.absorb_scale) * charge;
    s.e_f = s.surplus * (1.0 - absorb);
    s.grid_energy = std::max(0.0, k.base_load_energy - s.self_used - k.discharge_grid_offset * s.e_d);
    return s;
}

// Deterministic for a fixed config and coefficients; `noise` (one uniform
// draw in [-1, 1] per objective) applies the relative noise amplitude.
inline auto evaluate_surrogate(EnergyConfig const& c, SurrogateCoefficients const& k,
    std::optional<std::array<double, objective_count>> const& noise = std::nullopt) -> EnergyObjectives
{
    if (!valid(c)) {
        throw ContractViolation("evaluate_surrogate: configuration outside the parameter bounds");
    }
    auto s = surrogate_terms(c, k);
    double const charge = (c.p_c - parameter_bounds[6].lo) / (parameter_bounds[6].hi - parameter_bounds[6].lo);
    double const absorb = k.max_absorb_share * s.usable_capacity / (s.usable_capacity + k.absorb_scale) * charge;
    double const span = c.b_max - c.b_min;

    EnergyObjectives o;
    o.c_invest = s.c_invest;
    o.c_annual = annual_cost(s, k);
    o.b_mean = c.b_min + span * (0.75 - 0.5 * s.usage);
    double const stored = c.c_b * (1.0 - k.resilience_soc_weight + k.resilience_soc_weight * o.b_mean);
    o.r = 3600.0 * (stored + k.pv_resilience * c.p_pv * s.yield_factor + 20.0 * c.v) / k.outage_load;
    o.g = k.grid_emission * s.grid_energy + k.chp_emission;
    o.e_d = s.e_d;
    o.p_p = s.p_p;
    o.t = std::clamp(0.15 + 0.6 * span * s.usage + 0.4 * std::abs(o.b_mean - 0.5), 0.0, 1.0);
    o.e_f = s.e_f;
    o.p_f = std::max(0.0, 0.85 * c.p_pv * s.yield_factor - k.midday_load) * (1.0 - 0.5 * absorb);

    if (noise) {
        auto a = to_array(o);
        for (std::size_t j = 0; j < objective_count; ++j) {
            a[j] *= 1.0 + k.noise * (*noise)[j];
        }
        o = { a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9] };
        o.b_mean = std::clamp(o.b_mean, 0.0, 1.0);
        o.t = std::clamp(o.t, 0.0, 1.0);
    }
    return o;
}

// ---------------------------------------------------------------------------
// Non-dominated filtering

namespace detail {

    // j dominates i: weakly better everywhere, strictly better somewhere.
    inline auto dominates(double const* a, double const* b, std::size_t m) -> bool
    {
        bool strict = false;
        for (std::size_t c = 0; c < m; ++c) {
            if (a[c] > b[c]) {
                return false;
            }
            strict = strict || a[c] < b[c];
        }
        return strict;
    }

} // namespace detail

// rows: N x M row-major. Returns the surviving row indices in ascending order.
// Candidates are visited by ascending direction-aligned row sum: a dominator
// never has a larger sum, and by transitivity some surviving row dominates
// every dominated row, so each row is only checked against earlier survivors
// plus rows sharing its exact sum.
inline auto non_dominated_filter(std::span<double const> rows, std::span<Direction const> directions)
    -> std::vector<std::size_t>
{
    auto const m = directions.size();
    if (m == 0 || rows.size() % m != 0) {
        throw ContractViolation("non_dominated_filter: row width does not match directions");
    }
    auto const n = rows.size() / m;
    std::vector<double> aligned(rows.size());
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < m; ++c) {
            double v = rows[i * m + c];
            if (!std::isfinite(v)) {
                throw ContractViolation("non_dominated_filter: non-finite value");
            }
            aligned[i * m + c] = directions[c] == Direction::maximize ? -v : v;
            sums[i] += aligned[i * m + c];
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sums[a] < sums[b]; });

    std::vector<std::size_t> archive; // survivors with a strictly smaller sum than the current group
    std::vector<std::size_t> survivors;
    std::size_t g = 0;
    while (g < n) {
        std::size_t h = g;
        while (h < n && sums[order[h]] == sums[order[g]]) {
            ++h;
        }
        std::vector<std::size_t> group_survivors;
        for (std::size_t p = g; p < h; ++p) {
            auto i = order[p];
            double const* xi = &aligned[i * m];
            bool dominated = false;
            for (auto j : archive) {
                if (detail::dominates(&aligned[j * m], xi, m)) {
                    dominated = true;
                    break;
                }
            }
            for (std::size_t q = g; q < h && !dominated; ++q) {
                if (q != p && detail::dominates(&aligned[order[q] * m], xi, m)) {
                    dominated = true;
                }
            }
            if (!dominated) {
                group_survivors.push_back(i);
            }
        }
        archive.insert(archive.end(), group_survivors.begin(), group_survivors.end());
        g = h;
    }
    survivors = std::move(archive);
    std::sort(survivors.begin(), survivors.end());
    return survivors;
}

// ---------------------------------------------------------------------------
// Data generation

// Samples n_raw configurations uniformly in the parameter box, evaluates the
// noisy surrogate and keeps the non-dominated rows (ids 0..survivors-1).
inline auto generate_dataset(std::size_t n_raw, std::uint64_t seed, SurrogateCoefficients const& k) -> DataSet
{
    if (n_raw < 1) {
        throw InputError("generate_dataset: n_raw must be >= 1");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);

    std::vector<double> params;
    std::vector<double> objectives;
    params.reserve(n_raw * parameter_count);
    objectives.reserve(n_raw * objective_count);
    std::size_t produced = 0;
    while (produced < n_raw) {
        std::array<double, parameter_count> p {};
        for (std::size_t j = 0; j < parameter_count; ++j) {
            auto const& b = parameter_bounds[j];
            p[j] = b.lo + unit(rng) * (b.hi - b.lo);
        }
        auto cfg = config_from_array(p);
        if (!(cfg.b_min < cfg.b_max)) {
            continue;
        }
        std::array<double, objective_count> noise {};
        for (auto& u : noise) {
            u = sym(rng);
        }
        auto o = to_array(evaluate_surrogate(cfg, k, noise));
        params.insert(params.end(), p.begin(), p.end());
        objectives.insert(objectives.end(), o.begin(), o.end());
        ++produced;
    }

    std::vector<Direction> dirs;
    for (auto const& o : objective_info) {
        dirs.push_back(o.direction);
    }
    auto keep = non_dominated_filter(objectives, dirs);

    std::vector<double> values;
    values.reserve(keep.size() * (parameter_count + objective_count));
    std::vector<SampleId> ids;
    for (auto i : keep) {
        values.insert(values.end(), params.begin() + static_cast<std::ptrdiff_t>(i * parameter_count),
            params.begin() + static_cast<std::ptrdiff_t>((i + 1) * parameter_count));
        values.insert(values.end(), objectives.begin() + static_cast<std::ptrdiff_t>(i * objective_count),
            objectives.begin() + static_cast<std::ptrdiff_t>((i + 1) * objective_count));
        ids.push_back(static_cast<SampleId>(ids.size()));
    }
    return DataSet(energy_schema(), std::move(values), std::move(ids));
}

#define CONCEPTID_SURROGATE_FIELDS(X)                                                                                  \
    X(pv_cost_per_kw)                                                                                                  \
    X(battery_cost_per_kwh)                                                                                            \
    X(storage_cost_per_m3)                                                                                             \
    X(fixed_cost)                                                                                                      \
    X(specific_yield)                                                                                                  \
    X(tilt_optimum)                                                                                                    \
    X(azimuth_optimum)                                                                                                 \
    X(tilt_falloff)                                                                                                    \
    X(azimuth_falloff)                                                                                                 \
    X(self_use_scale)                                                                                                  \
    X(base_cycles)                                                                                                     \
    X(usage_cycles)                                                                                                    \
    X(absorb_scale)                                                                                                    \
    X(max_absorb_share)                                                                                                \
    X(base_load_energy)                                                                                                \
    X(base_peak)                                                                                                       \
    X(midday_load)                                                                                                     \
    X(outage_load)                                                                                                     \
    X(shave_efficiency)                                                                                                \
    X(discharge_grid_offset)                                                                                           \
    X(resilience_soc_weight)                                                                                           \
    X(pv_resilience)                                                                                                   \
    X(pv_peak_relief)                                                                                                  \
    X(grid_price)                                                                                                      \
    X(feed_in_tariff)                                                                                                  \
    X(peak_price)                                                                                                      \
    X(maintenance_rate)                                                                                                \
    X(chp_cost)                                                                                                        \
    X(grid_emission)                                                                                                   \
    X(chp_emission)                                                                                                    \
    X(noise)

inline void to_json(nlohmann::json& j, SurrogateCoefficients const& k)
{
    j = nlohmann::json::object();
#define CONCEPTID_TO(name) j[#name] = k.name;
    CONCEPTID_SURROGATE_FIELDS(CONCEPTID_TO)
#undef CONCEPTID_TO
}

// Unknown keys are rejected; missing keys keep their defaults.
inline void from_json(nlohmann::json const& j, SurrogateCoefficients& k)
{
    nlohmann::json known;
    to_json(known, SurrogateCoefficients {});
    for (auto const& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw InputError("surrogate coefficients: unknown key '" + key + "'");
        }
        if (!value.is_number()) {
            throw InputError("surrogate coefficients: '" + key + "' must be a number");
        }
    }
#define CONCEPTID_FROM(name) k.name = j.value(#name, k.name);
    CONCEPTID_SURROGATE_FIELDS(CONCEPTID_FROM)
#undef CONCEPTID_FROM
}

#undef CONCEPTID_SURROGATE_FIELDS

inline auto load_coefficients(std::string const& path) -> SurrogateCoefficients
{
    return read_json_file(path).get<SurrogateCoefficients>();
}

} // namespace conceptid::synth
