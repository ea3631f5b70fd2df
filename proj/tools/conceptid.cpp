// conceptid command line tool.
//
// Exit codes: 0 success, 1 failed verification, 2 input or validation error,
// 3 runtime or optimizer error.

#include "conceptid/engine.hpp"
#include "conceptid/report.hpp"
#include "conceptid/service.hpp"
#include "conceptid/synth.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#ifndef CONCEPTID_DEFAULT_COEFFS
#define CONCEPTID_DEFAULT_COEFFS "data/surrogate_coeffs.json"
#endif

namespace fs = std::filesystem;
using namespace conceptid;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_check_failed = 1;
constexpr int exit_input = 2;
constexpr int exit_runtime = 3;

auto env_or(char const* name, std::string fallback) -> std::string
{
    char const* v = std::getenv(name);
    return (v && *v) ? std::string(v) : std::move(fallback);
}

auto load_schema(std::string const& path) -> FeatureSchema
{
    if (path.empty()) {
        return synth::energy_schema();
    }
    return read_json_file(path).get<FeatureSchema>();
}

auto load_spec(std::string const& spec_arg, std::string const& data_path, FeatureSchema const& schema) -> RunSpec
{
    RunSpec base;
    base.dataset = data_path;
    if (is_preset_name(spec_arg)) {
        return apply_spec_json(base, { { "preset", spec_arg } }, schema);
    }
    return apply_spec_json(base, read_json_file(spec_arg), schema);
}

void print_sizes(RunResult const& r, double seconds)
{
    std::cout << "run " << r.run_id << "  Q = " << r.metric.q << "  (" << seconds << " s)\n";
    std::cout << r.spec.concepts << " concepts which contain ";
    for (std::size_t k = 0; k < r.concept_sizes.size(); ++k) {
        if (k) {
            std::cout << (k + 1 == r.concept_sizes.size() ? " and " : ", ");
        }
        std::cout << r.concept_sizes[k] << " (" << report::concept_color(k) << ")";
    }
    std::cout << " samples; " << r.unassigned_count << " unassigned\n";
}

struct RunOptions {
    std::string data;
    std::string schema;
    std::string spec;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t workers { 1 };
};

auto cmd_generate(std::size_t n_raw, std::uint64_t seed, std::string const& coeffs_path, std::string const& out_dir)
    -> int
{
    if (!fs::exists(coeffs_path)) {
        std::cerr << "error: coefficient file not found: " << coeffs_path << '\n';
        return exit_input;
    }
    auto coeffs = synth::load_coefficients(coeffs_path);
    auto ds = synth::generate_dataset(n_raw, seed, coeffs);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        std::cerr << "error: cannot create " << out_dir << ": " << ec.message() << '\n';
        return exit_input;
    }
    auto csv = fs::path(out_dir) / "dataset.csv";
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot write " << csv.string() << '\n';
        return exit_input;
    }
    write_csv(out, ds);
    out.close();
    report::write_file(fs::path(out_dir) / "schema.json", nlohmann::json(ds.schema()).dump(2) + "\n");
    std::cout << ds.rows() << " of " << n_raw << " sampled configurations are non-dominated\n";
    std::cout << "wrote " << csv.string() << '\n';
    return exit_ok;
}

auto cmd_identify(RunOptions const& o) -> int
{
    auto schema = load_schema(o.schema);
    auto ds = load_csv(o.data, schema);
    auto spec = load_spec(o.spec, o.data, schema);
    if (o.seed) {
        spec.cmaes.seed = *o.seed;
    }
    auto t0 = std::chrono::steady_clock::now();
    auto result = identify(spec, ds, { o.workers, {} });
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report::write_bundle(result, ds, o.out_dir);
    print_sizes(result, secs);
    std::cout << "wrote " << o.out_dir << '\n';
    return exit_ok;
}

auto cmd_refine(RunOptions const& o, std::string const& parent_path, std::size_t concept_id) -> int
{
    auto schema = load_schema(o.schema);
    auto ds = load_csv(o.data, schema);
    auto parent = result_from_json(read_json_file(parent_path), schema);
    RefineOverrides overrides;
    if (!o.spec.empty()) {
        nlohmann::json j = is_preset_name(o.spec) ? nlohmann::json { { "preset", o.spec } } : read_json_file(o.spec);
        overrides = overrides_from_json(j, schema);
    }
    if (o.seed) {
        overrides.cmaes = overrides.cmaes.value_or(parent.spec.cmaes);
        overrides.cmaes->seed = *o.seed;
    }
    auto t0 = std::chrono::steady_clock::now();
    auto result = refine(parent, concept_id, overrides, ds, { o.workers, {} });
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report::write_bundle(result, subset(ds, result.sample_ids), o.out_dir);
    std::cout << "refined concept " << concept_id << " of " << parent.run_id << " (" << result.sample_ids.size()
              << " samples)\n";
    print_sizes(result, secs);
    std::cout << "wrote " << o.out_dir << '\n';
    return exit_ok;
}

// Checks that a refinement only contains members of its parent concept.
auto cmd_verify(std::string const& parent_path, std::string const& child_path) -> int
{
    auto parent = read_json_file(parent_path);
    auto child = read_json_file(child_path);
    auto const& ref = child.at("spec").at("parent_run");
    if (ref.is_null()) {
        std::cout << "FAIL: " << child_path << " is not a refinement\n";
        return exit_check_failed;
    }
    if (ref.at("run_id") != parent.at("run_id")) {
        std::cout << "FAIL: refinement names parent " << ref.at("run_id") << " but the parent is "
                  << parent.at("run_id") << '\n';
        return exit_check_failed;
    }
    auto k = ref.at("concept").get<int>();
    auto const& pa = parent.at("assignment");
    auto ids = pa.at("sample_ids").get<std::vector<SampleId>>();
    auto labels = pa.at("labels").get<std::vector<int>>();
    std::set<SampleId> members;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (labels.at(i) == k) {
            members.insert(ids[i]);
        }
    }
    std::size_t outside = 0;
    auto child_ids = child.at("assignment").at("sample_ids").get<std::vector<SampleId>>();
    for (auto id : child_ids) {
        outside += members.contains(id) ? 0 : 1;
    }
    if (outside > 0) {
        std::cout << "FAIL: " << outside << " refined samples are not members of concept " << k << '\n';
        return exit_check_failed;
    }
    std::cout << "OK: all " << child_ids.size() << " refined samples are members of concept " << k << " of "
              << parent.at("run_id").get<std::string>() << '\n';
    return exit_ok;
}

template <typename Fn>
auto guarded(Fn&& fn) -> int
{
    try {
        return fn();
    } catch (ValidationError const& e) {
        std::cerr << "error: invalid run specification\n" << nlohmann::json(e.report()).dump(2) << '\n';
        return exit_input;
    } catch (InputError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (nlohmann::json::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Concept identification on many-objective Pareto sets" };
    app.require_subcommand(1);
    std::string const default_out = env_or("CONCEPTID_OUT_DIR", "out");

    std::size_t n_raw = 50000;
    std::uint64_t gen_seed = 1;
    std::string coeffs = CONCEPTID_DEFAULT_COEFFS;
    std::string gen_out = default_out;
    auto* gen = app.add_subcommand("generate", "Sample the surrogate energy model and keep the non-dominated rows");
    gen->add_option("--n-raw", n_raw, "Configurations to sample before filtering")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--coeffs", coeffs, "Surrogate coefficient JSON")->capture_default_str();
    gen->add_option("--out-dir", gen_out, "Output directory (default $CONCEPTID_OUT_DIR or ./out)");

    RunOptions run;
    run.out_dir = default_out;
    auto add_run_flags = [&](CLI::App* sub, bool spec_required) {
        sub->add_option("--data", run.data, "Data set CSV")->required()->check(CLI::ExistingFile);
        sub->add_option("--schema", run.schema, "Feature schema JSON (default: energy schema)")
            ->check(CLI::ExistingFile);
        auto* spec = sub->add_option("--spec", run.spec, "Preset name (exp1a, exp1b, exp2, exp3) or run spec JSON");
        if (spec_required) {
            spec->required();
        }
        sub->add_option("--out-dir", run.out_dir, "Output directory (default $CONCEPTID_OUT_DIR or ./out)");
        sub->add_option("--seed", run.seed, "Override the optimizer seed");
        sub->add_option("--workers", run.workers, "Threads for population evaluation")->check(CLI::PositiveNumber);
    };
    auto* ident = app.add_subcommand("identify", "Identify concepts and write a report bundle");
    add_run_flags(ident, true);

    std::string parent_result;
    std::size_t concept_id = 0;
    auto* ref = app.add_subcommand("refine", "Identify sub-concepts inside one concept of an earlier result");
    add_run_flags(ref, false);
    ref->add_option("--parent-result", parent_result, "result.json of the parent run")
        ->required()
        ->check(CLI::ExistingFile);
    ref->add_option("--concept", concept_id, "Concept index to refine")->required();

    std::string verify_parent, verify_child;
    auto* ver = app.add_subcommand("verify", "Check that a refinement stays inside its parent concept");
    ver->add_option("--parent-result", verify_parent, "Parent result.json")->required()->check(CLI::ExistingFile);
    ver->add_option("--child-result", verify_child, "Refined result.json")->required()->check(CLI::ExistingFile);

    service::ServiceConfig svc;
    svc.host = env_or("CONCEPTID_HOST", svc.host);
    svc.cors_origin = env_or("CONCEPTID_CORS_ORIGIN", svc.cors_origin);
    std::string svc_out;
    auto* srv = app.add_subcommand("serve", "Run the HTTP service");
    srv->add_option("--host", svc.host, "Bind address (env CONCEPTID_HOST)")->capture_default_str();
    srv->add_option("--port", svc.port, "Port (env CONCEPTID_PORT)")->capture_default_str();
    srv->add_option("--cors-origin", svc.cors_origin, "Allowed origin (env CONCEPTID_CORS_ORIGIN)");
    srv->add_option("--workers", svc.workers_per_job, "Threads per job")->check(CLI::PositiveNumber);
    srv->add_option("--out-dir", svc_out, "Also write finished results below this directory");

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        return app.exit(e);
    } catch (CLI::CallForAllHelp const& e) {
        return app.exit(e);
    } catch (CLI::ParseError const& e) {
        app.exit(e);
        return exit_input;
    }

    if (*gen) {
        return guarded([&] { return cmd_generate(n_raw, gen_seed, coeffs, gen_out); });
    }
    if (*ident) {
        return guarded([&] { return cmd_identify(run); });
    }
    if (*ref) {
        return guarded([&] { return cmd_refine(run, parent_result, concept_id); });
    }
    if (*ver) {
        return guarded([&] { return cmd_verify(verify_parent, verify_child); });
    }
    if (*srv) {
        auto env_port = env_or("CONCEPTID_PORT", "");
        if (srv->count("--port") == 0 && !env_port.empty()) {
            try {
                std::size_t used = 0;
                svc.port = std::stoi(env_port, &used);
                if (used != env_port.size() || svc.port < 0 || svc.port > 65535) {
                    throw std::invalid_argument(env_port);
                }
            } catch (std::exception const&) {
                std::cerr << "error: CONCEPTID_PORT is not a port number: " << env_port << '\n';
                return exit_input;
            }
        }
        if (!svc_out.empty()) {
            svc.output_dir = svc_out;
        }
        return guarded([&] { return service::serve(svc); });
    }
    return exit_input;
}
