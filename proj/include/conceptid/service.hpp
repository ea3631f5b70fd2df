#pragma once

// HTTP front end: dataset upload, asynchronous identification jobs with
// polling, results and refinement. All state lives in memory; finished
// results can additionally be written to an output directory.
//
//   POST   /datasets              multipart (data = CSV, schema = JSON) or JSON {name, schema, csv}
//   GET    /datasets
//   GET    /datasets/{id}/summary
//   POST   /runs                  RunSpec JSON with "dataset": id
//   GET    /runs
//   GET    /runs/{id}
//   GET    /runs/{id}/result
//   POST   /runs/{id}/refine      {"concept": k, "overrides": {...}}
//   DELETE /runs/{id}
//
// Errors are {"code", "message", "details"}.

#include "conceptid/engine.hpp"
#include "conceptid/error.hpp"
#include "conceptid/report.hpp"
#include "conceptid/synth.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace conceptid::service {

enum class JobState { queued, running, done, failed };

NLOHMANN_JSON_SERIALIZE_ENUM(JobState,
    { { JobState::queued, "queued" }, { JobState::running, "running" }, { JobState::done, "done" },
        { JobState::failed, "failed" } })

struct Progress {
    std::size_t generation { 0 };
    std::size_t total { 0 };
    std::optional<double> best_q;
};

struct Job {
    std::string id;
    std::string dataset_id;
    std::optional<std::string> parent_job;
    RunSpec spec;
    std::atomic<bool> cancel_requested { false };

    mutable std::mutex mutex;
    JobState state { JobState::queued };
    Progress progress;
    std::shared_ptr<RunResult const> result;
    std::optional<std::string> error;
};

struct StoredDataset {
    std::string id;
    std::string name;
    std::shared_ptr<DataSet const> data;
};

struct ServiceConfig {
    std::string host { "127.0.0.1" };
    int port { 8080 };
    std::string cors_origin { "*" };
    std::size_t workers_per_job { 1 };
    std::optional<std::filesystem::path> output_dir; // write-through of finished results
};

// Maps an exception thrown while handling a request to an HTTP error.
struct HttpError : std::runtime_error {
    HttpError(int status, std::string code, std::string const& message, nlohmann::json details = nlohmann::json::object())
        : std::runtime_error(message), status(status), code(std::move(code)), details(std::move(details))
    {
    }
    int status;
    std::string code;
    nlohmann::json details;
};

inline auto job_json(Job const& job) -> nlohmann::json
{
    std::lock_guard lock(job.mutex);
    nlohmann::json progress = { { "generation", job.progress.generation }, { "total", job.progress.total },
        { "best_Q", nullptr } };
    if (job.progress.best_q) {
        progress["best_Q"] = *job.progress.best_q;
    }
    nlohmann::json j = { { "id", job.id }, { "state", job.state }, { "dataset", job.dataset_id },
        { "progress", progress }, { "spec", job.spec }, { "error", nullptr }, { "parent", nullptr },
        { "has_result", job.result != nullptr } };
    if (job.error) {
        j["error"] = *job.error;
    }
    if (job.parent_job) {
        j["parent"] = *job.parent_job;
    }
    if (job.result) {
        j["run_id"] = job.result->run_id;
        j["concept_sizes"] = job.result->concept_sizes;
        j["unassigned_count"] = job.result->unassigned_count;
    }
    return j;
}

inline auto dataset_summary(StoredDataset const& d) -> nlohmann::json
{
    nlohmann::json features = nlohmann::json::array();
    auto const& schema = d.data->schema();
    for (std::size_t j = 0; j < schema.size(); ++j) {
        auto const& f = schema.features()[j];
        nlohmann::json item = f;
        item["min"] = d.data->rows() ? nlohmann::json(d.data->stats()[j].min) : nlohmann::json(nullptr);
        item["max"] = d.data->rows() ? nlohmann::json(d.data->stats()[j].max) : nlohmann::json(nullptr);
        features.push_back(std::move(item));
    }
    return { { "id", d.id }, { "name", d.name }, { "N", d.data->rows() }, { "features", features } };
}

class Service {
public:
    explicit Service(ServiceConfig config = {})
        : config_(std::move(config))
    {
    }

    Service(Service const&) = delete;
    auto operator=(Service const&) -> Service& = delete;

    ~Service() { shutdown(); }

    // Requests cancellation of every job and waits for the workers.
    void shutdown()
    {
        std::vector<std::jthread> workers;
        {
            std::lock_guard lock(mutex_);
            for (auto& [id, job] : jobs_) {
                job->cancel_requested = true;
            }
            workers.swap(workers_);
        }
        workers.clear();
    }

    [[nodiscard]] auto config() const -> ServiceConfig const& { return config_; }

    auto add_dataset(std::string name, DataSet data) -> StoredDataset
    {
        std::lock_guard lock(mutex_);
        StoredDataset d { "ds-" + std::to_string(++dataset_counter_), std::move(name),
            std::make_shared<DataSet const>(std::move(data)) };
        datasets_.emplace(d.id, d);
        return d;
    }

    auto dataset(std::string const& id) const -> StoredDataset
    {
        std::lock_guard lock(mutex_);
        auto it = datasets_.find(id);
        if (it == datasets_.end()) {
            throw HttpError(404, "not_found", "dataset '" + id + "' does not exist");
        }
        return it->second;
    }

    auto job(std::string const& id) const -> std::shared_ptr<Job>
    {
        std::lock_guard lock(mutex_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) {
            throw HttpError(404, "not_found", "run '" + id + "' does not exist");
        }
        return it->second;
    }

    auto submit(RunSpec spec) -> std::shared_ptr<Job>
    {
        auto ds = dataset(spec.dataset);
        auto report = validate_spec(spec, *ds.data);
        if (!report.valid()) {
            throw HttpError(400, "validation_failed", report.summary(), report);
        }
        auto job = make_job(spec, ds.id, std::nullopt);
        start(job, [spec, data = ds.data](IdentifyOptions const& o) { return identify(spec, *data, o); }, ds.data);
        return job;
    }

    auto submit_refine(std::string const& parent_id, std::size_t concept_id, nlohmann::json const& overrides)
        -> std::shared_ptr<Job>
    {
        auto parent = job(parent_id);
        std::shared_ptr<RunResult const> parent_result;
        {
            std::lock_guard lock(parent->mutex);
            if (parent->state != JobState::done) {
                throw HttpError(409, "not_done", "run '" + parent_id + "' has not finished");
            }
            parent_result = parent->result;
        }
        auto ds = dataset(parent->dataset_id);
        if (concept_id >= parent_result->spec.concepts) {
            throw HttpError(400, "invalid_concept",
                "concept " + std::to_string(concept_id) + " does not exist (K = "
                    + std::to_string(parent_result->spec.concepts) + ")");
        }
        auto members = parent_result->members(concept_id);
        if (members.empty()) {
            throw HttpError(400, "invalid_concept", "cannot refine empty concept " + std::to_string(concept_id));
        }
        auto spec = refine_spec(*parent_result, concept_id, overrides_from_json(overrides, ds.data->schema()));
        auto sub = std::make_shared<DataSet const>(subset(*ds.data, members));
        auto report = validate_spec(spec, *sub);
        if (!report.valid()) {
            throw HttpError(400, "validation_failed", report.summary(), report);
        }
        auto child = make_job(spec, ds.id, parent_id);
        start(child, [spec, sub](IdentifyOptions const& o) { return identify(spec, *sub, o); }, sub);
        return child;
    }

    // Returns false when the job already finished.
    auto cancel(std::string const& id) -> bool
    {
        auto j = job(id);
        std::lock_guard lock(j->mutex);
        if (j->state == JobState::done || j->state == JobState::failed) {
            return false;
        }
        j->cancel_requested = true;
        return true;
    }

    auto list_jobs() const -> nlohmann::json
    {
        std::vector<std::shared_ptr<Job>> jobs;
        {
            std::lock_guard lock(mutex_);
            for (auto const& [id, j] : jobs_) {
                jobs.push_back(j);
            }
        }
        nlohmann::json out = nlohmann::json::array();
        for (auto const& j : jobs) {
            out.push_back(job_json(*j));
        }
        return out;
    }

    auto list_datasets() const -> nlohmann::json
    {
        std::lock_guard lock(mutex_);
        nlohmann::json out = nlohmann::json::array();
        for (auto const& [id, d] : datasets_) {
            out.push_back({ { "id", d.id }, { "name", d.name }, { "N", d.data->rows() } });
        }
        return out;
    }

    void attach(httplib::Server& server);

private:
    auto make_job(RunSpec spec, std::string dataset_id, std::optional<std::string> parent) -> std::shared_ptr<Job>
    {
        auto job = std::make_shared<Job>();
        job->spec = std::move(spec);
        job->dataset_id = std::move(dataset_id);
        job->parent_job = std::move(parent);
        job->progress.total = job->spec.cmaes.generations * (job->spec.cmaes.restarts + 1);
        std::lock_guard lock(mutex_);
        job->id = "job-" + std::to_string(++job_counter_);
        jobs_.emplace(job->id, job);
        return job;
    }

    void start(std::shared_ptr<Job> const& job, std::function<RunResult(IdentifyOptions const&)> work,
        std::shared_ptr<DataSet const> data)
    {
        std::lock_guard lock(mutex_);
        workers_.emplace_back([this, job, work = std::move(work), data = std::move(data)] {
            execute(*job, work, *data);
        });
    }

    void execute(Job& job, std::function<RunResult(IdentifyOptions const&)> const& work, DataSet const& data)
    {
        {
            std::lock_guard lock(job.mutex);
            if (job.cancel_requested) {
                job.state = JobState::failed;
                job.error = "cancelled";
                return;
            }
            job.state = JobState::running;
        }
        IdentifyOptions options;
        options.workers = config_.workers_per_job;
        options.progress = [&job](GenerationRecord const& rec) {
            std::lock_guard lock(job.mutex);
            ++job.progress.generation;
            if (!job.progress.best_q || rec.best > *job.progress.best_q) {
                job.progress.best_q = rec.best;
            }
            return !job.cancel_requested.load();
        };
        try {
            auto result = std::make_shared<RunResult const>(work(options));
            if (config_.output_dir) {
                try {
                    report::write_bundle(*result, data, *config_.output_dir / job.id);
                } catch (std::exception const& e) {
                    std::cerr << "conceptid: could not write results of " << job.id << ": " << e.what() << '\n';
                }
            }
            std::lock_guard lock(job.mutex);
            job.result = std::move(result);
            job.state = JobState::done;
        } catch (Cancelled const&) {
            std::lock_guard lock(job.mutex);
            job.state = JobState::failed;
            job.error = "cancelled";
        } catch (std::exception const& e) {
            std::lock_guard lock(job.mutex);
            job.state = JobState::failed;
            job.error = e.what();
        }
    }

    ServiceConfig config_;
    mutable std::mutex mutex_;
    std::map<std::string, StoredDataset> datasets_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::size_t dataset_counter_ { 0 };
    std::size_t job_counter_ { 0 };
    std::vector<std::jthread> workers_; // last member: joined first
};

namespace detail {

    inline void send_json(httplib::Response& res, int status, nlohmann::json const& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    inline void send_error(httplib::Response& res, int status, std::string const& code, std::string const& message,
        nlohmann::json details = nlohmann::json::object())
    {
        send_json(res, status, { { "code", code }, { "message", message }, { "details", std::move(details) } });
    }

    inline auto parse_body(httplib::Request const& req) -> nlohmann::json
    {
        if (req.body.empty()) {
            return nlohmann::json::object();
        }
        try {
            return nlohmann::json::parse(req.body);
        } catch (nlohmann::json::exception const& e) {
            throw HttpError(400, "bad_json", std::string("request body is not valid JSON: ") + e.what());
        }
    }

    // Runs a handler and turns library exceptions into error responses.
    template <typename Fn>
    auto guarded(Fn fn)
    {
        return [fn = std::move(fn)](httplib::Request const& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (HttpError const& e) {
                send_error(res, e.status, e.code, e.what(), e.details);
            } catch (ValidationError const& e) {
                send_error(res, 400, "validation_failed", e.what(), e.report());
            } catch (SchemaMismatch const& e) {
                send_error(res, 400, "schema_mismatch", e.what(), { { "column", e.column() } });
            } catch (ParseError const& e) {
                send_error(res, 400, "parse_error", e.what(), { { "row", e.row() }, { "column", e.column() } });
            } catch (NotFound const& e) {
                send_error(res, 404, "not_found", e.what());
            } catch (InputError const& e) {
                send_error(res, 400, "bad_request", e.what());
            } catch (nlohmann::json::exception const& e) {
                send_error(res, 400, "bad_request", e.what());
            } catch (std::exception const& e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    }

    inline auto read_dataset(httplib::Request const& req) -> std::pair<std::string, DataSet>
    {
        std::string csv;
        std::optional<nlohmann::json> schema_json;
        std::string name = "dataset";
        if (req.is_multipart_form_data()) {
            if (!req.has_file("data")) {
                throw HttpError(400, "bad_request", "multipart upload needs a 'data' part with the CSV");
            }
            auto data = req.get_file_value("data");
            csv = data.content;
            if (!data.filename.empty()) {
                name = data.filename;
            }
            if (req.has_file("schema")) {
                try {
                    schema_json = nlohmann::json::parse(req.get_file_value("schema").content);
                } catch (nlohmann::json::exception const& e) {
                    throw HttpError(400, "bad_json", std::string("schema part is not valid JSON: ") + e.what());
                }
            }
            if (req.has_file("name")) {
                name = req.get_file_value("name").content;
            }
        } else {
            auto body = parse_body(req);
            if (!body.is_object() || !body.contains("csv")) {
                throw HttpError(400, "bad_request", "JSON upload needs a 'csv' string");
            }
            csv = body.at("csv").get<std::string>();
            if (body.contains("schema")) {
                schema_json = body.at("schema");
            }
            name = body.value("name", name);
        }
        // Without a schema the energy-management schema is assumed.
        FeatureSchema schema = schema_json ? schema_json->get<FeatureSchema>() : synth::energy_schema();
        std::istringstream in(csv);
        return { name, read_csv(in, schema) };
    }

} // namespace detail

inline void Service::attach(httplib::Server& server)
{
    using detail::guarded;
    using detail::send_json;

    server.set_default_headers({ { "Access-Control-Allow-Origin", config_.cors_origin },
        { "Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS" },
        { "Access-Control-Allow-Headers", "Content-Type" } });
    server.Options(R"(.*)", [](httplib::Request const&, httplib::Response& res) { res.status = 204; });

    server.Post("/datasets", guarded([this](httplib::Request const& req, httplib::Response& res) {
        auto [name, data] = detail::read_dataset(req);
        auto stored = add_dataset(std::move(name), std::move(data));
        send_json(res, 201, dataset_summary(stored));
    }));
    server.Get("/datasets", guarded([this](httplib::Request const&, httplib::Response& res) {
        send_json(res, 200, list_datasets());
    }));
    server.Get("/datasets/:id/summary", guarded([this](httplib::Request const& req, httplib::Response& res) {
        send_json(res, 200, dataset_summary(dataset(req.path_params.at("id"))));
    }));

    server.Post("/runs", guarded([this](httplib::Request const& req, httplib::Response& res) {
        auto body = detail::parse_body(req);
        if (!body.is_object() || !body.contains("dataset")) {
            throw HttpError(400, "bad_request", "run spec needs a 'dataset' id");
        }
        auto ds = dataset(body.at("dataset").get<std::string>());
        RunSpec base;
        base.dataset = ds.id;
        auto j = submit(apply_spec_json(base, body, ds.data->schema()));
        send_json(res, 202, job_json(*j));
    }));
    server.Get("/runs", guarded([this](httplib::Request const&, httplib::Response& res) {
        send_json(res, 200, list_jobs());
    }));
    server.Get("/runs/:id", guarded([this](httplib::Request const& req, httplib::Response& res) {
        send_json(res, 200, job_json(*job(req.path_params.at("id"))));
    }));
    server.Get("/runs/:id/result", guarded([this](httplib::Request const& req, httplib::Response& res) {
        auto j = job(req.path_params.at("id"));
        std::shared_ptr<RunResult const> result;
        {
            std::lock_guard lock(j->mutex);
            result = j->result;
        }
        if (!result) {
            throw HttpError(409, "not_done", "run '" + j->id + "' has no result yet");
        }
        send_json(res, 200, *result);
    }));
    server.Post("/runs/:id/refine", guarded([this](httplib::Request const& req, httplib::Response& res) {
        auto body = detail::parse_body(req);
        if (!body.is_object() || !body.contains("concept") || !body.at("concept").is_number_unsigned()) {
            throw HttpError(400, "bad_request", "refine needs a non-negative integer 'concept'");
        }
        auto overrides = body.value("overrides", nlohmann::json(nullptr));
        auto child = submit_refine(req.path_params.at("id"), body.at("concept").get<std::size_t>(), overrides);
        send_json(res, 202, job_json(*child));
    }));
    server.Delete("/runs/:id", guarded([this](httplib::Request const& req, httplib::Response& res) {
        auto const& id = req.path_params.at("id");
        if (!cancel(id)) {
            throw HttpError(409, "already_finished", "run '" + id + "' already finished");
        }
        send_json(res, 202, job_json(*job(id)));
    }));
}

// Blocking server loop.
inline auto serve(ServiceConfig const& config) -> int
{
    Service service(config);
    httplib::Server server;
    service.attach(server);
    std::cerr << "conceptid: listening on " << config.host << ':' << config.port << '\n';
    if (!server.listen(config.host, config.port)) {
        std::cerr << "conceptid: cannot listen on " << config.host << ':' << config.port << '\n';
        return 3;
    }
    return 0;
}

// Server on an ephemeral port running on a background thread.
class BackgroundServer {
public:
    explicit BackgroundServer(ServiceConfig config = {})
        : service_(std::move(config))
    {
        service_.attach(server_);
        port_ = server_.bind_to_any_port(service_.config().host);
        if (port_ <= 0) {
            throw std::runtime_error("cannot bind " + service_.config().host);
        }
        thread_ = std::jthread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~BackgroundServer()
    {
        server_.stop();
        thread_ = {};
        service_.shutdown();
    }

    [[nodiscard]] auto port() const -> int { return port_; }
    [[nodiscard]] auto service() -> Service& { return service_; }

private:
    Service service_;
    httplib::Server server_;
    int port_ { 0 };
    std::jthread thread_;
};

} // namespace conceptid::service
