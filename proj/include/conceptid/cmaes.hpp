#pragma once

// (mu/mu_w, lambda) CMA-ES maximizer over the unit box [0,1]^L.
//
// Candidates are sampled unconstrained; each is clamped into the box before
// evaluation and its fitness is reduced by 10 * |x - clamp(x)|^2. The search
// starts at the box center. Everything is driven by one seeded mt19937_64, so
// a fixed config and seed reproduce the same trace bit for bit.

#include "conceptid/error.hpp"
#include "conceptid/parallel.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <span>
#include <vector>

namespace conceptid {

struct CmaesConfig {
    std::size_t dimension { 1 };
    std::size_t population { 20 };
    std::optional<std::size_t> parents; // defaults to population / 2
    std::size_t generations { 1000 };
    double initial_sigma { 0.3 };
    std::uint64_t seed { 1 };
    std::size_t restarts { 0 };

    [[nodiscard]] auto mu() const -> std::size_t { return parents.value_or(population / 2); }

    void check() const
    {
        if (dimension < 1) {
            throw ContractViolation("cmaes: dimension must be >= 1");
        }
        if (population < 4) {
            throw ContractViolation("cmaes: population must be >= 4");
        }
        if (mu() < 1 || mu() > population) {
            throw ContractViolation("cmaes: parents must lie in [1, population]");
        }
        if (generations < 1) {
            throw ContractViolation("cmaes: generations must be >= 1");
        }
        if (!std::isfinite(initial_sigma) || initial_sigma <= 0.0) {
            throw ContractViolation("cmaes: initial sigma must be positive");
        }
    }
};

inline constexpr double sigma_floor = 1e-12;
inline constexpr double sigma_ceiling = 10.0;
inline constexpr double eigenvalue_floor = 1e-14;
inline constexpr double box_penalty = 10.0;

struct GenerationRecord {
    std::size_t restart { 0 };
    std::size_t generation { 0 }; // within the restart
    double best { 0.0 };          // best so far within the restart
    double mean { 0.0 };          // population mean fitness
    double sigma { 0.0 };         // step size after the update
};

struct OptimizerTrace {
    std::vector<GenerationRecord> generations;
    std::vector<double> best_genome;
    double best_fitness { -std::numeric_limits<double>::infinity() };
    std::size_t evaluations { 0 };
    std::size_t restarts_used { 0 };

    void write_csv(std::ostream& out) const
    {
        out << "generation,best,mean,sigma\n";
        out.precision(17);
        for (std::size_t g = 0; g < generations.size(); ++g) {
            auto const& r = generations[g];
            out << g << ',' << r.best << ',' << r.mean << ',' << r.sigma << '\n';
        }
    }
};

struct Candidate {
    std::vector<double> raw;
    std::vector<double> clamped;
    double excess { 0.0 }; // squared distance between raw and clamped
};

inline auto clamp_to_box(std::span<double const> raw) -> Candidate
{
    Candidate c;
    c.raw.assign(raw.begin(), raw.end());
    c.clamped.resize(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
        c.clamped[j] = std::clamp(raw[j], 0.0, 1.0);
        double e = raw[j] - c.clamped[j];
        c.excess += e * e;
    }
    return c;
}

inline auto describe_genome(std::span<double const> g) -> std::string
{
    std::ostringstream s;
    s.precision(17);
    s << '[';
    for (std::size_t j = 0; j < g.size(); ++j) {
        s << (j ? ", " : "") << g[j];
    }
    s << ']';
    return s.str();
}

// Ask/tell state. Single owner; evaluate the asked batch in any order, then
// tell the fitnesses back in ask order.
class Cmaes {
public:
    using Vector = Eigen::VectorXd;
    using Matrix = Eigen::MatrixXd;

    explicit Cmaes(CmaesConfig config)
        : config_(std::move(config))
        , rng_(config_.seed)
    {
        config_.check();
        auto const n = static_cast<double>(config_.dimension);
        auto const mu = config_.mu();

        weights_.resize(static_cast<Eigen::Index>(mu));
        for (std::size_t i = 0; i < mu; ++i) {
            weights_[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(mu) + 0.5) - std::log(static_cast<double>(i + 1));
        }
        weights_ /= weights_.sum();
        mueff_ = 1.0 / weights_.squaredNorm();

        cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
        cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
        c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
        cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
        damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
        chi_n_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        auto const dim = static_cast<Eigen::Index>(config_.dimension);
        mean_ = Vector::Constant(dim, 0.5);
        sigma_ = config_.initial_sigma;
        pc_ = Vector::Zero(dim);
        ps_ = Vector::Zero(dim);
        basis_ = Matrix::Identity(dim, dim);
        scales_ = Vector::Ones(dim);
        cov_ = Matrix::Identity(dim, dim);
        inv_sqrt_cov_ = Matrix::Identity(dim, dim);
    }

    [[nodiscard]] auto config() const -> CmaesConfig const& { return config_; }
    [[nodiscard]] auto generation() const -> std::size_t { return generation_; }
    [[nodiscard]] auto sigma() const -> double { return sigma_; }
    [[nodiscard]] auto mean() const -> Vector const& { return mean_; }
    [[nodiscard]] auto covariance() const -> Matrix const& { return cov_; }
    [[nodiscard]] auto stopped() const -> bool { return stopped_; }
    [[nodiscard]] auto best_genome() const -> std::vector<double> const& { return best_genome_; }
    [[nodiscard]] auto best_fitness() const -> double { return best_fitness_; }
    [[nodiscard]] auto evaluations() const -> std::size_t { return evaluations_; }

    // Samples lambda raw (unclamped) genomes.
    auto ask() -> std::vector<Candidate> const&
    {
        auto const dim = static_cast<Eigen::Index>(config_.dimension);
        std::normal_distribution<double> normal(0.0, 1.0);
        candidates_.clear();
        offsets_.clear();
        for (std::size_t i = 0; i < config_.population; ++i) {
            Vector z(dim);
            for (Eigen::Index j = 0; j < dim; ++j) {
                z[j] = normal(rng_);
            }
            Vector y = basis_ * scales_.cwiseProduct(z);
            Vector x = mean_ + sigma_ * y;
            candidates_.push_back(clamp_to_box({ x.data(), static_cast<std::size_t>(dim) }));
            offsets_.push_back(std::move(y));
        }
        asked_ = true;
        return candidates_;
    }

    // Penalized fitness of one candidate given the objective value of its
    // clamped genome.
    [[nodiscard]] static auto penalized(Candidate const& c, double objective_value) -> double
    {
        return objective_value - box_penalty * c.excess;
    }

    // fitness[i] belongs to the i-th asked candidate (already penalized).
    auto tell(std::span<double const> fitness) -> GenerationRecord
    {
        if (!asked_) {
            throw ContractViolation("cmaes: tell without ask");
        }
        if (fitness.size() != config_.population) {
            throw ContractViolation("cmaes: expected " + std::to_string(config_.population) + " fitness values, got "
                + std::to_string(fitness.size()));
        }
        for (std::size_t i = 0; i < fitness.size(); ++i) {
            if (!std::isfinite(fitness[i])) {
                throw OptimizerError("cmaes: non-finite fitness for genome " + describe_genome(candidates_[i].clamped));
            }
        }
        asked_ = false;
        evaluations_ += fitness.size();

        std::vector<std::size_t> order(fitness.size());
        std::iota(order.begin(), order.end(), std::size_t { 0 });
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fitness[a] > fitness[b]; });

        double mean_fitness = 0.0;
        for (double f : fitness) {
            mean_fitness += f;
        }
        mean_fitness /= static_cast<double>(fitness.size());

        if (fitness[order[0]] > best_fitness_ || best_genome_.empty()) {
            best_fitness_ = fitness[order[0]];
            best_genome_ = candidates_[order[0]].clamped;
        }

        update(order);
        ++generation_;

        return { 0, generation_ - 1, best_fitness_, mean_fitness, sigma_ };
    }

private:
    void update(std::vector<std::size_t> const& order)
    {
        auto const n = static_cast<double>(config_.dimension);
        auto const dim = static_cast<Eigen::Index>(config_.dimension);
        auto const mu = config_.mu();

        // weighted recombination of the selected steps y = (x - m) / sigma
        Vector step = Vector::Zero(dim);
        for (std::size_t i = 0; i < mu; ++i) {
            step += weights_[static_cast<Eigen::Index>(i)] * offsets_[order[i]];
        }
        mean_ += sigma_ * step;

        ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (inv_sqrt_cov_ * step);
        auto const gen = static_cast<double>(generation_ + 1);
        double const ps_norm = ps_.norm() / std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * gen));
        bool const hsig = ps_norm / chi_n_ < 1.4 + 2.0 / (n + 1.0);
        pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * step;

        Matrix rank_mu = Matrix::Zero(dim, dim);
        for (std::size_t i = 0; i < mu; ++i) {
            auto const& y = offsets_[order[i]];
            rank_mu.noalias() += weights_[static_cast<Eigen::Index>(i)] * (y * y.transpose());
        }
        double const delta = hsig ? 0.0 : cc_ * (2.0 - cc_);
        cov_ = (1.0 - c1_ - cmu_) * cov_ + c1_ * (pc_ * pc_.transpose() + delta * cov_) + cmu_ * rank_mu;

        sigma_ *= std::exp((cs_ / damps_) * (ps_.norm() / chi_n_ - 1.0));
        if (!(sigma_ >= sigma_floor && sigma_ <= sigma_ceiling)) {
            sigma_ = std::clamp(std::isfinite(sigma_) ? sigma_ : sigma_ceiling, sigma_floor, sigma_ceiling);
            stopped_ = true;
        }

        decompose();
    }

    void decompose()
    {
        cov_ = cov_.triangularView<Eigen::Upper>();
        cov_ = cov_.selfadjointView<Eigen::Upper>();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_);
        Vector values = eig.eigenvalues();
        bool floored = false;
        for (Eigen::Index j = 0; j < values.size(); ++j) {
            if (!(values[j] > eigenvalue_floor)) {
                values[j] = eigenvalue_floor;
                floored = true;
            }
        }
        basis_ = eig.eigenvectors();
        scales_ = values.cwiseSqrt();
        if (floored) {
            cov_ = basis_ * values.asDiagonal() * basis_.transpose();
        }
        inv_sqrt_cov_ = basis_ * scales_.cwiseInverse().asDiagonal() * basis_.transpose();
    }

    CmaesConfig config_;
    std::mt19937_64 rng_;

    Vector weights_;
    double mueff_ { 0 };
    double cc_ { 0 };
    double cs_ { 0 };
    double c1_ { 0 };
    double cmu_ { 0 };
    double damps_ { 0 };
    double chi_n_ { 0 };

    Vector mean_;
    double sigma_ { 0 };
    Vector pc_;
    Vector ps_;
    Matrix cov_;
    Matrix basis_;
    Vector scales_;
    Matrix inv_sqrt_cov_;

    std::vector<Candidate> candidates_;
    std::vector<Vector> offsets_;
    bool asked_ { false };
    bool stopped_ { false };
    std::size_t generation_ { 0 };
    std::size_t evaluations_ { 0 };

    std::vector<double> best_genome_;
    double best_fitness_ { -std::numeric_limits<double>::infinity() };
};

using Objective = std::function<double(std::span<double const>)>;
// Called once per generation; return false to cancel the run.
using ProgressCallback = std::function<bool(GenerationRecord const&)>;

struct CmaesResult {
    std::vector<double> best_genome;
    double best_fitness { 0.0 };
    OptimizerTrace trace;
};

// Evaluates one asked batch into penalized fitnesses (ask order).
inline auto evaluate_batch(std::vector<Candidate> const& batch, Objective const& objective, std::size_t workers)
    -> std::vector<double>
{
    std::vector<double> fitness(batch.size());
    parallel_for(batch.size(), workers, [&](std::size_t i) {
        double v = objective(batch[i].clamped);
        if (!std::isfinite(v)) {
            throw OptimizerError("cmaes: objective returned " + std::to_string(v) + " for genome "
                + describe_genome(batch[i].clamped));
        }
        fitness[i] = Cmaes::penalized(batch[i], v);
    });
    return fitness;
}

// Full run with restarts: each restart reuses the config with seed + r, and
// the best genome across restarts is returned.
inline auto run(CmaesConfig const& config, Objective const& objective, ProgressCallback const& progress = {},
    std::size_t workers = 1) -> CmaesResult
{
    config.check();
    CmaesResult result;
    result.best_fitness = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r <= config.restarts; ++r) {
        auto cfg = config;
        cfg.seed = config.seed + r;
        Cmaes es(cfg);
        while (es.generation() < cfg.generations && !es.stopped()) {
            auto const& batch = es.ask();
            auto fitness = evaluate_batch(batch, objective, workers);
            auto record = es.tell(fitness);
            record.restart = r;
            result.trace.generations.push_back(record);
            if (progress && !progress(record)) {
                throw Cancelled();
            }
        }
        result.trace.evaluations += es.evaluations();
        result.trace.restarts_used = r;
        if (es.best_fitness() > result.best_fitness) {
            result.best_fitness = es.best_fitness();
            result.best_genome = es.best_genome();
        }
        if (!es.stopped()) {
            break; // generation budget spent normally
        }
    }
    result.trace.best_genome = result.best_genome;
    result.trace.best_fitness = result.best_fitness;
    return result;
}

inline void to_json(nlohmann::json& j, CmaesConfig const& c)
{
    j = { { "population", c.population }, { "generations", c.generations }, { "initial_sigma", c.initial_sigma },
        { "seed", c.seed }, { "restarts", c.restarts } };
    if (c.parents) {
        j["parents"] = *c.parents;
    }
}

inline void from_json(nlohmann::json const& j, CmaesConfig& c)
{
    c.population = j.value("population", c.population);
    c.generations = j.value("generations", c.generations);
    c.initial_sigma = j.value("initial_sigma", c.initial_sigma);
    c.seed = j.value("seed", c.seed);
    c.restarts = j.value("restarts", c.restarts);
    if (j.contains("parents") && !j["parents"].is_null()) {
        c.parents = j["parents"].get<std::size_t>();
    }
}

inline void to_json(nlohmann::json& j, GenerationRecord const& r)
{
    j = { { "restart", r.restart }, { "generation", r.generation }, { "best", r.best }, { "mean", r.mean },
        { "sigma", r.sigma } };
}

inline void to_json(nlohmann::json& j, OptimizerTrace const& t)
{
    j = { { "generations", t.generations }, { "best_genome", t.best_genome }, { "best_fitness", t.best_fitness },
        { "evaluations", t.evaluations }, { "restarts_used", t.restarts_used } };
}

} // namespace conceptid
