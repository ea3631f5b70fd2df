#include "conceptid/cmaes.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace conceptid;

namespace {

auto sphere(std::span<double const> x) -> double
{
    double s = 0.0;
    for (double v : x) {
        s += (v - 0.5) * (v - 0.5);
    }
    return -s;
}

// Minimum at (0.15, 0.85, 0.3, 0.7, ...), away from the starting mean.
auto shifted_sphere(std::span<double const> x) -> double
{
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double target = (j % 2 == 0) ? 0.15 + 0.15 * static_cast<double>(j % 4) / 2 : 0.85 - 0.15 * static_cast<double>(j % 4 == 3);
        s += (x[j] - target) * (x[j] - target);
    }
    return -s;
}

// Rosenbrock on [-2, 2]^2 mapped from the unit box; optimum at genome (0.75, 0.75).
auto rosenbrock(std::span<double const> g) -> double
{
    double x = -2.0 + 4.0 * g[0];
    double y = -2.0 + 4.0 * g[1];
    return -(100.0 * (y - x * x) * (y - x * x) + (1.0 - x) * (1.0 - x));
}

auto config(std::size_t dim, std::size_t gens, std::uint64_t seed) -> CmaesConfig
{
    CmaesConfig c;
    c.dimension = dim;
    c.population = 20;
    c.generations = gens;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Cmaes, SphereConvergesAndIsReproducible)
{
    auto a = run(config(10, 500, 3), sphere);
    auto b = run(config(10, 500, 3), sphere);
    EXPECT_GE(a.best_fitness, -1e-8);
    EXPECT_EQ(a.best_genome, b.best_genome);
    ASSERT_EQ(a.trace.generations.size(), b.trace.generations.size());
    for (std::size_t g = 0; g < a.trace.generations.size(); ++g) {
        EXPECT_EQ(a.trace.generations[g].best, b.trace.generations[g].best);
        EXPECT_EQ(a.trace.generations[g].sigma, b.trace.generations[g].sigma);
    }
}

TEST(Cmaes, FindsAnOffCenterOptimum)
{
    auto r = run(config(8, 400, 5), shifted_sphere);
    EXPECT_GE(r.best_fitness, -1e-8);
}

TEST(Cmaes, DifferentSeedsGiveDifferentTraces)
{
    auto a = run(config(4, 20, 1), shifted_sphere);
    auto b = run(config(4, 20, 2), shifted_sphere);
    EXPECT_NE(a.best_genome, b.best_genome);
}

TEST(Cmaes, RespectsTheBoxAndPenalizesExcess)
{
    // The optimum lies outside the box; the best clamped genome sits on its edge.
    auto r = run(config(3, 200, 7), [](std::span<double const> x) {
        double s = 0.0;
        for (double v : x) {
            s += (v - 1.4) * (v - 1.4);
        }
        return -s;
    });
    for (double v : r.best_genome) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, 1.0, 1e-3);
    }
    Candidate c = clamp_to_box(std::vector<double> { -0.5, 0.5, 1.25 });
    EXPECT_EQ(c.clamped, (std::vector<double> { 0.0, 0.5, 1.0 }));
    EXPECT_NEAR(c.excess, 0.25 + 0.0625, 1e-15);
    EXPECT_NEAR(Cmaes::penalized(c, 2.0), 2.0 - 10.0 * 0.3125, 1e-12);
}

TEST(Cmaes, EvaluationCountIsPopulationTimesGenerations)
{
    CmaesConfig c = config(5, 1000, 1);
    std::size_t calls = 0;
    auto r = run(c, [&](std::span<double const>) {
        ++calls;
        return 0.0;
    });
    EXPECT_EQ(calls, 20u * 1000u);
    EXPECT_EQ(r.trace.evaluations, 20000u);
    EXPECT_EQ(r.trace.generations.size(), 1000u);
}

TEST(Cmaes, BestIsNonDecreasingWithinARestart)
{
    auto r = run(config(6, 300, 11), rosenbrock);
    for (std::size_t g = 1; g < r.trace.generations.size(); ++g) {
        EXPECT_GE(r.trace.generations[g].best, r.trace.generations[g - 1].best);
    }
}

TEST(Cmaes, LongerBudgetOnRosenbrockIsNoWorse)
{
    auto shorter = run(config(2, 500, 13), rosenbrock);
    auto longer = run(config(2, 2000, 13), rosenbrock);
    EXPECT_GE(longer.best_fitness, shorter.best_fitness);
    EXPECT_GE(longer.best_fitness, -1e-6);
}

TEST(Cmaes, AskTellLoopMatchesRun)
{
    auto cfg = config(10, 50, 7);
    auto expected = run(cfg, sphere);

    Cmaes es(cfg);
    for (std::size_t g = 0; g < cfg.generations && !es.stopped(); ++g) {
        auto const& batch = es.ask();
        std::vector<double> fitness;
        for (auto const& c : batch) {
            fitness.push_back(Cmaes::penalized(c, sphere(c.clamped)));
        }
        es.tell(fitness);
    }
    EXPECT_EQ(es.best_fitness(), expected.best_fitness);
    EXPECT_EQ(es.best_genome(), expected.best_genome);
}

TEST(Cmaes, AskShapeAndDistributionMoves)
{
    Cmaes es(config(7, 10, 1));
    auto first = es.ask();
    ASSERT_EQ(first.size(), 20u);
    for (auto const& c : first) {
        EXPECT_EQ(c.raw.size(), 7u);
    }
    std::vector<double> f;
    for (auto const& c : first) {
        f.push_back(shifted_sphere(c.clamped));
    }
    es.tell(f);
    auto second = es.ask();
    EXPECT_NE(first[0].raw, second[0].raw);
}

TEST(Cmaes, TellValidatesItsInput)
{
    Cmaes es(config(3, 10, 1));
    std::vector<double> ok(20, 0.0);
    EXPECT_THROW(es.tell(ok), ContractViolation); // tell before ask
    es.ask();
    std::vector<double> short_batch(19, 0.0);
    EXPECT_THROW(es.tell(short_batch), ContractViolation);
    ok[4] = std::nan("");
    EXPECT_THROW(es.tell(ok), OptimizerError);
}

TEST(Cmaes, NonFiniteObjectiveNamesTheGenome)
{
    try {
        run(config(2, 5, 1), [](std::span<double const>) { return std::numeric_limits<double>::infinity(); });
        FAIL() << "expected OptimizerError";
    } catch (OptimizerError const& e) {
        EXPECT_NE(std::string(e.what()).find("genome ["), std::string::npos) << e.what();
    }
}

TEST(Cmaes, CovarianceStaysSymmetricPositiveDefinite)
{
    Cmaes es(config(6, 200, 17));
    for (int g = 0; g < 200 && !es.stopped(); ++g) {
        auto const& batch = es.ask();
        std::vector<double> f;
        for (auto const& c : batch) {
            f.push_back(Cmaes::penalized(c, rosenbrock(c.clamped) + shifted_sphere(c.clamped)));
        }
        es.tell(f);
        auto const& cov = es.covariance();
        EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Cmaes, FlatObjectiveRunsOutItsBudgetOrStops)
{
    // Constant fitness drives sigma by path length alone; whatever happens,
    // sigma stays inside its bounds.
    Cmaes es(config(3, 3000, 2));
    while (es.generation() < 3000 && !es.stopped()) {
        es.ask();
        es.tell(std::vector<double>(20, 1.0));
        ASSERT_GE(es.sigma(), sigma_floor);
        ASSERT_LE(es.sigma(), sigma_ceiling);
    }
}

TEST(Cmaes, RestartsUseFreshSeedsAndKeepTheBest)
{
    // On the sphere sigma shrinks geometrically until it reaches its floor,
    // which ends the restart early.
    auto cfg = config(2, 4000, 1);
    cfg.restarts = 2;
    std::size_t restarts_seen = 0;
    auto r = run(cfg, sphere, [&](GenerationRecord const& rec) {
        restarts_seen = std::max(restarts_seen, rec.restart);
        return true;
    });
    EXPECT_EQ(r.trace.restarts_used, restarts_seen);
    EXPECT_GE(r.best_fitness, -1e-12);
}

TEST(Cmaes, ProgressCallbackCanCancel)
{
    std::size_t seen = 0;
    EXPECT_THROW(run(config(3, 100, 1), sphere,
                     [&](GenerationRecord const&) {
                         ++seen;
                         return seen < 5;
                     }),
        Cancelled);
    EXPECT_EQ(seen, 5u);
}

TEST(Cmaes, ParallelEvaluationIsDeterministic)
{
    auto serial = run(config(6, 60, 4), shifted_sphere, {}, 1);
    auto threaded = run(config(6, 60, 4), shifted_sphere, {}, 4);
    EXPECT_EQ(serial.best_genome, threaded.best_genome);
    EXPECT_EQ(serial.best_fitness, threaded.best_fitness);
}

TEST(Cmaes, ConfigValidation)
{
    auto c = config(3, 10, 1);
    c.population = 3;
    EXPECT_THROW(c.check(), ContractViolation);
    c = config(3, 10, 1);
    c.parents = 25;
    EXPECT_THROW(c.check(), ContractViolation);
    c = config(3, 10, 1);
    c.initial_sigma = 0.0;
    EXPECT_THROW(c.check(), ContractViolation);
    EXPECT_EQ(config(3, 10, 1).mu(), 10u);
}

TEST(Cmaes, TraceCsv)
{
    auto r = run(config(2, 3, 1), sphere);
    std::ostringstream s;
    r.trace.write_csv(s);
    auto text = s.str();
    EXPECT_EQ(text.rfind("generation,best,mean,sigma\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
