#include "doctest.h"

#include <stdexcept>

#include <cmath>
#include <random>
#include <vector>

#include "hisam/mfg.hpp"

using namespace hisam;

namespace {

mfg::SystemParams default_params(std::size_t n) {
    mfg::SystemParams p;
    p.n_devices = n;
    p.f_pop_max = 2000.0;
    p.f_ind_max = 20.0;
    p.time_unit = 1.0;
    return p;
}

// Scalar oracle for the equal-demand population: iterate
//   alpha -> sqrt( (X(alpha)*r/R) / (1/(F_P - X(alpha)) + 1/F_m) ),
//   X(alpha) = N*(alpha + F_m)/3,
// written out directly so it shares nothing with the engine.
struct ScalarFixedPoint {
    double alpha;
    double x;
};

ScalarFixedPoint scalar_oracle(double n, double demand, double f_p, double f_m) {
    const double total = n * demand;
    double alpha = 0.8 * f_m;
    double x = n * (alpha + f_m) / 3.0;
    for (int i = 0; i < 10000; ++i) {
        const double next =
            std::sqrt((x * demand / total) / (1.0 / (f_p - x) + 1.0 / f_m));
        if (std::abs(next - alpha) < 1e-12) {
            alpha = next;
            break;
        }
        alpha = next;
        x = n * (alpha + f_m) / 3.0;
    }
    return {alpha, n * (alpha + f_m) / 3.0};
}

}  // namespace

TEST_CASE("equal demands converge to the scalar fixed point") {
    const auto p = default_params(100);
    std::vector<double> demands(100, 10.0);
    const auto outcome = mfg::negotiate_equilibrium(demands, p);

    REQUIRE(outcome.trace.converged);
    const auto oracle = scalar_oracle(100.0, 10.0, 2000.0, 20.0);
    CHECK(oracle.x == doctest::Approx(1170.0).epsilon(2e-3));
    CHECK(oracle.alpha == doctest::Approx(15.1).epsilon(2e-3));
    CHECK(outcome.result.final_x == doctest::Approx(oracle.x).epsilon(1e-9));
    for (double a : outcome.result.alphas)
        CHECK(a == doctest::Approx(oracle.alpha).epsilon(1e-9));
}

TEST_CASE("symmetry: identical demands produce identical frequencies") {
    const auto p = default_params(10);
    std::vector<double> demands(10, 3.3);
    const auto outcome = mfg::negotiate_equilibrium(demands, p);
    REQUIRE(outcome.trace.converged);
    for (double a : outcome.result.alphas)
        CHECK(a == outcome.result.alphas.front());
}

TEST_CASE("repeated runs are bit-identical") {
    const auto p = default_params(50);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> demand(0.5, 19.5);
    std::vector<double> demands(50);
    for (auto& d : demands) d = demand(rng);

    const auto a = mfg::negotiate_equilibrium(demands, p);
    const auto b = mfg::negotiate_equilibrium(demands, p);
    REQUIRE(a.trace.converged);
    CHECK(a.result.final_x == b.result.final_x);
    CHECK(a.result.alphas == b.result.alphas);
    CHECK(a.trace.per_round_errors == b.trace.per_round_errors);
}

TEST_CASE("trace shape matches the executed rounds") {
    const auto p = default_params(20);
    std::vector<double> demands(20, 8.0);
    const auto outcome = mfg::negotiate_equilibrium(demands, p);
    REQUIRE(outcome.trace.converged);
    CHECK(outcome.trace.per_round_errors.size() ==
          outcome.trace.per_round_alphas.size());
    CHECK(outcome.trace.per_round_errors.back() < p.tolerance);
    CHECK(outcome.trace.per_round_errors.size() <= p.max_rounds);
    CHECK(outcome.trace.final_x == outcome.result.final_x);
}

TEST_CASE("error sequence decreases and clamped devices stay capped") {
    auto p = default_params(100);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> demand(0.5, 19.5);
    std::vector<double> demands(100);
    for (auto& d : demands) d = demand(rng);

    const auto outcome = mfg::negotiate_equilibrium(demands, p);
    REQUIRE(outcome.trace.converged);
    const auto& errors = outcome.trace.per_round_errors;
    for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i] < errors[i - 1]);
    for (double a : outcome.result.alphas) {
        CHECK(a > 0.0);
        CHECK(a <= p.f_m());
    }
}

TEST_CASE("non-convergence is an explicit result, not silence") {
    auto p = default_params(100);
    p.max_rounds = 1;
    p.tolerance = 1e-300;
    std::vector<double> demands(100, 10.0);
    const auto outcome = mfg::negotiate_equilibrium(demands, p);
    CHECK_FALSE(outcome.trace.converged);
    CHECK(outcome.trace.per_round_errors.size() == 1);
    CHECK_FALSE(outcome.result.alphas.empty());
}

TEST_CASE("parameter validation") {
    auto p = default_params(1);
    std::vector<double> demands{10.0};
    CHECK_THROWS_AS(mfg::negotiate_equilibrium(demands, p), std::invalid_argument);

    auto q = default_params(3);
    std::vector<double> mismatch{1.0, 2.0};
    CHECK_THROWS_AS(mfg::negotiate_equilibrium(mismatch, q), std::invalid_argument);
}

TEST_CASE("engine exposes the same iterates as the solver") {
    const auto p = default_params(10);
    std::vector<double> demands(10, 10.0);
    const auto outcome = mfg::negotiate_equilibrium(demands, p);

    mfg::SystemParams unit = p;
    unit.time_unit = 1.0;
    mfg::NegotiationEngine engine(unit, 100.0);
    CHECK(engine.initial_alpha() == doctest::Approx(0.8 * p.f_m()));
    std::vector<double> alphas(10);
    while (!engine.converged() && engine.rounds() < p.max_rounds) {
        for (int e = 0; e < mfg::NegotiationEngine::kExchangesPerRound; ++e) {
            const double x = engine.broadcast_x();
            for (std::size_t i = 0; i < demands.size(); ++i)
                alphas[i] = mfg::optimal_alpha(demands[i], x, unit, 100.0);
            engine.submit_alphas(alphas);
        }
        engine.round_boundary();
    }
    CHECK(engine.final_x() == outcome.result.final_x);
    CHECK(engine.committed_alphas() == outcome.result.alphas);
}
