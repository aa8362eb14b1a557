#include "doctest.h"

#include <stdexcept>

#include <cmath>
#include <random>

#include "hisam/mfg.hpp"

using namespace hisam;

namespace {

mfg::SystemParams unit_params() {
    mfg::SystemParams p;
    p.n_devices = 100;
    p.f_pop_max = 2000.0;
    p.f_ind_max = 20.0;
    p.time_unit = 1.0;
    return p;
}

// Composite Simpson over [lo, hi]; exact for the piecewise-quadratic
// integrands here once panels align with each limb.
double simpson(double lo, double hi, std::size_t panels, const auto& f) {
    if (hi <= lo) return 0.0;
    const double h = (hi - lo) / static_cast<double>(panels);
    double sum = f(lo) + f(hi);
    for (std::size_t i = 1; i < panels; ++i)
        sum += f(lo + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

struct Support {
    double lo;
    double vertex;
    double hi;
};

Support support_at(const mfg::MeanFieldTriangle& tri, double t) {
    const double vertex = tri.vertex_rate * t;
    return {vertex - tri.weight * tri.base, vertex,
            vertex + (1.0 - tri.weight) * tri.base};
}

double integrate_density(const mfg::MeanFieldTriangle& tri, double t,
                         const mfg::SystemParams& p, const auto& weight) {
    const Support s = support_at(tri, t);
    const auto f = [&](double x) {
        return weight(x) * mfg::triangle_density(tri, t, x, p);
    };
    return simpson(s.lo, s.vertex, 2000, f) + simpson(s.vertex, s.hi, 2000, f);
}

}  // namespace

TEST_CASE("unitized density peak and support edges") {
    const mfg::SystemParams p = unit_params();
    const double f_m = p.f_m();
    const double alpha = 15.1;
    const auto tri = mfg::MeanFieldTriangle::unitized(alpha, f_m);

    CHECK(mfg::triangle_density(tri, 1.0, alpha, p) ==
          doctest::Approx(2.0 / f_m).epsilon(1e-12));
    CHECK(mfg::triangle_density(tri, 1.0, 0.0, p) == 0.0);
    CHECK(mfg::triangle_density(tri, 1.0, f_m, p) == 0.0);
    CHECK(mfg::triangle_density(tri, 1.0, -1.0, p) == 0.0);
    CHECK(mfg::triangle_density(tri, 1.0, f_m + 1.0, p) == 0.0);
}

TEST_CASE("unitized limbs match the closed forms") {
    const mfg::SystemParams p = unit_params();
    const double f_m = 20.0;
    const double alpha = 12.0;
    const auto tri = mfg::MeanFieldTriangle::unitized(alpha, f_m);
    for (double t : {0.0, 0.35, 1.0}) {
        const double shift = alpha * (t - 1.0);
        for (double x = shift + 0.5; x < f_m + shift; x += 0.7) {
            const double left = 2.0 * (x - shift) / (f_m * alpha);
            const double right = -2.0 * (x - f_m - shift) / (f_m * (f_m - alpha));
            const double expected =
                x < alpha * t ? std::max(0.0, left) : std::max(0.0, right);
            CHECK(mfg::triangle_density(tri, t, x, p) ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("density normalizes to one and reproduces the triangle mean") {
    const mfg::SystemParams p = unit_params();
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double f_m = 2.0 + 30.0 * pick(rng);
        const double alpha = f_m * (0.05 + 0.9 * pick(rng));
        const auto tri = mfg::MeanFieldTriangle::unitized(alpha, f_m);
        const double t = 1.0;

        const double mass = integrate_density(tri, t, p, [](double) { return 1.0; });
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));

        const double mean = integrate_density(tri, t, p, [](double x) { return x; });
        CHECK(mean == doctest::Approx((alpha + f_m) / 3.0).epsilon(1e-9));
    }
}

TEST_CASE("general triangle normalizes at every admissible time") {
    const mfg::SystemParams p = unit_params();
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        mfg::MeanFieldTriangle tri;
        tri.vertex_rate = 0.5 + 18.0 * pick(rng);
        tri.base = 1.0 + 25.0 * pick(rng);
        tri.weight = 0.05 + 0.9 * pick(rng);
        tri.focus_time = 0.2 + 0.8 * pick(rng);
        const double t = pick(rng);
        const double mass = integrate_density(tri, t, p, [](double) { return 1.0; });
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("workload expectation matches the quadrature mean devicewise") {
    const mfg::SystemParams p = unit_params();
    std::vector<double> alphas{3.0, 8.5, 15.1, 19.9};
    double quadrature_total = 0.0;
    for (double a : alphas) {
        const auto tri = mfg::MeanFieldTriangle::unitized(a, p.f_m());
        quadrature_total += integrate_density(tri, 1.0, p, [](double x) { return x; });
    }
    CHECK(mfg::expected_population_workload(alphas, p) ==
          doctest::Approx(quadrature_total).epsilon(1e-9));
}

TEST_CASE("transport: the density is a pure translation at speed alpha") {
    const mfg::SystemParams p = unit_params();
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    const double h = 1e-4;
    for (int trial = 0; trial < 100; ++trial) {
        const double f_m = 5.0 + 20.0 * pick(rng);
        const double alpha = f_m * (0.15 + 0.7 * pick(rng));
        const auto tri = mfg::MeanFieldTriangle::unitized(alpha, f_m);
        const double t = 0.3 + 0.4 * pick(rng);

        // Probe away from the three kinks by several stencil widths.
        const double shift = alpha * (t - 1.0);
        const double lo = shift;
        const double vertex = alpha * t;
        const double hi = f_m + shift;
        for (double frac : {0.3, 0.7}) {
            const double x =
                frac < 0.5 ? lo + (vertex - lo) * 0.5 : vertex + (hi - vertex) * 0.5;
            const double dm_dt = (mfg::triangle_density(tri, t + h, x, p) -
                                  mfg::triangle_density(tri, t - h, x, p)) /
                                 (2.0 * h);
            const double dm_dx = (mfg::triangle_density(tri, t, x + h, p) -
                                  mfg::triangle_density(tri, t, x - h, p)) /
                                 (2.0 * h);
            CHECK(dm_dt + alpha * dm_dx == doctest::Approx(0.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("degenerate triangles keep a single limb and unit mass") {
    const mfg::SystemParams p = unit_params();

    // alpha* = F_m: the right limb has zero width.
    const auto right_edge = mfg::MeanFieldTriangle::unitized(20.0, 20.0);
    CHECK(mfg::triangle_density(right_edge, 1.0, 20.0, p) ==
          doctest::Approx(0.1).epsilon(1e-12));
    CHECK(mfg::triangle_density(right_edge, 1.0, 21.0, p) == 0.0);
    const double mass =
        integrate_density(right_edge, 1.0, p, [](double) { return 1.0; });
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

    mfg::MeanFieldTriangle left_edge;
    left_edge.vertex_rate = 5.0;
    left_edge.base = 10.0;
    left_edge.weight = 0.0;
    left_edge.focus_time = 1.0;
    CHECK(mfg::triangle_density(left_edge, 1.0, 5.0, p) ==
          doctest::Approx(0.2).epsilon(1e-12));
    CHECK(mfg::triangle_density(left_edge, 1.0, 4.0, p) == 0.0);
}
