#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rsgld/model.hpp"

using namespace rsgld;
using Catch::Matchers::WithinAbs;

namespace {

// independent evaluation path for cross-checking value()
double reference_u(std::span<const double> theta, std::span<const double> x, int m) {
    double t = theta[m - 1];
    for (int k = 0; k + 1 < m; ++k) t += theta[k] * x[k];
    const double s = 1.0 / (1.0 + std::exp(-t));
    return (x[m - 1] - s) * (x[m - 1] - s);
}

Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> pick(lo, hi);
    Vec v(n);
    for (auto& c : v) c = pick(rng);
    return v;
}

}  // namespace

TEST_CASE("predict basics") {
    RegressionNet net(4);
    const Vec zero(4, 0.0);
    CHECK(net.predict(zero, Vec{0.3, -0.8, 2.0}) == 0.5);
    // clear asymptote for a huge logit
    CHECK_THAT(net.predict(Vec{100.0, 0.0, 0.0, 0.0}, Vec{1.0, 0.0, 0.0}),
               WithinAbs(1.0, 1e-12));
    // theta* from the study at z = 0: sigmoid(-0.2)
    const Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    CHECK_THAT(net.predict(theta_star, Vec{0.0, 0.0, 0.0}),
               WithinAbs(0.45016600268752216, 1e-12));
    const double v = net.predict(theta_star, Vec{0.9, -0.7, 0.3});
    CHECK(v > 0.0);
    CHECK(v < 1.0);
}

TEST_CASE("u_value squared residual") {
    RegressionNet net(4);
    const Vec zero(4, 0.0);
    CHECK(net.value(zero, Vec{0.1, 0.2, 0.3, 0.5}) == 0.0);
    CHECK_THAT(net.value(zero, Vec{0.1, 0.2, 0.3, 1.0}), WithinAbs(0.25, 1e-15));
    std::mt19937_64 rng(21);
    for (int i = 0; i < 200; ++i) {
        const Vec theta = random_vec(rng, 4, -2.0, 2.0);
        const Vec x = random_vec(rng, 4, -3.0, 3.0);
        CHECK_THAT(net.value(theta, x), WithinAbs(reference_u(theta, x, 4), 1e-12));
    }
}

TEST_CASE("u_grad matches central finite differences") {
    RegressionNet net(4);
    std::mt19937_64 rng(22);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec theta = random_vec(rng, 4, -2.0, 2.0);
        const Vec x = random_vec(rng, 4, -3.0, 3.0);
        Vec g(4);
        net.gradient(theta, x, g);
        for (int k = 0; k < 4; ++k) {
            Vec hi = theta, lo = theta;
            hi[k] += h;
            lo[k] -= h;
            const double fd = (net.value(hi, x) - net.value(lo, x)) / (2 * h);
            CHECK_THAT(g[k], WithinAbs(fd, 1e-6 * std::max(1.0, std::abs(fd))));
        }
    }
    // zero residual kills every component
    Vec g(4);
    net.gradient(Vec(4, 0.0), Vec{0.4, -0.1, 0.9, 0.5}, g);
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("growth constants of the regression utility") {
    RegressionNet net(4);
    const auto gc = net.growth();
    CHECK(gc.l_grad == 24.0);  // 6m
    CHECK(gc.nu == 3);
    CHECK(gc.k_grad == 8.0);  // 2m
    CHECK(gc.j_u == 4.0);
    CHECK(gc.chi == 1);
}

TEST_CASE("growth inequalities hold on random samples") {
    RegressionNet net(4);
    const auto gc = net.growth();
    const Vec lo(4, -3.0), hi(4, 3.0);
    const double max_u0 = net.max_value_at_zero(lo, hi);
    CHECK_THAT(max_u0, WithinAbs(12.25, 1e-12));  // (3 + 1/2)^2
    const double ktilde = std::max(gc.k_grad, max_u0);

    std::mt19937_64 rng(23);
    Vec g(4);
    for (int i = 0; i < 10000; ++i) {
        const Vec theta = random_vec(rng, 4, -5.0, 5.0);
        const Vec x = random_vec(rng, 4, -3.0, 3.0);
        const double xn = norm(x);
        net.gradient(theta, x, g);
        CHECK(norm(g) <= gc.k_grad * std::pow(1.0 + xn, gc.nu));
        CHECK(std::abs(net.value(theta, x)) <=
              ktilde * std::pow(1.0 + xn, gc.nu) * (1.0 + norm(theta)) + 1e-12);
        // Lipschitz in the data argument
        const Vec x2 = random_vec(rng, 4, -3.0, 3.0);
        Vec dx(4);
        for (int k = 0; k < 4; ++k) dx[k] = x[k] - x2[k];
        const double rhs = gc.j_u * (1.0 + norm(theta)) *
                           std::pow(1.0 + xn + norm(x2), gc.chi) * norm(dx);
        CHECK(std::abs(net.value(theta, x) - net.value(theta, x2)) <= rhs + 1e-12);
    }
}

TEST_CASE("batch entry points agree with the scalar ones") {
    RegressionNet net(3);
    GridSpec spec(3, 2, 1, Vec(3, -1.5), Vec(3, 1.5));
    const auto pts = enumerate_points(spec);
    std::mt19937_64 rng(24);
    const Vec theta = random_vec(rng, 3, -1.0, 1.0);

    Vec batch(pts.count), loop(pts.count);
    net.value_batch(theta, pts, batch);
    for (std::size_t j = 0; j < pts.count; ++j) loop[j] = net.value(theta, pts.row(j));
    for (std::size_t j = 0; j < pts.count; ++j) CHECK(batch[j] == loop[j]);

    Vec w(pts.count);
    for (auto& v : w) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    Vec fast(3), slow(3, 0.0), g(3);
    net.weighted_gradient_sum(theta, pts, w, fast);
    for (std::size_t j = 0; j < pts.count; ++j) {
        net.gradient(theta, pts.row(j), g);
        for (int k = 0; k < 3; ++k) slow[k] += w[j] * g[k];
    }
    for (int k = 0; k < 3; ++k) CHECK_THAT(fast[k], WithinAbs(slow[k], 1e-10));
}
