#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rsgld/constants.hpp"

using namespace rsgld;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

class FlatUtility final : public UtilityModel {
public:
    int param_dim() const override { return 2; }
    int data_dim() const override { return 2; }
    double value(std::span<const double> t, std::span<const double> x) const override {
        return 0.3 * t[0] * x[0] + 0.1 * x[1];
    }
    void gradient(std::span<const double>, std::span<const double> x,
                  std::span<double> out) const override {
        out[0] = 0.3 * x[0];
        out[1] = 0.0;
    }
    GrowthConstants growth() const override { return {2.0, 1.0, 0, 1.0, 0}; }
};

struct Fixture {
    std::vector<Vec> data;
    DROProblem pb;
    ThetaBar tb0;

    explicit Fixture(double eta1 = 1e-3, double eta2 = 2.0, double delta = 0.1)
        : data{{0.3, 0.6}, {-0.9, 0.1}, {0.4, -0.5}},
          pb(eta1, eta2, 2.0, delta, GridSpec(2, 2, 1, {-2.0, -2.0}, {1.5, 1.5}),
             discretise_measure(data, GridSpec(2, 2, 1, {-2.0, -2.0}, {1.5, 1.5})),
             std::make_shared<FlatUtility>()),
          tb0{{-1.0, 0.5}, 0.0} {}

    ConstantsBundle bundle(double beta = 1e9, C4Options c4 = {}) const {
        return compute_bundle(pb, data, {}, tb0, beta, c4);
    }
};

}  // namespace

TEST_CASE("dissipativity constants of the bundle") {
    const Fixture fx;
    const auto cb = fx.bundle();
    // a = min{eta1, eta2 a_iota}/2 with eta1 = 1e-3, eta2 a_iota = 1
    CHECK_THAT(cb.a, WithinAbs(5e-4, 1e-18));
    CHECK(cb.b > 0.0);
    // b = eta2 b_iota + 2 G^2 / min{eta1, eta2 a_iota}
    const double m = fx.pb.m_xi();
    const double g = cb.k_grad * std::pow(1.0 + m, cb.nu) +
                     std::pow(2.0, cb.p) * std::pow(m, cb.p);
    CHECK_THAT(cb.b, WithinRel(cb.eta2 * cb.b_iota + 2.0 * g * g / 1e-3, 1e-12));
}

TEST_CASE("frakM1 drops its iota term at zero") {
    const Fixture fx;
    const auto cb = fx.bundle();
    const double m = fx.pb.m_xi();
    const double root = cb.k_grad * std::pow(1.0 + m, cb.nu) +
                        std::pow(2.0, cb.p) * 1.0 * m;  // M_Xi to the first power
    CHECK_THAT(cb.frak_m1, WithinRel(root * root, 1e-12));
}

TEST_CASE("Ltilde_delta is consistent with L_delta") {
    for (double delta : {0.01, 0.1, 1.0}) {
        const Fixture fx(1e-3, 2.0, delta);
        const auto cb = fx.bundle();
        CHECK_THAT(cb.ltilde_delta,
                   WithinRel(1.0 + cb.l_delta + cb.eta1 + cb.eta2 * cb.Ltilde_iota,
                             1e-12));
    }
}

TEST_CASE("lambda_max shrinks as delta shrinks") {
    const auto coarse = Fixture(1e-3, 2.0, 1.0).bundle();
    const auto mid = Fixture(1e-3, 2.0, 0.1).bundle();
    const auto fine = Fixture(1e-3, 2.0, 0.01).bundle();
    CHECK(coarse.lambda_max_delta > mid.lambda_max_delta);
    CHECK(mid.lambda_max_delta > fine.lambda_max_delta);
}

TEST_CASE("moment expectations are exact over the empirical measure") {
    const Fixture fx;
    const auto cb = fx.bundle();
    double m2p = 0, me = 0;
    for (const auto& x : fx.data) {
        const double g = std::pow(1.0 + norm(x), 2.0 * cb.p);
        m2p += g;
        me += std::pow(1.0 + g, 4.0);
    }
    CHECK_THAT(cb.moment_2p, WithinRel(m2p / 3.0, 1e-14));
    CHECK_THAT(cb.moment_e, WithinRel(me / 3.0, 1e-14));
}

TEST_CASE("b decreases in eta2 while eta2 a_iota stays the binding minimum") {
    // monotone regime of the closed form: min{eta1, eta2 a_iota} = eta2 a_iota and
    // eta2 below the turning point of eta2 b_iota + 2G^2/(eta2 a_iota)
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const double eta1 = std::uniform_real_distribution<double>(5.0, 10.0)(rng);
        const double eta2_small = std::uniform_real_distribution<double>(0.1, 0.8)(rng);
        const double eta2_large = eta2_small * 1.5;  // still below 2 eta1
        const auto lo = Fixture(eta1, eta2_small).bundle();
        const auto hi = Fixture(eta1, eta2_large).bundle();
        REQUIRE(eta2_large * lo.a_iota < eta1);
        CHECK(hi.b < lo.b);
    }
}

TEST_CASE("bundle recomputation is bit-identical") {
    const Fixture fx;
    const auto a = fx.bundle();
    const auto b = fx.bundle();
    CHECK(format_constants_report(a) == format_constants_report(b));
}

TEST_CASE("C4 radius: user bound versus surrogate") {
    const Fixture fx;
    C4Options user;
    user.sup_thetabar = 12.0;
    const auto cb_user = fx.bundle(1e9, user);
    CHECK(cb_user.sup_thetabar == 12.0);
    CHECK_FALSE(cb_user.c4_from_surrogate);

    const auto cb_sur = fx.bundle();
    CHECK(cb_sur.c4_from_surrogate);
    CHECK(cb_sur.sup_thetabar > 0.0);
    CHECK(std::isfinite(cb_sur.c4));

    C4Options refuse;
    refuse.allow_surrogate = false;
    try {
        fx.bundle(1e9, refuse);
        FAIL("expected unavailable_constant_error");
    } catch (const unavailable_constant_error& e) {
        CHECK(e.constant() == "C4");
    }
}

TEST_CASE("report lists every constant") {
    const Fixture fx;
    const auto text = format_constants_report(fx.bundle());
    for (const char* key :
         {"a=", "b=", "a_iota=", "b_iota=", "Ltilde_iota=", "K_nabla=", "Ktilde_nabla=",
          "L_nabla=", "nu=", "J_U=", "chi=", "M_Xi=", "moment_E=", "L_delta=",
          "frakC1=", "frakC2=", "frakC3=", "Ltilde_delta=", "lambda_max_delta=",
          "frakM1=", "frakc1_delta_beta=", "frakC4=", "Ctilde4=", "C5_delta_beta=",
          "C6=", "C4="})
        CHECK(text.find(std::string("\n") + key) != std::string::npos);
    CHECK(text.find("external inputs, not computed") != std::string::npos);
}

TEST_CASE("parameter selection satisfies every inequality") {
    const Fixture fx;
    const auto cb = fx.bundle();
    ExternalConstants ext;
    ext.c_delta_beta = 0.02;
    ext.c1 = 50.0;
    ext.c2 = 30.0;
    const double eps = 0.5;
    const auto ap = algorithm1_params(eps, cb, fx.pb.grid(), ext);

    const double m = static_cast<double>(cb.dim_m);
    SECTION("jj is the smallest admissible integer") {
        const double bound = std::log2(
            5.0 * std::sqrt(m) * (cb.c4 + cb.frak_c4 * (1.0 / cb.a + 2.0 * cb.b)) / eps);
        CHECK(ap.jj.value > bound);
        CHECK(ap.jj.value - 1.0 <= bound);
        CHECK(ap.jj.value == std::floor(ap.jj.value));
    }
    SECTION("delta respects the three-way minimum strictly") {
        const double c1 = eps / (10.0 * m * (ap.ell.value + ap.jj.value) * M_LN2);
        const double c2 = cb.frak_c2 / std::sqrt(cb.a * cb.frak_c1);
        const double c3 = cb.frak_c2 *
                          std::sqrt(eps * std::pow(2.0, ap.jj.value) /
                                    (10.0 * cb.frak_c1 * cb.frak_c4 *
                                     (2.0 * cb.frak_m1 + 1.0) * std::sqrt(m)));
        CHECK(ap.delta.value > 0.0);
        CHECK(ap.delta.value < std::min({c1, c2, c3}));
    }
    SECTION("beta exceeds all three lower bounds") {
        const double d1 = cb.dim_d + 1;
        CHECK(ap.beta.value > 100.0 * d1 / (eps * eps));
        const double lt = cb.frak_c2 / ap.delta.value + cb.frak_c3;
        CHECK(ap.beta.value >
              10.0 * d1 * (1.0 + std::log((lt - 1.0) * cb.moment_2p / cb.a)) / eps);
        CHECK(ap.beta.value >
              10.0 * std::sqrt(m) * cb.frak_c4 * d1 / (eps * std::pow(2.0, ap.jj.value)));
    }
    SECTION("lambda sits below both caps") {
        const double lt = cb.frak_c2 / ap.delta.value + cb.frak_c3;
        const double lmax = std::min(cb.frak_c1 / (lt * lt), 1.0 / cb.a);
        CHECK(ap.lambda.value > 0.0);
        CHECK(ap.lambda.value < lmax);
        CHECK(ap.lambda.value < std::pow(eps, 4.0) / (625.0 * std::pow(*ext.c2, 4.0)));
    }
    SECTION("n exceeds both iteration bounds") {
        const double n1 = 4.0 / (*ext.c_delta_beta * ap.lambda.value) *
                          std::log(10.0 * *ext.c1 / eps);
        const double n2 =
            2.0 / (cb.a * ap.lambda.value) * std::log(10.0 * cb.c6 / eps) - 1.0;
        CHECK(ap.n.value > std::max(n1, n2));
        CHECK(ap.n.value == std::floor(ap.n.value));
    }
    SECTION("halving epsilon raises jj by exactly one") {
        const auto finer = algorithm1_params(eps / 2.0, cb, fx.pb.grid(), ext);
        CHECK(finer.jj.value == ap.jj.value + 1.0);
    }
}

TEST_CASE("parameter selection refuses to invent external constants") {
    const Fixture fx;
    const auto cb = fx.bundle();
    ExternalConstants none;
    try {
        algorithm1_params(0.5, cb, fx.pb.grid(), none);
        FAIL("expected unavailable_constant_error");
    } catch (const unavailable_constant_error& e) {
        CHECK(e.constant() == "C2");
    }
    ExternalConstants only_c2;
    only_c2.c2 = 30.0;
    try {
        algorithm1_params(0.5, cb, fx.pb.grid(), only_c2);
        FAIL("expected unavailable_constant_error");
    } catch (const unavailable_constant_error& e) {
        CHECK(e.constant() == "c_delta_beta");
    }
    CHECK_THROWS_AS(algorithm1_params(-1.0, cb, fx.pb.grid(), only_c2),
                    std::invalid_argument);
}
