#pragma once

#include "rsgld/experiment.hpp"
#include "rsgld/oracle.hpp"

namespace rsgld::selftest {

struct SuiteResult {
    std::string name;
    std::size_t checks = 0;
    std::size_t failures = 0;
    double seconds = 0.0;
    std::vector<std::string> messages;

    bool passed() const { return failures == 0 && checks > 0; }
    void fail(std::string msg) {
        ++failures;
        if (messages.size() < 8) messages.push_back(std::move(msg));
    }
};

namespace detail {

class Timer {
public:
    explicit Timer(SuiteResult& r) : r_(r), t0_(std::chrono::steady_clock::now()) {}
    ~Timer() {
        r_.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
                .count();
    }

private:
    SuiteResult& r_;
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

/// Smooth 1-D utility with a movable, asymmetric landscape; used where the
/// suites need a non-regression instance.
class SineUtility final : public UtilityModel {
public:
    int param_dim() const override { return 1; }
    int data_dim() const override { return 1; }
    double value(std::span<const double> theta, std::span<const double> x) const override {
        return std::sin(2.3 * x[0] + 0.7 * theta[0]) * (1.1 + std::cos(1.3 * x[0]));
    }
    void gradient(std::span<const double> theta, std::span<const double> x,
                  std::span<double> out) const override {
        out[0] = 0.7 * std::cos(2.3 * x[0] + 0.7 * theta[0]) * (1.1 + std::cos(1.3 * x[0]));
    }
    GrowthConstants growth() const override { return {2.0, 2.0, 0, 7.0, 0}; }
};

/// The corrupted-regression instance the analytic suites run against
/// (smaller sample count; the grid and constants match the full study).
inline DROProblem make_reference_problem(double eta2, double delta,
                                         std::uint64_t seed,
                                         std::vector<Vec>* data_out = nullptr) {
    ExpConfig cfg;
    cfg.n_train = 2000;
    const auto net = std::make_shared<RegressionNet>(cfg.m);
    Dataset clean = generate_clean(*net, cfg.n_train, cfg.theta_star, 0.1,
                                   rsgld::detail::mix_seed(seed, 1));
    CorruptOptions co;
    co.q = cfg.q;
    co.seed = rsgld::detail::mix_seed(seed, 2);
    const GridSpec spec = cfg.grid_spec();
    co.clip_lo = spec.lo;
    co.clip_hi = spec.hi;
    Dataset train = corrupt(clean, co);
    if (data_out) *data_out = train.rows;
    return DROProblem(cfg.eta1, eta2, cfg.p, delta, spec,
                      discretise_measure(train.rows, spec), net);
}

/// H against central finite differences of tilde_value, 1e-5 relative, at 20
/// random (thetabar, x). inject_bug biases the computed H; used as the
/// negative control for the verification front end.
inline SuiteResult suite_gradient_check(std::uint64_t seed = 2024,
                                        bool inject_bug = false) {
    SuiteResult r{"gradient-check"};
    detail::Timer timer(r);
    const DROProblem pb = make_reference_problem(2.0, 0.1, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pick_theta(-3.0, 3.0);
    std::uniform_real_distribution<double> pick_alpha(-2.0, 2.0);
    const double h = 1e-6;
    Workspace ws;
    for (int trial = 0; trial < 20; ++trial) {
        ThetaBar tb;
        tb.theta.resize(pb.dim_d());
        for (auto& v : tb.theta) v = pick_theta(rng);
        tb.alpha = pick_alpha(rng);
        Vec x(pb.dim_m());
        for (int k = 0; k < pb.dim_m(); ++k)
            x[k] = std::uniform_real_distribution<double>(pb.grid().lo[k],
                                                          pb.grid().hi[k])(rng);
        Vec grad(tb.dim());
        stochastic_gradient(pb, tb, x, grad, ws);
        if (inject_bug) grad[0] += 1e-3 * (1.0 + std::abs(grad[0]));
        Vec fd(tb.dim());
        Vec flat = tb.flat();
        for (std::size_t k = 0; k < flat.size(); ++k) {
            Vec hi = flat, lo = flat;
            hi[k] += h;
            lo[k] -= h;
            fd[k] = (tilde_value(pb, ThetaBar::from_flat(hi), x, ws) -
                     tilde_value(pb, ThetaBar::from_flat(lo), x, ws)) /
                    (2.0 * h);
        }
        Vec diff(flat.size());
        for (std::size_t k = 0; k < flat.size(); ++k) diff[k] = grad[k] - fd[k];
        const double rel = norm(diff) / std::max(1.0, norm(fd));
        ++r.checks;
        if (!(rel <= 1e-5))
            r.fail("gradient mismatch " + std::to_string(rel) + " at trial " +
                   std::to_string(trial));
    }
    return r;
}

/// Smoothing sandwich V <= max <= V + delta log N at 100 random (thetabar, x)
/// for delta in {0.01, 0.1, 1}.
inline SuiteResult suite_sandwich(std::uint64_t seed = 2024) {
    SuiteResult r{"sandwich"};
    detail::Timer timer(r);
    for (double delta : {0.01, 0.1, 1.0}) {
        const DROProblem pb = make_reference_problem(2.0, delta, seed);
        const double dlogn =
            delta * std::log(static_cast<double>(pb.n_points()));
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(delta * 1000));
        std::uniform_real_distribution<double> pick_theta(-3.0, 3.0);
        std::uniform_real_distribution<double> pick_alpha(-2.0, 2.0);
        Workspace ws;
        for (int trial = 0; trial < 100; ++trial) {
            ThetaBar tb;
            tb.theta.resize(pb.dim_d());
            for (auto& v : tb.theta) v = pick_theta(rng);
            tb.alpha = pick_alpha(rng);
            Vec x(pb.dim_m());
            for (int k = 0; k < pb.dim_m(); ++k)
                x[k] = std::uniform_real_distribution<double>(pb.grid().lo[k],
                                                              pb.grid().hi[k])(rng);
            const double v = smoothed_value(pb, tb, x, ws);
            const double mx = max_score(pb, tb, x, ws);
            ++r.checks;
            const double tol = 1e-9 * (1.0 + std::abs(mx));
            if (!(v <= mx + tol && mx <= v + dlogn + tol))
                r.fail("sandwich violated at delta=" + std::to_string(delta) +
                       " trial " + std::to_string(trial));
        }
    }
    return r;
}

/// <thetabar, H> >= a |thetabar|^2 - b with the closed-form (a, b), at 1e4
/// random draws with |thetabar| <= 100.
inline SuiteResult suite_dissipativity(std::uint64_t seed = 2024) {
    SuiteResult r{"dissipativity"};
    detail::Timer timer(r);
    std::vector<Vec> data;
    const DROProblem pb = make_reference_problem(2.0, 0.1, seed, &data);
    ThetaBar tb0;
    tb0.theta.assign(pb.dim_d(), -2.0);
    const auto cb = compute_bundle(pb, data, {}, tb0, 1e9);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> radius(0.0, 100.0);
    Workspace ws;
    Vec grad(pb.dim_d() + 1);
    for (int trial = 0; trial < 10000; ++trial) {
        Vec dir(pb.dim_d() + 1);
        for (auto& v : dir) v = gauss(rng);
        const double rr = radius(rng) / std::max(norm(dir), 1e-12);
        for (auto& v : dir) v *= rr;
        ThetaBar tb = ThetaBar::from_flat(dir);
        Vec x(pb.dim_m());
        for (int k = 0; k < pb.dim_m(); ++k)
            x[k] = std::uniform_real_distribution<double>(pb.grid().lo[k],
                                                          pb.grid().hi[k])(rng);
        stochastic_gradient(pb, tb, x, grad, ws);
        const double lhs = dot(dir, grad);
        const double rhs = cb.a * norm2(dir) - cb.b;
        ++r.checks;
        if (!(lhs >= rhs - 1e-9 * std::abs(rhs)))
            r.fail("dissipativity violated at trial " + std::to_string(trial));
    }
    return r;
}

inline oracle::TinyInstance random_tiny_instance(std::mt19937_64& rng) {
    oracle::TinyInstance inst;
    std::uniform_int_distribution<int> pick_n(2, 4), pick_m(1, 2);
    const int n = pick_n(rng), m = pick_m(rng);
    std::uniform_real_distribution<double> coord(-1.5, 1.5), uval(-1.0, 1.0);
    for (int i = 0; i < n; ++i) {
        Vec x(m);
        for (auto& c : x) c = coord(rng);
        inst.support.push_back(std::move(x));
        inst.u_values.push_back(uval(rng));
    }
    std::exponential_distribution<double> expo(1.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        inst.mu0.push_back(expo(rng) + 1e-3);
        total += inst.mu0.back();
    }
    double acc = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        inst.mu0[i] /= total;
        acc += inst.mu0[i];
    }
    inst.mu0[n - 1] = 1.0 - acc;
    std::uniform_real_distribution<double> logeta(std::log(0.05), std::log(5.0));
    inst.eta2 = std::exp(logeta(rng));
    inst.p = (rng() % 2 == 0) ? 1.0 : 2.0;
    return inst;
}

/// |primal - dual| <= 2e-3 on 100 random tiny instances, both sides computed
/// by independent routes.
inline SuiteResult suite_duality(std::uint64_t seed = 2024) {
    SuiteResult r{"duality"};
    detail::Timer timer(r);
    std::mt19937_64 rng(seed);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = random_tiny_instance(rng);
        const double gap = oracle::duality_gap(inst);
        ++r.checks;
        if (!(gap <= 2e-3))
            r.fail("duality gap " + std::to_string(gap) + " at trial " +
                   std::to_string(trial));
    }
    return r;
}

/// Discretisation rate: differences of u_discrete across meshes jj = 2..8 on a
/// fixed 1-D instance decay with fitted log2 slope <= -0.8.
inline SuiteResult suite_quadrature() {
    SuiteResult r{"quadrature-slope"};
    detail::Timer timer(r);
    const auto model = std::make_shared<SineUtility>();
    const std::vector<Vec> atoms = {{0.137}, {-0.49}, {0.8113}, {1.555}, {-1.201}};
    const Vec theta = {0.3};
    Vec values;
    for (int jj = 2; jj <= 8; ++jj) {
        GridSpec spec(1, 2, jj, {-1.9}, {1.9});
        DROProblem pb(1e-3, 0.7, 2.0, 0.1, spec, discretise_measure(atoms, spec),
                      model);
        values.push_back(u_discrete(pb, theta));
    }
    // least-squares fit of log2 |u_{jj+1} - u_jj| against jj
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(values.size()) - 1;
    for (int i = 0; i < n; ++i) {
        const double x = i + 2.0;
        const double y = std::log2(std::max(std::abs(values[i + 1] - values[i]), 1e-16));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ++r.checks;
    if (!(slope <= -0.8))
        r.fail("quadrature slope " + std::to_string(slope) + " > -0.8");
    r.messages.push_back("fitted slope " + std::to_string(slope));
    return r;
}

inline std::vector<SuiteResult> run_suites(const std::vector<std::string>& which,
                                           std::uint64_t seed = 2024,
                                           bool inject_gradient_bug = false) {
    auto want = [&](const char* name) {
        if (which.empty()) return true;
        for (const auto& w : which)
            if (w == name) return true;
        return false;
    };
    std::vector<SuiteResult> out;
    if (want("duality")) out.push_back(suite_duality(seed));
    if (want("sandwich")) out.push_back(suite_sandwich(seed));
    if (want("dissipativity")) out.push_back(suite_dissipativity(seed));
    if (want("gradient")) out.push_back(suite_gradient_check(seed, inject_gradient_bug));
    if (want("quadrature")) out.push_back(suite_quadrature());
    return out;
}

}  // namespace rsgld::selftest
