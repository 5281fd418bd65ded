#pragma once

#include <optional>
#include <sstream>

#include "rsgld/objective.hpp"

namespace rsgld {

/// Every closed-form constant of the convergence analysis, evaluated for one
/// problem instance. c_delta_beta and C1..C3 come from an external reference
/// and are accepted as user inputs only, never computed here.
struct ConstantsBundle {
    // instance parameters
    double eta1, eta2, p, delta, beta;
    int dim_d, dim_m;
    std::size_t n_grid_points;
    // penalty transform constants
    double a_iota, b_iota, L_iota, M_iota, Ltilde_iota;
    // utility growth constants
    double k_grad, ktilde_grad, l_grad, j_u;
    int nu, chi;
    // data-dependent quantities
    double m_xi;
    double moment_e;    // E[(1 + (1+|X0|)^{2p})^4]
    double moment_2p;   // E[(1+|X0|)^{2p}]
    double theta0_sq_moment;
    // dissipativity and Lipschitz constants
    double a, b;
    double l_delta;
    double frak_c1, frak_c2, frak_c3;
    double ltilde_delta;
    double lambda_max_delta;
    // discretisation-error constants
    double frak_m1;
    double frak_c1_delta_beta;
    double frak_c4;
    double ctilde4;
    double c5_delta_beta;
    double c6;
    double c4;
    double sup_thetabar;  // radius used for C4
    bool c4_from_surrogate;
};

struct C4Options {
    std::optional<double> sup_thetabar;  // user bound on the compact set radius
    bool allow_surrogate = true;
};

namespace detail {

inline double recompute_ltilde_delta(const ConstantsBundle& cb, double delta) {
    return cb.frak_c2 / delta + cb.frak_c3;
}

inline double recompute_lambda_max(const ConstantsBundle& cb, double delta) {
    const double lt = recompute_ltilde_delta(cb, delta);
    return std::min(cb.frak_c1 / (lt * lt), 1.0 / cb.a);
}

}  // namespace detail

/// Evaluates the whole bundle for a problem instance. data_points/data_masses
/// describe the empirical reference measure used for the moment expectations
/// (empty masses = uniform); theta0 is the initial condition (its squared norm
/// is used as the second moment unless theta0_sq_moment_override >= 0).
inline ConstantsBundle compute_bundle(const DROProblem& pb,
                                      const std::vector<Vec>& data_points,
                                      std::span<const double> data_masses,
                                      const ThetaBar& theta0, double beta,
                                      const C4Options& c4opt = {},
                                      double theta0_sq_moment_override = -1.0) {
    if (!(beta > 0)) throw std::invalid_argument("compute_bundle: beta must be > 0");
    if (data_points.empty())
        throw std::invalid_argument("compute_bundle: empty data set");
    ConstantsBundle cb{};
    cb.eta1 = pb.eta1();
    cb.eta2 = pb.eta2();
    cb.p = pb.p();
    cb.delta = pb.delta();
    cb.beta = beta;
    cb.dim_d = pb.dim_d();
    cb.dim_m = pb.dim_m();
    cb.n_grid_points = pb.n_points();

    const auto& pc = penalty::dissipativity_constants();
    cb.a_iota = pc.a_iota;
    cb.b_iota = pc.b_iota;
    cb.L_iota = pc.L_iota;
    cb.M_iota = pc.M_iota;
    cb.Ltilde_iota = pc.Ltilde_iota;

    const auto& gc = pb.growth();
    cb.k_grad = gc.k_grad;
    cb.l_grad = gc.l_grad;
    cb.nu = gc.nu;
    cb.j_u = gc.j_u;
    cb.chi = gc.chi;
    cb.ktilde_grad = pb.ktilde();

    const double m = pb.m_xi();
    cb.m_xi = m;
    cb.moment_e = 0.0;
    cb.moment_2p = 0.0;
    {
        double total = 0.0;
        for (std::size_t i = 0; i < data_points.size(); ++i) {
            const double w = data_masses.empty() ? 1.0 : data_masses[i];
            const double g = std::pow(1.0 + norm(data_points[i]), 2.0 * cb.p);
            cb.moment_2p += w * g;
            cb.moment_e += w * std::pow(1.0 + g, 4.0);
            total += w;
        }
        cb.moment_2p /= total;
        cb.moment_e /= total;
    }
    cb.theta0_sq_moment = theta0_sq_moment_override >= 0.0
                              ? theta0_sq_moment_override
                              : norm2(theta0.flat());

    const double min_eta = std::min(cb.eta1, cb.eta2 * cb.a_iota);
    cb.a = min_eta / 2.0;
    const double pow_nu = std::pow(1.0 + m, cb.nu);
    const double grad_growth = cb.k_grad * pow_nu +
                               std::pow(2.0, cb.p) * cb.M_iota * std::pow(m, cb.p);
    cb.b = cb.eta2 * cb.b_iota + 2.0 * grad_growth * grad_growth / min_eta;

    const double mp = std::max(1.0, std::pow(m, cb.p));
    const double gq = cb.k_grad * pow_nu +
                      std::pow(2.0, cb.p - 1.0) * mp * cb.M_iota;
    cb.l_delta = 2.0 * pow_nu * (4.0 * cb.k_grad * gq / cb.delta + cb.l_grad) +
                 (std::pow(2.0, cb.p) * cb.L_iota * mp +
                  std::pow(2.0, cb.p + 2.0) * cb.M_iota * mp * gq / cb.delta);
    cb.frak_c2 = (8.0 * cb.k_grad * pow_nu +
                  std::pow(2.0, cb.p + 2.0) * cb.M_iota * mp) *
                 gq;
    cb.frak_c3 = 2.0 * cb.l_grad * pow_nu + std::pow(2.0, cb.p) * cb.L_iota * mp +
                 cb.eta1 + cb.eta2 * cb.Ltilde_iota + 1.0;
    cb.ltilde_delta = cb.frak_c2 / cb.delta + cb.frak_c3;
    cb.frak_c1 = std::min(cb.a, std::cbrt(cb.a)) / (16.0 * std::sqrt(cb.moment_e));
    cb.lambda_max_delta =
        std::min(cb.frak_c1 / (cb.ltilde_delta * cb.ltilde_delta), 1.0 / cb.a);

    const double m1_root = cb.k_grad * pow_nu + std::pow(2.0, cb.p) * cb.M_iota * m +
                           cb.eta2 * penalty::iota_iota_prime(0.0);
    cb.frak_m1 = m1_root * m1_root;
    cb.frak_c1_delta_beta = 2.0 * cb.frak_m1 * cb.lambda_max_delta + 2.0 * cb.b +
                            2.0 * (cb.dim_d + 1) / beta;

    const double pow_4m = std::pow(1.0 + 4.0 * m, cb.p - 1.0);
    cb.frak_c4 = cb.j_u * std::pow(1.0 + 2.0 * m, cb.chi) +
                 8.0 * cb.p * cb.ktilde_grad / std::sqrt(cb.eta2) *
                     std::pow(1.0 + 4.0 * m, cb.nu + cb.p - 1.0);
    cb.ctilde4 = cb.j_u * std::pow(1.0 + m, cb.chi) +
                 4.0 * cb.p / std::sqrt(cb.eta2) * pow_4m *
                     (1.0 + 2.0 * cb.ktilde_grad * pow_nu) +
                 std::pow(2.0, cb.p + 2.0) * cb.p * m / cb.eta2 * pow_4m;
    cb.c5_delta_beta = cb.frak_c4 * std::sqrt(cb.frak_c1_delta_beta) *
                       std::sqrt(cb.lambda_max_delta + 1.0 / cb.a);
    cb.c6 = cb.frak_c4 * std::sqrt(cb.theta0_sq_moment);

    if (c4opt.sup_thetabar) {
        cb.sup_thetabar = *c4opt.sup_thetabar;
        cb.c4_from_surrogate = false;
    } else if (c4opt.allow_surrogate) {
        // Coercivity surrogate: smallest r with
        //   -Ktilde (1+M)^nu (1+r) - 2^p M^p r + (min{eta1,eta2}/2) r^2 >= M#,
        // M# = v(theta0) + delta log N. Any upper bound on the compact-set
        // radius keeps the inequality direction, so the over-estimate is safe.
        const double kv = cb.ktilde_grad * pow_nu;
        const double bb = kv + std::pow(2.0, cb.p) * std::pow(m, cb.p);
        const double c0 = std::min(cb.eta1, cb.eta2) / 2.0;
        const double msharp =
            v_delta_full(pb, theta0) +
            cb.delta * std::log(static_cast<double>(pb.n_points()));
        const double disc =
            std::max(bb * bb + 4.0 * c0 * (kv + std::max(msharp, 0.0)), 0.0);
        cb.sup_thetabar = std::max((bb + std::sqrt(disc)) / (2.0 * c0), 0.0);
        cb.c4_from_surrogate = true;
    } else {
        throw unavailable_constant_error(
            "C4", "C4 requires a user bound on the compact-set radius "
                  "(sup over the dual minimising set); pass one or allow the "
                  "coercivity surrogate");
    }
    cb.c4 = cb.ctilde4 +
            (cb.j_u * std::pow(1.0 + 2.0 * m, cb.chi) + cb.p * pow_4m) *
                (1.0 + cb.sup_thetabar);
    return cb;
}

/// Flat name=value audit report, deterministic field order.
inline std::string format_constants_report(const ConstantsBundle& cb) {
    std::ostringstream os;
    os.precision(17);
    auto put = [&os](const char* name, double v) { os << name << "=" << v << "\n"; };
    os << "# constants report\n";
    put("eta1", cb.eta1);
    put("eta2", cb.eta2);
    put("p", cb.p);
    put("delta", cb.delta);
    put("beta", cb.beta);
    put("d", cb.dim_d);
    put("m", cb.dim_m);
    put("N_grid_points", static_cast<double>(cb.n_grid_points));
    put("a_iota", cb.a_iota);
    put("b_iota", cb.b_iota);
    put("L_iota", cb.L_iota);
    put("M_iota", cb.M_iota);
    put("Ltilde_iota", cb.Ltilde_iota);
    put("K_nabla", cb.k_grad);
    put("Ktilde_nabla", cb.ktilde_grad);
    put("L_nabla", cb.l_grad);
    put("nu", cb.nu);
    put("J_U", cb.j_u);
    put("chi", cb.chi);
    put("M_Xi", cb.m_xi);
    put("moment_E", cb.moment_e);
    put("moment_2p", cb.moment_2p);
    put("theta0_sq_moment", cb.theta0_sq_moment);
    put("a", cb.a);
    put("b", cb.b);
    put("L_delta", cb.l_delta);
    put("frakC1", cb.frak_c1);
    put("frakC2", cb.frak_c2);
    put("frakC3", cb.frak_c3);
    put("Ltilde_delta", cb.ltilde_delta);
    put("lambda_max_delta", cb.lambda_max_delta);
    put("frakM1", cb.frak_m1);
    put("frakc1_delta_beta", cb.frak_c1_delta_beta);
    put("frakC4", cb.frak_c4);
    put("Ctilde4", cb.ctilde4);
    put("C5_delta_beta", cb.c5_delta_beta);
    put("C6", cb.c6);
    put("C4", cb.c4);
    put("sup_thetabar", cb.sup_thetabar);
    os << "C4_radius_source=" << (cb.c4_from_surrogate ? "surrogate" : "user") << "\n";
    os << "# c_delta_beta, C1, C2, C3: external inputs, not computed\n";
    return os.str();
}

/// External-reference constants a caller must supply for parameter selection.
struct ExternalConstants {
    std::optional<double> c_delta_beta;
    std::optional<double> c1;
    std::optional<double> c2;
    std::optional<double> c6_override;
};

struct ParamChoice {
    double value;
    std::string binding;  // which inequality this choice saturates
};

struct AlgorithmParams {
    ParamChoice ell, jj, delta, beta, lambda, n;
};

/// The parameter-selection procedure: picks (ell, jj, delta, beta, lambda, n)
/// in order so that each strict inequality of the accuracy analysis holds.
/// Integers are the smallest admissible; open-interval reals sit at half the
/// upper bound (or 1.01x a lower bound).
inline AlgorithmParams algorithm1_params(double epsilon, const ConstantsBundle& cb,
                                         const GridSpec& grid,
                                         const ExternalConstants& ext) {
    if (!(epsilon > 0.0))
        throw std::invalid_argument("algorithm1_params: epsilon must be > 0");
    AlgorithmParams out;
    const double m = static_cast<double>(cb.dim_m);
    const double d1 = static_cast<double>(cb.dim_d + 1);

    // smallest ell with the data box inside [-2^(ell-1), 2^(ell-1))^m
    int ell = 1;
    for (;; ++ell) {
        const double h = std::ldexp(1.0, ell - 1);
        bool ok = true;
        for (int k = 0; k < grid.dim; ++k)
            ok = ok && grid.lo[k] >= -h && grid.hi[k] < h;
        if (ok || ell >= 62) break;
    }
    out.ell = {static_cast<double>(ell), "smallest ell with the support box inside "
                                         "[-2^(ell-1), 2^(ell-1))^m"};

    const double jj_bound =
        std::log2(5.0 * std::sqrt(m) * (cb.c4 + cb.frak_c4 * (1.0 / cb.a + 2.0 * cb.b)) /
                  epsilon);
    const long long jj = std::max(1LL, static_cast<long long>(std::floor(jj_bound)) + 1);
    out.jj = {static_cast<double>(jj),
              "smallest integer jj > log2(5 sqrt(m) (C4 + frakC4 (1/a + 2 b)) / eps)"};

    const double d_candidates[3] = {
        epsilon / (10.0 * m * (ell + static_cast<double>(jj)) * M_LN2),
        cb.frak_c2 / std::sqrt(cb.a * cb.frak_c1),
        cb.frak_c2 * std::sqrt(epsilon * std::ldexp(1.0, static_cast<int>(std::min(
                                             jj, 1000LL))) /
                               (10.0 * cb.frak_c1 * cb.frak_c4 *
                                (2.0 * cb.frak_m1 + 1.0) * std::sqrt(m)))};
    int dwhich = 0;
    for (int i = 1; i < 3; ++i)
        if (d_candidates[i] < d_candidates[dwhich]) dwhich = i;
    static const char* kDeltaBindings[3] = {
        "delta < eps / (10 m (ell+jj) log 2)",
        "delta < frakC2 / sqrt(a frakC1)",
        "delta < frakC2 sqrt(eps 2^jj / (10 frakC1 frakC4 (2 frakM1 + 1) sqrt(m)))"};
    const double delta = 0.5 * d_candidates[dwhich];
    out.delta = {delta, std::string("half of the binding bound: ") + kDeltaBindings[dwhich]};

    const double lt_delta = detail::recompute_ltilde_delta(cb, delta);
    const double b_candidates[3] = {
        100.0 * d1 / (epsilon * epsilon),
        10.0 * d1 * (1.0 + std::log((lt_delta - 1.0) * cb.moment_2p / cb.a)) / epsilon,
        10.0 * std::sqrt(m) * cb.frak_c4 * d1 / (epsilon * std::ldexp(1.0, static_cast<int>(std::min(jj, 1000LL))))};
    int bwhich = 0;
    for (int i = 1; i < 3; ++i)
        if (b_candidates[i] > b_candidates[bwhich]) bwhich = i;
    static const char* kBetaBindings[3] = {
        "beta > 100 (d+1) / eps^2",
        "beta > 10 (d+1) (1 + log((Ltilde_delta - 1) E[(1+|X0|)^{2p}] / a)) / eps",
        "beta > 10 sqrt(m) frakC4 (d+1) / (eps 2^jj)"};
    const double beta = 1.01 * b_candidates[bwhich];
    out.beta = {beta, std::string("1.01x the binding bound: ") + kBetaBindings[bwhich]};

    if (!ext.c2)
        throw unavailable_constant_error(
            "C2", "step-size selection (lambda) is blocked: external constant C2 "
                  "was not supplied");
    const double lmax = detail::recompute_lambda_max(cb, delta);
    const double l_cap = std::pow(epsilon, 4.0) / (625.0 * std::pow(*ext.c2, 4.0));
    const bool lam_from_lmax = lmax <= l_cap;
    const double lambda = 0.5 * std::min(lmax, l_cap);
    out.lambda = {lambda, lam_from_lmax
                              ? "half of lambda_max_delta"
                              : "half of eps^4 / (625 C2^4)"};

    if (!ext.c_delta_beta)
        throw unavailable_constant_error(
            "c_delta_beta", "iteration-count selection (n) is blocked: external "
                            "constant c_delta_beta was not supplied");
    if (!ext.c1)
        throw unavailable_constant_error(
            "C1", "iteration-count selection (n) is blocked: external constant C1 "
                  "was not supplied");
    const double c6 = ext.c6_override.value_or(cb.c6);
    const double n1 = 4.0 / (*ext.c_delta_beta * lambda) * std::log(10.0 * *ext.c1 / epsilon);
    const double n2 = 2.0 / (cb.a * lambda) * std::log(10.0 * c6 / epsilon) - 1.0;
    const double n_bound = std::max(n1, n2);
    double n = n_bound < 1.0 ? 1.0 : std::floor(n_bound) + 1.0;
    // beyond 2^53 every double is an integer; step to the next one above
    if (!(n > n_bound))
        n = std::nextafter(n_bound, std::numeric_limits<double>::infinity());
    out.n = {n, n1 >= n2 ? "smallest integer n > (4 / (c lambda)) log(10 C1 / eps)"
                         : "smallest integer n > (2 / (a lambda)) log(10 C6 / eps) - 1"};
    return out;
}

inline std::string format_params_report(double epsilon, const AlgorithmParams& ap) {
    std::ostringstream os;
    os.precision(17);
    os << "# parameter selection for eps=" << epsilon << "\n";
    auto put = [&os](const char* name, const ParamChoice& c) {
        os << name << "=" << c.value << "  # " << c.binding << "\n";
    };
    put("ell", ap.ell);
    put("jj", ap.jj);
    put("delta", ap.delta);
    put("beta", ap.beta);
    put("lambda", ap.lambda);
    put("n", ap.n);
    return os.str();
}

}  // namespace rsgld
