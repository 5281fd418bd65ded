#pragma once

#include <limits>

#include "rsgld/model.hpp"
#include "rsgld/penalty.hpp"

namespace rsgld {

/// Extended decision variable (theta, alpha) on which the robust recursion runs.
struct ThetaBar {
    Vec theta;
    double alpha = 0.0;

    std::size_t dim() const { return theta.size() + 1; }

    Vec flat() const {
        Vec out(theta);
        out.push_back(alpha);
        return out;
    }
    static ThetaBar from_flat(std::span<const double> v) {
        return {Vec(v.begin(), v.end() - 1), v.back()};
    }
};

/// Scratch buffers reused across evaluations; one per running thread.
struct Workspace {
    Vec u, cost, score, weight, grad;
    std::vector<Vec> axis_table;
};

/// Penalised DRO instance on a dyadic grid: regularisation weights, transport
/// cost exponent, smoothing tolerance, the enumerated grid, the discretised
/// reference measure and the utility model.
class DROProblem {
public:
    DROProblem(double eta1, double eta2, double p, double delta, GridSpec grid,
               DiscreteMeasure mu, std::shared_ptr<const UtilityModel> utility,
               std::size_t point_cap = kDefaultPointCap)
        : eta1_(eta1), eta2_(eta2), p_(p), delta_(delta), grid_(std::move(grid)),
          mu_(std::move(mu)), utility_(std::move(utility)) {
        if (eta1_ <= 0 || eta2_ <= 0 || delta_ <= 0)
            throw std::invalid_argument("DROProblem: eta1, eta2, delta must be positive");
        if (p_ < 1.0) throw std::invalid_argument("DROProblem: p must be >= 1");
        if (!utility_) throw std::invalid_argument("DROProblem: missing utility model");
        if (utility_->data_dim() != grid_.dim)
            throw std::invalid_argument("DROProblem: utility data_dim != grid dim");
        if (mu_.size() == 0)
            throw std::invalid_argument("DROProblem: reference measure is empty");
        mu_.validate(grid_);
        axes_ = detail::build_axis_grid(grid_, point_cap);
        xi_ = enumerate_points(grid_, point_cap);
        growth_ = utility_->growth();
        max_u0_ = utility_->max_value_at_zero(grid_.lo, grid_.hi);
    }

    double eta1() const { return eta1_; }
    double eta2() const { return eta2_; }
    double p() const { return p_; }
    double delta() const { return delta_; }
    const GridSpec& grid() const { return grid_; }
    const PointMatrix& xi() const { return xi_; }
    const DiscreteMeasure& mu() const { return mu_; }
    const UtilityModel& utility() const { return *utility_; }
    std::size_t n_points() const { return xi_.count; }
    int dim_d() const { return utility_->param_dim(); }
    int dim_m() const { return grid_.dim; }
    double m_xi() const { return grid_.box_radius(); }
    const GrowthConstants& growth() const { return growth_; }
    double max_u0() const { return max_u0_; }
    double ktilde() const { return std::max(growth_.k_grad, max_u0_); }

    double regulariser(const ThetaBar& tb) const {
        const double io = penalty::iota(tb.alpha);
        return 0.5 * eta1_ * norm2(tb.theta) + 0.5 * eta2_ * io * io;
    }

    /// |x - xi_j|^p for every grid point, written in enumeration order.
    void costs(std::span<const double> x, Vec& out, Workspace& ws) const {
        const int m = grid_.dim;
        out.resize(xi_.count);
        ws.axis_table.resize(m);
        for (int k = 0; k < m; ++k) {
            auto& t = ws.axis_table[k];
            t.resize(axes_.count[k]);
            for (std::size_t g = 0; g < axes_.count[k]; ++g) {
                const double d = x[k] - axes_.values[k][g];
                t[g] = d * d;
            }
        }
        const auto& last = ws.axis_table[m - 1];
        const std::size_t inner = axes_.count[m - 1];
        std::vector<std::size_t> idx(m, 0);
        Vec psum(m, 0.0);
        std::size_t j = 0;
        while (j < xi_.count) {
            double base = 0.0;
            for (int k = 0; k + 1 < m; ++k) {
                psum[k] = (k ? psum[k - 1] : 0.0) + ws.axis_table[k][idx[k]];
                base = psum[k];
            }
            for (std::size_t g = 0; g < inner; ++g) out[j + g] = base + last[g];
            j += inner;
            for (int k = m - 2; k >= 0; --k) {
                if (++idx[k] < axes_.count[k]) break;
                idx[k] = 0;
            }
        }
        if (p_ != 2.0) {
            const double half_p = p_ / 2.0;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(out[i], half_p);
        }
    }

    const detail::AxisGrid& axes() const { return axes_; }

private:
    double eta1_, eta2_, p_, delta_;
    GridSpec grid_;
    DiscreteMeasure mu_;
    std::shared_ptr<const UtilityModel> utility_;
    detail::AxisGrid axes_;
    PointMatrix xi_;
    GrowthConstants growth_;
    double max_u0_;
};

namespace detail {

/// Fills ws.u, ws.cost, ws.score for the given (thetabar, x); returns max score.
inline double eval_scores(const DROProblem& pb, const ThetaBar& tb,
                          std::span<const double> x, Workspace& ws) {
    const std::size_t n = pb.n_points();
    ws.u.resize(n);
    ws.score.resize(n);
    pb.utility().value_batch(tb.theta, pb.xi(), ws.u);
    pb.costs(x, ws.cost, ws);
    const double io = penalty::iota(tb.alpha);
    double smax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        const double s = ws.u[j] - io * ws.cost[j];
        ws.score[j] = s;
        if (s > smax) smax = s;
    }
    return smax;
}

}  // namespace detail

/// s_j = U(theta, xi_j) - iota(alpha) |x - xi_j|^p (the log of F_j times delta).
inline double score(const DROProblem& pb, const ThetaBar& tb, std::span<const double> x,
                    std::size_t j) {
    if (j >= pb.n_points()) throw std::invalid_argument("score: grid index out of range");
    const auto xi_j = pb.xi().row(j);
    double d2 = 0.0;
    for (int k = 0; k < pb.dim_m(); ++k) {
        const double d = x[k] - xi_j[k];
        d2 += d * d;
    }
    const double c = (pb.p() == 2.0) ? d2 : std::pow(d2, pb.p() / 2.0);
    return pb.utility().value(tb.theta, xi_j) - penalty::iota(tb.alpha) * c;
}

/// Softmax weights w_j = F_j / sum_k F_k, evaluated with a max shift.
inline Vec softmax_weights(const DROProblem& pb, const ThetaBar& tb,
                           std::span<const double> x) {
    Workspace ws;
    const double smax = detail::eval_scores(pb, tb, x, ws);
    Vec w(pb.n_points());
    double total = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::exp((ws.score[j] - smax) / pb.delta());
        total += w[j];
    }
    for (double& v : w) v /= total;
    return w;
}

/// Smoothed maximum V: max_j s_j + delta log((1/N) sum_j exp((s_j - max)/delta)).
inline double smoothed_value(const DROProblem& pb, const ThetaBar& tb,
                             std::span<const double> x, Workspace& ws) {
    const double smax = detail::eval_scores(pb, tb, x, ws);
    double total = 0.0;
    for (std::size_t j = 0; j < pb.n_points(); ++j)
        total += std::exp((ws.score[j] - smax) / pb.delta());
    return smax + pb.delta() * (std::log(total) -
                                std::log(static_cast<double>(pb.n_points())));
}

inline double smoothed_value(const DROProblem& pb, const ThetaBar& tb,
                             std::span<const double> x) {
    Workspace ws;
    return smoothed_value(pb, tb, x, ws);
}

/// Hard maximum max_j s_j (the unsmoothed inner value).
inline double max_score(const DROProblem& pb, const ThetaBar& tb,
                        std::span<const double> x, Workspace& ws) {
    return detail::eval_scores(pb, tb, x, ws);
}

inline double max_score(const DROProblem& pb, const ThetaBar& tb,
                        std::span<const double> x) {
    Workspace ws;
    return detail::eval_scores(pb, tb, x, ws);
}

/// V plus the two regularisers (the smoothed integrand).
inline double tilde_value(const DROProblem& pb, const ThetaBar& tb,
                          std::span<const double> x, Workspace& ws) {
    return smoothed_value(pb, tb, x, ws) + pb.regulariser(tb);
}

inline double tilde_value(const DROProblem& pb, const ThetaBar& tb,
                          std::span<const double> x) {
    Workspace ws;
    return tilde_value(pb, tb, x, ws);
}

/// The designed stochastic gradient H(thetabar, x) = grad of tilde_value:
///   theta block: eta1 theta + sum_j w_j grad U(theta, xi_j)
///   alpha block: eta2 iota iota' - iota' sum_j w_j |x - xi_j|^p
inline void stochastic_gradient(const DROProblem& pb, const ThetaBar& tb,
                                std::span<const double> x, std::span<double> out,
                                Workspace& ws) {
    const std::size_t n = pb.n_points();
    const int d = pb.dim_d();
    const double smax = detail::eval_scores(pb, tb, x, ws);
    ws.weight.resize(n);
    double sum_e = 0.0, sum_ec = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp((ws.score[j] - smax) / pb.delta());
        ws.weight[j] = e;
        sum_e += e;
        sum_ec += e * ws.cost[j];
    }
    pb.utility().weighted_gradient_sum(tb.theta, pb.xi(), ws.weight,
                                       out.first(static_cast<std::size_t>(d)));
    const double inv = 1.0 / sum_e;
    for (int k = 0; k < d; ++k) out[k] = pb.eta1() * tb.theta[k] + out[k] * inv;
    const double ipr = penalty::iota_prime(tb.alpha);
    out[d] = pb.eta2() * penalty::iota(tb.alpha) * ipr - ipr * sum_ec * inv;
}

inline Vec stochastic_gradient(const DROProblem& pb, const ThetaBar& tb,
                               std::span<const double> x) {
    Workspace ws;
    Vec out(tb.dim());
    stochastic_gradient(pb, tb, x, out, ws);
    return out;
}

namespace detail {

/// Tensorised evaluation of sum_j exp(s_j/delta) for every measure atom at
/// once, exact for p = 2 where the squared distance is additive across axes:
/// with A_j = exp((U_j - maxU)/delta) and per-axis factors
/// E_k(g) = exp(-iota (x_k - v_kg)^2 / delta), the sum is the contraction
/// sum_j A_j prod_k E_k(j_k). Falls back per atom when everything underflows.
inline double v_delta_tensor(const DROProblem& pb, const ThetaBar& tb, Workspace& ws) {
    const std::size_t n = pb.n_points();
    const int m = pb.dim_m();
    const auto& axes = pb.axes();
    ws.u.resize(n);
    ws.weight.resize(n);
    pb.utility().value_batch(tb.theta, pb.xi(), ws.u);
    double umax = ws.u[0];
    for (std::size_t j = 1; j < n; ++j) umax = std::max(umax, ws.u[j]);
    for (std::size_t j = 0; j < n; ++j)
        ws.weight[j] = std::exp((ws.u[j] - umax) / pb.delta());

    const double io = penalty::iota(tb.alpha);
    const double reg = pb.regulariser(tb);
    const double log_n = std::log(static_cast<double>(n));
    ws.axis_table.resize(m);

    double value = 0.0;
    for (std::size_t a = 0; a < pb.mu().size(); ++a) {
        const Vec& x = pb.mu().points[a];
        for (int k = 0; k < m; ++k) {
            auto& t = ws.axis_table[k];
            t.resize(axes.count[k]);
            for (std::size_t g = 0; g < axes.count[k]; ++g) {
                const double d = x[k] - axes.values[k][g];
                t[g] = std::exp(-io * d * d / pb.delta());
            }
        }
        const auto& last = ws.axis_table[m - 1];
        const std::size_t inner = axes.count[m - 1];
        std::vector<std::size_t> idx(m, 0);
        double total = 0.0;
        std::size_t j = 0;
        while (j < n) {
            double prod = 1.0;
            for (int k = 0; k + 1 < m; ++k) prod *= ws.axis_table[k][idx[k]];
            double block = 0.0;
            for (std::size_t g = 0; g < inner; ++g)
                block += ws.weight[j + g] * last[g];
            total += prod * block;
            j += inner;
            for (int k = m - 2; k >= 0; --k) {
                if (++idx[k] < axes.count[k]) break;
                idx[k] = 0;
            }
        }
        double v;
        if (total < 1e-250) {
            Workspace safe;
            v = tilde_value(pb, tb, x, safe);
        } else {
            v = umax + pb.delta() * (std::log(total) - log_n) + reg;
        }
        value += pb.mu().masses[a] * v;
    }
    return value;
}

}  // namespace detail

/// v = integral of tilde_value against the discretised reference measure.
inline double v_delta_full(const DROProblem& pb, const ThetaBar& tb, Workspace& ws) {
    if (pb.p() == 2.0) return detail::v_delta_tensor(pb, tb, ws);
    double value = 0.0;
    for (std::size_t a = 0; a < pb.mu().size(); ++a)
        value += pb.mu().masses[a] * tilde_value(pb, tb, pb.mu().points[a], ws);
    return value;
}

inline double v_delta_full(const DROProblem& pb, const ThetaBar& tb) {
    Workspace ws;
    return v_delta_full(pb, tb, ws);
}

/// Same integral with the hard max over grid points (no smoothing).
inline double v_nonsmoothed(const DROProblem& pb, const ThetaBar& tb, Workspace& ws) {
    double value = 0.0;
    for (std::size_t a = 0; a < pb.mu().size(); ++a) {
        const double smax = detail::eval_scores(pb, tb, pb.mu().points[a], ws);
        value += pb.mu().masses[a] * smax;
    }
    return value + pb.regulariser(tb);
}

inline double v_nonsmoothed(const DROProblem& pb, const ThetaBar& tb) {
    Workspace ws;
    return v_nonsmoothed(pb, tb, ws);
}

/// Upper endpoint of the dual search interval for u_discrete:
///   (2/sqrt(eta2)) (1 + sup|U| + Ktilde (1+M)^nu (1+|theta|)) + 2^(p+2) M^p / eta2,
/// with sup_{x in Xi} |U(theta, x)| bounded by the same growth surrogate.
inline double kappa_theta(const DROProblem& pb, std::span<const double> theta) {
    const double m = pb.m_xi();
    const double surrogate =
        pb.ktilde() * std::pow(1.0 + m, pb.growth().nu) * (1.0 + norm(theta));
    return 2.0 / std::sqrt(pb.eta2()) * (1.0 + 2.0 * surrogate) +
           std::pow(2.0, pb.p() + 2.0) * std::pow(m, pb.p()) / pb.eta2();
}

/// Discretised primal value via the one-dimensional dual: minimises
///   g(a) = integral of max_j (U_j - a |x - xi_j|^p) dmu + (eta1/2)|theta|^2
///          + (eta2/2) a^2
/// over a in [0, kappa_theta] by golden-section search (g is convex).
inline double u_discrete(const DROProblem& pb, std::span<const double> theta,
                         Workspace& ws) {
    const std::size_t n = pb.n_points();
    const std::size_t atoms = pb.mu().size();
    ws.u.resize(n);
    pb.utility().value_batch(theta, pb.xi(), ws.u);

    // Cache per-atom cost rows when affordable; recompute otherwise.
    const bool cache = atoms * n <= 4'000'000;
    std::vector<Vec> cost_rows;
    if (cache) {
        cost_rows.resize(atoms);
        for (std::size_t a = 0; a < atoms; ++a)
            pb.costs(pb.mu().points[a], cost_rows[a], ws);
    }
    const double reg_theta = 0.5 * pb.eta1() * norm2(theta);
    Vec scratch;
    auto g = [&](double alpha_dual) {
        double total = 0.0;
        for (std::size_t a = 0; a < atoms; ++a) {
            const Vec* cost = cache ? &cost_rows[a] : &scratch;
            if (!cache) pb.costs(pb.mu().points[a], scratch, ws);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j)
                best = std::max(best, ws.u[j] - alpha_dual * (*cost)[j]);
            total += pb.mu().masses[a] * best;
        }
        return total + reg_theta + 0.5 * pb.eta2() * alpha_dual * alpha_dual;
    };
    const double astar = golden_min(g, 0.0, kappa_theta(pb, theta), 1e-8);
    return g(astar);
}

inline double u_discrete(const DROProblem& pb, std::span<const double> theta) {
    Workspace ws;
    return u_discrete(pb, theta, ws);
}

}  // namespace rsgld
