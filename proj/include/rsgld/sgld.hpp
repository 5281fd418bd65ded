#pragma once

#include <chrono>
#include <random>

#include "rsgld/objective.hpp"

namespace rsgld {

struct SGLDConfig {
    double lambda = 0.01;          // step size
    double beta = 1e9;             // inverse temperature
    std::size_t n_iter = 25000;
    std::uint64_t seed = 1;
    bool snap_samples = true;      // feed [x]_j instead of the raw draw to H
    std::size_t record_every = 10;

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("SGLDConfig: lambda must be > 0");
        if (!(beta > 0.0)) throw std::invalid_argument("SGLDConfig: beta must be > 0");
        if (n_iter < 1) throw std::invalid_argument("SGLDConfig: n_iter must be >= 1");
        if (record_every < 1)
            throw std::invalid_argument("SGLDConfig: record_every must be >= 1");
    }
};

/// Thinned iterate trace. Arrays are aligned; v_delta/test_mse hold NaN where
/// no hook was installed.
struct Trajectory {
    std::vector<std::size_t> iters;
    std::vector<Vec> states;  // flattened (theta, alpha) or theta
    Vec v_delta;
    Vec test_mse;
    Vec elapsed_s;

    std::size_t records() const { return iters.size(); }
    const Vec& final_state() const { return states.back(); }
};

struct TraceHooks {
    std::function<double(const ThetaBar&)> objective_value;     // recorded as v_delta
    std::function<double(std::span<const double>)> test_loss;   // recorded as test_mse
};

/// Draws one data point per step from the run's engine.
using DataSampler = std::function<std::span<const double>(std::mt19937_64&)>;

inline DataSampler empirical_sampler(const PointMatrix& rows) {
    if (rows.count == 0)
        throw std::invalid_argument("empirical_sampler: empty data set");
    return [&rows](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, rows.count - 1);
        return rows.row(pick(rng));
    };
}

/// One robust update: thetabar - lambda H(thetabar, x) + sqrt(2 lambda / beta) noise.
inline ThetaBar robust_step(const DROProblem& pb, const ThetaBar& tb,
                            std::span<const double> x, const SGLDConfig& cfg,
                            std::span<const double> noise) {
    Workspace ws;
    Vec h(tb.dim());
    stochastic_gradient(pb, tb, x, h, ws);
    const double scale = std::sqrt(2.0 * cfg.lambda / cfg.beta);
    ThetaBar out = tb;
    for (std::size_t k = 0; k < out.theta.size(); ++k)
        out.theta[k] += -cfg.lambda * h[k] + scale * noise[k];
    out.alpha += -cfg.lambda * h.back() + scale * noise.back();
    return out;
}

namespace detail {

inline constexpr double kDivergenceLimit = 1e12;

inline void check_state(std::span<const double> state, std::size_t iteration) {
    for (double v : state)
        if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit)
            throw divergence_error(iteration, "SGLD diverged at iteration " +
                                                  std::to_string(iteration));
}

}  // namespace detail

/// Runs the robust recursion for cfg.n_iter steps. Records the state at
/// iteration 0 and after every record_every-th step. One engine drives both
/// the data draw and the Gaussian noise in fixed order, so a seed pins the
/// whole trajectory.
inline Trajectory run_robust(const DROProblem& pb, const DataSampler& sample,
                             const SGLDConfig& cfg, const ThetaBar& theta0,
                             const TraceHooks* hooks = nullptr) {
    cfg.validate();
    if (static_cast<int>(theta0.theta.size()) != pb.dim_d())
        throw std::invalid_argument("run_robust: theta0 dimension mismatch");
    const std::size_t dim = theta0.dim();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = std::sqrt(2.0 * cfg.lambda / cfg.beta);

    Workspace ws;
    Vec h(dim), noise(dim), snapped;
    ThetaBar tb = theta0;
    Trajectory out;
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&](std::size_t iter) {
        out.iters.push_back(iter);
        out.states.push_back(tb.flat());
        out.v_delta.push_back(hooks && hooks->objective_value
                                  ? hooks->objective_value(tb)
                                  : std::numeric_limits<double>::quiet_NaN());
        out.test_mse.push_back(hooks && hooks->test_loss
                                   ? hooks->test_loss(tb.theta)
                                   : std::numeric_limits<double>::quiet_NaN());
        out.elapsed_s.push_back(std::chrono::duration<double>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count());
    };
    record(0);
    for (std::size_t n = 0; n < cfg.n_iter; ++n) {
        std::span<const double> x = sample(rng);
        if (cfg.snap_samples) {
            snapped = snap(x, pb.grid().mesh_exp);
            x = snapped;
        }
        stochastic_gradient(pb, tb, x, h, ws);
        for (std::size_t k = 0; k < dim; ++k) noise[k] = gauss(rng);
        for (std::size_t k = 0; k + 1 < dim; ++k)
            tb.theta[k] += -cfg.lambda * h[k] + scale * noise[k];
        tb.alpha += -cfg.lambda * h[dim - 1] + scale * noise[dim - 1];
        detail::check_state(tb.flat(), n + 1);
        if ((n + 1) % cfg.record_every == 0) record(n + 1);
    }
    if (out.iters.back() != cfg.n_iter) record(cfg.n_iter);
    return out;
}

/// Baseline without robustness: theta - lambda grad U(theta, x) + noise, in
/// dimension d.
inline Trajectory run_vanilla(const UtilityModel& model, const DataSampler& sample,
                              const SGLDConfig& cfg, const Vec& theta0,
                              const TraceHooks* hooks = nullptr) {
    cfg.validate();
    if (static_cast<int>(theta0.size()) != model.param_dim())
        throw std::invalid_argument("run_vanilla: theta0 dimension mismatch");
    const std::size_t dim = theta0.size();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = std::sqrt(2.0 * cfg.lambda / cfg.beta);

    Vec g(dim);
    Vec theta = theta0;
    Trajectory out;
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&](std::size_t iter) {
        out.iters.push_back(iter);
        out.states.push_back(theta);
        out.v_delta.push_back(std::numeric_limits<double>::quiet_NaN());
        out.test_mse.push_back(hooks && hooks->test_loss
                                   ? hooks->test_loss(theta)
                                   : std::numeric_limits<double>::quiet_NaN());
        out.elapsed_s.push_back(std::chrono::duration<double>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count());
    };
    record(0);
    for (std::size_t n = 0; n < cfg.n_iter; ++n) {
        const auto x = sample(rng);
        model.gradient(theta, x, g);
        for (std::size_t k = 0; k < dim; ++k)
            theta[k] += -cfg.lambda * g[k] + scale * gauss(rng);
        detail::check_state(theta, n + 1);
        if ((n + 1) % cfg.record_every == 0) record(n + 1);
    }
    if (out.iters.back() != cfg.n_iter) record(cfg.n_iter);
    return out;
}

}  // namespace rsgld
