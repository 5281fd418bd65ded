#pragma once

#include <memory>

#include "rsgld/grid.hpp"

namespace rsgld {

/// Growth/regularity constants of a utility function:
///   |grad_theta U(theta,x)|                  <= k_grad (1+|x|)^nu
///   |grad_theta U(t1,x) - grad_theta U(t2,x)| <= l_grad (1+|x|)^nu |t1-t2|
///   |U(theta,x1) - U(theta,x2)| <= j_u (1+|theta|)(1+|x1|+|x2|)^chi |x1-x2|
struct GrowthConstants {
    double k_grad;
    double l_grad;
    int nu;
    double j_u;
    int chi;
};

/// A utility U(theta, x) with hand-coded gradient in theta.
///
/// Batch entry points exist so implementations can exploit structure across
/// the grid enumeration; the defaults just loop over rows.
class UtilityModel {
public:
    virtual ~UtilityModel() = default;

    virtual int param_dim() const = 0;  // d
    virtual int data_dim() const = 0;   // m

    virtual double value(std::span<const double> theta,
                         std::span<const double> x) const = 0;
    virtual void gradient(std::span<const double> theta, std::span<const double> x,
                          std::span<double> out) const = 0;

    virtual GrowthConstants growth() const = 0;

    /// max |U(0, x)| over the box [lo, hi]. Default: corners plus a coarse
    /// interior lattice; override when the maximum has a closed form.
    virtual double max_value_at_zero(std::span<const double> lo,
                                     std::span<const double> hi) const {
        const int m = data_dim();
        const Vec zero(static_cast<std::size_t>(param_dim()), 0.0);
        double best = 0.0;
        constexpr int kLatticePerAxis = 9;
        std::vector<int> idx(m, 0);
        Vec x(m);
        while (true) {
            for (int k = 0; k < m; ++k) {
                const double t = static_cast<double>(idx[k]) / (kLatticePerAxis - 1);
                x[k] = lo[k] + t * (hi[k] - lo[k]);
            }
            best = std::max(best, std::abs(value(zero, x)));
            int k = m - 1;
            for (; k >= 0; --k) {
                if (++idx[k] < kLatticePerAxis) break;
                idx[k] = 0;
            }
            if (k < 0) break;
        }
        return best;
    }

    virtual void value_batch(std::span<const double> theta, const PointMatrix& pts,
                             std::span<double> out) const {
        for (std::size_t j = 0; j < pts.count; ++j) out[j] = value(theta, pts.row(j));
    }

    /// Accumulates sum_j w_j grad_theta U(theta, xi_j) into out (overwritten).
    virtual void weighted_gradient_sum(std::span<const double> theta,
                                       const PointMatrix& pts,
                                       std::span<const double> w,
                                       std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        Vec g(static_cast<std::size_t>(param_dim()));
        for (std::size_t j = 0; j < pts.count; ++j) {
            gradient(theta, pts.row(j), g);
            for (std::size_t k = 0; k < g.size(); ++k) out[k] += w[j] * g[k];
        }
    }
};

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Single sigmoid neuron regression: U(theta, (z, y)) = (y - sigmoid(<w,z>+b0))^2
/// with theta = (w, b0) and the response y stored as the last data coordinate.
class RegressionNet final : public UtilityModel {
public:
    explicit RegressionNet(int data_dim) : m_(data_dim) {
        if (m_ < 2) throw std::invalid_argument("RegressionNet: data_dim must be >= 2");
    }

    int param_dim() const override { return m_; }
    int data_dim() const override { return m_; }

    double predict(std::span<const double> theta, std::span<const double> z) const {
        double t = theta[m_ - 1];
        for (int k = 0; k + 1 < m_; ++k) t += theta[k] * z[k];
        return sigmoid(t);
    }

    double value(std::span<const double> theta, std::span<const double> x) const override {
        const double r = x[m_ - 1] - predict(theta, x.first(m_ - 1));
        return r * r;
    }

    void gradient(std::span<const double> theta, std::span<const double> x,
                  std::span<double> out) const override {
        const double s = predict(theta, x.first(m_ - 1));
        const double c = -2.0 * (x[m_ - 1] - s) * s * (1.0 - s);
        for (int k = 0; k + 1 < m_; ++k) out[k] = c * x[k];
        out[m_ - 1] = c;
    }

    GrowthConstants growth() const override {
        return {2.0 * m_, 6.0 * m_, 3, 4.0, 1};
    }

    double max_value_at_zero(std::span<const double> lo,
                             std::span<const double> hi) const override {
        // U(0, (z,y)) = (y - 1/2)^2, maximised at a y endpoint.
        const double a = lo[m_ - 1] - 0.5, b = hi[m_ - 1] - 0.5;
        return std::max(a * a, b * b);
    }

    void value_batch(std::span<const double> theta, const PointMatrix& pts,
                     std::span<double> out) const override {
        // Points arrive lexicographically ordered, so the (m-1)-dim feature
        // prefix repeats in runs; reuse the sigmoid across each run.
        const double* prev = nullptr;
        double s = 0.0;
        for (std::size_t j = 0; j < pts.count; ++j) {
            const double* row = pts.data.data() + j * static_cast<std::size_t>(m_);
            if (prev == nullptr || !std::equal(row, row + m_ - 1, prev)) {
                s = predict(theta, {row, static_cast<std::size_t>(m_ - 1)});
                prev = row;
            }
            const double r = row[m_ - 1] - s;
            out[j] = r * r;
        }
    }

    void weighted_gradient_sum(std::span<const double> theta, const PointMatrix& pts,
                               std::span<const double> w,
                               std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        const double* prev = nullptr;
        double s = 0.0, slope = 0.0, acc = 0.0;
        auto flush = [&] {
            if (prev == nullptr || acc == 0.0) return;
            for (int k = 0; k + 1 < m_; ++k) out[k] += acc * prev[k];
            out[m_ - 1] += acc;
        };
        for (std::size_t j = 0; j < pts.count; ++j) {
            const double* row = pts.data.data() + j * static_cast<std::size_t>(m_);
            if (prev == nullptr || !std::equal(row, row + m_ - 1, prev)) {
                flush();
                s = predict(theta, {row, static_cast<std::size_t>(m_ - 1)});
                slope = -2.0 * s * (1.0 - s);
                prev = row;
                acc = 0.0;
            }
            acc += w[j] * slope * (row[m_ - 1] - s);
        }
        flush();
    }

private:
    int m_;
};

}  // namespace rsgld
