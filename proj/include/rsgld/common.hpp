#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsgld {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm2(a)); }

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Raised when an SGLD iterate leaves the finite range; carries the step index.
class divergence_error : public std::runtime_error {
public:
    divergence_error(std::size_t iteration, const std::string& what)
        : std::runtime_error(what), iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Raised when a requested enumeration would exceed a configured memory cap.
class resource_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a constant cannot be evaluated without extra user input.
class unavailable_constant_error : public std::runtime_error {
public:
    unavailable_constant_error(std::string constant, const std::string& what)
        : std::runtime_error(what), constant_(std::move(constant)) {}
    const std::string& constant() const noexcept { return constant_; }

private:
    std::string constant_;
};

/// Minimise a convex function on [lo, hi] by golden-section search.
/// Stops when the bracket is shorter than tol; returns the midpoint.
inline double golden_min(const std::function<double(double)>& f, double lo, double hi,
                         double tol) {
    static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return (a + b) / 2.0;
}

}  // namespace rsgld
