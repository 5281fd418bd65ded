#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>

#include "rsgld/common.hpp"

namespace rsgld {

/// Flattened row-major list of m-dimensional points.
struct PointMatrix {
    Vec data;
    std::size_t count = 0;
    int dim = 0;

    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }
};

/// Dyadic grid specification: mesh 2^-jj on [-2^(ell-1), 2^(ell-1))^m,
/// restricted to the axis-aligned box [lo, hi] per axis.
struct GridSpec {
    int dim;       // m
    int ell;       // half-extent exponent
    int mesh_exp;  // jj
    Vec lo, hi;    // box describing the data support

    GridSpec(int m, int ell_, int jj, Vec lo_, Vec hi_)
        : dim(m), ell(ell_), mesh_exp(jj), lo(std::move(lo_)), hi(std::move(hi_)) {
        if (dim < 1) throw std::invalid_argument("GridSpec: dim must be >= 1");
        if (ell < 1) throw std::invalid_argument("GridSpec: ell must be >= 1");
        if (mesh_exp < 1 || mesh_exp > 52)
            throw std::invalid_argument("GridSpec: mesh exponent must be in [1, 52]");
        if (lo.size() != static_cast<std::size_t>(dim) || hi.size() != lo.size())
            throw std::invalid_argument("GridSpec: box arrays must have length dim");
        const double h = half_extent();
        for (int k = 0; k < dim; ++k) {
            if (!std::isfinite(lo[k]) || !std::isfinite(hi[k]))
                throw std::invalid_argument("GridSpec: box bounds must be finite");
            if (lo[k] > hi[k])
                throw std::invalid_argument("GridSpec: lo > hi on axis " + std::to_string(k));
            if (lo[k] < -h || hi[k] >= h)
                throw std::invalid_argument(
                    "GridSpec: box must lie inside [-2^(ell-1), 2^(ell-1)) on axis " +
                    std::to_string(k));
        }
    }

    double mesh() const { return std::ldexp(1.0, -mesh_exp); }
    double half_extent() const { return std::ldexp(1.0, ell - 1); }

    /// Largest Euclidean norm over the box corners.
    double box_radius() const {
        double s = 0.0;
        for (int k = 0; k < dim; ++k) s += std::max(lo[k] * lo[k], hi[k] * hi[k]);
        return std::sqrt(s);
    }

    bool contains(std::span<const double> x) const {
        for (int k = 0; k < dim; ++k)
            if (x[k] < lo[k] || x[k] > hi[k]) return false;
        return true;
    }

    /// Membership in the full dyadic box (half-open on the right).
    bool inside_grid_box(std::span<const double> x) const {
        const double h = half_extent();
        for (int k = 0; k < dim; ++k)
            if (!(x[k] >= -h && x[k] < h)) return false;
        return true;
    }
};

/// Coordinatewise floor onto the mesh-2^-jj lattice.
inline Vec snap(std::span<const double> x, int mesh_exp) {
    if (!all_finite(x)) throw std::invalid_argument("snap: non-finite input coordinate");
    const double scale = std::ldexp(1.0, mesh_exp);
    Vec out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        out[k] = std::floor(x[k] * scale) / scale;
    return out;
}

/// Probability measure supported on grid points.
struct DiscreteMeasure {
    std::vector<Vec> points;
    Vec masses;

    std::size_t size() const { return points.size(); }

    void validate(const GridSpec& spec) const {
        if (points.size() != masses.size())
            throw std::invalid_argument("DiscreteMeasure: points/masses size mismatch");
        const double scale = std::ldexp(1.0, spec.mesh_exp);
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (masses[i] < 0.0)
                throw std::invalid_argument("DiscreteMeasure: negative mass");
            total += masses[i];
            if (points[i].size() != static_cast<std::size_t>(spec.dim))
                throw std::invalid_argument("DiscreteMeasure: point dimension mismatch");
            if (!spec.inside_grid_box(points[i]))
                throw std::invalid_argument("DiscreteMeasure: point outside grid box");
            for (double c : points[i])
                if (c * scale != std::floor(c * scale))
                    throw std::invalid_argument("DiscreteMeasure: point not on grid");
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("DiscreteMeasure: masses must sum to 1");
    }
};

namespace detail {

/// Per-axis grid values inside the box, plus lexicographic layout info.
struct AxisGrid {
    std::vector<Vec> values;         // ascending per axis
    std::vector<std::size_t> count;  // values[k].size()
    std::size_t total = 1;
};

inline AxisGrid build_axis_grid(const GridSpec& spec, std::size_t point_cap) {
    AxisGrid g;
    g.values.resize(spec.dim);
    g.count.resize(spec.dim);
    const double scale = std::ldexp(1.0, spec.mesh_exp);
    const double h = spec.half_extent();
    const long long kcap = static_cast<long long>(h * scale);
    for (int k = 0; k < spec.dim; ++k) {
        long long kmin = static_cast<long long>(std::ceil(spec.lo[k] * scale));
        long long kmax = static_cast<long long>(std::floor(spec.hi[k] * scale));
        kmin = std::max(kmin, -kcap);
        kmax = std::min(kmax, kcap - 1);
        if (kmax < kmin)
            throw std::invalid_argument("grid: no grid point inside box on axis " +
                                        std::to_string(k));
        g.count[k] = static_cast<std::size_t>(kmax - kmin + 1);
        if (g.count[k] > point_cap / g.total)
            throw resource_error("grid enumeration would exceed the point cap of " +
                                 std::to_string(point_cap) + " points");
        g.total *= g.count[k];
        g.values[k].resize(g.count[k]);
        for (long long i = kmin; i <= kmax; ++i)
            g.values[k][static_cast<std::size_t>(i - kmin)] =
                static_cast<double>(i) / scale;
    }
    return g;
}

}  // namespace detail

inline constexpr std::size_t kDefaultPointCap = 100'000'000;

/// All grid points inside the box, lexicographically ascending.
inline PointMatrix enumerate_points(const GridSpec& spec,
                                    std::size_t point_cap = kDefaultPointCap) {
    const auto axes = detail::build_axis_grid(spec, point_cap);
    PointMatrix pts;
    pts.dim = spec.dim;
    pts.count = axes.total;
    pts.data.resize(axes.total * static_cast<std::size_t>(spec.dim));
    std::vector<std::size_t> idx(spec.dim, 0);
    for (std::size_t j = 0; j < axes.total; ++j) {
        double* row = pts.data.data() + j * static_cast<std::size_t>(spec.dim);
        for (int k = 0; k < spec.dim; ++k) row[k] = axes.values[k][idx[k]];
        for (int k = spec.dim - 1; k >= 0; --k) {
            if (++idx[k] < axes.count[k]) break;
            idx[k] = 0;
        }
    }
    return pts;
}

/// Aggregate weighted samples into the half-open mesh cells containing them.
/// Output support is sorted lexicographically; masses are renormalised to 1.
inline DiscreteMeasure discretise_measure(const std::vector<Vec>& samples,
                                          std::span<const double> weights,
                                          const GridSpec& spec) {
    if (samples.empty())
        throw std::invalid_argument("discretise_measure: empty sample set");
    if (!weights.empty() && weights.size() != samples.size())
        throw std::invalid_argument("discretise_measure: weights size mismatch");
    const double scale = std::ldexp(1.0, spec.mesh_exp);
    std::map<std::vector<long long>, double> cells;
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vec& x = samples[i];
        if (x.size() != static_cast<std::size_t>(spec.dim))
            throw std::invalid_argument("discretise_measure: sample dimension mismatch");
        if (!all_finite(x) || !spec.inside_grid_box(x)) {
            std::ostringstream os;
            os << "discretise_measure: sample " << i << " = (";
            for (std::size_t k = 0; k < x.size(); ++k)
                os << (k ? ", " : "") << x[k];
            os << ") lies outside the grid box";
            throw std::domain_error(os.str());
        }
        std::vector<long long> key(spec.dim);
        for (int k = 0; k < spec.dim; ++k)
            key[k] = static_cast<long long>(std::floor(x[k] * scale));
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0)
            throw std::invalid_argument("discretise_measure: negative weight");
        cells[key] += w;
        total += w;
    }
    if (total <= 0.0)
        throw std::invalid_argument("discretise_measure: zero total mass");
    DiscreteMeasure out;
    out.points.reserve(cells.size());
    out.masses.reserve(cells.size());
    for (const auto& [key, mass] : cells) {
        Vec p(spec.dim);
        for (int k = 0; k < spec.dim; ++k)
            p[k] = static_cast<double>(key[k]) / scale;
        out.points.push_back(std::move(p));
        out.masses.push_back(mass / total);
    }
    return out;
}

inline DiscreteMeasure discretise_measure(const std::vector<Vec>& samples,
                                          const GridSpec& spec) {
    return discretise_measure(samples, {}, spec);
}

inline DiscreteMeasure discretise_measure(const DiscreteMeasure& mu,
                                          const GridSpec& spec) {
    return discretise_measure(mu.points, mu.masses, spec);
}

}  // namespace rsgld
