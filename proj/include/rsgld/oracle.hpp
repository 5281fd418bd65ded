#pragma once

#include <numeric>

#include "rsgld/common.hpp"

namespace rsgld::oracle {

/// Desk-scale instance of the inner robustification problem: a fixed-theta
/// utility vector over a tiny support, a reference measure and the penalty
/// level. Ground truth for the duality tests.
struct TinyInstance {
    std::vector<Vec> support;  // <= 4 points, dimension <= 2
    Vec u_values;              // utility per support point
    Vec mu0;                   // reference masses
    double eta2;
    double p;

    void validate() const {
        if (support.empty() || support.size() > 4)
            throw std::invalid_argument("TinyInstance: support must have 1..4 points");
        if (support[0].size() > 2)
            throw std::invalid_argument("TinyInstance: dimension must be <= 2");
        if (u_values.size() != support.size() || mu0.size() != support.size())
            throw std::invalid_argument("TinyInstance: size mismatch");
        double total = 0.0;
        for (double w : mu0) {
            if (w < 0) throw std::invalid_argument("TinyInstance: negative mass");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("TinyInstance: masses must sum to 1");
        if (!(eta2 > 0) || !(p >= 1))
            throw std::invalid_argument("TinyInstance: need eta2 > 0 and p >= 1");
        for (std::size_t i = 0; i < support.size(); ++i)
            for (std::size_t j = i + 1; j < support.size(); ++j) {
                double d = 0;
                for (std::size_t k = 0; k < support[i].size(); ++k)
                    d += std::abs(support[i][k] - support[j][k]);
                if (d == 0.0)
                    throw std::invalid_argument("TinyInstance: duplicate support points");
            }
    }

    std::vector<Vec> cost_matrix() const {
        const std::size_t n = support.size();
        std::vector<Vec> c(n, Vec(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double d2 = 0;
                for (std::size_t k = 0; k < support[i].size(); ++k) {
                    const double d = support[i][k] - support[j][k];
                    d2 += d * d;
                }
                c[i][j] = std::pow(std::sqrt(d2), p);
            }
        return c;
    }

    double max_radius() const {
        double r = 0;
        for (const auto& x : support) r = std::max(r, norm(x));
        return r;
    }
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

/// Visits every spanning tree of the complete bipartite graph on r+c nodes,
/// encoded as a list of (row, col) edges.
template <typename Fn>
void for_each_spanning_tree(std::size_t r, std::size_t c, Fn&& fn) {
    const std::size_t n_edges = r * c;
    const std::size_t need = r + c - 1;
    std::vector<std::size_t> pick(need);
    std::vector<std::pair<int, int>> edges(need);
    auto rec = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
        if (depth == need) {
            UnionFind uf(static_cast<int>(r + c));
            bool tree = true;
            for (std::size_t e = 0; e < need && tree; ++e) {
                const int i = static_cast<int>(pick[e] / c);
                const int j = static_cast<int>(pick[e] % c);
                edges[e] = {i, j};
                tree = uf.unite(i, static_cast<int>(r) + j);
            }
            if (tree) fn(edges);
            return;
        }
        for (std::size_t e = start; e + (need - depth) <= n_edges; ++e) {
            pick[depth] = e;
            self(self, e + 1, depth + 1);
        }
    };
    rec(rec, 0, 0);
}

}  // namespace detail

/// Exact transportation cost oracle for a fixed cost matrix: enumerates the
/// dual basic solutions (tree potentials with phi_0 = 0) once, then evaluates
/// d_c(mu, nu) as the max of mu.phi + nu.psi over the feasible ones. Exact by
/// LP strong duality; the objective is constant along the (t, -t) lineality
/// whenever the two mass vectors have equal totals.
class TransportOracle {
public:
    explicit TransportOracle(const std::vector<Vec>& cost) {
        r_ = cost.size();
        c_ = cost.empty() ? 0 : cost[0].size();
        if (r_ == 0 || c_ == 0)
            throw std::invalid_argument("TransportOracle: empty cost matrix");
        detail::for_each_spanning_tree(r_, c_, [&](const auto& edges) {
            Vec phi(r_, std::numeric_limits<double>::quiet_NaN());
            Vec psi(c_, std::numeric_limits<double>::quiet_NaN());
            phi[0] = 0.0;
            bool progressed = true;
            std::size_t solved = 1;
            while (progressed && solved < r_ + c_) {
                progressed = false;
                for (const auto& [i, j] : edges) {
                    const bool pi = !std::isnan(phi[i]), pj = !std::isnan(psi[j]);
                    if (pi && !pj) {
                        psi[j] = cost[i][j] - phi[i];
                        ++solved;
                        progressed = true;
                    } else if (!pi && pj) {
                        phi[i] = cost[i][j] - psi[j];
                        ++solved;
                        progressed = true;
                    }
                }
            }
            for (std::size_t i = 0; i < r_; ++i)
                for (std::size_t j = 0; j < c_; ++j)
                    if (phi[i] + psi[j] > cost[i][j] + 1e-11) return;  // infeasible
            Vec v(phi);
            v.insert(v.end(), psi.begin(), psi.end());
            vertices_.push_back(std::move(v));
        });
    }

    double cost(std::span<const double> mu, std::span<const double> nu) const {
        if (mu.size() != r_ || nu.size() != c_)
            throw std::invalid_argument("TransportOracle: marginal size mismatch");
        double sm = 0, sn = 0;
        for (double v : mu) sm += v;
        for (double v : nu) sn += v;
        if (std::abs(sm - sn) > 1e-12)
            throw std::invalid_argument("TransportOracle: total mass mismatch");
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& v : vertices_) {
            double s = 0;
            for (std::size_t i = 0; i < r_; ++i) s += mu[i] * v[i];
            for (std::size_t j = 0; j < c_; ++j) s += nu[j] * v[r_ + j];
            best = std::max(best, s);
        }
        return std::max(best, 0.0);
    }

    std::size_t vertex_count() const { return vertices_.size(); }

private:
    std::size_t r_, c_;
    std::vector<Vec> vertices_;
};

/// Exact optimal transport cost by enumerating the basic feasible solutions
/// of the transportation polytope (tree allocations solved by elimination).
inline double transport_cost(std::span<const double> mu, std::span<const double> nu,
                             const std::vector<Vec>& cost) {
    const std::size_t r = cost.size();
    const std::size_t c = cost.empty() ? 0 : cost[0].size();
    if (mu.size() != r || nu.size() != c)
        throw std::invalid_argument("transport_cost: marginal size mismatch");
    double sm = 0, sn = 0;
    for (double v : mu) sm += v;
    for (double v : nu) sn += v;
    if (std::abs(sm - sn) > 1e-12)
        throw std::invalid_argument("transport_cost: total mass mismatch");

    double best = std::numeric_limits<double>::infinity();
    detail::for_each_spanning_tree(r, c, [&](const auto& edges) {
        Vec supply(mu.begin(), mu.end());
        Vec demand(nu.begin(), nu.end());
        std::vector<bool> used(edges.size(), false);
        std::vector<int> row_deg(r, 0), col_deg(c, 0);
        for (const auto& [i, j] : edges) {
            ++row_deg[i];
            ++col_deg[j];
        }
        double total = 0.0;
        bool ok = true;
        for (std::size_t round = 0; round < edges.size() && ok; ++round) {
            bool progressed = false;
            for (std::size_t e = 0; e < edges.size(); ++e) {
                if (used[e]) continue;
                const auto [i, j] = edges[e];
                double amount;
                if (row_deg[i] == 1)
                    amount = supply[i];
                else if (col_deg[j] == 1)
                    amount = demand[j];
                else
                    continue;
                if (amount < -1e-11) {
                    ok = false;
                    break;
                }
                used[e] = true;
                supply[i] -= amount;
                demand[j] -= amount;
                --row_deg[i];
                --col_deg[j];
                total += amount * cost[i][j];
                progressed = true;
            }
            if (!progressed) break;
        }
        for (std::size_t e = 0; e < edges.size() && ok; ++e) ok = used[e];
        for (std::size_t i = 0; i < r && ok; ++i) ok = std::abs(supply[i]) <= 1e-10;
        if (ok) best = std::min(best, total);
    });
    if (!std::isfinite(best))
        throw std::logic_error("transport_cost: no basic feasible solution found");
    return std::max(best, 0.0);
}

namespace detail {

/// Best value over the grid {center_k + i h} x ... intersected with the
/// simplex; the last coordinate absorbs the remainder. half_span < 0 scans
/// the whole simplex.
template <typename F>
void scan_simplex(const F& f, std::size_t n, const Vec& center, double h,
                  int half_span, double& best_f, Vec& best_mu) {
    std::vector<Vec> axes(n - 1);
    for (std::size_t k = 0; k < n - 1; ++k) {
        if (half_span < 0) {
            const int steps = static_cast<int>(std::round(1.0 / h));
            for (int i = 0; i <= steps; ++i)
                axes[k].push_back(static_cast<double>(i) / steps);
        } else {
            for (int i = -half_span; i <= half_span; ++i) {
                const double v = center[k] + i * h;
                if (v >= -1e-15 && v <= 1.0 + 1e-15)
                    axes[k].push_back(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    std::vector<std::size_t> idx(n - 1, 0);
    Vec mu(n);
    while (true) {
        double s = 0.0;
        for (std::size_t k = 0; k < n - 1; ++k) {
            mu[k] = axes[k][idx[k]];
            s += mu[k];
        }
        if (s <= 1.0 + 1e-12) {
            mu[n - 1] = std::max(1.0 - s, 0.0);
            const double v = f(mu);
            if (v > best_f) {
                best_f = v;
                best_mu = mu;
            }
        }
        int k = static_cast<int>(n) - 2;
        for (; k >= 0; --k) {
            if (++idx[k] < axes[k].size()) break;
            idx[k] = 0;
        }
        if (k < 0) break;
    }
}

}  // namespace detail

/// sup over the probability simplex of  mu.u - d_c(mu0, mu)^2 / (2 eta2), by
/// coarse-to-fine grid search refined to 1e-5 (the objective is concave:
/// linear minus a convex square of a nonnegative convex function). The
/// refinement restarts from the coarse argmax, from mu0 (where a small eta2
/// pins a sharp peak) and from the best vertex (the large-eta2 optimum).
inline double primal_value(const TinyInstance& inst) {
    inst.validate();
    const std::size_t n = inst.support.size();
    const TransportOracle oracle(inst.cost_matrix());
    auto f = [&](const Vec& mu) {
        const double d = oracle.cost(inst.mu0, mu);
        return dot(mu, inst.u_values) - d * d / (2.0 * inst.eta2);
    };
    if (n == 1) return inst.u_values[0];

    double best_f = f(inst.mu0);
    Vec best_mu = inst.mu0;
    detail::scan_simplex(f, n, inst.mu0, 1.0 / 16.0, -1, best_f, best_mu);

    Vec vertex(n, 0.0);
    vertex[std::distance(inst.u_values.begin(),
                         std::max_element(inst.u_values.begin(),
                                          inst.u_values.end()))] = 1.0;
    for (const Vec& seed : {best_mu, inst.mu0, vertex}) {
        Vec center = seed;
        double local_f = f(center);
        Vec local_mu = center;
        for (double h = 1.0 / 32.0; h > 2.5e-6; h /= 2.0) {
            detail::scan_simplex(f, n, center, h, 4, local_f, local_mu);
            center = local_mu;
        }
        if (local_f > best_f) {
            best_f = local_f;
            best_mu = local_mu;
        }
    }
    return best_f;
}

/// inf over a >= 0 of  eta2 a^2/2 + sum_i mu0_i max_j (u_j - a c_ij),
/// by golden-section search on a bracket derived from the problem scale.
inline double dual_value(const TinyInstance& inst) {
    inst.validate();
    const auto cost = inst.cost_matrix();
    const std::size_t n = inst.support.size();
    auto g = [&](double a) {
        double total = inst.eta2 * a * a / 2.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j)
                best = std::max(best, inst.u_values[j] - a * cost[i][j]);
            total += inst.mu0[i] * best;
        }
        return total;
    };
    double umax = 0.0;
    for (double u : inst.u_values) umax = std::max(umax, std::abs(u));
    const double m = inst.max_radius();
    const double upper = 2.0 / std::sqrt(inst.eta2) * (1.0 + 2.0 * umax) +
                         std::pow(2.0, inst.p + 2.0) * std::pow(m, inst.p) / inst.eta2;
    const double astar = golden_min(g, 0.0, upper, 1e-9 * (1.0 + upper));
    return g(astar);
}

inline double duality_gap(const TinyInstance& inst) {
    return std::abs(primal_value(inst) - dual_value(inst));
}

}  // namespace rsgld::oracle
