#pragma once

#include <atomic>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <thread>

#include "rsgld/constants.hpp"
#include "rsgld/sgld.hpp"

namespace rsgld {

namespace detail {

/// splitmix64 step, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Regression sample set; each row is (z..., y) with y last.
struct Dataset {
    int m = 0;
    std::vector<Vec> rows;
    std::vector<std::uint8_t> corrupt_flag;
    Vec step1_noise;  // the Bernoulli draw used for each row's clean response

    std::size_t size() const { return rows.size(); }

    PointMatrix matrix() const {
        PointMatrix pm;
        pm.dim = m;
        pm.count = rows.size();
        pm.data.reserve(rows.size() * static_cast<std::size_t>(m));
        for (const auto& r : rows) pm.data.insert(pm.data.end(), r.begin(), r.end());
        return pm;
    }
};

/// Clean draws: z uniform on [-1,1]^(m-1), y = net(theta*, z) + noise_scale * B
/// with B Bernoulli(1/2).
inline Dataset generate_clean(const RegressionNet& net, std::size_t count,
                              std::span<const double> theta_star,
                              double noise_scale, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate_clean: count must be >= 1");
    const int m = net.data_dim();
    Dataset ds;
    ds.m = m;
    ds.rows.resize(count, Vec(m));
    ds.corrupt_flag.assign(count, 0);
    ds.step1_noise.resize(count);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::bernoulli_distribution bern(0.5);
    for (std::size_t i = 0; i < count; ++i) {
        Vec& row = ds.rows[i];
        for (int k = 0; k + 1 < m; ++k) row[k] = unit(rng);
        const double b = bern(rng) ? 1.0 : 0.0;
        ds.step1_noise[i] = b;
        row[m - 1] = net.predict(theta_star, {row.data(), static_cast<std::size_t>(m - 1)}) +
                     noise_scale * b;
    }
    return ds;
}

struct CorruptOptions {
    double q = 0.3;
    std::uint64_t seed = 0;
    bool reuse_step1_noise = false;  // reuse the row's clean Bernoulli draw for y + eps
    Vec clip_lo, clip_hi;            // clip corrupted rows into this box when set
};

/// Replaces each row independently with probability q by an outlier:
/// z uniform on [2, 2.5]^(m-1) and y shifted up by a Bernoulli(1/2) draw.
/// Rows falling outside the clip box afterwards are clipped componentwise.
inline Dataset corrupt(const Dataset& in, const CorruptOptions& opt,
                       std::size_t* clipped_count = nullptr) {
    if (opt.q < 0.0 || opt.q > 1.0)
        throw std::invalid_argument("corrupt: q must be in [0, 1]");
    Dataset ds = in;
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> outlier(2.0, 2.5);
    std::bernoulli_distribution bern(0.5);
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        if (unit(rng) < 1.0 - opt.q) continue;
        Vec& row = ds.rows[i];
        for (int k = 0; k + 1 < ds.m; ++k) row[k] = outlier(rng);
        const double eps = opt.reuse_step1_noise ? ds.step1_noise[i]
                                                 : (bern(rng) ? 1.0 : 0.0);
        row[ds.m - 1] += eps;
        ds.corrupt_flag[i] = 1;
        if (!opt.clip_lo.empty()) {
            bool touched = false;
            for (int k = 0; k < ds.m; ++k) {
                const double c = std::clamp(row[k], opt.clip_lo[k], opt.clip_hi[k]);
                touched = touched || c != row[k];
                row[k] = c;
            }
            if (touched) ++clipped;
        }
    }
    if (clipped_count) *clipped_count = clipped;
    return ds;
}

inline double test_mse(const RegressionNet& net, std::span<const double> theta,
                       const Dataset& ds) {
    if (ds.rows.empty()) throw std::invalid_argument("test_mse: empty dataset");
    double total = 0.0;
    for (const auto& row : ds.rows) {
        const double r =
            row[ds.m - 1] -
            net.predict(theta, {row.data(), static_cast<std::size_t>(ds.m - 1)});
        total += r * r;
    }
    return total / static_cast<double>(ds.rows.size());
}

/// Experiment configuration; defaults reproduce the corrupted-regression study.
struct ExpConfig {
    int m = 4;
    double p = 2.0;
    double eta1 = 1e-3;
    Vec eta2_list = {0.01, 0.1, 0.5, 1.0, 1.5, 2.0};
    double delta = 0.1;
    double beta = 1e9;
    double lambda = 0.01;
    std::size_t n_iter = 25000;
    int ell = 3;
    int jj = 1;
    Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    Vec theta_bar_0 = {-2.0, -2.0, -2.0, -2.0, 0.0};
    double q = 0.3;
    std::size_t n_train = 10000;
    std::size_t n_test = 5000;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    bool snap_samples = true;
    std::size_t record_every = 10;
    // support box; fixed programmatically, not a config-file key
    double xi_lo = -3.0;
    double xi_hi = 3.0;

    GridSpec grid_spec() const {
        return GridSpec(m, ell, jj, Vec(m, xi_lo), Vec(m, xi_hi));
    }
    void validate() const {
        if (m < 2) throw std::invalid_argument("config: m must be >= 2");
        if (theta_star.size() != static_cast<std::size_t>(m))
            throw std::invalid_argument("config: theta_star must have m entries");
        if (theta_bar_0.size() != static_cast<std::size_t>(m) + 1)
            throw std::invalid_argument("config: theta_bar_0 must have m+1 entries");
        if (eta2_list.empty()) throw std::invalid_argument("config: eta2_list is empty");
        if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
        if (n_train < 1 || n_test < 1)
            throw std::invalid_argument("config: n_train and n_test must be >= 1");
    }
};

struct RunMetrics {
    std::string method;  // "vanilla" or "robust_eta2_<value>"
    double eta2 = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    double ref = 0.0, band_lo = 0.0, band_hi = 0.0;
    double final_mse = std::numeric_limits<double>::quiet_NaN();
    double best_mse = std::numeric_limits<double>::quiet_NaN();
    double mse_at_nes_or_best = std::numeric_limits<double>::quiet_NaN();
    std::optional<std::size_t> n_es;
    double time_to_band_s = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
    std::vector<std::size_t> iters;
    Vec v_trace, mse_trace, elapsed_trace;
    bool diverged = false;
    std::size_t divergence_iter = 0;
};

inline std::string format_eta2(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

inline void write_trace_csv(const std::string& path, const RunMetrics& rm) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    out << "iter,v_delta,test_mse,elapsed_s\n";
    out << std::setprecision(12);
    for (std::size_t i = 0; i < rm.iters.size(); ++i)
        out << rm.iters[i] << "," << rm.v_trace[i] << "," << rm.mse_trace[i] << ","
            << rm.elapsed_trace[i] << "\n";
}

namespace detail {

inline void fill_band_metrics(RunMetrics& rm) {
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rm.iters.size(); ++i) {
        const double mse = rm.mse_trace[i];
        if (!std::isfinite(mse)) continue;
        if (!rm.n_es && mse >= rm.band_lo && mse <= rm.band_hi) {
            rm.n_es = rm.iters[i];
            rm.time_to_band_s = rm.elapsed_trace[i];
            rm.mse_at_nes_or_best = mse;
        }
        const double gap = std::abs(mse - rm.ref);
        if (gap < best_gap) {
            best_gap = gap;
            rm.best_mse = mse;
        }
    }
    if (!rm.mse_trace.empty()) rm.final_mse = rm.mse_trace.back();
    if (!rm.n_es) rm.mse_at_nes_or_best = rm.best_mse;
}

}  // namespace detail

/// Trains every (method, seed) pair: robust SGLD at each eta2 plus the vanilla
/// baseline, on per-seed corrupted data. A diverging run is tagged and the
/// rest continue. Traces are written to out_dir when non-empty.
inline std::vector<RunMetrics> run_experiment(const ExpConfig& cfg,
                                              const std::string& out_dir = "",
                                              std::ostream* log = nullptr,
                                              unsigned threads = 0) {
    cfg.validate();
    const auto net = std::make_shared<RegressionNet>(cfg.m);

    struct SeedData {
        Dataset train;
        Dataset test;
        PointMatrix train_matrix;
        double ref;
        DiscreteMeasure mu;
    };
    const GridSpec spec = cfg.grid_spec();
    std::vector<SeedData> data(cfg.seeds.size());
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const std::uint64_t s = cfg.seeds[si];
        SeedData& sd = data[si];
        Dataset clean =
            generate_clean(*net, cfg.n_train, cfg.theta_star, 0.1, detail::mix_seed(s, 1));
        CorruptOptions co;
        co.q = cfg.q;
        co.seed = detail::mix_seed(s, 2);
        co.clip_lo = spec.lo;
        co.clip_hi = spec.hi;
        std::size_t clipped = 0;
        sd.train = corrupt(clean, co, &clipped);
        if (clipped && log)
            (*log) << "seed " << s << ": clipped " << clipped
                   << " corrupted rows into the support box\n";
        sd.test = generate_clean(*net, cfg.n_test, cfg.theta_star, 0.1,
                                 detail::mix_seed(s, 3));
        sd.train_matrix = sd.train.matrix();
        sd.ref = test_mse(*net, cfg.theta_star, sd.test);
        sd.mu = discretise_measure(sd.train.rows, spec);
    }

    if (log) {
        // step-size sanity: the theoretical restriction is reported, not enforced
        DROProblem pb(cfg.eta1, cfg.eta2_list.front(), cfg.p, cfg.delta, spec,
                      data.front().mu, net);
        ThetaBar tb0 = ThetaBar::from_flat(cfg.theta_bar_0);
        const auto cb = compute_bundle(pb, data.front().train.rows, {}, tb0, cfg.beta);
        if (cfg.lambda >= cb.lambda_max_delta)
            (*log) << "note: lambda=" << cfg.lambda
                   << " exceeds the conservative bound lambda_max_delta="
                   << cb.lambda_max_delta << " (not enforced)\n";
    }

    struct Job {
        std::size_t seed_idx;
        bool robust;
        double eta2;
    };
    std::vector<Job> jobs;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        for (double e2 : cfg.eta2_list) jobs.push_back({si, true, e2});
        jobs.push_back({si, false, 0.0});
    }

    auto run_job = [&](const Job& job) {
        const SeedData& sd = data[job.seed_idx];
        const std::uint64_t seed = cfg.seeds[job.seed_idx];
        RunMetrics rm;
        rm.seed = seed;
        rm.ref = sd.ref;
        rm.band_lo = 0.99 * sd.ref;
        rm.band_hi = 1.01 * sd.ref;
        SGLDConfig run_cfg;
        run_cfg.lambda = cfg.lambda;
        run_cfg.beta = cfg.beta;
        run_cfg.n_iter = cfg.n_iter;
        run_cfg.snap_samples = cfg.snap_samples;
        run_cfg.record_every = cfg.record_every;
        TraceHooks hooks;
        hooks.test_loss = [&](std::span<const double> theta) {
            return test_mse(*net, theta, sd.test);
        };
        try {
            Trajectory traj;
            if (job.robust) {
                rm.method = "robust_eta2_" + format_eta2(job.eta2);
                rm.eta2 = job.eta2;
                run_cfg.seed = detail::mix_seed(seed, 100 + static_cast<std::uint64_t>(
                                                          job.eta2 * 1000.0));
                DROProblem pb(cfg.eta1, job.eta2, cfg.p, cfg.delta, spec, sd.mu, net);
                auto ws = std::make_shared<Workspace>();
                hooks.objective_value = [&pb, ws](const ThetaBar& tb) {
                    return v_delta_full(pb, tb, *ws);
                };
                traj = run_robust(pb, empirical_sampler(sd.train_matrix), run_cfg,
                                  ThetaBar::from_flat(cfg.theta_bar_0), &hooks);
            } else {
                rm.method = "vanilla";
                run_cfg.seed = detail::mix_seed(seed, 7);
                Vec theta0(cfg.theta_bar_0.begin(), cfg.theta_bar_0.end() - 1);
                traj = run_vanilla(*net, empirical_sampler(sd.train_matrix), run_cfg,
                                   theta0, &hooks);
            }
            rm.iters = std::move(traj.iters);
            rm.v_trace = std::move(traj.v_delta);
            rm.mse_trace = std::move(traj.test_mse);
            rm.elapsed_trace = std::move(traj.elapsed_s);
            rm.wall_time_s = rm.elapsed_trace.back();
            detail::fill_band_metrics(rm);
        } catch (const divergence_error& e) {
            rm.diverged = true;
            rm.divergence_iter = e.iteration();
            if (log)
                (*log) << rm.method << " seed " << seed << ": " << e.what() << "\n";
        }
        return rm;
    };

    std::vector<RunMetrics> results(jobs.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = run_job(jobs[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size();
                     i = next.fetch_add(1))
                    results[i] = run_job(jobs[i]);
            });
        for (auto& th : pool) th.join();
    }

    if (!out_dir.empty())
        for (const auto& rm : results)
            if (!rm.diverged)
                write_trace_csv(out_dir + "/trace_" + rm.method + "_" +
                                    std::to_string(rm.seed) + ".csv",
                                rm);
    return results;
}

struct SummaryRow {
    std::string method;
    std::optional<double> eta2;
    double avg_train_time_s = 0.0;
    std::optional<std::size_t> n_es;  // max over runs; absent if any run missed
    double time_to_band_s = std::numeric_limits<double>::quiet_NaN();
    double mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t runs = 0, diverged = 0;
};

/// Per-method aggregation: mean training time, the largest per-run n_es (NA
/// unless every run reached the band), its corresponding time, and the mean
/// of the per-run loss at n_es (or closest-to-reference loss).
inline std::vector<SummaryRow> aggregate(const std::vector<RunMetrics>& runs) {
    std::vector<SummaryRow> rows;
    auto find_row = [&](const RunMetrics& rm) -> SummaryRow& {
        for (auto& r : rows)
            if (r.method == rm.method) return r;
        rows.push_back({});
        rows.back().method = rm.method;
        if (rm.method != "vanilla") rows.back().eta2 = rm.eta2;
        return rows.back();
    };
    for (const auto& rm : runs) find_row(rm);  // stable order of first appearance
    for (auto& row : rows) {
        double time_sum = 0, mse_sum = 0;
        std::size_t n = 0;
        bool all_hit = true;
        std::size_t max_nes = 0;
        double max_nes_time = std::numeric_limits<double>::quiet_NaN();
        for (const auto& rm : runs) {
            if (rm.method != row.method) continue;
            ++row.runs;
            if (rm.diverged) {
                ++row.diverged;
                all_hit = false;
                continue;
            }
            ++n;
            time_sum += rm.wall_time_s;
            mse_sum += rm.mse_at_nes_or_best;
            if (rm.n_es) {
                if (*rm.n_es >= max_nes) {
                    max_nes = *rm.n_es;
                    max_nes_time = rm.time_to_band_s;
                }
            } else {
                all_hit = false;
            }
        }
        if (n > 0) {
            row.avg_train_time_s = time_sum / static_cast<double>(n);
            row.mse = mse_sum / static_cast<double>(n);
        }
        if (all_hit && n > 0) {
            row.n_es = max_nes;
            row.time_to_band_s = max_nes_time;
        }
    }
    return rows;
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open summary file " + path);
    out << "method,eta2,avg_train_time_s,n_es,time_to_band_s,mse_at_nes_or_best\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.method << ",";
        if (r.eta2)
            out << *r.eta2;
        else
            out << "NA";
        out << "," << r.avg_train_time_s << ",";
        if (r.n_es)
            out << *r.n_es << "," << r.time_to_band_s;
        else
            out << "NA,NA";
        out << "," << r.mse << "\n";
    }
}

inline std::string format_summary_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(22) << "method" << std::right << std::setw(10)
       << "eta2" << std::setw(14) << "avg_time_s" << std::setw(10) << "n_es"
       << std::setw(16) << "time_to_band" << std::setw(14) << "mse" << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(22) << r.method << std::right << std::setw(10);
        if (r.eta2)
            os << *r.eta2;
        else
            os << "NA";
        os << std::setw(14) << std::fixed << std::setprecision(2) << r.avg_train_time_s
           << std::defaultfloat << std::setw(10);
        if (r.n_es)
            os << *r.n_es;
        else
            os << "NA";
        os << std::setw(16);
        if (r.n_es)
            os << std::fixed << std::setprecision(2) << r.time_to_band_s
               << std::defaultfloat;
        else
            os << "NA";
        os << std::setw(14) << std::fixed << std::setprecision(6) << r.mse
           << std::defaultfloat;
        if (r.diverged) os << "  [" << r.diverged << " diverged]";
        os << "\n";
    }
    return os.str();
}

}  // namespace rsgld
