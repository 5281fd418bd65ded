// Command-line front end: training runs, the corrupted-regression experiment,
// constants/parameter reports and the verification suites.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rsgld/config.hpp"
#include "rsgld/selftest.hpp"

namespace fs = std::filesystem;
using namespace rsgld;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // verification or divergence failure
constexpr int kExitUsage = 2;    // bad invocation, config or missing input

std::string default_output_dir() {
    if (const char* env = std::getenv("RSGLD_OUTPUT_DIR"); env && *env) return env;
    return ".";
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty() && dir != ".") fs::create_directories(dir);
}

Vec read_theta_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open theta file " + path);
    Vec out;
    double v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw std::invalid_argument("theta file " + path + " is empty");
    return out;
}

struct CommonOpts {
    std::string config_path;
    std::string output_dir = default_output_dir();
    std::vector<std::string> overrides;
};

void attach_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key = value configuration file");
    cmd->add_option("--output-dir", opts.output_dir,
                    "output directory (default: $RSGLD_OUTPUT_DIR or .)");
    cmd->add_option("--set", opts.overrides,
                    "override a config key, e.g. --set eta2_list=2.0");
}

struct SeedData {
    std::shared_ptr<RegressionNet> net;
    Dataset train, test;
    PointMatrix train_matrix;
    DiscreteMeasure mu;
    double ref;
};

SeedData prepare_data(const ExpConfig& cfg, std::uint64_t seed) {
    SeedData sd;
    sd.net = std::make_shared<RegressionNet>(cfg.m);
    Dataset clean = generate_clean(*sd.net, cfg.n_train, cfg.theta_star, 0.1,
                                   detail::mix_seed(seed, 1));
    CorruptOptions co;
    co.q = cfg.q;
    co.seed = detail::mix_seed(seed, 2);
    const GridSpec spec = cfg.grid_spec();
    co.clip_lo = spec.lo;
    co.clip_hi = spec.hi;
    sd.train = corrupt(clean, co);
    sd.test = generate_clean(*sd.net, cfg.n_test, cfg.theta_star, 0.1,
                             detail::mix_seed(seed, 3));
    sd.train_matrix = sd.train.matrix();
    sd.mu = discretise_measure(sd.train.rows, spec);
    sd.ref = test_mse(*sd.net, cfg.theta_star, sd.test);
    return sd;
}

DROProblem make_problem(const ExpConfig& cfg, double eta2, const SeedData& sd) {
    return DROProblem(cfg.eta1, eta2, cfg.p, cfg.delta, cfg.grid_spec(), sd.mu,
                      sd.net);
}

/// One training run (robust at the first eta2 of the list, or vanilla);
/// writes the trace CSV and the final parameter vector.
int run_train(const CommonOpts& opts, bool robust) {
    const ExpConfig cfg = load_config(opts.config_path, opts.overrides);
    const std::uint64_t seed = cfg.seeds.front();
    const double eta2 = cfg.eta2_list.front();
    const SeedData sd = prepare_data(cfg, seed);
    ensure_dir(opts.output_dir);

    SGLDConfig rc;
    rc.lambda = cfg.lambda;
    rc.beta = cfg.beta;
    rc.n_iter = cfg.n_iter;
    rc.snap_samples = cfg.snap_samples;
    rc.record_every = cfg.record_every;

    RunMetrics rm;
    rm.seed = seed;
    rm.ref = sd.ref;
    rm.band_lo = 0.99 * sd.ref;
    rm.band_hi = 1.01 * sd.ref;
    TraceHooks hooks;
    hooks.test_loss = [&](std::span<const double> theta) {
        return test_mse(*sd.net, theta, sd.test);
    };
    Trajectory traj;
    try {
        if (robust) {
            rm.method = "robust_eta2_" + format_eta2(eta2);
            rm.eta2 = eta2;
            rc.seed = detail::mix_seed(seed,
                                       100 + static_cast<std::uint64_t>(eta2 * 1000.0));
            DROProblem pb = make_problem(cfg, eta2, sd);
            {
                const auto cb = compute_bundle(pb, sd.train.rows, {},
                                               ThetaBar::from_flat(cfg.theta_bar_0),
                                               cfg.beta);
                if (cfg.lambda >= cb.lambda_max_delta)
                    std::cerr << "note: lambda=" << cfg.lambda
                              << " exceeds lambda_max_delta=" << cb.lambda_max_delta
                              << " (not enforced)\n";
            }
            Workspace ws;
            hooks.objective_value = [&pb, &ws](const ThetaBar& tb) {
                return v_delta_full(pb, tb, ws);
            };
            traj = run_robust(pb, empirical_sampler(sd.train_matrix), rc,
                              ThetaBar::from_flat(cfg.theta_bar_0), &hooks);
        } else {
            rm.method = "vanilla";
            rc.seed = detail::mix_seed(seed, 7);
            Vec theta0(cfg.theta_bar_0.begin(), cfg.theta_bar_0.end() - 1);
            traj = run_vanilla(*sd.net, empirical_sampler(sd.train_matrix), rc, theta0,
                               &hooks);
        }
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    rm.iters = traj.iters;
    rm.v_trace = traj.v_delta;
    rm.mse_trace = traj.test_mse;
    rm.elapsed_trace = traj.elapsed_s;
    rm.wall_time_s = traj.elapsed_s.back();
    detail::fill_band_metrics(rm);

    const std::string stem = rm.method + "_" + std::to_string(seed);
    const std::string trace_path = opts.output_dir + "/trace_" + stem + ".csv";
    write_trace_csv(trace_path, rm);
    const std::string theta_path = opts.output_dir + "/theta_" + stem + ".txt";
    {
        std::ofstream out(theta_path);
        out << std::setprecision(17);
        for (double v : traj.final_state()) out << v << "\n";
    }
    std::cout << "wrote " << trace_path << " (" << rm.iters.size() << " records)\n";
    std::cout << "wrote " << theta_path << "\n";
    std::cout << std::setprecision(10) << "final test_mse=" << rm.final_mse << "\n";
    return kExitOk;
}

int run_experiment_cmd(const CommonOpts& opts) {
    const ExpConfig cfg = load_config(opts.config_path, opts.overrides);
    ensure_dir(opts.output_dir);
    auto metrics = run_experiment(cfg, opts.output_dir, &std::cerr);
    const auto rows = aggregate(metrics);
    write_summary_csv(opts.output_dir + "/summary.csv", rows);
    std::cout << format_summary_table(rows);
    std::cout << "wrote " << opts.output_dir << "/summary.csv\n";
    for (const auto& rm : metrics)
        if (rm.diverged) return kExitFailure;
    return kExitOk;
}

int run_constants(const CommonOpts& opts, std::optional<double> sup_thetabar,
                  bool no_surrogate, std::string out_file) {
    const ExpConfig cfg = load_config(opts.config_path, opts.overrides);
    const SeedData sd = prepare_data(cfg, cfg.seeds.front());
    DROProblem pb = make_problem(cfg, cfg.eta2_list.front(), sd);
    C4Options c4;
    c4.sup_thetabar = sup_thetabar;
    c4.allow_surrogate = !no_surrogate;
    const auto cb = compute_bundle(pb, sd.train.rows, {},
                                   ThetaBar::from_flat(cfg.theta_bar_0), cfg.beta, c4);
    if (cfg.lambda >= cb.lambda_max_delta)
        std::cerr << "note: lambda=" << cfg.lambda
                  << " exceeds lambda_max_delta=" << cb.lambda_max_delta
                  << " (not enforced)\n";
    ensure_dir(opts.output_dir);
    if (out_file.empty()) out_file = opts.output_dir + "/constants.txt";
    std::ofstream out(out_file);
    out << format_constants_report(cb);
    std::cout << "wrote " << out_file << "\n";
    return kExitOk;
}

int run_params(const CommonOpts& opts, double epsilon, const ExternalConstants& ext) {
    const ExpConfig cfg = load_config(opts.config_path, opts.overrides);
    const SeedData sd = prepare_data(cfg, cfg.seeds.front());
    DROProblem pb = make_problem(cfg, cfg.eta2_list.front(), sd);
    const auto cb = compute_bundle(pb, sd.train.rows, {},
                                   ThetaBar::from_flat(cfg.theta_bar_0), cfg.beta);
    const auto params = algorithm1_params(epsilon, cb, cfg.grid_spec(), ext);
    std::cout << format_params_report(epsilon, params);
    return kExitOk;
}

int run_verify(const std::vector<std::string>& suites, std::uint64_t seed,
               bool inject_bug) {
    const auto results = selftest::run_suites(suites, seed, inject_bug);
    if (results.empty()) {
        std::cerr << "unknown suite; valid: duality sandwich dissipativity gradient "
                     "quadrature\n";
        return kExitUsage;
    }
    std::size_t failed = 0;
    for (const auto& r : results) {
        std::cout << "suite " << r.name << ": " << r.checks << " checks, "
                  << r.failures << " failures  [" << (r.passed() ? "PASS" : "FAIL")
                  << "]  (" << std::fixed << std::setprecision(2) << r.seconds
                  << "s)\n"
                  << std::defaultfloat;
        for (const auto& m : r.messages) std::cout << "    " << m << "\n";
        if (!r.passed()) ++failed;
    }
    if (failed) {
        std::cout << failed << " suite(s) failed\n";
        return kExitFailure;
    }
    std::cout << "all suites passed\n";
    return kExitOk;
}

int run_eval(const CommonOpts& opts, const std::string& theta_path) {
    const ExpConfig cfg = load_config(opts.config_path, opts.overrides);
    const Vec theta = read_theta_file(theta_path);
    const std::size_t d = static_cast<std::size_t>(cfg.m);
    if (theta.size() != d && theta.size() != d + 1)
        throw std::invalid_argument("theta file must hold d or d+1 values");
    const SeedData sd = prepare_data(cfg, cfg.seeds.front());
    std::cout << std::setprecision(10);
    std::cout << "test_mse=" << test_mse(*sd.net, std::span(theta).first(d), sd.test)
              << "\n";
    if (theta.size() == d + 1) {
        DROProblem pb = make_problem(cfg, cfg.eta2_list.front(), sd);
        std::cout << "v_delta=" << v_delta_full(pb, ThetaBar::from_flat(theta)) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust Langevin solver for penalised DRO problems"};
    app.require_subcommand(1);

    CommonOpts train_opts, exp_opts, const_opts, params_opts, eval_opts;

    auto* train_robust = app.add_subcommand(
        "train-robust", "one robust SGLD run (first seed, first eta2)");
    attach_common(train_robust, train_opts);
    auto* train_vanilla =
        app.add_subcommand("train-vanilla", "one vanilla SGLD baseline run");
    attach_common(train_vanilla, train_opts);

    auto* experiment = app.add_subcommand(
        "experiment", "full corrupted-regression study with summary table");
    attach_common(experiment, exp_opts);

    auto* constants =
        app.add_subcommand("constants", "write the closed-form constants report");
    attach_common(constants, const_opts);
    std::optional<double> sup_thetabar;
    bool no_surrogate = false;
    std::string constants_out;
    constants->add_option("--sup-thetabar", sup_thetabar,
                          "user bound on the compact-set radius used by C4");
    constants->add_flag("--no-c4-surrogate", no_surrogate,
                        "refuse the coercivity surrogate for C4");
    constants->add_option("--output", constants_out, "report file path");

    auto* params = app.add_subcommand(
        "params",
        "accuracy-driven parameter selection (ell, jj, delta, beta, lambda, n)");
    attach_common(params, params_opts);
    double epsilon = 0.0;
    ExternalConstants ext;
    params->add_option("--epsilon", epsilon, "target accuracy")
        ->required()
        ->check(CLI::PositiveNumber);
    params->add_option("--c-delta-beta", ext.c_delta_beta,
                       "external contraction-rate constant");
    params->add_option("--c1", ext.c1, "external constant C1");
    params->add_option("--c2", ext.c2, "external constant C2");
    params->add_option("--c6", ext.c6_override, "override for C6");

    auto* verify = app.add_subcommand(
        "verify", "run the oracle and property suites; exit 0 iff all pass");
    std::vector<std::string> suites;
    std::uint64_t verify_seed = 2024;
    bool inject_bug = false;
    verify->add_option("--suite", suites,
                       "run only the named suite(s): duality sandwich dissipativity "
                       "gradient quadrature");
    verify->add_option("--seed", verify_seed, "suite RNG seed");
    verify->add_flag("--inject-gradient-bug", inject_bug,
                     "test hook: corrupt H so gradient-check must fail");

    auto* eval = app.add_subcommand("eval", "evaluate a saved parameter vector");
    attach_common(eval, eval_opts);
    std::string theta_path;
    eval->add_option("--theta", theta_path, "flat text file with d or d+1 values")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_robust->parsed()) return run_train(train_opts, true);
        if (train_vanilla->parsed()) return run_train(train_opts, false);
        if (experiment->parsed()) return run_experiment_cmd(exp_opts);
        if (constants->parsed())
            return run_constants(const_opts, sup_thetabar, no_surrogate, constants_out);
        if (params->parsed()) return run_params(params_opts, epsilon, ext);
        if (verify->parsed()) return run_verify(suites, verify_seed, inject_bug);
        if (eval->parsed()) return run_eval(eval_opts, theta_path);
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const unavailable_constant_error& e) {
        std::cerr << "error: missing constant " << e.constant() << ": " << e.what()
                  << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
