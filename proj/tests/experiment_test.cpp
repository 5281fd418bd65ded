#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "rsgld/config.hpp"
#include "rsgld/experiment.hpp"

using namespace rsgld;
using Catch::Matchers::WithinAbs;

namespace {

ExpConfig tiny_config() {
    ExpConfig cfg;
    cfg.n_iter = 300;
    cfg.n_train = 400;
    cfg.n_test = 400;
    cfg.eta2_list = {1.0};
    cfg.seeds = {1, 2};
    cfg.record_every = 50;
    return cfg;
}

}  // namespace

TEST_CASE("generate_clean") {
    RegressionNet net(4);
    const Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    SECTION("zero noise scale reproduces the network exactly") {
        const auto ds = generate_clean(net, 200, theta_star, 0.0, 5);
        for (const auto& row : ds.rows) {
            const double pred = net.predict(theta_star, {row.data(), 3});
            CHECK(row[3] == pred);
            for (int k = 0; k < 3; ++k) {
                CHECK(row[k] >= -1.0);
                CHECK(row[k] <= 1.0);
            }
        }
    }
    SECTION("offsets are Bernoulli(1/2) with scale 0.1") {
        const auto ds = generate_clean(net, 10000, theta_star, 0.1, 6);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double off =
                ds.rows[i][3] - net.predict(theta_star, {ds.rows[i].data(), 3});
            CHECK((std::abs(off) < 1e-12 || std::abs(off - 0.1) < 1e-12));
            const bool hit = off > 0.05;
            if (hit) ++ones;
            CHECK(ds.step1_noise[i] == (hit ? 1.0 : 0.0));
        }
        const double frac = static_cast<double>(ones) / 10000.0;
        CHECK_THAT(frac, WithinAbs(0.5, 0.02));
    }
    SECTION("deterministic per seed") {
        const auto a = generate_clean(net, 50, theta_star, 0.1, 7);
        const auto b = generate_clean(net, 50, theta_star, 0.1, 7);
        CHECK(a.rows == b.rows);
    }
    CHECK_THROWS_AS(generate_clean(net, 0, theta_star, 0.1, 1), std::invalid_argument);
}

TEST_CASE("corrupt") {
    RegressionNet net(4);
    const Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    const auto clean = generate_clean(net, 10000, theta_star, 0.1, 8);
    SECTION("q = 0 keeps everything") {
        const auto ds = corrupt(clean, {.q = 0.0, .seed = 9});
        CHECK(ds.rows == clean.rows);
        for (auto f : ds.corrupt_flag) CHECK(f == 0);
    }
    SECTION("q = 1 corrupts everything") {
        const auto ds = corrupt(clean, {.q = 1.0, .seed = 9});
        for (auto f : ds.corrupt_flag) CHECK(f == 1);
    }
    SECTION("q = 0.3 hits the binomial fraction and the outlier box") {
        const auto ds = corrupt(clean, {.q = 0.3, .seed = 10});
        std::size_t hits = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!ds.corrupt_flag[i]) {
                CHECK(ds.rows[i] == clean.rows[i]);
                continue;
            }
            ++hits;
            for (int k = 0; k < 3; ++k) {
                CHECK(ds.rows[i][k] >= 2.0);
                CHECK(ds.rows[i][k] <= 2.5);
            }
            const double dy = ds.rows[i][3] - clean.rows[i][3];
            CHECK((std::abs(dy) < 1e-12 || std::abs(dy - 1.0) < 1e-12));  // fresh draw
        }
        CHECK_THAT(static_cast<double>(hits) / 10000.0, WithinAbs(0.3, 0.015));
    }
    SECTION("reuse mode takes the step-1 draw") {
        CorruptOptions opt{.q = 1.0, .seed = 11, .reuse_step1_noise = true};
        const auto ds = corrupt(clean, opt);
        for (std::size_t i = 0; i < ds.size(); ++i)
            CHECK_THAT(ds.rows[i][3] - clean.rows[i][3],
                       WithinAbs(clean.step1_noise[i], 1e-12));
    }
    SECTION("clipping into a narrow box is counted") {
        CorruptOptions opt{.q = 1.0, .seed = 12};
        opt.clip_lo = Vec(4, -2.2);
        opt.clip_hi = Vec(4, 2.2);
        std::size_t clipped = 0;
        const auto ds = corrupt(clean, opt, &clipped);
        CHECK(clipped > 0);
        for (const auto& row : ds.rows)
            for (double v : row) CHECK(std::abs(v) <= 2.2);
    }
    CHECK_THROWS_AS(corrupt(clean, {.q = 1.5, .seed = 1}), std::invalid_argument);
}

TEST_CASE("test_mse") {
    RegressionNet net(4);
    const Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    SECTION("zero on noiseless data at theta*") {
        const auto ds = generate_clean(net, 100, theta_star, 0.0, 13);
        CHECK(test_mse(net, theta_star, ds) == 0.0);
    }
    SECTION("reference level on a 5000-point clean set") {
        const auto ds = generate_clean(net, 5000, theta_star, 0.1, 14);
        CHECK_THAT(test_mse(net, theta_star, ds), WithinAbs(0.005, 2e-4));
    }
    SECTION("single-row hand value") {
        Dataset ds;
        ds.m = 4;
        ds.rows = {{0.2, -0.1, 0.4, 1.0}};
        CHECK_THAT(test_mse(net, Vec(4, 0.0), ds), WithinAbs(0.25, 1e-15));
    }
    SECTION("empty dataset is rejected") {
        Dataset ds;
        ds.m = 4;
        CHECK_THROWS_AS(test_mse(net, theta_star, ds), std::invalid_argument);
    }
}

TEST_CASE("reference loss concentrates around 0.005") {
    RegressionNet net(4);
    const Vec theta_star = {-0.5, 0.5, 0.1, -0.2};
    const double sigma = std::sqrt(2.5e-5 / 5000.0);
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto ds = generate_clean(net, 5000, theta_star, 0.1,
                                       detail::mix_seed(seed, 3));
        CHECK(std::abs(test_mse(net, theta_star, ds) - 0.005) <= 3.0 * sigma);
    }
}

TEST_CASE("run_experiment produces aligned deterministic metrics") {
    const auto cfg = tiny_config();
    const auto runs = run_experiment(cfg, "", nullptr, 1);
    REQUIRE(runs.size() == cfg.seeds.size() * (cfg.eta2_list.size() + 1));
    for (const auto& rm : runs) {
        REQUIRE_FALSE(rm.diverged);
        CHECK(rm.iters.size() == rm.mse_trace.size());
        CHECK(rm.iters.size() == rm.v_trace.size());
        CHECK(rm.iters.front() == 0);
        CHECK(rm.iters.back() == cfg.n_iter);
        CHECK(std::isfinite(rm.best_mse));
        if (rm.n_es) {
            CHECK(*rm.n_es <= cfg.n_iter);
            CHECK(rm.mse_at_nes_or_best >= rm.band_lo);
            CHECK(rm.mse_at_nes_or_best <= rm.band_hi);
        }
        if (rm.method == "vanilla") {
            for (double v : rm.v_trace) CHECK(std::isnan(v));
        } else {
            for (double v : rm.v_trace) CHECK(std::isfinite(v));
        }
    }
    const auto again = run_experiment(cfg, "", nullptr, 1);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        CHECK(runs[i].method == again[i].method);
        CHECK(runs[i].mse_trace == again[i].mse_trace);
    }
}

TEST_CASE("diverging runs are tagged and the rest continue") {
    auto cfg = tiny_config();
    // a huge step makes the robust run explode through eta1*theta; the vanilla
    // baseline merely saturates its sigmoid (gradient exactly zero) and survives
    cfg.lambda = 1e13;
    cfg.n_iter = 50;
    cfg.seeds = {1};
    const auto runs = run_experiment(cfg, "", nullptr, 1);
    REQUIRE(runs.size() == 2);
    for (const auto& rm : runs) {
        if (rm.method == "vanilla") {
            CHECK_FALSE(rm.diverged);
            CHECK(rm.iters.back() == cfg.n_iter);
        } else {
            CHECK(rm.diverged);
            CHECK(rm.divergence_iter >= 1);
            CHECK(rm.divergence_iter <= cfg.n_iter);
        }
    }
    const auto rows = aggregate(runs);
    for (const auto& row : rows) {
        CHECK(row.diverged == (row.method == "vanilla" ? 0u : 1u));
        CHECK_FALSE(row.n_es.has_value());
    }
}

TEST_CASE("trace and summary files") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "rsgld_exp_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto cfg = tiny_config();
    cfg.seeds = {3};
    const auto runs = run_experiment(cfg, dir.string(), nullptr, 1);
    const auto rows = aggregate(runs);
    write_summary_csv((dir / "summary.csv").string(), rows);

    std::ifstream trace(dir / "trace_robust_eta2_1_3.csv");
    REQUIRE(trace.good());
    std::string header;
    std::getline(trace, header);
    CHECK(header == "iter,v_delta,test_mse,elapsed_s");
    std::size_t lines = 0;
    std::string line;
    while (std::getline(trace, line))
        if (!line.empty()) ++lines;
    CHECK(lines == cfg.n_iter / cfg.record_every + 1);

    std::ifstream summary(dir / "summary.csv");
    REQUIRE(summary.good());
    std::getline(summary, header);
    CHECK(header == "method,eta2,avg_train_time_s,n_es,time_to_band_s,mse_at_nes_or_best");
    fs::remove_all(dir);
}

TEST_CASE("aggregate") {
    RunMetrics a;
    a.method = "robust_eta2_2";
    a.eta2 = 2.0;
    a.seed = 1;
    a.wall_time_s = 2.0;
    a.n_es = 120;
    a.time_to_band_s = 0.5;
    a.mse_at_nes_or_best = 0.0050;
    RunMetrics b = a;
    b.seed = 2;
    b.wall_time_s = 4.0;
    b.n_es = 200;
    b.time_to_band_s = 0.9;
    b.mse_at_nes_or_best = 0.0052;

    SECTION("single run reports its own values") {
        const auto rows = aggregate({a});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].avg_train_time_s == 2.0);
        REQUIRE(rows[0].n_es.has_value());
        CHECK(*rows[0].n_es == 120);
        CHECK(rows[0].mse == 0.0050);
    }
    SECTION("all runs in band: the largest n_es is reported") {
        const auto rows = aggregate({a, b});
        REQUIRE(rows.size() == 1);
        REQUIRE(rows[0].n_es.has_value());
        CHECK(*rows[0].n_es == 200);
        CHECK(rows[0].time_to_band_s == 0.9);
        CHECK_THAT(rows[0].avg_train_time_s, WithinAbs(3.0, 1e-12));
        CHECK_THAT(rows[0].mse, WithinAbs(0.0051, 1e-12));
    }
    SECTION("a run missing the band clears n_es") {
        RunMetrics c = a;
        c.seed = 3;
        c.n_es.reset();
        c.mse_at_nes_or_best = 0.0056;
        const auto rows = aggregate({a, b, c});
        REQUIRE(rows.size() == 1);
        CHECK_FALSE(rows[0].n_es.has_value());
    }
}

TEST_CASE("config parsing") {
    SECTION("round trip of the defaults") {
        const ExpConfig def;
        std::istringstream in(format_config(def));
        const auto parsed = parse_config(in);
        CHECK(parsed.eta2_list == def.eta2_list);
        CHECK(parsed.theta_star == def.theta_star);
        CHECK(parsed.seeds == def.seeds);
        CHECK(parsed.n_iter == def.n_iter);
        CHECK(parsed.snap_samples == def.snap_samples);
    }
    SECTION("unknown keys are rejected with the full key list") {
        std::istringstream in("bogus_key = 3\n");
        try {
            parse_config(in);
            FAIL("expected rejection");
        } catch (const std::invalid_argument& e) {
            const std::string msg = e.what();
            CHECK(msg.find("bogus_key") != std::string::npos);
            for (const auto& k : config_keys())
                CHECK(msg.find(k) != std::string::npos);
        }
    }
    SECTION("overrides win over file values") {
        namespace fs = std::filesystem;
        const auto path = fs::temp_directory_path() / "rsgld_cfg_test.cfg";
        std::ofstream(path) << "lambda = 0.5\nn_iter = 100\n";
        const auto cfg = load_config(path.string(), {"lambda=0.25"});
        CHECK(cfg.lambda == 0.25);
        CHECK(cfg.n_iter == 100);
        fs::remove(path);
    }
    SECTION("comments and blanks are ignored") {
        std::istringstream in("# full line comment\n\nq = 0.4  # trailing\n");
        CHECK(parse_config(in).q == 0.4);
    }
    SECTION("malformed values are reported") {
        std::istringstream in("lambda = banana\n");
        CHECK_THROWS_AS(parse_config(in), std::invalid_argument);
    }
}
