#include "nlsem/noise.hpp"
#include "nlsem/parallel.hpp"
#include "nlsem/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

using namespace nlsem;

namespace {

Vec vec1(double x) {
    Vec v(1);
    v(0) = x;
    return v;
}

Mat mat1(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return m;
}

UncertaintySet single(CoefficientField field) {
    return {ControlSet::finite({{0.0}}), std::move(field)};
}

PathPair start_at(const TimeGrid& g, double x0, double t = 0.0) {
    return PathPair(t, DiscretePath::scalar(g, [x0](double) { return x0; }));
}

double terminal(const PathView& p) { return p.current(0); }

} // namespace

TEST(Noise, DeterministicAndRoughlyStandardNormal) {
    const NoiseStream a(42);
    const NoiseStream b(42);
    EXPECT_EQ(a.normal(3, 7, 0), b.normal(3, 7, 0));
    EXPECT_NE(a.normal(3, 7, 0), a.normal(3, 7, 1));
    EXPECT_NE(a.normal(3, 7, 0), NoiseStream(43).normal(3, 7, 0));
    double s = 0.0;
    double s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = a.normal(static_cast<std::uint64_t>(i), 0, 0);
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform(static_cast<std::uint64_t>(i), 1, 0);
        EXPECT_GT(u, 0.0);
        EXPECT_LE(u, 1.0);
    }
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
}

TEST(Parallel, StableSumIndependentOfThreads) {
    std::vector<double> v(10000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::sin(static_cast<double>(i)) * 1e3 + 1e-3;
    }
    const double s = stable_sum(v);
    std::vector<double> out1(v.size());
    std::vector<double> out4(v.size());
    parallel_for(v.size(), 100, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out1[i] = 2 * v[i];
    }, 1);
    parallel_for(v.size(), 100, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out4[i] = 2 * v[i];
    }, 4);
    EXPECT_EQ(out1, out4);
    EXPECT_EQ(stable_sum(out1), 2 * s);
    EXPECT_THROW(parallel_for(10, 1, [](std::size_t b, std::size_t) {
                     if (b == 3) throw std::runtime_error("chunk 3");
                 }, 4),
                 std::runtime_error);
}

TEST(Parallel, ThreadCountReadsEnvironment) {
    setenv("NLSEM_THREADS", "3", 1);
    EXPECT_EQ(thread_count(), 3u);
    unsetenv("NLSEM_THREADS");
    EXPECT_GE(thread_count(), 1u);
}

TEST(Simulate, DeterministicDriftIsExact) {
    const TimeGrid g(0.0, 1.0, 100);
    const auto u = single(constant_field(vec1(1.0), mat1(0.0)));
    SimConfig cfg;
    cfg.n_paths = 4;
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg);
    for (std::size_t p = 0; p < 4; ++p) {
        EXPECT_NEAR(b.terminal_state(p)[0], 1.0, 1e-13);
    }
}

TEST(Simulate, MatchesHandWrittenEuler) {
    // Euler for dX = -X dt + 0.5 dW driven by the same counter-based noise
    const TimeGrid g(0.0, 1.0, 25);
    const auto u = single(markov_field(
        "ou", [](std::span<const double>, double, double x) { return -x; },
        [](std::span<const double>, double, double) { return 0.5; }));
    SimConfig cfg;
    cfg.n_paths = 10;
    cfg.seed = 99;
    cfg.keep_paths = true;
    const SampleBatch b = simulate_controlled(start_at(g, 1.0), Policy::constant(0), u, cfg);
    const NoiseStream noise(99);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        double x = 1.0;
        for (std::size_t k = 0; k < g.steps(); ++k) {
            x = x - x * g.dt() + 0.5 * std::sqrt(g.dt()) * noise.normal(p, k, 0);
            EXPECT_NEAR(b.path(p).at(k + 1, 0), x, 1e-13);
        }
        EXPECT_NEAR(b.terminal_state(p)[0], x, 1e-13);
    }
}

TEST(Simulate, PrefixIsKeptAndStartMidway) {
    const TimeGrid g(0.0, 1.0, 10);
    const DiscretePath w = DiscretePath::scalar(g, [](double t) { return std::cos(t); });
    const auto u = single(constant_field(vec1(2.0), mat1(0.0)));
    SimConfig cfg;
    cfg.n_paths = 2;
    cfg.keep_paths = true;
    const SampleBatch b = simulate_controlled(PathPair(0.4, w), Policy::constant(0), u, cfg);
    const DiscretePath p = b.path(1);
    for (std::size_t k = 0; k <= 4; ++k) {
        EXPECT_EQ(p.at(k, 0), w.at(k, 0));
    }
    EXPECT_NEAR(p.at(10, 0), std::cos(0.4) + 2.0 * 0.6, 1e-13);
}

TEST(Simulate, StopTimeHoldsTheValue) {
    const TimeGrid g(0.0, 1.0, 10);
    const auto u = single(constant_field(vec1(1.0), mat1(0.0)));
    SimConfig cfg;
    cfg.n_paths = 2;
    cfg.keep_paths = true;
    cfg.stop_time = 0.5;
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg);
    EXPECT_NEAR(b.terminal_state(0)[0], 0.5, 1e-14);
    EXPECT_NEAR(b.path(0).at(10, 0), 0.5, 1e-14);
}

TEST(Simulate, SignedSqrtOdeFromPositiveStart) {
    // x' = sqrt(x), x(0) = 0.01 has the solution (0.1 + t/2)^2, 0.36 at t = 1
    const TimeGrid g(0.0, 1.0, 200);
    const auto u = single(signed_sqrt_field());
    SimConfig cfg;
    cfg.n_paths = 2;
    const SampleBatch b = simulate_controlled(start_at(g, 0.01), Policy::constant(0), u, cfg);
    EXPECT_NEAR(b.terminal_state(0)[0], 0.36, 0.005);
    const SampleBatch zero = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg);
    EXPECT_EQ(zero.terminal_state(0)[0], 0.0);
}

TEST(Simulate, CallOnScaledBrownianMotion) {
    // E (2 W_1)^+ = 2 / sqrt(2 pi)
    const TimeGrid g(0.0, 1.0, 10);
    const auto u = single(constant_field(vec1(0.0), mat1(2.0)));
    SimConfig cfg;
    cfg.n_paths = 100000;
    cfg.seed = 5;
    const PathFunctional call = [](const PathView& p) { return std::max(p.current(0), 0.0); };
    const std::vector<PathFunctional> fs = {call, terminal};
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg, fs);
    const Estimate e = estimate_expectation(b, 0);
    const double exact = 2.0 / std::sqrt(2.0 * std::numbers::pi);
    EXPECT_NEAR(e.mean, exact, 4.0 * e.std_error);
    EXPECT_NEAR(e.std_error, std::sqrt((2.0 - exact * exact) / 100000.0), 1e-4);
    EXPECT_NEAR(estimate_expectation(b, 1).mean, 0.0, 0.03);
}

TEST(Simulate, AntitheticPairsMirror) {
    const TimeGrid g(0.0, 1.0, 10);
    const auto u = single(constant_field(vec1(0.0), mat1(1.0)));
    SimConfig cfg;
    cfg.n_paths = 1000;
    cfg.antithetic = true;
    const std::vector<PathFunctional> fs = {terminal};
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg, fs);
    for (std::size_t p = 0; p < cfg.n_paths; p += 2) {
        EXPECT_NEAR(b.terminal_state(p)[0], -b.terminal_state(p + 1)[0], 1e-14);
    }
    const Estimate e = estimate_expectation(b, 0);
    EXPECT_NEAR(e.mean, 0.0, 1e-14);
    cfg.n_paths = 3;
    EXPECT_THROW(simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg),
                 std::invalid_argument);
}

TEST(Simulate, ThreadCountDoesNotChangeResults) {
    const TimeGrid g(0.0, 1.0, 20);
    const auto u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    const Policy pol = Policy::open_loop({0, 8, 4, 2}, 5);
    SimConfig cfg;
    cfg.n_paths = 1000;
    cfg.seed = 77;
    cfg.threads = 1;
    const SampleBatch a = simulate_controlled(start_at(g, 0.0), pol, u, cfg);
    cfg.threads = 4;
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), pol, u, cfg);
    EXPECT_EQ(a.terminal, b.terminal);
    EXPECT_EQ(a.running_sup, b.running_sup);
}

TEST(Simulate, DoobBoundOnRunningSup) {
    // E sup_{s<=1} |W_s|^2 <= 4 E W_1^2 = 4; the moment estimate is stable
    const TimeGrid g(0.0, 1.0, 50);
    const auto u = single(constant_field(vec1(0.0), mat1(1.0)));
    SimConfig cfg;
    cfg.n_paths = 20000;
    cfg.seed = 8;
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg);
    const MomentReport m = moment_check(b, 1);
    EXPECT_TRUE(m.pass);
    EXPECT_LE(m.estimate, 4.0);
    EXPECT_GE(m.estimate, 1.0);
    const MomentReport m2 = moment_check(b, 2);
    EXPECT_TRUE(m2.finite);
}

TEST(Simulate, InvalidPolicyAndNonFiniteStateAreReported) {
    const TimeGrid g(0.0, 1.0, 10);
    const auto u = single(constant_field(vec1(0.0), mat1(1.0)));
    SimConfig cfg;
    cfg.n_paths = 2;
    EXPECT_THROW(simulate_controlled(start_at(g, 0.0), Policy::constant(3), u, cfg), SimulationError);
    const auto blowup = single(markov_field(
        "blowup", [](std::span<const double>, double, double x) { return 1e300 * (1.0 + x * x); },
        [](std::span<const double>, double, double) { return 0.0; }));
    EXPECT_THROW(simulate_controlled(start_at(g, 1.0), Policy::constant(0), blowup, cfg),
                 SimulationError);
}

TEST(Summarize, MeanAndStandardError) {
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    const Estimate e = summarize(x);
    EXPECT_DOUBLE_EQ(e.mean, 2.5);
    EXPECT_NEAR(e.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    const Estimate pairs = summarize(x, true);
    EXPECT_DOUBLE_EQ(pairs.mean, 2.5);
    EXPECT_NEAR(pairs.std_error, std::sqrt(2.0 / 2.0), 1e-15);
}

TEST(WritePathsCsv, Rows) {
    const TimeGrid g(0.0, 1.0, 2);
    const auto u = single(constant_field(vec1(1.0), mat1(0.0)));
    SimConfig cfg;
    cfg.n_paths = 2;
    cfg.keep_paths = true;
    const SampleBatch b = simulate_controlled(start_at(g, 0.0), Policy::constant(0), u, cfg);
    std::ostringstream out;
    write_paths_csv(out, b);
    EXPECT_EQ(out.str(), "path_id,t,x_1\n0,0,0\n0,0.5,0.5\n0,1,1\n1,0,0\n1,0.5,0.5\n1,1,1\n");
}
