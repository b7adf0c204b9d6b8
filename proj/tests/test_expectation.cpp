#include "nlsem/expectation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace nlsem;

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

PathPair start_at(const TimeGrid& g, double x0, double t = 0.0) {
    return PathPair(t, DiscretePath::scalar(g, [x0](double) { return x0; }));
}

double call(const PathView& p) { return std::max(p.current(0), 0.0); }
double terminal(const PathView& p) { return p.current(0); }

EngineConfig small_engine(std::size_t paths, std::uint64_t seed = 11) {
    EngineConfig cfg;
    cfg.n_paths = paths;
    cfg.seed = seed;
    cfg.epochs = 2;
    cfg.random_restarts = 1;
    cfg.threads = 1;
    return cfg;
}

UncertaintySet drift_grid_field() {
    // b in {-1, 0, 1}, sigma = 1
    return {ControlSet::finite({{-1.0}, {0.0}, {1.0}}),
            markov_field("drift-grid", [](std::span<const double> f, double, double) { return f[0]; },
                         [](std::span<const double>, double, double) { return 1.0; })};
}

} // namespace

TEST(Optimizer, NamesRoundTrip) {
    for (auto o : {Optimizer::exhaustive, Optimizer::coordinate_ascent, Optimizer::extremal_shortcut}) {
        EXPECT_EQ(parse_optimizer(to_string(o)), o);
    }
    for (auto c : {PolicyClass::open_loop, PolicyClass::feedback}) {
        EXPECT_EQ(parse_policy_class(to_string(c)), c);
    }
    EXPECT_ANY_THROW(parse_optimizer("simplex"));
}

TEST(Enumeration, CountsAndCap) {
    EXPECT_EQ(open_loop_count(3, 2), 9u);
    EXPECT_EQ(open_loop_count(10, 30), std::numeric_limits<std::size_t>::max());
    const auto all = enumerate_open_loop(3, 2, 10, 100);
    ASSERT_EQ(all.size(), 9u);
    EXPECT_EQ(all.front().open_loop_controls(), (std::vector<std::size_t>{0, 0}));
    EXPECT_EQ(all[5].open_loop_controls(), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(all.back().epoch_length(), 5u);
    EXPECT_THROW(enumerate_open_loop(9, 6, 60, 100000), BudgetError);
}

TEST(UpperExpectation, SingletonGaussianCall) {
    const TimeGrid g(0.0, 1.0, 20);
    const UncertaintySet u = interval_field(0.0, 0.0, 1.0, 1.0, 1);
    const ValueEstimate v = upper_expectation(start_at(g, 0.0), call, u, small_engine(40000));
    EXPECT_NEAR(v.value, kInvSqrt2Pi, 3.0 * v.std_error);
    // singleton reduction: identical to plain Monte Carlo of the only policy
    const Estimate plain =
        evaluate_policy(start_at(g, 0.0), call, u, Policy::constant(0), 40000, 11, false, 1);
    EXPECT_EQ(v.value, plain.mean);
    EXPECT_EQ(v.std_error, plain.std_error);
}

TEST(UpperExpectation, DriftUncertaintyAttainsUpperEndpoint) {
    const TimeGrid g(0.0, 1.0, 20);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 1.0, 3, 1);
    const ValueEstimate v = upper_expectation(start_at(g, 0.0), terminal, u, small_engine(10000));
    EXPECT_NEAR(v.value, 1.0, std::max(0.01, 3.0 * v.std_error));
    for (std::size_t c : v.policy.open_loop_controls()) {
        EXPECT_EQ(u.controls.split(c).first, 2u);
    }
}

TEST(UpperExpectation, VolatilityUncertaintyAttainsUpperEndpoint) {
    const TimeGrid g(0.0, 1.0, 20);
    const UncertaintySet u = interval_field(0.0, 0.0, 1.0, 4.0, 1, 3);
    const ValueEstimate v = upper_expectation(start_at(g, 0.0), call, u, small_engine(20000));
    EXPECT_NEAR(v.value, 2.0 * kInvSqrt2Pi, std::max(0.02 * 2.0 * kInvSqrt2Pi, 3.0 * v.std_error));
}

TEST(UpperExpectation, TerminalConditionIsExact) {
    const TimeGrid g(0.0, 1.0, 10);
    const DiscretePath w = DiscretePath::scalar(g, [](double t) { return std::sin(5 * t); });
    const PathFunctional max_of = [](const PathView& p) {
        double m = p.at(0, 0);
        for (std::size_t k = 0; k <= p.last_index(); ++k) {
            m = std::max(m, p.at(k, 0));
        }
        return m;
    };
    const ValueEstimate v = upper_expectation(PathPair(1.0, w), max_of, interval_field(-1, 1, 1, 4, 3),
                                              small_engine(100));
    EXPECT_EQ(v.value, max_of(w.view()));
    EXPECT_EQ(v.std_error, 0.0);
    EXPECT_EQ(v.trace.evaluations, 0u);
}

TEST(UpperExpectation, TranslationAndScalingArePerPolicyExact) {
    const TimeGrid g(0.0, 1.0, 12);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    EngineConfig cfg = small_engine(2000);
    cfg.optimizer = Optimizer::exhaustive;
    const auto s = start_at(g, 0.0);
    const ValueEstimate base = upper_expectation(s, call, u, cfg);
    const ValueEstimate shifted =
        upper_expectation(s, [](const PathView& p) { return call(p) + 0.75; }, u, cfg);
    const ValueEstimate scaled =
        upper_expectation(s, [](const PathView& p) { return 3.0 * call(p); }, u, cfg);
    EXPECT_NEAR(shifted.value, base.value + 0.75, 1e-12);
    EXPECT_NEAR(scaled.value, 3.0 * base.value, 1e-12);
    EXPECT_EQ(shifted.policy, base.policy);
    EXPECT_EQ(scaled.policy, base.policy);
}

TEST(UpperExpectation, SubadditiveAndMonotone) {
    const TimeGrid g(0.0, 1.0, 12);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    EngineConfig cfg = small_engine(2000);
    cfg.optimizer = Optimizer::exhaustive;
    const auto s = start_at(g, 0.0);
    const PathFunctional put = [](const PathView& p) { return std::max(-p.current(0), 0.0); };
    const PathFunctional sum = [&](const PathView& p) { return call(p) + put(p); };
    const ValueEstimate a = upper_expectation(s, call, u, cfg);
    const ValueEstimate b = upper_expectation(s, put, u, cfg);
    const ValueEstimate ab = upper_expectation(s, sum, u, cfg);
    EXPECT_LE(ab.value, a.value + b.value + 1e-12);
    const PathFunctional smaller = [](const PathView& p) { return std::max(p.current(0) - 0.5, 0.0); };
    EXPECT_LE(upper_expectation(s, smaller, u, cfg).value, a.value + 1e-12);
}

TEST(UpperExpectation, EnlargingTheControlSetNeverDecreases) {
    const TimeGrid g(0.0, 1.0, 8);
    const auto s = start_at(g, 0.0);
    const PathFunctional psi = [](const PathView& p) { return std::cos(p.current(0)); };
    EngineConfig cfg = small_engine(2000);
    cfg.optimizer = Optimizer::exhaustive;
    const UncertaintySet coarse = interval_field(-1.0, 1.0, 1.0, 4.0, 2); // endpoints only
    const UncertaintySet fine = interval_field(-1.0, 1.0, 1.0, 4.0, 3);   // adds midpoints
    const ValueEstimate vc = upper_expectation(s, psi, coarse, cfg);
    const ValueEstimate vf = upper_expectation(s, psi, fine, cfg);
    EXPECT_GE(vf.value, vc.value);
}

TEST(UpperExpectation, FeedbackAtLeastOpenLoop) {
    const TimeGrid g(0.0, 1.0, 8);
    const auto s = start_at(g, 0.0);
    const PathFunctional psi = [](const PathView& p) { return std::cos(p.current(0)); };
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 2);
    EngineConfig cfg = small_engine(2000);
    const ValueEstimate open = upper_expectation(s, psi, u, cfg);
    cfg.policy_class = PolicyClass::feedback;
    cfg.feedback_buckets = 3;
    const Policy warm[] = {open.policy};
    const ValueEstimate fb = upper_expectation(s, psi, u, cfg, warm);
    EXPECT_GE(fb.value, open.value);
}

TEST(ExtremalPolicy, IntervalPicksUpperEndpoints) {
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    const Policy p = extremal_policy(u);
    const TimeGrid g(0.0, 1.0, 4);
    for (double x : {-2.0, 0.0, 3.0}) {
        const DiscretePath w = DiscretePath::scalar(g, [x](double) { return x; });
        for (std::size_t k = 0; k < g.steps(); ++k) {
            const PathView prefix = w.prefix(k);
            const PolicyContext ctx{k, k, g.time(k), prefix, std::abs(x)};
            EXPECT_EQ(p.control(ctx), u.controls.index(2, 2));
        }
    }
    EXPECT_THROW(extremal_policy(drift_grid_field()), std::invalid_argument);
}

TEST(ExtremalPolicy, StateDependentUpperBound) {
    IntervalBounds bounds;
    bounds.b_lo = [](double, const PathView& w) { return -1.0 - std::abs(w.current(0)); };
    bounds.b_hi = [](double, const PathView& w) { return -std::abs(w.current(0)); };
    bounds.a_lo = [](double, const PathView&) { return 1.0; };
    bounds.a_hi = [](double, const PathView&) { return 2.0; };
    bounds.markovian = true;
    const UncertaintySet u = interval_field(bounds, 3);
    const Policy p = extremal_policy(u);
    const TimeGrid g(0.0, 1.0, 4);
    for (double x : {-1.5, 0.0, 0.7}) {
        const DiscretePath w = DiscretePath::scalar(g, [x](double) { return x; });
        const PathView prefix = w.prefix(2);
        const PolicyContext ctx{2, 2, 0.5, prefix, std::abs(x)};
        EXPECT_EQ(u.controls.split(p.control(ctx)).first, 2u);
    }
}

TEST(ExtremalPolicy, MatchesExhaustiveArgmaxForIncreasingConvexPayoff) {
    // two steps, three drift controls, phi(x) = x^2 1{x > 0} + x
    const TimeGrid g(0.0, 1.0, 2);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 1.0, 3, 1);
    const PathFunctional phi = [](const PathView& p) {
        const double x = p.current(0);
        return (x > 0.0 ? x * x : 0.0) + x;
    };
    EngineConfig cfg = small_engine(20000);
    cfg.optimizer = Optimizer::exhaustive;
    const auto s = start_at(g, 0.0);
    const ValueEstimate v = upper_expectation(s, phi, u, cfg);
    EXPECT_EQ(v.policy.open_loop_controls(), (std::vector<std::size_t>{2, 2}));
    // independent enumeration over all nine policies
    double best = -INFINITY;
    std::vector<std::size_t> arg;
    for (const auto& p : enumerate_open_loop(3, 2, 2, 100)) {
        const double m = evaluate_policy(s, phi, u, p, 20000, cfg.seed, false, 1).mean;
        if (m > best) {
            best = m;
            arg = p.open_loop_controls();
        }
    }
    EXPECT_EQ(arg, v.policy.open_loop_controls());
    const Estimate extremal = evaluate_policy(s, phi, u, extremal_policy(u), 20000, cfg.seed, false, 1);
    EXPECT_EQ(extremal.mean, best);
}

TEST(UpperExpectation, ThreadsDoNotChangeTheValue) {
    const TimeGrid g(0.0, 1.0, 10);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    EngineConfig cfg = small_engine(3000);
    cfg.pilot_paths = 1000;
    const ValueEstimate a = upper_expectation(start_at(g, 0.0), call, u, cfg);
    cfg.threads = 4;
    const ValueEstimate b = upper_expectation(start_at(g, 0.0), call, u, cfg);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
    EXPECT_EQ(a.policy.summary(), b.policy.summary());
}

TEST(Dpp, DeterministicDynamicsGiveZeroGap) {
    const TimeGrid g(0.0, 1.0, 8);
    const UncertaintySet u{ControlSet::finite({{-1.0}, {0.0}, {1.0}}),
                           markov_field("ode", [](std::span<const double> f, double, double) { return f[0]; },
                                        [](std::span<const double>, double, double) { return 0.0; })};
    DppConfig cfg;
    cfg.engine = small_engine(16);
    cfg.engine.optimizer = Optimizer::exhaustive;
    const DppReport r = dpp_check(start_at(g, 0.25), 0.5, terminal, u, cfg);
    EXPECT_NEAR(r.lhs, 1.25, 1e-12);
    EXPECT_NEAR(r.rhs, 1.25, 1e-12);
    EXPECT_LE(r.gap, 1e-12);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.inner_paths, 4u);
    EXPECT_THROW(dpp_check(start_at(g, 0.0), 1.0, terminal, u, cfg), std::invalid_argument);
}

TEST(Dpp, SingletonTowerProperty) {
    const TimeGrid g(0.0, 1.0, 10);
    const UncertaintySet u = interval_field(0.0, 0.0, 1.0, 1.0, 1);
    DppConfig cfg;
    cfg.engine = small_engine(2500);
    cfg.inner_paths = 400;
    const DppReport r = dpp_check(start_at(g, 0.0), 0.5, call, u, cfg);
    EXPECT_TRUE(r.pass) << r.gap << " vs " << r.combined_std_error;
    EXPECT_NEAR(r.lhs, kInvSqrt2Pi, 4.0 * r.lhs_std_error);
}

TEST(Dpp, BudgetIsEnforced) {
    const TimeGrid g(0.0, 1.0, 10);
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    DppConfig cfg;
    cfg.engine = small_engine(100000);
    cfg.max_step_evaluations = 1e6;
    EXPECT_THROW(dpp_check(start_at(g, 0.0), 0.5, call, u, cfg), BudgetError);
}

TEST(HjbOracle, BachelierCall) {
    const UncertaintySet u = interval_field(0.0, 0.0, 1.0, 1.0, 1);
    HjbGrid grid{-10.0, 10.0, 401, 400};
    const ValueSurface v = markov_hjb_oracle(u, [](double x) { return std::max(x, 0.0); }, 0.0, 1.0, grid);
    EXPECT_NEAR(v(0.0, 0.0), kInvSqrt2Pi, 0.01 * kInvSqrt2Pi);
    EXPECT_NEAR(v(0.5, 0.0), std::sqrt(0.5) * kInvSqrt2Pi, 0.01 * kInvSqrt2Pi);
    EXPECT_DOUBLE_EQ(v(1.0, 2.0), 2.0);
}

TEST(HjbOracle, GHeatEqualsUpperVolatilitySolve) {
    HjbGrid grid{-10.0, 10.0, 401, 1};
    const UncertaintySet g_heat = interval_field(0.0, 0.0, 1.0, 4.0, 1, 3);
    const UncertaintySet upper = interval_field(0.0, 0.0, 4.0, 4.0, 1);
    grid.n_t = hjb_required_steps(g_heat, 0.0, 1.0, grid);
    EXPECT_GE(grid.n_t, 1600u);
    const auto payoff = [](double x) { return std::max(x, 0.0); };
    const ValueSurface a = markov_hjb_oracle(g_heat, payoff, 0.0, 1.0, grid);
    const ValueSurface b = markov_hjb_oracle(upper, payoff, 0.0, 1.0, grid);
    for (std::size_t i = 100; i < 300; i += 20) {
        EXPECT_NEAR(a.at(0, i), b.at(0, i), 1e-12);
    }
    EXPECT_NEAR(a(0.0, 0.0), 2.0 * kInvSqrt2Pi, 0.01);
}

TEST(HjbOracle, AffinePayoffUnderDriftUncertainty) {
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 1.0, 3, 1);
    HjbGrid grid{-10.0, 10.0, 401, 1};
    grid.n_t = hjb_required_steps(u, 0.0, 1.0, grid);
    const ValueSurface v = markov_hjb_oracle(u, [](double x) { return x; }, 0.0, 1.0, grid);
    for (double t : {0.0, 0.5}) {
        for (double x : {-2.0, 0.0, 1.5}) {
            EXPECT_NEAR(v(t, x), x + (1.0 - t), 0.01 * std::max(1.0, std::abs(x + 1.0 - t)));
        }
    }
}

TEST(HjbOracle, RefusesCflViolation) {
    const UncertaintySet u = interval_field(0.0, 0.0, 1.0, 4.0, 1, 3);
    const HjbGrid grid{-10.0, 10.0, 401, 100};
    try {
        markov_hjb_oracle(u, [](double x) { return x; }, 0.0, 1.0, grid);
        FAIL() << "expected CflError";
    } catch (const CflError& e) {
        EXPECT_EQ(e.required_steps(), hjb_required_steps(u, 0.0, 1.0, grid));
        EXPECT_GT(e.required_steps(), 100u);
    }
}

TEST(HolderProbe, IdenticalPairsAreExcluded) {
    const TimeGrid g(0.0, 1.0, 4);
    const auto s = start_at(g, 0.0);
    const std::pair<PathPair, PathPair> pairs[] = {{s, s}, {s, start_at(g, 0.5)}};
    HolderProbeConfig cfg;
    cfg.engine = small_engine(200);
    cfg.levels = 2;
    const HolderReport r = holder_modulus_probe(
        pairs, call, [](std::size_t n) { return interval_field(-1.0, 1.0, 1.0, 2.0, n); }, cfg);
    EXPECT_EQ(r.excluded_pairs, 1u);
    ASSERT_EQ(r.levels.size(), 2u);
    EXPECT_TRUE(std::isnan(r.levels[0].ratios[0]));
    EXPECT_TRUE(std::isfinite(r.levels[0].max_ratio));
    EXPECT_EQ(r.levels[1].n_controls, 5u);
    EXPECT_EQ(r.levels[1].refinement, 2u);
}

TEST(Semicontinuity, ConstantSequenceHasNoGap) {
    const TimeGrid g(0.0, 1.0, 8);
    const auto s = start_at(g, 0.2);
    const std::vector<PathPair> seq(4, s);
    const SemicontinuityReport r =
        semicontinuity_probe(seq, s, call, interval_field(-1.0, 1.0, 1.0, 2.0, 2), small_engine(500), 0.05);
    EXPECT_EQ(r.gap, 0.0);
    EXPECT_FALSE(r.lower_semicontinuity_failure);
    for (double d : r.distances) {
        EXPECT_EQ(d, 0.0);
    }
}

TEST(Semicontinuity, SignedSqrtCounterexample) {
    const TimeGrid g(0.0, 1.0, 200);
    const UncertaintySet u{ControlSet::finite({{0.0}}), signed_sqrt_field()};
    const PathFunctional clamp = [](const PathView& p) { return std::clamp(p.current(0), -1.0, 1.0); };
    std::vector<PathPair> seq;
    for (double n : {1e2, 1e4, 1e6, 1e8}) {
        seq.push_back(start_at(g, -1.0 / n));
    }
    // the Euler scheme holds 0 at 0, so the limit value is 0 rather than +0.25
    const SemicontinuityReport r =
        semicontinuity_probe(seq, start_at(g, 0.0), clamp, u, small_engine(2), 0.05);
    EXPECT_EQ(r.limit_value, 0.0);
    EXPECT_NEAR(r.sequence_values.back(), -0.25, 0.01);
    EXPECT_TRUE(r.lower_semicontinuity_failure);
    EXPECT_NEAR(r.gap, -0.25, 0.01);
}
