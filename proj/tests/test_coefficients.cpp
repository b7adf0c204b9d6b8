#include "nlsem/coefficients.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

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

std::vector<PathPair> gaussian_samples(const TimeGrid& g, std::size_t n, double scale,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<PathPair> out;
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> v(g.knots());
        for (auto& x : v) {
            x = normal(rng);
        }
        out.emplace_back(g.time(rng() % g.knots()), DiscretePath(g, 1, v));
    }
    return out;
}

} // namespace

TEST(ControlSet, ProductIndexing) {
    const auto grid = ControlSet::unit_grid(3);
    ASSERT_EQ(grid.size(), 3u);
    EXPECT_DOUBLE_EQ(grid[1][0], 0.5);
    const ControlSet c = ControlSet::product(grid, ControlSet::unit_grid(2));
    EXPECT_EQ(c.size(), 6u);
    EXPECT_EQ(c.drift_size(), 3u);
    EXPECT_EQ(c.vol_size(), 2u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto [di, vi] = c.split(i);
        EXPECT_EQ(c.index(di, vi), i);
        EXPECT_DOUBLE_EQ(c.point(i)[0], grid[di][0]);
        EXPECT_DOUBLE_EQ(c.point(i)[1], static_cast<double>(vi));
    }
}

TEST(IntervalField, ThreeByThreeImage) {
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    ASSERT_EQ(u.controls.size(), 9u);
    const TimeGrid g(0.0, 1.0, 4);
    const DiscretePath w = DiscretePath::scalar(g, [](double t) { return t; });
    const auto theta = theta_at(u, 0.5, w);
    const double b[] = {-1.0, 0.0, 1.0};
    const double a[] = {1.0, 2.5, 4.0};
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const auto [di, vi] = u.controls.split(i);
        EXPECT_NEAR(theta[i].drift(0), b[di], 1e-15);
        EXPECT_NEAR(theta[i].diffusion(0, 0), a[vi], 1e-14);
    }
    // vol is the square root of the diffusion
    const Mat s = u.field.vol(u.controls.point(8), 0.5, w.view());
    EXPECT_NEAR(s(0, 0), 2.0, 1e-15);
}

TEST(IntervalField, RejectsCrossedEndpoints) {
    EXPECT_ANY_THROW(interval_field(1.0, -1.0, 1.0, 4.0, 3));
    EXPECT_ANY_THROW(interval_field(-1.0, 1.0, -1.0, 4.0, 3));
    IntervalBounds crossed;
    crossed.b_lo = [](double, const PathView& w) { return w.current(0); };
    crossed.b_hi = [](double, const PathView&) { return 0.0; };
    crossed.a_lo = [](double, const PathView&) { return 1.0; };
    crossed.a_hi = [](double, const PathView&) { return 1.0; };
    const TimeGrid g(0.0, 1.0, 2);
    const std::vector<PathPair> ok = {PathPair(1.0, DiscretePath(g, 1, {0.0, -1.0, -2.0}))};
    EXPECT_NO_THROW(interval_field(crossed, 2, ok));
    const std::vector<PathPair> bad = {PathPair(1.0, DiscretePath(g, 1, {0.0, 1.0, 2.0}))};
    EXPECT_ANY_THROW(interval_field(crossed, 2, bad));
}

TEST(DelayField, WindowIntegralExample) {
    DelayKernels k;
    k.b0 = [](std::span<const double>) { return 0.0; };
    k.b1 = [](std::span<const double>, double) { return 1.0; };
    k.a0 = [](std::span<const double>) { return 1.0; };
    k.window = 1.0;
    const CoefficientField field = delay_field(k);
    const TimeGrid g(0.0, 1.0, 10);
    const DiscretePath w = DiscretePath::scalar(g, [](double t) { return t; });
    const double f[] = {0.0, 0.0};
    EXPECT_NEAR(field.drift(f, 1.0, w.view())(0), 0.5, 1e-14);
    // the drift at t reads only the prefix up to t
    EXPECT_NEAR(field.drift(f, 0.5, w.prefix(5))(0), 0.125, 1e-14);
}

TEST(DelayField, ReadsOnlyThePrefix) {
    DelayKernels k;
    k.b0 = [](std::span<const double> f) { return f[0]; };
    k.b1 = [](std::span<const double>, double s) { return std::exp(-s); };
    k.a0 = [](std::span<const double>) { return 1.0; };
    k.window = 0.3;
    const CoefficientField field = delay_field(k);
    const TimeGrid g(0.0, 1.0, 20);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    std::vector<double> v(g.knots());
    for (auto& x : v) {
        x = n(rng);
    }
    const DiscretePath w(g, 1, v);
    const DiscretePath w2 = concat_freeze(w, 0.5, DiscretePath::scalar(g, [](double t) {
                                              return 10.0 * t;
                                          }));
    const double f[] = {0.7, 0.0};
    EXPECT_EQ(field.drift(f, 0.5, w.prefix(10))(0), field.drift(f, 0.5, w2.prefix(10))(0));
}

TEST(SignedSqrt, DriftValues) {
    EXPECT_EQ(signed_sqrt_drift(0.0), 0.0);
    EXPECT_DOUBLE_EQ(signed_sqrt_drift(0.25), 0.5);
    EXPECT_DOUBLE_EQ(signed_sqrt_drift(-0.25), -0.5);
    EXPECT_DOUBLE_EQ(signed_sqrt_drift(1.0), 1.0);
    EXPECT_DOUBLE_EQ(signed_sqrt_drift(2.0), 1.5);
    EXPECT_DOUBLE_EQ(signed_sqrt_drift(-4.0), -1.75);
    const CoefficientField f = signed_sqrt_field();
    EXPECT_EQ(f.diffusion(std::span<const double>(), 0.0, DiscretePath::scalar(TimeGrid(0, 1, 1), [](double) {
                              return 0.3;
                          }).view())(0, 0),
              0.0);
}

TEST(LinearGrowth, PassesForIntervalAndFailsForSquare) {
    const TimeGrid g(0.0, 1.0, 10);
    const auto samples = gaussian_samples(g, 50, 3.0, 12);
    const UncertaintySet good = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    const ConditionReport r = check_linear_growth(good, samples);
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.max_violation, 5.0 + 1e-12);

    DeclaredConstants c;
    c.growth = 10.0;
    const UncertaintySet square{
        ControlSet::finite({{0.0}}),
        markov_field("square", [](std::span<const double>, double, double x) { return x * x; },
                     [](std::span<const double>, double, double) { return 0.0; }, c)};
    std::vector<PathPair> large;
    for (double x : {1.0, 10.0, 100.0}) {
        large.emplace_back(0.0, DiscretePath::scalar(g, [x](double) { return x; }));
    }
    const ConditionReport bad = check_linear_growth(square, large);
    EXPECT_FALSE(bad.pass);
    // ratio x^4 / (1 + x^2) grows without bound
    EXPECT_NEAR(bad.max_violation, 1e8 / (1.0 + 1e4), 1e-6);
}

TEST(Lipschitz, SignedSqrtFailsNearZero) {
    UncertaintySet u{ControlSet::finite({{0.0}}), signed_sqrt_field()};
    u.field.constants().lipschitz = 100.0;
    const TimeGrid g(0.0, 1.0, 4);
    const DiscretePath zero = DiscretePath::scalar(g, [](double) { return 0.0; });
    std::vector<LipschitzSample> samples;
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        samples.push_back({1.0, DiscretePath::scalar(g, [eps](double) { return eps; }), zero});
    }
    const ConditionReport r = check_lipschitz(u, samples);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.max_violation, 1e3, 1e-6); // sqrt(eps) / eps at eps = 1e-6
}

TEST(Lipschitz, IntervalFieldHasConstantZero) {
    const UncertaintySet u = interval_field(-1.0, 1.0, 1.0, 4.0, 3);
    const TimeGrid g(0.0, 1.0, 4);
    std::vector<LipschitzSample> samples;
    samples.push_back({0.5, DiscretePath::scalar(g, [](double t) { return t; }),
                       DiscretePath::scalar(g, [](double t) { return -t; })});
    const ConditionReport r = check_lipschitz(u, samples);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.max_violation, 0.0);
}

TEST(Convexity, IntervalImagePasses) {
    const TimeGrid g(0.0, 1.0, 4);
    const auto samples = gaussian_samples(g, 5, 1.0, 13);
    const ConditionReport r = check_convexity(interval_field(-1.0, 1.0, 1.0, 4.0, 5), samples);
    EXPECT_TRUE(r.pass) << r.max_violation;
}

TEST(Convexity, TwoPointSetFails) {
    const UncertaintySet u{
        ControlSet::finite({{0.0, 1.0}, {0.0, 4.0}}),
        markov_field("two-point", [](std::span<const double> f, double, double) { return f[0]; },
                     [](std::span<const double> f, double, double) { return std::sqrt(f[1]); })};
    const TimeGrid g(0.0, 1.0, 2);
    const std::vector<PathPair> samples = {
        PathPair(0.0, DiscretePath::scalar(g, [](double) { return 0.0; }))};
    const ConditionReport r = check_convexity(u, samples);
    EXPECT_FALSE(r.pass);
    // midpoint a = 2.5 is 1.5 away from either point; the image diameter is 3
    EXPECT_NEAR(r.max_violation, 0.5, 1e-12);
}

TEST(Convexity, CircleImageFails) {
    std::vector<std::vector<double>> angles;
    for (int k = 0; k < 16; ++k) {
        angles.push_back({2.0 * std::numbers::pi * k / 16.0});
    }
    const CoefficientField circle(
        "circle", 2, 2,
        [](std::span<const double> f, double, const PathView&) {
            Vec b(2);
            b << std::cos(f[0]), std::sin(f[0]);
            return b;
        },
        [](std::span<const double>, double, const PathView&) { return Mat(Mat::Identity(2, 2)); });
    const UncertaintySet u{ControlSet::finite(angles, true), circle};
    const TimeGrid g(0.0, 1.0, 2);
    const double zero[] = {0.0, 0.0};
    const std::vector<PathPair> samples = {PathPair(0.0, DiscretePath::constant(g, zero))};
    const ConditionReport r = check_convexity(u, samples);
    EXPECT_FALSE(r.pass);
    EXPECT_GT(r.max_violation, 0.1);
}

TEST(ThetaAt, ErrorsNameTheControl) {
    const UncertaintySet u{
        ControlSet::finite({{0.0}, {1.0}}),
        markov_field("throws",
                     [](std::span<const double> f, double, double) -> double {
                         if (f[0] > 0.5) {
                             throw std::runtime_error("boom");
                         }
                         return 0.0;
                     },
                     [](std::span<const double>, double, double) { return 1.0; })};
    const TimeGrid g(0.0, 1.0, 2);
    try {
        theta_at(u, 0.0, DiscretePath::scalar(g, [](double) { return 0.0; }));
        FAIL() << "expected an exception";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find(u.controls.label(1)), std::string::npos) << e.what();
    }
}

TEST(ConstantField, DriftAndDiffusion) {
    const CoefficientField f = constant_field(vec1(0.5), mat1(2.0));
    const TimeGrid g(0.0, 1.0, 2);
    const DiscretePath w = DiscretePath::scalar(g, [](double t) { return t; });
    const double c[] = {0.0};
    EXPECT_EQ(f.drift(c, 0.5, w.prefix(1))(0), 0.5);
    EXPECT_EQ(f.diffusion(c, 0.5, w.prefix(1))(0, 0), 4.0);
}

TEST(OperatorNorm, LargestSingularValue) {
    Mat m(2, 2);
    m << 3.0, 0.0, 4.0, 5.0;
    // singular values of [[3,0],[4,5]] are sqrt(45) and sqrt(5)
    EXPECT_NEAR(operator_norm(m), std::sqrt(45.0), 1e-12);
}
