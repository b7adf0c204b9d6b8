#include "nlsem/pathspace.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace nlsem;

namespace {

DiscretePath random_path(const TimeGrid& g, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(g.knots() * d);
    for (auto& x : v) {
        x = n(rng);
    }
    return DiscretePath(g, d, std::move(v));
}

DiscretePath identity_path(const TimeGrid& g) {
    return DiscretePath::scalar(g, [](double t) { return t; });
}

} // namespace

TEST(TimeGrid, KnotsAndAlignment) {
    const TimeGrid g(0.0, 1.0, 10);
    EXPECT_EQ(g.knots(), 11u);
    EXPECT_DOUBLE_EQ(g.dt(), 0.1);
    EXPECT_EQ(g.time(10), 1.0);
    EXPECT_EQ(g.index_of(0.3), 3u);
    EXPECT_EQ(g.index_of(1.0), 10u);
    EXPECT_THROW(g.index_of(0.35), GridAlignmentError);
    EXPECT_THROW(g.index_of(1.1), GridAlignmentError);
    EXPECT_THROW(TimeGrid(1.0, 1.0, 4), std::invalid_argument);
    EXPECT_THROW(TimeGrid(0.0, 1.0, 0), std::invalid_argument);
    EXPECT_EQ(g.refined(4).steps(), 40u);
}

TEST(DiscretePath, RejectsNonFiniteValuesAndBadShapes) {
    const TimeGrid g(0.0, 1.0, 2);
    EXPECT_THROW(DiscretePath(g, 1, {0.0, NAN, 1.0}), std::invalid_argument);
    EXPECT_THROW(DiscretePath(g, 1, {0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(DiscretePath(g, 5, std::vector<double>(15, 0.0)), std::invalid_argument);
    EXPECT_THROW(PathPair(0.25, DiscretePath(g, 1, {0.0, 0.0, 0.0})), GridAlignmentError);
}

TEST(Stop, Examples) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(1);
    const DiscretePath w = random_path(g, 2, rng);
    EXPECT_EQ(stop(w, 1.0), w);
    const double c[] = {2.5};
    const DiscretePath constant = DiscretePath::constant(g, c);
    EXPECT_EQ(stop(constant, 0.3), constant);
    const DiscretePath r = stop(identity_path(g), 0.5);
    for (std::size_t k = 0; k < g.knots(); ++k) {
        EXPECT_DOUBLE_EQ(r.at(k, 0), std::min(g.time(k), 0.5));
    }
    EXPECT_THROW(stop(w, 0.55), GridAlignmentError);
}

TEST(Stop, Idempotent) {
    const TimeGrid g(0.0, 2.0, 16);
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const DiscretePath w = random_path(g, 1 + trial % 3, rng);
        const double t = g.time(static_cast<std::size_t>(rng() % g.knots()));
        EXPECT_EQ(stop(stop(w, t), t), stop(w, t));
    }
}

TEST(ConcatFreeze, Examples) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(3);
    const DiscretePath w = random_path(g, 1, rng);
    for (std::size_t k = 0; k < g.knots(); ++k) {
        const DiscretePath self = concat_freeze(w, g.time(k), w);
        for (std::size_t j = 0; j < g.knots(); ++j) {
            EXPECT_NEAR(self.at(j, 0), w.at(j, 0), 1e-15);
        }
    }
    const DiscretePath zero = DiscretePath::scalar(g, [](double) { return 0.0; });
    const DiscretePath r = concat_freeze(zero, 0.5, identity_path(g));
    for (std::size_t k = 0; k < g.knots(); ++k) {
        const double s = g.time(k);
        EXPECT_NEAR(r.at(k, 0), s < 0.5 ? 0.0 : s - 0.5, 1e-15);
    }
}

TEST(ConcatFreeze, RandomSamplesAgreeWithFormula) {
    const TimeGrid g(0.0, 1.0, 12);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const DiscretePath w = random_path(g, 2, rng);
        const DiscretePath v = random_path(g, 2, rng);
        const std::size_t kt = rng() % g.knots();
        const DiscretePath r = concat_freeze(w, g.time(kt), v);
        for (std::size_t k = 0; k < g.knots(); ++k) {
            for (std::size_t i = 0; i < 2; ++i) {
                const double expected =
                    k < kt ? w.at(k, i) : w.at(kt, i) + v.at(k, i) - v.at(kt, i);
                EXPECT_NEAR(r.at(k, i), expected, 1e-14);
            }
        }
        EXPECT_DOUBLE_EQ(r.at(kt, 0), w.at(kt, 0));
    }
    const TimeGrid other(0.0, 1.0, 6);
    EXPECT_THROW(concat_freeze(random_path(g, 1, rng), 0.5, random_path(other, 1, rng)),
                 GridMismatchError);
}

TEST(ConcatShift, Examples) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(5);
    const DiscretePath w = random_path(g, 1, rng);
    const DiscretePath tail = time_shift(random_path(g, 1, rng), 0.4);
    const DiscretePath r = concat_shift(w, 0.4, tail);
    EXPECT_DOUBLE_EQ(r.at(4, 0), w.at(4, 0));
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(r.at(k, 0), w.at(k, 0));
    }
    for (std::size_t k = 4; k < g.knots(); ++k) {
        EXPECT_NEAR(r.at(k, 0), w.at(4, 0) + tail.at(k - 4, 0) - tail.at(0, 0), 1e-14);
    }
    // t = 0 with w'(0) = w(0) returns w'
    std::vector<double> vals(g.knots());
    for (std::size_t k = 0; k < g.knots(); ++k) {
        vals[k] = k == 0 ? w.at(0, 0) : std::sin(static_cast<double>(k));
    }
    const DiscretePath v(g, 1, vals);
    const DiscretePath same = concat_shift(w, 0.0, v);
    for (std::size_t k = 0; k < g.knots(); ++k) {
        EXPECT_NEAR(same.at(k, 0), v.at(k, 0), 1e-14);
    }
}

TEST(ConcatShift, TooLongTailIsRejectedShortTailIsHeld) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(6);
    const DiscretePath w = random_path(g, 1, rng);
    EXPECT_THROW(concat_shift(w, 0.5, random_path(TimeGrid(0.0, 0.6, 6), 1, rng)),
                 GridMismatchError);
    EXPECT_THROW(concat_shift(w, 0.5, random_path(TimeGrid(0.0, 0.5, 10), 1, rng)),
                 GridMismatchError);
    const DiscretePath shorter = random_path(TimeGrid(0.0, 0.2, 2), 1, rng);
    const DiscretePath r = concat_shift(w, 0.5, shorter);
    const double end = w.at(5, 0) + shorter.at(2, 0) - shorter.at(0, 0);
    for (std::size_t k = 7; k < g.knots(); ++k) {
        EXPECT_DOUBLE_EQ(r.at(k, 0), end);
    }
}

TEST(ConcatShift, WithTimeShiftMatchesConcatFreeze) {
    const TimeGrid g(0.0, 1.0, 20);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const DiscretePath w = random_path(g, 2, rng);
        const DiscretePath x = random_path(g, 2, rng);
        const double t = g.time(rng() % g.steps());
        const DiscretePath shifted = concat_shift(w, t, time_shift(x, t));
        const DiscretePath frozen = concat_freeze(w, t, x);
        for (std::size_t k = 0; k < g.knots(); ++k) {
            for (std::size_t i = 0; i < 2; ++i) {
                EXPECT_NEAR(shifted.at(k, i), frozen.at(k, i), 1e-13);
            }
        }
    }
}

TEST(Pseudometric, ExamplesAndAxioms) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(8);
    const DiscretePath w = random_path(g, 2, rng);
    EXPECT_EQ(pseudometric_d(PathPair(0.3, w), PathPair(0.3, w)), 0.0);
    const DiscretePath zero = DiscretePath::scalar(g, [](double) { return 0.0; });
    EXPECT_NEAR(pseudometric_d(PathPair(0.2, zero), PathPair(0.7, zero)), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(pseudometric_d(PathPair(1.0, identity_path(g)), PathPair(1.0, zero)), 1.0);

    for (int trial = 0; trial < 100; ++trial) {
        auto pick = [&] {
            return PathPair(g.time(rng() % g.knots()), random_path(g, 2, rng));
        };
        const PathPair p = pick();
        const PathPair q = pick();
        const PathPair r = pick();
        EXPECT_EQ(pseudometric_d(p, q), pseudometric_d(q, p));
        EXPECT_LE(pseudometric_d(p, r), pseudometric_d(p, q) + pseudometric_d(q, r) + 1e-12);
        // only the stopped paths matter
        EXPECT_EQ(pseudometric_d(p, q),
                  pseudometric_d(PathPair(p.t, stop(p.path, p.t)), PathPair(q.t, stop(q.path, q.t))));
    }
}

TEST(SupDistance, MatchesBruteForce) {
    const TimeGrid g(0.0, 1.0, 10);
    std::mt19937_64 rng(9);
    const DiscretePath zero = DiscretePath::scalar(g, [](double) { return 0.0; });
    EXPECT_DOUBLE_EQ(sup_distance(identity_path(g), zero, 0.5), 0.5);
    for (int trial = 0; trial < 50; ++trial) {
        const DiscretePath a = random_path(g, 3, rng);
        const DiscretePath b = random_path(g, 3, rng);
        EXPECT_EQ(sup_distance(a, a, 1.0), 0.0);
        const std::size_t ku = rng() % g.knots();
        double brute = 0.0;
        for (std::size_t k = 0; k <= ku; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                s += (a.at(k, i) - b.at(k, i)) * (a.at(k, i) - b.at(k, i));
            }
            brute = std::max(brute, std::sqrt(s));
        }
        EXPECT_DOUBLE_EQ(sup_distance(a, b, g.time(ku)), brute);
    }
}

TEST(WindowIntegral, TrapezoidAndClipping) {
    const TimeGrid g(0.0, 1.0, 10);
    const DiscretePath r = identity_path(g);
    // int_0^1 s ds, exact for the trapezoid rule on a linear integrand
    EXPECT_NEAR(window_integral(r.view(), 1.0), 0.5, 1e-15);
    // window longer than the history is clipped at t0
    EXPECT_NEAR(window_integral(r.view(), 5.0), 0.5, 1e-15);
    // window ending between knots: int_{0.25}^{1} s ds
    EXPECT_NEAR(window_integral(r.view(), 0.75), 0.5 * (1.0 - 0.0625), 1e-14);
    EXPECT_EQ(window_integral(r.prefix(0), 1.0), 0.0);
    // kernel
    EXPECT_NEAR(window_integral(r.view(), 1.0, [](double) { return 2.0; }), 1.0, 1e-15);
}

TEST(Refine, LinearInterpolation) {
    const TimeGrid g(0.0, 1.0, 4);
    const DiscretePath p = DiscretePath::scalar(g, [](double t) { return t * t; });
    const DiscretePath f = refine(p, 2);
    EXPECT_EQ(f.grid().steps(), 8u);
    EXPECT_DOUBLE_EQ(f.at(2, 0), p.at(1, 0));
    EXPECT_DOUBLE_EQ(f.at(3, 0), 0.5 * (p.at(1, 0) + p.at(2, 0)));
}

TEST(WriteCsv, HeaderAndRows) {
    const TimeGrid g(0.0, 1.0, 2);
    const DiscretePath p(g, 2, {0, 1, 2, 3, 4, 5});
    std::ostringstream out;
    write_csv(out, p);
    EXPECT_EQ(out.str(), "t,x_1,x_2\n0,0,1\n0.5,2,3\n1,4,5\n");
}
