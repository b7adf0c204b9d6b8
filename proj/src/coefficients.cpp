#include "nlsem/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nlsem {

namespace {

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

/// Image point (b, upper triangle of a) flattened.
std::vector<double> flatten(const ThetaPoint& p) {
    std::vector<double> out(p.drift.data(), p.drift.data() + p.drift.size());
    for (Eigen::Index i = 0; i < p.diffusion.rows(); ++i) {
        for (Eigen::Index j = i; j < p.diffusion.cols(); ++j) {
            out.push_back(p.diffusion(i, j));
        }
    }
    return out;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(s);
}

ThetaPoint evaluate(const CoefficientField& field, std::span<const double> f, double t,
                    const PathView& prefix) {
    return ThetaPoint{field.drift(f, t, prefix), field.diffusion(f, t, prefix)};
}

Mat scalar_mat(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
}

Vec scalar_vec(double v) {
    Vec x(1);
    x(0) = v;
    return x;
}

} // namespace

ControlSet ControlSet::finite(std::vector<std::vector<double>> points, bool convex_domain) {
    if (points.empty()) {
        throw std::invalid_argument("ControlSet: at least one control required");
    }
    const std::size_t k = points.front().size();
    for (const auto& p : points) {
        if (p.size() != k) {
            throw std::invalid_argument("ControlSet: controls must share a coordinate dimension");
        }
    }
    ControlSet set;
    set.points_ = std::move(points);
    set.convex_domain_ = convex_domain;
    return set;
}

ControlSet ControlSet::product(std::vector<std::vector<double>> drift_points,
                               std::vector<std::vector<double>> vol_points, bool convex_domain) {
    if (drift_points.empty() || vol_points.empty()) {
        throw std::invalid_argument("ControlSet: product factors must be non-empty");
    }
    ControlSet set;
    for (const auto& f0 : drift_points) {
        for (const auto& f1 : vol_points) {
            set.points_.push_back(concat(f0, f1));
        }
    }
    set.drift_ = std::move(drift_points);
    set.vol_ = std::move(vol_points);
    set.convex_domain_ = convex_domain;
    return set;
}

std::vector<std::vector<double>> ControlSet::unit_grid(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("ControlSet::unit_grid: n must be positive");
    }
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1)});
    }
    return out;
}

std::string ControlSet::label(std::size_t i) const {
    std::ostringstream out;
    out << "f[" << i << "]=(";
    const auto& p = points_.at(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
        out << (j ? "," : "") << p[j];
    }
    out << ")";
    return out.str();
}

CoefficientField::CoefficientField(std::string name, std::size_t dim, std::size_t noise_dim,
                                   DriftFn drift, VolFn vol, DeclaredConstants constants,
                                   bool markovian)
    : name_(std::move(name)), dim_(dim), noise_dim_(noise_dim), drift_(std::move(drift)),
      vol_(std::move(vol)), constants_(constants), markovian_(markovian) {
    if (dim == 0 || dim > static_cast<std::size_t>(kMaxDim) || noise_dim == 0 ||
        noise_dim > static_cast<std::size_t>(kMaxDim)) {
        throw std::invalid_argument("CoefficientField: dimensions must be in [1, 4]");
    }
    if (!drift_ || !vol_) {
        throw std::invalid_argument("CoefficientField: drift and volatility evaluators required");
    }
}

std::vector<ThetaPoint> theta_at(const UncertaintySet& u, double t, const PathView& prefix) {
    std::vector<ThetaPoint> out;
    out.reserve(u.controls.size());
    for (std::size_t i = 0; i < u.controls.size(); ++i) {
        try {
            out.push_back(evaluate(u.field, u.controls.point(i), t, prefix));
        } catch (const std::exception& e) {
            throw Error("coefficient evaluation failed at control " + u.controls.label(i) + ": " +
                        e.what());
        }
    }
    return out;
}

std::vector<ThetaPoint> theta_at(const UncertaintySet& u, double t, const DiscretePath& path) {
    return theta_at(u, t, path.prefix(path.grid().index_of(t)));
}

CoefficientField constant_field(const Vec& drift, const Mat& vol, DeclaredConstants constants) {
    if (vol.rows() != drift.size()) {
        throw std::invalid_argument("constant_field: volatility rows must match drift dimension");
    }
    return CoefficientField(
        "constant", static_cast<std::size_t>(drift.size()), static_cast<std::size_t>(vol.cols()),
        [drift](std::span<const double>, double, const PathView&) { return drift; },
        [vol](std::span<const double>, double, const PathView&) { return vol; }, constants, true);
}

CoefficientField markov_field(std::string name,
                              std::function<double(std::span<const double>, double, double)> drift,
                              std::function<double(std::span<const double>, double, double)> vol,
                              DeclaredConstants constants) {
    return CoefficientField(
        std::move(name), 1, 1,
        [drift](std::span<const double> f, double t, const PathView& w) {
            return scalar_vec(drift(f, t, w.current(0)));
        },
        [vol](std::span<const double> f, double t, const PathView& w) {
            return scalar_mat(vol(f, t, w.current(0)));
        },
        constants, true);
}

UncertaintySet interval_field(const IntervalBounds& bounds, std::size_t n_controls,
                              std::span<const PathPair> validation, DeclaredConstants constants,
                              std::size_t n_vol_controls) {
    if (!bounds.b_lo || !bounds.b_hi || !bounds.a_lo || !bounds.a_hi) {
        throw std::invalid_argument("interval_field: all four endpoints required");
    }
    for (const auto& s : validation) {
        if (s.path.dim() != 1) {
            throw std::invalid_argument("interval_field: requires d = 1");
        }
        const PathView w = s.path.prefix(s.index());
        const double bl = bounds.b_lo(s.t, w), bh = bounds.b_hi(s.t, w);
        const double al = bounds.a_lo(s.t, w), ah = bounds.a_hi(s.t, w);
        if (!(bl <= bh) || !(0.0 <= al) || !(al <= ah)) {
            std::ostringstream msg;
            msg << "interval_field: endpoint ordering violated at t=" << s.t << " (b in [" << bl
                << ", " << bh << "], a in [" << al << ", " << ah << "])";
            throw std::invalid_argument(msg.str());
        }
    }
    ControlSet controls = ControlSet::product(
        ControlSet::unit_grid(n_controls),
        ControlSet::unit_grid(n_vol_controls == 0 ? n_controls : n_vol_controls), true);
    IntervalBounds b = bounds;
    CoefficientField field(
        "interval", 1, 1,
        [b](std::span<const double> f, double t, const PathView& w) {
            return scalar_vec((1.0 - f[0]) * b.b_lo(t, w) + f[0] * b.b_hi(t, w));
        },
        [b](std::span<const double> f, double t, const PathView& w) {
            const double a = (1.0 - f[1]) * b.a_lo(t, w) + f[1] * b.a_hi(t, w);
            return scalar_mat(std::sqrt(std::max(0.0, a)));
        },
        constants, bounds.markovian);
    return UncertaintySet{std::move(controls), std::move(field)};
}

UncertaintySet interval_field(double b_lo, double b_hi, double a_lo, double a_hi,
                              std::size_t n_controls, std::size_t n_vol_controls) {
    if (!(b_lo <= b_hi) || !(0.0 <= a_lo) || !(a_lo <= a_hi)) {
        throw std::invalid_argument("interval_field: require b_lo <= b_hi and 0 <= a_lo <= a_hi");
    }
    auto c = [](double v) { return [v](double, const PathView&) { return v; }; };
    DeclaredConstants constants;
    const double bmax = std::max(std::abs(b_lo), std::abs(b_hi));
    constants.growth = bmax * bmax + a_hi;
    constants.lipschitz = 0.0;
    constants.bound = bmax + std::sqrt(a_hi);
    return interval_field(IntervalBounds{c(b_lo), c(b_hi), c(a_lo), c(a_hi), true}, n_controls,
                          {}, constants, n_vol_controls);
}

CoefficientField delay_field(DelayKernels kernels, DeclaredConstants constants) {
    if (!(kernels.window > 0.0)) {
        throw std::invalid_argument("delay_field: window must be positive");
    }
    if (!kernels.b0 || !kernels.b1 || !kernels.a0) {
        throw std::invalid_argument("delay_field: b0, b1 and a0 required");
    }
    DelayKernels k = std::move(kernels);
    return CoefficientField(
        "delay", 1, 1,
        [k](std::span<const double> f, double, const PathView& w) {
            const double local = k.b0(f) * w.current(0);
            const double memory =
                window_integral(w, k.window, [&](double s) { return k.b1(f, s); });
            return scalar_vec(local + memory);
        },
        [k](std::span<const double> f, double, const PathView&) {
            return scalar_mat(std::sqrt(std::max(0.0, k.a0(f))));
        },
        constants, false);
}

double signed_sqrt_drift(double x) {
    const double ax = std::abs(x);
    const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    if (ax <= 1.0) {
        return sign * std::sqrt(ax);
    }
    return sign * (2.0 - 1.0 / ax);
}

CoefficientField signed_sqrt_field() {
    DeclaredConstants constants;
    constants.bound = 2.0;
    constants.growth = 4.0;
    return markov_field(
        "signed-sqrt", [](std::span<const double>, double, double x) { return signed_sqrt_drift(x); },
        [](std::span<const double>, double, double) { return 0.0; }, constants);
}

double operator_norm(const Mat& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    if (m.rows() == 1 && m.cols() == 1) {
        return std::abs(m(0, 0));
    }
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

ConditionReport check_linear_growth(const UncertaintySet& u, std::span<const PathPair> samples) {
    const auto& declared = u.field.constants().growth;
    if (!declared) {
        throw std::invalid_argument("check_linear_growth: field declares no growth constant");
    }
    ConditionReport report{"linear-growth", 0.0, *declared, 0, true};
    for (const auto& s : samples) {
        const PathView w = s.path.prefix(s.index());
        const double sup = running_sup_norm(w);
        for (std::size_t i = 0; i < u.controls.size(); ++i) {
            const Vec b = u.field.drift(u.controls.point(i), s.t, w);
            const Mat a = u.field.diffusion(u.controls.point(i), s.t, w);
            const double ratio = (b.squaredNorm() + a.trace()) / (1.0 + sup * sup);
            report.max_violation = std::max(report.max_violation, ratio);
            ++report.samples;
        }
    }
    report.pass = report.max_violation <= report.tolerance;
    return report;
}

ConditionReport check_lipschitz(const UncertaintySet& u, std::span<const LipschitzSample> samples) {
    const auto& declared = u.field.constants().lipschitz;
    if (!declared) {
        throw std::invalid_argument("check_lipschitz: field declares no Lipschitz constant");
    }
    ConditionReport report{"lipschitz", 0.0, *declared, 0, true};
    for (const auto& s : samples) {
        const double dist = sup_distance(s.omega, s.alpha, s.t);
        if (dist == 0.0) {
            continue;
        }
        const std::size_t k = s.omega.grid().index_of(s.t);
        const PathView w = s.omega.prefix(k);
        const PathView a = s.alpha.prefix(k);
        for (std::size_t i = 0; i < u.controls.size(); ++i) {
            const auto f = u.controls.point(i);
            const double lhs = (u.field.drift(f, s.t, w) - u.field.drift(f, s.t, a)).norm() +
                               operator_norm(u.field.vol(f, s.t, w) - u.field.vol(f, s.t, a));
            report.max_violation = std::max(report.max_violation, lhs / dist);
            ++report.samples;
        }
    }
    report.pass = report.max_violation <= report.tolerance;
    return report;
}

ConditionReport check_convexity(const UncertaintySet& u, std::span<const PathPair> samples) {
    ConditionReport report{"convexity", 0.0, 1e-8, 0, true};
    const auto& controls = u.controls;
    for (const auto& s : samples) {
        const PathView w = s.path.prefix(s.index());
        std::vector<std::vector<double>> image;
        for (std::size_t i = 0; i < controls.size(); ++i) {
            image.push_back(flatten(evaluate(u.field, controls.point(i), s.t, w)));
        }
        std::vector<std::vector<double>> closure = image;
        if (controls.convex_domain()) {
            std::vector<double> mid(controls.point(0).size());
            for (std::size_t i = 0; i < controls.size(); ++i) {
                for (std::size_t j = i + 1; j < controls.size(); ++j) {
                    for (std::size_t c = 0; c < mid.size(); ++c) {
                        mid[c] = 0.5 * (controls.point(i)[c] + controls.point(j)[c]);
                    }
                    closure.push_back(flatten(evaluate(u.field, mid, s.t, w)));
                }
            }
        }
        double diameter = 0.0;
        for (std::size_t i = 0; i < image.size(); ++i) {
            for (std::size_t j = i + 1; j < image.size(); ++j) {
                diameter = std::max(diameter, distance(image[i], image[j]));
            }
        }
        std::vector<double> mid(image.front().size());
        for (std::size_t i = 0; i < image.size(); ++i) {
            for (std::size_t j = i + 1; j < image.size(); ++j) {
                for (std::size_t c = 0; c < mid.size(); ++c) {
                    mid[c] = 0.5 * (image[i][c] + image[j][c]);
                }
                double nearest = std::numeric_limits<double>::infinity();
                for (const auto& p : closure) {
                    nearest = std::min(nearest, distance(mid, p));
                }
                const double scaled = diameter > 0.0 ? nearest / diameter : 0.0;
                report.max_violation = std::max(report.max_violation, scaled);
                ++report.samples;
            }
        }
    }
    report.pass = report.max_violation <= report.tolerance;
    return report;
}

} // namespace nlsem
