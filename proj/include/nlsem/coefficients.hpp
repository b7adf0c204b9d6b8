#pragma once

#include "nlsem/pathspace.hpp"
#include "nlsem/types.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nlsem {

/// Finite discretization of the control space F. Each control is a point in R^k.
///
/// In product mode F = F0 x F1: control index i maps to (i / |F1|, i % |F1|) and
/// its coordinates are the drift coordinates followed by the volatility ones.
class ControlSet {
public:
    /// Explicit finite set. `convex_domain` declares that coordinate midpoints
    /// of two controls are again admissible controls.
    static ControlSet finite(std::vector<std::vector<double>> points, bool convex_domain = false);
    static ControlSet product(std::vector<std::vector<double>> drift_points,
                              std::vector<std::vector<double>> vol_points,
                              bool convex_domain = false);
    /// n equally spaced scalars in [0, 1].
    static std::vector<std::vector<double>> unit_grid(std::size_t n);

    std::size_t size() const noexcept { return points_.size(); }
    std::span<const double> point(std::size_t i) const { return points_.at(i); }
    const std::vector<std::vector<double>>& points() const noexcept { return points_; }
    bool convex_domain() const noexcept { return convex_domain_; }

    bool is_product() const noexcept { return !vol_.empty(); }
    std::size_t drift_size() const noexcept { return is_product() ? drift_.size() : size(); }
    std::size_t vol_size() const noexcept { return is_product() ? vol_.size() : 1; }
    std::size_t index(std::size_t drift_i, std::size_t vol_i) const noexcept {
        return drift_i * vol_.size() + vol_i;
    }
    std::pair<std::size_t, std::size_t> split(std::size_t i) const noexcept {
        return {i / vol_.size(), i % vol_.size()};
    }

    std::string label(std::size_t i) const;

private:
    ControlSet() = default;

    std::vector<std::vector<double>> points_;
    std::vector<std::vector<double>> drift_;
    std::vector<std::vector<double>> vol_;
    bool convex_domain_ = false;
};

/// Regularity constants a field declares about itself; audited by the check_* functions.
struct DeclaredConstants {
    std::optional<double> growth;    ///< C_T in |b|^2 + tr a <= C (1 + sup|w|^2)
    std::optional<double> lipschitz; ///< C_{T,M} in |b(w)-b(a)| + |s(w)-s(a)|_op <= C sup|w-a|
    std::optional<double> bound;     ///< sup |b| + |s|_op, when globally bounded
};

using DriftFn = std::function<Vec(std::span<const double> f, double t, const PathView& prefix)>;
using VolFn = std::function<Mat(std::span<const double> f, double t, const PathView& prefix)>;
/// Scalar path functional (t, prefix) -> R.
using ScalarPathFn = std::function<double(double t, const PathView& prefix)>;

/// Drift b(f, t, w) in R^d and volatility s(f, t, w) in R^{d x r}; a = s s^T.
/// Evaluators must read only the prefix they are handed and be reentrant.
class CoefficientField {
public:
    CoefficientField(std::string name, std::size_t dim, std::size_t noise_dim, DriftFn drift,
                     VolFn vol, DeclaredConstants constants = {}, bool markovian = false);

    const std::string& name() const noexcept { return name_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t noise_dim() const noexcept { return noise_dim_; }
    bool markovian() const noexcept { return markovian_; }
    const DeclaredConstants& constants() const noexcept { return constants_; }
    DeclaredConstants& constants() noexcept { return constants_; }

    Vec drift(std::span<const double> f, double t, const PathView& prefix) const {
        return drift_(f, t, prefix);
    }
    Mat vol(std::span<const double> f, double t, const PathView& prefix) const {
        return vol_(f, t, prefix);
    }
    Mat diffusion(std::span<const double> f, double t, const PathView& prefix) const {
        const Mat s = vol_(f, t, prefix);
        return s * s.transpose();
    }

private:
    std::string name_;
    std::size_t dim_;
    std::size_t noise_dim_;
    DriftFn drift_;
    VolFn vol_;
    DeclaredConstants constants_;
    bool markovian_;
};

/// Theta(t, w) = {(b(f,t,w), a(f,t,w)) : f in controls}.
struct UncertaintySet {
    ControlSet controls;
    CoefficientField field;
};

struct ThetaPoint {
    Vec drift;
    Mat diffusion;
};

/// One (b, a) pair per control, in control order. Evaluator failures are
/// rethrown with the control label attached.
std::vector<ThetaPoint> theta_at(const UncertaintySet& u, double t, const DiscretePath& path);
std::vector<ThetaPoint> theta_at(const UncertaintySet& u, double t, const PathView& prefix);

/// Field independent of control and path.
CoefficientField constant_field(const Vec& drift, const Mat& vol, DeclaredConstants constants = {});

/// d = 1 field b(f, t, x), s(f, t, x) reading only the current value.
CoefficientField markov_field(std::string name,
                              std::function<double(std::span<const double>, double, double)> drift,
                              std::function<double(std::span<const double>, double, double)> vol,
                              DeclaredConstants constants = {});

/// Interval uncertainty [b_lo, b_hi] x [a_lo, a_hi] with the affine parameterization
/// b = b_lo + f0 (b_hi - b_lo), a = a_lo + f1 (a_hi - a_lo), f0, f1 in [0, 1], s = sqrt(a).
/// Endpoint ordering is validated on every (t, w) in `validation`.
struct IntervalBounds {
    ScalarPathFn b_lo;
    ScalarPathFn b_hi;
    ScalarPathFn a_lo;
    ScalarPathFn a_hi;
    bool markovian = false; ///< all four read only w(t)
};

/// `n_vol_controls` = 0 uses the drift grid size for both factors.
UncertaintySet interval_field(const IntervalBounds& bounds, std::size_t n_controls,
                              std::span<const PathPair> validation = {},
                              DeclaredConstants constants = {}, std::size_t n_vol_controls = 0);
/// Constant endpoints; declares growth, Lipschitz (0) and bound constants.
UncertaintySet interval_field(double b_lo, double b_hi, double a_lo, double a_hi,
                              std::size_t n_controls, std::size_t n_vol_controls = 0);

/// Linear delay equation b(f,t,w) = b0(f) w(t) + int_{(t-r) v 0}^t b1(f,s) w(s) ds, with
/// constant volatility sqrt(a0(f)). d = 1.
struct DelayKernels {
    std::function<double(std::span<const double>)> b0;
    std::function<double(std::span<const double>, double)> b1;
    std::function<double(std::span<const double>)> a0;
    double window = 1.0;
};

CoefficientField delay_field(DelayKernels kernels, DeclaredConstants constants = {});

/// b(x) = sgn(x) sqrt|x| on [-1, 1], sgn(x) (2 - 1/|x|) outside; bounded and continuous.
double signed_sqrt_drift(double x);
/// d = 1, a = 0, b = signed_sqrt_drift(w(t)) for every control.
CoefficientField signed_sqrt_field();

struct ConditionReport {
    std::string condition;
    double max_violation = 0.0; ///< largest sampled ratio (or hull distance for convexity)
    double tolerance = 0.0;
    std::size_t samples = 0;
    bool pass = false;
};

/// |b|^2 + tr a <= C (1 + sup_{s<=t} |w(s)|^2) over every control and sample.
ConditionReport check_linear_growth(const UncertaintySet& u, std::span<const PathPair> samples);

struct LipschitzSample {
    double t;
    DiscretePath omega;
    DiscretePath alpha;
};

/// (|b(w) - b(a)| + |s(w) - s(a)|_op) / sup_{s<=t} |w - a|; zero-distance pairs are skipped.
ConditionReport check_lipschitz(const UncertaintySet& u, std::span<const LipschitzSample> samples);

/// Midpoints of image pairs must lie (within 1e-8 x image diameter) on the image of the
/// control set closed under control midpoints when the control domain is convex.
ConditionReport check_convexity(const UncertaintySet& u, std::span<const PathPair> samples);

/// Largest singular value.
double operator_norm(const Mat& m);

} // namespace nlsem
