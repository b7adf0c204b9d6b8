#pragma once

#include "nlsem/types.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace nlsem {

/// Uniform time grid t0 < t0 + dt < ... < horizon with n_steps intervals.
class TimeGrid {
public:
    TimeGrid(double t0, double horizon, std::size_t n_steps);

    double t0() const noexcept { return t0_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t knots() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return dt_; }

    /// Time of knot k; the last knot is exactly the horizon.
    double time(std::size_t k) const noexcept;

    std::optional<std::size_t> try_index_of(double t) const noexcept;
    /// Throws GridAlignmentError when t is not a knot.
    std::size_t index_of(double t) const;

    /// Same interval, each step split into `factor` sub-steps.
    TimeGrid refined(std::size_t factor) const;

    bool operator==(const TimeGrid& other) const noexcept {
        return t0_ == other.t0_ && horizon_ == other.horizon_ && steps_ == other.steps_;
    }

private:
    double t0_;
    double horizon_;
    std::size_t steps_;
    double dt_;
};

/// Non-owning view of the knots 0..last of a path (row-major, dim values per knot).
class PathView {
public:
    PathView(std::span<const double> values, std::size_t dim, std::size_t last, double t0,
             double dt) noexcept
        : values_(values), dim_(dim), last_(last), t0_(t0), dt_(dt) {}

    /// Single-knot view holding x at time t; used to evaluate Markovian fields.
    static PathView point(std::span<const double> x, double t) noexcept {
        return PathView(x, x.size(), 0, t, 0.0);
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t last_index() const noexcept { return last_; }
    double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
    double dt() const noexcept { return dt_; }

    std::span<const double> at(std::size_t k) const noexcept {
        return values_.subspan(k * dim_, dim_);
    }
    double at(std::size_t k, std::size_t i) const noexcept { return values_[k * dim_ + i]; }
    std::span<const double> current() const noexcept { return at(last_); }
    double current(std::size_t i) const noexcept { return at(last_, i); }

    /// Knot index whose time is closest to t, clipped to [0, last].
    std::size_t nearest_index(double t) const noexcept;

private:
    std::span<const double> values_;
    std::size_t dim_;
    std::size_t last_;
    double t0_;
    double dt_;
};

/// A path sampled on every knot of a TimeGrid. Immutable once built.
class DiscretePath {
public:
    DiscretePath(TimeGrid grid, std::size_t dim, std::vector<double> values);

    static DiscretePath constant(const TimeGrid& grid, std::span<const double> value);
    static DiscretePath from_function(const TimeGrid& grid, std::size_t dim,
                                      const std::function<void(double, std::span<double>)>& fn);
    /// Scalar path t -> fn(t).
    static DiscretePath scalar(const TimeGrid& grid, const std::function<double(double)>& fn);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t knots() const noexcept { return grid_.knots(); }
    const std::vector<double>& data() const noexcept { return values_; }

    std::span<const double> at(std::size_t k) const noexcept {
        return std::span<const double>(values_).subspan(k * dim_, dim_);
    }
    double at(std::size_t k, std::size_t i) const noexcept { return values_[k * dim_ + i]; }
    /// Value at a knot time; throws GridAlignmentError otherwise.
    std::span<const double> at_time(double t) const { return at(grid_.index_of(t)); }

    PathView view() const noexcept { return prefix(grid_.steps()); }
    PathView prefix(std::size_t last) const noexcept {
        return PathView(values_, dim_, last, grid_.t0(), grid_.dt());
    }

    bool operator==(const DiscretePath& other) const noexcept {
        return grid_ == other.grid_ && dim_ == other.dim_ && values_ == other.values_;
    }

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::vector<double> values_;
};

/// (t, omega) with t a knot of omega's grid.
struct PathPair {
    PathPair(double t, DiscretePath path);

    double t;
    DiscretePath path;

    std::size_t index() const { return path.grid().index_of(t); }
};

/// omega stopped at t: equal to omega on [t0, t], constant omega(t) afterwards.
DiscretePath stop(const DiscretePath& path, double t);

/// omega on [t0, t), then omega(t) + omega'(s) - omega'(t).
DiscretePath concat_freeze(const DiscretePath& path, double t, const DiscretePath& other);

/// omega on [t0, t), then omega(t) + other(s - t) - other(0). `other` starts at
/// time 0 with the same step; if it ends before the horizon the result is held
/// constant after its last knot.
DiscretePath concat_shift(const DiscretePath& path, double t, const DiscretePath& other);

/// The segment of omega on [t, horizon], re-based to start at time 0.
DiscretePath time_shift(const DiscretePath& path, double t);

/// max over knots with time <= up_to of the Euclidean distance.
double sup_distance(const DiscretePath& path, const DiscretePath& other, double up_to);

/// |t - s| + sup_r |omega(r ^ t) - alpha(r ^ s)|, evaluated on knots.
double pseudometric_d(const PathPair& p, const PathPair& q);

/// Piecewise-linear interpolation onto grid.refined(factor).
DiscretePath refine(const DiscretePath& path, std::size_t factor);

/// sup over knots <= last of the Euclidean norm.
double running_sup_norm(const PathView& view);

/// Trapezoid integral of the first coordinate over [max(t - window, t0), t],
/// with the partial first interval handled by linear interpolation.
double window_integral(const PathView& view, double window,
                       const std::function<double(double)>& kernel = {});

/// CSV with header t,x_1..x_d.
void write_csv(std::ostream& out, const DiscretePath& path);

} // namespace nlsem
