#include "nlsem/pathspace.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace nlsem {

namespace {

double norm_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void require_same(const DiscretePath& a, const DiscretePath& b, const char* op) {
    if (!(a.grid() == b.grid()) || a.dim() != b.dim()) {
        throw GridMismatchError(std::string(op) + ": paths do not share grid and dimension");
    }
}

bool same_step(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

} // namespace

TimeGrid::TimeGrid(double t0, double horizon, std::size_t n_steps)
    : t0_(t0), horizon_(horizon), steps_(n_steps), dt_(0.0) {
    if (!(t0 >= 0.0) || !std::isfinite(horizon) || !(t0 < horizon)) {
        throw std::invalid_argument("TimeGrid: require 0 <= t0 < horizon");
    }
    if (n_steps == 0) {
        throw std::invalid_argument("TimeGrid: n_steps must be positive");
    }
    dt_ = (horizon - t0) / static_cast<double>(n_steps);
}

double TimeGrid::time(std::size_t k) const noexcept {
    if (k >= steps_) {
        return horizon_;
    }
    return t0_ + static_cast<double>(k) * dt_;
}

std::optional<std::size_t> TimeGrid::try_index_of(double t) const noexcept {
    const double r = (t - t0_) / dt_;
    const double k = std::round(r);
    if (k < 0.0 || k > static_cast<double>(steps_)) {
        return std::nullopt;
    }
    if (std::abs(r - k) > 1e-9 * std::max(1.0, std::abs(r))) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(k);
}

std::size_t TimeGrid::index_of(double t) const {
    if (auto k = try_index_of(t)) {
        return *k;
    }
    std::ostringstream msg;
    msg << "time " << t << " is not a knot of the grid [" << t0_ << ", " << horizon_ << "] with "
        << steps_ << " steps";
    throw GridAlignmentError(msg.str());
}

TimeGrid TimeGrid::refined(std::size_t factor) const {
    if (factor == 0) {
        throw std::invalid_argument("TimeGrid::refined: factor must be positive");
    }
    return TimeGrid(t0_, horizon_, steps_ * factor);
}

std::size_t PathView::nearest_index(double t) const noexcept {
    if (dt_ <= 0.0) {
        return last_;
    }
    const double r = std::round((t - t0_) / dt_);
    if (r <= 0.0) {
        return 0;
    }
    return std::min(last_, static_cast<std::size_t>(r));
}

DiscretePath::DiscretePath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(grid), dim_(dim), values_(std::move(values)) {
    if (dim == 0 || dim > static_cast<std::size_t>(kMaxDim)) {
        throw std::invalid_argument("DiscretePath: dimension must be in [1, 4]");
    }
    if (values_.size() != grid_.knots() * dim_) {
        throw std::invalid_argument("DiscretePath: expected one value per knot and coordinate");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("DiscretePath: values must be finite");
        }
    }
}

DiscretePath DiscretePath::constant(const TimeGrid& grid, std::span<const double> value) {
    std::vector<double> values;
    values.reserve(grid.knots() * value.size());
    for (std::size_t k = 0; k < grid.knots(); ++k) {
        values.insert(values.end(), value.begin(), value.end());
    }
    return DiscretePath(grid, value.size(), std::move(values));
}

DiscretePath DiscretePath::from_function(const TimeGrid& grid, std::size_t dim,
                                         const std::function<void(double, std::span<double>)>& fn) {
    std::vector<double> values(grid.knots() * dim);
    for (std::size_t k = 0; k < grid.knots(); ++k) {
        fn(grid.time(k), std::span<double>(values).subspan(k * dim, dim));
    }
    return DiscretePath(grid, dim, std::move(values));
}

DiscretePath DiscretePath::scalar(const TimeGrid& grid, const std::function<double(double)>& fn) {
    return from_function(grid, 1, [&](double t, std::span<double> out) { out[0] = fn(t); });
}

PathPair::PathPair(double t_, DiscretePath path_) : t(t_), path(std::move(path_)) {
    path.grid().index_of(t); // alignment check
}

DiscretePath stop(const DiscretePath& path, double t) {
    const std::size_t kt = path.grid().index_of(t);
    const std::size_t d = path.dim();
    std::vector<double> values(path.data());
    for (std::size_t k = kt + 1; k < path.knots(); ++k) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(kt * d), d,
                    values.begin() + static_cast<std::ptrdiff_t>(k * d));
    }
    return DiscretePath(path.grid(), d, std::move(values));
}

DiscretePath concat_freeze(const DiscretePath& path, double t, const DiscretePath& other) {
    require_same(path, other, "concat_freeze");
    const std::size_t kt = path.grid().index_of(t);
    const std::size_t d = path.dim();
    std::vector<double> values(path.data());
    for (std::size_t k = kt; k < path.knots(); ++k) {
        for (std::size_t i = 0; i < d; ++i) {
            values[k * d + i] = path.at(kt, i) + (other.at(k, i) - other.at(kt, i));
        }
    }
    return DiscretePath(path.grid(), d, std::move(values));
}

DiscretePath concat_shift(const DiscretePath& path, double t, const DiscretePath& other) {
    if (other.dim() != path.dim() || !same_step(other.grid().dt(), path.grid().dt())) {
        throw GridMismatchError("concat_shift: step size or dimension differs");
    }
    const std::size_t kt = path.grid().index_of(t);
    const std::size_t remaining = path.grid().steps() - kt;
    if (other.grid().steps() > remaining) {
        throw GridMismatchError("concat_shift: t plus the length of the second path exceeds the horizon");
    }
    const std::size_t d = path.dim();
    std::vector<double> values(path.data());
    for (std::size_t j = 0; j <= remaining; ++j) {
        const std::size_t jj = std::min(j, other.grid().steps());
        for (std::size_t i = 0; i < d; ++i) {
            values[(kt + j) * d + i] = path.at(kt, i) + (other.at(jj, i) - other.at(0, i));
        }
    }
    return DiscretePath(path.grid(), d, std::move(values));
}

DiscretePath time_shift(const DiscretePath& path, double t) {
    const std::size_t kt = path.grid().index_of(t);
    if (kt == path.grid().steps()) {
        throw GridAlignmentError("time_shift: t must be before the horizon");
    }
    const std::size_t d = path.dim();
    TimeGrid grid(0.0, path.grid().horizon() - t, path.grid().steps() - kt);
    std::vector<double> values(path.data().begin() + static_cast<std::ptrdiff_t>(kt * d),
                               path.data().end());
    return DiscretePath(grid, d, std::move(values));
}

double sup_distance(const DiscretePath& path, const DiscretePath& other, double up_to) {
    require_same(path, other, "sup_distance");
    double best = 0.0;
    for (std::size_t k = 0; k < path.knots(); ++k) {
        if (path.grid().time(k) > up_to + 1e-12) {
            break;
        }
        best = std::max(best, norm_diff(path.at(k), other.at(k)));
    }
    return best;
}

double pseudometric_d(const PathPair& p, const PathPair& q) {
    require_same(p.path, q.path, "pseudometric_d");
    const std::size_t kp = p.index();
    const std::size_t kq = q.index();
    double best = 0.0;
    for (std::size_t k = 0; k < p.path.knots(); ++k) {
        best = std::max(best, norm_diff(p.path.at(std::min(k, kp)), q.path.at(std::min(k, kq))));
    }
    return std::abs(p.t - q.t) + best;
}

DiscretePath refine(const DiscretePath& path, std::size_t factor) {
    const TimeGrid fine = path.grid().refined(factor);
    const std::size_t d = path.dim();
    std::vector<double> values(fine.knots() * d);
    for (std::size_t k = 0; k < fine.knots(); ++k) {
        const std::size_t lo = k / factor;
        const std::size_t rem = k % factor;
        const double w = static_cast<double>(rem) / static_cast<double>(factor);
        for (std::size_t i = 0; i < d; ++i) {
            const double a = path.at(lo, i);
            const double b = rem == 0 ? a : path.at(lo + 1, i);
            values[k * d + i] = rem == 0 ? a : (1.0 - w) * a + w * b;
        }
    }
    return DiscretePath(fine, d, std::move(values));
}

double running_sup_norm(const PathView& view) {
    double best = 0.0;
    for (std::size_t k = 0; k <= view.last_index(); ++k) {
        double s = 0.0;
        for (double v : view.at(k)) {
            s += v * v;
        }
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

double window_integral(const PathView& view, double window,
                       const std::function<double(double)>& kernel) {
    const std::size_t last = view.last_index();
    const double t = view.time(last);
    const double lower = std::max(t - window, view.time(0));
    auto integrand = [&](std::size_t k) {
        const double x = view.at(k, 0);
        return kernel ? kernel(view.time(k)) * x : x;
    };
    if (last == 0 || lower >= t) {
        return 0.0;
    }
    // first knot at or after the lower limit
    const double dt = view.dt();
    std::size_t first = static_cast<std::size_t>(std::ceil((lower - view.time(0)) / dt - 1e-9));
    first = std::min(first, last);
    double total = 0.0;
    for (std::size_t k = first; k < last; ++k) {
        total += 0.5 * dt * (integrand(k) + integrand(k + 1));
    }
    const double gap = view.time(first) - lower;
    if (gap > 1e-12 * dt && first > 0) {
        const double w = gap / dt;
        const double x_lo = (1.0 - w) * view.at(first, 0) + w * view.at(first - 1, 0);
        const double f_lo = kernel ? kernel(lower) * x_lo : x_lo;
        total += 0.5 * gap * (f_lo + integrand(first));
    }
    return total;
}

void write_csv(std::ostream& out, const DiscretePath& path) {
    out << "t";
    for (std::size_t i = 0; i < path.dim(); ++i) {
        out << ",x_" << (i + 1);
    }
    out << '\n';
    const auto precision = out.precision(17);
    for (std::size_t k = 0; k < path.knots(); ++k) {
        out << path.grid().time(k);
        for (std::size_t i = 0; i < path.dim(); ++i) {
            out << ',' << path.at(k, i);
        }
        out << '\n';
    }
    out.precision(precision);
}

} // namespace nlsem
