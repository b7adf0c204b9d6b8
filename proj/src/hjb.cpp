#include "nlsem/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nlsem {

namespace {

struct Coefficients {
    double b;
    double a;
};

void require_markov(const UncertaintySet& u, const HjbGrid& grid) {
    if (!u.field.markovian() || u.field.dim() != 1) {
        throw std::invalid_argument("markov_hjb_oracle: requires a Markovian field with d = 1");
    }
    if (grid.n_x < 5 || grid.n_t == 0 || !(grid.x_min < grid.x_max)) {
        throw std::invalid_argument("markov_hjb_oracle: grid needs n_x >= 5, n_t >= 1, x_min < x_max");
    }
}

/// Coefficients at every (x_i, control) for time t.
std::vector<Coefficients> sample(const UncertaintySet& u, double t, double x_min, double dx,
                                 std::size_t n_x) {
    const std::size_t nc = u.controls.size();
    std::vector<Coefficients> out(n_x * nc);
    for (std::size_t i = 0; i < n_x; ++i) {
        const double x = x_min + static_cast<double>(i) * dx;
        const PathView w = PathView::point(std::span<const double>(&x, 1), t);
        for (std::size_t c = 0; c < nc; ++c) {
            const auto f = u.controls.point(c);
            out[i * nc + c] = {u.field.drift(f, t, w)(0), u.field.diffusion(f, t, w)(0, 0)};
        }
    }
    return out;
}

double cfl_rate(const std::vector<Coefficients>& coeffs, double dx) {
    double rate = 0.0;
    for (const auto& c : coeffs) {
        rate = std::max(rate, c.a / (dx * dx) + std::abs(c.b) / dx);
    }
    return rate;
}

} // namespace

ValueSurface::ValueSurface(double t0, double horizon, HjbGrid grid, std::vector<double> values)
    : t0_(t0), horizon_(horizon), grid_(grid), values_(std::move(values)) {
    if (values_.size() != (grid_.n_t + 1) * grid_.n_x) {
        throw std::invalid_argument("ValueSurface: value count does not match the grid");
    }
}

double ValueSurface::operator()(double t, double x) const noexcept {
    const double ft = std::clamp((t - t0_) / dt(), 0.0, static_cast<double>(grid_.n_t));
    const double fx = std::clamp((x - grid_.x_min) / dx(), 0.0, static_cast<double>(grid_.n_x - 1));
    const std::size_t n = std::min(static_cast<std::size_t>(ft), grid_.n_t - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(fx), grid_.n_x - 2);
    const double wt = ft - static_cast<double>(n);
    const double wx = fx - static_cast<double>(i);
    const double lo = (1.0 - wx) * at(n, i) + wx * at(n, i + 1);
    const double hi = (1.0 - wx) * at(n + 1, i) + wx * at(n + 1, i + 1);
    return (1.0 - wt) * lo + wt * hi;
}

std::size_t hjb_required_steps(const UncertaintySet& u, double t0, double horizon,
                               const HjbGrid& grid) {
    require_markov(u, grid);
    const double dx = (grid.x_max - grid.x_min) / static_cast<double>(grid.n_x - 1);
    const double dt = (horizon - t0) / static_cast<double>(grid.n_t);
    double rate = 0.0;
    for (std::size_t n = 1; n <= grid.n_t; ++n) {
        rate = std::max(rate, cfl_rate(sample(u, t0 + static_cast<double>(n) * dt, grid.x_min, dx,
                                              grid.n_x),
                                       dx));
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((horizon - t0) * rate - 1e-9)));
}

ValueSurface markov_hjb_oracle(const UncertaintySet& u, const std::function<double(double)>& g,
                               double t0, double horizon, const HjbGrid& grid) {
    require_markov(u, grid);
    if (!(t0 < horizon)) {
        throw std::invalid_argument("markov_hjb_oracle: require t0 < horizon");
    }
    const std::size_t n_x = grid.n_x;
    const std::size_t nc = u.controls.size();
    const double dx = (grid.x_max - grid.x_min) / static_cast<double>(n_x - 1);
    const double dt = (horizon - t0) / static_cast<double>(grid.n_t);

    std::vector<double> values((grid.n_t + 1) * n_x);
    for (std::size_t i = 0; i < n_x; ++i) {
        values[grid.n_t * n_x + i] = g(grid.x_min + static_cast<double>(i) * dx);
    }
    for (std::size_t n = grid.n_t; n-- > 0;) {
        const double t_next = t0 + static_cast<double>(n + 1) * dt;
        const auto coeffs = sample(u, t_next, grid.x_min, dx, n_x);
        const double rate = cfl_rate(coeffs, dx);
        if (dt * rate > 1.0 + 1e-12) {
            const std::size_t required = hjb_required_steps(u, t0, horizon, grid);
            std::ostringstream msg;
            msg << "markov_hjb_oracle: CFL condition violated (dt=" << dt << ", need dt <= "
                << 1.0 / rate << "); use at least " << required << " time steps";
            throw CflError(msg.str(), required);
        }
        const double* next = &values[(n + 1) * n_x];
        double* cur = &values[n * n_x];
        for (std::size_t i = 1; i + 1 < n_x; ++i) {
            const double fwd = (next[i + 1] - next[i]) / dx;
            const double bwd = (next[i] - next[i - 1]) / dx;
            const double second = (next[i + 1] - 2.0 * next[i] + next[i - 1]) / (dx * dx);
            double h = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < nc; ++c) {
                const auto& k = coeffs[i * nc + c];
                const double drift = k.b >= 0.0 ? k.b * fwd : k.b * bwd;
                h = std::max(h, drift + 0.5 * k.a * second);
            }
            cur[i] = next[i] + dt * h;
        }
        cur[0] = 2.0 * cur[1] - cur[2];
        cur[n_x - 1] = 2.0 * cur[n_x - 2] - cur[n_x - 3];
    }
    return ValueSurface(t0, horizon, grid, std::move(values));
}

} // namespace nlsem
