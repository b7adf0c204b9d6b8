#include "nlsem/calculus.hpp"

#include "nlsem/expectation.hpp"
#include "nlsem/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace nlsem {

namespace {

/// w + sum_j shifts[j] e_{coords[j]} on knots >= kt.
DiscretePath bumped(const DiscretePath& path, std::size_t kt,
                    std::initializer_list<std::pair<std::size_t, double>> shifts) {
    std::vector<double> values(path.data());
    const std::size_t d = path.dim();
    for (std::size_t k = kt; k < path.knots(); ++k) {
        for (const auto& [i, h] : shifts) {
            values[k * d + i] += h;
        }
    }
    return DiscretePath(path.grid(), d, std::move(values));
}

double max_drift_spread(const UncertaintySet& u, double t, const PathView& w) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : theta_at(u, t, w)) {
        lo = std::min(lo, p.drift(0));
        hi = std::max(hi, p.drift(0));
    }
    return hi - lo;
}

} // namespace

double horizontal_derivative(const TestFunctional& F, double t, const DiscretePath& path, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("horizontal_derivative: h must be positive");
    }
    const TimeGrid& grid = path.grid();
    if (t + h > grid.horizon() + 1e-12) {
        if (grid.try_index_of(t) == grid.steps()) {
            // left-limit variant at the horizon
            const double s = t - h;
            const DiscretePath frozen = stop(path, s);
            return (F.eval(t, frozen) - F.eval(s, frozen)) / h;
        }
        throw std::invalid_argument("horizontal_derivative: t + h exceeds the horizon");
    }
    const DiscretePath frozen = stop(path, t);
    return (F.eval(t + h, frozen) - F.eval(t, frozen)) / h;
}

Vec vertical_gradient(const TestFunctional& F, double t, const DiscretePath& path, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("vertical_gradient: h must be positive");
    }
    const std::size_t kt = path.grid().index_of(t);
    const std::size_t d = path.dim();
    Vec g(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        const double up = F.eval(t, bumped(path, kt, {{i, h}}));
        const double down = F.eval(t, bumped(path, kt, {{i, -h}}));
        g(static_cast<Eigen::Index>(i)) = (up - down) / (2.0 * h);
    }
    return g;
}

Mat vertical_hessian(const TestFunctional& F, double t, const DiscretePath& path, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("vertical_hessian: h must be positive");
    }
    const std::size_t kt = path.grid().index_of(t);
    const auto d = static_cast<Eigen::Index>(path.dim());
    Mat m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto ii = static_cast<std::size_t>(i);
            const auto jj = static_cast<std::size_t>(j);
            const double pp = F.eval(t, bumped(path, kt, {{ii, h}, {jj, h}}));
            const double pm = F.eval(t, bumped(path, kt, {{ii, h}, {jj, -h}}));
            const double mp = F.eval(t, bumped(path, kt, {{ii, -h}, {jj, h}}));
            const double mm = F.eval(t, bumped(path, kt, {{ii, -h}, {jj, -h}}));
            m(i, j) = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    const Mat sym = 0.5 * (m + m.transpose());
    return sym;
}

FunctionalDerivatives functional_derivatives(const TestFunctional& F, double t,
                                             const DiscretePath& path,
                                             std::optional<double> h_horizontal,
                                             std::optional<double> h_vertical) {
    const std::size_t kt = path.grid().index_of(t);
    FunctionalDerivatives out;
    out.h_horizontal = h_horizontal.value_or(path.grid().dt());
    out.h_vertical = h_vertical.value_or(1e-4 * (1.0 + running_sup_norm(path.prefix(kt))));
    out.horizontal = horizontal_derivative(F, t, path, out.h_horizontal);
    out.gradient = vertical_gradient(F, t, path, out.h_vertical);
    out.hessian = vertical_hessian(F, t, path, out.h_vertical);
    (void)kt;
    return out;
}

double generator_G(const Vec& gradient, const Mat& hessian, std::span<const ThetaPoint> theta) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : theta) {
        const double value = gradient.dot(p.drift) + 0.5 * (hessian * p.diffusion).trace();
        best = std::max(best, value);
    }
    return best;
}

double generator_G(double t, const DiscretePath& path, const FunctionalDerivatives& derivs,
                   const UncertaintySet& u) {
    const auto theta = theta_at(u, t, path);
    return generator_G(derivs.gradient, derivs.hessian, theta);
}

double viscosity_residual(const std::function<double(double, double)>& v, double t, double x,
                          double horizon, const UncertaintySet& u, const ResidualSteps& steps) {
    if (t >= horizon) {
        throw std::domain_error(
            "viscosity_residual: probe on the terminal boundary; use v(T, .) = psi instead");
    }
    if (!u.field.markovian() || u.field.dim() != 1) {
        throw std::invalid_argument("viscosity_residual: requires a Markovian field with d = 1");
    }
    const double ht = steps.h_t;
    const double hx = steps.h_x;
    double vt = 0.0;
    if (t - ht >= 0.0 && t + ht <= horizon) {
        vt = (v(t + ht, x) - v(t - ht, x)) / (2.0 * ht);
    } else if (t + ht <= horizon) {
        vt = (v(t + ht, x) - v(t, x)) / ht;
    } else {
        vt = (v(t, x) - v(t - ht, x)) / ht;
    }
    const double v0 = v(t, x);
    const double vp = v(t, x + hx);
    const double vm = v(t, x - hx);
    Vec grad(1);
    grad(0) = (vp - vm) / (2.0 * hx);
    Mat hess(1, 1);
    hess(0, 0) = (vp - 2.0 * v0 + vm) / (hx * hx);
    const PathView w = PathView::point(std::span<const double>(&x, 1), t);
    return vt + generator_G(grad, hess, theta_at(u, t, w));
}

MartingaleReport martingale_problem_check(const IcxFunction& phi, double barrier,
                                          const PathPair& start, const UncertaintySet& u,
                                          const MartingaleConfig& cfg) {
    if (u.field.dim() != 1) {
        throw std::invalid_argument("martingale_problem_check: requires d = 1");
    }
    if (!u.controls.is_product()) {
        throw std::invalid_argument("martingale_problem_check: requires a product control set");
    }
    if (!(barrier > 0.0)) {
        throw std::invalid_argument("martingale_problem_check: barrier must be positive");
    }
    const std::size_t k0 = start.index();
    const bool drift_free = max_drift_spread(u, start.t, start.path.prefix(k0)) == 0.0;
    MartingaleReport report;
    report.audit_pass = true;
    const std::size_t n_audit = std::max<std::size_t>(cfg.audit_points, 2);
    for (std::size_t j = 0; j < n_audit; ++j) {
        const double x = -barrier + 2.0 * barrier * static_cast<double>(j) /
                                        static_cast<double>(n_audit - 1);
        if (phi.second(x) < -1e-12 || (!drift_free && phi.first(x) < -1e-12)) {
            report.audit_pass = false;
        }
    }
    if (!report.audit_pass) {
        throw std::invalid_argument("martingale_problem_check: " + phi.name +
                                    " is not increasing and convex on the barrier interval");
    }

    const TimeGrid& grid = start.path.grid();
    const double dt = grid.dt();
    SimConfig sim = cfg.sim;
    sim.keep_paths = true;
    sim.stop_time.reset();

    std::size_t hits = 0;
    auto compensated = [&](const Policy& policy, bool count_hits) {
        const SampleBatch batch = simulate_controlled(start, policy, u, sim);
        std::vector<double> values(batch.n_paths);
        for (std::size_t p = 0; p < batch.n_paths; ++p) {
            const PathView path = batch.path_view(p);
            double integral = 0.0;
            std::size_t k = k0;
            for (; k < grid.steps(); ++k) {
                const double x = path.at(k, 0);
                if (std::abs(x) >= barrier) {
                    break;
                }
                const PathView prefix(std::span<const double>(batch.paths).subspan(
                                          p * grid.knots(), grid.knots()),
                                      1, k, grid.t0(), dt);
                Vec grad(1);
                grad(0) = phi.first(x);
                Mat hess(1, 1);
                hess(0, 0) = phi.second(x);
                integral += generator_G(grad, hess, theta_at(u, grid.time(k), prefix)) * dt;
            }
            if (count_hits && k < grid.steps()) {
                ++hits;
            }
            values[p] = phi.value(path.at(k, 0)) - phi.value(path.at(k0, 0)) - integral;
        }
        return summarize(values, batch.antithetic);
    };

    const double growth = u.field.constants().growth.value_or(0.0);
    report.allowance = dt * (grid.horizon() - start.t) * growth;

    const Estimate ext = compensated(extremal_policy(u), true);
    report.barrier_hits = hits;
    report.extremal = {"extremal", ext.mean, ext.std_error,
                       std::abs(ext.mean) <= 3.0 * ext.std_error + report.allowance};

    const std::size_t remaining = grid.steps() - k0;
    const std::size_t epochs = std::clamp<std::size_t>(cfg.random_epochs, 1, remaining);
    const std::size_t length = (remaining + epochs - 1) / epochs;
    const NoiseStream rng(derive_seed(cfg.sim.seed, 0xAB1));
    report.pass = report.extremal.pass;
    for (std::size_t r = 0; r < cfg.random_policies; ++r) {
        std::vector<std::size_t> controls(epochs);
        for (std::size_t e = 0; e < epochs; ++e) {
            controls[e] = std::min(u.controls.size() - 1,
                                   static_cast<std::size_t>(rng.uniform(r, e, 0) *
                                                            static_cast<double>(u.controls.size())));
        }
        const Policy policy = Policy::open_loop(controls, length);
        const Estimate e = compensated(policy, false);
        CompensatedMean m{policy.summary(), e.mean, e.std_error,
                          e.mean <= 3.0 * e.std_error + report.allowance};
        report.pass = report.pass && m.pass;
        report.random.push_back(std::move(m));
    }
    return report;
}

std::vector<ConvergenceRow> derivative_sweep(const TestFunctional& F, double t,
                                             const DiscretePath& path, DerivativeKind kind,
                                             double h0, std::size_t levels) {
    if (!F.analytic) {
        throw std::invalid_argument("derivative_sweep: functional has no analytic derivatives");
    }
    const FunctionalDerivatives exact = F.analytic(t, path);
    std::vector<ConvergenceRow> rows;
    double h = h0;
    for (std::size_t l = 0; l < levels; ++l, h *= 0.5) {
        ConvergenceRow row;
        row.h = h;
        switch (kind) {
        case DerivativeKind::horizontal:
            row.estimate = horizontal_derivative(F, t, path, h);
            row.analytic = exact.horizontal;
            break;
        case DerivativeKind::gradient:
            row.estimate = vertical_gradient(F, t, path, h)(0);
            row.analytic = exact.gradient(0);
            break;
        case DerivativeKind::hessian:
            row.estimate = vertical_hessian(F, t, path, h)(0, 0);
            row.analytic = exact.hessian(0, 0);
            break;
        }
        row.error = std::abs(row.estimate - row.analytic);
        rows.push_back(row);
    }
    return rows;
}

double observed_order(std::span<const ConvergenceRow> rows) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double n = 0.0;
    for (const auto& r : rows) {
        if (!(r.error > 0.0)) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        const double x = std::log(r.h);
        const double y = std::log(r.error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1.0;
    }
    if (n < 2.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_sweep_csv(std::ostream& out, std::span<const ConvergenceRow> rows) {
    out << "h,estimate,analytic,error\n";
    const auto precision = out.precision(17);
    for (const auto& r : rows) {
        out << r.h << ',' << r.estimate << ',' << r.analytic << ',' << r.error << '\n';
    }
    out.precision(precision);
}

} // namespace nlsem
