#include "nlsem/simulate.hpp"

#include "nlsem/noise.hpp"
#include "nlsem/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace nlsem {

namespace {

constexpr std::size_t kPathChunk = 64;

} // namespace

DiscretePath SampleBatch::path(std::size_t i) const {
    if (!has_paths()) {
        throw std::logic_error("SampleBatch::path: batch was simulated without keep_paths");
    }
    const std::size_t stride = grid.knots() * dim;
    std::vector<double> values(paths.begin() + static_cast<std::ptrdiff_t>(i * stride),
                               paths.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    return DiscretePath(grid, dim, std::move(values));
}

PathView SampleBatch::path_view(std::size_t i) const {
    if (!has_paths()) {
        throw std::logic_error("SampleBatch::path_view: batch was simulated without keep_paths");
    }
    const std::size_t stride = grid.knots() * dim;
    return PathView(std::span<const double>(paths).subspan(i * stride, stride), dim, grid.steps(),
                    grid.t0(), grid.dt());
}

Vec euler_step(const PathView& prefix, double t, double dt, std::span<const double> f,
               const CoefficientField& field, const Vec& dw) {
    const std::size_t d = prefix.dim();
    Vec x(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        x(static_cast<Eigen::Index>(i)) = prefix.current(i);
    }
    Vec next = x + field.drift(f, t, prefix) * dt + field.vol(f, t, prefix) * dw;
    if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite state after the Euler step from t=" << t << " (knot "
            << prefix.last_index() << ", x[0]=" << x(0) << ")";
        throw SimulationError(msg.str());
    }
    return next;
}

SampleBatch simulate_controlled(const PathPair& start, const Policy& policy,
                                const UncertaintySet& u, const SimConfig& cfg,
                                std::span<const PathFunctional> functionals) {
    if (cfg.n_paths == 0) {
        throw std::invalid_argument("simulate_controlled: n_paths must be positive");
    }
    if (cfg.antithetic && cfg.n_paths % 2 != 0) {
        throw std::invalid_argument("simulate_controlled: antithetic sampling needs an even path count");
    }
    const CoefficientField& field = u.field;
    const DiscretePath& omega = start.path;
    if (omega.dim() != field.dim()) {
        throw GridMismatchError("simulate_controlled: start path and field dimensions differ");
    }
    if (policy.kind() != Policy::Kind::rule && policy.max_control() >= u.controls.size()) {
        throw SimulationError("simulate_controlled: policy refers to control " +
                              std::to_string(policy.max_control()) + " but only " +
                              std::to_string(u.controls.size()) + " exist");
    }
    const TimeGrid& grid = omega.grid();
    const std::size_t k0 = start.index();
    const std::size_t k_end = cfg.stop_time ? grid.index_of(*cfg.stop_time) : grid.steps();
    if (k_end < k0) {
        throw std::invalid_argument("simulate_controlled: stop time precedes the start time");
    }
    const std::size_t d = omega.dim();
    const std::size_t r = field.noise_dim();
    const std::size_t knots = grid.knots();
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double prefix_sup = running_sup_norm(omega.prefix(k0));

    SampleBatch batch{grid, d, k0, k_end, cfg.n_paths, cfg.seed, cfg.antithetic, {}, {}, {}, {}};
    batch.terminal.resize(cfg.n_paths * d);
    batch.running_sup.resize(cfg.n_paths);
    batch.functionals.assign(functionals.size(), std::vector<double>(cfg.n_paths));
    if (cfg.keep_paths) {
        batch.paths.resize(cfg.n_paths * knots * d);
    }
    const NoiseStream noise(cfg.seed);

    parallel_for(
        cfg.n_paths, kPathChunk,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> buffer(omega.data());
            Vec dw(static_cast<Eigen::Index>(r));
            for (std::size_t p = begin; p < end; ++p) {
                std::copy(omega.data().begin(),
                          omega.data().begin() + static_cast<std::ptrdiff_t>((k0 + 1) * d),
                          buffer.begin());
                const std::uint64_t noise_path = cfg.antithetic ? p / 2 : p;
                const double sign = (cfg.antithetic && p % 2 == 1) ? -1.0 : 1.0;
                double sup = prefix_sup;
                for (std::size_t k = k0; k < k_end; ++k) {
                    const PathView prefix(buffer, d, k, grid.t0(), dt);
                    const double t = grid.time(k);
                    const PolicyContext ctx{k - k0, k, t, prefix, sup};
                    const std::size_t c = policy.control(ctx);
                    if (c >= u.controls.size()) {
                        throw SimulationError("policy returned control index " + std::to_string(c) +
                                              " out of range at knot " + std::to_string(k));
                    }
                    for (std::size_t j = 0; j < r; ++j) {
                        dw(static_cast<Eigen::Index>(j)) =
                            sign * sqrt_dt * noise.normal(noise_path, k, static_cast<std::uint32_t>(j));
                    }
                    const Vec next = euler_step(prefix, t, dt, u.controls.point(c), field, dw);
                    double norm2 = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        buffer[(k + 1) * d + i] = next(static_cast<Eigen::Index>(i));
                        norm2 += next(static_cast<Eigen::Index>(i)) * next(static_cast<Eigen::Index>(i));
                    }
                    sup = std::max(sup, std::sqrt(norm2));
                }
                for (std::size_t k = k_end + 1; k < knots; ++k) {
                    std::copy_n(buffer.begin() + static_cast<std::ptrdiff_t>(k_end * d), d,
                                buffer.begin() + static_cast<std::ptrdiff_t>(k * d));
                }
                std::copy_n(buffer.begin() + static_cast<std::ptrdiff_t>(k_end * d), d,
                            batch.terminal.begin() + static_cast<std::ptrdiff_t>(p * d));
                batch.running_sup[p] = sup;
                const PathView full(buffer, d, grid.steps(), grid.t0(), dt);
                for (std::size_t j = 0; j < functionals.size(); ++j) {
                    batch.functionals[j][p] = functionals[j](full);
                }
                if (cfg.keep_paths) {
                    std::copy(buffer.begin(), buffer.end(),
                              batch.paths.begin() + static_cast<std::ptrdiff_t>(p * knots * d));
                }
            }
        },
        cfg.threads);
    return batch;
}

Estimate summarize(std::span<const double> samples, bool antithetic) {
    std::vector<double> pooled;
    if (antithetic) {
        pooled.reserve(samples.size() / 2);
        for (std::size_t i = 0; i + 1 < samples.size(); i += 2) {
            pooled.push_back(0.5 * (samples[i] + samples[i + 1]));
        }
        samples = pooled;
    }
    const std::size_t n = samples.size();
    if (n == 0) {
        throw std::invalid_argument("summarize: no samples");
    }
    const double mean = stable_sum(samples) / static_cast<double>(n);
    if (n == 1) {
        return {mean, 0.0};
    }
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        sq[i] = (samples[i] - mean) * (samples[i] - mean);
    }
    const double var = stable_sum(sq) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

Estimate estimate_expectation(const SampleBatch& batch, const PathFunctional& psi) {
    std::vector<double> values(batch.n_paths);
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
        values[i] = psi(batch.path_view(i));
    }
    return summarize(values, batch.antithetic);
}

Estimate estimate_expectation(const SampleBatch& batch, std::size_t functional_index) {
    return summarize(batch.functionals.at(functional_index), batch.antithetic);
}

MomentReport moment_check(const SampleBatch& batch, unsigned p, double band) {
    if (p == 0) {
        throw std::invalid_argument("moment_check: p must be at least 1");
    }
    std::vector<double> values(batch.n_paths);
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
        values[i] = std::pow(batch.running_sup[i], 2.0 * p);
    }
    MomentReport report;
    report.p = p;
    report.band = band;
    report.estimate = stable_sum(values) / static_cast<double>(values.size());
    const std::size_t half = std::max<std::size_t>(1, values.size() / 2);
    report.half_estimate =
        stable_sum(std::span<const double>(values).first(half)) / static_cast<double>(half);
    report.finite = std::isfinite(report.estimate) && std::isfinite(report.half_estimate);
    if (report.half_estimate != 0.0) {
        report.ratio = report.estimate / report.half_estimate;
    } else {
        report.ratio = report.estimate == 0.0 ? 1.0 : INFINITY;
    }
    report.pass = report.finite && std::abs(report.ratio - 1.0) <= band;
    return report;
}

void write_paths_csv(std::ostream& out, const SampleBatch& batch) {
    if (!batch.has_paths()) {
        throw std::logic_error("write_paths_csv: batch was simulated without keep_paths");
    }
    out << "path_id,t";
    for (std::size_t i = 0; i < batch.dim; ++i) {
        out << ",x_" << (i + 1);
    }
    out << '\n';
    const auto precision = out.precision(17);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const PathView v = batch.path_view(p);
        for (std::size_t k = batch.start_index; k <= batch.end_index; ++k) {
            out << p << ',' << batch.grid.time(k);
            for (std::size_t i = 0; i < batch.dim; ++i) {
                out << ',' << v.at(k, i);
            }
            out << '\n';
        }
    }
    out.precision(precision);
}

} // namespace nlsem
