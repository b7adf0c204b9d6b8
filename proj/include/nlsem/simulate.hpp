#pragma once

#include "nlsem/coefficients.hpp"
#include "nlsem/pathspace.hpp"
#include "nlsem/policy.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace nlsem {

/// psi evaluated on a full path (knots 0..N).
using PathFunctional = std::function<double(const PathView& path)>;

struct SimConfig {
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    /// Paths 2i and 2i+1 use opposite increments; n_paths must be even.
    bool antithetic = false;
    /// Store every simulated path (n_paths x knots x d doubles).
    bool keep_paths = false;
    /// Stop simulating at this knot time; later knots hold the stopped value.
    std::optional<double> stop_time;
    std::size_t threads = 0; ///< 0 = thread_count()
};

struct SampleBatch {
    TimeGrid grid;
    std::size_t dim = 1;
    std::size_t start_index = 0;
    std::size_t end_index = 0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    bool antithetic = false;
    std::vector<double> terminal;    ///< n_paths x dim, state at end_index
    std::vector<double> running_sup; ///< sup_{s<=T} |X_s| per path, prefix included
    std::vector<double> paths;       ///< only with keep_paths
    std::vector<std::vector<double>> functionals; ///< [functional][path]

    bool has_paths() const noexcept { return !paths.empty(); }
    DiscretePath path(std::size_t i) const;
    PathView path_view(std::size_t i) const;
    std::span<const double> terminal_state(std::size_t i) const {
        return std::span<const double>(terminal).subspan(i * dim, dim);
    }
};

/// x + b dt + s dW with (b, s) evaluated at (f, t, prefix); x is the prefix's
/// current value. Throws SimulationError on a non-finite result.
Vec euler_step(const PathView& prefix, double t, double dt, std::span<const double> f,
               const CoefficientField& field, const Vec& dw);

/// Simulates X on [start.t, T] (or stop_time) from start.path(start.t) under the policy;
/// coefficients see start.path on [0, start.t) followed by the simulated segment.
/// Each functional is evaluated on every completed path.
SampleBatch simulate_controlled(const PathPair& start, const Policy& policy,
                                const UncertaintySet& u, const SimConfig& cfg,
                                std::span<const PathFunctional> functionals = {});

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Mean and standard error; with antithetic pairs the pair averages are the samples.
Estimate summarize(std::span<const double> samples, bool antithetic = false);

/// Requires a batch simulated with keep_paths.
Estimate estimate_expectation(const SampleBatch& batch, const PathFunctional& psi);
/// Functional precomputed during simulation.
Estimate estimate_expectation(const SampleBatch& batch, std::size_t functional_index);

struct MomentReport {
    unsigned p = 1;
    double estimate = 0.0;      ///< E sup_{s<=T} |X_s|^{2p} over all paths
    double half_estimate = 0.0; ///< same over the first half of the paths
    double ratio = 1.0;
    double band = 0.25;
    bool finite = true;
    bool pass = true;
};

/// Pass iff the estimate is finite and |estimate / half_estimate - 1| <= band.
MomentReport moment_check(const SampleBatch& batch, unsigned p, double band = 0.25);

/// CSV rows path_id,t,x_1..x_d; requires kept paths.
void write_paths_csv(std::ostream& out, const SampleBatch& batch);

} // namespace nlsem
