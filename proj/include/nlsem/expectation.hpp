#pragma once

#include "nlsem/coefficients.hpp"
#include "nlsem/pathspace.hpp"
#include "nlsem/policy.hpp"
#include "nlsem/simulate.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nlsem {

enum class Optimizer { exhaustive, coordinate_ascent, extremal_shortcut };
enum class PolicyClass { open_loop, feedback };

std::string to_string(Optimizer o);
std::string to_string(PolicyClass c);
Optimizer parse_optimizer(const std::string& s);
PolicyClass parse_policy_class(const std::string& s);

struct EngineConfig {
    Optimizer optimizer = Optimizer::coordinate_ascent;
    PolicyClass policy_class = PolicyClass::open_loop;
    /// Decision epochs over [t, T]; controls are piecewise constant on each.
    std::size_t epochs = 4;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    bool antithetic = false;
    /// Search on the first pilot_paths paths, then re-evaluate the finalists on
    /// all n_paths. 0 searches on the full batch.
    std::size_t pilot_paths = 0;
    std::size_t finalists = 3;
    std::size_t max_iterations = 20;
    double rel_tolerance = 1e-4;
    double abs_tolerance = 1e-6;
    std::size_t random_restarts = 2;
    std::size_t exhaustive_cap = 100000;
    /// Buckets of the current value used by feedback tables.
    std::size_t feedback_buckets = 4;
    std::size_t threads = 0;
};

struct OptimizerTrace {
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    std::vector<double> improvements;
};

struct ValueEstimate {
    double value = 0.0;
    double std_error = 0.0;
    Policy policy = Policy::constant(0);
    OptimizerTrace trace;
};

/// sup over searched policies of the common-random-number estimate of E[psi(w (x)_t X)].
/// At t = T the value is psi(stop(w, T)) with zero error and no simulation.
/// `warm_start` policies are always evaluated and compete for the argmax.
ValueEstimate upper_expectation(const PathPair& start, const PathFunctional& psi,
                                const UncertaintySet& u, const EngineConfig& cfg,
                                std::span<const Policy> warm_start = {});

/// Estimate of a fixed policy on the engine's noise.
Estimate evaluate_policy(const PathPair& start, const PathFunctional& psi, const UncertaintySet& u,
                         const Policy& policy, std::size_t n_paths, std::uint64_t seed,
                         bool antithetic = false, std::size_t threads = 0);

/// Feedback rule picking argmax_f0 b and argmax_f1 a at every (t, prefix);
/// ties go to the larger index. Requires a product control set and d = 1.
Policy extremal_policy(const UncertaintySet& u);

/// Number of open-loop policies with the given epochs; saturates at SIZE_MAX.
std::size_t open_loop_count(std::size_t n_controls, std::size_t epochs);

/// All open-loop policies over `epochs` epochs covering `steps` steps, in
/// lexicographic order. Throws BudgetError above `cap`.
std::vector<Policy> enumerate_open_loop(std::size_t n_controls, std::size_t epochs,
                                        std::size_t steps, std::size_t cap);

// --- dynamic programming ---------------------------------------------------

struct DppConfig {
    EngineConfig engine;        ///< used for the direct value and the inner values
    std::size_t outer_paths = 0; ///< 0 = engine.n_paths
    std::size_t inner_paths = 0; ///< 0 = ceil(sqrt(outer_paths))
    std::size_t first_stage_epochs = 2;
    double growth_constant = 1.0; ///< C in the allowance 0.5 dt C
    double max_step_evaluations = 5e9;
};

struct DppReport {
    double lhs = 0.0;
    double lhs_std_error = 0.0;
    double rhs = 0.0;
    double rhs_std_error = 0.0;
    double gap = 0.0;
    double combined_std_error = 0.0;
    double allowance = 0.0;
    std::size_t outer_paths = 0;
    std::size_t inner_paths = 0;
    std::size_t first_stage_policies = 0;
    bool pass = false;
    std::string note;
};

/// Compares v(t, w) with sup over first-stage policies of the mean of v(tau, w (x)_t X^(i)).
DppReport dpp_check(const PathPair& start, double tau, const PathFunctional& psi,
                    const UncertaintySet& u, const DppConfig& cfg);

// --- Markovian HJB oracle --------------------------------------------------

struct HjbGrid {
    double x_min = -5.0;
    double x_max = 5.0;
    std::size_t n_x = 401;
    std::size_t n_t = 400;
};

/// v on an (n_t + 1) x n_x grid, time index 0 = t0.
class ValueSurface {
public:
    ValueSurface(double t0, double horizon, HjbGrid grid, std::vector<double> values);

    double t0() const noexcept { return t0_; }
    double horizon() const noexcept { return horizon_; }
    const HjbGrid& grid() const noexcept { return grid_; }
    double dt() const noexcept { return (horizon_ - t0_) / static_cast<double>(grid_.n_t); }
    double dx() const noexcept {
        return (grid_.x_max - grid_.x_min) / static_cast<double>(grid_.n_x - 1);
    }
    double time(std::size_t n) const noexcept { return t0_ + static_cast<double>(n) * dt(); }
    double x(std::size_t i) const noexcept { return grid_.x_min + static_cast<double>(i) * dx(); }
    double at(std::size_t n, std::size_t i) const noexcept { return values_[n * grid_.n_x + i]; }
    /// Bilinear interpolation; clamps to the grid.
    double operator()(double t, double x) const noexcept;

private:
    double t0_;
    double horizon_;
    HjbGrid grid_;
    std::vector<double> values_;
};

/// Explicit monotone scheme for d_t v + sup_f {b v_x + a v_xx / 2} = 0, v(T) = g:
/// upwind drift, central diffusion, linear extrapolation at the edges.
/// Throws CflError (with the required n_t) when dt max_f(a/dx^2 + |b|/dx) > 1.
ValueSurface markov_hjb_oracle(const UncertaintySet& u, const std::function<double(double)>& g,
                               double t0, double horizon, const HjbGrid& grid);

/// Smallest n_t satisfying the CFL bound for the given spatial grid.
std::size_t hjb_required_steps(const UncertaintySet& u, double t0, double horizon,
                               const HjbGrid& grid);

// --- continuity probes -----------------------------------------------------

struct HolderLevel {
    std::size_t refinement = 1;
    std::size_t n_controls = 0;
    double max_ratio = 0.0;
    double max_ratio_noise = 0.0; ///< standard error of the ratio attaining the max
    std::vector<double> ratios;   ///< NaN for excluded (zero-distance) pairs
};

struct HolderReport {
    std::vector<HolderLevel> levels;
    double slope = 0.0; ///< change in max ratio per refinement level
    std::size_t excluded_pairs = 0;
    bool pass = false;
};

struct HolderProbeConfig {
    EngineConfig engine;
    std::size_t base_controls = 3;
    std::size_t levels = 2;
};

/// Control-grid factory: n controls per factor -> uncertainty set.
using FieldFactory = std::function<UncertaintySet(std::size_t n_controls)>;

/// |v(t,w) - v(s,a)| / (|t-s|^{1/2} + sup_r |w(r^t) - a(r^s)|) over pairs, at
/// successive 2x refinements of the time step and the control grid. Pass iff the
/// max ratio is finite and never rises by more than 3 noise units between levels.
HolderReport holder_modulus_probe(std::span<const std::pair<PathPair, PathPair>> pairs,
                                  const PathFunctional& psi, const FieldFactory& make_field,
                                  const HolderProbeConfig& cfg);

struct SemicontinuityReport {
    std::vector<double> sequence_values;
    std::vector<double> sequence_std_errors;
    std::vector<double> distances; ///< d((t_n, w_n), (t, w))
    double limit_value = 0.0;
    double limit_std_error = 0.0;
    double lim_inf = 0.0; ///< min over the second half of the sequence
    double lim_sup = 0.0;
    double gap = 0.0;     ///< last sequence value minus the limit value
    double tolerance = 0.0;
    bool lower_semicontinuity_failure = false;
    bool upper_semicontinuity_failure = false;
};

SemicontinuityReport semicontinuity_probe(std::span<const PathPair> sequence, const PathPair& limit,
                                          const PathFunctional& psi, const UncertaintySet& u,
                                          const EngineConfig& cfg, double tolerance);

} // namespace nlsem
