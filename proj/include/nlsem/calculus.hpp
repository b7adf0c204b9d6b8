#pragma once

#include "nlsem/coefficients.hpp"
#include "nlsem/pathspace.hpp"
#include "nlsem/policy.hpp"
#include "nlsem/simulate.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nlsem {

struct FunctionalDerivatives {
    double horizontal = 0.0;
    Vec gradient;
    Mat hessian; ///< symmetric
    double h_horizontal = 0.0;
    double h_vertical = 0.0;
};

/// Non-anticipative functional F(t, w); the evaluator may only read knots <= t.
/// F must also accept times between knots (it sees the path frozen after its last knot <= t).
struct TestFunctional {
    std::string name;
    std::function<double(double t, const DiscretePath& path)> eval;
    /// Optional analytic derivatives for convergence checks.
    std::function<FunctionalDerivatives(double t, const DiscretePath& path)> analytic;
    double growth_c = 0.0;
    double growth_q = 0.0;
};

/// [F(t + h, w(. ^ t)) - F(t, w(. ^ t))] / h. At t = T uses the left variant at T - h.
double horizontal_derivative(const TestFunctional& F, double t, const DiscretePath& path, double h);

/// Central differences of F(t, w + h e_i 1_[t,T]).
Vec vertical_gradient(const TestFunctional& F, double t, const DiscretePath& path, double h);

/// Iterated central bumps, symmetrized (H + H^T) / 2.
Mat vertical_hessian(const TestFunctional& F, double t, const DiscretePath& path, double h);

/// Defaults: h_horizontal = dt, h_vertical = 1e-4 (1 + sup|w|).
FunctionalDerivatives functional_derivatives(const TestFunctional& F, double t,
                                             const DiscretePath& path,
                                             std::optional<double> h_horizontal = {},
                                             std::optional<double> h_vertical = {});

/// max over the image of <p, b> + tr(M a) / 2.
double generator_G(const Vec& gradient, const Mat& hessian, std::span<const ThetaPoint> theta);
double generator_G(double t, const DiscretePath& path, const FunctionalDerivatives& derivs,
                   const UncertaintySet& u);

struct ResidualSteps {
    double h_t = 1e-3;
    double h_x = 1e-3;
};

/// d_t v + sup_f {b v_x + a v_xx / 2} at (t, x) by finite differences (central in
/// time where possible, forward at t - h_t < 0). Markovian d = 1 fields only.
/// Throws std::domain_error for probes at or beyond the horizon.
double viscosity_residual(const std::function<double(double, double)>& v, double t, double x,
                          double horizon, const UncertaintySet& u, const ResidualSteps& steps);

/// Increasing convex C^2 test function phi with phi', phi''.
struct IcxFunction {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> first;
    std::function<double(double)> second;
};

struct MartingaleConfig {
    SimConfig sim;
    std::size_t random_policies = 10;
    std::size_t random_epochs = 4;
    /// Points in [-barrier, barrier] at which phi' and phi'' are audited.
    std::size_t audit_points = 201;
};

struct CompensatedMean {
    std::string policy;
    double mean = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

struct MartingaleReport {
    CompensatedMean extremal;
    std::vector<CompensatedMean> random;
    double allowance = 0.0; ///< dt (T - s) C_T
    std::size_t barrier_hits = 0;
    bool audit_pass = false;
    bool pass = false;
};

/// Mean of phi(X_{T ^ rho}) - phi(X_{s ^ rho}) - int_{s ^ rho}^{T ^ rho} G(r, X, phi) dr under
/// the extremal policy (must vanish) and under random open-loop policies (must not be
/// positive). rho is the first knot with |X| >= barrier.
/// Throws std::invalid_argument when phi fails the audit (phi'' >= 0 everywhere; phi' >= 0
/// wherever the drift image is not a single point).
MartingaleReport martingale_problem_check(const IcxFunction& phi, double barrier,
                                          const PathPair& start, const UncertaintySet& u,
                                          const MartingaleConfig& cfg);

struct ConvergenceRow {
    double h = 0.0;
    double estimate = 0.0;
    double analytic = 0.0;
    double error = 0.0;
};

enum class DerivativeKind { horizontal, gradient, hessian };

/// Errors at h, h/2, h/4, ... (`levels` values) against the analytic derivative
/// (first coordinate for gradient and hessian).
std::vector<ConvergenceRow> derivative_sweep(const TestFunctional& F, double t,
                                             const DiscretePath& path, DerivativeKind kind,
                                             double h0, std::size_t levels);

/// Least-squares slope of log(error) against log(h).
double observed_order(std::span<const ConvergenceRow> rows);

/// CSV with header h,estimate,analytic,error.
void write_sweep_csv(std::ostream& out, std::span<const ConvergenceRow> rows);

} // namespace nlsem
