#include "nlsem/scenario.hpp"

#include "nlsem/calculus.hpp"
#include "nlsem/coefficients.hpp"
#include "nlsem/expectation.hpp"
#include "nlsem/expression.hpp"
#include "nlsem/noise.hpp"
#include "nlsem/pathspace.hpp"
#include "nlsem/simulate.hpp"
#include "nlsem/types.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace nlsem {

// --- registry --------------------------------------------------------------

const std::vector<ScenarioInfo>& scenario_registry() {
    static const std::vector<ScenarioInfo> registry = {
        {"gheat", "G-heat equation: zero drift, volatility a in [a_lo, a_hi], call payoff",
         "the path-dependent PDE dv/dt + G(t, w, v) = 0 with G = sup_a a v_xx / 2; for a convex "
         "payoff the supremum is attained at the extremal volatility a_hi, so the value is the "
         "Bachelier price at a_hi"},
        {"drift", "drift uncertainty b in [b_lo, b_hi], unit volatility, linear payoff",
         "v(t, w) = w(t) + b_hi (T - t): the sublinear expectation of X_T is attained by the "
         "constant upper-endpoint drift; checked against exhaustive policy enumeration"},
        {"interval", "interval uncertainty for drift and volatility, with the engine invariants",
         "the interval example for the uncertainty set Theta(t, w), the growth, Lipschitz and "
         "convexity conditions on Theta, the moment bound E sup|X|^{2p} < infinity, and the "
         "sublinear expectation axioms (monotone, constant preserving, subadditive, positively "
         "homogeneous)"},
        {"delay", "linear delay equation with uncertain coefficients",
         "path-dependent coefficients b(f, t, w) = b0(f) w(t) + int b1(f, s) w(s) ds: the "
         "growth and Lipschitz conditions and the moment bound for path-dependent Theta"},
        {"counterexample", "discontinuous value function with drift b°(x) = sgn(x)√|x|",
         "the counterexample with b°(x) = sgn(x)√|x| and zero volatility: left and right limits "
         "of v at x = 0 differ, so v is not continuous without Lipschitz coefficients"},
        {"dpp", "dynamic programming (tower) property by nested simulation",
         "the dynamic programming principle v(t, w) = sup_P E^P[v(tau, X)] for a deterministic "
         "intermediate time tau"},
        {"holder", "Hölder modulus of the value function under bounded Lipschitz coefficients",
         "the estimate |v(t, w) - v(s, a)| <= C (|t - s|^{1/2} + sup_r |w(r ^ t) - a(r ^ s)|)"},
        {"martingale", "nonlinear martingale problem for increasing convex test functions",
         "phi(X) - int G(r, X, phi) dr is an E-martingale for phi in M_icx (stopped at the "
         "barrier); the extremal policy attains it and other policies give supermartingales"},
        {"hjb-oracle", "Markovian HJB finite-difference oracle and viscosity residuals",
         "the Markovian reduction of the path-dependent PDE, dv/dt + sup_f {b v_x + a v_xx / 2} "
         "= 0, v(T) = g, and the residual form of the viscosity inequalities"},
        {"custom", "user-supplied path-dependent drift and volatility expressions",
         "the sublinear expectation for an arbitrary path-dependent uncertainty set built from "
         "expressions in the control, time, current value, running sup and window integral"},
    };
    return registry;
}

const ScenarioInfo& scenario_info(const std::string& id) {
    for (const auto& info : scenario_registry()) {
        if (info.id == id) {
            return info;
        }
    }
    throw ConfigError("unknown scenario '" + id + "' (see `nlsem list`)");
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

std::string canonical_results(const json& results) {
    json copy = results;
    copy.erase("wall_time_s");
    return copy.dump(2);
}

json load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot read config file " + file.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
    }
}

// --- config reading --------------------------------------------------------

namespace {

/// Typed, range-checked access to one JSON object; unknown keys are errors.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            fail("must be an object");
        }
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(where_ + ": " + what);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, std::optional<double> fallback,
                  double lo = -std::numeric_limits<double>::infinity(),
                  double hi = std::numeric_limits<double>::infinity()) {
        if (!has(key)) {
            if (!fallback) {
                fail("missing required number '" + key + "'");
            }
            return *fallback;
        }
        const json& v = raw(key);
        if (!v.is_number()) {
            fail("'" + key + "' must be a number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x) || x < lo || x > hi) {
            std::ostringstream msg;
            msg << "'" << key << "' = " << x << " outside [" << lo << ", " << hi << "]";
            fail(msg.str());
        }
        return x;
    }

    std::size_t integer(const std::string& key, std::size_t fallback, std::size_t lo,
                        std::size_t hi) {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
            fail("'" + key + "' must be a non-negative integer");
        }
        const auto x = v.get<std::uint64_t>();
        if (x < lo || x > hi) {
            fail("'" + key + "' = " + std::to_string(x) + " outside [" + std::to_string(lo) +
                 ", " + std::to_string(hi) + "]");
        }
        return static_cast<std::size_t>(x);
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail("'" + key + "' must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_boolean()) {
            fail("'" + key + "' must be true or false");
        }
        return v.get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback) {
        if (!has(key)) {
            if (!fallback) {
                fail("missing required string '" + key + "'");
            }
            return *fallback;
        }
        const json& v = raw(key);
        if (!v.is_string()) {
            fail("'" + key + "' must be a string");
        }
        return v.get<std::string>();
    }

    /// Number or expression string, as expression text.
    std::string expression_text(const std::string& key, std::optional<std::string> fallback) {
        if (has(key) && j_.at(key).is_number()) {
            std::ostringstream out;
            out.precision(17);
            out << raw(key).get<double>();
            return out.str();
        }
        return string(key, std::move(fallback));
    }

    /// Pair [lo, hi] of numbers or expression strings.
    std::pair<std::string, std::string> bounds(const std::string& key,
                                               std::pair<std::string, std::string> fallback) {
        if (!has(key)) {
            return fallback;
        }
        const json& v = raw(key);
        if (!v.is_array() || v.size() != 2) {
            fail("'" + key + "' must be a two-element array [lo, hi]");
        }
        auto text = [&](const json& e) {
            if (e.is_number()) {
                std::ostringstream out;
                out.precision(17);
                out << e.get<double>();
                return out.str();
            }
            if (e.is_string()) {
                return e.get<std::string>();
            }
            fail("'" + key + "' entries must be numbers or expression strings");
        };
        return {text(v[0]), text(v[1])};
    }

    Section child(const std::string& key) {
        static const json empty = json::object();
        if (!has(key)) {
            return Section(empty, where_ + "." + key);
        }
        return Section(raw(key), where_ + "." + key);
    }

    const std::string& where() const noexcept { return where_; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) {
                fail("unknown key '" + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

Expression parse_expr(const Section& where, const std::string& text,
                      std::vector<std::string> variables) {
    try {
        return Expression::parse(text, std::move(variables));
    } catch (const ConfigError& e) {
        throw ConfigError(where.where() + ": " + e.what());
    }
}

Vec vec1(double x) {
    Vec v(1);
    v(0) = x;
    return v;
}

Mat mat1(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return m;
}

// --- fields ------------------------------------------------------------------

struct ControlOverride {
    std::size_t controls = 0;
    std::size_t vol_controls = 0;
};

DeclaredConstants read_constants(Section s, DeclaredConstants base = {}) {
    if (s.has("growth")) {
        base.growth = s.number("growth", {}, 0.0);
    }
    if (s.has("lipschitz")) {
        base.lipschitz = s.number("lipschitz", {}, 0.0);
    }
    if (s.has("bound")) {
        base.bound = s.number("bound", {}, 0.0);
    }
    s.finish();
    return base;
}

std::vector<PathPair> validation_points(const TimeGrid& grid) {
    std::vector<PathPair> out;
    for (double x : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
        const DiscretePath p = DiscretePath::scalar(grid, [x](double) { return x; });
        for (std::size_t k : {std::size_t{0}, grid.steps() / 2, grid.steps()}) {
            out.emplace_back(grid.time(k), p);
        }
    }
    return out;
}

/// Builds the uncertainty set described by a "field" object. The factory form
/// is kept so probes can rebuild the set at other control resolutions.
struct FieldSpec {
    std::string type;
    std::function<UncertaintySet(ControlOverride)> make;
    std::size_t controls = 1;
    std::size_t vol_controls = 1;
    UncertaintySet build() const { return make({}); }
};

FieldSpec read_field(Section s, const TimeGrid& grid) {
    FieldSpec spec;
    spec.type = s.string("type", {});
    const auto& t = spec.type;
    const DeclaredConstants declared = read_constants(s.child("constants"));
    const std::size_t n = s.integer("controls", 3, 1, 1000);
    const std::size_t nv_raw = s.integer("vol_controls", 0, 0, 1000);
    spec.controls = n;
    spec.vol_controls = nv_raw == 0 ? n : nv_raw;
    auto product = [n, nv_raw](ControlOverride o) {
        const std::size_t c = o.controls ? o.controls : n;
        const std::size_t v = o.vol_controls ? o.vol_controls : (nv_raw ? nv_raw : c);
        return ControlSet::product(ControlSet::unit_grid(c), ControlSet::unit_grid(v), true);
    };
    auto guard = [](auto&& fn) {
        try {
            return fn();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("field: ") + e.what());
        }
    };

    if (t == "constant") {
        const double b = s.number("drift", 0.0);
        const double v = s.number("vol", 1.0, 0.0);
        s.finish();
        spec.controls = spec.vol_controls = 1;
        spec.make = [=](ControlOverride) {
            DeclaredConstants c = declared;
            if (!c.growth) {
                c.growth = b * b + v * v;
            }
            if (!c.lipschitz) {
                c.lipschitz = 0.0;
            }
            if (!c.bound) {
                c.bound = std::abs(b) + v;
            }
            return UncertaintySet{ControlSet::finite({{0.0}}),
                                  constant_field(vec1(b), mat1(v), c)};
        };
    } else if (t == "interval") {
        const auto b = s.bounds("b", {"-1", "1"});
        const auto a = s.bounds("a", {"1", "1"});
        s.finish();
        const std::vector<std::string> vars{"t", "x"};
        const Expression b_lo = parse_expr(s, b.first, vars);
        const Expression b_hi = parse_expr(s, b.second, vars);
        const Expression a_lo = parse_expr(s, a.first, vars);
        const Expression a_hi = parse_expr(s, a.second, vars);
        const bool constant = !b_lo.uses("t") && !b_lo.uses("x") && !b_hi.uses("t") &&
                              !b_hi.uses("x") && !a_lo.uses("t") && !a_lo.uses("x") &&
                              !a_hi.uses("t") && !a_hi.uses("x");
        const auto validation = validation_points(grid);
        spec.make = [=](ControlOverride o) {
            const std::size_t c = o.controls ? o.controls : n;
            const std::size_t v = o.vol_controls ? o.vol_controls : nv_raw;
            return guard([&] {
                if (constant) {
                    UncertaintySet u = interval_field(b_lo({0.0, 0.0}), b_hi({0.0, 0.0}),
                                                      a_lo({0.0, 0.0}), a_hi({0.0, 0.0}), c, v);
                    auto& k = u.field.constants();
                    if (declared.growth) k.growth = declared.growth;
                    if (declared.lipschitz) k.lipschitz = declared.lipschitz;
                    if (declared.bound) k.bound = declared.bound;
                    return u;
                }
                auto wrap = [](Expression e) -> ScalarPathFn {
                    return [e](double time, const PathView& w) { return e({time, w.current(0)}); };
                };
                IntervalBounds ib{wrap(b_lo), wrap(b_hi), wrap(a_lo), wrap(a_hi), true};
                return interval_field(ib, c, validation, declared, v);
            });
        };
        spec.make({}); // validates endpoint ordering now
    } else if (t == "markov" || t == "custom-expression") {
        const bool markov = t == "markov";
        const std::string drift = s.expression_text("drift", {});
        const std::string vol = s.expression_text("vol", {});
        const double window = markov ? 0.0 : s.number("window", 1.0, 1e-9);
        s.finish();
        std::vector<std::string> vars{"f0", "f1", "t", "x"};
        if (!markov) {
            vars.push_back("m");
            vars.push_back("i");
        }
        const Expression eb = parse_expr(s, drift, vars);
        const Expression es = parse_expr(s, vol, vars);
        spec.make = [=](ControlOverride o) {
            ControlSet controls = product(o);
            if (markov) {
                auto wrap = [](Expression e) {
                    return [e](std::span<const double> f, double time, double x) {
                        return e({f[0], f[1], time, x});
                    };
                };
                return UncertaintySet{controls,
                                      markov_field("markov", wrap(eb), wrap(es), declared)};
            }
            const bool needs_m = eb.uses("m") || es.uses("m");
            const bool needs_i = eb.uses("i") || es.uses("i");
            auto values = [=](std::span<const double> f, double time, const PathView& w) {
                return std::array<double, 6>{f[0], f[1], time, w.current(0),
                                             needs_m ? running_sup_norm(w) : 0.0,
                                             needs_i ? window_integral(w, window) : 0.0};
            };
            CoefficientField field(
                "custom", 1, 1,
                [eb, values](std::span<const double> f, double time, const PathView& w) {
                    return vec1(eb(values(f, time, w)));
                },
                [es, values](std::span<const double> f, double time, const PathView& w) {
                    return mat1(es(values(f, time, w)));
                },
                declared, false);
            return UncertaintySet{controls, field};
        };
    } else if (t == "delay") {
        const std::string b0 = s.expression_text("b0", "-0.5 + f0");
        const std::string b1 = s.expression_text("b1", "0");
        const std::string a0 = s.expression_text("a0", "1");
        const double window = s.number("window", 1.0, 1e-9);
        s.finish();
        const Expression e0 = parse_expr(s, b0, {"f0", "f1"});
        const Expression e1 = parse_expr(s, b1, {"f0", "f1", "s"});
        const Expression ea = parse_expr(s, a0, {"f0", "f1"});
        spec.make = [=](ControlOverride o) {
            DelayKernels k;
            k.b0 = [e0](std::span<const double> f) { return e0({f[0], f[1]}); };
            k.b1 = [e1](std::span<const double> f, double time) { return e1({f[0], f[1], time}); };
            k.a0 = [ea](std::span<const double> f) { return ea({f[0], f[1]}); };
            k.window = window;
            return UncertaintySet{product(o), delay_field(std::move(k), declared)};
        };
    } else if (t == "signed-sqrt") {
        s.finish();
        spec.controls = spec.vol_controls = 1;
        spec.make = [](ControlOverride) {
            return UncertaintySet{ControlSet::finite({{0.0}}), signed_sqrt_field()};
        };
    } else {
        s.fail("unknown field type '" + t +
               "' (constant | interval | markov | delay | custom-expression | signed-sqrt)");
    }
    return spec;
}

// --- payoffs -------------------------------------------------------------------

struct Payoff {
    std::string text;
    PathFunctional psi;
};

/// psi over the whole path: x = X_T, m = max_s X_s, avg = time average of X.
Payoff read_payoff(const Section& where, const std::string& text) {
    const Expression e = parse_expr(where, text, {"x", "m", "avg"});
    const bool needs_m = e.uses("m");
    const bool needs_avg = e.uses("avg");
    Payoff p;
    p.text = text;
    p.psi = [e, needs_m, needs_avg](const PathView& w) {
        double m = 0.0;
        double avg = 0.0;
        const std::size_t last = w.last_index();
        if (needs_m) {
            m = w.at(0, 0);
            for (std::size_t k = 1; k <= last; ++k) {
                m = std::max(m, w.at(k, 0));
            }
        }
        if (needs_avg && last > 0) {
            double sum = 0.5 * (w.at(0, 0) + w.at(last, 0));
            for (std::size_t k = 1; k < last; ++k) {
                sum += w.at(k, 0);
            }
            avg = sum / static_cast<double>(last);
        } else if (needs_avg) {
            avg = w.at(0, 0);
        }
        return e({w.current(0), m, avg});
    };
    return p;
}

// --- engine ------------------------------------------------------------------

EngineConfig read_engine(Section s, std::uint64_t seed, std::size_t threads, EngineConfig e) {
    try {
        e.optimizer = parse_optimizer(s.string("optimizer", to_string(e.optimizer)));
        e.policy_class = parse_policy_class(s.string("policy_class", to_string(e.policy_class)));
    } catch (const std::invalid_argument& err) {
        s.fail(err.what());
    }
    e.epochs = s.integer("epochs", e.epochs, 1, 10000);
    e.n_paths = s.integer("paths", e.n_paths, 1, 100000000);
    e.antithetic = s.boolean("antithetic", e.antithetic);
    if (e.antithetic && e.n_paths % 2 != 0) {
        s.fail("antithetic sampling needs an even path count");
    }
    e.pilot_paths = s.integer("pilot_paths", e.pilot_paths, 0, 100000000);
    if (e.antithetic && e.pilot_paths % 2 != 0) {
        s.fail("antithetic sampling needs an even pilot path count");
    }
    e.finalists = s.integer("finalists", e.finalists, 1, 1000);
    e.max_iterations = s.integer("max_iterations", e.max_iterations, 1, 100000);
    e.rel_tolerance = s.number("rel_tol", e.rel_tolerance, 0.0, 1.0);
    e.abs_tolerance = s.number("abs_tol", e.abs_tolerance, 0.0, 1.0);
    e.random_restarts = s.integer("random_restarts", e.random_restarts, 0, 1000);
    e.exhaustive_cap = s.integer("exhaustive_cap", e.exhaustive_cap, 1, 100000000);
    e.feedback_buckets = s.integer("feedback_buckets", e.feedback_buckets, 1, 64);
    s.finish();
    e.seed = seed;
    e.threads = threads;
    return e;
}

// --- output ------------------------------------------------------------------

Criterion at_most(std::string name, double observed, double threshold) {
    return {std::move(name), observed <= threshold, observed, threshold, "observed <= threshold"};
}

Criterion at_least(std::string name, double observed, double threshold) {
    return {std::move(name), observed >= threshold, observed, threshold, "observed >= threshold"};
}

Criterion holds(std::string name, bool ok) {
    return {std::move(name), ok, ok ? 1.0 : 0.0, 1.0, "observed == threshold"};
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

template <class Rows>
std::string csv(const std::string& header, const Rows& rows) {
    std::ostringstream out;
    out.precision(17);
    out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << row[i];
        }
        out << '\n';
    }
    return out.str();
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// E (x + s W_tau - k)^+.
double bachelier_call(double x, double k, double s, double tau) {
    const double sd = s * std::sqrt(tau);
    if (sd <= 0.0) {
        return std::max(x - k, 0.0);
    }
    const double z = (x - k) / sd;
    return (x - k) * normal_cdf(z) + sd * normal_pdf(z);
}

} // namespace

struct PreparedScenario::Output {
    const RunOptions& options;
    std::optional<double> value;
    std::optional<double> std_error;
    std::string policy;
    std::vector<Criterion> criteria;
    json diagnostics = json::object();
    std::vector<std::pair<std::string, std::string>> files;

    void add(Criterion c) { criteria.push_back(std::move(c)); }
    void file(std::string name, std::string content) {
        files.emplace_back(std::move(name), std::move(content));
    }
    void set_value(double v, double se, std::string p) {
        value = v;
        std_error = se;
        policy = std::move(p);
    }
    /// --dump-paths: re-simulates up to 1000 paths of the reported policy.
    void dump(const PathPair& start, const Policy& p, const UncertaintySet& u, std::uint64_t seed,
              std::size_t n_paths, std::string name = "paths.csv") {
        if (!options.dump_paths) {
            return;
        }
        SimConfig sim;
        sim.n_paths = std::min<std::size_t>(n_paths, 1000);
        sim.seed = seed;
        sim.keep_paths = true;
        sim.threads = options.threads;
        const SampleBatch batch = simulate_controlled(start, p, u, sim);
        std::ostringstream out;
        write_paths_csv(out, batch);
        file(std::move(name), out.str());
    }
};

namespace {

using Output = PreparedScenario::Output;
using Body = std::function<void(Output&)>;

/// Settings shared by every scenario.
struct Common {
    std::uint64_t seed = 1;
    std::size_t threads = 0;
    TimeGrid grid{0.0, 1.0, 100};
    DiscretePath start_path{TimeGrid(0.0, 1.0, 1), 1, {0.0, 0.0}};
    double t = 0.0;
    double x0 = 0.0;
    PathPair start() const { return PathPair(t, start_path); }
};

Common read_common(Section& root, const RunOptions& options, std::size_t default_steps) {
    Common c;
    c.seed = root.seed("seed", 1);
    c.threads = options.threads;
    Section g = root.child("grid");
    const double t0 = g.number("t0", 0.0, 0.0, 1e6);
    const double horizon = g.number("horizon", 1.0, t0 + 1e-9, t0 + 1e6);
    const std::size_t steps = g.integer("steps", default_steps, 1, 1000000);
    g.finish();
    c.grid = TimeGrid(t0, horizon, steps);
    Section s = root.child("start");
    c.x0 = s.number("x0", 0.0, -1e6, 1e6);
    c.t = s.number("t", t0, t0, horizon);
    const std::string history = s.expression_text("history", "x0");
    s.finish();
    if (!c.grid.try_index_of(c.t)) {
        s.fail("start time is not a grid knot");
    }
    const Expression h = parse_expr(s, history, {"t", "x0"});
    const double x0 = c.x0;
    const double tstart = c.t;
    c.start_path = stop(DiscretePath::scalar(c.grid, [&](double time) { return h({time, x0}); }),
                        tstart);
    c.x0 = c.start_path.at(c.grid.index_of(tstart), 0);
    return c;
}

FieldSpec field_or_default(Section& root, const TimeGrid& grid, const json& fallback) {
    if (root.has("field")) {
        return read_field(root.child("field"), grid);
    }
    return read_field(Section(fallback, "field (default)"), grid);
}

void add_trace(Output& out, const ValueEstimate& v, const std::string& prefix = "") {
    out.diagnostics[prefix + "optimizer_iterations"] = v.trace.iterations;
    out.diagnostics[prefix + "optimizer_evaluations"] = v.trace.evaluations;
    std::vector<std::array<double, 2>> rows;
    for (std::size_t i = 0; i < v.trace.improvements.size(); ++i) {
        rows.push_back({static_cast<double>(i + 1), v.trace.improvements[i]});
    }
    out.file(prefix + "optimizer_trace.csv", csv("iteration,improvement", rows));
}

json condition_json(const ConditionReport& r) {
    return {{"condition", r.condition},
            {"max_violation", number_or_null(r.max_violation)},
            {"tolerance", number_or_null(r.tolerance)},
            {"samples", r.samples},
            {"pass", r.pass}};
}

/// Growth, Lipschitz (when declared) and convexity audits on a fixed sample set.
void audit_conditions(Output& out, const UncertaintySet& u, const Common& c) {
    const TimeGrid& grid = c.grid;
    std::vector<PathPair> samples;
    std::vector<LipschitzSample> pairs;
    for (double amp : {0.0, 0.5, 2.0}) {
        for (double level : {-1.5, 0.0, 1.0}) {
            const DiscretePath p = DiscretePath::scalar(grid, [&](double t) {
                return level + amp * std::sin(2.0 * std::numbers::pi * (t - grid.t0()) /
                                              (grid.horizon() - grid.t0()));
            });
            const DiscretePath q = DiscretePath::scalar(grid, [&](double t) {
                return level + amp * std::sin(2.0 * std::numbers::pi * (t - grid.t0()) /
                                              (grid.horizon() - grid.t0())) +
                       0.3 * std::cos(3.0 * t);
            });
            for (std::size_t k : {std::size_t{0}, grid.steps() / 3, grid.steps()}) {
                samples.emplace_back(grid.time(k), p);
                pairs.push_back({grid.time(k), p, q});
            }
        }
    }
    json audits = json::array();
    if (u.field.constants().growth) {
        const auto r = check_linear_growth(u, samples);
        audits.push_back(condition_json(r));
        out.add(at_most("linear_growth", r.max_violation, r.tolerance));
    }
    if (u.field.constants().lipschitz) {
        const auto r = check_lipschitz(u, pairs);
        audits.push_back(condition_json(r));
        out.add(at_most("lipschitz", r.max_violation, r.tolerance));
    }
    const auto r = check_convexity(u, samples);
    audits.push_back(condition_json(r));
    out.diagnostics["condition_audits"] = audits;
    out.diagnostics["convexity_pass"] = r.pass;
}

void moment_criteria(Output& out, const PathPair& start, const Policy& policy,
                     const UncertaintySet& u, const Common& c, std::size_t n_paths) {
    SimConfig sim;
    sim.n_paths = n_paths;
    sim.seed = derive_seed(c.seed, 0x3031);
    sim.threads = c.threads;
    const SampleBatch batch = simulate_controlled(start, policy, u, sim);
    json moments = json::array();
    for (unsigned p : {1u, 2u}) {
        const MomentReport m = moment_check(batch, p);
        moments.push_back({{"p", p},
                           {"estimate", number_or_null(m.estimate)},
                           {"half_estimate", number_or_null(m.half_estimate)},
                           {"band", m.band},
                           {"pass", m.pass}});
        out.add(at_most("moment_p" + std::to_string(p) + "_stability", std::abs(m.ratio - 1.0),
                        m.band));
    }
    out.diagnostics["moments"] = moments;
}

// --- scenario bodies -------------------------------------------------------------

Body gheat(Section& root, const Common& c) {
    Section s = root.child("gheat");
    const double a_lo = s.number("a_lo", 1.0, 0.0, 1e4);
    const double a_hi = s.number("a_hi", 4.0, a_lo, 1e4);
    const double strike = s.number("strike", 0.0, -1e6, 1e6);
    const std::size_t vol_controls = s.integer("vol_controls", 3, 1, 1000);
    const double rel_tol = s.number("relative_tolerance", 0.02, 0.0, 1.0);
    Section h = s.child("hjb");
    HjbGrid hg;
    const double half = h.number("x_half_width", 10.0, 1e-3, 1e4);
    hg.x_min = c.x0 - half;
    hg.x_max = c.x0 + half;
    hg.n_x = h.integer("n_x", 401, 5, 100001);
    hg.n_t = h.integer("n_t", 400, 1, 10000000);
    h.finish();
    s.finish();
    EngineConfig defaults;
    defaults.pilot_paths = 5000;
    defaults.n_paths = 100000;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const UncertaintySet u = interval_field(0.0, 0.0, a_lo, a_hi, 1, vol_controls);
    const PathFunctional psi = [strike](const PathView& w) {
        return std::max(w.current(0) - strike, 0.0);
    };
    return [=](Output& out) {
        const PathPair start = c.start();
        const ValueEstimate v = upper_expectation(start, psi, u, engine);
        out.set_value(v.value, v.std_error, v.policy.summary());
        add_trace(out, v);
        const double tau = c.grid.horizon() - c.t;
        const double closed = bachelier_call(c.x0, strike, std::sqrt(a_hi), tau);
        HjbGrid grid = hg;
        grid.n_t = std::max(grid.n_t, hjb_required_steps(u, c.t, c.grid.horizon(), grid));
        const ValueSurface surface = markov_hjb_oracle(
            u, [strike](double x) { return std::max(x - strike, 0.0); }, c.t, c.grid.horizon(),
            grid);
        const double oracle = surface(c.t, c.x0);
        out.diagnostics["closed_form"] = closed;
        out.diagnostics["hjb_oracle"] = oracle;
        out.diagnostics["hjb_n_t"] = grid.n_t;
        out.diagnostics["hjb_n_x"] = grid.n_x;
        out.add(at_most("closed_form", std::abs(v.value - closed),
                        std::max(rel_tol * std::abs(closed), 3.0 * v.std_error)));
        out.add(at_most("hjb_oracle_agreement", std::abs(v.value - oracle),
                        std::max(rel_tol * std::abs(oracle), 3.0 * v.std_error)));
        out.add(at_most("oracle_vs_closed_form", std::abs(oracle - closed), rel_tol * std::abs(closed)));
        std::vector<std::array<double, 3>> rows;
        for (std::size_t i = 0; i < grid.n_x; ++i) {
            const double x = surface.x(i);
            rows.push_back({x, surface.at(0, i), bachelier_call(x, strike, std::sqrt(a_hi), tau)});
        }
        out.file("value_surface_t0.csv", csv("x,hjb_oracle,closed_form", rows));
        out.dump(start, v.policy, u, engine.seed, engine.n_paths);
    };
}

Body drift(Section& root, const Common& c) {
    Section s = root.child("drift");
    const double b_lo = s.number("b_lo", -1.0, -1e4, 1e4);
    const double b_hi = s.number("b_hi", 1.0, b_lo, 1e4);
    const double vol = s.number("vol", 1.0, 0.0, 1e4);
    const std::size_t controls = s.integer("controls", 3, 1, 1000);
    const double rel_tol = s.number("relative_tolerance", 0.01, 0.0, 1.0);
    Section ex = s.child("exhaustive");
    const std::size_t ex_steps = ex.integer("steps", 2, 1, 20);
    const std::size_t ex_controls = ex.integer("controls", 3, 2, 100);
    const std::size_t ex_paths = ex.integer("paths", 10000, 1, 10000000);
    ex.finish();
    s.finish();
    EngineConfig defaults;
    defaults.n_paths = 20000;
    defaults.pilot_paths = 2000;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "x"));
    const UncertaintySet u = interval_field(b_lo, b_hi, vol * vol, vol * vol, controls, 1);
    const UncertaintySet u_ex = interval_field(b_lo, b_hi, vol * vol, vol * vol, ex_controls, 1);
    return [=](Output& out) {
        const PathPair start = c.start();
        const ValueEstimate v = upper_expectation(start, payoff.psi, u, engine);
        out.set_value(v.value, v.std_error, v.policy.summary());
        add_trace(out, v);
        const double closed = c.x0 + b_hi * (c.grid.horizon() - c.t);
        out.diagnostics["closed_form"] = closed;
        out.diagnostics["closed_form_applies_to"] = "payoff x";
        if (payoff.text == "x") {
            out.add(at_most("closed_form", std::abs(v.value - closed),
                            std::max(rel_tol * std::abs(closed), 3.0 * v.std_error)));
        }

        // small instance: engine argmax against brute-force enumeration
        const TimeGrid g2(c.grid.t0(), c.grid.horizon(), ex_steps);
        const PathPair start2(g2.t0(), DiscretePath::scalar(g2, [&](double) { return c.x0; }));
        EngineConfig e2 = engine;
        e2.optimizer = Optimizer::exhaustive;
        e2.policy_class = PolicyClass::open_loop;
        e2.epochs = ex_steps;
        e2.n_paths = ex_paths;
        e2.pilot_paths = 0;
        const ValueEstimate best = upper_expectation(start2, payoff.psi, u_ex, e2);
        const auto all = enumerate_open_loop(ex_controls, ex_steps, ex_steps, e2.exhaustive_cap);
        std::size_t arg = 0;
        double top = -std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < all.size(); ++i) {
            const Estimate e =
                evaluate_policy(start2, payoff.psi, u_ex, all[i], ex_paths, e2.seed, false, c.threads);
            if (e.mean > top) {
                top = e.mean;
                arg = i;
            }
            const auto controls = all[i].open_loop_controls();
            std::vector<double> row(controls.begin(), controls.end());
            row.push_back(e.mean);
            row.push_back(e.std_error);
            rows.push_back(row);
        }
        std::string header;
        for (std::size_t k = 0; k < ex_steps; ++k) {
            header += "control_step" + std::to_string(k) + ",";
        }
        out.file("enumeration.csv", csv(header + "mean,stderr", rows));
        const Policy upper = Policy::open_loop(std::vector<std::size_t>(ex_steps, ex_controls - 1), 1);
        out.diagnostics["exhaustive_argmax"] = best.policy.summary();
        out.diagnostics["enumeration_argmax"] = all[arg].summary();
        out.diagnostics["exhaustive_value"] = best.value;
        out.add(holds("argmax_matches_enumeration",
                      best.policy.open_loop_controls() == all[arg].open_loop_controls()));
        if (payoff.text == "x") {
            out.add(holds("argmax_is_upper_endpoint",
                          best.policy.open_loop_controls() == upper.open_loop_controls()));
        }
        out.dump(start, v.policy, u, engine.seed, engine.n_paths);
    };
}

/// Maps a policy on the coarse control set to the fine set containing it.
Policy embed_policy(const Policy& p, const ControlSet& coarse, const ControlSet& fine) {
    std::vector<std::size_t> map(coarse.size());
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        const auto pi = coarse.point(i);
        std::size_t j = 0;
        for (; j < fine.size(); ++j) {
            const auto pj = fine.point(j);
            if (std::equal(pi.begin(), pi.end(), pj.begin(), pj.end())) {
                break;
            }
        }
        if (j == fine.size()) {
            throw std::logic_error("embed_policy: coarse control missing from the fine set");
        }
        map[i] = j;
    }
    auto rows = p.table_controls();
    for (auto& row : rows) {
        for (auto& x : row) {
            x = map[x];
        }
    }
    if (p.kind() == Policy::Kind::open_loop) {
        std::vector<std::size_t> flat;
        for (const auto& row : rows) {
            flat.push_back(row.front());
        }
        return Policy::open_loop(std::move(flat), p.epoch_length());
    }
    return Policy::table(std::move(rows), p.edges(), p.epoch_length());
}

Body interval(Section& root, const Common& c) {
    const json fallback = {{"type", "interval"},
                           {"b", {-0.5, 0.5}},
                           {"a", {0.25, 1.0}},
                           {"controls", 3}};
    const FieldSpec field = field_or_default(root, c.grid, fallback);
    EngineConfig defaults;
    defaults.n_paths = 10000;
    defaults.pilot_paths = 2000;
    defaults.epochs = 2;
    defaults.random_restarts = 1;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "max(x, 0)"));
    Section inv = root.child("invariants");
    const bool run_invariants = inv.boolean("enabled", true);
    const Payoff second = read_payoff(inv, inv.string("second_payoff", "-x"));
    const Payoff lower = read_payoff(inv, inv.string("lower_payoff", "min(max(x, 0), 1)"));
    const double shift = inv.number("constant", 0.7, -1e6, 1e6);
    const double scale = inv.number("scale", 2.5, 0.0, 1e6);
    const std::size_t coarse = inv.integer("coarse_controls", 2, 2, 1000);
    inv.finish();
    const std::size_t coarse_controls = field.controls == 1 ? 1 : coarse;
    const std::size_t coarse_vol = field.vol_controls == 1 ? 1 : coarse;
    if ((field.controls - 1) % (coarse_controls == 1 ? 1 : coarse_controls - 1) != 0 ||
        (field.vol_controls - 1) % (coarse_vol == 1 ? 1 : coarse_vol - 1) != 0) {
        inv.fail("the coarse control grid must be contained in the field's control grid");
    }
    const UncertaintySet u = field.build();
    return [=](Output& out) {
        const PathPair start = c.start();
        const ValueEstimate v = upper_expectation(start, payoff.psi, u, engine);
        out.set_value(v.value, v.std_error, v.policy.summary());
        add_trace(out, v);
        audit_conditions(out, u, c);
        moment_criteria(out, start, v.policy, u, c, engine.n_paths);
        out.dump(start, v.policy, u, engine.seed, engine.n_paths);
        if (!run_invariants) {
            return;
        }
        json inv_json = json::object();
        auto value_of = [&](const PathFunctional& f, const UncertaintySet& set,
                            const EngineConfig& cfg, std::span<const Policy> warm = {}) {
            return upper_expectation(start, f, set, cfg, warm);
        };
        const double tol_exact = 1e-9 * (1.0 + std::abs(v.value));

        // terminal condition: no simulation at t = T
        {
            const PathPair end(c.grid.horizon(), c.start_path);
            const ValueEstimate at_end = upper_expectation(end, payoff.psi, u, engine);
            const double expected = payoff.psi(stop(c.start_path, c.grid.horizon()).view());
            out.add(at_most("terminal_condition", std::abs(at_end.value - expected), 0.0));
        }
        // subadditivity
        const ValueEstimate v2 = value_of(second.psi, u, engine);
        const PathFunctional sum = [p1 = payoff.psi, p2 = second.psi](const PathView& w) {
            return p1(w) + p2(w);
        };
        const ValueEstimate v12 = value_of(sum, u, engine);
        const double se3 = std::sqrt(v.std_error * v.std_error + v2.std_error * v2.std_error +
                                     v12.std_error * v12.std_error);
        out.add(at_most("subadditivity", v12.value - v.value - v2.value, 3.0 * se3));
        inv_json["subadditivity"] = {{"sum", v12.value}, {"first", v.value}, {"second", v2.value}};
        // constant translation and positive homogeneity, exact per policy
        const PathFunctional shifted = [p = payoff.psi, shift](const PathView& w) {
            return p(w) + shift;
        };
        const PathFunctional scaled = [p = payoff.psi, scale](const PathView& w) {
            return scale * p(w);
        };
        const ValueEstimate vs = value_of(shifted, u, engine);
        const ValueEstimate vl = value_of(scaled, u, engine);
        out.add(at_most("constant_translation", std::abs(vs.value - v.value - shift),
                        tol_exact + 1e-12 * std::abs(shift)));
        out.add(at_most("positive_homogeneity", std::abs(vl.value - scale * v.value),
                        tol_exact * (1.0 + scale)));
        // monotonicity
        const ValueEstimate vlo = value_of(lower.psi, u, engine);
        out.add(at_most("monotonicity", vlo.value - v.value,
                        3.0 * std::hypot(vlo.std_error, v.std_error)));
        inv_json["monotonicity"] = {{"lower", vlo.value}, {"upper", v.value}};
        // enlarging Theta
        if (field.controls > 1 || field.vol_controls > 1) {
            const UncertaintySet coarse = field.make({coarse_controls, coarse_vol});
            const ValueEstimate vc = value_of(payoff.psi, coarse, engine);
            const std::vector<Policy> warm{embed_policy(vc.policy, coarse.controls, u.controls)};
            const ValueEstimate vf = value_of(payoff.psi, u, engine, warm);
            out.add(at_least("theta_monotonicity", vf.value - vc.value, 0.0));
            inv_json["theta_monotonicity"] = {{"coarse", vc.value}, {"fine", vf.value}};
        }
        // policy class: feedback contains open loop
        {
            EngineConfig fb = engine;
            fb.policy_class = PolicyClass::feedback;
            const std::vector<Policy> warm{v.policy};
            const ValueEstimate vfb = value_of(payoff.psi, u, fb, warm);
            out.add(at_least("policy_class_monotonicity", vfb.value - v.value, 0.0));
            inv_json["policy_class"] = {{"open_loop", v.value}, {"feedback", vfb.value},
                                        {"feedback_policy", vfb.policy.summary()}};
        }
        // singleton reduction
        {
            const UncertaintySet single = field.make({1, 1});
            if (single.controls.size() == 1) {
                const ValueEstimate vsg = value_of(payoff.psi, single, engine);
                const Estimate plain =
                    evaluate_policy(start, payoff.psi, single, Policy::constant(0), engine.n_paths,
                                    engine.seed, engine.antithetic, c.threads);
                out.add(at_most("singleton_reduction", std::abs(vsg.value - plain.mean), 0.0));
            }
        }
        out.diagnostics["invariants"] = inv_json;
    };
}

Body delay(Section& root, const Common& c) {
    const json fallback = {{"type", "delay"},
                           {"b0", "-0.5 + f0"},
                           {"b1", "0.5 * (2 * f0 - 1)"},
                           {"a0", "0.25 + 0.75 * f1"},
                           {"window", 0.5},
                           {"controls", 3},
                           {"vol_controls", 2},
                           {"constants", {{"growth", 1.0}, {"lipschitz", 1.0}}}};
    const FieldSpec field = field_or_default(root, c.grid, fallback);
    EngineConfig defaults;
    defaults.n_paths = 10000;
    defaults.pilot_paths = 2000;
    defaults.epochs = 2;
    defaults.random_restarts = 1;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "max(x, 0)"));
    const UncertaintySet u = field.build();
    return [=](Output& out) {
        const PathPair start = c.start();
        const ValueEstimate v = upper_expectation(start, payoff.psi, u, engine);
        out.set_value(v.value, v.std_error, v.policy.summary());
        add_trace(out, v);
        audit_conditions(out, u, c);
        moment_criteria(out, start, v.policy, u, c, engine.n_paths);
        if (engine.policy_class == PolicyClass::open_loop) {
            EngineConfig fb = engine;
            fb.policy_class = PolicyClass::feedback;
            const std::vector<Policy> warm{v.policy};
            const ValueEstimate vfb = upper_expectation(start, payoff.psi, u, fb, warm);
            out.diagnostics["feedback_value"] = vfb.value;
            out.diagnostics["feedback_policy"] = vfb.policy.summary();
            out.add(at_least("policy_class_monotonicity", vfb.value - v.value, 0.0));
        }
        out.dump(start, v.policy, u, engine.seed, engine.n_paths);
    };
}

Body counterexample(Section& root, const Common& c) {
    Section s = root.child("counterexample");
    const double x0 = s.number("x0", 0.01, 1e-12, 1.0);
    const double min_gap = s.number("min_gap", 0.5, 0.0, 10.0);
    const double rel_tol = s.number("relative_tolerance", 0.1, 0.0, 1.0);
    const double ode_tol = s.number("ode_tolerance", 0.02, 0.0, 10.0);
    const std::size_t length = s.integer("sequence_length", 8, 2, 30);
    const double tolerance = s.number("semicontinuity_tolerance", 0.05, 0.0, 10.0);
    s.finish();
    EngineConfig defaults;
    defaults.n_paths = 1;
    defaults.epochs = 1;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "clamp(x, -1, 1)"));
    const UncertaintySet u{ControlSet::finite({{0.0}}), signed_sqrt_field()};
    return [=](Output& out) {
        const TimeGrid& g = c.grid;
        auto at = [&](double x) {
            return PathPair(g.t0(), DiscretePath::scalar(g, [x](double) { return x; }));
        };
        const double T = g.horizon() - g.t0();
        const ValueEstimate up = upper_expectation(at(x0), payoff.psi, u, engine);
        const ValueEstimate down = upper_expectation(at(-x0), payoff.psi, u, engine);
        const double gap = up.value - down.value;
        const double ode = std::pow(std::sqrt(x0) + 0.5 * T, 2.0);
        out.set_value(gap, std::hypot(up.std_error, down.std_error), up.policy.summary());
        out.diagnostics["v_plus"] = up.value;
        out.diagnostics["v_minus"] = down.value;
        out.diagnostics["closed_form_gap"] = 2.0 * ode;
        out.add(at_least("value_gap", gap, min_gap));
        out.add(at_most("gap_vs_closed_form", std::abs(gap - 2.0 * ode), rel_tol * 2.0 * ode));

        SimConfig sim;
        sim.n_paths = 1;
        sim.keep_paths = true;
        sim.seed = engine.seed;
        const SampleBatch b = simulate_controlled(at(x0), Policy::constant(0), u, sim);
        const double xT = b.terminal_state(0)[0];
        out.diagnostics["euler_terminal"] = xT;
        out.diagnostics["ode_terminal"] = ode;
        out.add(at_most("ode_terminal", std::abs(xT - ode), ode_tol));
        {
            std::ostringstream path_csv;
            write_paths_csv(path_csv, b);
            out.file("ode_path.csv", path_csv.str());
        }

        // x_n = -2^-n -> 0 from the left; x_n = +2^-n from the right
        std::vector<PathPair> left;
        std::vector<PathPair> right;
        for (std::size_t n = 1; n <= length; ++n) {
            const double xn = std::ldexp(1.0, -static_cast<int>(n));
            left.push_back(at(-xn));
            right.push_back(at(xn));
        }
        const SemicontinuityReport lr =
            semicontinuity_probe(left, at(0.0), payoff.psi, u, engine, tolerance);
        const SemicontinuityReport rr =
            semicontinuity_probe(right, at(0.0), payoff.psi, u, engine, tolerance);
        out.diagnostics["value_at_zero"] = lr.limit_value;
        out.diagnostics["left_lim_inf"] = lr.lim_inf;
        out.diagnostics["right_lim_sup"] = rr.lim_sup;
        out.diagnostics["left_limit_closed_form"] = -0.25 * T * T;
        out.diagnostics["right_limit_closed_form"] = 0.25 * T * T;
        out.diagnostics["note"] =
            "Euler started exactly at 0 stays at 0, one of the ODE solutions; the "
            "one-sided limits are +-(T/2)^2";
        out.add(holds("lower_semicontinuity_failure_detected", lr.lower_semicontinuity_failure));
        out.add(at_least("one_sided_limit_gap",
                         rr.sequence_values.back() - lr.sequence_values.back(), min_gap));
        std::vector<std::array<double, 4>> rows;
        for (std::size_t i = 0; i < length; ++i) {
            rows.push_back({-std::ldexp(1.0, -static_cast<int>(i + 1)), lr.distances[i],
                            lr.sequence_values[i], rr.sequence_values[i]});
        }
        out.file("semicontinuity.csv", csv("x_left,distance,value_left,value_right", rows));
    };
}

struct NamedCase {
    std::string name;
    FieldSpec field;
    Payoff payoff;
    json extra;
};

Body dpp(Section& root, const Common& c) {
    Section s = root.child("dpp");
    const double tau = s.number("tau", c.grid.t0() + 0.5 * (c.grid.horizon() - c.grid.t0()),
                                c.t, c.grid.horizon());
    if (!c.grid.try_index_of(tau)) {
        s.fail("tau is not a grid knot");
    }
    DppConfig base;
    base.outer_paths = s.integer("outer_paths", 400, 1, 10000000);
    base.inner_paths = s.integer("inner_paths", 0, 0, 10000000);
    base.first_stage_epochs = s.integer("first_stage_epochs", 2, 1, 64);
    base.max_step_evaluations = s.number("max_step_evaluations", 5e9, 1.0);
    std::vector<NamedCase> cases;
    if (s.has("cases")) {
        const json& arr = s.raw("cases");
        if (!arr.is_array() || arr.empty()) {
            s.fail("'cases' must be a non-empty array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Section cs(arr[i], s.where() + ".cases[" + std::to_string(i) + "]");
            NamedCase nc{cs.string("name", {}), read_field(cs.child("field"), c.grid),
                         read_payoff(cs, cs.string("payoff", "max(x, 0)")), {}};
            cs.finish();
            cases.push_back(std::move(nc));
        }
    } else {
        const json gh = {{"type", "interval"}, {"b", {0, 0}}, {"a", {1, 4}},
                         {"controls", 1}, {"vol_controls", 3}};
        const json iv = {{"type", "interval"}, {"b", {-0.5, 0.5}}, {"a", {0.25, 1.0}},
                         {"controls", 2}};
        cases.push_back({"gheat", read_field(Section(gh, "dpp.gheat"), c.grid),
                         read_payoff(s, "max(x, 0)"), {}});
        cases.push_back({"interval", read_field(Section(iv, "dpp.interval"), c.grid),
                         read_payoff(s, "max(x, 0)"), {}});
    }
    s.finish();
    EngineConfig defaults;
    defaults.n_paths = 20000;
    defaults.pilot_paths = 2000;
    defaults.epochs = 2;
    defaults.random_restarts = 0;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    return [=](Output& out) {
        const PathPair start = c.start();
        json reports = json::array();
        bool first = true;
        for (const auto& nc : cases) {
            const UncertaintySet u = nc.field.build();
            DppConfig cfg = base;
            cfg.engine = engine;
            cfg.growth_constant = u.field.constants().growth.value_or(1.0);
            const DppReport r = dpp_check(start, tau, nc.payoff.psi, u, cfg);
            if (first) {
                out.set_value(r.lhs, r.lhs_std_error, "");
                first = false;
            }
            reports.push_back({{"case", nc.name},
                               {"lhs", r.lhs},
                               {"lhs_stderr", r.lhs_std_error},
                               {"rhs", r.rhs},
                               {"rhs_stderr", r.rhs_std_error},
                               {"gap", r.gap},
                               {"allowance", r.allowance},
                               {"growth_constant", cfg.growth_constant},
                               {"outer_paths", r.outer_paths},
                               {"inner_paths", r.inner_paths},
                               {"first_stage_policies", r.first_stage_policies},
                               {"note", r.note}});
            out.add(at_most("dpp_" + nc.name, r.gap, 3.0 * r.combined_std_error + r.allowance));
        }
        out.diagnostics["tau"] = tau;
        out.diagnostics["cases"] = reports;
    };
}

std::vector<std::pair<PathPair, PathPair>> holder_pairs(const Common& c, std::size_t n,
                                                        double max_shift, std::size_t max_lag) {
    const TimeGrid& g = c.grid;
    const NoiseStream rng(derive_seed(c.seed, 0x401));
    const double span = g.horizon() - g.t0();
    std::vector<std::pair<PathPair, PathPair>> pairs;
    for (std::size_t j = 0; j < n; ++j) {
        const double level = -1.0 + 2.0 * rng.uniform(j, 0, 0);
        const double wiggle = 0.3 * rng.uniform(j, 1, 0);
        const auto kt = static_cast<std::size_t>(rng.uniform(j, 2, 0) * static_cast<double>(g.steps() / 2));
        const auto lag = static_cast<std::size_t>(std::ceil(rng.uniform(j, 3, 0) * static_cast<double>(max_lag)));
        const double shift = (2.0 * rng.uniform(j, 4, 0) - 1.0) * max_shift;
        const int kind = static_cast<int>(j % 3); // 0 time, 1 space, 2 both
        const DiscretePath w = DiscretePath::scalar(g, [&](double t) {
            return level + wiggle * std::sin(2.0 * std::numbers::pi * (t - g.t0()) / span);
        });
        const DiscretePath a = kind == 0 ? w : DiscretePath::scalar(g, [&](double t) {
            return level + shift + wiggle * std::sin(2.0 * std::numbers::pi * (t - g.t0()) / span);
        });
        const std::size_t ks = kind == 1 ? kt : std::min(kt + lag, g.steps() - 1);
        pairs.emplace_back(PathPair(g.time(kt), stop(w, g.time(kt))),
                           PathPair(g.time(ks), stop(a, g.time(ks))));
    }
    return pairs;
}

Body holder(Section& root, const Common& c) {
    Section s = root.child("holder");
    const std::size_t n_pairs = s.integer("pairs", 50, 1, 100000);
    HolderProbeConfig base;
    base.levels = s.integer("levels", 2, 1, 6);
    base.base_controls = s.integer("base_controls", 3, 2, 100);
    const double max_shift = s.number("max_shift", 0.25, 0.0, 100.0);
    const std::size_t max_lag = s.integer("max_lag_steps", 3, 1, 1000);
    s.finish();
    const json fallback = {{"type", "interval"},
                           {"b", {"-0.5 + 0.2 * sin(x)", "0.5 + 0.2 * cos(x)"}},
                           {"a", {"0.25", "1 + 0.25 * sin(x)^2"}},
                           {"controls", 3},
                           {"constants", {{"growth", 2.0}, {"lipschitz", 1.0}, {"bound", 2.0}}}};
    const FieldSpec field = field_or_default(root, c.grid, fallback);
    EngineConfig defaults;
    defaults.n_paths = 2000;
    defaults.pilot_paths = 500;
    defaults.epochs = 2;
    defaults.random_restarts = 0;
    defaults.finalists = 2;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "clamp(x, -2, 2)"));
    if (!field.build().field.constants().lipschitz) {
        root.fail("holder: the field must declare a Lipschitz constant");
    }
    return [=](Output& out) {
        const UncertaintySet u0 = field.build();
        audit_conditions(out, u0, c);
        const auto pairs = holder_pairs(c, n_pairs, max_shift, max_lag);
        HolderProbeConfig cfg = base;
        cfg.engine = engine;
        const FieldFactory factory = [&](std::size_t n) { return field.make({n, n}); };
        const HolderReport r = holder_modulus_probe(pairs, payoff.psi, factory, cfg);
        json levels = json::array();
        std::vector<std::array<double, 3>> rows;
        for (std::size_t l = 0; l < r.levels.size(); ++l) {
            const auto& lv = r.levels[l];
            levels.push_back({{"refinement", lv.refinement},
                              {"controls_per_factor", lv.n_controls},
                              {"max_ratio", number_or_null(lv.max_ratio)},
                              {"max_ratio_noise", number_or_null(lv.max_ratio_noise)}});
            for (std::size_t i = 0; i < lv.ratios.size(); ++i) {
                rows.push_back({static_cast<double>(i), static_cast<double>(lv.refinement),
                                lv.ratios[i]});
            }
        }
        out.file("holder_ratios.csv", csv("pair,refinement,ratio", rows));
        out.diagnostics["levels"] = levels;
        out.diagnostics["excluded_pairs"] = r.excluded_pairs;
        out.diagnostics["slope"] = number_or_null(r.slope);
        const auto& last = r.levels.back();
        out.set_value(last.max_ratio, last.max_ratio_noise, "");
        bool finite = true;
        for (const auto& lv : r.levels) {
            finite = finite && std::isfinite(lv.max_ratio);
        }
        out.add(holds("max_ratio_finite", finite));
        for (std::size_t l = 1; l < r.levels.size(); ++l) {
            const auto& prev = r.levels[l - 1];
            const auto& cur = r.levels[l];
            out.add(at_most("no_growth_level_" + std::to_string(l), cur.max_ratio - prev.max_ratio,
                            3.0 * std::hypot(prev.max_ratio_noise, cur.max_ratio_noise)));
        }
    };
}

struct MartingaleCase {
    std::string name;
    FieldSpec field;
    Expression phi;
    Expression dphi;
    Expression d2phi;
    double barrier;
};

Body martingale(Section& root, const Common& c) {
    Section s = root.child("martingale");
    const double barrier = s.number("barrier", 10.0, 1e-9);
    MartingaleConfig base;
    base.random_policies = s.integer("random_policies", 10, 0, 10000);
    base.random_epochs = s.integer("random_epochs", 4, 1, 10000);
    std::vector<MartingaleCase> cases;
    auto read_case = [&](Section cs) {
        MartingaleCase mc{cs.string("name", {}), read_field(cs.child("field"), c.grid),
                          parse_expr(cs, cs.expression_text("phi", {}), {"x"}),
                          parse_expr(cs, cs.expression_text("dphi", {}), {"x"}),
                          parse_expr(cs, cs.expression_text("d2phi", {}), {"x"}),
                          cs.number("barrier", barrier, 1e-9)};
        cs.finish();
        cases.push_back(std::move(mc));
    };
    if (s.has("cases")) {
        const json& arr = s.raw("cases");
        if (!arr.is_array() || arr.empty()) {
            s.fail("'cases' must be a non-empty array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            read_case(Section(arr[i], s.where() + ".cases[" + std::to_string(i) + "]"));
        }
    } else {
        static const json defaults = json::array(
            {{{"name", "linear"},
              {"field", {{"type", "interval"}, {"b", {-1, 1}}, {"a", {1, 4}}, {"controls", 3}}},
              {"phi", "x"},
              {"dphi", "1"},
              {"d2phi", "0"}},
             {{"name", "square"},
              {"field", {{"type", "interval"}, {"b", {0, 0}}, {"a", {1, 4}}, {"controls", 1},
                         {"vol_controls", 3}}},
              {"phi", "x^2"},
              {"dphi", "2 * x"},
              {"d2phi", "2"}}});
        for (std::size_t i = 0; i < defaults.size(); ++i) {
            read_case(Section(defaults[i], "martingale.default"));
        }
    }
    s.finish();
    EngineConfig defaults;
    defaults.n_paths = 10000;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    return [=](Output& out) {
        const PathPair start = c.start();
        json reports = json::array();
        bool first = true;
        for (const auto& mc : cases) {
            const UncertaintySet u = mc.field.build();
            MartingaleConfig cfg = base;
            cfg.sim.n_paths = engine.n_paths;
            cfg.sim.seed = engine.seed;
            cfg.sim.antithetic = engine.antithetic;
            cfg.sim.threads = c.threads;
            const auto eval = [](const Expression& e) {
                return [e](double x) { return e({x}); };
            };
            const IcxFunction phi{mc.phi.text(), eval(mc.phi), eval(mc.dphi), eval(mc.d2phi)};
            const MartingaleReport r = martingale_problem_check(phi, mc.barrier, start, u, cfg);
            if (first) {
                out.set_value(r.extremal.mean, r.extremal.std_error, "extremal");
                first = false;
            }
            json random = json::array();
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& m : r.random) {
                random.push_back({{"policy", m.policy}, {"mean", m.mean}, {"stderr", m.std_error}});
                worst = std::max(worst, m.mean - 3.0 * m.std_error);
            }
            reports.push_back({{"case", mc.name},
                               {"phi", mc.phi.text()},
                               {"extremal_mean", r.extremal.mean},
                               {"extremal_stderr", r.extremal.std_error},
                               {"allowance", r.allowance},
                               {"barrier", mc.barrier},
                               {"barrier_hits", r.barrier_hits},
                               {"random", random}});
            out.add(at_most(mc.name + "_extremal_mean", std::abs(r.extremal.mean),
                            3.0 * r.extremal.std_error + r.allowance));
            if (!r.random.empty()) {
                out.add(at_most(mc.name + "_random_supermartingale", worst, r.allowance));
            }
            out.dump(start, extremal_policy(u), u, engine.seed, engine.n_paths,
                     "paths_" + mc.name + ".csv");
        }
        out.diagnostics["cases"] = reports;
    };
}

Body hjb_oracle(Section& root, const Common& c) {
    Section s = root.child("hjb");
    HjbGrid hg;
    const double half = s.number("x_half_width", 10.0, 1e-3, 1e4);
    hg.x_min = -half;
    hg.x_max = half;
    hg.n_x = s.integer("n_x", 401, 5, 100001);
    hg.n_t = s.integer("n_t", 400, 1, 10000000);
    const double sigma = s.number("sigma", 1.0, 1e-6, 1e3);
    const double a_lo = s.number("a_lo", 1.0, 0.0, 1e4);
    const double a_hi = s.number("a_hi", 4.0, a_lo, 1e4);
    const double b_lo = s.number("b_lo", -1.0, -1e4, 1e4);
    const double b_hi = s.number("b_hi", 1.0, b_lo, 1e4);
    const double rel_tol = s.number("relative_tolerance", 0.01, 0.0, 1.0);
    s.finish();
    return [=](Output& out) {
        const double t0 = c.grid.t0();
        const double T = c.grid.horizon();
        const auto call = [](double x) { return std::max(x, 0.0); };
        auto solve = [&](const UncertaintySet& u, const std::function<double(double)>& g) {
            HjbGrid grid = hg;
            grid.n_t = std::max(grid.n_t, hjb_required_steps(u, t0, T, grid));
            return markov_hjb_oracle(u, g, t0, T, grid);
        };
        // Bachelier
        const UncertaintySet single = interval_field(0.0, 0.0, sigma * sigma, sigma * sigma, 1, 1);
        const ValueSurface bach = solve(single, call);
        const double bach_closed = sigma * std::sqrt((T - t0) / (2.0 * std::numbers::pi));
        const double bach_oracle = bach(t0, 0.0);
        out.set_value(bach_oracle, 0.0, "");
        out.diagnostics["bachelier_closed_form"] = bach_closed;
        out.diagnostics["bachelier_n_t"] = bach.grid().n_t;
        out.add(at_most("bachelier_relative_error", std::abs(bach_oracle - bach_closed) / bach_closed,
                        rel_tol));
        // G-heat against the singleton at a_hi
        const UncertaintySet gset = interval_field(0.0, 0.0, a_lo, a_hi, 1, 3);
        const UncertaintySet top = interval_field(0.0, 0.0, a_hi, a_hi, 1, 1);
        HjbGrid shared = hg;
        shared.n_t = std::max({hg.n_t, hjb_required_steps(gset, t0, T, hg),
                               hjb_required_steps(top, t0, T, hg)});
        const ValueSurface gheat = markov_hjb_oracle(gset, call, t0, T, shared);
        const ValueSurface gtop = markov_hjb_oracle(top, call, t0, T, shared);
        double diff = 0.0;
        double scale = 0.0;
        for (std::size_t n = 0; n <= shared.n_t; ++n) {
            for (std::size_t i = 0; i < shared.n_x; ++i) {
                diff = std::max(diff, std::abs(gheat.at(n, i) - gtop.at(n, i)));
                scale = std::max(scale, std::abs(gtop.at(n, i)));
            }
        }
        out.add(at_most("gheat_equals_extremal_singleton", diff, 1e-9 * (1.0 + scale)));
        // affine terminal value with drift uncertainty
        const UncertaintySet dset = interval_field(b_lo, b_hi, 1.0, 1.0, 3, 1);
        const ValueSurface aff = solve(dset, [](double x) { return x; });
        double aff_err = 0.0;
        for (double t : {t0, 0.5 * (t0 + T)}) {
            for (double x : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
                const double exact = x + b_hi * (T - t);
                aff_err = std::max(aff_err, std::abs(aff(t, x) - exact) / std::max(1.0, std::abs(exact)));
            }
        }
        out.add(at_most("affine_relative_error", aff_err, rel_tol));
        // residuals
        const ResidualSteps fine{1e-3, 1e-3};
        auto exact_affine = [&](double t, double x) { return x + b_hi * (T - t); };
        double res_aff = 0.0;
        for (double t : {t0 + 0.25 * (T - t0), t0 + 0.5 * (T - t0)}) {
            for (double x : {-1.0, 0.0, 2.0}) {
                res_aff = std::max(res_aff,
                                   std::abs(viscosity_residual(exact_affine, t, x, T, dset, fine)));
            }
        }
        out.add(at_most("residual_affine", res_aff, 1e-9));
        auto bach_surface = [&](double t, double x) {
            return bachelier_call(x, 0.0, std::sqrt(a_hi), T - t);
        };
        double res_closed = 0.0;
        double res_oracle = 0.0;
        const ResidualSteps grid_steps{2.0 * gheat.dt(), 2.0 * gheat.dx()};
        for (double t : {t0 + 0.25 * (T - t0), t0 + 0.5 * (T - t0)}) {
            for (double x : {-1.0, 0.0, 1.0}) {
                res_closed = std::max(
                    res_closed, std::abs(viscosity_residual(bach_surface, t, x, T, gset, fine)));
                res_oracle = std::max(
                    res_oracle,
                    std::abs(viscosity_residual([&](double tt, double xx) { return gheat(tt, xx); },
                                                t, x, T, gset, grid_steps)));
            }
        }
        out.add(at_most("residual_gheat_closed_form", res_closed, 1e-4));
        out.add(at_most("residual_gheat_oracle_surface", res_oracle, 0.01));
        // residual sweep for the closed-form surface
        std::vector<ConvergenceRow> sweep;
        const double tp = t0 + 0.5 * (T - t0);
        const double xp = 0.3;
        for (double h = 0.1; sweep.size() < 4; h *= 0.5) {
            const double r = viscosity_residual(bach_surface, tp, xp, T, gset, {h, h});
            sweep.push_back({h, r, 0.0, std::abs(r)});
        }
        std::ostringstream sweep_csv;
        write_sweep_csv(sweep_csv, sweep);
        out.file("residual_sweep.csv", sweep_csv.str());
        const double order = observed_order(sweep);
        out.diagnostics["residual_sweep_order"] = number_or_null(order);
        out.add(at_least("residual_sweep_order", order, 0.8 * 2.0));
        out.diagnostics["residuals"] = {{"affine", res_aff},
                                        {"gheat_closed_form", res_closed},
                                        {"gheat_oracle_surface", res_oracle}};
        std::vector<std::array<double, 5>> rows;
        for (std::size_t i = 0; i < shared.n_x; ++i) {
            const double x = gheat.x(i);
            rows.push_back({x, bach(t0, x), bachelier_call(x, 0.0, sigma, T - t0), gheat.at(0, i),
                            gtop.at(0, i)});
        }
        out.file("hjb_surfaces_t0.csv",
                 csv("x,bachelier_oracle,bachelier_closed_form,gheat_oracle,singleton_a_hi", rows));
    };
}

Body custom(Section& root, const Common& c) {
    const json fallback = {{"type", "custom-expression"},
                           {"drift", "(2 * f0 - 1) * 0.5 - 0.25 * tanh(i)"},
                           {"vol", "0.5 + 0.5 * f1"},
                           {"window", 0.5},
                           {"controls", 3},
                           {"vol_controls", 2},
                           {"constants", {{"growth", 2.0}, {"lipschitz", 0.5}}}};
    const FieldSpec field = field_or_default(root, c.grid, fallback);
    EngineConfig defaults;
    defaults.n_paths = 10000;
    defaults.pilot_paths = 2000;
    defaults.epochs = 2;
    defaults.random_restarts = 1;
    const EngineConfig engine = read_engine(root.child("engine"), c.seed, c.threads, defaults);
    const Payoff payoff = read_payoff(root, root.string("payoff", "max(m - 0.5, 0)"));
    const UncertaintySet u = field.build();
    return [=](Output& out) {
        const PathPair start = c.start();
        const ValueEstimate v = upper_expectation(start, payoff.psi, u, engine);
        out.set_value(v.value, v.std_error, v.policy.summary());
        add_trace(out, v);
        out.add(holds("value_finite", std::isfinite(v.value) && std::isfinite(v.std_error)));
        audit_conditions(out, u, c);
        moment_criteria(out, start, v.policy, u, c, engine.n_paths);
        out.dump(start, v.policy, u, engine.seed, engine.n_paths);
    };
}

std::size_t default_steps(const std::string& id) {
    if (id == "gheat" || id == "counterexample" || id == "hjb-oracle") {
        return 200;
    }
    if (id == "holder") {
        return 20;
    }
    if (id == "dpp") {
        return 20;
    }
    return 50;
}

} // namespace

PreparedScenario prepare_scenario(const json& config_in, const RunOptions& options) {
    if (!config_in.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    json config = config_in;
    if (options.seed) {
        config["seed"] = *options.seed;
    }
    if (options.steps) {
        if (!config.contains("grid")) {
            config["grid"] = json::object();
        }
        if (!config["grid"].is_object()) {
            throw ConfigError("config.grid: must be an object");
        }
        config["grid"]["steps"] = *options.steps;
    }
    if (options.paths) {
        if (!config.contains("engine")) {
            config["engine"] = json::object();
        }
        if (!config["engine"].is_object()) {
            throw ConfigError("config.engine: must be an object");
        }
        config["engine"]["paths"] = *options.paths;
    }

    Section root(config, "config");
    const std::string id = root.string("scenario", {});
    scenario_info(id);
    root.string("description", "");
    Common common = read_common(root, options, default_steps(id));

    Body body;
    if (id == "gheat") {
        body = gheat(root, common);
    } else if (id == "drift") {
        body = drift(root, common);
    } else if (id == "interval") {
        body = interval(root, common);
    } else if (id == "delay") {
        body = delay(root, common);
    } else if (id == "counterexample") {
        body = counterexample(root, common);
    } else if (id == "dpp") {
        body = dpp(root, common);
    } else if (id == "holder") {
        body = holder(root, common);
    } else if (id == "martingale") {
        body = martingale(root, common);
    } else if (id == "hjb-oracle") {
        body = hjb_oracle(root, common);
    } else {
        body = custom(root, common);
    }
    root.finish();

    PreparedScenario p;
    p.id_ = id;
    p.config_ = config;
    p.hash_ = fnv1a_hex(config.dump());
    p.body_ = std::move(body);
    return p;
}

RunRecord run_prepared(const PreparedScenario& scenario, const RunOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    PreparedScenario::Output out{options, {}, {}, {}, {}, json::object(), {}};
    scenario.body_(out);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    RunRecord record;
    record.scenario = scenario.id();
    record.config_hash = scenario.config_hash();
    record.wall_time_s = wall;
    record.pass = std::all_of(out.criteria.begin(), out.criteria.end(),
                              [](const Criterion& c) { return c.pass; });
    json criteria = json::array();
    for (const auto& c : out.criteria) {
        criteria.push_back({{"name", c.name},
                            {"pass", c.pass},
                            {"observed", number_or_null(c.observed)},
                            {"threshold", number_or_null(c.threshold)},
                            {"rule", c.rule}});
    }
    json artifacts = json::array();
    for (const auto& [name, content] : out.files) {
        artifacts.push_back(name);
    }
    json& r = record.results;
    r["scenario"] = scenario.id();
    r["config_hash"] = scenario.config_hash();
    r["config"] = scenario.effective_config();
    r["value"] = out.value ? number_or_null(*out.value) : json(nullptr);
    r["stderr"] = out.std_error ? number_or_null(*out.std_error) : json(nullptr);
    r["policy"] = out.policy;
    r["criteria"] = criteria;
    r["diagnostics"] = out.diagnostics;
    r["artifacts"] = artifacts;
    r["pass"] = record.pass;
    r["wall_time_s"] = wall;

    std::filesystem::create_directories(options.out_dir);
    for (const auto& [name, content] : out.files) {
        std::ofstream f(options.out_dir / name);
        f << content;
    }
    std::ofstream f(options.out_dir / "results.json");
    f << r.dump(2) << '\n';
    if (!f) {
        throw std::runtime_error("cannot write " + (options.out_dir / "results.json").string());
    }
    return record;
}

RunRecord run_scenario(const json& config, const RunOptions& options) {
    return run_prepared(prepare_scenario(config, options), options);
}

} // namespace nlsem
