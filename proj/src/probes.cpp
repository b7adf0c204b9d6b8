#include "nlsem/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nlsem {

HolderReport holder_modulus_probe(std::span<const std::pair<PathPair, PathPair>> pairs,
                                  const PathFunctional& psi, const FieldFactory& make_field,
                                  const HolderProbeConfig& cfg) {
    if (cfg.levels == 0 || cfg.base_controls < 2) {
        throw std::invalid_argument("holder_modulus_probe: need >= 1 level and >= 2 base controls");
    }
    HolderReport report;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t level = 0; level < cfg.levels; ++level) {
        const std::size_t factor = std::size_t{1} << level;
        HolderLevel row;
        row.refinement = factor;
        row.n_controls = factor * (cfg.base_controls - 1) + 1;
        const UncertaintySet u = make_field(row.n_controls);
        for (const auto& [p, q] : pairs) {
            const PathPair pf(p.t, refine(p.path, factor));
            const PathPair qf(q.t, refine(q.path, factor));
            const double space = pseudometric_d(pf, qf) - std::abs(pf.t - qf.t);
            const double denom = std::sqrt(std::abs(pf.t - qf.t)) + space;
            if (denom <= 0.0) {
                row.ratios.push_back(nan);
                if (level == 0) {
                    ++report.excluded_pairs;
                }
                continue;
            }
            const ValueEstimate vp = upper_expectation(pf, psi, u, cfg.engine);
            const ValueEstimate vq = upper_expectation(qf, psi, u, cfg.engine);
            const double ratio = std::abs(vp.value - vq.value) / denom;
            row.ratios.push_back(ratio);
            if (ratio > row.max_ratio || row.ratios.size() == 1) {
                row.max_ratio = ratio;
                row.max_ratio_noise = std::hypot(vp.std_error, vq.std_error) / denom;
            }
        }
        report.levels.push_back(std::move(row));
    }
    report.pass = true;
    for (std::size_t l = 0; l < report.levels.size(); ++l) {
        const auto& cur = report.levels[l];
        if (!std::isfinite(cur.max_ratio)) {
            report.pass = false;
        }
        if (l > 0) {
            const auto& prev = report.levels[l - 1];
            const double noise = std::hypot(prev.max_ratio_noise, cur.max_ratio_noise);
            if (cur.max_ratio > prev.max_ratio + 3.0 * noise) {
                report.pass = false;
            }
        }
    }
    if (report.levels.size() > 1) {
        report.slope = (report.levels.back().max_ratio - report.levels.front().max_ratio) /
                       static_cast<double>(report.levels.size() - 1);
    }
    return report;
}

SemicontinuityReport semicontinuity_probe(std::span<const PathPair> sequence, const PathPair& limit,
                                          const PathFunctional& psi, const UncertaintySet& u,
                                          const EngineConfig& cfg, double tolerance) {
    if (sequence.empty()) {
        throw std::invalid_argument("semicontinuity_probe: empty sequence");
    }
    SemicontinuityReport report;
    report.tolerance = tolerance;
    for (const auto& p : sequence) {
        const ValueEstimate v = upper_expectation(p, psi, u, cfg);
        report.sequence_values.push_back(v.value);
        report.sequence_std_errors.push_back(v.std_error);
        report.distances.push_back(pseudometric_d(p, limit));
    }
    const ValueEstimate v = upper_expectation(limit, psi, u, cfg);
    report.limit_value = v.value;
    report.limit_std_error = v.std_error;
    const std::size_t tail = sequence.size() / 2;
    const auto first = report.sequence_values.begin() + static_cast<std::ptrdiff_t>(tail);
    report.lim_inf = *std::min_element(first, report.sequence_values.end());
    report.lim_sup = *std::max_element(first, report.sequence_values.end());
    report.gap = report.sequence_values.back() - report.limit_value;
    report.lower_semicontinuity_failure = report.lim_inf < report.limit_value - tolerance;
    report.upper_semicontinuity_failure = report.lim_sup > report.limit_value + tolerance;
    return report;
}

} // namespace nlsem
