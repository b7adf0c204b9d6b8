#pragma once

#include "nlsem/pathspace.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace nlsem {

/// What a policy may look at when choosing the control for the step starting at `knot`.
struct PolicyContext {
    std::size_t step;   ///< steps since the simulation start
    std::size_t knot;   ///< global knot index
    double t;
    const PathView& prefix; ///< knots 0..knot of the running path
    double running_sup; ///< sup_{s<=t} |X_s|
};

/// Piecewise-constant control process. Three forms:
///  - open loop: one control per epoch of `epoch_length` steps;
///  - table: per epoch, a control for each bucket of the current first coordinate;
///  - rule: an arbitrary non-anticipative function of the context.
/// Every open-loop policy is a table with a single bucket, so the table class
/// contains the open-loop class.
class Policy {
public:
    enum class Kind { open_loop, table, rule };
    using Rule = std::function<std::size_t(const PolicyContext&)>;

    static Policy constant(std::size_t control);
    static Policy open_loop(std::vector<std::size_t> controls, std::size_t epoch_length);
    /// `edges` sorted ascending; bucket b holds x with edges[b-1] <= x < edges[b].
    static Policy table(std::vector<std::vector<std::size_t>> controls, std::vector<double> edges,
                        std::size_t epoch_length);
    static Policy rule(std::string name, Rule rule);

    std::size_t control(const PolicyContext& ctx) const;

    Kind kind() const noexcept { return kind_; }
    std::size_t epoch_length() const noexcept { return epoch_length_; }
    std::size_t epochs() const noexcept { return table_.size(); }
    /// Open-loop controls per epoch (first bucket of each epoch for tables).
    std::vector<std::size_t> open_loop_controls() const;
    const std::vector<std::vector<std::size_t>>& table_controls() const noexcept { return table_; }
    const std::vector<double>& edges() const noexcept { return edges_; }
    const std::string& name() const noexcept { return name_; }

    /// Largest control index used, or npos for rules.
    std::size_t max_control() const noexcept;

    /// Same table-form policy seen as a table with the given edges.
    Policy lifted(std::vector<double> edges) const;

    std::string summary() const;

    bool operator==(const Policy& other) const;

private:
    Policy() = default;

    Kind kind_ = Kind::open_loop;
    std::size_t epoch_length_ = 1;
    std::vector<std::vector<std::size_t>> table_; ///< [epoch][bucket]
    std::vector<double> edges_;
    std::string name_;
    Rule rule_;
};

} // namespace nlsem
