#include "nlsem/policy.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace nlsem {

Policy Policy::constant(std::size_t control) {
    return open_loop({control}, 1);
}

Policy Policy::open_loop(std::vector<std::size_t> controls, std::size_t epoch_length) {
    if (controls.empty() || epoch_length == 0) {
        throw std::invalid_argument("Policy::open_loop: need at least one epoch of positive length");
    }
    Policy p;
    p.kind_ = Kind::open_loop;
    p.epoch_length_ = epoch_length;
    for (std::size_t c : controls) {
        p.table_.push_back({c});
    }
    p.name_ = "open-loop";
    return p;
}

Policy Policy::table(std::vector<std::vector<std::size_t>> controls, std::vector<double> edges,
                     std::size_t epoch_length) {
    if (controls.empty() || epoch_length == 0) {
        throw std::invalid_argument("Policy::table: need at least one epoch of positive length");
    }
    if (!std::is_sorted(edges.begin(), edges.end())) {
        throw std::invalid_argument("Policy::table: edges must be sorted");
    }
    for (const auto& row : controls) {
        if (row.size() != edges.size() + 1) {
            throw std::invalid_argument("Policy::table: one control per bucket required");
        }
    }
    Policy p;
    p.kind_ = Kind::table;
    p.epoch_length_ = epoch_length;
    p.table_ = std::move(controls);
    p.edges_ = std::move(edges);
    p.name_ = "feedback-table";
    return p;
}

Policy Policy::rule(std::string name, Rule rule) {
    if (!rule) {
        throw std::invalid_argument("Policy::rule: empty rule");
    }
    Policy p;
    p.kind_ = Kind::rule;
    p.name_ = std::move(name);
    p.rule_ = std::move(rule);
    return p;
}

std::size_t Policy::control(const PolicyContext& ctx) const {
    if (kind_ == Kind::rule) {
        return rule_(ctx);
    }
    const std::size_t epoch = std::min(ctx.step / epoch_length_, table_.size() - 1);
    const auto& row = table_[epoch];
    if (row.size() == 1) {
        return row.front();
    }
    const double x = ctx.prefix.current(0);
    const auto bucket = static_cast<std::size_t>(
        std::upper_bound(edges_.begin(), edges_.end(), x) - edges_.begin());
    return row[bucket];
}

std::vector<std::size_t> Policy::open_loop_controls() const {
    std::vector<std::size_t> out;
    for (const auto& row : table_) {
        out.push_back(row.front());
    }
    return out;
}

std::size_t Policy::max_control() const noexcept {
    if (kind_ == Kind::rule) {
        return static_cast<std::size_t>(-1);
    }
    std::size_t m = 0;
    for (const auto& row : table_) {
        for (std::size_t c : row) {
            m = std::max(m, c);
        }
    }
    return m;
}

Policy Policy::lifted(std::vector<double> edges) const {
    if (kind_ == Kind::rule) {
        throw std::invalid_argument("Policy::lifted: rule policies have no table form");
    }
    std::vector<std::vector<std::size_t>> rows;
    for (const auto& row : table_) {
        if (row.size() != 1 && row.size() != edges.size() + 1) {
            throw std::invalid_argument("Policy::lifted: bucket count mismatch");
        }
        rows.push_back(row.size() == 1 ? std::vector<std::size_t>(edges.size() + 1, row.front())
                                       : row);
    }
    return table(std::move(rows), std::move(edges), epoch_length_);
}

std::string Policy::summary() const {
    std::ostringstream out;
    out << name_;
    if (kind_ == Kind::rule) {
        return out.str();
    }
    out << " epoch_length=" << epoch_length_ << " controls=[";
    for (std::size_t e = 0; e < table_.size(); ++e) {
        out << (e ? "," : "");
        if (table_[e].size() == 1) {
            out << table_[e].front();
        } else {
            out << "(";
            for (std::size_t b = 0; b < table_[e].size(); ++b) {
                out << (b ? " " : "") << table_[e][b];
            }
            out << ")";
        }
    }
    out << "]";
    return out.str();
}

bool Policy::operator==(const Policy& other) const {
    if (kind_ == Kind::rule || other.kind_ == Kind::rule) {
        return false;
    }
    return kind_ == other.kind_ && epoch_length_ == other.epoch_length_ &&
           table_ == other.table_ && edges_ == other.edges_;
}

} // namespace nlsem
