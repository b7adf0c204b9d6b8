#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nlsem {

/// Arithmetic expression over named variables, parsed once and evaluated many
/// times. Supports + - * / ^, unary minus, parentheses, the constant pi and
/// sin cos tan exp log sqrt abs sgn tanh min max clamp.
///
///     auto e = Expression::parse("max(x - k, 0)", {"x", "k"});
///     e({1.5, 1.0}); // 0.5
///
/// Parse failures and unknown names throw ConfigError. Evaluation is const and
/// reentrant.
class Expression {
public:
    static Expression parse(const std::string& text, std::vector<std::string> variables);

    /// `values` in the order the variables were declared.
    double operator()(std::span<const double> values) const;
    double operator()(std::initializer_list<double> values) const {
        return (*this)(std::span<const double>(values.begin(), values.size()));
    }

    const std::string& text() const noexcept;
    const std::vector<std::string>& variables() const noexcept;
    /// True when the expression reads the named variable.
    bool uses(const std::string& variable) const;

    struct Node;

private:
    struct Impl;
    explicit Expression(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

} // namespace nlsem
