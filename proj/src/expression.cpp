#include "nlsem/expression.hpp"

#include "nlsem/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace nlsem {

struct Expression::Node {
    enum class Op {
        constant, variable, add, sub, mul, div, pow, neg,
        sin, cos, tan, exp, log, sqrt, abs, sgn, tanh, min, max, clamp
    };
    Op op = Op::constant;
    double value = 0.0;
    std::size_t slot = 0;
    std::vector<std::size_t> args;
};

struct Expression::Impl {
    std::string text;
    std::vector<std::string> variables;
    std::vector<Node> nodes;
    std::size_t root = 0;

    double eval(std::size_t i, std::span<const double> v) const {
        using Op = Node::Op;
        const Node& n = nodes[i];
        auto arg = [&](std::size_t k) { return eval(n.args[k], v); };
        switch (n.op) {
        case Op::constant: return n.value;
        case Op::variable: return v[n.slot];
        case Op::add: return arg(0) + arg(1);
        case Op::sub: return arg(0) - arg(1);
        case Op::mul: return arg(0) * arg(1);
        case Op::div: return arg(0) / arg(1);
        case Op::pow: return std::pow(arg(0), arg(1));
        case Op::neg: return -arg(0);
        case Op::sin: return std::sin(arg(0));
        case Op::cos: return std::cos(arg(0));
        case Op::tan: return std::tan(arg(0));
        case Op::exp: return std::exp(arg(0));
        case Op::log: return std::log(arg(0));
        case Op::sqrt: return std::sqrt(arg(0));
        case Op::abs: return std::abs(arg(0));
        case Op::sgn: {
            const double x = arg(0);
            return static_cast<double>((x > 0.0) - (x < 0.0));
        }
        case Op::tanh: return std::tanh(arg(0));
        case Op::min: return std::min(arg(0), arg(1));
        case Op::max: return std::max(arg(0), arg(1));
        case Op::clamp: {
            const double lo = arg(1);
            const double hi = arg(2);
            return std::min(std::max(arg(0), lo), hi);
        }
        }
        return 0.0;
    }
};

namespace {

using Node = Expression::Node;
using Op = Node::Op;

struct FunctionInfo {
    const char* name;
    Op op;
    std::size_t arity;
};

constexpr FunctionInfo kFunctions[] = {
    {"sin", Op::sin, 1},   {"cos", Op::cos, 1},   {"tan", Op::tan, 1},
    {"exp", Op::exp, 1},   {"log", Op::log, 1},   {"sqrt", Op::sqrt, 1},
    {"abs", Op::abs, 1},   {"sgn", Op::sgn, 1},   {"tanh", Op::tanh, 1},
    {"min", Op::min, 2},   {"max", Op::max, 2},   {"clamp", Op::clamp, 3},
};

class Parser {
public:
    Parser(const std::string& text, const std::vector<std::string>& variables,
           std::vector<Node>& nodes)
        : s_(text), vars_(variables), nodes_(nodes) {}

    std::size_t parse() {
        const std::size_t root = expr();
        skip();
        if (pos_ != s_.size()) {
            fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("expression \"" + s_ + "\": " + what + " at offset " +
                          std::to_string(pos_));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::size_t push(Node n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    std::size_t binary(Op op, std::size_t lhs, std::size_t rhs) {
        Node n;
        n.op = op;
        n.args = {lhs, rhs};
        return push(std::move(n));
    }

    std::size_t expr() {
        std::size_t lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = binary(Op::add, lhs, term());
            } else if (accept('-')) {
                lhs = binary(Op::sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    std::size_t term() {
        std::size_t lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = binary(Op::mul, lhs, unary());
            } else if (accept('/')) {
                lhs = binary(Op::div, lhs, unary());
            } else {
                return lhs;
            }
        }
    }

    std::size_t unary() {
        if (accept('-')) {
            Node n;
            n.op = Op::neg;
            n.args = {unary()};
            return push(std::move(n));
        }
        if (accept('+')) {
            return unary();
        }
        return power();
    }

    // right associative: 2^3^2 = 2^9
    std::size_t power() {
        const std::size_t base = primary();
        if (accept('^')) {
            return binary(Op::pow, base, unary());
        }
        return base;
    }

    std::size_t primary() {
        skip();
        if (pos_ >= s_.size()) {
            fail("unexpected end");
        }
        if (accept('(')) {
            const std::size_t inner = expr();
            if (!accept(')')) {
                fail("expected ')'");
            }
            return inner;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double value = std::strtod(begin, &end);
            if (end == begin) {
                fail("bad number");
            }
            pos_ += static_cast<std::size_t>(end - begin);
            Node n;
            n.value = value;
            return push(std::move(n));
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
            }
            const std::string name = s_.substr(start, pos_ - start);
            if (accept('(')) {
                return call(name);
            }
            if (name == "pi") {
                Node n;
                n.value = std::numbers::pi;
                return push(std::move(n));
            }
            const auto it = std::find(vars_.begin(), vars_.end(), name);
            if (it == vars_.end()) {
                fail("unknown variable '" + name + "'");
            }
            Node n;
            n.op = Op::variable;
            n.slot = static_cast<std::size_t>(it - vars_.begin());
            return push(std::move(n));
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::size_t call(const std::string& name) {
        const auto* info = std::find_if(std::begin(kFunctions), std::end(kFunctions),
                                        [&](const FunctionInfo& f) { return name == f.name; });
        if (info == std::end(kFunctions)) {
            fail("unknown function '" + name + "'");
        }
        Node n;
        n.op = info->op;
        if (!accept(')')) {
            do {
                n.args.push_back(expr());
            } while (accept(','));
            if (!accept(')')) {
                fail("expected ')'");
            }
        }
        if (n.args.size() != info->arity) {
            fail(name + " takes " + std::to_string(info->arity) + " argument(s)");
        }
        return push(std::move(n));
    }

    const std::string& s_;
    const std::vector<std::string>& vars_;
    std::vector<Node>& nodes_;
    std::size_t pos_ = 0;
};

} // namespace

Expression Expression::parse(const std::string& text, std::vector<std::string> variables) {
    auto impl = std::make_shared<Impl>();
    impl->text = text;
    impl->variables = std::move(variables);
    Parser parser(impl->text, impl->variables, impl->nodes);
    impl->root = parser.parse();
    return Expression(std::move(impl));
}

double Expression::operator()(std::span<const double> values) const {
    return impl_->eval(impl_->root, values);
}

const std::string& Expression::text() const noexcept { return impl_->text; }

const std::vector<std::string>& Expression::variables() const noexcept {
    return impl_->variables;
}

bool Expression::uses(const std::string& variable) const {
    const auto it = std::find(impl_->variables.begin(), impl_->variables.end(), variable);
    if (it == impl_->variables.end()) {
        return false;
    }
    const auto slot = static_cast<std::size_t>(it - impl_->variables.begin());
    return std::any_of(impl_->nodes.begin(), impl_->nodes.end(), [&](const Node& n) {
        return n.op == Op::variable && n.slot == slot;
    });
}

} // namespace nlsem
