#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace quadralg {

using Complex = std::complex<double>;

enum class NodeKind : std::uint8_t {
    Integer,
    Number,
    Variable,
    Parameter,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Call
};

enum class Function : std::uint8_t { Sin, Cos, Tan, Exp, Ln, Sqrt };

inline const char* function_name(Function f) {
    switch (f) {
        case Function::Sin: return "sin";
        case Function::Cos: return "cos";
        case Function::Tan: return "tan";
        case Function::Exp: return "exp";
        case Function::Ln: return "ln";
        case Function::Sqrt: return "sqrt";
    }
    return "?";
}

inline std::optional<Function> function_from_name(std::string_view s) {
    if (s == "sin") return Function::Sin;
    if (s == "cos") return Function::Cos;
    if (s == "tan") return Function::Tan;
    if (s == "exp") return Function::Exp;
    if (s == "ln") return Function::Ln;
    if (s == "sqrt") return Function::Sqrt;
    return std::nullopt;
}

class ExpressionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ExpressionError {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : ExpressionError(msg + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class UnboundSymbolError : public ExpressionError {
public:
    explicit UnboundSymbolError(const std::string& name)
        : ExpressionError("unbound symbol '" + name + "'"), name_(name) {}
    const std::string& symbol() const { return name_; }

private:
    std::string name_;
};

class NonFiniteError : public ExpressionError {
public:
    using ExpressionError::ExpressionError;
};

namespace detail {
struct Node;
}

class Expression {
public:
    Expression() = default;  // empty handle; assign before use
    bool valid() const { return static_cast<bool>(node_); }

    static Expression integer(std::int64_t v);
    static Expression number(Complex v);
    static Expression imaginary_unit() { return number(Complex(0.0, 1.0)); }
    static Expression variable(std::string name);
    static Expression parameter(std::string name);
    // raw constructors, no simplification
    static Expression make_neg(Expression a);
    static Expression make_binary(NodeKind op, Expression a, Expression b);
    static Expression make_call(Function f, Expression a);

    NodeKind kind() const;
    std::int64_t int_value() const;
    Complex number_value() const;
    const std::string& name() const;
    Function function() const;
    const Expression& lhs() const;  // also the operand of Neg and Call
    const Expression& rhs() const;
    std::size_t arity() const;

    std::size_t hash() const;
    const detail::Node* id() const { return node_.get(); }

    bool is_constant() const {
        auto k = kind();
        return k == NodeKind::Integer || k == NodeKind::Number;
    }
    bool is_symbol() const {
        auto k = kind();
        return k == NodeKind::Variable || k == NodeKind::Parameter;
    }
    Complex constant_value() const;
    bool is_integer(std::int64_t v) const { return kind() == NodeKind::Integer && int_value() == v; }
    bool is_zero() const;
    bool is_one() const;

    friend bool operator==(const Expression& a, const Expression& b);
    friend bool operator!=(const Expression& a, const Expression& b) { return !(a == b); }

private:
    explicit Expression(std::shared_ptr<const detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const detail::Node> node_;
};

namespace detail {

inline std::size_t mix(std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

struct Node {
    NodeKind kind{NodeKind::Integer};
    Function fn{Function::Sin};
    std::int64_t ivalue{0};
    Complex value{};
    std::string name;
    Expression a, b;
    std::size_t arity{0};
    std::size_t hash{0};
};

inline std::size_t hash_double(double d) {
    if (d == 0.0) d = 0.0;
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    return std::hash<std::uint64_t>{}(bits);
}

}  // namespace detail

inline Expression Expression::integer(std::int64_t v) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Integer;
    n->ivalue = v;
    n->value = Complex(static_cast<double>(v), 0.0);
    n->hash = detail::mix(1, std::hash<std::int64_t>{}(v));
    return Expression(std::move(n));
}

inline Expression Expression::number(Complex v) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Number;
    n->value = v;
    n->hash = detail::mix(detail::mix(2, detail::hash_double(v.real())), detail::hash_double(v.imag()));
    return Expression(std::move(n));
}

inline Expression Expression::variable(std::string name) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Variable;
    n->hash = detail::mix(3, std::hash<std::string>{}(name));
    n->name = std::move(name);
    return Expression(std::move(n));
}

inline Expression Expression::parameter(std::string name) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Parameter;
    n->hash = detail::mix(4, std::hash<std::string>{}(name));
    n->name = std::move(name);
    return Expression(std::move(n));
}

inline Expression Expression::make_neg(Expression a) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Neg;
    n->arity = 1;
    n->hash = detail::mix(5, a.hash());
    n->a = std::move(a);
    return Expression(std::move(n));
}

inline Expression Expression::make_binary(NodeKind op, Expression a, Expression b) {
    if (op != NodeKind::Add && op != NodeKind::Sub && op != NodeKind::Mul && op != NodeKind::Div &&
        op != NodeKind::Pow)
        throw ExpressionError("make_binary: not a binary operator");
    auto n = std::make_shared<detail::Node>();
    n->kind = op;
    n->arity = 2;
    n->hash = detail::mix(detail::mix(10 + static_cast<std::size_t>(op), a.hash()), b.hash());
    n->a = std::move(a);
    n->b = std::move(b);
    return Expression(std::move(n));
}

inline Expression Expression::make_call(Function f, Expression a) {
    auto n = std::make_shared<detail::Node>();
    n->kind = NodeKind::Call;
    n->fn = f;
    n->arity = 1;
    n->hash = detail::mix(30 + static_cast<std::size_t>(f), a.hash());
    n->a = std::move(a);
    return Expression(std::move(n));
}

inline NodeKind Expression::kind() const { return node_->kind; }
inline std::int64_t Expression::int_value() const { return node_->ivalue; }
inline Complex Expression::number_value() const { return node_->value; }
inline const std::string& Expression::name() const { return node_->name; }
inline Function Expression::function() const { return node_->fn; }
inline const Expression& Expression::lhs() const { return node_->a; }
inline const Expression& Expression::rhs() const { return node_->b; }
inline std::size_t Expression::arity() const { return node_->arity; }
inline std::size_t Expression::hash() const { return node_->hash; }
inline Complex Expression::constant_value() const { return node_->value; }

inline bool Expression::is_zero() const {
    return (kind() == NodeKind::Integer && int_value() == 0) ||
           (kind() == NodeKind::Number && number_value() == Complex(0.0, 0.0));
}

inline bool Expression::is_one() const {
    return (kind() == NodeKind::Integer && int_value() == 1) ||
           (kind() == NodeKind::Number && number_value() == Complex(1.0, 0.0));
}

inline bool operator==(const Expression& x, const Expression& y) {
    if (x.node_ == y.node_) return true;
    const auto& a = *x.node_;
    const auto& b = *y.node_;
    if (a.hash != b.hash || a.kind != b.kind) return false;
    switch (a.kind) {
        case NodeKind::Integer: return a.ivalue == b.ivalue;
        case NodeKind::Number: return a.value == b.value;
        case NodeKind::Variable:
        case NodeKind::Parameter: return a.name == b.name;
        case NodeKind::Neg: return a.a == b.a;
        case NodeKind::Call: return a.fn == b.fn && a.a == b.a;
        default: return a.a == b.a && a.b == b.b;
    }
}

struct ExpressionHash {
    std::size_t operator()(const Expression& e) const { return e.hash(); }
};

// Integer value of an exponent written as n or -n.
inline std::optional<std::int64_t> integer_value(const Expression& e) {
    if (e.kind() == NodeKind::Integer) return e.int_value();
    if (e.kind() == NodeKind::Neg && e.lhs().kind() == NodeKind::Integer) return -e.lhs().int_value();
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// simplifying constructors

namespace detail {

inline Expression constant(Complex v) {
    if (v.imag() == 0.0 && std::isfinite(v.real()) && v.real() == std::nearbyint(v.real()) &&
        std::fabs(v.real()) < 9.0e15)
        return Expression::integer(static_cast<std::int64_t>(v.real()));
    return Expression::number(v);
}

inline Complex ipow(Complex base, std::int64_t n) {
    bool inv = n < 0;
    std::uint64_t m = inv ? static_cast<std::uint64_t>(-(n + 1)) + 1 : static_cast<std::uint64_t>(n);
    Complex result(1.0, 0.0);
    Complex b = base;
    while (m) {
        if (m & 1U) result *= b;
        m >>= 1U;
        if (m) b *= b;
    }
    return inv ? Complex(1.0, 0.0) / result : result;
}

inline std::optional<std::int64_t> exact_ipow(std::int64_t base, std::int64_t n) {
    if (n < 0) return std::nullopt;
    std::int64_t r = 1;
    for (std::int64_t k = 0; k < n; ++k)
        if (__builtin_mul_overflow(r, base, &r)) return std::nullopt;
    return r;
}

}  // namespace detail

Expression neg(const Expression& a);
Expression add(const Expression& a, const Expression& b);
Expression sub(const Expression& a, const Expression& b);
Expression mul(const Expression& a, const Expression& b);
Expression div(const Expression& a, const Expression& b);
Expression pow(const Expression& a, const Expression& b);
Expression apply(Function f, const Expression& a);

inline Expression neg(const Expression& a) {
    if (a.kind() == NodeKind::Integer) {
        if (a.int_value() != INT64_MIN) return Expression::integer(-a.int_value());
    }
    if (a.kind() == NodeKind::Number) return Expression::number(-a.number_value());
    if (a.kind() == NodeKind::Neg) return a.lhs();
    return Expression::make_neg(a);
}

inline Expression add(const Expression& a, const Expression& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.kind() == NodeKind::Integer && b.kind() == NodeKind::Integer) {
        std::int64_t r;
        if (!__builtin_add_overflow(a.int_value(), b.int_value(), &r)) return Expression::integer(r);
    }
    if (a.is_constant() && b.is_constant()) return detail::constant(a.constant_value() + b.constant_value());
    if (b.kind() == NodeKind::Neg) return sub(a, b.lhs());
    if (a.kind() == NodeKind::Neg) return sub(b, a.lhs());
    if (a == b) return mul(Expression::integer(2), a);
    return Expression::make_binary(NodeKind::Add, a, b);
}

inline Expression sub(const Expression& a, const Expression& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return neg(b);
    if (a.kind() == NodeKind::Integer && b.kind() == NodeKind::Integer) {
        std::int64_t r;
        if (!__builtin_sub_overflow(a.int_value(), b.int_value(), &r)) return Expression::integer(r);
    }
    if (a.is_constant() && b.is_constant()) return detail::constant(a.constant_value() - b.constant_value());
    if (a == b) return Expression::integer(0);
    if (b.kind() == NodeKind::Neg) return add(a, b.lhs());
    return Expression::make_binary(NodeKind::Sub, a, b);
}

inline Expression mul(const Expression& a, const Expression& b) {
    if (a.is_zero() || b.is_zero()) return Expression::integer(0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.kind() == NodeKind::Integer && b.kind() == NodeKind::Integer) {
        std::int64_t r;
        if (!__builtin_mul_overflow(a.int_value(), b.int_value(), &r)) return Expression::integer(r);
    }
    if (a.is_constant() && b.is_constant()) return detail::constant(a.constant_value() * b.constant_value());
    if (a.is_integer(-1)) return neg(b);
    if (b.is_integer(-1)) return neg(a);
    if (b.is_constant() && !a.is_constant()) return mul(b, a);
    if (a.kind() == NodeKind::Neg) return neg(mul(a.lhs(), b));
    if (b.kind() == NodeKind::Neg) return neg(mul(a, b.lhs()));
    if (a.is_constant() && b.kind() == NodeKind::Mul && b.lhs().is_constant())
        return mul(mul(a, b.lhs()), b.rhs());
    return Expression::make_binary(NodeKind::Mul, a, b);
}

inline Expression div(const Expression& a, const Expression& b) {
    if (b.is_one()) return a;
    if (a.is_zero() && !b.is_zero()) return Expression::integer(0);
    if (b.is_integer(-1)) return neg(a);
    if (a.kind() == NodeKind::Integer && b.kind() == NodeKind::Integer && b.int_value() != 0 &&
        a.int_value() % b.int_value() == 0)
        return Expression::integer(a.int_value() / b.int_value());
    if (a.kind() == NodeKind::Number && b.is_constant() && !b.is_zero())
        return detail::constant(a.constant_value() / b.constant_value());
    if (b.kind() == NodeKind::Number && a.is_constant() && !b.is_zero())
        return detail::constant(a.constant_value() / b.constant_value());
    if (a == b) return Expression::integer(1);
    if (a.kind() == NodeKind::Neg) return neg(div(a.lhs(), b));
    if (b.kind() == NodeKind::Neg) return neg(div(a, b.lhs()));
    return Expression::make_binary(NodeKind::Div, a, b);
}

inline Expression pow(const Expression& a, const Expression& b) {
    auto n = integer_value(b);
    if (n) {
        if (*n == 0) return Expression::integer(1);
        if (*n == 1) return a;
        if (a.kind() == NodeKind::Integer) {
            if (auto r = detail::exact_ipow(a.int_value(), *n)) return Expression::integer(*r);
        }
        if (a.is_constant() && !a.is_zero()) return detail::constant(detail::ipow(a.constant_value(), *n));
        if (a.kind() == NodeKind::Pow) {
            if (auto m = integer_value(a.rhs())) {
                std::int64_t mn;
                if (!__builtin_mul_overflow(*m, *n, &mn)) return pow(a.lhs(), Expression::integer(mn));
            }
        }
        if (*n < 0 && b.kind() == NodeKind::Integer)
            return Expression::make_binary(NodeKind::Pow, a, Expression::make_neg(Expression::integer(-*n)));
    }
    if (a.is_one()) return Expression::integer(1);
    return Expression::make_binary(NodeKind::Pow, a, b);
}

inline Expression apply(Function f, const Expression& a) {
    if (a.is_zero()) {
        switch (f) {
            case Function::Sin:
            case Function::Tan:
            case Function::Sqrt: return Expression::integer(0);
            case Function::Cos:
            case Function::Exp: return Expression::integer(1);
            case Function::Ln: break;
        }
    }
    if (a.is_one()) {
        if (f == Function::Ln) return Expression::integer(0);
        if (f == Function::Sqrt) return Expression::integer(1);
    }
    return Expression::make_call(f, a);
}

inline Expression operator+(const Expression& a, const Expression& b) { return add(a, b); }
inline Expression operator-(const Expression& a, const Expression& b) { return sub(a, b); }
inline Expression operator*(const Expression& a, const Expression& b) { return mul(a, b); }
inline Expression operator/(const Expression& a, const Expression& b) { return div(a, b); }
inline Expression operator-(const Expression& a) { return neg(a); }
inline Expression operator+(const Expression& a, std::int64_t b) { return add(a, Expression::integer(b)); }
inline Expression operator-(const Expression& a, std::int64_t b) { return sub(a, Expression::integer(b)); }
inline Expression operator*(std::int64_t a, const Expression& b) { return mul(Expression::integer(a), b); }
inline Expression operator/(const Expression& a, std::int64_t b) { return div(a, Expression::integer(b)); }
inline Expression pow(const Expression& a, std::int64_t n) { return pow(a, Expression::integer(n)); }

inline Expression sin(const Expression& a) { return apply(Function::Sin, a); }
inline Expression cos(const Expression& a) { return apply(Function::Cos, a); }
inline Expression tan(const Expression& a) { return apply(Function::Tan, a); }
inline Expression exp(const Expression& a) { return apply(Function::Exp, a); }
inline Expression ln(const Expression& a) { return apply(Function::Ln, a); }
inline Expression sqrt(const Expression& a) { return apply(Function::Sqrt, a); }

// Bottom-up rebuild through the simplifying constructors.
inline Expression simplify_basic(const Expression& e) {
    std::unordered_map<const detail::Node*, Expression> memo;
    std::function<Expression(const Expression&)> go = [&](const Expression& x) -> Expression {
        auto it = memo.find(x.id());
        if (it != memo.end()) return it->second;
        Expression r;
        switch (x.kind()) {
            case NodeKind::Integer:
            case NodeKind::Number:
            case NodeKind::Variable:
            case NodeKind::Parameter: r = x; break;
            case NodeKind::Neg: r = neg(go(x.lhs())); break;
            case NodeKind::Call: r = apply(x.function(), go(x.lhs())); break;
            case NodeKind::Add: r = add(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Sub: r = sub(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Mul: r = mul(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Div: r = div(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Pow: r = pow(go(x.lhs()), go(x.rhs())); break;
        }
        memo.emplace(x.id(), r);
        return r;
    };
    return go(e);
}

// ---------------------------------------------------------------------------
// traversal helpers

inline void visit_unique(const Expression& e, const std::function<void(const Expression&)>& f) {
    std::unordered_map<const detail::Node*, bool> seen;
    std::vector<Expression> stack{e};
    while (!stack.empty()) {
        Expression x = stack.back();
        stack.pop_back();
        if (!seen.emplace(x.id(), true).second) continue;
        f(x);
        if (x.arity() >= 1) stack.push_back(x.lhs());
        if (x.arity() == 2) stack.push_back(x.rhs());
    }
}

inline std::set<std::string> free_symbols(const Expression& e) {
    std::set<std::string> out;
    visit_unique(e, [&](const Expression& x) {
        if (x.is_symbol()) out.insert(x.name());
    });
    return out;
}

inline std::set<std::string> free_variables(const Expression& e) {
    std::set<std::string> out;
    visit_unique(e, [&](const Expression& x) {
        if (x.kind() == NodeKind::Variable) out.insert(x.name());
    });
    return out;
}

inline std::size_t node_count(const Expression& e) {
    std::size_t n = 0;
    visit_unique(e, [&](const Expression&) { ++n; });
    return n;
}

// Simultaneous substitution of symbols by expressions.
inline Expression substitute(const Expression& e, const std::map<std::string, Expression>& repl) {
    std::unordered_map<const detail::Node*, Expression> memo;
    std::function<Expression(const Expression&)> go = [&](const Expression& x) -> Expression {
        auto it = memo.find(x.id());
        if (it != memo.end()) return it->second;
        Expression r;
        switch (x.kind()) {
            case NodeKind::Integer:
            case NodeKind::Number: r = x; break;
            case NodeKind::Variable:
            case NodeKind::Parameter: {
                auto f = repl.find(x.name());
                r = f == repl.end() ? x : f->second;
                break;
            }
            case NodeKind::Neg: r = neg(go(x.lhs())); break;
            case NodeKind::Call: r = apply(x.function(), go(x.lhs())); break;
            case NodeKind::Add: r = add(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Sub: r = sub(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Mul: r = mul(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Div: r = div(go(x.lhs()), go(x.rhs())); break;
            case NodeKind::Pow: r = pow(go(x.lhs()), go(x.rhs())); break;
        }
        memo.emplace(x.id(), r);
        return r;
    };
    return go(e);
}

// Top-level additive decomposition: e == sum of the returned terms.
inline std::vector<Expression> additive_terms(const Expression& e) {
    std::vector<Expression> out;
    std::function<void(const Expression&, bool)> go = [&](const Expression& x, bool negate) {
        switch (x.kind()) {
            case NodeKind::Add:
                go(x.lhs(), negate);
                go(x.rhs(), negate);
                return;
            case NodeKind::Sub:
                go(x.lhs(), negate);
                go(x.rhs(), !negate);
                return;
            case NodeKind::Neg: go(x.lhs(), !negate); return;
            default: out.push_back(negate ? Expression::make_neg(x) : x);
        }
    };
    go(e, false);
    return out;
}

// Like additive_terms, but also distributes products and quotients over
// sums while the term count stays within budget. Residual checks use these
// terms as the scale, so cancellation inside a factor is still seen.
inline std::vector<Expression> expanded_terms(const Expression& e, std::size_t budget = 256) {
    std::unordered_map<const detail::Node*, std::vector<Expression>> memo;
    std::function<std::vector<Expression>(const Expression&)> go = [&](const Expression& x) -> std::vector<Expression> {
        if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
        std::vector<Expression> out;
        switch (x.kind()) {
            case NodeKind::Add:
            case NodeKind::Sub: {
                out = go(x.lhs());
                for (const auto& t : go(x.rhs()))
                    out.push_back(x.kind() == NodeKind::Sub ? Expression::make_neg(t) : t);
                break;
            }
            case NodeKind::Neg:
                for (const auto& t : go(x.lhs())) out.push_back(Expression::make_neg(t));
                break;
            case NodeKind::Mul: {
                auto l = go(x.lhs()), r = go(x.rhs());
                if (l.size() * r.size() > budget) {
                    out = {x};
                    break;
                }
                for (const auto& a : l)
                    for (const auto& b : r) out.push_back(Expression::make_binary(NodeKind::Mul, a, b));
                break;
            }
            case NodeKind::Div:
                for (const auto& t : go(x.lhs())) out.push_back(Expression::make_binary(NodeKind::Div, t, x.rhs()));
                break;
            default: out = {x};
        }
        if (out.size() > budget) out = {x};
        memo.emplace(x.id(), out);
        return out;
    };
    auto out = go(e);
    if (out.size() == 1 && out[0] == e) return additive_terms(e);
    return out;
}

// Sum of terms as a flat left-leaning chain (zero terms dropped).
inline Expression sum(const std::vector<Expression>& terms) {
    Expression acc = Expression::integer(0);
    for (const auto& t : terms) acc = add(acc, t);
    return acc;
}

// ---------------------------------------------------------------------------
// differentiation

inline Expression differentiate(const Expression& e, const std::string& var) {
    std::unordered_map<const detail::Node*, Expression> memo;
    std::function<Expression(const Expression&)> d = [&](const Expression& x) -> Expression {
        auto it = memo.find(x.id());
        if (it != memo.end()) return it->second;
        Expression r;
        const auto zero = Expression::integer(0);
        switch (x.kind()) {
            case NodeKind::Integer:
            case NodeKind::Number:
            case NodeKind::Parameter: r = zero; break;
            case NodeKind::Variable: r = Expression::integer(x.name() == var ? 1 : 0); break;
            case NodeKind::Neg: r = neg(d(x.lhs())); break;
            case NodeKind::Add: r = add(d(x.lhs()), d(x.rhs())); break;
            case NodeKind::Sub: r = sub(d(x.lhs()), d(x.rhs())); break;
            case NodeKind::Mul: {
                const auto& a = x.lhs();
                const auto& b = x.rhs();
                r = add(mul(d(a), b), mul(a, d(b)));
                break;
            }
            case NodeKind::Div: {
                const auto& a = x.lhs();
                const auto& b = x.rhs();
                auto da = d(a);
                auto db = d(b);
                if (db.is_zero())
                    r = div(da, b);
                else
                    r = div(sub(mul(da, b), mul(a, db)), pow(b, 2));
                break;
            }
            case NodeKind::Pow: {
                const auto& a = x.lhs();
                const auto& b = x.rhs();
                auto da = d(a);
                auto db = d(b);
                if (auto n = integer_value(b)) {
                    r = mul(mul(Expression::integer(*n), pow(a, Expression::integer(*n - 1))), da);
                } else if (db.is_zero()) {
                    r = mul(mul(b, pow(a, sub(b, Expression::integer(1)))), da);
                } else {
                    r = mul(x, add(mul(db, ln(a)), div(mul(b, da), a)));
                }
                break;
            }
            case NodeKind::Call: {
                const auto& a = x.lhs();
                auto da = d(a);
                if (da.is_zero()) {
                    r = zero;
                    break;
                }
                switch (x.function()) {
                    case Function::Sin: r = mul(cos(a), da); break;
                    case Function::Cos: r = neg(mul(sin(a), da)); break;
                    case Function::Tan: r = div(da, pow(cos(a), 2)); break;
                    case Function::Exp: r = mul(x, da); break;
                    case Function::Ln: r = div(da, a); break;
                    case Function::Sqrt: r = div(da, mul(Expression::integer(2), x)); break;
                }
                break;
            }
        }
        memo.emplace(x.id(), r);
        return r;
    };
    return d(e);
}

// ---------------------------------------------------------------------------
// printing

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline std::string format_constant(const Expression& e) {
    if (e.kind() == NodeKind::Integer) {
        auto v = e.int_value();
        if (v < 0) return "(" + std::to_string(v) + ")";
        return std::to_string(v);
    }
    Complex c = e.number_value();
    double re = c.real(), im = c.imag();
    if (im == 0.0) {
        if (std::signbit(re)) return "(-" + format_double(-re) + ")";
        return format_double(re);
    }
    std::string ims;
    if (im == 1.0)
        ims = "i";
    else if (im == -1.0)
        ims = "-i";
    else
        ims = (std::signbit(im) ? "-" + format_double(-im) : format_double(im)) + "*i";
    if (re == 0.0) {
        if (ims[0] == '-') return "(" + ims + ")";
        return ims;
    }
    std::string res = std::signbit(re) ? "-" + format_double(-re) : format_double(re);
    if (ims[0] == '-')
        return "(" + res + ims + ")";
    return "(" + res + "+" + ims + ")";
}

// precedence levels: 1 sum, 2 product, 3 unary, 4 power, 5 atom
inline int level(const Expression& e) {
    switch (e.kind()) {
        case NodeKind::Add:
        case NodeKind::Sub: return 1;
        case NodeKind::Mul:
        case NodeKind::Div: return 2;
        case NodeKind::Neg: return 3;
        case NodeKind::Pow: return 4;
        default: return 5;
    }
}

inline void print(const Expression& e, std::string& out);

inline void print_at(const Expression& e, int min_level, std::string& out) {
    if (level(e) < min_level) {
        out += '(';
        print(e, out);
        out += ')';
    } else {
        print(e, out);
    }
}

inline void print(const Expression& e, std::string& out) {
    switch (e.kind()) {
        case NodeKind::Integer:
        case NodeKind::Number: out += format_constant(e); return;
        case NodeKind::Variable:
        case NodeKind::Parameter: out += e.name(); return;
        case NodeKind::Neg:
            out += '-';
            // operand of unary minus must be a unary or an atom
            if (e.lhs().kind() == NodeKind::Neg || e.lhs().is_constant()) {
                out += '(';
                print(e.lhs(), out);
                out += ')';
            } else {
                print_at(e.lhs(), 5, out);
            }
            return;
        case NodeKind::Call:
            out += function_name(e.function());
            out += '(';
            print(e.lhs(), out);
            out += ')';
            return;
        case NodeKind::Add:
        case NodeKind::Sub:
            print_at(e.lhs(), 1, out);
            out += e.kind() == NodeKind::Add ? " + " : " - ";
            print_at(e.rhs(), 2, out);
            return;
        case NodeKind::Mul:
        case NodeKind::Div:
            print_at(e.lhs(), 2, out);
            out += e.kind() == NodeKind::Mul ? "*" : "/";
            print_at(e.rhs(), 3, out);
            return;
        case NodeKind::Pow:
            print_at(e.lhs(), 5, out);
            out += '^';
            print_at(e.rhs(), 3, out);
            return;
    }
}

}  // namespace detail

inline std::string to_string(const Expression& e) {
    std::string out;
    detail::print(e, out);
    return out;
}

inline std::ostream& operator<<(std::ostream& os, const Expression& e) { return os << to_string(e); }

// ---------------------------------------------------------------------------
// parsing

struct ParseOptions {
    std::set<std::string> parameters;
};

namespace detail {

class Parser {
public:
    Parser(std::string_view text, const ParseOptions& opts) : s_(text), opts_(opts) {}

    Expression run() {
        skip();
        if (pos_ >= s_.size()) throw ParseError("empty expression", pos_);
        Expression e = expr();
        skip();
        if (pos_ < s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
        return e;
    }

private:
    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r'))
            ++pos_;
    }
    bool peek(char c) {
        skip();
        return pos_ < s_.size() && s_[pos_] == c;
    }

    Expression expr() {
        Expression e = term();
        for (;;) {
            if (peek('+')) {
                ++pos_;
                e = Expression::make_binary(NodeKind::Add, e, term());
            } else if (peek('-')) {
                ++pos_;
                e = Expression::make_binary(NodeKind::Sub, e, term());
            } else {
                return e;
            }
        }
    }

    Expression term() {
        Expression e = factor();
        for (;;) {
            if (peek('*')) {
                ++pos_;
                e = Expression::make_binary(NodeKind::Mul, e, factor());
            } else if (peek('/')) {
                ++pos_;
                e = Expression::make_binary(NodeKind::Div, e, factor());
            } else {
                return e;
            }
        }
    }

    Expression factor() {
        Expression base = unary();
        if (peek('^')) {
            ++pos_;
            return Expression::make_binary(NodeKind::Pow, base, factor());
        }
        return base;
    }

    Expression unary() {
        if (peek('-')) {
            ++pos_;
            skip();
            bool bare = pos_ < s_.size() && s_[pos_] != '(';
            Expression e = unary();
            // a negated bare literal is read back as a negative constant, -(3) stays a negation
            if (bare && e.kind() == NodeKind::Integer) return Expression::integer(-e.int_value());
            if (bare && e.kind() == NodeKind::Number) return Expression::number(-e.number_value());
            return Expression::make_neg(e);
        }
        return atom();
    }

    static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
    static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

    Expression atom() {
        skip();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            Expression e = expr();
            if (!peek(')')) throw ParseError("expected ')'", pos_);
            ++pos_;
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (ident_start(c)) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
            std::string id(s_.substr(start, pos_ - start));
            if (peek('(')) {
                auto f = function_from_name(id);
                if (!f) throw ParseError("unknown function '" + id + "'", start);
                ++pos_;
                Expression arg = expr();
                if (!peek(')')) throw ParseError("expected ')'", pos_);
                ++pos_;
                return Expression::make_call(*f, arg);
            }
            if (function_from_name(id)) throw ParseError("function '" + id + "' needs an argument", start);
            if (id == "i") return Expression::imaginary_unit();
            if (opts_.parameters.count(id)) return Expression::parameter(id);
            return Expression::variable(id);
        }
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    Expression number() {
        std::size_t start = pos_;
        bool is_float = false;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            is_float = true;
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                is_float = true;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string_view lit = s_.substr(start, pos_ - start);
        if (lit == ".") throw ParseError("malformed number", start);
        if (!is_float) {
            std::int64_t v = 0;
            auto r = std::from_chars(lit.data(), lit.data() + lit.size(), v);
            if (r.ec == std::errc()) return Expression::integer(v);
        }
        double d = 0;
        auto r = std::from_chars(lit.data(), lit.data() + lit.size(), d);
        if (r.ec != std::errc() || r.ptr != lit.data() + lit.size()) throw ParseError("malformed number", start);
        return Expression::number(Complex(d, 0.0));
    }

    std::string_view s_;
    const ParseOptions& opts_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Expression parse(std::string_view text, const ParseOptions& opts = {}) {
    return detail::Parser(text, opts).run();
}

inline Expression parse(std::string_view text, const std::set<std::string>& parameters) {
    ParseOptions o;
    o.parameters = parameters;
    return parse(text, o);
}

// ---------------------------------------------------------------------------
// evaluation

namespace detail {

// Signed zero in the imaginary part would select the lower side of a branch cut.
inline Complex clean(Complex z) { return Complex(z.real(), z.imag() + 0.0); }

inline Complex apply_function(Function f, Complex z) {
    switch (f) {
        case Function::Sin: return std::sin(z);
        case Function::Cos: return std::cos(z);
        case Function::Tan: return std::tan(z);
        case Function::Exp: return std::exp(z);
        case Function::Ln: return std::log(clean(z));
        case Function::Sqrt: return std::sqrt(clean(z));
    }
    return {};
}

}  // namespace detail

// Flattened multi-output program over a fixed symbol order. Shared and
// structurally equal subtrees are evaluated once.
class Program {
public:
    Program() = default;

    Program(const std::vector<Expression>& outputs, std::vector<std::string> symbols)
        : symbols_(std::move(symbols)) {
        for (std::size_t k = 0; k < symbols_.size(); ++k) slot_of_.emplace(symbols_[k], static_cast<int>(k));
        std::unordered_map<const detail::Node*, int> memo;
        std::map<Key, int> dedupe;
        for (const auto& e : outputs) outputs_.push_back(compile(e, memo, dedupe));
    }

    explicit Program(const std::vector<Expression>& outputs) : Program(outputs, collect(outputs)) {}

    static std::vector<std::string> collect(const std::vector<Expression>& outputs) {
        std::set<std::string> s;
        for (const auto& e : outputs) {
            auto f = free_symbols(e);
            s.insert(f.begin(), f.end());
        }
        return {s.begin(), s.end()};
    }

    const std::vector<std::string>& symbols() const { return symbols_; }
    std::size_t output_count() const { return outputs_.size(); }
    std::size_t size() const { return code_.size(); }

    // scratch is resized as needed; out receives one value per output
    void run(std::span<const Complex> inputs, std::span<Complex> out, std::vector<Complex>& scratch) const {
        scratch.resize(code_.size());
        for (std::size_t k = 0; k < code_.size(); ++k) {
            const Instr& in = code_[k];
            Complex v;
            switch (in.op) {
                case Op::Const: v = in.value; break;
                case Op::Load: v = inputs[in.a]; break;
                case Op::Neg: v = -scratch[in.a]; break;
                case Op::Add: v = scratch[in.a] + scratch[in.b]; break;
                case Op::Sub: v = scratch[in.a] - scratch[in.b]; break;
                case Op::Mul: v = scratch[in.a] * scratch[in.b]; break;
                case Op::Div: v = scratch[in.a] / scratch[in.b]; break;
                case Op::IntPow: v = detail::ipow(scratch[in.a], in.n); break;
                case Op::Pow: {
                    Complex base = detail::clean(scratch[in.a]);
                    Complex ex = scratch[in.b];
                    if (base == Complex(0.0, 0.0))
                        v = ex.real() > 0 ? Complex(0.0, 0.0) : Complex(NAN, NAN);
                    else
                        v = std::exp(ex * std::log(base));
                    break;
                }
                case Op::Call: v = detail::apply_function(in.fn, scratch[in.a]); break;
            }
            scratch[k] = v;
        }
        for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = scratch[outputs_[k]];
    }

    std::vector<Complex> run(std::span<const Complex> inputs) const {
        std::vector<Complex> scratch, out(outputs_.size());
        run(inputs, out, scratch);
        return out;
    }

private:
    enum class Op : std::uint8_t { Const, Load, Neg, Add, Sub, Mul, Div, IntPow, Pow, Call };
    struct Instr {
        Op op;
        Function fn{Function::Sin};
        int a{-1}, b{-1};
        std::int64_t n{0};
        Complex value{};
    };
    using Key = std::tuple<int, int, int, int, std::int64_t, double, double>;

    int emit(const Instr& in, std::map<Key, int>& dedupe) {
        Key k{static_cast<int>(in.op), static_cast<int>(in.fn), in.a, in.b, in.n, in.value.real(), in.value.imag()};
        auto it = dedupe.find(k);
        if (it != dedupe.end()) return it->second;
        code_.push_back(in);
        int idx = static_cast<int>(code_.size()) - 1;
        dedupe.emplace(k, idx);
        return idx;
    }

    int compile(const Expression& e, std::unordered_map<const detail::Node*, int>& memo, std::map<Key, int>& dedupe) {
        auto it = memo.find(e.id());
        if (it != memo.end()) return it->second;
        Instr in{};
        switch (e.kind()) {
            case NodeKind::Integer:
            case NodeKind::Number:
                in.op = Op::Const;
                in.value = e.constant_value();
                break;
            case NodeKind::Variable:
            case NodeKind::Parameter: {
                auto f = slot_of_.find(e.name());
                if (f == slot_of_.end()) throw UnboundSymbolError(e.name());
                in.op = Op::Load;
                in.a = f->second;
                break;
            }
            case NodeKind::Neg:
                in.op = Op::Neg;
                in.a = compile(e.lhs(), memo, dedupe);
                break;
            case NodeKind::Call:
                in.op = Op::Call;
                in.fn = e.function();
                in.a = compile(e.lhs(), memo, dedupe);
                break;
            case NodeKind::Pow:
                if (auto n = integer_value(e.rhs())) {
                    in.op = Op::IntPow;
                    in.n = *n;
                    in.a = compile(e.lhs(), memo, dedupe);
                } else {
                    in.op = Op::Pow;
                    in.a = compile(e.lhs(), memo, dedupe);
                    in.b = compile(e.rhs(), memo, dedupe);
                }
                break;
            default:
                in.op = e.kind() == NodeKind::Add   ? Op::Add
                        : e.kind() == NodeKind::Sub ? Op::Sub
                        : e.kind() == NodeKind::Mul ? Op::Mul
                                                    : Op::Div;
                in.a = compile(e.lhs(), memo, dedupe);
                in.b = compile(e.rhs(), memo, dedupe);
                break;
        }
        int idx = emit(in, dedupe);
        memo.emplace(e.id(), idx);
        return idx;
    }

    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> slot_of_;
    std::vector<Instr> code_;
    std::vector<int> outputs_;
};

using EvalContext = std::map<std::string, Complex>;

inline Complex evaluate(const Expression& e, const EvalContext& ctx) {
    Program prog({e});
    std::vector<Complex> in;
    in.reserve(prog.symbols().size());
    for (const auto& s : prog.symbols()) {
        auto it = ctx.find(s);
        if (it == ctx.end()) throw UnboundSymbolError(s);
        in.push_back(it->second);
    }
    Complex v = prog.run(in)[0];
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NonFiniteError("non-finite value evaluating " + to_string(e));
    return v;
}

}  // namespace quadralg
