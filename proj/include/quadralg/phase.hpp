#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "quadralg/expr.hpp"
#include "quadralg/sampling.hpp"

namespace quadralg {

struct Monomial {
    int d1 = 0;
    int d2 = 0;
    int degree() const { return d1 + d2; }
    auto operator<=>(const Monomial&) const = default;
};

inline std::string to_string(const Monomial& m) { return std::to_string(m.d1) + "," + std::to_string(m.d2); }

using Coords = std::array<std::string, 2>;
using Tensor2 = std::array<std::array<Expression, 2>, 2>;

// Polynomial in (p1, p2) with Expression coefficients.
class Observable {
public:
    Observable() = default;
    explicit Observable(Coords coords) : coords_(std::move(coords)) {}
    Observable(Coords coords, const std::map<Monomial, Expression>& terms) : coords_(std::move(coords)) {
        for (const auto& [m, c] : terms) set(m, c);
    }

    static Observable constant(Coords coords, const Expression& c) {
        Observable o(std::move(coords));
        o.set({0, 0}, c);
        return o;
    }
    static Observable momentum(Coords coords, int j) {
        Observable o(std::move(coords));
        o.set(j == 0 ? Monomial{1, 0} : Monomial{0, 1}, Expression::integer(1));
        return o;
    }
    // sum a^{ij} p_i p_j + w with a symmetric
    static Observable quadratic(Coords coords, const Tensor2& a, const Expression& w) {
        Observable o(std::move(coords));
        o.set({2, 0}, a[0][0]);
        o.set({1, 1}, mul(Expression::integer(2), a[0][1]));
        o.set({0, 2}, a[1][1]);
        o.set({0, 0}, w);
        return o;
    }

    const Coords& coords() const { return coords_; }
    const std::map<Monomial, Expression>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    int degree() const {
        int d = -1;
        for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
        return d;
    }
    int min_degree() const {
        int d = -1;
        for (const auto& [m, c] : terms_) d = d < 0 ? m.degree() : std::min(d, m.degree());
        return d;
    }

    Expression coefficient(Monomial m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? Expression::integer(0) : it->second;
    }

    // stores simplify_basic(c); zero coefficients are dropped
    void set(Monomial m, const Expression& c) {
        Expression s = simplify_basic(c);
        if (s.is_zero())
            terms_.erase(m);
        else
            terms_[m] = s;
    }

    // part of degree exactly d
    Observable homogeneous(int d) const {
        Observable o(coords_);
        for (const auto& [m, c] : terms_)
            if (m.degree() == d) o.terms_[m] = c;
        return o;
    }

    friend bool operator==(const Observable& a, const Observable& b) {
        return a.coords_ == b.coords_ && a.terms_ == b.terms_;
    }

private:
    Coords coords_{"x", "y"};
    std::map<Monomial, Expression> terms_;
};

inline void require_same_chart(const Observable& a, const Observable& b) {
    if (a.coords() != b.coords()) throw ExpressionError("observables use different coordinate names");
}

inline Observable operator+(const Observable& a, const Observable& b) {
    require_same_chart(a, b);
    Observable r = a;
    for (const auto& [m, c] : b.terms()) r.set(m, add(a.coefficient(m), c));
    return r;
}

inline Observable operator-(const Observable& a, const Observable& b) {
    require_same_chart(a, b);
    Observable r = a;
    for (const auto& [m, c] : b.terms()) r.set(m, sub(a.coefficient(m), c));
    return r;
}

inline Observable scale(const Observable& a, const Expression& f) {
    Observable r(a.coords());
    for (const auto& [m, c] : a.terms()) r.set(m, mul(f, c));
    return r;
}

inline Observable multiply(const Observable& a, const Observable& b) {
    require_same_chart(a, b);
    std::map<Monomial, std::vector<Expression>> acc;
    for (const auto& [ma, ca] : a.terms())
        for (const auto& [mb, cb] : b.terms()) acc[{ma.d1 + mb.d1, ma.d2 + mb.d2}].push_back(mul(ca, cb));
    Observable r(a.coords());
    for (const auto& [m, ts] : acc) r.set(m, sum(ts));
    return r;
}

inline Observable operator*(const Observable& a, const Observable& b) { return multiply(a, b); }

// a^{ij} of the second-order part (a^{12} is half the p1p2 coefficient).
inline Tensor2 quadratic_part(const Observable& f) {
    auto a12 = div(f.coefficient({1, 1}), Expression::integer(2));
    return {{{f.coefficient({2, 0}), a12}, {a12, f.coefficient({0, 2})}}};
}

// Coefficient derivatives are memoized for the duration of one bracket.
class DerivativeCache {
public:
    const Expression& d(const Expression& e, const std::string& var) {
        auto key = std::make_pair(e.id(), var);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second.second;
        auto r = simplify_basic(differentiate(e, var));
        return cache_.emplace(key, std::make_pair(e, r)).first->second.second;
    }

private:
    // keeps the source alive so its node address stays unique
    std::map<std::pair<const detail::Node*, std::string>, std::pair<Expression, Expression>> cache_;
};

// One bracket contribution: coef * a * b with the factors in canonical order.
struct ProductTerm {
    std::int64_t coef = 0;
    Expression a;
    Expression b;
};

namespace detail {

inline bool factor_less(const Expression& x, const Expression& y) {
    if (x.hash() != y.hash()) return x.hash() < y.hash();
    if (x == y) return false;
    return to_string(x) < to_string(y);
}

inline void add_term(std::vector<ProductTerm>& ts, std::int64_t coef, Expression a, Expression b) {
    if (factor_less(b, a)) std::swap(a, b);
    for (auto& t : ts)
        if (t.a == a && t.b == b) {
            t.coef += coef;
            return;
        }
    ts.push_back({coef, std::move(a), std::move(b)});
}

}  // namespace detail

// Bracket contributions grouped by monomial, with like products merged so
// that cancelling terms disappear exactly.
inline std::map<Monomial, std::vector<ProductTerm>> poisson_bracket_terms(const Observable& f, const Observable& g) {
    require_same_chart(f, g);
    const auto& x = f.coords();
    DerivativeCache dc;
    std::map<Monomial, std::vector<ProductTerm>> acc;
    for (const auto& [ma, fa] : f.terms()) {
        for (const auto& [mb, gb] : g.terms()) {
            for (int j = 0; j < 2; ++j) {
                int bj = j == 0 ? mb.d1 : mb.d2;
                int aj = j == 0 ? ma.d1 : ma.d2;
                Monomial m{ma.d1 + mb.d1 - (j == 0 ? 1 : 0), ma.d2 + mb.d2 - (j == 1 ? 1 : 0)};
                // d_xj f * d_pj g
                if (bj > 0) {
                    const auto& dfa = dc.d(fa, x[j]);
                    if (!dfa.is_zero()) detail::add_term(acc[m], bj, dfa, gb);
                }
                // - d_pj f * d_xj g
                if (aj > 0) {
                    const auto& dgb = dc.d(gb, x[j]);
                    if (!dgb.is_zero()) detail::add_term(acc[m], -aj, fa, dgb);
                }
            }
        }
    }
    for (auto& [m, ts] : acc) std::erase_if(ts, [](const ProductTerm& t) { return t.coef == 0; });
    return acc;
}

inline Observable poisson_bracket(const Observable& f, const Observable& g) {
    Observable r(f.coords());
    for (const auto& [m, ts] : poisson_bracket_terms(f, g)) {
        std::vector<Expression> parts;
        for (const auto& t : ts) parts.push_back(mul(Expression::integer(t.coef), mul(t.a, t.b)));
        r.set(m, sum(parts));
    }
    return r;
}

// Complete binding of coordinates, momenta and parameters.
struct PhasePoint {
    std::map<std::string, Complex> values;  // coordinates and parameters
    std::array<Complex, 2> p{};
};

inline Complex momentum_power(const std::array<Complex, 2>& p, Monomial m) {
    return detail::ipow(p[0], m.d1) * detail::ipow(p[1], m.d2);
}

inline Complex evaluate_observable(const Observable& f, const PhasePoint& pt) {
    Complex total(0.0, 0.0);
    for (const auto& [m, c] : f.terms()) {
        Complex v;
        try {
            v = evaluate(c, pt.values);
        } catch (const NonFiniteError&) {
            throw NonFiniteError("non-finite coefficient of monomial (" + to_string(m) + ")");
        }
        total += v * momentum_power(pt.p, m);
    }
    if (!std::isfinite(total.real()) || !std::isfinite(total.imag()))
        throw NonFiniteError("non-finite observable value");
    return total;
}

// Evaluates many observables at once from one compiled program. Symbols are
// the program symbols plus p1, p2 appended at the end.
class ObservableSet {
public:
    explicit ObservableSet(const std::vector<Observable>& obs) {
        std::vector<Expression> outs;
        for (const auto& o : obs) {
            std::vector<std::pair<Monomial, std::size_t>> idx;
            for (const auto& [m, c] : o.terms()) {
                idx.emplace_back(m, outs.size());
                outs.push_back(c);
            }
            layout_.push_back(std::move(idx));
        }
        auto syms = Program::collect(outs);
        syms.erase(std::remove_if(syms.begin(), syms.end(), [](const std::string& s) { return s == "p1" || s == "p2"; }),
                   syms.end());
        symbols_ = syms;
        symbols_.push_back("p1");
        symbols_.push_back("p2");
        prog_ = Program(outs, syms);
    }

    // sampling symbols: coefficient symbols then p1, p2
    const std::vector<std::string>& symbols() const { return symbols_; }
    std::size_t size() const { return layout_.size(); }

    // point laid out as symbols(); returns false if any coefficient is unusable
    bool eval(std::span<const Complex> point, std::span<Complex> out, std::vector<Complex>& scratch,
              std::vector<Complex>& coeffs, double cap) const {
        std::size_t n = symbols_.size();
        coeffs.resize(prog_.output_count());
        prog_.run(point.subspan(0, n - 2), coeffs, scratch);
        std::array<Complex, 2> p{point[n - 2], point[n - 1]};
        for (std::size_t k = 0; k < layout_.size(); ++k) {
            Complex v(0.0, 0.0);
            for (const auto& [m, i] : layout_[k]) {
                if (!acceptable(coeffs[i], cap)) return false;
                v += coeffs[i] * momentum_power(p, m);
            }
            if (!acceptable(v, cap)) return false;
            out[k] = v;
        }
        return true;
    }

private:
    Program prog_;
    std::vector<std::string> symbols_;
    std::vector<std::vector<std::pair<Monomial, std::size_t>>> layout_;
};

// Tests every coefficient of {H, F} for identical vanishing.
inline ConditionReport is_constant_of_motion(const Observable& h, const Observable& f, const DomainBox& box,
                                             const CheckOptions& opt, const std::string& name = "constant_of_motion") {
    Observable br = poisson_bracket(h, f);
    std::vector<Identity> ids;
    for (const auto& [m, c] : br.terms()) ids.push_back({"coefficient(" + to_string(m) + ")", c});
    if (ids.empty()) ids.push_back({"bracket", Expression::integer(0)});
    return check_identities(name, ids, box, opt);
}

}  // namespace quadralg
