#pragma once

#include <algorithm>

#include "quadralg/stackel.hpp"

// Random observables and points drawn from the bundled catalog.
namespace quadralg::fixtures {

// pieces of one bundled system: every coefficient it declares, with its box
struct Pieces {
    SystemDef sys;
    std::vector<std::pair<Monomial, Expression>> terms;
};

inline std::vector<Pieces> catalog_pieces() {
    std::vector<Pieces> out;
    for (const auto& name : builtin_names()) {
        Pieces p{builtin(name), {}};
        for (const auto& o : p.sys.symmetry_observables())
            for (const auto& [m, c] : o.terms()) p.terms.emplace_back(m, c);
        out.push_back(std::move(p));
    }
    return out;
}

inline std::size_t pick(RandomStream& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

// entire multipliers in the chart coordinates
inline Expression entire_factor(const Coords& c, RandomStream& rng) {
    auto x = Expression::variable(c[0]), y = Expression::variable(c[1]);
    switch (pick(rng, 5)) {
        case 0: return Expression::integer(1);
        case 1: return add(x, Expression::integer(2));
        case 2: return exp(y);
        case 3: return add(mul(x, y), Expression::integer(1));
        default: return sin(add(x, y));
    }
}

// 1-3 catalog coefficients at random monomials of degree <= 2, times entire factors
inline Observable random_observable(const Pieces& p, RandomStream& rng) {
    const auto& c = p.sys.coords;
    std::map<Monomial, Expression> m;
    auto n = 1 + pick(rng, 3);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& [mono, coef] = p.terms[pick(rng, p.terms.size())];
        Monomial at = rng.uniform() < 0.5 ? mono : Monomial{static_cast<int>(pick(rng, 3)), static_cast<int>(pick(rng, 2))};
        auto e = simplify_basic(mul(coef, entire_factor(c, rng)));
        auto it = m.find(at);
        m[at] = it == m.end() ? e : add(it->second, e);
    }
    return Observable(c, m);
}

inline std::vector<std::string> symbols_of(const SystemDef& s) {
    std::vector<std::string> v{s.coords[0], s.coords[1]};
    v.insert(v.end(), s.parameters.begin(), s.parameters.end());
    return v;
}

inline PhasePoint draw_phase_point(const SystemDef& s, RandomStream& rng) {
    auto syms = symbols_of(s);
    auto vals = draw_point(s.box, syms, rng);
    PhasePoint pt;
    for (std::size_t k = 0; k < syms.size(); ++k) pt.values[syms[k]] = vals[k];
    auto pv = draw_point(s.box, {"p1", "p2"}, rng);
    pt.p = {pv[0], pv[1]};
    return pt;
}

inline bool same_terms(std::vector<ProductTerm> a, std::vector<ProductTerm> b) {
    if (a.size() != b.size()) return false;
    for (const auto& t : a) {
        auto it = std::find_if(b.begin(), b.end(), [&](const ProductTerm& u) {
            return u.coef == t.coef && u.a == t.a && u.b == t.b;
        });
        if (it == b.end()) return false;
        b.erase(it);
    }
    return true;
}

inline void collect_subtrees(const Expression& e, std::vector<Expression>& out) {
    out.push_back(e);
    if (e.arity() >= 1) collect_subtrees(e.lhs(), out);
    if (e.arity() >= 2) collect_subtrees(e.rhs(), out);
}

inline Complex central_difference(const Expression& e, const std::string& var, EvalContext ctx) {
    Complex x0 = ctx.at(var);
    double h = 1e-6 * (1.0 + std::abs(x0));
    ctx[var] = x0 + h;
    Complex fp = evaluate(e, ctx);
    ctx[var] = x0 - h;
    Complex fm = evaluate(e, ctx);
    return (fp - fm) / (2.0 * h);
}

// F, G pairs whose brackets {F,G} and {G,F} fail to cancel term by term
inline int antisymmetry_failures(int pairs, std::uint64_t seed) {
    auto pieces = catalog_pieces();
    RandomStream rng(seed, 0, 0, 0);
    int bad = 0;
    for (int n = 0; n < pairs; ++n) {
        const auto& p = pieces[static_cast<std::size_t>(n) % pieces.size()];
        auto f = random_observable(p, rng), g = random_observable(p, rng);
        auto fg = poisson_bracket_terms(f, g), gf = poisson_bracket_terms(g, f);
        bool ok = fg.size() == gf.size() && poisson_bracket(f, f).empty();
        for (auto& [m, ts] : gf) {
            for (auto& t : ts) t.coef = -t.coef;
            ok = ok && fg.count(m) && same_terms(fg.at(m), ts);
        }
        bad += ok ? 0 : 1;
    }
    return bad;
}

struct PointStats {
    double worst = 0;     // largest relative residual seen
    int points = 0;       // points evaluated
    int short_runs = 0;   // cases that could not reach the requested point count
};

// Pointwise residual of observables that should sum to zero, relative to the largest
// summand; build(pieces, rng) makes one case per system in turn.
template <class Build>
PointStats vanishing_sum_residuals(int cases, int points, std::uint64_t seed, Build&& build) {
    auto pieces = catalog_pieces();
    RandomStream rng(seed, 0, 0, 0);
    PointStats st;
    for (int n = 0; n < cases; ++n) {
        const auto& p = pieces[static_cast<std::size_t>(n) % pieces.size()];
        std::vector<Observable> parts = build(p, rng);
        int done = 0;
        for (int attempt = 0; done < points && attempt < 10 * points; ++attempt) {
            auto pt = draw_phase_point(p.sys, rng);
            Complex total(0.0, 0.0);
            double scale = 1.0;
            try {
                for (const auto& o : parts) {
                    Complex v = evaluate_observable(o, pt);
                    total += v;
                    scale = std::max(scale, std::abs(v));
                }
            } catch (const NonFiniteError&) {
                continue;
            }
            if (scale > 1e8) continue;
            st.worst = std::max(st.worst, std::abs(total) / scale);
            ++done;
        }
        st.points += done;
        st.short_runs += done < points ? 1 : 0;
    }
    return st;
}

// {F,{G,K}} + {G,{K,F}} + {K,{F,G}}
inline PointStats jacobi_residuals(int cases, int points, std::uint64_t seed) {
    return vanishing_sum_residuals(cases, points, seed, [](const Pieces& p, RandomStream& rng) {
        auto f = random_observable(p, rng), g = random_observable(p, rng), k = random_observable(p, rng);
        return std::vector<Observable>{poisson_bracket(f, poisson_bracket(g, k)), poisson_bracket(g, poisson_bracket(k, f)),
                                       poisson_bracket(k, poisson_bracket(f, g))};
    });
}

// {F, G K} - G {F,K} - {F,G} K
inline PointStats leibniz_residuals(int cases, int points, std::uint64_t seed) {
    return vanishing_sum_residuals(cases, points, seed, [](const Pieces& p, RandomStream& rng) {
        auto f = random_observable(p, rng), g = random_observable(p, rng), k = random_observable(p, rng);
        auto m1 = Observable::constant(p.sys.coords, Expression::integer(-1));
        return std::vector<Observable>{poisson_bracket(f, multiply(g, k)), multiply(m1, multiply(g, poisson_bracket(f, k))),
                                       multiply(m1, multiply(poisson_bracket(f, g), k))};
    });
}

// random catalog subtrees that depend on a coordinate, paired with their system
inline std::vector<std::pair<Expression, SystemDef>> derivative_pool() {
    std::vector<std::pair<Expression, SystemDef>> pool;
    for (const auto& p : catalog_pieces()) {
        std::vector<Expression> all;
        for (const auto& [m, c] : p.terms) collect_subtrees(c, all);
        if (p.sys.potential.valid()) collect_subtrees(p.sys.potential, all);
        for (const auto& e : all) {
            auto fs = free_symbols(e);
            if (fs.count(p.sys.coords[0]) || fs.count(p.sys.coords[1])) pool.emplace_back(e, p.sys);
        }
    }
    return pool;
}

// exact derivative against a central difference, error relative to max(1, |exact|)
inline PointStats derivative_errors(int exprs, int points, std::uint64_t seed) {
    auto pool = derivative_pool();
    RandomStream rng(seed, 0, 0, 0);
    PointStats st;
    for (int n = 0; n < exprs; ++n) {
        const auto& [e, sys] = pool[pick(rng, pool.size())];
        auto fs = free_symbols(e);
        std::string var = fs.count(sys.coords[0]) ? sys.coords[0] : sys.coords[1];
        if (fs.count(sys.coords[0]) && fs.count(sys.coords[1]) && rng.uniform() < 0.5) var = sys.coords[1];
        auto d = differentiate(e, var);
        auto syms = symbols_of(sys);
        for (int k = 0; k < points; ++k) {
            auto vals = draw_point(sys.box, syms, rng);
            EvalContext ctx;
            for (std::size_t i = 0; i < syms.size(); ++i) ctx[syms[i]] = vals[i];
            Complex exact = evaluate(d, ctx);
            Complex fd = central_difference(e, var, ctx);
            st.worst = std::max(st.worst, std::abs(exact - fd) / std::max(1.0, std::abs(exact)));
            ++st.points;
        }
    }
    return st;
}

// every expression a bundled system declares
inline std::vector<std::pair<Expression, SystemDef>> catalog_expressions() {
    std::vector<std::pair<Expression, SystemDef>> out;
    for (const auto& name : builtin_names()) {
        auto s = builtin(name);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                if (s.g[i][j].valid()) out.emplace_back(s.g[i][j], s);
        if (s.lambda.valid()) out.emplace_back(s.lambda, s);
        if (s.potential.valid()) out.emplace_back(s.potential, s);
        for (const auto& o : s.symmetry_observables())
            for (const auto& [m, c] : o.terms()) out.emplace_back(c, s);
    }
    return out;
}

}  // namespace quadralg::fixtures
