#include <gtest/gtest.h>

#include <functional>

#include "support.hpp"

using namespace quadralg;
using namespace quadralg::fixtures;

namespace {

void expect_equivalent(const Observable& a, const Observable& b, const DomainBox& box, const std::string& what) {
    std::set<Monomial> ms;
    for (const auto& [m, c] : a.terms()) ms.insert(m);
    for (const auto& [m, c] : b.terms()) ms.insert(m);
    for (auto m : ms)
        EXPECT_TRUE(equivalent(a.coefficient(m), b.coefficient(m), box)) << what << " monomial " << to_string(m);
}

}  // namespace

TEST(BracketProperties, AntisymmetryCancelsTermByTerm) { EXPECT_EQ(antisymmetry_failures(50, 11), 0); }

TEST(BracketProperties, JacobiIdentity) {
    auto st = jacobi_residuals(2 * static_cast<int>(builtin_names().size()), 100, 12);
    EXPECT_EQ(st.short_runs, 0);
    EXPECT_LT(st.worst, 1e-9);
    RecordProperty("max_relative_jacobi", std::to_string(st.worst));
}

TEST(BracketProperties, LeibnizAtPoints) {
    auto st = leibniz_residuals(2 * static_cast<int>(builtin_names().size()), 100, 17);
    EXPECT_EQ(st.short_runs, 0);
    EXPECT_LT(st.worst, 1e-9);
}

TEST(BracketProperties, Leibniz) {
    auto pieces = catalog_pieces();
    RandomStream rng(13, 0, 0, 0);
    for (const auto& p : pieces) {
        for (int n = 0; n < 3; ++n) {
            auto f = random_observable(p, rng), g = random_observable(p, rng), k = random_observable(p, rng);
            auto lhs = poisson_bracket(f, multiply(g, k));
            auto rhs = multiply(g, poisson_bracket(f, k)) + multiply(poisson_bracket(f, g), k);
            expect_equivalent(lhs, rhs, p.sys.box, p.sys.name);
        }
    }
}

TEST(BracketProperties, DegreeBound) {
    auto pieces = catalog_pieces();
    RandomStream rng(14, 0, 0, 0);
    for (const auto& p : pieces) {
        auto syms = p.sys.symmetry_observables();
        for (int n = 0; n < 10; ++n) syms.push_back(random_observable(p, rng));
        for (const auto& f : syms)
            for (const auto& g : syms) {
                auto b = poisson_bracket(f, g);
                if (!b.empty()) EXPECT_LE(b.degree(), f.degree() + g.degree() - 1) << p.sys.name;
            }
    }
}

TEST(ExpressionProperties, DerivativeMatchesFiniteDifferences) {
    ASSERT_GT(derivative_pool().size(), 100u);
    auto st = derivative_errors(100, 10, 15);
    EXPECT_EQ(st.points, 1000);
    EXPECT_LT(st.worst, 1e-5);
}

TEST(ExpressionProperties, CatalogRoundTrip) {
    for (const auto& [e, s] : catalog_expressions()) EXPECT_EQ(parse(to_string(e), s.parameter_set()), e) << to_string(e);
}

TEST(ExpressionProperties, RandomTreesRoundTrip) {
    RandomStream rng(16, 0, 0, 0);
    std::set<std::string> params{"a", "b2"};
    std::function<Expression(int)> grow = [&](int depth) -> Expression {
        if (depth == 0 || rng.uniform() < 0.2) {
            switch (pick(rng, 5)) {
                case 0: return Expression::variable(rng.uniform() < 0.5 ? "x" : "y");
                case 1: return Expression::parameter(rng.uniform() < 0.5 ? "a" : "b2");
                case 2: return Expression::integer(static_cast<std::int64_t>(pick(rng, 7)));
                case 3: return Expression::number(Complex(std::ldexp(static_cast<double>(pick(rng, 1000)), -3), 0));
                default: return Expression::imaginary_unit();
            }
        }
        switch (pick(rng, 7)) {
            case 0: return Expression::make_neg(grow(depth - 1));
            case 1: return Expression::make_binary(NodeKind::Add, grow(depth - 1), grow(depth - 1));
            case 2: return Expression::make_binary(NodeKind::Sub, grow(depth - 1), grow(depth - 1));
            case 3: return Expression::make_binary(NodeKind::Mul, grow(depth - 1), grow(depth - 1));
            case 4: return Expression::make_binary(NodeKind::Div, grow(depth - 1), grow(depth - 1));
            case 5: return Expression::make_binary(NodeKind::Pow, grow(depth - 1), grow(depth - 1));
            default: {
                static const Function fs[] = {Function::Sin, Function::Cos, Function::Exp, Function::Ln,
                                              Function::Sqrt, Function::Tan};
                return Expression::make_call(fs[pick(rng, 6)], grow(depth - 1));
            }
        }
    };
    for (int n = 0; n < 500; ++n) {
        auto e = grow(5);
        auto text = to_string(e);
        EXPECT_EQ(parse(text, params), e) << text;
    }
}

TEST(StackelProperties, B1InvariantForFamilyInstances) {
    int checked = 0;
    for (const auto& name : builtin_names()) {
        auto s = builtin(name);
        if (!s.conformal() || s.parameters.size() != 1) continue;
        auto p = Expression::parameter(s.parameters[0]);
        auto instance = substitute(s.potential, {{s.parameters[0], Expression::integer(1)}});
        auto before = one_param_coeffs(s.coords, s.potential, s.lambda, s.box);
        for (auto shift : {0, 2}) {
            auto u = simplify_basic(add(instance, Expression::integer(shift)));
            // the transformed family is c/U up to an additive constant
            auto after = one_param_coeffs(s.coords, div(p, u), mul(s.lambda, u), s.box);
            EXPECT_EQ(after.swapped, before.swapped) << name;
            EXPECT_TRUE(equivalent(after.b1, before.b1, s.box)) << name << " U = " << to_string(u);
            ++checked;
        }
    }
    EXPECT_GE(checked, 6);
}

TEST(StackelProperties, A12PartsIdenticalAsTrees) {
    for (auto [name, u] : {std::pair{"sphere_1param", "1/cos(th)^2"}, std::pair{"E4", "y - i*x"},
                           std::pair{"E14", "exp(-(y - i*x))"}}) {
        auto s = builtin(name);
        auto r = transform(s, parse(u));
        for (const auto& sym : s.symmetries) {
            if (sym.name == "H") continue;
            auto out = r.system.symmetry(sym.name);
            EXPECT_EQ(simplify_basic(out.coefficient({1, 1})), simplify_basic(sym.obs.coefficient({1, 1})))
                << name << " " << sym.name;
        }
    }
}
