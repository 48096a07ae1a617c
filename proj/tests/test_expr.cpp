#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "quadralg/expr.hpp"
#include "quadralg/sampling.hpp"

using namespace quadralg;

namespace {

Complex at(const std::string& text, EvalContext ctx, std::set<std::string> params = {}) {
    return evaluate(parse(text, params), ctx);
}

// central difference in one variable, step scaled to the point
Complex central_difference(const Expression& e, const std::string& var, EvalContext ctx) {
    Complex x0 = ctx.at(var);
    double h = 1e-6 * (1.0 + std::abs(x0));
    ctx[var] = x0 + h;
    Complex fp = evaluate(e, ctx);
    ctx[var] = x0 - h;
    Complex fm = evaluate(e, ctx);
    return (fp - fm) / (2.0 * h);
}

DomainBox unit_box() {
    DomainBox b;
    b.fallback = {{0.2, 1.2}, {-0.3, 0.3}};
    return b;
}

}  // namespace

TEST(Parse, DivisionOfPowerTree) {
    auto e = parse("a3/cos(th)^2", {"a3"});
    ASSERT_EQ(e.kind(), NodeKind::Div);
    EXPECT_EQ(e.lhs().kind(), NodeKind::Parameter);
    EXPECT_EQ(e.lhs().name(), "a3");
    ASSERT_EQ(e.rhs().kind(), NodeKind::Pow);
    EXPECT_EQ(e.rhs().lhs().kind(), NodeKind::Call);
    EXPECT_EQ(e.rhs().lhs().function(), Function::Cos);
    EXPECT_TRUE(e.rhs().rhs().is_integer(2));
}

TEST(Parse, SingleVariable) {
    auto e = parse("x");
    EXPECT_EQ(e.kind(), NodeKind::Variable);
    EXPECT_EQ(e.name(), "x");
}

TEST(Parse, E14Potential) {
    auto e = parse("exp(-(y - i*x))");
    ASSERT_EQ(e.kind(), NodeKind::Call);
    EXPECT_EQ(e.function(), Function::Exp);
    const auto& n = e.lhs();
    ASSERT_EQ(n.kind(), NodeKind::Neg);
    const auto& s = n.lhs();
    ASSERT_EQ(s.kind(), NodeKind::Sub);
    EXPECT_EQ(s.lhs().name(), "y");
    ASSERT_EQ(s.rhs().kind(), NodeKind::Mul);
    EXPECT_EQ(s.rhs().lhs().number_value(), Complex(0, 1));
    EXPECT_EQ(s.rhs().rhs().name(), "x");
}

TEST(Parse, PowerIsRightAssociative) {
    auto e = parse("x^2^3");
    ASSERT_EQ(e.kind(), NodeKind::Pow);
    EXPECT_EQ(e.lhs().name(), "x");
    EXPECT_EQ(e.rhs().kind(), NodeKind::Pow);
}

TEST(Parse, UnaryMinusBindsTighterThanPower) {
    // factor := unary ('^' factor)?
    auto e = parse("-x^2");
    ASSERT_EQ(e.kind(), NodeKind::Pow);
    EXPECT_EQ(e.lhs().kind(), NodeKind::Neg);
}

TEST(Parse, IntegerExponentStoredExactly) {
    auto e = parse("x^3");
    EXPECT_EQ(e.rhs().kind(), NodeKind::Integer);
    EXPECT_EQ(e.rhs().int_value(), 3);
    auto d = parse("2.5");
    EXPECT_EQ(d.kind(), NodeKind::Number);
}

TEST(Parse, SyntaxErrorCarriesOffset) {
    try {
        parse("x + * y");
        FAIL() << "expected ParseError";
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 4u);
    }
    try {
        parse("(x + y");
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 6u);
    }
}

TEST(Parse, UnknownFunctionRejected) {
    try {
        parse("1 + sinh(x)");
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_EQ(err.offset(), 4u);
        EXPECT_NE(std::string(err.what()).find("sinh"), std::string::npos);
    }
}

TEST(Parse, TrailingInputRejected) { EXPECT_THROW(parse("x y"), ParseError); }

TEST(Print, RoundTrip) {
    std::set<std::string> params{"a3", "alpha"};
    for (const char* text : {"a3/cos(th)^2", "exp(-(y - i*x))", "x - (y - z)", "x/(y*z)", "(x^2)^3", "-(x^2)",
                             "(-x)^2", "x^-2", "2^3^2", "alpha*(y - i*x)", "sqrt(x)*ln(y)/tan(x + 1)",
                             "1.5e-7*x + 0.25", "-(-x)", "a3*(1 + sin(th)^2*sin(ph)^2)/(2*cos(th)^2)"}) {
        auto e = parse(text, params);
        auto again = parse(to_string(e), params);
        EXPECT_EQ(e, again) << text << " printed as " << to_string(e);
    }
}

TEST(Print, NumbersRoundTripShortest) {
    auto e = Expression::number(Complex(0.1, 0));
    EXPECT_EQ(to_string(e), "0.1");
    EXPECT_EQ(parse(to_string(e)), e);
    EXPECT_EQ(to_string(Expression::number(Complex(2.0, 0))), "2.0");
    EXPECT_EQ(to_string(Expression::imaginary_unit()), "i");
}

TEST(Differentiate, PowerRule) {
    auto d = simplify_basic(differentiate(parse("x^2"), "x"));
    EXPECT_EQ(d, simplify_basic(parse("2*x")));
    EXPECT_EQ(to_string(d), "2*x");
}

TEST(Differentiate, MatchesFiniteDifferences) {
    struct Case {
        const char* text;
        const char* var;
    };
    for (Case c : {Case{"1/cos(th)^2", "th"}, Case{"exp(-(y - i*x))", "y"}, Case{"exp(-(y - i*x))", "x"},
                   Case{"sqrt(x^2 + y)*ln(x*y)", "x"}, Case{"x^y", "y"}, Case{"x^(1/3)", "x"},
                   Case{"tan(x)/(1 + x^-3)", "x"}}) {
        auto e = parse(c.text);
        auto d = differentiate(e, c.var);
        RandomStream rng(7, 0, 0, 0);
        for (int k = 0; k < 10; ++k) {
            EvalContext ctx{{"x", {rng.uniform(0.3, 1.1), rng.uniform(-0.2, 0.2)}},
                            {"y", {rng.uniform(0.3, 1.1), rng.uniform(-0.2, 0.2)}},
                            {"th", {rng.uniform(0.3, 1.1), rng.uniform(-0.2, 0.2)}}};
            Complex exact = evaluate(d, ctx);
            Complex fd = central_difference(e, c.var, ctx);
            EXPECT_LT(std::abs(exact - fd) / std::max(1.0, std::abs(exact)), 1e-6) << c.text;
        }
    }
}

TEST(Differentiate, SecantSquaredClosedForm) {
    auto d = differentiate(parse("1/cos(th)^2"), "th");
    auto expected = parse("2*sin(th)/cos(th)^3");
    EXPECT_TRUE(equivalent(d, expected, unit_box()));
}

TEST(Differentiate, ExponentialChainRule) {
    auto d = differentiate(parse("exp(-(y - i*x))"), "y");
    EXPECT_TRUE(equivalent(d, parse("-exp(-(y - i*x))"), unit_box()));
}

TEST(Differentiate, ParametersAreConstants) {
    auto d = simplify_basic(differentiate(parse("a*x", {"a"}), "a"));
    EXPECT_TRUE(d.is_zero());
}

TEST(Differentiate, Linearity) {
    auto e1 = parse("sin(x*y)");
    auto e2 = parse("exp(x)/y");
    auto alpha = parse("3");
    auto beta = parse("2 - i");
    auto lhs = simplify_basic(differentiate(alpha * e1 + beta * e2, "x"));
    auto rhs = simplify_basic(alpha * differentiate(e1, "x") + beta * differentiate(e2, "x"));
    EXPECT_TRUE(equivalent(lhs, rhs, unit_box()));
}

TEST(Evaluate, Basics) {
    EXPECT_EQ(at("exp(0)", {}), Complex(1, 0));
    Complex l = at("ln(-1)", {});
    EXPECT_NEAR(l.real(), 0.0, 1e-15);
    EXPECT_NEAR(l.imag(), std::numbers::pi, 1e-15);
    EXPECT_EQ(at("a3/cos(th)^2", {{"a3", 2.0}, {"th", 0.0}}, {"a3"}), Complex(2, 0));
}

TEST(Evaluate, PrincipalBranches) {
    Complex s = at("sqrt(-4)", {});
    EXPECT_NEAR(s.imag(), 2.0, 1e-15);
    Complex p = at("x^0.5", {{"x", Complex(-4, 0)}});
    EXPECT_NEAR(p.real(), 0.0, 1e-15);
    EXPECT_NEAR(p.imag(), 2.0, 1e-15);
}

TEST(Evaluate, IntegerPowersByMultiplication) {
    EXPECT_EQ(at("x^3", {{"x", Complex(-2, 0)}}), Complex(-8, 0));
    EXPECT_EQ(at("x^-2", {{"x", Complex(2, 0)}}), Complex(0.25, 0));
}

TEST(Evaluate, Errors) {
    EXPECT_THROW(at("x + y", {{"x", 1.0}}), UnboundSymbolError);
    EXPECT_THROW(at("1/x", {{"x", 0.0}}), NonFiniteError);
}

TEST(Evaluate, Deterministic) {
    auto e = parse("sin(x)*exp(y)/(1 + x^2)");
    EvalContext ctx{{"x", {0.3, 0.1}}, {"y", {-0.2, 0.4}}};
    EXPECT_EQ(evaluate(e, ctx), evaluate(e, ctx));
}

TEST(Simplify, Identities) {
    EXPECT_EQ(to_string(simplify_basic(parse("0*x + 1*y"))), "y");
    EXPECT_EQ(to_string(simplify_basic(parse("x^1"))), "x");
    EXPECT_EQ(to_string(simplify_basic(parse("(2+3)*x"))), "5*x");
    EXPECT_EQ(to_string(simplify_basic(parse("(x^2)^3"))), "x^6");
    EXPECT_EQ(to_string(simplify_basic(parse("x - x"))), "0");
    EXPECT_EQ(to_string(simplify_basic(parse("x + 0 - 0*y"))), "x");
}

TEST(Simplify, PreservesValue) {
    auto box = unit_box();
    for (const char* text : {"0*x + 1*y", "(2+3)*x", "(x^2)^3/x^1", "-(-(x*y)) + 0", "exp(0)*sin(x)^1",
                             "2*(3*(x/1))", "(x - -y)*(1 - 0)"}) {
        auto e = parse(text);
        EXPECT_TRUE(equivalent(e, simplify_basic(e), box)) << text;
    }
}

TEST(Equivalent, Examples) {
    auto box = unit_box();
    EXPECT_TRUE(equivalent(parse("sin(x)^2 + cos(x)^2"), parse("1"), box));
    EXPECT_FALSE(equivalent(parse("x"), parse("x + 1e-3"), box, 64, 1e-8));
    DomainBox safe;
    safe.rects["x"] = {{-2.0, 2.0}, {-3.0, 3.0}};
    auto r = equivalent(parse("ln(exp(x))"), parse("x"), safe);
    EXPECT_TRUE(r);
    EXPECT_EQ(r.accepted, 64u);
}

TEST(Equivalent, ReportsRejections) {
    DomainBox box;
    box.rects["x"] = {{-1.0, 1.0}, {0.0, 0.0}};
    box.cap = 1e3;
    auto r = equivalent(parse("1/x^2 + 0*x"), parse("1/x^2"), box, 256);
    EXPECT_TRUE(r);
    EXPECT_GT(r.rejected_draws, 0u);
}

TEST(Equivalent, SingularDomainFails) {
    DomainBox box;
    box.rects["x"] = {{0.0, 0.0}, {0.0, 0.0}};
    EXPECT_THROW(equivalent(parse("1/x"), parse("1/x"), box), DomainError);
}

TEST(Equivalent, DeterministicUnderFixedSeed) {
    auto box = unit_box();
    auto a = equivalent(parse("sin(2*x)"), parse("2*sin(x)*cos(x)"), box);
    auto b = equivalent(parse("sin(2*x)"), parse("2*sin(x)*cos(x)"), box);
    EXPECT_EQ(a.max_residual, b.max_residual);
    EXPECT_EQ(a.mean_residual, b.mean_residual);
    auto c = equivalent(parse("sin(2*x)"), parse("2*sin(x)*cos(x)"), box, 64, 1e-8, 4);
    EXPECT_EQ(a.max_residual, c.max_residual);
}
