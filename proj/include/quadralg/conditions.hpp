#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadralg/catalog.hpp"
#include "quadralg/expr.hpp"
#include "quadralg/phase.hpp"
#include "quadralg/sampling.hpp"

namespace quadralg {

class ConditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Expression d(const Expression& e, const std::string& v) { return simplify_basic(differentiate(e, v)); }
inline Expression k(std::int64_t n) { return Expression::integer(n); }
inline Expression prod(std::initializer_list<Expression> fs) {
    Expression r = k(1);
    for (const auto& f : fs) r = mul(r, f);
    return r;
}
inline Expression terms(std::initializer_list<Expression> ts) { return sum(std::vector<Expression>(ts)); }

inline Complex center(const Rect& r) { return {0.5 * (r.re.lo + r.re.hi), 0.5 * (r.im.lo + r.im.hi)}; }

// Concatenates component lists; the merged verdict needs every part to pass.
inline ConditionReport merge(const std::string& name, const std::vector<ConditionReport>& parts) {
    ConditionReport r;
    r.name = name;
    r.verdict = !parts.empty();
    for (const auto& p : parts) {
        r.components.insert(r.components.end(), p.components.begin(), p.components.end());
        r.max_residual = std::max(r.max_residual, p.max_residual);
        r.mean_residual = std::max(r.mean_residual, p.mean_residual);
        r.requested += p.requested;
        r.accepted += p.accepted;
        r.rejected_draws += p.rejected_draws;
        r.tol = std::max(r.tol, p.tol);
        r.verdict = r.verdict && p.verdict;
        if (!p.note.empty()) r.note += (r.note.empty() ? "" : "; ") + p.note;
        if (r.residuals.size() < p.residuals.size()) r.residuals.resize(p.residuals.size(), 0.0);
        for (std::size_t i = 0; i < p.residuals.size(); ++i) r.residuals[i] = std::max(r.residuals[i], p.residuals[i]);
    }
    r.acceptance_rate = r.requested ? static_cast<double>(r.accepted) / static_cast<double>(r.requested) : 0.0;
    return r;
}

}  // namespace detail

// True when e vanishes on the box (structurally or at every sample).
inline bool identically_zero(const Expression& e, const DomainBox& box, const CheckOptions& opt = {}) {
    if (e.is_zero()) return true;
    auto rep = check_identities("zero", {{"value", e}}, box, opt);
    return rep.verdict;
}

inline bool identically_equal(const Expression& a, const Expression& b, const DomainBox& box,
                              const CheckOptions& opt = {}) {
    if (a == b) return true;
    auto rep = check_identities("equal", {{"difference", Expression::make_binary(NodeKind::Sub, a, b)}}, box, opt);
    return rep.verdict;
}

// ---------------------------------------------------------------- Killing

inline ConditionReport killing_residuals(const Coords& c, const Expression& lambda, const Tensor2& a,
                                         const DomainBox& box, const CheckOptions& opt = {}) {
    using detail::d;
    using detail::k;
    using detail::terms;
    const auto &x = c[0], &y = c[1];
    auto l1 = d(lambda, x), l2 = d(lambda, y);
    const auto &a11 = a[0][0], &a12 = a[0][1], &a22 = a[1][1];
    std::vector<Identity> ids{
        {"killing_11", terms({mul(lambda, d(a11, x)), mul(l1, a11), mul(l2, a12)})},
        {"killing_22", terms({mul(lambda, d(a22, y)), mul(l1, a12), mul(l2, a22)})},
        {"killing_12", terms({mul(lambda, mul(k(2), d(a12, x))), mul(lambda, d(a11, y)), mul(l1, a12), mul(l2, a22)})},
        {"killing_21", terms({mul(lambda, mul(k(2), d(a12, y))), mul(lambda, d(a22, x)), mul(l1, a11), mul(l2, a12)})},
    };
    return check_identities("killing", ids, box, opt);
}

// Any kinetic tensor: the cubic part of {H0, L0} must vanish.
inline ConditionReport killing_residuals_general(const Coords& c, const Tensor2& g, const Tensor2& a,
                                                 const DomainBox& box, const CheckOptions& opt = {}) {
    auto h0 = Observable::quadratic(c, g, detail::k(0));
    auto l0 = Observable::quadratic(c, a, detail::k(0));
    auto br = poisson_bracket_terms(h0, l0);
    std::vector<Identity> ids;
    for (int d1 = 3; d1 >= 0; --d1) {
        Monomial m{d1, 3 - d1};
        std::vector<Expression> parts;
        if (auto it = br.find(m); it != br.end())
            for (const auto& t : it->second) parts.push_back(mul(Expression::integer(t.coef), mul(t.a, t.b)));
        ids.push_back({"coefficient(" + to_string(m) + ")", sum(parts)});
    }
    return check_identities("killing", ids, box, opt);
}

inline ConditionReport killing_residuals(const SystemDef& sys, const Tensor2& a, const DomainBox& box,
                                         const CheckOptions& opt = {}) {
    if (sys.conformal()) return killing_residuals(sys.coords, sys.lambda, a, box, opt);
    return killing_residuals_general(sys.coords, sys.g, a, box, opt);
}

// ------------------------------------------------------- Bertrand-Darboux

inline ConditionReport bertrand_darboux_residual(const Coords& c, const Expression& lambda, const Tensor2& a,
                                                 const Expression& v, const DomainBox& box,
                                                 const CheckOptions& opt = {}) {
    using detail::d;
    using detail::prod;
    const auto &x = c[0], &y = c[1];
    auto l1 = div(d(lambda, x), lambda), l2 = div(d(lambda, y), lambda);
    auto v1 = d(v, x), v2 = d(v, y);
    auto v11 = d(v1, x), v12 = d(v1, y), v22 = d(v2, y);
    const auto &a11 = a[0][0], &a12 = a[0][1], &a22 = a[1][1];
    auto e = sum({
        mul(v22, a12), neg(mul(v11, a12)), mul(v12, a11), neg(mul(v12, a22)),
        neg(prod({l1, a12, v1})), neg(mul(d(a12, x), v1)), prod({l2, a11, v1}), mul(d(a11, y), v1),
        neg(prod({l1, a22, v2})), neg(mul(d(a22, x), v2)), prod({l2, a12, v2}), mul(d(a12, y), v2),
    });
    return check_identities("bertrand_darboux", {{"bertrand_darboux", e}}, box, opt);
}

inline Tensor2 inverse(const Tensor2& g) {
    auto det = sub(mul(g[0][0], g[1][1]), mul(g[0][1], g[1][0]));
    return {{{div(g[1][1], det), neg(div(g[0][1], det))}, {neg(div(g[1][0], det)), div(g[0][0], det)}}};
}

// curl of G a grad V, G the lowered metric
inline ConditionReport bertrand_darboux_residual_general(const Coords& c, const Tensor2& g, const Tensor2& a,
                                                         const Expression& v, const DomainBox& box,
                                                         const CheckOptions& opt = {}) {
    using detail::d;
    Tensor2 lo = inverse(g);
    std::array<Expression, 2> dv{d(v, c[0]), d(v, c[1])};
    std::vector<Expression> parts;
    // d_1 W_2 - d_2 W_1 with W_j = G_jk a^kl V_l
    for (int s = 0; s < 2; ++s) {
        int j = s == 0 ? 1 : 0;
        const auto& var = c[s];
        for (int kk = 0; kk < 2; ++kk)
            for (int l = 0; l < 2; ++l) {
                const auto &G = lo[j][kk], &A = a[kk][l], &V = dv[l];
                if (G.is_zero() || A.is_zero() || V.is_zero()) continue;
                std::vector<Expression> ts{detail::prod({d(G, var), A, V}), detail::prod({G, d(A, var), V}),
                                           detail::prod({G, A, d(V, var)})};
                for (auto& t : ts) parts.push_back(s == 0 ? t : neg(t));
            }
    }
    return check_identities("bertrand_darboux", {{"bertrand_darboux", sum(parts)}}, box, opt);
}

inline ConditionReport bertrand_darboux_residual(const SystemDef& sys, const Tensor2& a, const DomainBox& box,
                                                 const CheckOptions& opt = {}) {
    if (sys.conformal()) return bertrand_darboux_residual(sys.coords, sys.lambda, a, sys.potential, box, opt);
    return bertrand_darboux_residual_general(sys.coords, sys.g, a, sys.potential, box, opt);
}

// ---------------------------------------------------- special coordinates

inline ConditionReport special_coordinate_residuals(const Coords& c, const Expression& lambda, const Expression& a12,
                                                    const DomainBox& box, const CheckOptions& opt = {}) {
    using detail::d;
    using detail::k;
    using detail::prod;
    const auto &x = c[0], &y = c[1];
    auto l1 = d(lambda, x), l2 = d(lambda, y);
    auto a1 = d(a12, x), a2 = d(a12, y);
    auto a11 = d(a1, x), a22 = d(a2, y);
    std::vector<Identity> ids{
        {"lambda_12", d(l1, y)},
        {"harmonic_a12", add(a11, a22)},
        {"metric_equation", sum({mul(a12, d(l1, x)), neg(mul(a12, d(l2, y))), prod({k(3), l1, a1}),
                                 neg(prod({k(3), l2, a2})), mul(a11, lambda), neg(mul(a22, lambda))})},
    };
    return check_identities("special_coordinates", ids, box, opt);
}

// ------------------------------------------------------------- invariants

// Derivatives of A = ln a12 built from a12 and its derivatives.
struct LogDerivatives {
    Expression f1, f2, f11, f12, f22, f111, f112, f122, f222;
};

inline LogDerivatives log_derivatives(const Coords& c, const Expression& f) {
    using detail::d;
    LogDerivatives r;
    r.f1 = simplify_basic(div(d(f, c[0]), f));
    r.f2 = simplify_basic(div(d(f, c[1]), f));
    r.f11 = d(r.f1, c[0]);
    r.f12 = d(r.f1, c[1]);
    r.f22 = d(r.f2, c[1]);
    r.f111 = d(r.f11, c[0]);
    r.f112 = d(r.f12, c[0]);
    r.f122 = d(r.f12, c[1]);
    r.f222 = d(r.f22, c[1]);
    return r;
}

struct InvariantSet {
    std::map<std::string, Expression> values;
    bool has(const std::string& n) const { return values.count(n) > 0; }
    const Expression& at(const std::string& n) const {
        auto it = values.find(n);
        if (it == values.end()) throw ConditionError("invariant '" + n + "' not available");
        return it->second;
    }
};

namespace detail {

inline Expression k1_of(const LogDerivatives& r) {
    return terms({r.f222, neg(prod({k(2), r.f11, r.f2})), neg(mul(r.f22, r.f2)), mul(pow(r.f1, 2), r.f2)});
}
inline Expression k2_of(const LogDerivatives& r) {
    return terms({neg(r.f111), prod({k(2), r.f22, r.f1}), mul(r.f11, r.f1), neg(mul(pow(r.f2, 2), r.f1))});
}
inline Expression l1_of(const LogDerivatives& a) { return sub(a.f112, mul(a.f12, a.f1)); }
inline Expression l2_of(const LogDerivatives& a) { return sub(a.f122, mul(a.f12, a.f2)); }

inline Expression d_of(const Coords& c, const Expression& b) {
    auto b1 = d(b, c[0]), b2 = d(b, c[1]);
    return simplify_basic(div(mul(k(-2), add(b2, mul(b, b1))), add(pow(b, 2), k(1))));
}

}  // namespace detail

// Any of lambda, a12, b may be empty handles; only the invariants they
// determine are produced.
inline InvariantSet compute_invariants(const Coords& c, const Expression& lambda, const Expression& a12 = {},
                                       const Expression& b = {}) {
    using namespace detail;
    InvariantSet s;
    if (lambda.valid()) {
        auto r = log_derivatives(c, lambda);
        s.values["K1"] = k1_of(r);
        s.values["K2"] = k2_of(r);
        s.values["gaussian_curvature"] = simplify_basic(div(neg(add(r.f11, r.f22)), mul(k(2), lambda)));
    }
    if (a12.valid()) {
        auto a = log_derivatives(c, a12);
        s.values["L1"] = l1_of(a);
        s.values["L2"] = l2_of(a);
        s.values["Delta"] = terms({a.f11, a.f22, pow(a.f1, 2), pow(a.f2, 2)});
        auto cc = terms({a.f11, pow(a.f1, 2), neg(a.f22), neg(pow(a.f2, 2))});
        s.values["C"] = cc;
        if (lambda.valid()) {
            auto l1 = d(lambda, c[0]), l2 = d(lambda, c[1]);
            s.values["Lambda"] = terms({d(l2, c[1]), neg(d(l1, c[0])), neg(prod({k(3), l1, a.f1})),
                                        prod({k(3), l2, a.f2}), neg(mul(cc, lambda))});
        }
    }
    if (b.valid()) s.values["D"] = d_of(c, b);
    return s;
}

// ---------------------------------------------------------------- curvature

struct CurvatureResult {
    Expression k1, k2;  // empty for non-conformal charts
    Expression gaussian;
    bool special_chart = false;  // lambda_12 == 0, where K1, K2 are the curvature gradient
    bool constant = false;
    ConditionReport report;     // gradient of the curvature
    ConditionReport k_report;   // standalone zero tests of K1, K2
};

inline CurvatureResult curvature_invariants(const Coords& c, const Expression& lambda, const DomainBox& box,
                                            const CheckOptions& opt = {}) {
    using namespace detail;
    CurvatureResult res;
    const auto &x = c[0], &y = c[1];
    auto r = log_derivatives(c, lambda);
    res.k1 = k1_of(r);
    res.k2 = k2_of(r);
    res.gaussian = simplify_basic(div(neg(add(r.f11, r.f22)), mul(k(2), lambda)));
    auto l1 = d(lambda, x), l2 = d(lambda, y);
    auto lam2 = pow(lambda, 2);
    auto r221 = d(r.f22, x), r112 = d(r.f11, y);
    // gradient of (rho_11 + rho_22)/lambda
    std::vector<Identity> ids{
        {"curvature_gradient_1", terms({div(r.f111, lambda), div(r221, lambda), neg(div(mul(r.f11, l1), lam2)),
                                        neg(div(mul(r.f22, l1), lam2))})},
        {"curvature_gradient_2", terms({div(r112, lambda), div(r.f222, lambda), neg(div(mul(r.f11, l2), lam2)),
                                        neg(div(mul(r.f22, l2), lam2))})},
    };
    res.report = check_identities("curvature", ids, box, opt);
    res.constant = res.report.verdict;
    res.k_report = check_identities("curvature_K", {{"K1", res.k1}, {"K2", res.k2}}, box, opt);
    res.special_chart = identically_zero(d(l1, y), box, opt);
    return res;
}

// Orthogonal charts of a general metric.
inline CurvatureResult curvature_invariants(const SystemDef& sys, const CheckOptions& opt = {}) {
    if (sys.conformal()) return curvature_invariants(sys.coords, sys.lambda, sys.box, opt);
    using namespace detail;
    if (!identically_zero(sys.g[0][1], sys.box, opt))
        throw ConditionError("curvature of non-orthogonal charts is not supported");
    const auto &x = sys.coords[0], &y = sys.coords[1];
    auto e = simplify_basic(div(k(1), sys.g[0][0]));
    auto g = simplify_basic(div(k(1), sys.g[1][1]));
    auto s = sqrt(mul(e, g));
    CurvatureResult res;
    res.gaussian = simplify_basic(
        div(neg(add(d(div(d(g, x), s), x), d(div(d(e, y), s), y))), mul(k(2), s)));
    std::vector<Identity> ids{{"curvature_gradient_1", d(res.gaussian, x)},
                              {"curvature_gradient_2", d(res.gaussian, y)}};
    res.report = check_identities("curvature", ids, sys.box, opt);
    res.constant = res.report.verdict;
    return res;
}

// ------------------------------------------------------------ obstruction

inline ConditionReport symmetry_obstruction(const Coords& c, const Expression& a12, const Expression& lambda,
                                            const DomainBox& box, const CheckOptions& opt = {}) {
    using namespace detail;
    const auto &x = c[0], &y = c[1];
    auto a = log_derivatives(c, a12);
    auto L1 = l1_of(a), L2 = l2_of(a);
    auto l1 = d(lambda, x), l2 = d(lambda, y);
    auto r = log_derivatives(c, lambda);
    auto K1 = k1_of(r), K2 = k2_of(r);
    std::vector<Identity> ids{
        {"obstruction", terms({prod({k(5), L1, l1}), neg(prod({k(5), L2, l2})), mul(d(L1, x), lambda),
                               neg(mul(d(L2, y), lambda)), prod({k(3), a.f1, L1, lambda}),
                               neg(prod({k(3), a.f2, L2, lambda}))})},
        {"dual_obstruction", terms({prod({k(5), K1, d(a12, x)}), neg(prod({k(5), K2, d(a12, y)})), mul(d(K1, x), a12),
                                    neg(mul(d(K2, y), a12)), prod({k(3), r.f1, K1, a12}),
                                    neg(prod({k(3), r.f2, K2, a12}))})},
        {"L1", L1},
        {"L2", L2},
    };
    return check_identities("symmetry_obstruction", ids, box, opt);
}

// ------------------------------------------------ nondegenerate potentials

struct CanonicalCoefficients {
    Expression a12, b12, a22, b22;
};

inline CanonicalCoefficients nondegenerate_coefficients(const Coords& c, const Expression& lambda,
                                                        const Expression& a12) {
    using namespace detail;
    auto a = log_derivatives(c, a12);
    auto l1 = div(d(lambda, c[0]), lambda), l2 = div(d(lambda, c[1]), lambda);
    CanonicalCoefficients r;
    r.a12 = simplify_basic(neg(l2));
    r.b12 = simplify_basic(neg(l1));
    r.a22 = simplify_basic(add(mul(k(2), l1), mul(k(3), a.f1)));
    r.b22 = simplify_basic(sub(mul(k(-2), l2), mul(k(3), a.f2)));
    return r;
}

inline ConditionReport nondegenerate_integrability(const Coords& c, const Expression& lambda, const Expression& a12,
                                                   const DomainBox& box, const CheckOptions& opt = {}) {
    using namespace detail;
    const auto &x = c[0], &y = c[1];
    auto cc = nondegenerate_coefficients(c, lambda, a12);
    const auto &A12 = cc.a12, &B12 = cc.b12, &A22 = cc.a22, &B22 = cc.b22;
    auto A12_1 = d(A12, x), A12_2 = d(A12, y), B12_1 = d(B12, x), B12_2 = d(B12, y);
    auto A22_1 = d(A22, x), A22_2 = d(A22, y), B22_1 = d(B22, x), B22_2 = d(B22, y);
    auto t1 = terms({mul(k(2), B12_2), neg(B22_1), neg(mul(k(2), A12_1)), neg(A22_2)});
    auto t2 = terms({prod({k(2), B12_2, A22}), neg(mul(A22, B22_1)), neg(mul(A22, A12_1)), neg(prod({k(2), A12, B12_1})),
                     neg(d(A22_1, y)), d(A12_2, y), prod({k(2), A12, A12_2}), mul(B12, A22_2), neg(mul(B22_2, A12)),
                     neg(mul(B22, A12_2)), neg(d(A12_1, x))});
    auto t3 = terms({neg(mul(B12, A22_1)), prod({k(2), A12_2, B12}), mul(B22, B12_2), neg(mul(B22, B22_1)),
                     neg(prod({k(2), B12, B12_1})), neg(mul(A22, B12_1)), mul(A12, B22_1), d(B12_2, y),
                     neg(d(B22_1, y)), neg(d(B12_1, x))});
    return check_identities("nondegenerate_integrability", {{"T1", t1}, {"T2", t2}, {"T3", t3}}, box, opt);
}

// ------------------------------------------------- 1-parameter potentials

// B22 after eliminating A with the first integrability condition.
inline Expression new_b22(const Coords& c, const Expression& lambda, const Expression& b) {
    using namespace detail;
    auto l1 = div(d(lambda, c[0]), lambda), l2 = div(d(lambda, c[1]), lambda);
    auto b1 = d(b, c[0]), b2 = d(b, c[1]);
    auto num = sub(mul(add(l1, mul(l2, b)), sub(pow(b, 2), k(1))), add(b2, mul(b, b1)));
    return simplify_basic(div(num, b));
}

// B22 once the D^2 = 0 condition has been used as well (4 symmetries).
inline Expression updated_b22(const Coords& c, const Expression& lambda, const Expression& b) {
    using namespace detail;
    auto l1 = d(lambda, c[0]), l2 = d(lambda, c[1]);
    auto num = terms({neg(mul(l2, b)), mul(l1, pow(b, 2)), prod({k(3), l2, pow(b, 3)}), neg(mul(k(3), l1))});
    return simplify_basic(div(num, prod({k(2), b, lambda})));
}

struct OneParamResult {
    Coords roles;  // (first, second) coordinate as used for B; swapped when V_2 vanishes
    bool swapped = false;
    std::string branch;  // zero, minus_i, plus_i, generic
    Expression b1, b12, b22;
    std::string b22_source;  // symmetry, eliminated, potential
    ConditionReport report;
};

inline std::string classify_b(const Expression& b, const DomainBox& box, const CheckOptions& opt = {}) {
    if (identically_zero(b, box, opt)) return "zero";
    if (identically_equal(b, Expression::number(Complex(0, -1)), box, opt)) return "minus_i";
    if (identically_equal(b, Expression::number(Complex(0, 1)), box, opt)) return "plus_i";
    return "generic";
}

// a12 (optional) is the p1p2 coefficient/2 of a symmetry with a12 != 0 in
// special coordinates; without it B22 comes from the eliminated form.
inline OneParamResult one_param_coeffs(const Coords& c, const Expression& v, const Expression& lambda,
                                       const Expression& a12, const DomainBox& box, const CheckOptions& opt = {}) {
    using namespace detail;
    OneParamResult res;
    res.roles = c;
    auto vx = d(v, c[0]), vy = d(v, c[1]);
    bool zx = identically_zero(vx, box, opt), zy = identically_zero(vy, box, opt);
    if (zx && zy) throw ConditionError("potential does not depend on either coordinate");
    if (zy) {
        res.swapped = true;
        res.roles = {c[1], c[0]};
    }
    const auto &x = res.roles[0], &y = res.roles[1];
    auto v1 = d(v, x), v2 = d(v, y);
    auto b = simplify_basic(div(v1, v2));
    res.b1 = b;
    res.branch = classify_b(b, box, opt);
    if (res.branch == "zero") res.b1 = b = k(0);
    auto l1 = div(d(lambda, x), lambda), l2 = div(d(lambda, y), lambda);
    res.b12 = simplify_basic(sub(neg(mul(l2, b)), l1));
    if (a12.valid()) {
        auto a = log_derivatives(res.roles, a12);
        res.b22 = simplify_basic(sub(mul(add(mul(k(2), l1), mul(k(3), a.f1)), b), add(mul(k(2), l2), mul(k(3), a.f2))));
        res.b22_source = "symmetry";
    } else if (res.branch != "zero") {
        res.b22 = new_b22(res.roles, lambda, b);
        res.b22_source = "eliminated";
    } else {
        res.b22 = simplify_basic(div(sub(d(v2, y), d(v1, x)), v2));
        res.b22_source = "potential";
    }
    const auto &B = b, &B12 = res.b12, &B22 = res.b22;
    auto b_1 = d(B, x), b_2 = d(B, y);
    std::vector<Identity> ids{
        {"canonical_12", terms({d(v1, y), prod({l2, B, v2}), mul(l1, v2)})},
        {"canonical_22", terms({d(v2, y), neg(d(v1, x)), neg(mul(B22, v2))})},
        {"integrability_1", terms({B12, neg(mul(B12, pow(B, 2))), neg(b_2), neg(mul(B, b_1)), neg(mul(B, B22))})},
        {"integrability_2", terms({d(B12, y), neg(d(B22, x)), neg(d(b_1, x)), neg(mul(b_1, B12)), neg(mul(B, d(B12, x)))})},
    };
    if (res.branch == "zero") {
        ids.push_back({"lambda_1", d(lambda, x)});
    } else if (a12.valid()) {
        ids.push_back({"new_b22", terms({mul(B22, B), neg(mul(add(l1, mul(l2, B)), sub(pow(B, 2), k(1)))), b_2,
                                         mul(B, b_1)})});
    }
    res.report = check_identities("one_param", ids, box, opt);
    return res;
}

inline OneParamResult one_param_coeffs(const Coords& c, const Expression& v, const Expression& lambda,
                                       const DomainBox& box, const CheckOptions& opt = {}) {
    return one_param_coeffs(c, v, lambda, Expression(), box, opt);
}

// ----------------------------------------------------- Killing vectors

struct KillingSample {
    double x = 0, y = 0;  // role coordinates
    Complex xi, eta;      // components along p_first, p_second
};

struct KillingVectorResult {
    std::string branch;
    Coords roles;
    ConditionReport report;
    bool constructed = false;
    std::optional<Observable> symbolic;
    std::vector<KillingSample> grid;
    double path_agreement = 0.0;
    Expression d;
};

struct QuadratureOptions {
    int grid = 16;
    double steps_per_unit = 256.0;
    double path_tol = 1e-6;
    // one extrapolation step on top of the trapezoid sums
    bool richardson = true;
};

namespace detail {

// Integrates (ln Q)_1 = f1, (ln Q)_2 = f2 over the real box along two
// staircase paths and checks the Killing equations for xi = Q alpha,
// eta = Q beta at each grid node.
inline void quadrature_check(KillingVectorResult& res, const Coords& r, const Expression& f1, const Expression& f2,
                             const Expression& alpha, const Expression& beta, const Expression& lambda,
                             const Expression& v, const DomainBox& box, const CheckOptions& opt,
                             const QuadratureOptions& q) {
    const auto &x = r[0], &y = r[1];
    std::vector<Expression> outs{f1,
                                 f2,
                                 alpha,
                                 beta,
                                 d(alpha, x),
                                 d(alpha, y),
                                 d(beta, x),
                                 d(beta, y),
                                 lambda,
                                 d(lambda, x),
                                 d(lambda, y),
                                 v.valid() ? d(v, x) : k(0),
                                 v.valid() ? d(v, y) : k(0)};
    auto syms = Program::collect(outs);
    Program prog(outs, syms);
    std::vector<Complex> in(syms.size());
    int ix = -1, iy = -1;
    for (std::size_t s = 0; s < syms.size(); ++s) {
        if (syms[s] == x) ix = static_cast<int>(s);
        else if (syms[s] == y) iy = static_cast<int>(s);
        else in[s] = center(box.rect(syms[s]));
    }
    std::vector<Complex> out(outs.size()), scratch;
    auto eval = [&](double px, double py) -> bool {
        if (ix >= 0) in[ix] = Complex(px, 0.0);
        if (iy >= 0) in[iy] = Complex(py, 0.0);
        prog.run(in, out, scratch);
        for (auto z : out)
            if (!acceptable(z, box.cap)) return false;
        return true;
    };
    // integral of f_j along a straight segment, NaN when it meets a singularity
    auto segment = [&](double x0, double y0, double x1, double y1, int j) -> Complex {
        double len = std::hypot(x1 - x0, y1 - y0);
        if (len == 0) return 0.0;
        int n = std::max(2, static_cast<int>(std::ceil(q.steps_per_unit * len)));
        n += n % 2;
        Complex fine = 0.0, coarse = 0.0;
        for (int t = 0; t <= n; ++t) {
            double u = static_cast<double>(t) / n;
            if (!eval(x0 + u * (x1 - x0), y0 + u * (y1 - y0))) return Complex(NAN, NAN);
            double w = t == 0 || t == n ? 0.5 : 1.0;
            fine += w * out[j];
            if (t % 2 == 0) coarse += w * out[j];
        }
        fine *= len / n;
        coarse *= 2.0 * len / n;
        return q.richardson ? (4.0 * fine - coarse) / 3.0 : fine;
    };
    const Rect &rx = box.rect(x), &ry = box.rect(y);
    int g = q.grid;
    std::vector<double> xs(g), ys(g);
    for (int i = 0; i < g; ++i) {
        xs[i] = rx.re.lo + (rx.re.hi - rx.re.lo) * i / (g - 1);
        ys[i] = ry.re.lo + (ry.re.hi - ry.re.lo) * i / (g - 1);
    }
    // path A: along x at ys[0], then along y; path B: along y at xs[0], then along x
    std::vector<Complex> bottom(g, 0.0), left(g, 0.0);
    for (int i = 1; i < g; ++i) bottom[i] = bottom[i - 1] + segment(xs[i - 1], ys[0], xs[i], ys[0], 0);
    for (int j = 1; j < g; ++j) left[j] = left[j - 1] + segment(xs[0], ys[j - 1], xs[0], ys[j], 1);
    std::vector<Complex> la(g * g), lb(g * g);
    for (int i = 0; i < g; ++i) {
        Complex acc = bottom[i];
        la[i * g] = acc;
        for (int j = 1; j < g; ++j) la[i * g + j] = acc = acc + segment(xs[i], ys[j - 1], xs[i], ys[j], 1);
    }
    for (int j = 0; j < g; ++j) {
        Complex acc = left[j];
        lb[j] = acc;
        for (int i = 1; i < g; ++i) lb[i * g + j] = acc = acc + segment(xs[i - 1], ys[j], xs[i], ys[j], 0);
    }

    const char* names[4] = {"killing_p1p1", "killing_p2p2", "killing_p1p2", "potential"};
    double worst[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    std::size_t accepted = 0;
    res.path_agreement = 0.0;
    std::vector<double> per_node;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            Complex a = la[i * g + j], b = lb[i * g + j];
            if (!acceptable(a, 1e300) || !acceptable(b, 1e300) || !eval(xs[i], ys[j])) continue;
            ++accepted;
            res.path_agreement = std::max(res.path_agreement, std::abs(a - b));
            Complex Q = std::exp(a);
            Complex F1 = out[0], F2 = out[1], al = out[2], be = out[3];
            Complex xi = Q * al, eta = Q * be;
            Complex xi1 = Q * (F1 * al + out[4]), xi2 = Q * (F2 * al + out[5]);
            Complex eta1 = Q * (F1 * be + out[6]), eta2 = Q * (F2 * be + out[7]);
            Complex lam = out[8], l1 = out[9], l2 = out[10], v1 = out[11], v2 = out[12];
            Complex lam2 = lam * lam;
            std::array<std::vector<Complex>, 4> ts{
                std::vector<Complex>{2.0 * xi1 / lam, xi * l1 / lam2, eta * l2 / lam2},
                std::vector<Complex>{2.0 * eta2 / lam, xi * l1 / lam2, eta * l2 / lam2},
                std::vector<Complex>{2.0 * eta1 / lam, 2.0 * xi2 / lam},
                std::vector<Complex>{xi * v1, eta * v2}};
            double node = 0.0;
            for (int t = 0; t < 4; ++t) {
                double rr = relative_residual(ts[t], opt.scale_floor);
                worst[t] = std::max(worst[t], rr);
                total[t] += rr;
                node = std::max(node, rr);
            }
            per_node.push_back(node);
            res.grid.push_back({xs[i], ys[j], xi, eta});
        }
    ConditionReport rep;
    rep.name = "killing_vector_grid";
    rep.requested = static_cast<std::size_t>(g * g);
    rep.accepted = accepted;
    rep.tol = opt.tol;
    rep.residuals = per_node;
    rep.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(g * g);
    for (int t = 0; t < 4; ++t) {
        ComponentResidual cr{names[t], worst[t], accepted ? total[t] / accepted : 0.0, accepted > 0 && worst[t] < opt.tol};
        rep.components.push_back(cr);
        rep.max_residual = std::max(rep.max_residual, worst[t]);
    }
    for (double v0 : per_node) rep.mean_residual += v0;
    if (accepted) rep.mean_residual /= static_cast<double>(accepted);
    rep.components.push_back({"path_agreement", res.path_agreement, res.path_agreement,
                              accepted > 0 && res.path_agreement < q.path_tol});
    bool enough = 2 * accepted >= static_cast<std::size_t>(g * g) && accepted > 0;
    rep.verdict = enough;
    for (const auto& cr : rep.components) rep.verdict = rep.verdict && cr.verdict;
    if (!enough) rep.note = "quadrature grid too singular";
    res.report = merge("killing_vector", {res.report, rep});
}

}  // namespace detail

// v may be an empty handle; then the potential part is skipped.
inline KillingVectorResult killing_vector_analysis(const Coords& c, const Expression& b, const Expression& lambda,
                                                   const Expression& v, const DomainBox& box,
                                                   const CheckOptions& opt = {}, const QuadratureOptions& q = {}) {
    using namespace detail;
    KillingVectorResult res;
    res.roles = c;
    res.branch = classify_b(b, box, opt);
    Expression bb = b;
    if (res.branch == "plus_i") {
        // exchanging the coordinates turns B into 1/B = -i
        res.roles = {c[1], c[0]};
        bb = Expression::number(Complex(0, -1));
    }
    const auto &x = res.roles[0], &y = res.roles[1];
    auto p = [&](int j) {
        // momentum conjugate to role coordinate j in the caller's ordering
        int idx = res.roles[j] == c[0] ? 0 : 1;
        return Observable::momentum(c, idx);
    };
    if (res.branch == "zero") {
        std::vector<Identity> ids{{"lambda_1", d(lambda, x)}};
        if (v.valid()) ids.push_back({"potential_1", d(v, x)});
        res.report = check_identities("killing_vector", ids, box, opt);
        res.symbolic = p(0);
        res.constructed = res.report.verdict;
        return res;
    }
    if (res.branch == "minus_i" || res.branch == "plus_i") {
        auto r = log_derivatives(res.roles, lambda);
        const auto I = Expression::imaginary_unit();
        res.report = check_identities("killing_vector", {{"flat", add(r.f11, r.f22)}}, box, opt);
        auto f1 = simplify_basic(div(neg(add(r.f1, mul(I, r.f2))), k(2)));
        auto f2 = simplify_basic(div(sub(mul(I, r.f1), r.f2), k(2)));
        quadrature_check(res, res.roles, f1, f2, neg(I), k(1), lambda, v, box, opt, q);
        res.constructed = res.report.verdict;
        return res;
    }
    auto b1 = d(bb, x), b2 = d(bb, y);
    auto b11 = d(b1, x), b22 = d(b2, y), b12 = d(b1, y);
    auto b_sq = pow(bb, 2);
    res.d = d_of(res.roles, bb);
    std::vector<Identity> ids{
        {"target", terms({b11, b22, mul(b_sq, b11), mul(b_sq, b22), neg(prod({k(2), bb, pow(b1, 2)})),
                          neg(prod({k(2), bb, pow(b2, 2)}))})},
        {"factorization", sub(mul(bb, b12), mul(b1, b2))},
    };
    res.report = check_identities("killing_vector", ids, box, opt);
    auto f1 = simplify_basic(div(res.d, k(2)));
    auto f2 = simplify_basic(add(b1, div(mul(bb, res.d), k(2))));
    quadrature_check(res, res.roles, f1, f2, k(1), neg(bb), lambda, v, box, opt, q);
    res.constructed = res.report.verdict;
    return res;
}

}  // namespace quadralg
