#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadralg/algebra.hpp"
#include "quadralg/catalog.hpp"
#include "quadralg/conditions.hpp"

namespace quadralg {

// d e / d p for a parameter p (parameters are constants to differentiate()).
inline Expression parameter_derivative(const Expression& e, const std::string& p) {
    auto as_var = substitute(e, {{p, Expression::variable(p)}});
    return simplify_basic(substitute(differentiate(as_var, p), {{p, Expression::parameter(p)}}));
}

// ------------------------------------------------------- potential instance

// U = constant + sum_k w_k dV/da_k, fitted on sample points.
struct PotentialInstance {
    Complex constant{0.0, 0.0};
    std::vector<std::pair<std::string, Complex>> weights;
    double residual = 0.0;
    bool ok = false;
    std::string message;
};

namespace detail {

inline Expression constant_expr(Complex c, long max_den = 64, double tol = 1e-9) {
    if (auto s = snap(c, max_den, tol)) {
        auto part = [](Rational q) {
            return q.den == 1 ? Expression::integer(q.num) : div(Expression::integer(q.num), Expression::integer(q.den));
        };
        if (s->im.num == 0) return part(s->re);
        auto im = mul(part(s->im), Expression::imaginary_unit());
        return s->re.num == 0 ? im : add(part(s->re), im);
    }
    return Expression::number(c);
}

inline bool nonzero_on_box(const Coords& c, const Expression& u, const DomainBox& box, std::size_t samples,
                           std::string& why) {
    auto em = evaluation_matrix({Observable::constant(c, u)}, box, samples, 0x75);
    if (em.accepted < samples / 2) {
        why = "U is singular on most of the box";
        return false;
    }
    for (Eigen::Index r = 0; r < em.values.rows(); ++r)
        if (std::abs(em.values(r, 0)) < 1e-12) {
            why = "U vanishes on the box";
            return false;
        }
    return true;
}

}  // namespace detail

inline PotentialInstance fit_potential_instance(const SystemDef& sys, const Expression& u, const DomainBox& box,
                                                const CheckOptions& opt = {}) {
    PotentialInstance pi;
    std::vector<Expression> cols{Expression::integer(1)};
    std::vector<std::string> names{""};
    for (const auto& p : sys.parameters) {
        auto dv = parameter_derivative(sys.potential, p);
        if (dv.is_zero()) continue;
        for (const auto& q : sys.parameters)
            if (!identically_zero(parameter_derivative(dv, q), box, opt)) {
                pi.message = "potential is not linear in parameter '" + p + "'";
                return pi;
            }
        cols.push_back(dv);
        names.push_back(p);
    }
    std::vector<Observable> obs;
    for (const auto& e : cols) obs.push_back(Observable::constant(sys.coords, e));
    obs.push_back(Observable::constant(sys.coords, u));
    std::size_t rows = std::max<std::size_t>(opt.samples, 4 * cols.size());
    auto em = evaluation_matrix(obs, box, rows, 0x706f74, opt.threads);
    if (em.accepted < std::max(cols.size(), rows / 2)) {
        pi.message = "too few usable sample points";
        return pi;
    }
    auto n = static_cast<Eigen::Index>(cols.size());
    MatrixC a = em.values.leftCols(n);
    VectorC b = em.values.col(n);
    MatrixC an = a;
    auto scales = normalize_columns(an);
    auto keep = detail::independent_columns(an, 1e-9);
    MatrixC sub(an.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = an.col(keep[j]);
    VectorC cs = sub.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    VectorC w = VectorC::Zero(n);
    for (std::size_t j = 0; j < keep.size(); ++j) w(keep[j]) = cs(static_cast<Eigen::Index>(j)) / scales(keep[j]);
    for (Eigen::Index k = 0; k < n; ++k)
        if (auto s = snap(w(k), 64, 1e-9)) w(k) = s->value();
    pi.residual = detail::row_residual(a, w, &b, opt.scale_floor);
    pi.constant = w(0);
    for (Eigen::Index k = 1; k < n; ++k)
        if (std::abs(w(k)) > 0) pi.weights.emplace_back(names[static_cast<std::size_t>(k)], w(k));
    pi.ok = pi.residual < opt.tol;
    if (!pi.ok) pi.message = "U is not in the span of the potential family (residual " + detail::format_double(pi.residual) + ")";
    return pi;
}

// W_U: the potential part of a symmetry belonging to the instance U.
inline Expression instance_part(const Expression& w, const PotentialInstance& pi) {
    std::vector<Expression> ts;
    for (const auto& [p, k] : pi.weights) ts.push_back(mul(detail::constant_expr(k), parameter_derivative(w, p)));
    return simplify_basic(sum(ts));
}

// ---------------------------------------------------------- transform

struct VariantResult {
    std::string variant;
    double max_residual = 0.0;
    bool verdict = false;
};

struct SymmetryTransform {
    std::string name;
    std::string variant;  // first accepted
    std::vector<VariantResult> tried;
    ConditionReport report;  // of the accepted variant
};

struct TransformRecord {
    std::string source;
    Expression u;
    std::string new_parameter;
    PotentialInstance instance;
    ConditionReport bertrand_darboux;
    std::vector<SymmetryTransform> symmetries;
    bool verified = false;
};

class StackelError : public std::runtime_error {
public:
    StackelError(const std::string& what, TransformRecord rec) : std::runtime_error(what), record_(std::move(rec)) {}
    const TransformRecord& record() const { return record_; }

private:
    TransformRecord record_;
};

struct StackelResult {
    SystemDef system;
    TransformRecord record;
};

struct TransformOptions {
    CheckOptions check;
    std::string new_parameter;  // empty: first free of c, c2, c3, ...
    Rect parameter_rect{{0.5, 1.5}, {-0.5, 0.5}};
};

namespace detail {

inline std::string fresh_parameter(const SystemDef& sys, const std::string& wanted) {
    auto used = [&](const std::string& n) {
        return n == sys.coords[0] || n == sys.coords[1] || sys.parameter_set().count(n) || n == "i" || n == "p1" ||
               n == "p2";
    };
    if (!wanted.empty()) {
        if (used(wanted)) throw CatalogError("parameter name '" + wanted + "' is already in use");
        return wanted;
    }
    if (!used("c")) return "c";
    for (int k = 2;; ++k)
        if (!used("c" + std::to_string(k))) return "c" + std::to_string(k);
}

inline Observable without_constant(const Observable& s) {
    Observable r = s;
    r.set({0, 0}, Expression::integer(0));
    return r;
}

}  // namespace detail

// lambda~ = lambda U (g~ = g/U), V~ = (V + c)/U with c a new parameter for the
// additive constant of the family. Each symmetry S = S0 + W is tried in the
// forms below and the first one in involution with H~ is kept:
//   derived    S0 + W - W_U H~
//   printed_a  S0 + W - (W_U/U) H~
//   printed_b  S0 - (W_U/U) H~0 + W/U
inline StackelResult transform(const SystemDef& sys, const Expression& u, const TransformOptions& topt = {}) {
    const auto& opt = topt.check;
    TransformRecord rec;
    rec.source = sys.name;
    rec.u = u;
    for (const auto& s : free_symbols(u))
        if (s != sys.coords[0] && s != sys.coords[1])
            throw StackelError("U may only depend on the coordinates (found '" + s + "')", rec);
    std::string why;
    if (!detail::nonzero_on_box(sys.coords, u, sys.box, opt.samples, why)) throw StackelError(why, rec);

    std::vector<ConditionReport> bd;
    SystemDef with_u = sys;
    with_u.potential = u;
    for (const auto& s : sys.symmetries) {
        if (is_hamiltonian(sys, s.obs) || s.obs.degree() != 2) continue;
        auto r = bertrand_darboux_residual(with_u, quadratic_part(s.obs), sys.box, opt);
        r.name = "bertrand_darboux(" + s.name + ")";
        bd.push_back(r);
    }
    rec.bertrand_darboux = detail::merge("bertrand_darboux", bd);
    if (bd.empty()) rec.bertrand_darboux.verdict = true;
    if (!rec.bertrand_darboux.verdict)
        throw StackelError("U fails the Bertrand-Darboux condition (residual " +
                               detail::format_double(rec.bertrand_darboux.max_residual) + ")",
                           rec);
    rec.instance = fit_potential_instance(sys, u, sys.box, opt);
    if (!rec.instance.ok) throw StackelError(rec.instance.message, rec);

    SystemDef out;
    rec.new_parameter = detail::fresh_parameter(sys, topt.new_parameter);
    out.name = sys.name + "_stackel";
    out.description = "Stackel transform of " + sys.name + " by U = " + to_string(u);
    out.chart = sys.chart;
    out.coords = sys.coords;
    out.parameters = sys.parameters;
    out.parameters.push_back(rec.new_parameter);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) out.g[a][b] = simplify_basic(div(sys.g[a][b], u));
    if (sys.conformal()) out.lambda = simplify_basic(mul(sys.lambda, u));
    out.potential = simplify_basic(div(add(sys.potential, Expression::parameter(rec.new_parameter)), u));
    out.box = sys.box;
    out.box.rects[rec.new_parameter] = topt.parameter_rect;
    out.real_dynamics = false;

    Observable h = out.hamiltonian(), h0 = out.kinetic();
    for (const auto& s : sys.symmetries) {
        SymmetryTransform st;
        st.name = s.name;
        if (is_hamiltonian(sys, s.obs)) {
            st.variant = "hamiltonian";
            st.report = is_constant_of_motion(h, h, out.box, opt, "constant_of_motion(" + s.name + ")");
            st.tried.push_back({st.variant, st.report.max_residual, st.report.verdict});
            out.symmetries.push_back({s.name, h});
            rec.symmetries.push_back(st);
            continue;
        }
        Observable s0 = detail::without_constant(s.obs);
        Expression w = s.obs.coefficient({0, 0});
        Expression wu = instance_part(w, rec.instance);
        Expression wu_u = simplify_basic(div(wu, u));
        std::vector<std::pair<std::string, Observable>> candidates{
            {"derived", s0 + Observable::constant(sys.coords, w) - scale(h, wu)},
            {"printed_a", s0 + Observable::constant(sys.coords, w) - scale(h, wu_u)},
            {"printed_b", s0 - scale(h0, wu_u) + Observable::constant(sys.coords, div(w, u))},
        };
        std::optional<Observable> accepted;
        for (const auto& [name, cand] : candidates) {
            auto r = is_constant_of_motion(h, cand, out.box, opt, "constant_of_motion(" + s.name + ")");
            st.tried.push_back({name, r.max_residual, r.verdict});
            if (r.verdict && !accepted) {
                accepted = cand;
                st.variant = name;
                st.report = r;
            }
        }
        rec.symmetries.push_back(st);
        if (!accepted) {
            std::string msg = "no transformed form of '" + s.name + "' is a symmetry:";
            for (const auto& t : st.tried) msg += " " + t.variant + "=" + detail::format_double(t.max_residual);
            throw StackelError(msg, rec);
        }
        out.symmetries.push_back({s.name, *accepted});
    }
    rec.verified = true;
    return {std::move(out), std::move(rec)};
}

// ------------------------------------------------ canonical coefficients

struct OneParamCoefficients {
    Expression b1, b12, b22;
};

// nondegenerate form
inline CanonicalCoefficients transform_canonical_coeffs(const CanonicalCoefficients& c, const Coords& roles,
                                                        const Expression& u) {
    using detail::d;
    using detail::k;
    auto u1 = div(d(u, roles[0]), u), u2 = div(d(u, roles[1]), u);
    return {simplify_basic(sub(c.a12, u2)), simplify_basic(sub(c.b12, u1)), simplify_basic(add(c.a22, mul(k(2), u1))),
            simplify_basic(sub(c.b22, mul(k(2), u2)))};
}

// 1-parameter form; roles as used for B
inline OneParamCoefficients transform_canonical_coeffs(const OneParamCoefficients& c, const Coords& roles,
                                                       const Expression& u) {
    using detail::d;
    using detail::k;
    auto u2 = div(d(u, roles[1]), u);
    return {c.b1, simplify_basic(sub(c.b12, detail::prod({k(2), c.b1, u2}))),
            simplify_basic(add(c.b22, detail::prod({k(2), sub(pow(c.b1, 2), k(1)), u2})))};
}

inline OneParamCoefficients transform_canonical_coeffs(const OneParamResult& r, const Expression& u) {
    return transform_canonical_coeffs(OneParamCoefficients{r.b1, r.b12, r.b22}, r.roles, u);
}

// B = V_1/V_2, with the coordinates swapped when V_2 vanishes.
struct PotentialRatio {
    Coords roles;
    bool swapped = false;
    Expression b;
};

inline PotentialRatio potential_ratio(const Coords& c, const Expression& v, const DomainBox& box,
                                      const CheckOptions& opt = {}) {
    using detail::d;
    PotentialRatio r;
    r.roles = c;
    auto vx = d(v, c[0]), vy = d(v, c[1]);
    bool zx = identically_zero(vx, box, opt), zy = identically_zero(vy, box, opt);
    if (zx && zy) throw ConditionError("potential does not depend on either coordinate");
    if (zy) {
        r.swapped = true;
        r.roles = {c[1], c[0]};
        std::swap(vx, vy);
    }
    r.b = zx && !zy ? Expression::integer(0) : simplify_basic(div(vx, vy));
    return r;
}

// ---------------------------------------------------------- duality

// b is left empty for potential-free systems
struct DualTriple {
    Expression mu;
    Expression a12;
    Expression b;
};

class DualityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::optional<Complex> constant_value(const Expression& e) {
    auto s = simplify_basic(e);
    if (!free_symbols(s).empty()) return std::nullopt;
    return evaluate(s, EvalContext{});
}

}  // namespace detail

// x -> (x + i y)/sqrt(2), y -> (-i x - y)/sqrt(2); an involution.
inline std::map<std::string, Expression> duality_substitution(const Coords& c) {
    auto x = Expression::variable(c[0]), y = Expression::variable(c[1]);
    auto i = Expression::imaginary_unit();
    auto r2 = sqrt(Expression::integer(2));
    return {{c[0], div(add(x, mul(i, y)), r2)}, {c[1], div(sub(neg(mul(i, x)), y), r2)}};
}

// Moebius map B -> i(B + i)/(B - i): an involution with 0 <-> -i and its pole at B = i.
// With a box, B is tested for being one of the special constants at sample points.
inline Expression moebius(const Expression& b, const DomainBox* box = nullptr, const CheckOptions& opt = {}) {
    auto i = Expression::imaginary_unit();
    auto is = [&](Complex c) {
        if (auto v = detail::constant_value(b)) return std::abs(*v - c) < 1e-14;
        return box && identically_equal(b, Expression::number(c), *box, opt);
    };
    if (is({0, 1})) throw DualityError("B = i is the pole of the Moebius map");
    if (is({0, 0})) return Expression::number(Complex(0, -1));
    if (is({0, -1})) return Expression::integer(0);
    return simplify_basic(mul(i, div(add(b, i), sub(b, i))));
}

inline DualTriple duality(const Coords& c, const DualTriple& t, const DomainBox* box = nullptr,
                           const CheckOptions& opt = {}) {
    auto sub_ = duality_substitution(c);
    auto mu = simplify_basic(substitute(t.a12, sub_));
    auto a12 = simplify_basic(substitute(t.mu, sub_));
    if (!t.b.valid()) return {mu, a12, {}};
    return {mu, a12, moebius(substitute(t.b, sub_), box, opt)};
}

// metric equations, conditions on B, and the mixed dual form
inline ConditionReport verify_duality_conditions(const Coords& c, const DualTriple& t, const DomainBox& box,
                                                 const CheckOptions& opt = {}) {
    using namespace detail;
    const auto &x = c[0], &y = c[1];
    const auto &mu = t.mu, &a = t.a12, &B = t.b;
    auto m1 = d(mu, x), m2 = d(mu, y), a1 = d(a, x), a2 = d(a, y);
    auto a11 = d(a1, x), a22 = d(a2, y);
    std::vector<Identity> ids{
        {"mu_12", d(m1, y)},
        {"a12_harmonic", add(a11, a22)},
        {"metric_equation", terms({mul(a, sub(d(m1, x), d(m2, y))), prod({k(3), m1, a1}), neg(prod({k(3), m2, a2})),
                                   mul(sub(a11, a22), mu)})},
    };
    if (B.valid()) {
        auto b1 = d(B, x), b2 = d(B, y);
        auto bb1 = add(pow(B, 2), k(1));
        ids.push_back({"b_laplace", sub(mul(bb1, add(d(b1, x), d(b2, y))), prod({k(2), B, add(pow(b1, 2), pow(b2, 2))}))});
        ids.push_back({"b_product", sub(mul(B, d(b1, y)), mul(b1, b2))});
        ids.push_back(
            {"dual_form", add(prod({bb1, sub(m1, mul(B, m2)), a}), prod({k(2), B, sub(mul(B, a1), a2), mu}))});
    }
    return check_identities("duality_conditions", ids, box, opt);
}

struct DualityResult {
    Coords roles;
    DualTriple original;
    DualTriple dual;
    DualTriple twice;
    ConditionReport pre;
    ConditionReport post;
    ConditionReport involution;
};

inline DualityResult duality_analysis(const Coords& c, const DualTriple& t, const DomainBox& box,
                                      const CheckOptions& opt = {}) {
    DualityResult r;
    r.roles = c;
    r.original = t;
    r.dual = duality(c, t, &box, opt);
    r.twice = duality(c, r.dual, &box, opt);
    r.pre = verify_duality_conditions(c, t, box, opt);
    r.pre.name = "duality_conditions_pre";
    r.post = verify_duality_conditions(c, r.dual, box, opt);
    r.post.name = "duality_conditions_post";
    auto diff = [](const Expression& p, const Expression& q) { return Expression::make_binary(NodeKind::Sub, p, q); };
    std::vector<Identity> ids{{"mu", diff(r.twice.mu, t.mu)}, {"a12", diff(r.twice.a12, t.a12)}};
    if (t.b.valid()) ids.push_back({"b", diff(r.twice.b, t.b)});
    r.involution = check_identities("duality_involution", ids, box, opt);
    return r;
}

// a12 of the square of a first-order symmetry if one has a12 != 0, else of the
// first second-order symmetry with a12 != 0; empty if there is none.
inline Expression symmetry_a12(const SystemDef& sys, const CheckOptions& opt = {}) {
    for (int order : {1, 2})
        for (const auto& s : sys.symmetries) {
            if (s.obs.degree() != order || (order == 1 && s.obs.min_degree() != 1)) continue;
            auto q = order == 1 ? multiply(s.obs, s.obs) : s.obs;
            auto a12 = simplify_basic(quadratic_part(q)[0][1]);
            if (!identically_zero(a12, sys.box, opt)) return a12;
        }
    return {};
}

// The triple of a conformal system: mu = lambda, B from the potential and a12
// from the square of a first-order symmetry if there is one, else from the
// first symmetry with a nonzero a12.
inline DualityResult system_duality(const SystemDef& sys, const CheckOptions& opt = {}) {
    if (!sys.conformal()) throw DualityError("system '" + sys.name + "' has no conformal factor");
    Expression b;
    Coords roles = sys.coords;
    if (!identically_zero(detail::d(sys.potential, sys.coords[0]), sys.box, opt) ||
        !identically_zero(detail::d(sys.potential, sys.coords[1]), sys.box, opt)) {
        auto ratio = potential_ratio(sys.coords, sys.potential, sys.box, opt);
        b = ratio.b;
        roles = ratio.roles;
    }
    Expression a12 = symmetry_a12(sys, opt);
    if (!a12.valid()) throw DualityError("system '" + sys.name + "' has no symmetry with a12 != 0");
    return duality_analysis(roles, {sys.lambda, a12, b}, sys.box, opt);
}

}  // namespace quadralg
