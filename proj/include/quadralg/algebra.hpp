#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "quadralg/catalog.hpp"
#include "quadralg/linalg.hpp"
#include "quadralg/phase.hpp"

namespace quadralg {

class AlgebraError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ bases

struct Generator {
    std::string name;
    Observable obs;
    int weight = -1;  // -1: momentum degree of obs
};

// A formal monomial in generators and parameters. Weights are momentum
// degrees; a parameter counts like an energy, i.e. weight 2 by default.
struct BasisElement {
    std::string name;
    std::vector<int> gen;
    std::vector<int> par;
    int weight = 0;
    bool has_parameters() const {
        return std::any_of(par.begin(), par.end(), [](int e) { return e > 0; });
    }
};

struct BasisSpec {
    std::vector<Generator> generators;
    std::vector<std::string> parameters;
    int max_degree = 2;
    int min_degree = -1;  // -1: same as max_degree (homogeneous)
    bool parameter_weighted = false;
    bool include_constant = false;  // parameter monomials with no generator factor (and 1)
    int parameter_weight = 2;
};

inline int generator_weight(const Generator& g) { return g.weight >= 0 ? g.weight : std::max(0, g.obs.degree()); }

namespace detail {

inline void enumerate_exponents(const std::vector<int>& w, std::size_t k, int budget, std::vector<int>& cur,
                                std::vector<std::vector<int>>& out) {
    if (k == w.size()) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; w[k] == 0 ? e == 0 : e * w[k] <= budget; ++e) {
        cur[k] = e;
        enumerate_exponents(w, k + 1, budget - e * w[k], cur, out);
    }
    cur[k] = 0;
}

inline std::string monomial_name(const std::vector<std::string>& pn, const std::vector<int>& pe,
                                 const std::vector<std::string>& gn, const std::vector<int>& ge) {
    std::string s;
    auto put = [&](const std::string& n, int e) {
        if (e == 0) return;
        if (!s.empty()) s += "*";
        s += n;
        if (e > 1) s += "^" + std::to_string(e);
    };
    for (std::size_t k = 0; k < pe.size(); ++k) put(pn[k], pe[k]);
    for (std::size_t k = 0; k < ge.size(); ++k) put(gn[k], ge[k]);
    return s.empty() ? "1" : s;
}

}  // namespace detail

// Formal monomials of the spec, pure generator products first, each group in
// descending lexicographic order of exponents (earlier generators lead).
inline std::vector<BasisElement> basis_elements(const BasisSpec& spec) {
    int lo = spec.min_degree < 0 ? spec.max_degree : spec.min_degree;
    std::vector<int> gw;
    std::vector<std::string> gn;
    for (const auto& g : spec.generators) {
        gw.push_back(generator_weight(g));
        gn.push_back(g.name);
    }
    for (int w : gw)
        if (w == 0) throw AlgebraError("generator of weight 0 in basis spec");
    std::vector<std::vector<int>> gexp, pexp;
    std::vector<int> cur(gw.size(), 0);
    detail::enumerate_exponents(gw, 0, spec.max_degree, cur, gexp);
    if (spec.parameter_weighted && !spec.parameters.empty()) {
        std::vector<int> pw(spec.parameters.size(), spec.parameter_weight);
        std::vector<int> pc(pw.size(), 0);
        detail::enumerate_exponents(pw, 0, spec.max_degree, pc, pexp);
    } else {
        pexp.push_back(std::vector<int>(spec.parameters.size(), 0));
    }
    auto weight = [](const std::vector<int>& e, const std::vector<int>& w) {
        int s = 0;
        for (std::size_t k = 0; k < e.size(); ++k) s += e[k] * w[k];
        return s;
    };
    std::vector<BasisElement> out;
    for (const auto& pe : pexp) {
        int pwt = 0;
        for (int e : pe) pwt += e * spec.parameter_weight;
        for (const auto& ge : gexp) {
            int w = pwt + weight(ge, gw);
            if (w < lo || w > spec.max_degree) continue;
            bool any_gen = std::any_of(ge.begin(), ge.end(), [](int e) { return e > 0; });
            if (!any_gen && !spec.include_constant) continue;
            out.push_back({detail::monomial_name(spec.parameters, pe, gn, ge), ge, pe, w});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const BasisElement& a, const BasisElement& b) {
        if (a.has_parameters() != b.has_parameters()) return !a.has_parameters();
        if (a.gen != b.gen) return a.gen > b.gen;
        return a.par > b.par;
    });
    return out;
}

struct Product {
    BasisElement element;
    Observable obs;
};

inline std::vector<Product> generate_products(const BasisSpec& spec) {
    if (spec.generators.empty()) return {};
    const Coords& c = spec.generators.front().obs.coords();
    std::vector<Product> out;
    for (auto& el : basis_elements(spec)) {
        Observable o = Observable::constant(c, Expression::integer(1));
        for (std::size_t k = 0; k < el.par.size(); ++k)
            for (int e = 0; e < el.par[k]; ++e)
                o = scale(o, Expression::parameter(spec.parameters[k]));
        for (std::size_t k = 0; k < el.gen.size(); ++k)
            for (int e = 0; e < el.gen[k]; ++e) o = multiply(o, spec.generators[k].obs);
        out.push_back({std::move(el), std::move(o)});
    }
    return out;
}

// ---------------------------------------------------------- sampling

// Generator, parameter and target values at the same accepted points.
struct SampleBlock {
    MatrixC gens;
    MatrixC pars;
    MatrixC targets;
    std::size_t requested = 0;
    std::size_t accepted = 0;
    std::size_t rejected_draws = 0;
};

inline SampleBlock sample_block(const BasisSpec& spec, const std::vector<Observable>& targets, const DomainBox& box,
                                std::size_t rows, std::uint64_t stream, unsigned threads = 1) {
    if (spec.generators.empty() && targets.empty()) throw AlgebraError("nothing to sample");
    Coords c = spec.generators.empty() ? targets.front().coords() : spec.generators.front().obs.coords();
    std::vector<Observable> obs;
    for (const auto& g : spec.generators) obs.push_back(g.obs);
    for (const auto& p : spec.parameters) obs.push_back(Observable::constant(c, Expression::parameter(p)));
    for (const auto& t : targets) obs.push_back(t);
    auto em = evaluation_matrix(obs, box, rows, stream, threads);
    SampleBlock b;
    auto ng = static_cast<Eigen::Index>(spec.generators.size());
    auto np = static_cast<Eigen::Index>(spec.parameters.size());
    auto nt = static_cast<Eigen::Index>(targets.size());
    b.gens = em.values.leftCols(ng);
    b.pars = em.values.middleCols(ng, np);
    b.targets = em.values.rightCols(nt);
    b.requested = em.requested;
    b.accepted = em.accepted;
    b.rejected_draws = em.rejected_draws;
    return b;
}

inline MatrixC basis_matrix(const std::vector<BasisElement>& els, const SampleBlock& s) {
    MatrixC m(s.gens.rows(), static_cast<Eigen::Index>(els.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (std::size_t k = 0; k < els.size(); ++k) {
            Complex v(1.0, 0.0);
            for (std::size_t j = 0; j < els[k].gen.size(); ++j)
                v *= detail::ipow(s.gens(r, static_cast<Eigen::Index>(j)), els[k].gen[j]);
            for (std::size_t j = 0; j < els[k].par.size(); ++j)
                v *= detail::ipow(s.pars(r, static_cast<Eigen::Index>(j)), els[k].par[j]);
            m(r, static_cast<Eigen::Index>(k)) = v;
        }
    return m;
}

// ---------------------------------------------------------- relations

struct Rational {
    long num = 0;
    long den = 1;
};

inline std::string to_string(const Rational& q) {
    return q.den == 1 ? std::to_string(q.num) : std::to_string(q.num) + "/" + std::to_string(q.den);
}

// Smallest denominator within tol.
inline std::optional<Rational> snap_rational(double v, long max_den = 64, double tol = 1e-6) {
    for (long q = 1; q <= max_den; ++q) {
        double p = std::round(v * static_cast<double>(q));
        if (std::abs(v - p / static_cast<double>(q)) < tol) return Rational{static_cast<long>(p), q};
    }
    return std::nullopt;
}

struct SnappedCoefficient {
    Rational re;
    Rational im;
    Complex value() const {
        return {static_cast<double>(re.num) / static_cast<double>(re.den),
                static_cast<double>(im.num) / static_cast<double>(im.den)};
    }
};

inline std::string to_string(const SnappedCoefficient& s) {
    if (s.im.num == 0) return to_string(s.re);
    std::string im = to_string(s.im) + "*i";
    if (s.re.num == 0) return im;
    return to_string(s.re) + (s.im.num < 0 ? " - " + to_string(Rational{-s.im.num, s.im.den}) + "*i" : " + " + im);
}

inline std::optional<SnappedCoefficient> snap(Complex c, long max_den = 64, double tol = 1e-6) {
    auto re = snap_rational(c.real(), max_den, tol);
    auto im = snap_rational(c.imag(), max_den, tol);
    if (!re || !im) return std::nullopt;
    return SnappedCoefficient{*re, *im};
}

struct RelationResult {
    std::string target;
    std::vector<std::string> basis;
    std::vector<Complex> coefficients;
    std::vector<std::optional<SnappedCoefficient>> snapped;
    double fit_residual = 0.0;
    double residual = 0.0;  // held-out
    double condition = 0.0;
    std::size_t rows = 0;
    std::size_t holdout_rows = 0;
    std::size_t rejected_draws = 0;
    double tol = 1e-8;
    bool accepted = false;
    std::string status;  // ok | not_in_span | rank_deficient | too_singular | nullity_0 | nullity_many
    std::string message;
    // null-space search only
    std::size_t nullity = 0;
    std::vector<double> singular_values;
    int weight = 0;
    std::vector<std::string> pruned;

    std::optional<Complex> coefficient(const std::string& name) const {
        for (std::size_t k = 0; k < basis.size(); ++k)
            if (basis[k] == name) return coefficients[k];
        return std::nullopt;
    }
    bool all_snapped() const {
        return std::all_of(snapped.begin(), snapped.end(), [](const auto& s) { return s.has_value(); });
    }
};

struct RelationOptions {
    std::size_t samples = 0;  // fit rows; 0 means oversampling * basis size
    std::size_t oversampling = 4;
    double tol = 1e-8;
    double condition_cap = 1e10;
    long max_denominator = 64;
    double snap_tol = 1e-6;
    double scale_floor = 1e-6;
    // null-space search: singular values below null_threshold count as null,
    // the next one up must clear gap_threshold
    double null_threshold = 1e-10;
    double gap_threshold = 1e-7;
    // drop basis columns dependent on earlier ones instead of failing
    bool prune = false;
    double prune_tol = 1e-9;
    unsigned threads = 1;
    std::uint64_t stream = 0x616c67;
};

namespace detail {

// max over rows of |sum_k c_k a_k - b| / max(|b|, max_k |c_k a_k|, floor)
inline double row_residual(const MatrixC& a, const VectorC& c, const VectorC* b, double floor) {
    double worst = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        Complex s = b ? -(*b)(r) : Complex(0.0, 0.0);
        double scale = b ? std::max(floor, std::abs((*b)(r))) : floor;
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            Complex t = c(k) * a(r, k);
            s += t;
            scale = std::max(scale, std::abs(t));
        }
        worst = std::max(worst, std::abs(s) / scale);
    }
    return worst;
}

inline void fill_snapped(RelationResult& r, const RelationOptions& o) {
    r.snapped.clear();
    for (const auto& c : r.coefficients) r.snapped.push_back(snap(c, o.max_denominator, o.snap_tol));
}

inline std::size_t fit_rows(std::size_t n, const RelationOptions& o) {
    return std::max<std::size_t>(o.samples ? o.samples : o.oversampling * n, 2 * n);
}

}  // namespace detail

namespace detail {

// Greedy choice of columns in order, dropping any within prune_tol of the
// span of those already kept (columns assumed unit norm).
inline std::vector<Eigen::Index> independent_columns(const MatrixC& a, double prune_tol) {
    std::vector<Eigen::Index> keep;
    std::vector<VectorC> q;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        VectorC v = a.col(k);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& u : q) v -= u * u.dot(v);
        double n = v.norm();
        if (n > prune_tol) {
            keep.push_back(k);
            q.push_back(v / n);
        }
    }
    return keep;
}

}  // namespace detail

// target = sum_k c_k basis_k by least squares on sampled points, checked on a
// fresh held-out batch of the same size.
inline RelationResult express_in_products(const Observable& target, const std::string& target_name,
                                          const BasisSpec& spec, const DomainBox& box,
                                          const RelationOptions& o = {}) {
    RelationResult r;
    r.target = target_name;
    r.tol = o.tol;
    auto els = basis_elements(spec);
    for (const auto& e : els) r.basis.push_back(e.name);
    if (els.empty()) {
        r.status = "empty_basis";
        r.message = "no products of the requested degree";
        return r;
    }
    std::size_t n = els.size(), rows = detail::fit_rows(n, o);
    r.rows = rows;
    r.holdout_rows = rows;

    // A target that vanishes identically is the zero combination. Fitting it
    // would only measure roundoff against the residual floor.
    std::vector<Identity> ids;
    for (const auto& [m, c] : target.terms()) ids.push_back({"coefficient(" + to_string(m) + ")", c});
    CheckOptions zo;
    zo.tol = o.tol;
    zo.scale_floor = o.scale_floor;
    zo.threads = o.threads;
    zo.stream = o.stream ^ 0x7a65726fULL;
    auto zero = ids.empty() ? ConditionReport{} : check_identities("vanishes", ids, box, zo);
    if (ids.empty() || (zero.verdict && zero.accepted == zo.samples)) {
        r.coefficients.assign(n, Complex(0.0, 0.0));
        detail::fill_snapped(r, o);
        r.residual = r.fit_residual = ids.empty() ? 0.0 : zero.max_residual;
        r.rows = r.holdout_rows = ids.empty() ? 0 : zero.accepted;
        r.accepted = true;
        r.status = "ok";
        r.message = "target vanishes identically";
        return r;
    }

    for (int attempt = 0; attempt < 2; ++attempt) {
        std::uint64_t stream = o.stream + 2 * static_cast<std::uint64_t>(attempt) * 0x10001;
        auto fit = sample_block(spec, {target}, box, rows, stream, o.threads);
        r.rejected_draws += fit.rejected_draws;
        if (fit.accepted < std::max<std::size_t>(n, rows / 2)) {
            r.status = "too_singular";
            r.message = "only " + std::to_string(fit.accepted) + " of " + std::to_string(rows) + " points accepted";
            return r;
        }
        MatrixC a = basis_matrix(els, fit);
        VectorC b = fit.targets.col(0);
        MatrixC an = a;
        Eigen::VectorXd scales = normalize_columns(an);
        std::vector<Eigen::Index> cols(static_cast<std::size_t>(an.cols()));
        for (Eigen::Index k = 0; k < an.cols(); ++k) cols[static_cast<std::size_t>(k)] = k;
        if (o.prune) cols = detail::independent_columns(an, o.prune_tol);
        r.pruned.clear();
        for (std::size_t k = 0, j = 0; k < n; ++k) {
            if (j < cols.size() && cols[j] == static_cast<Eigen::Index>(k))
                ++j;
            else
                r.pruned.push_back(els[k].name);
        }
        MatrixC sub(an.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = an.col(cols[j]);
        VectorC c = VectorC::Zero(static_cast<Eigen::Index>(n));
        if (!cols.empty()) {
            Eigen::JacobiSVD<MatrixC> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const auto& sv = svd.singularValues();
            r.condition = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
            if (r.condition > o.condition_cap) {
                r.status = "rank_deficient";
                r.message = "basis condition number " + detail::format_double(r.condition);
                continue;
            }
            VectorC cs = svd.solve(b);
            for (std::size_t j = 0; j < cols.size(); ++j)
                c(cols[j]) = cs(static_cast<Eigen::Index>(j)) / scales(cols[j]);
        }
        r.fit_residual = detail::row_residual(a, c, &b, o.scale_floor);

        auto held = sample_block(spec, {target}, box, rows, stream + 1, o.threads);
        r.rejected_draws += held.rejected_draws;
        MatrixC ah = basis_matrix(els, held);
        VectorC bh = held.targets.col(0);
        r.residual = detail::row_residual(ah, c, &bh, o.scale_floor);
        r.coefficients.assign(c.data(), c.data() + c.size());
        detail::fill_snapped(r, o);
        r.accepted = r.residual < o.tol;
        r.status = r.accepted ? "ok" : "not_in_span";
        if (!r.accepted) r.message = "held-out residual " + detail::format_double(r.residual);
        return r;
    }
    return r;
}

// Plain observable basis: every basis observable is its own generator.
inline RelationResult express_in_basis(const Observable& target, const std::vector<Observable>& basis,
                                       const DomainBox& box, const RelationOptions& o = {},
                                       const std::vector<std::string>& names = {}) {
    if (basis.empty()) throw AlgebraError("empty basis");
    BasisSpec spec;
    std::vector<std::vector<int>> exps;
    for (std::size_t k = 0; k < basis.size(); ++k)
        spec.generators.push_back({k < names.size() ? names[k] : "b" + std::to_string(k + 1), basis[k], 1});
    spec.max_degree = 1;
    return express_in_products(target, "target", spec, box, o);
}

// Recomputes the held-out residual of an accepted relation on another batch.
inline double relation_residual(const RelationResult& r, const Observable& target, const BasisSpec& spec,
                                const DomainBox& box, std::uint64_t stream, const RelationOptions& o = {}) {
    auto els = basis_elements(spec);
    auto s = sample_block(spec, {target}, box, std::max<std::size_t>(r.rows, 1), stream, o.threads);
    MatrixC a = basis_matrix(els, s);
    VectorC b = s.targets.col(0);
    VectorC c(static_cast<Eigen::Index>(r.coefficients.size()));
    for (std::size_t k = 0; k < r.coefficients.size(); ++k) c(static_cast<Eigen::Index>(k)) = r.coefficients[k];
    return detail::row_residual(a, c, &b, o.scale_floor);
}

// --------------------------------------------------------- rank

struct SpanRank {
    std::size_t rank = 0;
    std::vector<double> singular_values;
    std::size_t accepted = 0;
};

inline SpanRank symmetry_space_rank(const std::vector<Observable>& obs, const DomainBox& box,
                                    std::size_t samples = 64, double threshold = 1e-8, std::uint64_t stream = 0x72616e6b,
                                    unsigned threads = 1) {
    if (obs.empty()) throw AlgebraError("no observables");
    std::size_t rows = std::max(samples, 4 * obs.size());
    auto em = evaluation_matrix(obs, box, rows, stream, threads);
    if (em.accepted < std::max(obs.size(), rows / 2))
        throw DomainError("only " + std::to_string(em.accepted) + " of " + std::to_string(rows) + " points accepted");
    auto rr = numerical_rank(em.values, threshold);
    return {rr.rank, rr.singular_values, em.accepted};
}

// ------------------------------------------------------ closure

inline bool is_hamiltonian(const SystemDef& sys, const Observable& o) { return o == sys.hamiltonian(); }

inline std::vector<Generator> system_generators(const SystemDef& sys) {
    std::vector<Generator> g;
    for (const auto& s : sys.symmetries) g.push_back({s.name, s.obs, -1});
    return g;
}

struct ClosureEntry {
    std::string left;
    std::string right;
    int degree = -1;  // momentum degree of the bracket, -1 if it vanishes
    int weight = 0;   // formal degree w_left + w_right - 1 used for the basis
    bool adjoined = false;  // bracket taken as a new generator
    RelationResult relation;
};

struct ClosureResult {
    std::vector<Generator> generators;  // declared, then adjoined
    std::vector<ClosureEntry> entries;
    bool closed = false;
    int order = 0;  // highest bracket weight
};

struct ClosureOptions {
    RelationOptions relation;
    int max_adjoined = 1;
};

namespace detail {

inline BasisSpec bracket_basis(const std::vector<Generator>& gens, const std::vector<std::string>& params, int d,
                               bool weighted) {
    BasisSpec s;
    s.generators = gens;
    s.parameters = params;
    s.max_degree = d;
    s.min_degree = d;
    s.parameter_weighted = weighted;
    s.include_constant = weighted;
    return s;
}

inline std::string adjoined_name(const std::vector<Generator>& gens, std::size_t k) {
    std::string base = k == 0 ? "R" : "R" + std::to_string(k + 1);
    for (const auto& g : gens)
        if (g.name == base) return "{" + base + "}";
    return base;
}

}  // namespace detail

// Brackets of all non-Hamiltonian generator pairs, each expressed in the
// weight-homogeneous product basis of its formal degree: generator products alone
// first, then with parameter-weighted terms added. A bracket that is not in
// the span is adjoined as a new generator (at most max_adjoined times).
// Pairs are ordered with the lower-degree generator on the left.
inline ClosureResult closure_table(const SystemDef& sys, const DomainBox& box, const ClosureOptions& opt = {}) {
    ClosureResult res;
    res.generators = system_generators(sys);
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < res.generators.size(); ++k)
        if (!is_hamiltonian(sys, res.generators[k].obs)) active.push_back(k);
    if (active.size() < 2) throw AlgebraError("system '" + sys.name + "' needs at least two non-Hamiltonian generators");

    auto process = [&](std::size_t i, std::size_t j) {
        const auto *gi = &res.generators[i], *gj = &res.generators[j];
        int di = generator_weight(*gi), dj = generator_weight(*gj);
        if (dj < di) {
            std::swap(gi, gj);
            std::swap(di, dj);
        }
        ClosureEntry e;
        e.left = gi->name;
        e.right = gj->name;
        Observable br = poisson_bracket(gi->obs, gj->obs);
        e.degree = br.degree();
        e.weight = std::max(0, di + dj - 1);
        std::string tname = "{" + e.left + "," + e.right + "}";
        auto ro = opt.relation;
        ro.stream += 0x100 * (res.entries.size() + 1);
        if (e.degree < 0) {
            e.relation.target = tname;
            e.relation.accepted = true;
            e.relation.status = "ok";
            e.relation.message = "bracket vanishes identically";
            res.entries.push_back(e);
            return;
        }
        res.order = std::max(res.order, e.weight);
        ro.prune = true;
        e.relation = express_in_products(br, tname, detail::bracket_basis(res.generators, sys.parameters, e.weight, false),
                                         box, ro);
        if (!e.relation.accepted && !sys.parameters.empty())
            e.relation = express_in_products(
                br, tname, detail::bracket_basis(res.generators, sys.parameters, e.weight, true), box, ro);
        if (!e.relation.accepted && static_cast<int>(res.generators.size() - sys.symmetries.size()) < opt.max_adjoined) {
            std::string name = detail::adjoined_name(res.generators, res.generators.size() - sys.symmetries.size());
            e.adjoined = true;
            e.relation.message = "adjoined as generator " + name;
            res.generators.push_back({name, br, e.weight});
        }
        res.entries.push_back(e);
    };

    for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t b = a + 1; b < active.size(); ++b) process(active[a], active[b]);
    // adjoined generators against the declared ones
    for (std::size_t k = sys.symmetries.size(); k < res.generators.size(); ++k)
        for (std::size_t a : active) process(a, k);

    res.closed = std::all_of(res.entries.begin(), res.entries.end(),
                             [](const ClosureEntry& e) { return e.relation.accepted || e.adjoined; });
    return res;
}

// ------------------------------------------------------- Casimir

struct CasimirOptions {
    RelationOptions relation;
    // adjoin {g_a, g_b} of the last two declared generators when fewer than four are declared
    bool auto_adjoin = true;
    int min_weight = 4;
    int max_weight = 8;
    int resamples = 1;
};

struct CasimirResult {
    std::vector<Generator> generators;
    BasisSpec spec;
    RelationResult relation;
};

namespace detail {

// Null vector of the column-normalized evaluation matrix.
struct NullSearch {
    std::size_t nullity = 0;
    bool gap = false;
    std::vector<double> sv;
    VectorC v;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

inline NullSearch null_search(const std::vector<BasisElement>& els, const BasisSpec& spec, const DomainBox& box,
                              std::size_t rows, std::uint64_t stream, const RelationOptions& o) {
    NullSearch ns;
    auto s = sample_block(spec, {}, box, rows, stream, o.threads);
    ns.accepted = s.accepted;
    ns.rejected = s.rejected_draws;
    if (s.accepted < std::max(els.size(), rows / 2)) return ns;
    MatrixC a = basis_matrix(els, s);
    Eigen::VectorXd scales = normalize_columns(a);
    Eigen::JacobiSVD<MatrixC> svd(a, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double top = sv(0);
    std::size_t n = static_cast<std::size_t>(sv.size());
    for (std::size_t k = 0; k < n; ++k) {
        double rel = top > 0 ? sv(static_cast<Eigen::Index>(k)) / top : 0.0;
        ns.sv.push_back(rel);
        if (rel < o.null_threshold) ++ns.nullity;
    }
    // columns beyond the row count are null automatically
    if (a.rows() < a.cols()) ns.nullity += static_cast<std::size_t>(a.cols() - a.rows());
    std::size_t live = n - std::min(n, ns.nullity);
    ns.gap = ns.nullity == 0 || (live > 0 && ns.sv[live - 1] > o.gap_threshold);
    if (ns.nullity >= 1) {
        ns.v = svd.matrixV().col(a.cols() - 1);
        for (Eigen::Index k = 0; k < ns.v.size(); ++k) ns.v(k) /= scales(k);
    }
    return ns;
}

}  // namespace detail

// Searches weight-homogeneous product bases of increasing weight for the
// unique linear relation among the generators.
inline CasimirResult casimir(const SystemDef& sys, const DomainBox& box, const CasimirOptions& opt = {}) {
    CasimirResult res;
    auto declared = system_generators(sys);
    if (opt.auto_adjoin && declared.size() >= 2 && declared.size() < 4) {
        const auto& a = declared[declared.size() - 2];
        const auto& b = declared[declared.size() - 1];
        Observable br = poisson_bracket(a.obs, b.obs);
        if (!br.empty()) res.generators.push_back({detail::adjoined_name(declared, 0), br, -1});
    }
    res.generators.insert(res.generators.end(), declared.begin(), declared.end());
    auto& rel = res.relation;
    rel.target = "casimir";
    rel.tol = opt.relation.tol;
    const auto& o = opt.relation;

    for (int w = opt.min_weight; w <= opt.max_weight; ++w) {
        BasisSpec spec;
        spec.generators = res.generators;
        spec.parameters = sys.parameters;
        spec.max_degree = spec.min_degree = w;
        spec.parameter_weighted = true;
        spec.include_constant = true;
        auto els = basis_elements(spec);
        if (els.empty()) continue;
        std::size_t rows = detail::fit_rows(els.size(), o);
        detail::NullSearch ns;
        for (int attempt = 0; attempt <= opt.resamples; ++attempt) {
            ns = detail::null_search(els, spec, box, rows, o.stream + static_cast<std::uint64_t>(w * 16 + attempt), o);
            rel.rejected_draws += ns.rejected;
            if (ns.gap && ns.nullity <= 1) break;
        }
        rel.weight = w;
        rel.nullity = ns.nullity;
        rel.singular_values = ns.sv;
        rel.rows = rows;
        rel.basis.clear();
        for (const auto& e : els) rel.basis.push_back(e.name);
        res.spec = spec;
        if (ns.accepted < std::max(els.size(), rows / 2)) {
            rel.status = "too_singular";
            rel.message = "only " + std::to_string(ns.accepted) + " of " + std::to_string(rows) + " points accepted";
            return res;
        }
        if (!ns.gap) {
            rel.status = "nullity_ambiguous";
            rel.message = "no singular-value gap at weight " + std::to_string(w);
            return res;
        }
        if (ns.nullity == 0) continue;
        if (ns.nullity > 1) {
            rel.status = "nullity_many";
            rel.message = "null space of dimension " + std::to_string(ns.nullity) + " at weight " + std::to_string(w);
            return res;
        }
        // normalize by the leading element with a non-negligible coefficient
        double big = ns.v.cwiseAbs().maxCoeff();
        Eigen::Index lead = 0;
        while (lead < ns.v.size() && std::abs(ns.v(lead)) < 1e-6 * big) ++lead;
        VectorC c = ns.v / ns.v(lead);
        rel.coefficients.assign(c.data(), c.data() + c.size());
        detail::fill_snapped(rel, o);

        auto held = sample_block(spec, {}, box, rows, o.stream + 0x5eed + static_cast<std::uint64_t>(w), o.threads);
        rel.holdout_rows = held.accepted;
        rel.rejected_draws += held.rejected_draws;
        rel.residual = detail::row_residual(basis_matrix(els, held), c, nullptr, 1e-300);
        rel.accepted = rel.residual < std::max(o.tol, 1e-6);
        rel.status = rel.accepted ? "ok" : "not_in_span";
        if (!rel.accepted) rel.message = "held-out residual " + detail::format_double(rel.residual);
        return res;
    }
    rel.status = "nullity_0";
    rel.message = "no relation up to weight " + std::to_string(opt.max_weight);
    return res;
}

}  // namespace quadralg
