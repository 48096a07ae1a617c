#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadralg/builtin_systems.hpp"
#include "quadralg/expr.hpp"
#include "quadralg/linalg.hpp"
#include "quadralg/phase.hpp"
#include "quadralg/sampling.hpp"

namespace quadralg {

enum class Severity { Warning, Error };

inline const char* to_string(Severity s) { return s == Severity::Error ? "error" : "warning"; }

struct ValidationIssue {
    Severity severity = Severity::Error;
    std::string code;      // stable, machine readable
    std::string location;  // field path, e.g. symmetries[2].terms["1,1"]
    std::string message;
    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

class CatalogError : public std::runtime_error {
public:
    CatalogError(const std::string& msg, std::vector<ValidationIssue> issues = {})
        : std::runtime_error(msg), issues_(std::move(issues)) {}
    const std::vector<ValidationIssue>& issues() const { return issues_; }

private:
    std::vector<ValidationIssue> issues_;
};

struct NamedSymmetry {
    std::string name;
    Observable obs;
    friend bool operator==(const NamedSymmetry&, const NamedSymmetry&) = default;
};

struct SystemDef {
    std::string name;
    std::string description;
    std::string chart;
    Coords coords{"x", "y"};
    std::vector<std::string> parameters;
    Tensor2 g;          // kinetic tensor g^{ij}
    Expression lambda;  // empty unless g^{ij} = delta^{ij}/lambda
    Expression potential;
    std::vector<NamedSymmetry> symmetries;
    DomainBox box;
    bool real_dynamics = false;
    std::map<std::string, double> dynamics_parameters;

    bool conformal() const { return lambda.valid(); }
    std::set<std::string> parameter_set() const { return {parameters.begin(), parameters.end()}; }

    Observable kinetic() const { return Observable::quadratic(coords, g, Expression::integer(0)); }
    Observable hamiltonian() const { return Observable::quadratic(coords, g, potential); }

    const NamedSymmetry* find(const std::string& n) const {
        for (const auto& s : symmetries)
            if (s.name == n) return &s;
        return nullptr;
    }
    const Observable& symmetry(const std::string& n) const {
        auto* s = find(n);
        if (!s) throw CatalogError("system '" + name + "' has no symmetry named '" + n + "'");
        return s->obs;
    }
    std::vector<Observable> symmetry_observables() const {
        std::vector<Observable> r;
        for (const auto& s : symmetries) r.push_back(s.obs);
        return r;
    }
};

inline bool operator==(const Rect& a, const Rect& b) {
    return a.re.lo == b.re.lo && a.re.hi == b.re.hi && a.im.lo == b.im.lo && a.im.hi == b.im.hi;
}

inline bool operator==(const SystemDef& a, const SystemDef& b) {
    return a.name == b.name && a.description == b.description && a.chart == b.chart && a.coords == b.coords &&
           a.parameters == b.parameters && a.g == b.g && a.lambda.valid() == b.lambda.valid() &&
           (!a.lambda.valid() || a.lambda == b.lambda) && a.potential == b.potential &&
           a.symmetries == b.symmetries && a.box.rects == b.box.rects && a.real_dynamics == b.real_dynamics &&
           a.dynamics_parameters == b.dynamics_parameters;
}

struct ValidateOptions {
    std::size_t samples = 64;
    double tol = 1e-8;
    std::size_t scan_points = 4096;
    double spike_factor = 100.0;
    double spike_fraction = 0.002;
    unsigned threads = 1;
};

namespace detail {

inline bool reserved_name(const std::string& s) {
    return s == "p1" || s == "p2" || s == "i" || function_from_name(s).has_value();
}

inline bool identifier(const std::string& s) {
    static const std::regex re("[A-Za-z_][A-Za-z0-9_]*");
    return std::regex_match(s, re);
}

class SchemaReader {
public:
    std::vector<ValidationIssue> issues;

    void fail(const std::string& code, const std::string& loc, const std::string& msg) {
        issues.push_back({Severity::Error, code, loc, msg});
    }

    void only_keys(const nlohmann::json& j, const std::string& loc, std::initializer_list<const char*> keys) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (auto* k : keys) known = known || it.key() == k;
            if (!known) fail("unknown_key", loc.empty() ? it.key() : loc + "." + it.key(), "unknown key '" + it.key() + "'");
        }
    }

    std::optional<std::string> str(const nlohmann::json& j, const std::string& loc) {
        if (!j.is_string()) {
            fail("type", loc, "expected a string");
            return std::nullopt;
        }
        return j.get<std::string>();
    }

    // Parses an expression and checks its free variables against the chart.
    Expression expression(const nlohmann::json& j, const std::string& loc, const std::set<std::string>& params,
                          const Coords& coords) {
        Expression e;
        std::string text;
        if (j.is_number()) {
            std::ostringstream os;
            os.precision(17);
            os << j.get<double>();
            text = os.str();
        } else if (j.is_string()) {
            text = j.get<std::string>();
        } else {
            fail("type", loc, "expected an expression string");
            return Expression::integer(0);
        }
        try {
            e = parse(text, params);
        } catch (const ParseError& err) {
            fail("syntax", loc, std::string(err.what()) + " at offset " + std::to_string(err.offset()));
            return Expression::integer(0);
        }
        for (const auto& v : free_variables(e)) {
            if (v == "p1" || v == "p2")
                fail("momentum_in_coefficient", loc, "momentum '" + v + "' may not appear inside a coefficient");
            else if (v != coords[0] && v != coords[1])
                fail("undeclared_symbol", loc, "undeclared variable '" + v + "'");
        }
        return simplify_basic(e);
    }

    std::optional<Interval> interval(const nlohmann::json& j, const std::string& loc, bool strict) {
        if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
            fail("type", loc, "expected [lo, hi]");
            return std::nullopt;
        }
        Interval iv{j[0].get<double>(), j[1].get<double>()};
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi || (strict && iv.lo == iv.hi)) {
            fail("bad_interval", loc, "interval must satisfy lo < hi");
            return std::nullopt;
        }
        return iv;
    }
};

inline std::optional<Monomial> parse_monomial_key(const std::string& k) {
    static const std::regex re("\\s*([0-9]+)\\s*,\\s*([0-9]+)\\s*");
    std::smatch m;
    if (!std::regex_match(k, m, re)) return std::nullopt;
    return Monomial{std::stoi(m[1]), std::stoi(m[2])};
}

inline SystemDef read_system(const nlohmann::json& j, std::vector<ValidationIssue>& issues) {
    SchemaReader rd;
    SystemDef sys;
    if (!j.is_object()) {
        rd.fail("type", "", "system file must be a JSON object");
        issues = rd.issues;
        return sys;
    }
    rd.only_keys(j, "",
                 {"name", "description", "chart", "coordinates", "parameters", "metric", "potential", "symmetries",
                  "domain", "real_dynamics", "dynamics_parameters"});

    if (!j.contains("name")) rd.fail("missing", "name", "missing required key");
    else if (auto s = rd.str(j["name"], "name")) sys.name = *s;
    if (j.contains("description"))
        if (auto s = rd.str(j["description"], "description")) sys.description = *s;
    if (j.contains("chart"))
        if (auto s = rd.str(j["chart"], "chart")) sys.chart = *s;

    bool coords_ok = false;
    if (!j.contains("coordinates")) {
        rd.fail("missing", "coordinates", "missing required key");
    } else if (!j["coordinates"].is_array() || j["coordinates"].size() != 2) {
        rd.fail("dimension", "coordinates", "exactly 2 coordinates are required (2D systems only)");
    } else {
        coords_ok = true;
        for (int k = 0; k < 2; ++k) {
            auto s = rd.str(j["coordinates"][k], "coordinates[" + std::to_string(k) + "]");
            if (!s) {
                coords_ok = false;
                continue;
            }
            sys.coords[k] = *s;
        }
        if (coords_ok && sys.coords[0] == sys.coords[1]) {
            rd.fail("duplicate_name", "coordinates", "coordinate names must differ");
            coords_ok = false;
        }
    }

    std::set<std::string> params;
    if (j.contains("parameters")) {
        if (!j["parameters"].is_array()) {
            rd.fail("type", "parameters", "expected an array of names");
        } else {
            for (std::size_t k = 0; k < j["parameters"].size(); ++k) {
                auto loc = "parameters[" + std::to_string(k) + "]";
                auto s = rd.str(j["parameters"][k], loc);
                if (!s) continue;
                if (!params.insert(*s).second) rd.fail("duplicate_name", loc, "duplicate parameter '" + *s + "'");
                sys.parameters.push_back(*s);
            }
        }
    }
    auto check_name = [&](const std::string& n, const std::string& loc) {
        if (!identifier(n)) rd.fail("bad_name", loc, "'" + n + "' is not an identifier");
        else if (reserved_name(n)) rd.fail("reserved_name", loc, "'" + n + "' is reserved");
    };
    for (int k = 0; k < 2; ++k)
        if (coords_ok) check_name(sys.coords[k], "coordinates[" + std::to_string(k) + "]");
    for (std::size_t k = 0; k < sys.parameters.size(); ++k) {
        check_name(sys.parameters[k], "parameters[" + std::to_string(k) + "]");
        if (sys.parameters[k] == sys.coords[0] || sys.parameters[k] == sys.coords[1])
            rd.fail("duplicate_name", "parameters[" + std::to_string(k) + "]", "parameter shadows a coordinate");
    }
    if (!coords_ok) {
        issues = rd.issues;
        return sys;
    }

    if (!j.contains("metric")) {
        rd.fail("missing", "metric", "missing required key");
    } else {
        const auto& m = j["metric"];
        if (!m.is_object() || m.size() != 1 || !(m.contains("conformal_lambda") || m.contains("g"))) {
            rd.fail("schema", "metric", "metric must be {conformal_lambda: expr} or {g: [[..],[..]]}");
        } else if (m.contains("conformal_lambda")) {
            sys.lambda = rd.expression(m["conformal_lambda"], "metric.conformal_lambda", params, sys.coords);
            auto inv = div(Expression::integer(1), sys.lambda);
            sys.g = {{{inv, Expression::integer(0)}, {Expression::integer(0), inv}}};
        } else {
            const auto& g = m["g"];
            if (!g.is_array() || g.size() != 2 || !g[0].is_array() || !g[1].is_array() || g[0].size() != 2 ||
                g[1].size() != 2) {
                rd.fail("dimension", "metric.g", "g must be a 2x2 array (2D systems only)");
            } else {
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        sys.g[a][b] = rd.expression(g[a][b], "metric.g[" + std::to_string(a) + "][" + std::to_string(b) + "]",
                                                    params, sys.coords);
                if (!(sys.g[0][1] == sys.g[1][0]))
                    rd.fail("asymmetric_metric", "metric.g", "g must be symmetric (g[0][1] and g[1][0] must be identical)");
            }
        }
    }
    if (!sys.g[0][0].valid()) sys.g = {{{Expression::integer(1), Expression::integer(0)}, {Expression::integer(0), Expression::integer(1)}}};

    sys.potential = j.contains("potential") ? rd.expression(j["potential"], "potential", params, sys.coords)
                                            : Expression::integer(0);

    if (!j.contains("symmetries")) {
        rd.fail("missing", "symmetries", "missing required key");
    } else if (!j["symmetries"].is_array()) {
        rd.fail("type", "symmetries", "expected an array");
    } else {
        std::set<std::string> seen;
        for (std::size_t k = 0; k < j["symmetries"].size(); ++k) {
            const auto& s = j["symmetries"][k];
            auto loc = "symmetries[" + std::to_string(k) + "]";
            if (!s.is_object()) {
                rd.fail("type", loc, "expected an object");
                continue;
            }
            rd.only_keys(s, loc, {"name", "terms", "hamiltonian", "quadratic"});
            NamedSymmetry ns;
            ns.obs = Observable(sys.coords);
            if (!s.contains("name")) rd.fail("missing", loc + ".name", "missing required key");
            else if (auto n = rd.str(s["name"], loc + ".name")) ns.name = *n;
            if (!ns.name.empty() && !seen.insert(ns.name).second)
                rd.fail("duplicate_name", loc + ".name", "duplicate symmetry name '" + ns.name + "'");
            int forms = int(s.contains("terms")) + int(s.contains("hamiltonian")) + int(s.contains("quadratic"));
            if (forms != 1) {
                rd.fail("schema", loc, "exactly one of terms, hamiltonian, quadratic is required");
                continue;
            }
            if (s.contains("terms")) {
                const auto& t = s["terms"];
                if (!t.is_object() || t.empty()) {
                    rd.fail("type", loc + ".terms", "expected a non-empty object of \"d1,d2\": expr");
                    continue;
                }
                std::map<Monomial, Expression> terms;
                for (auto it = t.begin(); it != t.end(); ++it) {
                    auto tl = loc + ".terms[\"" + it.key() + "\"]";
                    auto mono = parse_monomial_key(it.key());
                    if (!mono) {
                        rd.fail("bad_monomial", tl, "monomial keys are \"d1,d2\" with nonnegative integers");
                        continue;
                    }
                    if (terms.count(*mono)) {
                        rd.fail("duplicate_monomial", tl, "monomial listed twice");
                        continue;
                    }
                    terms[*mono] = rd.expression(it.value(), tl, params, sys.coords);
                }
                ns.obs = Observable(sys.coords, terms);
            } else if (s.contains("hamiltonian")) {
                if (!s["hamiltonian"].is_boolean() || !s["hamiltonian"].get<bool>()) {
                    rd.fail("schema", loc + ".hamiltonian", "hamiltonian must be true when present");
                    continue;
                }
                ns.obs = sys.hamiltonian();
            } else {
                const auto& q = s["quadratic"];
                if (!q.is_object() || !q.contains("a")) {
                    rd.fail("schema", loc + ".quadratic", "expected {a: [[..],[..]], w: expr}");
                    continue;
                }
                rd.only_keys(q, loc + ".quadratic", {"a", "w"});
                const auto& a = q["a"];
                if (!a.is_array() || a.size() != 2 || !a[0].is_array() || !a[1].is_array() || a[0].size() != 2 ||
                    a[1].size() != 2) {
                    rd.fail("dimension", loc + ".quadratic.a", "a must be a 2x2 array");
                    continue;
                }
                Tensor2 ae;
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c)
                        ae[r][c] = rd.expression(a[r][c], loc + ".quadratic.a[" + std::to_string(r) + "][" +
                                                              std::to_string(c) + "]",
                                                 params, sys.coords);
                if (!(ae[0][1] == ae[1][0])) rd.fail("asymmetric_metric", loc + ".quadratic.a", "a must be symmetric");
                Expression w = q.contains("w") ? rd.expression(q["w"], loc + ".quadratic.w", params, sys.coords)
                                               : Expression::integer(0);
                ns.obs = Observable::quadratic(sys.coords, ae, w);
            }
            if (ns.obs.empty()) rd.fail("zero_symmetry", loc, "symmetry is identically zero");
            sys.symmetries.push_back(std::move(ns));
        }
    }

    if (j.contains("domain")) {
        const auto& d = j["domain"];
        if (!d.is_object()) {
            rd.fail("type", "domain", "expected an object");
        } else {
            for (auto it = d.begin(); it != d.end(); ++it) {
                auto loc = "domain." + it.key();
                if (it.key() != sys.coords[0] && it.key() != sys.coords[1] && !params.count(it.key())) {
                    rd.fail("undeclared_symbol", loc, "domain entry for undeclared symbol '" + it.key() + "'");
                    continue;
                }
                const auto& r = it.value();
                if (!r.is_object() || !r.contains("re") || !r.contains("im")) {
                    rd.fail("schema", loc, "expected {re: [lo, hi], im: [lo, hi]}");
                    continue;
                }
                rd.only_keys(r, loc, {"re", "im"});
                auto re = rd.interval(r["re"], loc + ".re", true);
                auto im = rd.interval(r["im"], loc + ".im", false);
                if (re && im) sys.box.rects[it.key()] = Rect{*re, *im};
            }
        }
    }

    if (j.contains("real_dynamics")) {
        if (!j["real_dynamics"].is_boolean()) rd.fail("type", "real_dynamics", "expected a boolean");
        else sys.real_dynamics = j["real_dynamics"].get<bool>();
    }
    if (j.contains("dynamics_parameters")) {
        const auto& d = j["dynamics_parameters"];
        if (!d.is_object()) {
            rd.fail("type", "dynamics_parameters", "expected an object of parameter values");
        } else {
            for (auto it = d.begin(); it != d.end(); ++it) {
                auto loc = "dynamics_parameters." + it.key();
                if (!params.count(it.key())) rd.fail("undeclared_symbol", loc, "not a declared parameter");
                else if (!it.value().is_number()) rd.fail("type", loc, "expected a number");
                else sys.dynamics_parameters[it.key()] = it.value().get<double>();
            }
        }
    }
    issues = rd.issues;
    return sys;
}

inline nlohmann::json tensor_json(const Tensor2& t) {
    return nlohmann::json::array({nlohmann::json::array({to_string(t[0][0]), to_string(t[0][1])}),
                                  nlohmann::json::array({to_string(t[1][0]), to_string(t[1][1])})});
}

}  // namespace detail

// Writes a system back to the file schema. Hamiltonian entries are kept as
// the shorthand; everything else is written as explicit terms.
inline nlohmann::json to_json(const SystemDef& sys) {
    nlohmann::json j;
    j["name"] = sys.name;
    if (!sys.description.empty()) j["description"] = sys.description;
    if (!sys.chart.empty()) j["chart"] = sys.chart;
    j["coordinates"] = {sys.coords[0], sys.coords[1]};
    j["parameters"] = sys.parameters;
    if (sys.conformal())
        j["metric"] = {{"conformal_lambda", to_string(sys.lambda)}};
    else
        j["metric"] = {{"g", detail::tensor_json(sys.g)}};
    j["potential"] = to_string(sys.potential);
    auto h = sys.hamiltonian();
    j["symmetries"] = nlohmann::json::array();
    for (const auto& s : sys.symmetries) {
        nlohmann::json e;
        e["name"] = s.name;
        if (s.obs == h) {
            e["hamiltonian"] = true;
        } else {
            nlohmann::json t = nlohmann::json::object();
            for (const auto& [m, c] : s.obs.terms()) t[to_string(m)] = to_string(c);
            e["terms"] = t;
        }
        j["symmetries"].push_back(e);
    }
    j["domain"] = nlohmann::json::object();
    for (const auto& [k, r] : sys.box.rects)
        j["domain"][k] = {{"re", {r.re.lo, r.re.hi}}, {"im", {r.im.lo, r.im.hi}}};
    if (!sys.dynamics_parameters.empty()) j["dynamics_parameters"] = sys.dynamics_parameters;
    j["real_dynamics"] = sys.real_dynamics;
    return j;
}

// Constancy, independence and domain sanity. Never throws for a
// well-formed SystemDef.
inline std::vector<ValidationIssue> validate(const SystemDef& sys, const ValidateOptions& vo = {}) {
    std::vector<ValidationIssue> out;
    auto h = sys.hamiltonian();
    CheckOptions opt;
    opt.samples = vo.samples;
    opt.tol = vo.tol;
    opt.threads = vo.threads;
    for (std::size_t k = 0; k < sys.symmetries.size(); ++k) {
        const auto& s = sys.symmetries[k];
        auto loc = "symmetries[" + std::to_string(k) + "]";
        ConditionReport rep;
        try {
            rep = is_constant_of_motion(h, s.obs, sys.box, opt, s.name);
        } catch (const std::exception& e) {
            out.push_back({Severity::Error, "evaluation_failed", loc, e.what()});
            continue;
        }
        if (2 * rep.accepted < rep.requested || rep.accepted == 0) {
            out.push_back({Severity::Warning, "domain_singular", loc,
                           "constancy check of '" + s.name + "' accepted only " + std::to_string(rep.accepted) +
                               " of " + std::to_string(rep.requested) + " samples"});
            continue;
        }
        if (!rep.verdict) {
            std::string worst;
            double wr = -1;
            for (const auto& c : rep.components)
                if (c.max_residual > wr) {
                    wr = c.max_residual;
                    worst = c.name;
                }
            std::ostringstream os;
            os.precision(3);
            os << "'" << s.name << "' is not a constant of motion: max residual " << rep.max_residual << " in "
               << worst;
            out.push_back({Severity::Error, "not_constant", loc, os.str()});
        }
    }

    if (!sys.symmetries.empty()) {
        auto obs = sys.symmetry_observables();
        std::size_t rows = std::max<std::size_t>(32, 4 * obs.size());
        auto em = evaluation_matrix(obs, sys.box, rows, 0x5a11u, vo.threads);
        if (em.accepted >= obs.size()) {
            auto r = numerical_rank(em.values);
            if (r.rank < obs.size())
                out.push_back({Severity::Warning, "rank_deficient", "symmetries",
                               "rank-deficient symmetry list (rank " + std::to_string(r.rank) + " of " +
                                   std::to_string(obs.size()) + ")"});
        }
    }

    // domain scan over V and the kinetic tensor
    std::vector<std::pair<std::string, Expression>> fields{{"potential", sys.potential}};
    if (sys.conformal())
        fields.push_back({"metric.conformal_lambda", sys.lambda});
    else
        for (int a = 0; a < 2; ++a)
            for (int b = a; b < 2; ++b)
                fields.push_back({"metric.g[" + std::to_string(a) + "][" + std::to_string(b) + "]", sys.g[a][b]});
    for (const auto& [loc, e] : fields) {
        if (e.is_constant()) continue;
        Program prog({e});
        std::vector<double> mags;
        std::size_t rejected = 0;
        std::vector<Complex> scratch, val(1);
        for (std::size_t k = 0; k < vo.scan_points; ++k) {
            RandomStream rng(sys.box.seed, 0xd0a1u, k, 0);
            auto pt = draw_point(sys.box, prog.symbols(), rng);
            prog.run(pt, val, scratch);
            if (!acceptable(val[0], sys.box.cap))
                ++rejected;
            else
                mags.push_back(std::abs(val[0]));
        }
        double rate = static_cast<double>(rejected) / static_cast<double>(vo.scan_points);
        double spikes = 0.0;
        if (!mags.empty()) {
            auto sorted = mags;
            std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
            double med = sorted[sorted.size() / 2];
            if (med > 0)
                spikes = static_cast<double>(std::count_if(mags.begin(), mags.end(),
                                                           [&](double m) { return m > vo.spike_factor * med; })) /
                         static_cast<double>(vo.scan_points);
        }
        if (rate > 0 || spikes > vo.spike_fraction) {
            std::ostringstream os;
            os.precision(3);
            os << "domain box appears to contain a pole: rejection rate " << rate << ", fraction above "
               << vo.spike_factor << "x median " << spikes;
            out.push_back({Severity::Warning, "domain_pole", loc, os.str()});
        }
    }
    return out;
}

inline bool has_errors(const std::vector<ValidationIssue>& issues) {
    return std::any_of(issues.begin(), issues.end(), [](const auto& i) { return i.severity == Severity::Error; });
}

inline std::string describe(const std::vector<ValidationIssue>& issues) {
    std::string s;
    for (const auto& i : issues) {
        if (!s.empty()) s += "; ";
        s += std::string(to_string(i.severity)) + " [" + i.code + "] " + (i.location.empty() ? "" : i.location + ": ") +
             i.message;
    }
    return s;
}

struct LoadOptions {
    bool validate = true;
    ValidateOptions validation;
};

inline SystemDef load_system_text(std::string_view text, const LoadOptions& lo = {}, const std::string& origin = "") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw CatalogError(origin + ": invalid JSON: " + e.what(),
                           {{Severity::Error, "json", "", e.what()}});
    }
    std::vector<ValidationIssue> issues;
    SystemDef sys = detail::read_system(j, issues);
    if (has_errors(issues)) throw CatalogError(origin + ": " + describe(issues), issues);
    if (lo.validate) {
        auto v = validate(sys, lo.validation);
        if (has_errors(v)) throw CatalogError(origin + ": " + describe(v), v);
    }
    return sys;
}

inline SystemDef load_system(const std::string& path, const LoadOptions& lo = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CatalogError("cannot open system file '" + path + "'", {{Severity::Error, "io", "", "cannot open"}});
    std::stringstream ss;
    ss << in.rdbuf();
    return load_system_text(ss.str(), lo, path);
}

inline std::vector<std::string> builtin_names() {
    std::vector<std::string> r;
    for (const auto& [n, t] : builtin_sources()) r.emplace_back(n);
    return r;
}

// Bundled systems; each is validated once and then cached.
inline SystemDef builtin(const std::string& name) {
    static std::mutex mu;
    static std::map<std::string, SystemDef> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(name); it != cache.end()) return it->second;
    for (const auto& [n, text] : builtin_sources())
        if (n == name) return cache.emplace(name, load_system_text(text, {}, "builtin " + name)).first->second;
    throw CatalogError("unknown built-in system '" + name + "'", {{Severity::Error, "unknown_system", "", name}});
}

// A built-in name or a path to a system file.
inline SystemDef resolve_system(const std::string& ref, const LoadOptions& lo = {}) {
    for (const auto& n : builtin_names())
        if (n == ref) return builtin(ref);
    return load_system(ref, lo);
}

}  // namespace quadralg
