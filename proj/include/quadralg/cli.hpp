#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "quadralg/algebra.hpp"
#include "quadralg/catalog.hpp"
#include "quadralg/conditions.hpp"
#include "quadralg/dynamics.hpp"
#include "quadralg/stackel.hpp"

namespace quadralg::cli {

inline constexpr const char* tool_version = "1.0.0";

using Json = nlohmann::ordered_json;

enum Exit { exit_pass = 0, exit_fail = 1, exit_usage = 2 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = DomainBox{}.seed;
    std::size_t samples = 64;
    double tol = 1e-8;
    unsigned threads = 1;
    std::string out;

    CheckOptions check() const {
        CheckOptions o;
        o.samples = samples;
        o.tol = tol;
        o.threads = threads;
        return o;
    }
    RelationOptions relation() const {
        RelationOptions o;
        o.tol = tol;
        o.threads = threads;
        return o;
    }
};

struct Check {
    std::string check;
    bool verdict = false;
    double max_residual = 0.0;
    Json details = Json::object();
};

struct Report {
    Json config = Json::object();
    Json system = Json::object();
    std::vector<Check> results;

    bool passed() const {
        return std::all_of(results.begin(), results.end(), [](const Check& c) { return c.verdict; });
    }
    void add(std::string name, bool verdict, double residual, Json details = Json::object()) {
        results.push_back({std::move(name), verdict, residual, std::move(details)});
    }
    Json to_json() const {
        Json j;
        j["tool_version"] = tool_version;
        j["config"] = config;
        j["system"] = system;
        Json rs = Json::array();
        for (const auto& c : results)
            rs.push_back({{"check", c.check}, {"verdict", c.verdict}, {"max_residual", c.max_residual}, {"details", c.details}});
        j["results"] = rs;
        return j;
    }
};

// ---------------------------------------------------------- JSON output

// Doubles as %.17g; non-finite values become null.
inline void write_json(std::ostream& os, const Json& j, int level = 0) {
    auto pad = [&](int l) { os << std::string(static_cast<std::size_t>(2 * l), ' '); };
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            std::size_t k = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++k) {
                pad(level + 1);
                os << Json(it.key()).dump() << ": ";
                write_json(os, it.value(), level + 1);
                os << (k + 1 < j.size() ? ",\n" : "\n");
            }
            pad(level);
            os << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (std::size_t k = 0; k < j.size(); ++k) {
                pad(level + 1);
                write_json(os, j[k], level + 1);
                os << (k + 1 < j.size() ? ",\n" : "\n");
            }
            pad(level);
            os << "]";
            return;
        }
        case Json::value_t::number_float: {
            double v = j.get<double>();
            if (!std::isfinite(v)) {
                os << "null";
                return;
            }
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << buf;
            return;
        }
        default:
            os << j.dump();
    }
}

inline std::string dump(const Json& j) {
    std::ostringstream os;
    write_json(os, j);
    os << "\n";
    return os.str();
}

// ---------------------------------------------------------- pieces

inline Json complex_json(Complex c) { return {{"re", c.real()}, {"im", c.imag()}}; }

inline Json condition_json(const ConditionReport& r) {
    Json j;
    j["name"] = r.name;
    j["verdict"] = r.verdict;
    j["max_residual"] = r.max_residual;
    j["mean_residual"] = r.mean_residual;
    j["requested"] = r.requested;
    j["accepted"] = r.accepted;
    j["acceptance_rate"] = r.acceptance_rate;
    j["tol"] = r.tol;
    Json cs = Json::array();
    for (const auto& c : r.components)
        cs.push_back({{"name", c.name}, {"max_residual", c.max_residual}, {"mean_residual", c.mean_residual},
                      {"verdict", c.verdict}});
    j["components"] = cs;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

inline std::string relation_string(const RelationResult& r) {
    std::string s;
    for (std::size_t k = 0; k < r.basis.size(); ++k) {
        std::string c;
        if (r.snapped[k]) {
            if (r.snapped[k]->value() == Complex(0, 0)) continue;
            c = to_string(*r.snapped[k]);
        } else {
            if (std::abs(r.coefficients[k]) == 0) continue;
            c = detail::format_constant(Expression::number(r.coefficients[k]));
        }
        if (!s.empty()) s += " + ";
        s += "(" + c + ")*" + r.basis[k];
    }
    return s.empty() ? "0" : s;
}

inline Json relation_json(const RelationResult& r) {
    Json j;
    j["target"] = r.target;
    j["status"] = r.status;
    if (!r.message.empty()) j["message"] = r.message;
    j["relation"] = relation_string(r);
    Json ts = Json::array();
    for (std::size_t k = 0; k < r.basis.size(); ++k) {
        Json t{{"term", r.basis[k]}, {"coefficient", complex_json(r.coefficients[k])}};
        t["snapped"] = r.snapped[k] ? Json(to_string(*r.snapped[k])) : Json(nullptr);
        ts.push_back(t);
    }
    j["terms"] = ts;
    j["fit_residual"] = r.fit_residual;
    j["holdout_residual"] = r.residual;
    j["condition"] = r.condition;
    j["rows"] = r.rows;
    j["holdout_rows"] = r.holdout_rows;
    if (!r.pruned.empty()) j["pruned"] = r.pruned;
    if (!r.singular_values.empty()) {
        j["nullity"] = r.nullity;
        j["singular_values"] = r.singular_values;
    }
    return j;
}

inline Json system_json(const SystemDef& s, const std::string& ref) {
    Json j;
    j["name"] = s.name;
    j["source"] = ref;
    j["coordinates"] = {s.coords[0], s.coords[1]};
    j["parameters"] = s.parameters;
    if (s.conformal())
        j["lambda"] = to_string(s.lambda);
    else
        j["g"] = Json::array({Json::array({to_string(s.g[0][0]), to_string(s.g[0][1])}),
                              Json::array({to_string(s.g[1][0]), to_string(s.g[1][1])})});
    j["potential"] = to_string(s.potential);
    return j;
}

// ---------------------------------------------------------- subcommands

inline void run_verify(const SystemDef& sys, const RunConfig& cfg, Report& rep) {
    auto opt = cfg.check();
    auto box = sys.box.with_seed(cfg.seed);
    auto h = sys.hamiltonian();
    for (const auto& s : sys.symmetries) {
        Json d;
        d["order"] = s.obs.degree();
        auto c = is_constant_of_motion(h, s.obs, box, opt, "constant_of_motion(" + s.name + ")");
        bool ok = c.verdict;
        double worst = c.max_residual;
        d["constant_of_motion"] = condition_json(c);
        if (!is_hamiltonian(sys, s.obs)) {
            int deg = s.obs.degree();
            ConditionReport k = deg == 2 ? killing_residuals(sys, quadratic_part(s.obs), box, opt)
                                         : is_constant_of_motion(sys.kinetic(), s.obs.homogeneous(deg), box, opt, "killing");
            d["killing"] = condition_json(k);
            ok = ok && k.verdict;
            worst = std::max(worst, k.max_residual);
            if (deg == 2) {
                auto b = bertrand_darboux_residual(sys, quadratic_part(s.obs), box, opt);
                d["bertrand_darboux"] = condition_json(b);
                ok = ok && b.verdict;
                worst = std::max(worst, b.max_residual);
            }
        }
        rep.add("symmetry(" + s.name + ")", ok, worst, d);
    }
}

inline void run_algebra(const SystemDef& sys, const RunConfig& cfg, Report& rep) {
    ClosureOptions o;
    o.relation = cfg.relation();
    auto res = closure_table(sys, sys.box.with_seed(cfg.seed), o);
    double worst = 0;
    for (const auto& e : res.entries) {
        Json d;
        d["weight"] = e.weight;
        d["degree"] = e.degree;
        d["adjoined"] = e.adjoined;
        d["fit"] = relation_json(e.relation);
        bool ok = e.adjoined || e.relation.accepted;
        double r = e.adjoined ? 0.0 : e.relation.residual;
        worst = std::max(worst, r);
        rep.add("{" + e.left + "," + e.right + "}", ok, r, d);
    }
    Json gens = Json::array();
    for (const auto& g : res.generators) gens.push_back({{"name", g.name}, {"weight", generator_weight(g)}});
    rep.add("closure", res.closed, worst, {{"order", res.order}, {"generators", gens}});
}

inline void run_casimir(const SystemDef& sys, const RunConfig& cfg, Report& rep) {
    CasimirOptions o;
    o.relation = cfg.relation();
    auto res = casimir(sys, sys.box.with_seed(cfg.seed), o);
    Json gens = Json::array();
    for (const auto& g : res.generators) gens.push_back({{"name", g.name}, {"weight", generator_weight(g)}});
    Json d;
    d["generators"] = gens;
    d["weight"] = res.relation.weight;
    d["fit"] = relation_json(res.relation);
    rep.add("casimir", res.relation.accepted, res.relation.residual, d);
}

inline void run_stackel(const SystemDef& sys, const std::string& u_text, const RunConfig& cfg, Report& rep) {
    auto u = parse(u_text);
    TransformOptions to;
    to.check = cfg.check();
    SystemDef seeded = sys;
    seeded.box = sys.box.with_seed(cfg.seed);
    auto record_checks = [&](const TransformRecord& r) {
        rep.add("bertrand_darboux(U)", r.bertrand_darboux.verdict, r.bertrand_darboux.max_residual,
                condition_json(r.bertrand_darboux));
        if (!r.bertrand_darboux.verdict) return;
        Json w = Json::object();
        for (const auto& [p, k] : r.instance.weights) w[p] = complex_json(k);
        Json d{{"constant", complex_json(r.instance.constant)}, {"weights", w}};
        if (!r.instance.message.empty()) d["message"] = r.instance.message;
        rep.add("potential_instance", r.instance.ok, r.instance.residual, d);
        for (const auto& st : r.symmetries) {
            Json tried = Json::array();
            for (const auto& t : st.tried)
                tried.push_back({{"variant", t.variant}, {"max_residual", t.max_residual}, {"verdict", t.verdict}});
            bool ok = !st.variant.empty();
            double res = ok ? st.report.max_residual : INFINITY;
            for (const auto& t : st.tried) res = std::min(res, t.max_residual);
            rep.add("transformed(" + st.name + ")", ok, res,
                    {{"variant", st.variant.empty() ? Json(nullptr) : Json(st.variant)}, {"tried", tried}});
        }
    };
    StackelResult r;
    try {
        r = transform(seeded, u, to);
    } catch (const StackelError& e) {
        record_checks(e.record());
        if (rep.results.empty() || rep.passed()) rep.add("transform", false, INFINITY, {{"message", e.what()}});
        return;
    }
    record_checks(r.record);
    const auto& out = r.system;
    const auto& box = out.box;
    auto opt = cfg.check();
    // off-diagonal parts
    std::vector<Identity> ids;
    for (const auto& s : sys.symmetries)
        ids.push_back({s.name, Expression::make_binary(NodeKind::Sub, quadratic_part(out.symmetry(s.name))[0][1],
                                                       quadratic_part(s.obs)[0][1])});
    auto a12 = check_identities("a12_unchanged", ids, box, opt);
    rep.add("a12_unchanged", a12.verdict, a12.max_residual, condition_json(a12));
    try {
        auto b0 = potential_ratio(sys.coords, sys.potential, box, opt);
        auto b1 = potential_ratio(out.coords, out.potential, box, opt);
        auto c = check_identities("b1_unchanged", {{"B1", Expression::make_binary(NodeKind::Sub, b1.b, b0.b)}}, box, opt);
        bool ok = c.verdict && b0.roles == b1.roles;
        rep.add("b1_unchanged", ok, c.max_residual,
                {{"B1", to_string(b0.b)}, {"transformed_B1", to_string(b1.b)}, {"report", condition_json(c)}});
    } catch (const ConditionError&) {
    }
    // inverse by 1/U
    try {
        auto back = transform(out, div(Expression::integer(1), u), to);
        std::vector<Identity> inv;
        if (sys.conformal() && back.system.conformal())
            inv.push_back({"lambda", Expression::make_binary(NodeKind::Sub, back.system.lambda, sys.lambda)});
        for (int a = 0; a < 2; ++a)
            for (int b = a; b < 2; ++b)
                inv.push_back({"g" + std::to_string(a + 1) + std::to_string(b + 1),
                               Expression::make_binary(NodeKind::Sub, back.system.g[a][b], sys.g[a][b])});
        auto c = check_identities("inverse", inv, box, opt);
        rep.add("inverse", c.verdict, c.max_residual, condition_json(c));
    } catch (const StackelError& e) {
        rep.add("inverse", false, INFINITY, {{"message", e.what()}});
    }
    Json sj = to_json(out);
    rep.add("transformed_system", true, 0.0, {{"new_parameter", r.record.new_parameter}, {"system", sj}});
}

inline Json triple_json(const DualTriple& t) {
    return {{"mu", to_string(t.mu)}, {"a12", to_string(t.a12)}, {"B", t.b.valid() ? Json(to_string(t.b)) : Json(nullptr)}};
}

inline void add_duality(const DualityResult& d, Report& rep) {
    rep.add("duality_conditions_pre", d.pre.verdict, d.pre.max_residual, condition_json(d.pre));
    rep.add("duality_conditions_post", d.post.verdict, d.post.max_residual, condition_json(d.post));
    Json det = condition_json(d.involution);
    det["coordinates"] = {d.roles[0], d.roles[1]};
    det["original"] = triple_json(d.original);
    det["dual"] = triple_json(d.dual);
    rep.add("duality_involution", d.involution.verdict, d.involution.max_residual, det);
}

inline Json kv_json(const KillingVectorResult& kv) {
    Json j;
    j["branch"] = kv.branch;
    j["roles"] = {kv.roles[0], kv.roles[1]};
    j["constructed"] = kv.constructed;
    if (kv.symbolic) {
        Json t = Json::object();
        for (const auto& [m, c] : kv.symbolic->terms()) t[to_string(m)] = to_string(c);
        j["symbolic"] = t;
    }
    j["grid_points"] = kv.grid.size();
    j["path_agreement"] = kv.path_agreement;
    j["report"] = condition_json(kv.report);
    return j;
}

inline void run_classify_metric(const Coords& c, const Expression& lambda, const DomainBox& box, const RunConfig& cfg,
                                Report& rep) {
    auto cur = curvature_invariants(c, lambda, box, cfg.check());
    Json d;
    d["kind"] = "info";
    d["constant_curvature"] = cur.constant;
    d["special_chart"] = cur.special_chart;
    if (cur.k1.valid()) d["K1"] = to_string(cur.k1);
    if (cur.k2.valid()) d["K2"] = to_string(cur.k2);
    d["gaussian_curvature"] = to_string(cur.gaussian);
    d["gradient"] = condition_json(cur.report);
    rep.add("curvature", true, cur.report.max_residual, d);
}

inline void run_classify(const SystemDef& sys, const RunConfig& cfg, Report& rep) {
    auto opt = cfg.check();
    auto box = sys.box.with_seed(cfg.seed);
    if (!sys.conformal()) {
        auto cur = curvature_invariants(sys, opt);
        rep.add("curvature", true, cur.report.max_residual,
                {{"kind", "info"},
                 {"constant_curvature", cur.constant},
                 {"gaussian_curvature", to_string(cur.gaussian)},
                 {"gradient", condition_json(cur.report)},
                 {"note", "non-conformal chart: the L and K invariants need a conformal factor"}});
        return;
    }
    run_classify_metric(sys.coords, sys.lambda, box, cfg, rep);
    Expression a12 = symmetry_a12(sys, opt);
    if (a12.valid()) {
        auto inv = compute_invariants(sys.coords, sys.lambda, a12);
        Json d{{"kind", "info"}, {"a12", to_string(a12)}};
        for (const auto& n : {"L1", "L2"}) {
            d[n] = to_string(inv.at(n));
            d[std::string(n) + "_vanishes"] = identically_zero(inv.at(n), box, opt);
        }
        rep.add("invariants", true, 0.0, d);
    }
    bool has_potential = !identically_zero(sys.potential, box, opt) && sys.parameters.size() == 1;
    if (!has_potential) return;
    OneParamResult op;
    try {
        op = one_param_coeffs(sys.coords, sys.potential, sys.lambda, box, opt);
    } catch (const ConditionError& e) {
        rep.add("one_param", true, 0.0, {{"kind", "info"}, {"note", e.what()}});
        return;
    }
    rep.add("one_param", op.report.verdict, op.report.max_residual,
            {{"roles", {op.roles[0], op.roles[1]}},
             {"branch", op.branch},
             {"B1", to_string(op.b1)},
             {"B12", to_string(op.b12)},
             {"B22", to_string(op.b22)},
             {"B22_source", op.b22_source},
             {"report", condition_json(op.report)}});
    auto kv = killing_vector_analysis(sys.coords, op.b1, sys.lambda, sys.potential, box, opt);
    Json kd = kv_json(kv);
    kd["kind"] = "info";
    rep.add("killing_vector", true, kv.report.max_residual, kd);
}

struct TrajectoryArgs {
    std::vector<double> x0;
    double dt = 1e-3;
    double t_end = 10.0;
    std::string method = "rk4";
    double drift_tol = 1e-6;
    std::string csv;
};

inline void run_trajectory(const SystemDef& sys, const TrajectoryArgs& a, Report& rep) {
    State init = default_initial(sys);
    if (!a.x0.empty()) {
        if (a.x0.size() != 4) throw UsageError("--x0 needs four values x,y,p1,p2");
        init = {a.x0[0], a.x0[1], a.x0[2], a.x0[3]};
    }
    auto tr = integrate(sys, init, a.dt, a.t_end, parse_method(a.method));
    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        if (!f) throw UsageError("cannot write '" + a.csv + "'");
        tr.write_csv(f);
    }
    const auto& last = tr.states.back();
    rep.add("integration", !tr.aborted, 0.0,
            {{"method", tr.method},
             {"dt", tr.dt},
             {"states", tr.states.size()},
             {"t_final", tr.t.back()},
             {"final_state", {last[0], last[1], last[2], last[3]}},
             {"message", tr.message}});
    for (const auto& d : conservation_drift(sys, tr))
        rep.add("drift(" + d.name + ")", d.max_drift < a.drift_tol, d.max_drift,
                {{"initial_value", d.initial}, {"tol", a.drift_tol}});
}

// ---------------------------------------------------------- entry point

inline std::vector<double> split_numbers(const std::string& s) {
    std::vector<double> r;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            r.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not a number: '" + item + "'");
        }
    }
    return r;
}

inline std::uint64_t env_seed(std::uint64_t fallback) {
    const char* v = std::getenv("QUADRALG_SEED");
    if (!v || !*v) return fallback;
    try {
        std::size_t used = 0;
        auto s = std::stoull(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument(v);
        return s;
    } catch (const std::exception&) {
        throw UsageError(std::string("QUADRALG_SEED is not an unsigned integer: '") + v + "'");
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Verification workbench for second-order superintegrable systems", "quadralg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    RunConfig cfg;
    std::optional<std::uint64_t> seed_opt;
    std::string system_ref, u_text, lambda_text, coords_text = "x,y", mu_text, a12_text, b_text, x0_text;
    TrajectoryArgs traj;

    auto common = [&](CLI::App* s) {
        s->add_option("--samples", cfg.samples, "sample points per check")->check(CLI::PositiveNumber);
        s->add_option("--tol", cfg.tol, "relative residual tolerance")->check(CLI::PositiveNumber);
        s->add_option("--seed", seed_opt, "sampling seed (default: QUADRALG_SEED or built-in)");
        s->add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber);
        s->add_option("--out", cfg.out, "write the report here instead of standard output");
    };
    auto sub = [&](const char* name, const char* desc, bool needs_system) {
        auto* s = app.add_subcommand(name, desc);
        auto* o = s->add_option("system", system_ref, "built-in name or system file");
        if (needs_system) o->required();
        common(s);
        return s;
    };
    auto* verify = sub("verify", "check every declared symmetry", true);
    auto* algebra = sub("algebra", "closure table of the symmetry algebra", true);
    auto* cas = sub("casimir", "fourth-order relation among the generators", true);
    auto* stk = sub("stackel", "Stackel transform by a potential instance U", true);
    stk->add_option("--u", u_text, "the instance U")->required();
    auto* dual = sub("dual", "metric/symmetry duality", false);
    dual->add_option("--mu", mu_text, "conformal factor of an explicit triple");
    dual->add_option("--a12", a12_text, "a12 of an explicit triple");
    dual->add_option("--b", b_text, "B of an explicit triple");
    dual->add_option("--coords", coords_text, "coordinate names of an explicit triple");
    auto* cls = sub("classify", "curvature, invariants, 1-parameter analysis and Killing vector", false);
    cls->add_option("--lambda", lambda_text, "classify a bare conformal factor");
    cls->add_option("--coords", coords_text, "coordinate names for --lambda");
    auto* trj = sub("trajectory", "integrate on the real slice and measure drift", true);
    trj->add_option("--x0", x0_text, "initial state x,y,p1,p2");
    trj->add_option("--dt", traj.dt, "step size")->check(CLI::PositiveNumber);
    trj->add_option("--t-end", traj.t_end, "final time")->check(CLI::NonNegativeNumber);
    trj->add_option("--method", traj.method, "rk4 or leapfrog")->check(CLI::IsMember({"rk4", "leapfrog"}));
    trj->add_option("--drift-tol", traj.drift_tol, "drift tolerance")->check(CLI::PositiveNumber);
    trj->add_option("--csv", traj.csv, "write the trajectory as CSV");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << (e.get_name() == "CallForVersion" ? std::string(tool_version) + "\n" : app.help());
            return exit_pass;
        }
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    }

    Report rep;
    CLI::App* chosen = app.get_subcommands().front();
    std::string name = chosen->get_name();
    try {
        cfg.seed = seed_opt ? *seed_opt : env_seed(cfg.seed);
        rep.config["subcommand"] = name;
        rep.config["seed"] = cfg.seed;
        rep.config["samples"] = cfg.samples;
        rep.config["tol"] = cfg.tol;
        rep.config["threads"] = cfg.threads;

        auto coords_of = [&]() {
            auto p = coords_text.find(',');
            if (p == std::string::npos) throw UsageError("--coords needs two names, e.g. x,y");
            return Coords{coords_text.substr(0, p), coords_text.substr(p + 1)};
        };
        auto load = [&]() {
            auto s = resolve_system(system_ref);
            rep.system = system_json(s, system_ref);
            return s;
        };

        if (chosen == verify) {
            run_verify(load(), cfg, rep);
        } else if (chosen == algebra) {
            run_algebra(load(), cfg, rep);
        } else if (chosen == cas) {
            run_casimir(load(), cfg, rep);
        } else if (chosen == stk) {
            rep.config["u"] = u_text;
            run_stackel(load(), u_text, cfg, rep);
        } else if (chosen == dual) {
            bool explicit_triple = !mu_text.empty() || !a12_text.empty() || !b_text.empty();
            if (explicit_triple == !system_ref.empty())
                throw UsageError("dual needs either a system or --mu, --a12 and --b");
            if (explicit_triple) {
                if (mu_text.empty() || a12_text.empty() || b_text.empty())
                    throw UsageError("an explicit triple needs --mu, --a12 and --b");
                auto c = coords_of();
                rep.config["triple"] = {{"mu", mu_text}, {"a12", a12_text}, {"B", b_text}};
                rep.system = {{"name", "triple"}, {"coordinates", {c[0], c[1]}}};
                DomainBox box;
                box.seed = cfg.seed;
                add_duality(duality_analysis(c, {parse(mu_text), parse(a12_text), parse(b_text)}, box, cfg.check()),
                            rep);
            } else {
                auto s = load();
                auto opt = cfg.check();
                s.box = s.box.with_seed(cfg.seed);
                add_duality(system_duality(s, opt), rep);
            }
        } else if (chosen == cls) {
            if (lambda_text.empty() == system_ref.empty())
                throw UsageError("classify needs either a system or --lambda");
            if (!lambda_text.empty()) {
                auto c = coords_of();
                rep.config["lambda"] = lambda_text;
                rep.system = {{"name", "metric"}, {"coordinates", {c[0], c[1]}}, {"lambda", lambda_text}};
                DomainBox box;
                box.seed = cfg.seed;
                run_classify_metric(c, parse(lambda_text), box, cfg, rep);
            } else {
                run_classify(load(), cfg, rep);
            }
        } else if (chosen == trj) {
            if (!x0_text.empty()) traj.x0 = split_numbers(x0_text);
            rep.config["x0"] = x0_text;
            rep.config["dt"] = traj.dt;
            rep.config["t_end"] = traj.t_end;
            rep.config["method"] = traj.method;
            run_trajectory(load(), traj, rep);
        }
    } catch (const UsageError& e) {
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    } catch (const CatalogError& e) {
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    } catch (const ExpressionError& e) {
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    } catch (const DualityError& e) {
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    } catch (const DynamicsError& e) {
        err << "quadralg: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "quadralg: " << name << " failed: " << e.what() << "\n";
        return exit_usage;
    }

    auto text = dump(rep.to_json());
    if (cfg.out.empty()) {
        out << text;
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f) {
            err << "quadralg: cannot write '" << cfg.out << "'\n";
            return exit_usage;
        }
        f << text;
    }
    for (const auto& c : rep.results)
        if (!c.verdict) err << "quadralg: check failed: " << c.check << " (max residual " << c.max_residual << ")\n";
    return rep.passed() ? exit_pass : exit_fail;
}

}  // namespace quadralg::cli
