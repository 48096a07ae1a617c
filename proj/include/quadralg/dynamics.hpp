#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "quadralg/catalog.hpp"

namespace quadralg {

// Hamilton's equations for H = g^{ij} p_i p_j + V (no factor 1/2) on the real slice.

class DynamicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using State = std::array<double, 4>;  // x, y, p1, p2

enum class Method { rk4, leapfrog };

inline const char* to_string(Method m) { return m == Method::rk4 ? "rk4" : "leapfrog"; }

inline Method parse_method(const std::string& s) {
    if (s == "rk4") return Method::rk4;
    if (s == "leapfrog" || s == "leapfrog-split") return Method::leapfrog;
    throw DynamicsError("unknown integrator '" + s + "' (rk4 or leapfrog)");
}

struct Trajectory {
    std::string system;
    std::string method;
    double dt = 0.0;
    std::vector<double> t;
    std::vector<State> states;
    bool aborted = false;
    std::string message;

    void write_csv(std::ostream& os) const {
        os << "t,x,y,p1,p2\n";
        char buf[160];
        for (std::size_t k = 0; k < states.size(); ++k) {
            const auto& s = states[k];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", t[k], s[0], s[1], s[2], s[3]);
            os << buf;
        }
    }
};

struct IntegrateOptions {
    double cap = 1e8;           // abort once any coefficient or derivative exceeds this
    double initial_cap = 1e4;   // margin required at the initial point
    double imag_tol = 1e-9;     // relative imaginary part tolerated on the real slice
    double implicit_tol = 1e-14;
    int implicit_iterations = 100;
};

// A real-valued observable compiled over (x, y, p1, p2) with parameter values substituted.
class RealFunctions {
public:
    RealFunctions() = default;
    RealFunctions(const std::vector<Expression>& outs, const Coords& c) : prog_(outs, {c[0], c[1], "p1", "p2"}) {
        for (const auto& e : outs)
            for (const auto& s : free_symbols(e))
                if (s != c[0] && s != c[1] && s != "p1" && s != "p2")
                    throw DynamicsError("symbol '" + s + "' has no value for integration");
    }
    std::size_t size() const { return prog_.output_count(); }

    // false if a value is non-finite, above cap or not real
    bool eval(const State& s, std::vector<double>& out, double cap, double imag_tol) const {
        Complex in[4] = {s[0], s[1], s[2], s[3]};
        vals_.resize(prog_.output_count());
        prog_.run(std::span<const Complex>(in, 4), vals_, scratch_);
        out.resize(vals_.size());
        for (std::size_t k = 0; k < vals_.size(); ++k) {
            Complex v = vals_[k];
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) || std::abs(v) > cap) return false;
            if (std::abs(v.imag()) > imag_tol * std::max(1.0, std::abs(v.real()))) return false;
            out[k] = v.real();
        }
        return true;
    }

private:
    Program prog_;
    mutable std::vector<Complex> vals_, scratch_;
};

// sum c_m p1^d1 p2^d2 with parameters replaced by their dynamics values
inline Expression phase_expression(const SystemDef& sys, const Observable& o) {
    std::map<std::string, Expression> values;
    for (const auto& p : sys.parameters) {
        auto it = sys.dynamics_parameters.find(p);
        if (it == sys.dynamics_parameters.end())
            throw DynamicsError("system '" + sys.name + "' has no dynamics value for parameter '" + p + "'");
        values.emplace(p, Expression::number(Complex(it->second, 0.0)));
    }
    std::vector<Expression> ts;
    auto p1 = Expression::variable("p1"), p2 = Expression::variable("p2");
    for (const auto& [m, c] : o.terms())
        ts.push_back(mul(substitute(c, values), mul(pow(p1, m.d1), pow(p2, m.d2))));
    return simplify_basic(sum(ts));
}

// (dH/dp1, dH/dp2, -dH/dx, -dH/dy)
inline RealFunctions hamilton_equations(const SystemDef& sys) {
    auto h = phase_expression(sys, sys.hamiltonian());
    const auto& c = sys.coords;
    auto d = [](const Expression& e, const std::string& v) { return simplify_basic(differentiate(e, v)); };
    return RealFunctions({d(h, "p1"), d(h, "p2"), neg(d(h, c[0])), neg(d(h, c[1]))}, c);
}

namespace detail {

inline State axpy(const State& s, double a, const State& k) {
    return {s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2], s[3] + a * k[3]};
}

class Stepper {
public:
    Stepper(const RealFunctions& f, const IntegrateOptions& o) : f_(f), o_(o) {}

    bool rhs(const State& s, State& k) {
        if (!f_.eval(s, buf_, o_.cap, o_.imag_tol)) return false;
        k = {buf_[0], buf_[1], buf_[2], buf_[3]};
        return true;
    }

    bool rk4(State& s, double h) {
        State k1, k2, k3, k4;
        if (!rhs(s, k1) || !rhs(axpy(s, h / 2, k1), k2) || !rhs(axpy(s, h / 2, k2), k3) || !rhs(axpy(s, h, k3), k4))
            return false;
        for (int i = 0; i < 4; ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        return true;
    }

    // generalized leapfrog (Stormer-Verlet for nonseparable H):
    //   p' = p - h/2 H_q(q, p')                    implicit
    //   q1 = q + h/2 (H_p(q, p') + H_p(q1, p'))    implicit
    //   p1 = p' - h/2 H_q(q1, p')
    bool leapfrog(State& s, double h) {
        State k;
        State half = s;
        if (!iterate(half, [&](const State& z, State& next) {
                if (!rhs({s[0], s[1], z[2], z[3]}, k)) return false;
                next = {s[0], s[1], s[2] + h / 2 * k[2], s[3] + h / 2 * k[3]};
                return true;
            }))
            return false;
        State k0;
        if (!rhs(half, k0)) return false;
        State q = half;
        if (!iterate(q, [&](const State& z, State& next) {
                if (!rhs({z[0], z[1], half[2], half[3]}, k)) return false;
                next = {s[0] + h / 2 * (k0[0] + k[0]), s[1] + h / 2 * (k0[1] + k[1]), half[2], half[3]};
                return true;
            }))
            return false;
        if (!rhs(q, k)) return false;
        s = {q[0], q[1], half[2] + h / 2 * k[2], half[3] + h / 2 * k[3]};
        return true;
    }

    std::string failure;

private:
    template <class F>
    bool iterate(State& z, F&& map) {
        for (int it = 0; it < o_.implicit_iterations; ++it) {
            State next;
            if (!map(z, next)) return false;
            double delta = 0, scale = 1;
            for (int i = 0; i < 4; ++i) {
                delta = std::max(delta, std::abs(next[i] - z[i]));
                scale = std::max(scale, std::abs(next[i]));
            }
            z = next;
            if (delta <= o_.implicit_tol * scale) return true;
        }
        failure = "implicit leapfrog stage did not converge";
        return false;
    }

    const RealFunctions& f_;
    const IntegrateOptions& o_;
    std::vector<double> buf_;
};

}  // namespace detail

inline Trajectory integrate(const SystemDef& sys, const State& initial, double dt, double t_end,
                            Method method = Method::rk4, const IntegrateOptions& opt = {}) {
    if (!sys.real_dynamics) throw DynamicsError("system '" + sys.name + "' is not flagged for real dynamics");
    if (!(dt > 0) || !(t_end >= 0)) throw DynamicsError("need dt > 0 and t_end >= 0");
    for (double v : initial)
        if (!std::isfinite(v)) throw DynamicsError("initial state is not finite");
    auto f = hamilton_equations(sys);
    {
        auto coeffs = phase_expression(sys, sys.hamiltonian());
        RealFunctions h({coeffs}, sys.coords);
        std::vector<double> probe;
        if (!f.eval(initial, probe, opt.initial_cap, opt.imag_tol) || !h.eval(initial, probe, opt.initial_cap, opt.imag_tol))
            throw DynamicsError("initial state is too close to a singularity of the Hamiltonian");
    }
    Trajectory tr;
    tr.system = sys.name;
    tr.method = to_string(method);
    tr.dt = dt;
    auto steps = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
    tr.t.reserve(steps + 1);
    tr.states.reserve(steps + 1);
    tr.t.push_back(0.0);
    tr.states.push_back(initial);
    detail::Stepper st(f, opt);
    State s = initial;
    for (std::size_t n = 1; n <= steps; ++n) {
        bool ok = method == Method::rk4 ? st.rk4(s, dt) : st.leapfrog(s, dt);
        if (!ok) {
            tr.aborted = true;
            tr.message = !st.failure.empty() ? st.failure
                                             : "singularity approached near t = " + detail::format_double(tr.t.back());
            break;
        }
        tr.t.push_back(static_cast<double>(n) * dt);
        tr.states.push_back(s);
    }
    return tr;
}

// ------------------------------------------------------------ drift

struct Drift {
    std::string name;
    double initial = 0.0;
    double max_drift = 0.0;  // max_t |L(t) - L(0)| / max(1, |L(0)|)
};

inline std::vector<Drift> conservation_drift(const SystemDef& sys, const Trajectory& tr,
                                             const std::vector<NamedSymmetry>& symmetries) {
    if (tr.states.empty()) throw DynamicsError("empty trajectory");
    std::vector<Expression> outs;
    for (const auto& s : symmetries) outs.push_back(phase_expression(sys, s.obs));
    RealFunctions f(outs, sys.coords);
    std::vector<Drift> res(symmetries.size());
    std::vector<double> v0, v;
    if (!f.eval(tr.states.front(), v0, INFINITY, INFINITY)) throw DynamicsError("symmetry is not finite at t = 0");
    for (std::size_t k = 0; k < res.size(); ++k) {
        res[k].name = symmetries[k].name;
        res[k].initial = v0[k];
    }
    for (const auto& s : tr.states) {
        if (!f.eval(s, v, INFINITY, INFINITY)) {
            for (auto& r : res) r.max_drift = INFINITY;
            break;
        }
        for (std::size_t k = 0; k < res.size(); ++k)
            res[k].max_drift = std::max(res[k].max_drift, std::abs(v[k] - v0[k]) / std::max(1.0, std::abs(v0[k])));
    }
    return res;
}

inline std::vector<Drift> conservation_drift(const SystemDef& sys, const Trajectory& tr) {
    return conservation_drift(sys, tr, sys.symmetries);
}

// Box centers (real parts) and a small momentum.
inline State default_initial(const SystemDef& sys) {
    auto mid = [](const Interval& i) { return 0.5 * (i.lo + i.hi); };
    return {mid(sys.box.rect(sys.coords[0]).re), mid(sys.box.rect(sys.coords[1]).re), 0.3, -0.2};
}

}  // namespace quadralg
