#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "quadralg/expr.hpp"

namespace quadralg {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct Rect {
    Interval re{0.5, 1.5};
    Interval im{-0.5, 0.5};
};

class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sampling region for coordinates, parameters and momenta.
struct DomainBox {
    std::map<std::string, Rect> rects;
    Rect fallback{{0.5, 1.5}, {-0.5, 0.5}};
    Rect momentum{{-1.5, 1.5}, {-1.5, 1.5}};
    double cap = 1e12;
    std::uint64_t seed = 20091u;

    const Rect& rect(const std::string& name) const {
        auto it = rects.find(name);
        if (it != rects.end()) return it->second;
        if (name == "p1" || name == "p2") return momentum;
        return fallback;
    }
    DomainBox with_seed(std::uint64_t s) const {
        DomainBox b = *this;
        b.seed = s;
        return b;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream per (seed, stream, index, attempt).
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, std::uint64_t attempt)
        : gen_(splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index) ^ attempt)) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 gen_;
};

inline std::vector<Complex> draw_point(const DomainBox& box, const std::vector<std::string>& symbols,
                                       RandomStream& rng) {
    std::vector<Complex> p;
    p.reserve(symbols.size());
    for (const auto& s : symbols) {
        const Rect& r = box.rect(s);
        double re = rng.uniform(r.re.lo, r.re.hi);
        double im = rng.uniform(r.im.lo, r.im.hi);
        p.emplace_back(re, im);
    }
    return p;
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    if (threads <= 1 || n < 2) {
        for (std::size_t k = 0; k < n; ++k) f(k);
        return;
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t k = t; k < n; k += threads) f(k);
        });
    for (auto& th : pool) th.join();
}

inline bool acceptable(Complex v, double cap) {
    return std::isfinite(v.real()) && std::isfinite(v.imag()) && std::abs(v) <= cap;
}

struct SampleOptions {
    std::size_t samples = 64;
    std::uint64_t stream = 0;
    int max_attempts = 16;
    unsigned threads = 1;
};

struct SampleOutcome {
    bool accepted = false;
    int draws = 0;
    std::vector<Complex> point;
    std::vector<Complex> values;
};

// Evaluates prog at opts.samples independent points, resampling a point when
// any output is non-finite or exceeds the magnitude cap.
inline std::vector<SampleOutcome> sample_program(const Program& prog, const DomainBox& box, const SampleOptions& opts) {
    std::vector<SampleOutcome> out(opts.samples);
    parallel_for(opts.samples, opts.threads, [&](std::size_t k) {
        std::vector<Complex> scratch;
        SampleOutcome& o = out[k];
        o.values.resize(prog.output_count());
        for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
            RandomStream rng(box.seed, opts.stream, k, static_cast<std::uint64_t>(attempt));
            o.point = draw_point(box, prog.symbols(), rng);
            ++o.draws;
            prog.run(o.point, o.values, scratch);
            bool ok = std::all_of(o.values.begin(), o.values.end(), [&](Complex v) { return acceptable(v, box.cap); });
            if (ok) {
                o.accepted = true;
                return;
            }
        }
    });
    return out;
}

struct CheckOptions {
    std::size_t samples = 64;
    double tol = 1e-8;
    // terms smaller than this are not used to scale a residual up
    double scale_floor = 1e-6;
    unsigned threads = 1;
    std::uint64_t stream = 0;
    int max_attempts = 16;
};

struct ComponentResidual {
    std::string name;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    bool verdict = false;
};

struct ConditionReport {
    std::string name;
    std::vector<double> residuals;  // per accepted sample, max over components
    double max_residual = 0.0;
    double mean_residual = 0.0;
    std::size_t requested = 0;
    std::size_t accepted = 0;
    std::size_t rejected_draws = 0;
    double acceptance_rate = 0.0;
    double tol = 1e-8;
    bool verdict = false;
    std::vector<ComponentResidual> components;
    std::string note;

    const ComponentResidual* component(const std::string& n) const {
        for (const auto& c : components)
            if (c.name == n) return &c;
        return nullptr;
    }
};

struct Identity {
    std::string name;
    Expression expr;  // should vanish identically
};

// Relative residual of a sum: |sum of terms| / max(max |term|, floor).
// Identities are split with expanded_terms before this is applied.
inline double relative_residual(std::span<const Complex> terms, double floor) {
    Complex s(0.0, 0.0);
    double scale = floor;
    for (auto t : terms) {
        s += t;
        scale = std::max(scale, std::abs(t));
    }
    return std::abs(s) / scale;
}

inline ConditionReport check_identities(const std::string& name, const std::vector<Identity>& ids,
                                        const DomainBox& box, const CheckOptions& opt) {
    ConditionReport rep;
    rep.name = name;
    rep.requested = opt.samples;
    rep.tol = opt.tol;
    std::vector<Expression> outputs;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto& id : ids) {
        auto terms = expanded_terms(id.expr);
        if (terms.empty()) terms.push_back(Expression::integer(0));
        ranges.emplace_back(outputs.size(), terms.size());
        outputs.insert(outputs.end(), terms.begin(), terms.end());
    }
    Program prog(outputs);
    SampleOptions so{opt.samples, opt.stream, opt.max_attempts, opt.threads};
    auto outcomes = sample_program(prog, box, so);

    std::vector<double> comp_max(ids.size(), 0.0), comp_sum(ids.size(), 0.0);
    for (const auto& o : outcomes) {
        rep.rejected_draws += static_cast<std::size_t>(o.draws - (o.accepted ? 1 : 0));
        if (!o.accepted) continue;
        ++rep.accepted;
        double worst = 0.0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto [start, len] = ranges[i];
            double r = relative_residual(std::span<const Complex>(o.values).subspan(start, len), opt.scale_floor);
            comp_max[i] = std::max(comp_max[i], r);
            comp_sum[i] += r;
            worst = std::max(worst, r);
        }
        rep.residuals.push_back(worst);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ComponentResidual c;
        c.name = ids[i].name;
        c.max_residual = comp_max[i];
        c.mean_residual = rep.accepted ? comp_sum[i] / static_cast<double>(rep.accepted) : 0.0;
        c.verdict = rep.accepted > 0 && c.max_residual < opt.tol;
        rep.components.push_back(c);
    }
    for (double r : rep.residuals) {
        rep.max_residual = std::max(rep.max_residual, r);
        rep.mean_residual += r;
    }
    if (rep.accepted) rep.mean_residual /= static_cast<double>(rep.accepted);
    rep.acceptance_rate = opt.samples ? static_cast<double>(rep.accepted) / static_cast<double>(opt.samples) : 0.0;
    bool enough = 2 * rep.accepted >= opt.samples && rep.accepted > 0;
    if (!enough) rep.note = "domain too singular: too few accepted samples";
    rep.verdict = enough && rep.max_residual < opt.tol;
    return rep;
}

struct EquivalenceResult {
    bool equivalent = false;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    std::size_t accepted = 0;
    std::size_t rejected_draws = 0;
    explicit operator bool() const { return equivalent; }
};

inline EquivalenceResult equivalent(const Expression& e1, const Expression& e2, const DomainBox& box,
                                    std::size_t samples = 64, double tol = 1e-8, unsigned threads = 1) {
    if (samples < 1) throw DomainError("equivalent: samples must be at least 1");
    CheckOptions opt;
    opt.samples = samples;
    opt.tol = tol;
    opt.threads = threads;
    // both sides' terms take part in scaling the residual
    auto rep = check_identities("equivalent", {{"difference", Expression::make_binary(NodeKind::Sub, e1, e2)}}, box, opt);
    if (2 * rep.accepted < samples || rep.accepted == 0)
        throw DomainError("domain too singular: only " + std::to_string(rep.accepted) + " of " +
                          std::to_string(samples) + " samples accepted");
    EquivalenceResult r;
    r.max_residual = rep.max_residual;
    r.mean_residual = rep.mean_residual;
    r.accepted = rep.accepted;
    r.rejected_draws = rep.rejected_draws;
    r.equivalent = rep.verdict;
    return r;
}

}  // namespace quadralg
