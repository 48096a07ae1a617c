#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "quadralg/dynamics.hpp"

using namespace quadralg;

namespace {

double max_drift(const std::vector<Drift>& ds) {
    double m = 0;
    for (const auto& d : ds) m = std::max(m, d.max_drift);
    return m;
}

double distance(const State& a, const State& b) {
    double m = 0;
    for (int i = 0; i < 4; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

const State sphere_start{0.75, 0.8, 0.3, -0.2};

}  // namespace

TEST(Integrate, FreeMotionConvention) {
    auto s = builtin("flat_free");
    for (auto m : {Method::rk4, Method::leapfrog}) {
        auto tr = integrate(s, {0, 0, 1, 0}, 0.01, 1.0, m);
        ASSERT_FALSE(tr.aborted);
        ASSERT_EQ(tr.states.size(), 101u);
        // H = p1^2 + p2^2 gives xdot = 2 p1
        EXPECT_NEAR(tr.states.back()[0], 2.0, 1e-12);
        EXPECT_NEAR(tr.states.back()[1], 0.0, 1e-15);
        EXPECT_NEAR(tr.t.back(), 1.0, 1e-15);
    }
}

TEST(Integrate, StateCount) {
    auto s = builtin("flat_free");
    EXPECT_EQ(integrate(s, {0, 0, 1, 0}, 0.3, 1.0).states.size(), 4u);
    EXPECT_EQ(integrate(s, {0, 0, 1, 0}, 0.25, 1.0).states.size(), 5u);
    EXPECT_EQ(integrate(s, {0, 0, 1, 0}, 0.1, 0.0).states.size(), 1u);
    auto tr = integrate(s, {0, 0, 1, 0}, 0.1, 1.0);
    for (std::size_t k = 1; k < tr.t.size(); ++k) EXPECT_NEAR(tr.t[k] - tr.t[k - 1], 0.1, 1e-12);
}

TEST(Integrate, CsvExport) {
    auto tr = integrate(builtin("flat_free"), {0, 0, 1, 0}, 0.5, 1.0);
    std::ostringstream os;
    tr.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t,x,y,p1,p2");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 3);
    EXPECT_NE(os.str().find("\n1,2,0,1,0\n"), std::string::npos);
}

TEST(Integrate, SphereStaysAwayFromPoles) {
    auto tr = integrate(builtin("sphere_1param"), sphere_start, 1e-3, 10.0);
    ASSERT_FALSE(tr.aborted);
    double lo = 10, hi = -10;
    for (const auto& s : tr.states) {
        lo = std::min(lo, s[0]);
        hi = std::max(hi, s[0]);
    }
    EXPECT_GT(lo, 0.05);
    EXPECT_LT(hi, std::numbers::pi / 2 - 0.05);
    EXPECT_GT(hi - lo, 0.05);  // it does oscillate
}

TEST(Integrate, Rejections) {
    EXPECT_THROW(integrate(builtin("E4"), {0.5, 0.5, 0.1, 0.1}, 1e-3, 1.0), DynamicsError);
    auto s = builtin("sphere_1param");
    EXPECT_THROW(integrate(s, {std::numbers::pi / 2, 0.5, 0.1, 0.1}, 1e-3, 1.0), DynamicsError);
    EXPECT_THROW(integrate(s, sphere_start, 0.0, 1.0), DynamicsError);
    s.dynamics_parameters.clear();
    EXPECT_THROW(integrate(s, sphere_start, 1e-3, 1.0), DynamicsError);
    EXPECT_THROW(parse_method("euler"), DynamicsError);
}

TEST(Integrate, SingularityAbortsWithPartialTrajectory) {
    // lambda = 4x, p2 = 0: x = (1 - 3t/4)^(2/3) reaches 0 at t = 4/3
    IntegrateOptions o;
    o.cap = 100;
    auto tr = integrate(builtin("darboux1_metric"), {1.0, 0.0, -1.0, 0.0}, 1e-5, 2.0, Method::rk4, o);
    EXPECT_TRUE(tr.aborted);
    EXPECT_NE(tr.message.find("singularity"), std::string::npos);
    EXPECT_GT(tr.t.back(), 1.3);
    EXPECT_LT(tr.t.back(), 4.0 / 3);
    EXPECT_LT(tr.states.back()[0], 0.01);
    EXPECT_NEAR(tr.states[50000][0], std::pow(1 - 0.75 * 0.5, 2.0 / 3), 1e-9);
}

TEST(Drift, SphereConstants) {
    auto s = builtin("sphere_1param");
    auto tr = integrate(s, sphere_start, 1e-3, 10.0);
    auto ds = conservation_drift(s, tr);
    ASSERT_EQ(ds.size(), 4u);
    for (const auto& d : ds) {
        EXPECT_LT(d.max_drift, 1e-6) << d.name;
        if (d.name == "H" || d.name == "X") EXPECT_LT(d.max_drift, 1e-8) << d.name;
    }
}

TEST(Drift, EveryRealSystem) {
    for (const auto& name : builtin_names()) {
        auto s = builtin(name);
        if (!s.real_dynamics) continue;
        auto tr = integrate(s, default_initial(s), 1e-3, 10.0);
        ASSERT_FALSE(tr.aborted) << name << ": " << tr.message;
        EXPECT_LT(max_drift(conservation_drift(s, tr)), 1e-6) << name;
    }
}

TEST(Drift, CorruptedSymmetryNegativeControl) {
    auto s = builtin("sphere_1param");
    auto tr = integrate(s, sphere_start, 1e-3, 10.0);
    for (const auto& sym : s.symmetries) {
        if (sym.name == "H") continue;
        auto bad = sym.obs;
        bad.set({2, 0}, add(bad.coefficient({2, 0}), Expression::number(Complex(1e-2, 0))));
        auto ds = conservation_drift(s, tr, {{sym.name + "_bad", bad}});
        EXPECT_GT(ds[0].max_drift, 1e-4) << sym.name;
    }
}

TEST(Drift, Rk4Order) {
    auto s = builtin("sphere_1param");
    auto ref = integrate(s, sphere_start, 1.0 / 1280, 2.0).states.back();
    double e1 = distance(integrate(s, sphere_start, 1.0 / 20, 2.0).states.back(), ref);
    double e2 = distance(integrate(s, sphere_start, 1.0 / 40, 2.0).states.back(), ref);
    EXPECT_GT(e1 / e2, 8.0) << e1 << " " << e2;
    EXPECT_LT(e1 / e2, 32.0);

    auto drift = [&](double dt) { return conservation_drift(s, integrate(s, sphere_start, dt, 10.0))[0].max_drift; };
    EXPECT_GT(drift(0.05) / drift(0.025), 8.0);
}

TEST(Drift, LeapfrogSecondOrderAndBounded) {
    auto s = builtin("sphere_1param");
    auto ref = integrate(s, sphere_start, 1.0 / 1280, 2.0).states.back();
    double e1 = distance(integrate(s, sphere_start, 1.0 / 20, 2.0, Method::leapfrog).states.back(), ref);
    double e2 = distance(integrate(s, sphere_start, 1.0 / 40, 2.0, Method::leapfrog).states.back(), ref);
    EXPECT_GT(e1 / e2, 3.0);
    EXPECT_LT(e1 / e2, 5.0);
    // energy error does not grow between t = 10 and t = 50
    auto tr = integrate(s, sphere_start, 0.01, 50.0, Method::leapfrog);
    auto early = tr;
    early.states.resize(1001);
    double d10 = conservation_drift(s, early)[0].max_drift;
    double d50 = conservation_drift(s, tr)[0].max_drift;
    EXPECT_LT(d50, 2 * d10);
}
