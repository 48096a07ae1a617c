#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "quadralg/cli.hpp"

using namespace quadralg;
using Json = nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out, err;
    Json json() const { return Json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream o, e;
    int code = cli::run(args, o, e);
    return {code, o.str(), e.str()};
}

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) old_ = old;
        if (value)
            setenv(name, value, 1);
        else
            unsetenv(name);
    }
    ~ScopedEnv() {
        if (old_)
            setenv(name_, old_->c_str(), 1);
        else
            unsetenv(name_);
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

// The keywords used by docs/report.schema.json.
void validate(const Json& schema, const Json& v, const std::string& where, std::vector<std::string>& errs) {
    if (schema.contains("type")) {
        std::vector<std::string> types;
        if (schema["type"].is_array())
            for (const auto& t : schema["type"]) types.push_back(t);
        else
            types.push_back(schema["type"]);
        auto is = [&](const std::string& t) {
            if (t == "object") return v.is_object();
            if (t == "array") return v.is_array();
            if (t == "string") return v.is_string();
            if (t == "boolean") return v.is_boolean();
            if (t == "integer") return v.is_number_integer();
            if (t == "number") return v.is_number();
            if (t == "null") return v.is_null();
            return false;
        };
        if (std::none_of(types.begin(), types.end(), is)) {
            errs.push_back(where + ": wrong type");
            return;
        }
    }
    if (schema.contains("enum") && std::find(schema["enum"].begin(), schema["enum"].end(), v) == schema["enum"].end())
        errs.push_back(where + ": not in enum");
    if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>())
        errs.push_back(where + ": below minimum");
    if (schema.contains("exclusiveMinimum") && v.is_number() &&
        v.get<double>() <= schema["exclusiveMinimum"].get<double>())
        errs.push_back(where + ": not above minimum");
    if (v.is_object()) {
        for (const auto& r : schema.value("required", Json::array()))
            if (!v.contains(r.get<std::string>())) errs.push_back(where + ": missing " + r.get<std::string>());
        const auto props = schema.value("properties", Json::object());
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (props.contains(it.key()))
                validate(props[it.key()], it.value(), where + "." + it.key(), errs);
            else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false)
                errs.push_back(where + ": unknown field " + it.key());
        }
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
            errs.push_back(where + ": too few items");
        if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>())
            errs.push_back(where + ": too many items");
        if (schema.contains("items"))
            for (std::size_t k = 0; k < v.size(); ++k)
                validate(schema["items"], v[k], where + "[" + std::to_string(k) + "]", errs);
    }
}

const Json& schema() {
    static Json s = [] {
        std::ifstream f(std::string(QUADRALG_SOURCE_DIR) + "/docs/report.schema.json");
        return Json::parse(f);
    }();
    return s;
}

void expect_valid(const Outcome& o, const std::string& what) {
    ASSERT_FALSE(o.out.empty()) << what << ": " << o.err;
    std::vector<std::string> errs;
    validate(schema(), o.json(), "$", errs);
    for (const auto& e : errs) ADD_FAILURE() << what << " " << e;
}

}  // namespace

TEST(Cli, VerifySphere) {
    auto o = run({"verify", "sphere_1param"});
    EXPECT_EQ(o.code, 0) << o.err;
    auto j = o.json();
    ASSERT_EQ(j["results"].size(), 4u);
    for (const auto& r : j["results"]) {
        EXPECT_TRUE(r["verdict"].get<bool>()) << r["check"];
        EXPECT_LT(r["max_residual"].get<double>(), 1e-8);
    }
    EXPECT_EQ(j["results"][1]["check"], "symmetry(A1)");
    EXPECT_TRUE(j["results"][1]["details"].contains("bertrand_darboux"));
}

TEST(Cli, CasimirSphere) {
    auto o = run({"casimir", "sphere_1param"});
    EXPECT_EQ(o.code, 0) << o.err;
    auto fit = o.json()["results"][0]["details"]["fit"];
    EXPECT_EQ(fit["nullity"], 1);
    std::map<std::string, std::string> snapped;
    for (const auto& t : fit["terms"])
        if (!t["snapped"].is_null() && t["snapped"] != "0") snapped[t["term"]] = t["snapped"];
    std::map<std::string, std::string> expected{{"H*A1", "1"},       {"A1^2", "-1"},       {"A1*X^2", "-1"},
                                                {"A2^2", "-1"},      {"a3*H", "-1/2"},     {"a3*X^2", "-1/2"},
                                                {"a3^2", "1/4"}};
    EXPECT_EQ(snapped, expected);
}

TEST(Cli, ClassifyDarboux) {
    auto o = run({"classify", "darboux1_metric"});
    EXPECT_EQ(o.code, 0) << o.err;
    auto r = o.json()["results"][0];
    EXPECT_EQ(r["check"], "curvature");
    EXPECT_FALSE(r["details"]["constant_curvature"].get<bool>());
    EXPECT_EQ(r["details"]["kind"], "info");
    auto m = run({"classify", "--lambda", "4*x"});
    EXPECT_FALSE(m.json()["results"][0]["details"]["constant_curvature"].get<bool>());
    auto f = run({"classify", "--lambda", "1/(1 + x^2 + y^2)^2"});
    EXPECT_TRUE(f.json()["results"][0]["details"]["constant_curvature"].get<bool>());
}

TEST(Cli, DualExplicitTriple) {
    auto o = run({"dual", "--mu", "1", "--a12", "x", "--b", "0"});
    EXPECT_EQ(o.code, 0) << o.err;
    auto j = o.json();
    ASSERT_EQ(j["results"].size(), 3u);
    EXPECT_EQ(j["results"][2]["details"]["dual"]["B"], "(-i)");
    EXPECT_TRUE(j["results"][1]["verdict"].get<bool>());
    EXPECT_EQ(run({"dual", "--mu", "1", "--a12", "x"}).code, 2);
    EXPECT_EQ(run({"dual", "E4", "--mu", "1", "--a12", "x", "--b", "0"}).code, 2);
    EXPECT_EQ(run({"dual", "sphere_1param"}).code, 2);
}

TEST(Cli, StackelOutcomes) {
    auto ok = run({"stackel", "sphere_1param", "--u", "1/cos(th)^2"});
    EXPECT_EQ(ok.code, 0) << ok.err;
    auto bad = run({"stackel", "sphere_1param", "--u", "sin(th)"});
    EXPECT_EQ(bad.code, 1);
    auto j = bad.json();
    EXPECT_EQ(j["results"][0]["check"], "bertrand_darboux(U)");
    EXPECT_FALSE(j["results"][0]["verdict"].get<bool>());
    EXPECT_EQ(run({"stackel", "sphere_1param", "--u", "sin(("}).code, 2);
    EXPECT_EQ(run({"stackel", "sphere_1param"}).code, 2);
}

TEST(Cli, TrajectoryOutcomes) {
    auto csv = (std::filesystem::temp_directory_path() / "quadralg_cli_traj.csv").string();
    auto o = run({"trajectory", "flat_free", "--x0", "0,0,1,0", "--dt", "0.01", "--t-end", "1", "--csv", csv});
    EXPECT_EQ(o.code, 0) << o.err;
    auto j = o.json();
    EXPECT_EQ(j["results"][0]["details"]["states"], 101);
    EXPECT_DOUBLE_EQ(j["results"][0]["details"]["final_state"][0].get<double>(), 2.0);
    std::ifstream f(csv);
    std::string head;
    std::getline(f, head);
    EXPECT_EQ(head, "t,x,y,p1,p2");
    std::filesystem::remove(csv);
    EXPECT_EQ(run({"trajectory", "E4"}).code, 2);
    EXPECT_EQ(run({"trajectory", "flat_free", "--x0", "1,2,3"}).code, 2);
    EXPECT_EQ(run({"trajectory", "flat_free", "--method", "euler"}).code, 2);
    auto loose = run({"trajectory", "sphere_1param", "--dt", "0.2", "--drift-tol", "1e-12"});
    EXPECT_EQ(loose.code, 1);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"verify"}).code, 2);
    EXPECT_EQ(run({"verify", "no_such_system"}).code, 2);
    EXPECT_EQ(run({"verify", "sphere_1param", "--samples", "0"}).code, 2);
    EXPECT_EQ(run({"verify", "sphere_1param", "--bogus"}).code, 2);
    auto help = run({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("trajectory"), std::string::npos);
}

TEST(Cli, FileAndBuiltinInterchangeable) {
    auto a = run({"verify", "sphere_1param"}).json();
    auto b = run({"verify", std::string(QUADRALG_SYSTEMS_DIR) + "/sphere_1param.json"}).json();
    EXPECT_EQ(a["results"], b["results"]);
    EXPECT_EQ(a["system"]["name"], b["system"]["name"]);
}

TEST(Cli, OutFile) {
    auto path = (std::filesystem::temp_directory_path() / "quadralg_cli_report.json").string();
    auto o = run({"verify", "E4", "--out", path});
    EXPECT_EQ(o.code, 0);
    EXPECT_TRUE(o.out.empty());
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    EXPECT_EQ(ss.str(), run({"verify", "E4"}).out);
    std::filesystem::remove(path);
}

TEST(Cli, SeedPrecedence) {
    {
        ScopedEnv env("QUADRALG_SEED", nullptr);
        EXPECT_EQ(run({"verify", "E4"}).json()["config"]["seed"], DomainBox{}.seed);
    }
    {
        ScopedEnv env("QUADRALG_SEED", "777");
        EXPECT_EQ(run({"verify", "E4"}).json()["config"]["seed"], 777);
        EXPECT_EQ(run({"verify", "E4", "--seed", "5"}).json()["config"]["seed"], 5);
    }
    {
        ScopedEnv env("QUADRALG_SEED", "abc");
        EXPECT_EQ(run({"verify", "E4"}).code, 2);
    }
    auto a = run({"verify", "E14", "--seed", "1"}).json()["results"][1]["max_residual"];
    auto b = run({"verify", "E14", "--seed", "2"}).json()["results"][1]["max_residual"];
    EXPECT_NE(a, b);
}

TEST(Cli, ReportsDeterministic) {
    ScopedEnv env("QUADRALG_SEED", nullptr);
    for (std::vector<std::string> args : {std::vector<std::string>{"verify", "sphere_nondegenerate"},
                                          {"algebra", "sphere_1param"},
                                          {"casimir", "sphere_1param"},
                                          {"dual", "E13"},
                                          {"classify", "E14"}}) {
        auto first = run(args).out;
        EXPECT_EQ(first, run(args).out) << args[0];
        auto threaded = args;
        threaded.insert(threaded.end(), {"--threads", "3"});
        auto t = Json::parse(run(threaded).out);
        auto f = Json::parse(first);
        EXPECT_EQ(t["results"], f["results"]) << args[0];
    }
}

TEST(Cli, NumbersUseSeventeenDigits) {
    auto o = run({"verify", "E14", "--tol", "0.1"});
    EXPECT_NE(o.out.find("\"tol\": 0.10000000000000001"), std::string::npos);
    // round trip
    auto j = o.json();
    for (const auto& r : j["results"]) {
        auto v = r["max_residual"].get<double>();
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        EXPECT_EQ(std::strtod(buf, nullptr), v);
    }
}

TEST(Cli, EveryReportMatchesSchema) {
    for (const auto& name : builtin_names()) {
        auto s = builtin(name);
        expect_valid(run({"verify", name}), "verify " + name);
        expect_valid(run({"classify", name}), "classify " + name);
        if (name == "darboux1_metric")  // X = p2 only: no symmetry with a12 != 0
            EXPECT_EQ(run({"dual", name}).code, 2);
        else if (s.conformal())
            expect_valid(run({"dual", name}), "dual " + name);
        if (s.real_dynamics) expect_valid(run({"trajectory", name, "--t-end", "0.5"}), "trajectory " + name);
    }
    expect_valid(run({"algebra", "sphere_1param"}), "algebra");
    expect_valid(run({"casimir", "sphere_1param"}), "casimir");
    expect_valid(run({"stackel", "sphere_1param", "--u", "1/cos(th)^2"}), "stackel");
    expect_valid(run({"stackel", "sphere_1param", "--u", "sin(th)"}), "stackel failure");
    expect_valid(run({"dual", "--mu", "1", "--a12", "x", "--b", "0"}), "dual triple");
    expect_valid(run({"classify", "--lambda", "4*x"}), "classify metric");
}
