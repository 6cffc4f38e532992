#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "orthocal/cli.hpp"

using namespace orthocal;
using io::json;

namespace {

const std::string kFixtures = ORTHOCAL_FIXTURE_DIR;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "orthocal");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "orthocal_cli_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(ORTHOCAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

JointOffsets offsets_of(const std::string& report) {
    const auto r = io::parse_report(report);
    return r.offsets;
}

}  // namespace

TEST(Calibrate, Experiment2Nonlinear) {
    const auto o = invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "nonlinear6"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto r = io::parse_report(o.out);
    EXPECT_NEAR(r.offsets.x(), -0.53, 0.03);
    EXPECT_NEAR(r.offsets.y(), 0.59, 0.03);
    EXPECT_NEAR(r.offsets.z(), -1.76, 0.03);
    EXPECT_NEAR(r.residual_rms, 0.20, 0.01);
    EXPECT_EQ(r.residuals.front().first, "dx_y");
    EXPECT_TRUE(r.solver.converged);
    EXPECT_EQ(r.input_digest.rfind("fnv1a64:", 0), 0u);
}

TEST(Calibrate, Experiment1Linear) {
    const auto o = invoke({"calibrate", kFixtures + "/experiment1.json", "--method", "linear6"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto d = offsets_of(o.out);
    EXPECT_NEAR(d.x(), 2.27, 0.01);
    EXPECT_NEAR(d.y(), 1.66, 0.01);
    EXPECT_NEAR(d.z(), -1.40, 0.01);
}

TEST(Calibrate, WritesOutFileAndVerboseSummary) {
    const auto path = scratch("report.json").string();
    const auto o = invoke({"calibrate", kFixtures + "/experiment3.json", "--method", "linear6", "--out", path, "-v"});
    ASSERT_EQ(o.code, 0);
    EXPECT_EQ(io::read_file(path), o.out);
    EXPECT_NE(o.err.find("offsets"), std::string::npos);
}

TEST(Calibrate, MissingKeyIsInputError) {
    json doc = json::parse(io::read_file(kFixtures + "/experiment2.json"));
    doc["values"].erase("dz_x");
    const auto path = scratch("missing.json").string();
    io::write_file(path, doc.dump());
    const auto o = invoke({"calibrate", path, "--method", "linear6"});
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("dz_x"), std::string::npos);
}

TEST(Calibrate, ShapeMismatchAndUnknownMethod) {
    EXPECT_EQ(invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "linear12"}).code, 1);
    EXPECT_EQ(invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "closed-form"}).code, 1);
    EXPECT_EQ(invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "magic"}).code, 1);
    EXPECT_EQ(invoke({"calibrate", "/nonexistent.json"}).code, 1);
}

TEST(Calibrate, GeometryFileOverrides) {
    const auto geo = scratch("geometry.json").string();
    io::write_file(geo, R"({"L": 310.25, "rho_min": -80, "rho_max": 80})");
    const auto a = invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "linear6"});
    const auto b = invoke({"calibrate", kFixtures + "/experiment2.json", "--method", "linear6", "--geometry", geo});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(offsets_of(a.out).x(), offsets_of(b.out).x());
}

TEST(Simulate, ZeroOffsetsNoNoiseGiveZeros) {
    const auto o = invoke({"simulate", "--offsets", "0,0,0", "--sigma", "0"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto f = io::parse_measurement_file(o.out);
    for (double v : std::get<ReducedMeasurements>(f.values).values) EXPECT_LE(std::abs(v), 1e-12);
}

TEST(Simulate, RoundTripThroughCalibrate) {
    const auto path = scratch("sim111.json").string();
    const auto s = invoke({"simulate", "--offsets", "1,1,1", "--sigma", "0", "--method", "double-reduced", "--out", path});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto c = invoke({"calibrate", path, "--method", "nonlinear6"});
    ASSERT_EQ(c.code, 0) << c.err;
    const auto d = offsets_of(c.out);
    for (double v : d.v) EXPECT_NEAR(v, 1.0, 1e-6);

    const auto full = scratch("sim_full.json").string();
    ASSERT_EQ(invoke({"simulate", "--offsets=-2,0.5,1", "--method", "double-full", "--out", full}).code, 0);
    const auto d12 = offsets_of(invoke({"calibrate", full, "--method", "nonlinear12"}).out);
    EXPECT_NEAR(d12.x(), -2.0, 1e-6);
    EXPECT_NEAR(d12.y(), 0.5, 1e-6);
    EXPECT_NEAR(d12.z(), 1.0, 1e-6);

    const auto single = scratch("sim_single.json").string();
    ASSERT_EQ(invoke({"simulate", "--offsets", "0.05,-0.05,0.1", "--method", "single-posture", "--out", single}).code, 0);
    const auto ds = offsets_of(invoke({"calibrate", single, "--method", "closed-form"}).out);
    EXPECT_NEAR(ds.x(), 0.05, 1e-3);
    EXPECT_NEAR(ds.z(), 0.1, 1e-3);
}

TEST(Simulate, SameSeedIsByteIdentical) {
    const std::vector<std::string> args{"simulate", "--offsets", "0.3,-0.2,0.1", "--sigma", "0.01", "--seed", "77",
                                        "--repetitions", "3", "--quantize", "0.001"};
    const auto a = invoke(args);
    const auto b = invoke(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    auto c_args = args;
    c_args[6] = "78";
    EXPECT_NE(invoke(c_args).out, a.out);
}

TEST(Simulate, RepetitionsAndQuantization) {
    const auto o = invoke({"simulate", "--offsets", "0.3,-0.2,0.1", "--sigma", "0.01", "--repetitions", "4",
                           "--quantize", "0.01", "--method", "double-full"});
    ASSERT_EQ(o.code, 0) << o.err;
    const json doc = json::parse(o.out);
    ASSERT_TRUE(doc.contains("repetitions"));
    for (const auto& [key, arr] : doc["repetitions"].items()) {
        ASSERT_EQ(arr.size(), 4u) << key;
        for (const auto& v : arr) {
            const double q = v.get<double>() / 0.01;
            EXPECT_NEAR(q, std::round(q), 1e-6);
        }
    }
    const auto f = io::parse_measurement_file(o.out);
    EXPECT_EQ(f.noise->repetitions, 4);
}

TEST(Simulate, BadInputs) {
    EXPECT_EQ(invoke({"simulate", "--sigma=-1"}).code, 1);
    EXPECT_EQ(invoke({"simulate", "--offsets", "1,2"}).code, 1);
    EXPECT_EQ(invoke({"simulate", "--method", "triple"}).code, 1);
    EXPECT_EQ(invoke({"simulate", "--offsets", "50,0,0"}).code, 1);
}

TEST(Simulate, UnreachablePostureIsNamed) {
    const auto geo = scratch("long_stroke.json").string();
    io::write_file(geo, R"({"L": 310.25, "rho_min": -100, "rho_max": 300})");
    const auto o = invoke({"simulate", "--offsets", "30,0,0", "--geometry", geo});
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("posture"), std::string::npos);
}

TEST(Accuracy, Factors) {
    const auto o = invoke({"accuracy", "--sigma", "1"});
    ASSERT_EQ(o.code, 0);
    const json j = json::parse(o.out);
    EXPECT_NEAR(j["six"]["sigma_rho"].get<double>(), 1.98, 0.01);
    EXPECT_NEAR(j["twelve"]["sigma_rho"].get<double>(), 2.06, 0.01);
    EXPECT_EQ(invoke({"accuracy", "--sigma", "-1"}).code, 1);
}

TEST(MonteCarlo, SmallRunAndValidation) {
    const std::vector<std::string> args{"montecarlo", "--runs", "200", "--replications", "2", "--method", "six", "--seed", "5"};
    const auto a = invoke(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, invoke(args).out);
    const json j = json::parse(a.out);
    EXPECT_NEAR(j["report"]["pooled_std"].get<double>(), 0.0198, 0.004);
    EXPECT_EQ(j["report"]["generator"], "mt19937_64/box-muller");
    EXPECT_EQ(invoke({"montecarlo", "--runs", "0"}).code, 1);
    EXPECT_EQ(invoke({"montecarlo", "--method", "seven"}).code, 1);
    EXPECT_EQ(invoke({"montecarlo", "--reproduce", "table9"}).code, 1);
}

TEST(MonteCarlo, Table3PresetShape) {
    const auto o = invoke({"montecarlo", "--reproduce", "table3", "--runs", "100", "--replications", "2"});
    ASSERT_EQ(o.code, 0) << o.err;
    const json j = json::parse(o.out);
    ASSERT_EQ(j["rows"].size(), 2u);
    EXPECT_EQ(j["rows"][0]["method"], "nonlinear-six");
    EXPECT_EQ(j["rows"][1]["cells"].size(), 2u);
}

TEST(Sensitivity, UnitAndZeroOffsets) {
    const auto o = invoke({"sensitivity", "--offsets", "1,1,1"});
    ASSERT_EQ(o.code, 0);
    const json j = json::parse(o.out);
    ASSERT_EQ(j["rows"].size(), 12u);
    EXPECT_NEAR(j["rows"][0]["at_max"].get<double>(), 1.0, 1e-12);
    const double t1 = 0.19711363809161808;
    const double t2 = -0.3404926197319396;
    EXPECT_NEAR(j["rows"][6]["at_max"].get<double>(), 1.0 + t1, 1e-12);
    EXPECT_NEAR(j["rows"][6]["at_min"].get<double>(), 1.0 + t2, 1e-12);
    const json z = json::parse(invoke({"sensitivity", "--offsets", "0,0,0"}).out);
    for (const auto& r : z["rows"]) EXPECT_EQ(r["at_max"].get<double>(), 0.0);
}

TEST(Binary, ExitCodes) {
    EXPECT_EQ(run_binary("calibrate " + kFixtures + "/experiment2.json --method nonlinear6"), 0);
    EXPECT_EQ(run_binary("calibrate /nonexistent.json"), 1);
    EXPECT_EQ(run_binary("montecarlo --runs 0"), 1);
    EXPECT_EQ(run_binary("--bogus"), 1);
    EXPECT_EQ(run_binary("--help"), 0);
    EXPECT_EQ(run_binary(""), 1);
}

TEST(Binary, SolverFailureIsExitTwo) {
    // readings no offset set can explain push the iterate out of the model's domain
    json doc = json::parse(io::read_file(kFixtures + "/experiment2.json"));
    for (auto& [k, v] : doc["values"].items()) v = 400.0;
    const auto path = scratch("absurd.json").string();
    io::write_file(path, doc.dump());
    EXPECT_EQ(run_binary("calibrate " + path + " --method nonlinear6"), 2);
}
