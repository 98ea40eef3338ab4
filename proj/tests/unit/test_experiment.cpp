#include "bsdecert/error.hpp"
#include "bsdecert/experiment.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace bsdecert;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("bsdecert_test_" + name);
    fs::remove_all(dir);
    return dir;
}

Error config_failure(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e;
    }
    ADD_FAILURE() << "accepted: " << text;
    return Error(ErrorKind::Config, "", "");
}

const char* kRemark7 = R"({"generator": {"name": "remark7"}, "terminal": {"kind": "constant", "value": 1.0},
    "grid": {"T_star": 10.0, "M": 50}, "ensemble": {"P": 1000, "seed": 7}, "solver": {"n_max": 10}})";

}  // namespace

TEST(Config, DefaultsResolved) {
    auto c = parse_config("{}");
    EXPECT_EQ(c.generator, "example1");
    EXPECT_EQ(c.grid.M, 50u);
    EXPECT_EQ(c.ensemble.P, 10000u);
    EXPECT_EQ(c.solver.basis.kind, RegressionBasis::Kind::Polynomial);
    EXPECT_EQ(c.solver.basis.degree, 3u);
    EXPECT_EQ(c.output_dir, "bsdecert_out");
}

TEST(Config, RoundTripThroughCanonicalJson) {
    auto c = parse_config(kRemark7);
    auto again = parse_config(config_json(c));
    EXPECT_EQ(config_json(c), config_json(again));
    EXPECT_EQ(config_hash(c), config_hash(again));
    auto from_file = parse_config(config_file(c));
    EXPECT_EQ(config_json(c), config_json(from_file));
}

TEST(Config, HashIgnoresOutputDirOnly) {
    auto a = parse_config(kRemark7);
    auto b = a;
    b.output_dir = "/somewhere/else";
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    b.ensemble.seed += 1;
    EXPECT_NE(config_hash(a), config_hash(b));
    auto c = a;
    c.solver.tol_sp *= 2.0;
    EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, HashIsKeyOrderIndependent) {
    auto a = parse_config(R"({"p": 2.0, "grid": {"M": 20, "T": 2.0}})");
    auto b = parse_config(R"({"grid": {"T": 2.0, "M": 20}, "p": 2.0})");
    EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(config_failure(R"({"grid": {"Mx": 3}})").field(), "grid.Mx");
    EXPECT_EQ(config_failure(R"({"solver": {"basis": "spline"}})").field(), "solver.basis");
    EXPECT_EQ(config_failure(R"({"p": 0.5})").field(), "p");
    EXPECT_EQ(config_failure(R"({"ensemble": {"P": -3}})").field(), "ensemble.P");
    EXPECT_EQ(config_failure(R"({"terminal": {"kind": "square"}})").field(), "terminal.kind");
    EXPECT_EQ(config_failure(R"({"grid": {"M": "fifty"}})").field(), "grid.M");
    EXPECT_EQ(config_failure("{not json").kind(), ErrorKind::Config);
    EXPECT_EQ(config_failure(R"({"generator": {"name": "nope"}})").field(), "generator.name");
}

TEST(Config, LoadMissingFile) {
    try {
        load_config("/nonexistent/bsdecert.json");
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_EQ(exit_code_for(e), 2);
    }
}

TEST(Format, SeventeenDigits) {
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(format_double(-2.5e-300), "-2.5e-300");
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(format_double(std::nan("")), "nan");
    for (double v : {0.1, 1.0 / 3.0, 2.718281828459045, 1e-17, 6.02214076e23})
        EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(ExitCodes, Mapping) {
    EXPECT_EQ(exit_code_for(Error(ErrorKind::Config, "x", "f")), 2);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::InvalidArgument, "x", "f")), 2);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::InvalidModulus, "x", "f")), 2);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::Io, "x", "f")), 2);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::GateFailed, "x", "f")), 1);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::CertificationFailed, "x", "f")), 1);
    EXPECT_EQ(exit_code_for(Error(ErrorKind::Divergence, "x", "f")), 1);
    EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
}

TEST(ErrorJson, Fields) {
    auto j = nlohmann::json::parse(error_json(Error(ErrorKind::Config, "unknown key", "grid.Mx")));
    EXPECT_EQ(j["field"], "grid.Mx");
    EXPECT_EQ(j["exit_code"], 2);
    EXPECT_TRUE(j.contains("message"));
    EXPECT_TRUE(j.contains("value"));
}

TEST(Run, SolveWritesHashedFiles) {
    auto c = parse_config(kRemark7);
    c.output_dir = scratch("solve").string();
    auto out = run_solve(c);
    ASSERT_FALSE(out.files.empty());
    const std::string tag = "# config_hash=" + config_hash(c);
    for (const auto& f : out.files) {
        const std::string body = slurp(f);
        ASSERT_FALSE(body.empty()) << f;
        if (fs::path(f).extension() == ".csv") {
            EXPECT_EQ(body.rfind(tag, 0), 0u) << f;
            EXPECT_EQ(body.find('\r'), std::string::npos);
        } else {
            EXPECT_EQ(nlohmann::json::parse(body)["config_hash"], config_hash(c)) << f;
        }
    }
    auto s = nlohmann::json::parse(out.summary_json);
    EXPECT_TRUE(s["converged"].get<bool>());
    EXPECT_NEAR(s["y0"][0].get<double>(), 1.0, 1e-10);
}

TEST(Run, RepeatIsByteIdentical) {
    auto c = parse_config(kRemark7);
    c.output_dir = scratch("repeat").string();
    auto first = run_solve(c);
    std::vector<std::string> bodies;
    for (const auto& f : first.files) bodies.push_back(slurp(f));
    auto second = run_solve(c);
    ASSERT_EQ(first.files, second.files);
    for (std::size_t i = 0; i < bodies.size(); ++i) EXPECT_EQ(bodies[i], slurp(second.files[i])) << first.files[i];
}

TEST(Run, CheckFailureIsReportedNotThrown) {
    auto c = parse_config(R"({"generator": {"name": "linear", "a": 2.0, "b": 0.0}, "ensemble": {"P": 500},
        "check": {"alpha": 1.0, "beta": 0.0, "rho": "linear", "count": 5000}})");
    c.output_dir = scratch("check").string();
    auto s = nlohmann::json::parse(run_check(c).summary_json);
    EXPECT_FALSE(s["all_pass"].get<bool>());
    bool witnessed = false;
    for (const auto& e : s["entries"])
        if (e["status"] == "fail" && e.contains("witness")) witnessed = true;
    EXPECT_TRUE(witnessed);
}

TEST(Run, ModulusDiagnose) {
    ModulusRequest r;
    r.family = "power";
    r.params = {0.5};
    r.output_dir = scratch("modulus").string();
    auto s = nlohmann::json::parse(run_modulus(r).summary_json);
    EXPECT_EQ(s["classification"], "convergent-likely");
    EXPECT_NEAR(s["I_last"].get<double>(), 2.0, 1e-9);
    r.params = {0.5, 1.0};
    try {
        run_modulus(r);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_EQ(exit_code_for(e), 2);
    }
}

TEST(Run, ZooListHasHeader) {
    const std::string csv = zoo_list_csv();
    EXPECT_EQ(csv.rfind("name,params,formula\n", 0), 0u);
    EXPECT_NE(csv.find("example1"), std::string::npos);
}
