#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "config.hpp"

namespace fs = std::filesystem;
using eigendrift::cli::run;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result call(std::vector<std::string> args) {
    args.insert(args.begin(), "eigendrift");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string config(const char* name) { return std::string(EIGENDRIFT_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("eigendrift_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path file(const std::string& name, const std::string& content = "") {
        const fs::path p = dir_ / name;
        if (!content.empty()) std::ofstream(p) << content;
        return p;
    }
    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(call({}).code, 1);
    EXPECT_EQ(call({"--help"}).code, 0);
    EXPECT_EQ(call({"frobnicate"}).code, 1);
    EXPECT_EQ(call({"eig"}).code, 1);
    EXPECT_EQ(call({"eig", "--config", (dir_ / "missing.ini").string()}).code, 1);
    const Result bad = call({"eig", "--config", file("bad.ini", "[problem]\nfoo = 1\n").string()});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("unknown key"), std::string::npos);
    EXPECT_TRUE(bad.out.empty());
    EXPECT_EQ(call({"eig", "--config", config("dirichlet_m_quad.ini"), "--form", "fancy"}).code, 1);
    EXPECT_EQ(call({"eig", "--config", file("both.ini", "[problem]\nD=1\n[stream]\nq=1\nr=1\n").string()}).code, 1);
    EXPECT_EQ(call({"eig", "--config", file("expr.ini", "[problem]\nm = x +\n").string()}).code, 1);
}

TEST_F(CliTest, EigJson) {
    const Result r = call({"eig", "--config", config("dirichlet_m_quad.ini"), "--D", "1e-3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    for (const char* k : {"lambda", "residual", "form", "grid_n"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_NEAR(j["lambda"].get<double>(), 4.0, 4e-3);
    const json g = json::parse(call({"eig", "--config", config("dirichlet_m_quad.ini"), "--grid", "300", "--form", "both"}).out);
    EXPECT_EQ(g["grid_n"].get<int>(), 300);
    EXPECT_TRUE(g.contains("comparison"));
}

TEST_F(CliTest, SweepCsvThenRateFit) {
    const fs::path csv = dir_ / "s.csv";
    const Result s = call({"sweep", "--config", config("powerlaw_nu05.ini"), "--out", csv.string()});
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_TRUE(s.out.empty());
    EXPECT_FALSE(fs::exists(csv.string() + ".tmp"));
    std::istringstream in(slurp(csv));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "D,grid_n,lambda,residual,form");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("9.9999999999999995e-07,", 0), 0u);
    const Result f = call({"rate-fit", csv.string(), "--model", "powerlaw"});
    ASSERT_EQ(f.code, 0) << f.err;
    EXPECT_NEAR(json::parse(f.out)["slope"].get<double>(), -1.0 / 3.0, 0.05);
    EXPECT_EQ(call({"rate-fit", csv.string(), "--model", "cubic"}).code, 1);
    EXPECT_EQ(call({"rate-fit", file("junk.csv", "a,b\n1,2\n").string()}).code, 1);
}

TEST_F(CliTest, Deterministic) {
    const fs::path a = dir_ / "a.json", b = dir_ / "b.json";
    for (const fs::path& p : {a, b}) ASSERT_EQ(call({"limit0", "--config", config("robin.ini"), "--out", p.string()}).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    const Result s1 = call({"sweep", "--config", config("stream_buffer.ini")});
    const Result s2 = call({"sweep", "--config", config("stream_buffer.ini")});
    EXPECT_EQ(s1.out, s2.out);
}

TEST_F(CliTest, Limits) {
    const json l0 = json::parse(call({"limit0", "--config", config("robin.ini")}).out);
    EXPECT_EQ(l0["limit"].get<double>(), 2.0);
    EXPECT_EQ(l0["theorem"], "robin");
    EXPECT_FALSE(l0["candidates"].empty());
    const json inf = json::parse(call({"limit0", "--config", config("dirichlet_m_quad.ini"), "--D", "1e-2"}).out);
    EXPECT_EQ(inf["limit"].get<double>(), 4.0);
    const json li = json::parse(call({"limitinf", "--config", config("robin_line.ini")}).out);
    EXPECT_EQ(li["verdict"], "finite");
    EXPECT_NEAR(li["value"].get<double>(), -9.0 / 7.0, 1e-10);
}

TEST_F(CliTest, ClassifyRobin) {
    const json j = json::parse(call({"classify-robin", "--k0", "-2", "--k1", "0"}).out);
    EXPECT_EQ(j["verdict"], "-inf");
    EXPECT_LT(j["mu1_numeric"].get<double>(), 0.0);
    const json c = json::parse(call({"classify-robin", "--config", config("robin_line.ini")}).out);
    EXPECT_EQ(c["sign"].get<int>(), 0);
    EXPECT_EQ(call({"classify-robin"}).code, 1);
}

TEST_F(CliTest, StreamCommands) {
    const json c = json::parse(call({"stream-classify", "--config", config("stream_buffer.ini")}).out);
    EXPECT_EQ(c["fate"], "persistence");
    EXPECT_EQ(c["pattern"], "b");
    const json l = json::parse(call({"stream-limits", "--config", config("stream_buffer.ini")}).out);
    ASSERT_EQ(l["rows"].size(), 3u);
    EXPECT_EQ(l["rows"][2]["large_D"], "inf");
    const json s = json::parse(call({"stream-sim", "--config", config("stream_buffer.ini"), "--format", "json"}).out);
    EXPECT_EQ(s["observed"], "persistence");
    const fs::path traj = dir_ / "t.csv";
    ASSERT_EQ(call({"stream-sim", "--config", config("stream_buffer.ini"), "--out", traj.string(), "--grid", "64"}).code, 0);
    EXPECT_EQ(slurp(traj).rfind("t,x,u\n", 0), 0u);
    EXPECT_EQ(call({"stream-sim", "--config", config("dirichlet_m_quad.ini")}).code, 1);
}

TEST(Config, Grammar) {
    using namespace eigendrift::cli;
    std::istringstream ok(
        "# comment\n[problem]\ndimension = 1\nm = (x-0.5)^2 ; trailing\nleft = robin\nleft.k = 2\nleft.beta = 1+x\n"
        "right = dirichlet\nkinks = none\n[sweep]\nD = 1e-2, 1e-3 1e-4\n");
    const Config c = parse_config(ok, "ok");
    const auto p = problem_from_config(c);
    EXPECT_EQ(p.bc[0].kind, eigendrift::BcKind::Robin);
    EXPECT_DOUBLE_EQ(p.bc[0].coefficient, 2.0);
    EXPECT_EQ(p.bc[1].kind, eigendrift::BcKind::Dirichlet);
    EXPECT_EQ(parse_number_list(*c.get("sweep", "D"), "D").size(), 3u);
    const auto bad = [](const char* text) {
        std::istringstream in(text);
        return parse_config(in, "bad");
    };
    EXPECT_THROW(bad("[problem]\nD = 1\nD = 2\n"), ConfigError);
    EXPECT_THROW(bad("[problem]\nD =\n"), ConfigError);
    EXPECT_THROW(bad("D = 1\n[problem]\n"), ConfigError);
    EXPECT_THROW(bad("[nonsense]\n"), ConfigError);
    EXPECT_THROW(bad("[sweep]\nD = 1\n"), ConfigError);
    std::istringstream robin_bad("[problem]\nleft = neumann\nleft.k = 1\n");
    EXPECT_THROW(problem_from_config(parse_config(robin_bad, "x")), ConfigError);
}
