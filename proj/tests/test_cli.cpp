#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "genepide/config.hpp"

namespace fs = std::filesystem;
using genepide::config_hash;
using genepide::load_config;
using nlohmann::json;

namespace {

std::string config(const std::string& name) { return std::string(GENEPIDE_CONFIG_DIR) + "/" + name + ".json"; }

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(GENEPIDE_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p) != nullptr) r.out += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("genepide_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

    std::string write_config(const std::string& name, const json& j) const {
        const auto p = dir_ / (name + ".json");
        std::ofstream(p) << j.dump(2);
        return p.string();
    }

    static json raw(const std::string& name) {
        std::ifstream in(config(name));
        return json::parse(in);
    }

    fs::path dir_;
};

std::vector<std::string> lines(const fs::path& p, bool data) {
    std::ifstream in(p);
    std::vector<std::string> v;
    for (std::string s; std::getline(in, s);) {
        if ((s.rfind("#", 0) == 0) != data) v.push_back(s);
    }
    return v;
}

std::string header_value(const fs::path& p, const std::string& key) {
    for (const auto& s : lines(p, false)) {
        const std::string prefix = "# " + key + ": ";
        if (s.rfind(prefix, 0) == 0) return s.substr(prefix.size());
    }
    return {};
}

}  // namespace

TEST_F(CliTest, StationaryWritesProfileWithMetadata) {
    const auto r = run("stationary -c " + config("case1") + " -o " + out("a"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto csv = dir_ / "a" / "profile.csv";
    ASSERT_TRUE(fs::exists(csv));
    const auto resolved = load_config((dir_ / "a" / "resolved_config.json").string());
    EXPECT_EQ(header_value(csv, "config_hash"), config_hash(resolved));
    EXPECT_EQ(header_value(csv, "config"), "case1");
    EXPECT_EQ(lines(csv, true).front(), "x,density");
    EXPECT_NE(r.out.find("case 1"), std::string::npos);
}

TEST_F(CliTest, RerunsGiveIdenticalDataRows) {
    for (const char* sub : {"a", "b"}) {
        ASSERT_EQ(run("ssa -c " + config("case3") + " --samples 2000 --seed 5 -o " + out(sub)).code, 0);
    }
    for (const char* f : {"samples.csv", "hist.csv"}) {
        const auto a = lines(dir_ / "a" / f, true), b = lines(dir_ / "b" / f, true);
        EXPECT_GT(a.size(), 10u);
        EXPECT_EQ(a, b) << f;
    }
    EXPECT_EQ(header_value(dir_ / "a" / "samples.csv", "seed"), "5");
}

TEST_F(CliTest, ClassifyPrintsCase) {
    const auto r = run("classify -c " + config("case4"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("case: 4"), std::string::npos) << r.out;
    EXPECT_EQ(run("classify -c " + config("mutual_repression")).code, 2);
}

TEST_F(CliTest, SimulateWritesTraceAndSnapshots) {
    const auto r = run("simulate -c " + config("case3") + " --cells 256 --dt 0.01 --t-end 5 -o " + out("s"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto trace = lines(dir_ / "s" / "trace.csv", true);
    ASSERT_GT(trace.size(), 40u);
    EXPECT_EQ(trace.front(), "t,G2,dG2dt,D2,identity_rel,mass,umin,umax");
    EXPECT_TRUE(fs::exists(dir_ / "s" / "decay.txt"));
    EXPECT_FALSE(fs::is_empty(dir_ / "s" / "snapshots"));
}

TEST_F(CliTest, VerifyPassesOnGoldenSpec) {
    const auto r = run("verify -c " + config("case1") + " --cells 512 --dt 0.004 --t-end 5 -o " + out("v"));
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir_ / "v" / "invariants.txt"));
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
    auto j = raw("case1");
    j["solver"]["bogus"] = 1;
    EXPECT_EQ(run("stationary -c " + write_config("bad", j)).code, 2);
    EXPECT_EQ(run("stationary -c " + (dir_ / "missing.json").string()).code, 2);
    EXPECT_EQ(run("stationary -c " + config("case3") + " --dt 0.2").code, 2);
    EXPECT_EQ(run("transmogrify").code, 2);
    j = raw("case1");
    j["model"]["a"] = 0;
    EXPECT_EQ(run("simulate -c " + write_config("nobursts", j) + " -o " + out("z")).code, 2);
}

TEST_F(CliTest, UnconvergedStationaryExitsWithOne) {
    auto j = raw("mutual_repression");
    j["solver"]["t_max"] = 0.5;
    j["grid"]["cells"] = 16;
    EXPECT_EQ(run("stationary -c " + write_config("short", j) + " -o " + out("u")).code, 1);
}

TEST_F(CliTest, SsaWithoutBurstsIsPureDecay) {
    auto j = raw("case1");
    j["model"]["a"] = 0;
    const auto r = run("ssa -c " + write_config("decay", j) + " --samples 50 -o " + out("d"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = lines(dir_ / "d" / "samples.csv", true);
    ASSERT_EQ(rows.size(), 51u);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        double t = 0.0, x = 1.0;
        ASSERT_EQ(std::sscanf(rows[k].c_str(), "%lf,%lf", &t, &x), 2);
        EXPECT_EQ(x, 0.0);
    }
}

TEST_F(CliTest, DumpConfigPrintsResolvedJson) {
    const auto r = run("--dump-config stationary -c " + config("case2") + " --cells 300");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["grid"]["cells"], json::array({300}));
}
