#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "genepide/config.hpp"

using namespace genepide;
using nlohmann::json;

namespace {

const std::vector<std::string> kConfigs = {"case1", "case2", "case3", "case4", "case5",
                                           "independent_pair", "cross_regulated", "mutual_repression"};

std::string path_of(const std::string& name) { return std::string(GENEPIDE_CONFIG_DIR) + "/" + name + ".json"; }

json raw(const std::string& name) {
    std::ifstream in(path_of(name));
    return json::parse(in);
}

}  // namespace

TEST(Config, GoldenConfigsLoadAndRoundTrip) {
    for (const auto& name : kConfigs) {
        const auto c = load_config(path_of(name));
        EXPECT_EQ(c.name, name);
        const auto back = parse_config(serialize_config(c));
        EXPECT_EQ(serialize_config(back), serialize_config(c)) << name;
        EXPECT_EQ(config_hash(back), config_hash(c)) << name;
    }
}

TEST(Config, GoldenParameters) {
    const std::vector<std::pair<double, double>> ab = {{5, 10}, {5, 30}, {10, 5}, {8, 16}, {15, 20}};
    for (std::size_t i = 0; i < ab.size(); ++i) {
        const auto c = load_config(path_of("case" + std::to_string(i + 1)));
        ASSERT_TRUE(c.is_1d());
        EXPECT_EQ(c.spec_1d(), (ModelSpec1D{ab[i].first, ab[i].second, 45, -4, 0.15}));
    }
    EXPECT_EQ(load_config(path_of("mutual_repression")).dim(), 2u);
}

TEST(Config, HashIsStableAndSensitive) {
    const auto c = load_config(path_of("case1"));
    EXPECT_EQ(config_hash(c).size(), 16u);
    EXPECT_EQ(config_hash(c), config_hash(load_config(path_of("case1"))));
    auto d = c;
    d.solver.dt = 5e-4;
    EXPECT_NE(config_hash(c), config_hash(d));
    // Key order in the file does not matter.
    const json j = raw("case1");
    std::string reordered = "{";
    bool first = true;
    for (auto it = j.rbegin(); it != j.rend(); ++it) {
        reordered += (first ? "" : ",") + json(it.key()).dump() + ":" + it.value().dump();
        first = false;
    }
    reordered += "}";
    EXPECT_EQ(config_hash(parse_config(reordered)), config_hash(c));
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
    const std::vector<std::vector<std::string>> where = {{}, {"model"}, {"grid"}, {"solver"}, {"entropy"}, {"ssa"}};
    for (const auto& path : where) {
        json j = raw("case1");
        json* o = &j;
        for (const auto& k : path) o = &(*o)[k];
        (*o)["surprise"] = 1;
        EXPECT_THROW(config_from_json(j), ConfigError) << (path.empty() ? "root" : path[0]);
    }
    json j = raw("mutual_repression");
    j["model"]["genes"][1]["input"]["typo"] = 2;
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("mutual_repression");
    j["model"]["genes"][0]["extra"] = true;
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, MissingAndMistypedFields) {
    json j = raw("case1");
    j.erase("model");
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("case1");
    j["model"].erase("a");
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("case1");
    j["solver"]["dt"] = "small";
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("case1");
    j["grid"]["cells"] = "many";
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("cross_regulated");
    j["model"]["genes"][0]["input"].erase("eps_both");
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = raw("cross_regulated");
    j["model"]["genes"][0]["input"]["kind"] = "sigmoid";
    EXPECT_THROW(config_from_json(j), ConfigError);
    EXPECT_THROW(parse_config("{ not json"), ConfigError);
    EXPECT_THROW(load_config(path_of("does_not_exist")), ConfigError);
}

TEST(Config, ValidationErrors) {
    auto base = raw("case3");
    auto expect_bad = [&](auto&& edit) {
        json j = base;
        edit(j);
        EXPECT_THROW(config_from_json(j), ConfigError) << j.dump();
    };
    expect_bad([](json& j) { j["solver"]["dt"] = 0.06; });  // beyond 0.5 / a
    expect_bad([](json& j) { j["solver"]["dt"] = -1; });
    expect_bad([](json& j) { j["solver"]["cadence"] = 1e-4; });
    expect_bad([](json& j) { j["solver"]["scheme"] = "rk4"; });
    expect_bad([](json& j) { j["solver"]["initial"] = "uniform"; });
    expect_bad([](json& j) { j["grid"]["cells"] = 4; });
    expect_bad([](json& j) { j["grid"]["cells"] = json::array({64, 64}); });
    expect_bad([](json& j) { j["model"]["epsilon"] = 0.0; });
    expect_bad([](json& j) { j["model"]["b"] = 0; });
    expect_bad([](json& j) { j["model"]["dimension"] = 4; });
    expect_bad([](json& j) { j["entropy"]["probes"] = 0; });
    expect_bad([](json& j) { j["ssa"]["bins"] = 1; });
    expect_bad([](json& j) { j["ssa"]["stride"] = 0; });
    expect_bad([](json& j) { j["solver"]["battery_t_end"] = 0; });
    auto nd = raw("mutual_repression");
    nd["model"]["genes"][0]["input"]["regulator"] = 5;
    EXPECT_THROW(config_from_json(nd), ConfigError);
    nd = raw("mutual_repression");
    nd["solver"]["splitting"] = "random";
    EXPECT_THROW(config_from_json(nd), ConfigError);
}

TEST(Config, ZeroBurstFrequencyIsAccepted) {
    json j = raw("case1");
    j["model"]["a"] = 0;
    const auto c = config_from_json(j);
    EXPECT_EQ(c.spec_1d().a, 0.0);
    j["model"]["a"] = -1;
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, AxisGridsExpandSingleCount) {
    auto c = load_config(path_of("mutual_repression"));
    c.grid.cells = {32};
    const auto g = axis_grids(c);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].cells, 32u);
    EXPECT_EQ(g[1].cells, 32u);
}
