#pragma once

// Run configuration: JSON in, JSON out. Every object is read strictly, so a
// misspelt key is an error rather than a silently ignored default.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "genepide/fiber.hpp"
#include "genepide/model.hpp"
#include "genepide/solvernd.hpp"

namespace genepide {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridBlock {
    double x_max = 0.0;                 // 0 selects the automatic extent
    std::vector<std::size_t> cells{2048};  // one entry per axis, or one for all
    bool hybrid = true;
    double first_ratio = 1e-6;
    double tail = 1e-12;  // nD: gamma tail mass beyond x_max
    bool operator==(const GridBlock&) const = default;
};

struct SolverBlock {
    double dt = 1e-3;
    double t_end = 30.0;
    double cadence = 0.1;
    std::string scheme = "heun";     // heun | strang | lie
    std::string splitting = "lie";   // nD: lie | strang | symmetric
    std::string initial = "gamma";   // gamma | stationary
    double stationary_tolerance = 1e-6;
    double t_max = 1000.0;
    double battery_t_end = 5.0;  // horizon of the paired-run invariant battery
    bool operator==(const SolverBlock&) const = default;
};

struct EntropyBlock {
    std::size_t probes = 500;
    std::uint64_t seed = 12345;
    double min_r2 = 0.99;
    bool operator==(const EntropyBlock&) const = default;
};

struct SsaBlock {
    std::size_t samples = 100000;
    double burn_in = 50.0;
    double stride = 1.0;
    std::uint64_t seed = 1;
    std::size_t bins = 50;
    bool operator==(const SsaBlock&) const = default;
};

using ModelBlock = std::variant<ModelSpec1D, ModelSpecND>;

struct RunConfig {
    std::string name = "run";
    ModelBlock model = ModelSpec1D{};
    GridBlock grid;
    SolverBlock solver;
    EntropyBlock entropy;
    SsaBlock ssa;
    std::string output = "out";

    bool is_1d() const { return std::holds_alternative<ModelSpec1D>(model); }
    const ModelSpec1D& spec_1d() const { return std::get<ModelSpec1D>(model); }
    const ModelSpecND& spec_nd() const { return std::get<ModelSpecND>(model); }
    std::size_t dim() const { return is_1d() ? 1 : spec_nd().dim(); }
    bool operator==(const RunConfig&) const = default;
};

inline SplitScheme parse_scheme(const std::string& s) {
    if (s == "heun") return SplitScheme::Heun;
    if (s == "strang") return SplitScheme::Strang;
    if (s == "lie") return SplitScheme::Lie;
    throw ConfigError("solver.scheme must be heun, strang or lie, got '" + s + "'");
}

inline AxisSplitting parse_splitting(const std::string& s) {
    if (s == "lie") return AxisSplitting::Lie;
    if (s == "strang") return AxisSplitting::Strang;
    if (s == "symmetric") return AxisSplitting::Symmetric;
    throw ConfigError("solver.splitting must be lie, strang or symmetric, got '" + s + "'");
}

namespace detail {

using nlohmann::json;

/// Reads fields of one JSON object and rejects keys nobody asked for.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out, bool required = false) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            if (required) throw ConfigError(path_ + "." + key + " is required");
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path_ + "." + key + " has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown key " + path_ + "." + k);
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline InputFunction parse_input(const json& j, const std::string& path) {
    StrictObject o(j, path);
    std::string kind;
    o.get("kind", kind, true);
    InputFunction out;
    if (kind == "constant") {
        out = input::Constant{};
    } else if (kind == "hill") {
        input::UnivariateHill f;
        o.get("K", f.K, true);
        o.get("H", f.H, true);
        o.get("epsilon", f.epsilon, true);
        o.get("argument", f.argument);
        out = f;
    } else if (kind == "repressor") {
        input::BivariateRepressor f;
        o.get("K", f.K, true);
        o.get("H", f.H, true);
        o.get("epsilon", f.epsilon, true);
        o.get("regulator", f.regulator, true);
        out = f;
    } else if (kind == "paired") {
        input::BivariatePaired f;
        o.get("own", f.own, true);
        o.get("partner", f.partner, true);
        o.get("K_own", f.K_own, true);
        o.get("H_own", f.H_own, true);
        o.get("K_partner", f.K_partner, true);
        o.get("H_partner", f.H_partner, true);
        o.get("eps_both", f.eps_both, true);
        o.get("eps_partner", f.eps_partner, true);
        o.get("eps_own", f.eps_own, true);
        out = f;
    } else {
        throw ConfigError(path + ".kind must be constant, hill, repressor or paired, got '" + kind + "'");
    }
    o.finish();
    return out;
}

inline json input_to_json(const InputFunction& c) {
    return std::visit(
        [](const auto& f) -> json {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return {{"kind", "constant"}};
            } else if constexpr (std::is_same_v<T, input::UnivariateHill>) {
                return {{"kind", "hill"}, {"K", f.K}, {"H", f.H}, {"epsilon", f.epsilon}, {"argument", f.argument}};
            } else if constexpr (std::is_same_v<T, input::BivariateRepressor>) {
                return {{"kind", "repressor"}, {"K", f.K}, {"H", f.H}, {"epsilon", f.epsilon}, {"regulator", f.regulator}};
            } else {
                return {{"kind", "paired"},        {"own", f.own},          {"partner", f.partner},
                        {"K_own", f.K_own},        {"H_own", f.H_own},      {"K_partner", f.K_partner},
                        {"H_partner", f.H_partner}, {"eps_both", f.eps_both}, {"eps_partner", f.eps_partner},
                        {"eps_own", f.eps_own}};
            }
        },
        c);
}

inline ModelBlock parse_model(const json& j) {
    StrictObject o(j, "model");
    std::size_t dim = 1;
    o.get("dimension", dim, true);
    if (dim == 1) {
        ModelSpec1D s;
        o.get("a", s.a, true);
        o.get("b", s.b, true);
        o.get("K", s.K);
        o.get("H", s.H);
        o.get("epsilon", s.epsilon);
        o.finish();
        return s;
    }
    if (dim > kMaxDim) throw ConfigError("model.dimension must be at most 3");
    ModelSpecND s;
    const json* genes = o.child("genes");
    if (genes == nullptr || !genes->is_array()) throw ConfigError("model.genes must be an array");
    for (std::size_t i = 0; i < genes->size(); ++i) {
        const std::string path = "model.genes[" + std::to_string(i) + "]";
        StrictObject g((*genes)[i], path);
        GeneSpec gs;
        double gamma = 1.0;
        g.get("k_m", gs.k_m, true);
        g.get("b", gs.b, true);
        g.get("gamma", gamma);
        gs.gamma = ConstantDegradation{gamma};
        if (const json* in = g.child("input")) gs.input = parse_input(*in, path + ".input");
        g.finish();
        s.genes.push_back(gs);
    }
    if (s.dim() != dim) throw ConfigError("model.dimension does not match the number of genes");
    o.finish();
    return s;
}

inline json model_to_json(const ModelBlock& m) {
    if (const auto* s = std::get_if<ModelSpec1D>(&m)) {
        return {{"dimension", 1}, {"a", s->a}, {"b", s->b}, {"K", s->K}, {"H", s->H}, {"epsilon", s->epsilon}};
    }
    const auto& s = std::get<ModelSpecND>(m);
    json genes = json::array();
    for (const auto& g : s.genes) {
        genes.push_back(
            {{"k_m", g.k_m}, {"b", g.b}, {"gamma", degradation_rate(g.gamma)}, {"input", input_to_json(g.input)}});
    }
    return {{"dimension", s.dim()}, {"genes", genes}};
}

}  // namespace detail

/// Checks the module preconditions that do not need a discretisation.
inline void validate(const RunConfig& c) {
    try {
        if (c.is_1d()) {
            // a = 0 (no bursts) is accepted here for the stochastic simulator;
            // the deterministic commands reject it.
            auto s = c.spec_1d();
            if (s.a == 0.0) s.a = 1.0;
            s.validate();
        } else {
            c.spec_nd().validate();
        }
    } catch (const ModelError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    const auto& g = c.grid;
    if (g.cells.empty() || (g.cells.size() != 1 && g.cells.size() != c.dim()))
        throw ConfigError("grid.cells needs one entry or one per axis");
    for (auto n : g.cells) {
        if (n < 8) throw ConfigError("grid.cells must be at least 8");
    }
    if (!(g.x_max >= 0.0)) throw ConfigError("grid.x_max must be >= 0");
    if (!(g.first_ratio > 0.0 && g.first_ratio < 1.0)) throw ConfigError("grid.first_ratio must lie in (0, 1)");
    if (!(g.tail > 0.0 && g.tail < 1.0)) throw ConfigError("grid.tail must lie in (0, 1)");
    const auto& s = c.solver;
    if (!(s.dt > 0.0)) throw ConfigError("solver.dt must be > 0");
    if (!(s.t_end > 0.0)) throw ConfigError("solver.t_end must be > 0");
    if (!(s.cadence >= s.dt)) throw ConfigError("solver.cadence must be >= solver.dt");
    parse_scheme(s.scheme);
    parse_splitting(s.splitting);
    if (s.initial != "gamma" && s.initial != "stationary")
        throw ConfigError("solver.initial must be gamma or stationary");
    if (!(s.stationary_tolerance > 0.0)) throw ConfigError("solver.stationary_tolerance must be > 0");
    if (!(s.t_max > 0.0)) throw ConfigError("solver.t_max must be > 0");
    if (!(s.battery_t_end > 0.0)) throw ConfigError("solver.battery_t_end must be > 0");
    if (c.is_1d() && c.spec_1d().a > 0.0 && s.dt > 0.5 / c.spec_1d().a) throw ConfigError("solver.dt exceeds 0.5 / a");
    if (!c.is_1d()) {
        double bound = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < c.dim(); ++i) bound = std::min(bound, 0.5 / c.spec_nd().frequency(i));
        if (s.dt > bound) throw ConfigError("solver.dt exceeds 0.5 / max(k_m / gamma)");
    }
    if (c.entropy.probes == 0) throw ConfigError("entropy.probes must be > 0");
    if (!(c.entropy.min_r2 > 0.0 && c.entropy.min_r2 <= 1.0)) throw ConfigError("entropy.min_r2 must lie in (0, 1]");
    if (c.ssa.samples == 0) throw ConfigError("ssa.samples must be > 0");
    if (!(c.ssa.burn_in >= 0.0)) throw ConfigError("ssa.burn_in must be >= 0");
    if (!(c.ssa.stride > 0.0)) throw ConfigError("ssa.stride must be > 0");
    if (c.ssa.bins < 2) throw ConfigError("ssa.bins must be at least 2");
    if (c.output.empty()) throw ConfigError("output must not be empty");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::StrictObject;
    RunConfig c;
    StrictObject root(j, "config");
    root.get("name", c.name);
    root.get("output", c.output);
    const auto* m = root.child("model");
    if (m == nullptr) throw ConfigError("config.model is required");
    c.model = detail::parse_model(*m);
    if (const auto* g = root.child("grid")) {
        StrictObject o(*g, "grid");
        o.get("x_max", c.grid.x_max);
        if (const auto* cells = o.child("cells")) {
            try {
                if (cells->is_array()) {
                    c.grid.cells = cells->get<std::vector<std::size_t>>();
                } else {
                    c.grid.cells = {cells->get<std::size_t>()};
                }
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("grid.cells must be a count or an array of counts");
            }
        }
        o.get("hybrid", c.grid.hybrid);
        o.get("first_ratio", c.grid.first_ratio);
        o.get("tail", c.grid.tail);
        o.finish();
    }
    if (const auto* s = root.child("solver")) {
        StrictObject o(*s, "solver");
        o.get("dt", c.solver.dt);
        o.get("t_end", c.solver.t_end);
        o.get("cadence", c.solver.cadence);
        o.get("scheme", c.solver.scheme);
        o.get("splitting", c.solver.splitting);
        o.get("initial", c.solver.initial);
        o.get("stationary_tolerance", c.solver.stationary_tolerance);
        o.get("t_max", c.solver.t_max);
        o.get("battery_t_end", c.solver.battery_t_end);
        o.finish();
    }
    if (const auto* e = root.child("entropy")) {
        StrictObject o(*e, "entropy");
        o.get("probes", c.entropy.probes);
        o.get("seed", c.entropy.seed);
        o.get("min_r2", c.entropy.min_r2);
        o.finish();
    }
    if (const auto* s = root.child("ssa")) {
        StrictObject o(*s, "ssa");
        o.get("samples", c.ssa.samples);
        o.get("burn_in", c.ssa.burn_in);
        o.get("stride", c.ssa.stride);
        o.get("seed", c.ssa.seed);
        o.get("bins", c.ssa.bins);
        o.finish();
    }
    root.finish();
    validate(c);
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    return {{"name", c.name},
            {"output", c.output},
            {"model", detail::model_to_json(c.model)},
            {"grid",
             {{"x_max", c.grid.x_max},
              {"cells", c.grid.cells},
              {"hybrid", c.grid.hybrid},
              {"first_ratio", c.grid.first_ratio},
              {"tail", c.grid.tail}}},
            {"solver",
             {{"dt", c.solver.dt},
              {"t_end", c.solver.t_end},
              {"cadence", c.solver.cadence},
              {"scheme", c.solver.scheme},
              {"splitting", c.solver.splitting},
              {"initial", c.solver.initial},
              {"stationary_tolerance", c.solver.stationary_tolerance},
              {"t_max", c.solver.t_max},
              {"battery_t_end", c.solver.battery_t_end}}},
            {"entropy", {{"probes", c.entropy.probes}, {"seed", c.entropy.seed}, {"min_r2", c.entropy.min_r2}}},
            {"ssa",
             {{"samples", c.ssa.samples},
              {"burn_in", c.ssa.burn_in},
              {"stride", c.ssa.stride},
              {"seed", c.ssa.seed},
              {"bins", c.ssa.bins}}}};
}

inline RunConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// FNV-1a of the canonical (compact, key-sorted) serialisation, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    const std::string canon = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Per-axis grid settings of an nD run.
inline std::vector<AxisGridConfig> axis_grids(const RunConfig& c) {
    std::vector<AxisGridConfig> out;
    for (std::size_t i = 0; i < c.dim(); ++i) {
        AxisGridConfig a;
        a.x_max = c.grid.x_max;
        a.cells = c.grid.cells.size() == 1 ? c.grid.cells[0] : c.grid.cells[i];
        a.hybrid = c.grid.hybrid;
        a.first_ratio = c.grid.first_ratio;
        a.tail = c.grid.tail;
        out.push_back(a);
    }
    return out;
}

}  // namespace genepide
