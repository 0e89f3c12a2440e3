// Acceptance run: one PASS/FAIL line per criterion. Criteria listed with
// --expect-fail must fail; the exit status is 0 when every outcome matches.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genepide/cli.hpp"
#include "genepide/config.hpp"
#include "genepide/entropy.hpp"
#include "genepide/solver1d.hpp"
#include "genepide/solvernd.hpp"
#include "genepide/ssa.hpp"
#include "genepide/stationary.hpp"

using namespace genepide;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

RunConfig golden(const std::string& name) { return load_config(std::string(GENEPIDE_CONFIG_DIR) + "/" + name + ".json"); }

std::vector<RunConfig> golden_1d() {
    std::vector<RunConfig> v;
    for (int i = 1; i <= 5; ++i) v.push_back(golden("case" + std::to_string(i)));
    return v;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

Solver1D make_solver(const ModelSpec1D& s, std::size_t cells, double dt) {
    GridConfig gc;
    gc.cells = cells;
    SolverConfig sc;
    sc.dt = dt;
    return Solver1D(std::make_shared<const Discretization1D>(s, gc), sc);
}

Solver1D make_solver(const RunConfig& c) { return make_solver(c.spec_1d(), c.grid.cells.front(), c.solver.dt); }

ReferenceNodes nodes_for(const Discretization1D& d) {
    const auto& prof = d.profile();
    return reference_nodes(d.grid(), [&](double x) { return prof.density(x); }, prof.origin_exponent, 1.0);
}

Outcome stationary_correctness() {
    bool ok = true;
    double worst_mass = 0.0, worst_gamma = 0.0, slowest = 0.0;
    for (const auto& c : golden_1d()) {
        const auto t0 = clock_type::now();
        const auto s = c.spec_1d();
        const auto prof = normalize(s);
        worst_mass = std::max(worst_mass, std::abs(prof.mass - 1.0));
        auto open = s;
        open.epsilon = 1.0;
        const auto oprof = normalize(open);
        const double lg = -s.a * std::log(s.b) - std::lgamma(s.a);
        for (double x = 1e-3; x <= 50.0 * s.b; x *= 1.01) {
            const double log_gamma = lg + (s.a - 1.0) * std::log(x) - x / s.b;
            worst_gamma = std::max(worst_gamma, std::abs(std::expm1(oprof.log_density(x) - log_gamma)));
        }
        slowest = std::max(slowest, seconds_since(t0));
    }
    ok = worst_mass <= 1e-8 && worst_gamma <= 1e-10 && slowest < 1.0;
    return {ok, "max |mass-1| " + fmt(worst_mass) + ", max gamma rel " + fmt(worst_gamma) + ", slowest " +
                    fmt(slowest) + " s"};
}

Outcome shape_regression() {
    const auto t0 = clock_type::now();
    std::string got;
    bool ok = true;
    int expected = 1;
    for (const auto& c : golden_1d()) {
        const auto shape = classify_shape(normalize(c.spec_1d()), c.spec_1d());
        const int id = shape.case_id ? *shape.case_id : 0;
        got += (got.empty() ? "" : ",") + std::to_string(id);
        ok = ok && id == expected++;
    }
    const double t = seconds_since(t0);
    return {ok && t < 5.0, "cases " + got + " in " + fmt(t) + " s"};
}

Outcome fixed_point() {
    const auto t0 = clock_type::now();
    const auto c = golden("case1");
    const auto solver = make_solver(c.spec_1d(), 2048, 1e-3);
    const auto& d = solver.discretization();
    const auto r = solver.run(solver.field(d.stationary_masses()), 10.0, 1e-3);
    double worst = 0.0;
    for (const auto& row : r.trace.rows) worst = std::max(worst, row.G2);
    const double t = seconds_since(t0);
    return {worst < 1e-8 && t < 30.0, "max G2 " + fmt(worst) + " over " + std::to_string(r.trace.rows.size()) +
                                          " steps, " + fmt(t) + " s"};
}

Outcome exponential_equilibration() {
    const auto t0 = clock_type::now();
    bool ok = true;
    std::string detail;
    for (const auto& c : golden_1d()) {
        double lam[2] = {0.0, 0.0};
        for (int lev = 0; lev < 2; ++lev) {
            const auto solver = make_solver(c.spec_1d(), 1024u << lev, 2e-3 / (1 << lev));
            const double floor = solver.equilibrium_floor(10.0);
            const auto r = solver.run(solver.field(solver.discretization().gamma_initial()), c.solver.t_end,
                                      c.solver.cadence);
            try {
                const auto f = fit_decay_rate(r.trace, floor, c.entropy.min_r2);
                lam[lev] = f.lambda_est;
                ok = ok && f.r_squared >= 0.99 && f.lambda_est > 0.0;
            } catch (const EntropyError&) {
                ok = false;
            }
        }
        const double rel = std::abs(lam[0] - lam[1]) / lam[1];
        ok = ok && rel <= 0.10;
        detail += c.name + " " + fmt(lam[1]) + " (" + fmt(100.0 * rel) + "%) ";
    }
    const double t = seconds_since(t0);
    return {ok && t < 300.0, "lambda " + detail + "in " + fmt(t) + " s"};
}

Outcome entropy_identity() {
    const auto c = golden("case3");
    std::vector<double> err;
    for (int lev = 0; lev < 3; ++lev) {
        const auto solver = make_solver(c.spec_1d(), 1024u << lev, 2e-3 / (1 << lev));
        const double floor = solver.equilibrium_floor(10.0);
        const auto r = solver.run(solver.field(solver.discretization().gamma_initial()), 10.0, c.solver.cadence);
        err.push_back(cli::detail::identity_error(r.trace, floor));
    }
    const bool ok = err[0] <= 0.05 && err[1] < err[0] && err[2] < err[1];
    return {ok, "max |dG2/dt + D2|/D2 " + fmt(err[0]) + " -> " + fmt(err[1]) + " -> " + fmt(err[2])};
}

Outcome g2_equals_h2() {
    double worst = 0.0;
    for (const auto& c : golden_1d()) {
        const auto d = make_solver(c).discretization();
        std::mt19937_64 rng(c.entropy.seed);
        const auto& M = d.stationary_masses();
        for (int i = 0; i < 50; ++i) {
            const auto m = probe_density(d.grid(), M, rng);
            const double G = g2(m, M).value;
            worst = std::max(worst, std::abs(G - h2_direct(m, M)) / G);
        }
    }
    return {worst <= 1e-6, "max |G2-H2|/G2 " + fmt(worst) + " over 250 densities"};
}

Outcome dissipation_constant() {
    std::size_t tight = 0, proven = 0;
    double margin = std::numeric_limits<double>::infinity();
    std::string where;
    for (const auto& c : golden_1d()) {
        const auto solver = make_solver(c);
        const auto& d = solver.discretization();
        std::mt19937_64 rng(c.entropy.seed);
        std::vector<std::vector<double>> samples;
        for (int i = 0; i < 500; ++i) samples.push_back(probe_density(d.grid(), d.stationary_masses(), rng));
        const auto rep = probe_inequalities(samples, d.grid(), d.entropy_weights(), nodes_for(d), c.spec_1d().epsilon);
        tight += rep.violations_tight;
        proven += rep.violations;
        margin = std::min(margin, rep.worst_margin_tight);
        if (rep.violations_tight) where += " " + c.name + ":" + std::to_string(rep.violations_tight);
    }
    return {tight == 0, std::to_string(tight) + " violations of D <= (b/(a eps)) e^{1/b} D2 / a (" +
                            (where.empty() ? "none" : where.substr(1)) + "), worst margin " + fmt(margin) +
                            "; without the 1/a: " + std::to_string(proven) + " violations"};
}

Outcome battery_1d() {
    bool ok = true;
    double mass = 0.0, clip = 0.0, mp = 0.0, l1 = 0.0;
    for (const auto& c : golden_1d()) {
        const auto solver = make_solver(c);
        const auto& d = solver.discretization();
        const auto twin = make_twin_setup_1d(solver, 1e-10, c.solver.t_max);
        const auto& ref = twin.reference;
        std::mt19937_64 rng(c.entropy.seed);
        const auto probe = probe_density(d.grid(), d.stationary_masses(), rng);
        const auto b = invariant_battery_1d(twin.solver, ref.masses, twin.solver.field(d.gamma_initial()),
                                            twin.solver.field(probe), c.solver.t_end);
        mass = std::max(mass, b.mass_drift);
        clip = std::max(clip, b.clipped_per_time);
        mp = std::max({mp, b.umax_breach, b.umin_breach});
        l1 = std::max(l1, b.l1_breach);
        ok = ok && ref.converged && b.lowest_before_clip >= -1e-12;
    }
    ok = ok && mass < 1e-6 && clip < 1e-8 && mp < 1e-6 && l1 < 1e-8;
    return {ok, "mass " + fmt(mass) + ", clip/t " + fmt(clip) + ", max principle " + fmt(mp) + ", L1 " + fmt(l1)};
}

Outcome stochastic_oracle() {
    bool ok = true;
    std::string detail;
    for (const auto& c : golden_1d()) {
        const auto t0 = clock_type::now();
        const auto r = ssa_scaling(c.spec_1d(), c.ssa.samples, 8, c.ssa.seed, c.ssa.burn_in, c.ssa.stride, c.ssa.bins);
        const double t = seconds_since(t0);
        ok = ok && r.worst_l1_n <= 0.05 && r.ratio() >= 1.4 && r.ratio() <= 2.6 && t < 120.0;
        detail += c.name + " L1 " + fmt(r.worst_l1_n) + " x" + fmt(r.ratio()) + "; ";
    }
    return {ok, detail + "(worst single-run L1 at 1e5, mean ratio 1e5/4e5)"};
}

Outcome nd_suite() {
    const auto t0 = clock_type::now();
    std::ostringstream out;
    bool ok = true;
    {
        const auto c = golden("independent_pair");
        const auto solver = cli::detail::solver_nd(c);
        const auto st = cli::detail::stationary_nd(c, solver);
        const auto& d = solver.discretization();
        std::vector<std::vector<double>> f;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto& g = c.spec_nd().genes[i];
            const auto& h = std::get<input::UnivariateHill>(g.input);
            const auto prof = normalize(ModelSpec1D{g.k_m, g.b, h.K, h.H, h.epsilon});
            f.push_back(d.project_axis(i, [&](double x) { return prof.density(x); }, prof.origin_exponent));
        }
        const double l1 = l1_distance(st.masses, d.product(f));
        ok = ok && st.converged && l1 < 5e-3;
        out << "separable L1 " << fmt(l1);
    }
    {
        const auto c = golden("mutual_repression");
        const auto solver = cli::detail::solver_nd(c);
        const auto st = cli::detail::stationary_nd(c, solver);
        const auto& d = solver.discretization();
        const auto peaks = interior_peaks_2d(d, st.masses);
        const auto r = run_nd(solver, solver.field(d.gamma_initial()), c.solver.t_end, c.solver.cadence, st);
        const double inc = cli::detail::max_g2_increase(r.trace);
        double lam = 0.0;
        try {
            lam = fit_decay_rate(r.trace, cli::kNdFitFloor, c.entropy.min_r2).lambda_est;
        } catch (const EntropyError&) {
        }
        ok = ok && st.converged && peaks.size() == 2 && inc <= cli::kMonotoneSlack && lam > 0.0;
        out << "; repression peaks " << peaks.size() << ", max G2 increase " << fmt(inc) << ", lambda " << fmt(lam);
    }
    for (const char* name : {"independent_pair", "mutual_repression"}) {
        const auto c = golden(name);
        const auto base = cli::detail::solver_nd(c);
        const auto& d = base.discretization();
        const auto twin = make_twin_setup(base, d.gamma_initial(), 1e-8, c.solver.t_max);
        std::mt19937_64 rng(c.entropy.seed);
        const auto p = perturbed_stationary(d, twin.reference.masses, rng);
        const auto q = perturbed_stationary(d, twin.reference.masses, rng);
        const auto b = invariant_battery_nd(twin.solver, twin.reference, twin.solver.field(p), twin.solver.field(q),
                                            c.solver.battery_t_end);
        ok = ok && twin.reference.converged && b.passes();
        out << "; " << name << " battery mass " << fmt(b.mass_drift) << " mp "
            << fmt(std::max(b.umax_breach, b.umin_breach)) << " L1 " << fmt(b.l1_breach) << " L2 " << fmt(b.l2_breach);
    }
    const double t = seconds_since(t0);
    out << "; " << fmt(t) << " s";
    return {ok && t < 600.0, out.str()};
}

Outcome performance() {
    const auto c = golden("case3");
    const auto solver = make_solver(c.spec_1d(), 1u << 14, c.solver.dt);
    const auto& d = solver.discretization();
    const auto& w = d.entropy_weights();
    std::mt19937_64 rng(c.entropy.seed);
    const auto m = probe_density(d.grid(), w.M, rng);
    auto t0 = clock_type::now();
    const double slow = d2_direct(w, d.grid(), m);
    const double t_slow = seconds_since(t0);
    t0 = clock_type::now();
    double fast = 0.0;
    for (int i = 0; i < 50; ++i) fast = d2(w, m);
    const double t_fast = seconds_since(t0) / 50.0;
    const double rel = std::abs(fast - slow) / slow;
    return {rel <= 1e-10 && t_slow / t_fast >= 20.0,
            "rel diff " + fmt(rel) + ", speedup " + fmt(t_slow / t_fast) + "x at N=16384"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> expect_fail, only;
    app.add_option("--expect-fail", expect_fail, "criteria that are known to fail");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"stationary correctness", stationary_correctness},
        {"shape regression", shape_regression},
        {"solver fixed point", fixed_point},
        {"exponential equilibration", exponential_equilibration},
        {"entropy identity", entropy_identity},
        {"G2 = H2", g2_equals_h2},
        {"dissipation constant", dissipation_constant},
        {"1D invariant battery", battery_1d},
        {"stochastic oracle", stochastic_oracle},
        {"nD suite", nd_suite},
        {"performance", performance},
    };
    const std::set<int> expected(expect_fail.begin(), expect_fail.end());
    const std::set<int> selected(only.begin(), only.end());
    int mismatches = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const bool want_fail = expected.count(id) > 0;
        if (o.pass == want_fail) ++mismatches;
        std::printf("%s %2d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                    want_fail ? (o.pass ? " [expected to fail]" : " [expected]") : "");
        std::fflush(stdout);
    }
    return mismatches == 0 ? 0 : 1;
}
