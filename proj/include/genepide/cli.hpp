#pragma once

// Subcommands behind tools/genepide. Each takes a validated RunConfig, writes
// its files under config.output and returns the process exit code.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "genepide/config.hpp"
#include "genepide/entropy.hpp"
#include "genepide/io.hpp"
#include "genepide/solver1d.hpp"
#include "genepide/solvernd.hpp"
#include "genepide/ssa.hpp"
#include "genepide/stationary.hpp"

namespace genepide::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInvariantFail = 1, kConfigError = 2 };

inline constexpr std::size_t kSnapshots = 10;
inline constexpr double kNdFitFloor = 1e-12;
inline constexpr double kMonotoneSlack = 1e-12;  // G2 increases below this are rounding

namespace detail {

inline fs::path prepare_output(const RunConfig& c) {
    const fs::path dir(c.output);
    fs::create_directories(dir);
    std::ofstream(dir / "resolved_config.json") << serialize_config(c);
    return dir;
}

inline void require_bursts(const RunConfig& c, const char* command) {
    if (c.is_1d() && !(c.spec_1d().a > 0.0)) throw ConfigError(std::string(command) + " needs a > 0");
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_number(v[i]);
    return s.empty() ? "none" : s;
}

inline std::vector<std::string> axis_columns(std::size_t dim) {
    std::vector<std::string> cols;
    for (std::size_t i = 0; i < dim; ++i) cols.push_back("x" + std::to_string(i));
    return cols;
}

// --- 1D ---------------------------------------------------------------------

inline std::shared_ptr<const Discretization1D> discretize_1d(const RunConfig& c) {
    GridConfig gc;
    gc.x_max = c.grid.x_max;
    gc.cells = c.grid.cells.front();
    gc.first_ratio = c.grid.first_ratio;
    gc.hybrid = c.grid.hybrid;
    return std::make_shared<const Discretization1D>(c.spec_1d(), gc);
}

inline Solver1D solver_1d(const RunConfig& c) {
    SolverConfig sc;
    sc.dt = c.solver.dt;
    sc.scheme = parse_scheme(c.solver.scheme);
    return Solver1D(discretize_1d(c), sc);
}

inline std::vector<double> initial_1d(const RunConfig& c, const Discretization1D& d) {
    return c.solver.initial == "stationary" ? d.stationary_masses() : d.gamma_initial();
}

inline void write_snapshot_1d(const fs::path& path, RunMetadata meta, const DensityField1D& p) {
    const auto& g = p.disc->grid();
    meta.extra.emplace_back("time", format_number(p.time));
    if (p.masses.size() > g.cells()) meta.extra.emplace_back("tail_mass", format_number(p.masses.back()));
    CsvWriter w(path, meta, {"x", "mass", "density"});
    for (std::size_t j = 0; j < g.cells(); ++j) w.row({g.center(j), p.masses[j], p.masses[j] / g.width(j)});
}

// --- nD ---------------------------------------------------------------------

inline SolverND solver_nd(const RunConfig& c) {
    SolverNDConfig sc;
    sc.dt = c.solver.dt;
    sc.fiber_scheme = parse_scheme(c.solver.scheme);
    sc.splitting = parse_splitting(c.solver.splitting);
    return SolverND(std::make_shared<const DiscretizationND>(c.spec_nd(), axis_grids(c)), sc);
}

inline StationaryProfileND stationary_nd(const RunConfig& c, const SolverND& solver) {
    const auto& d = solver.discretization();
    return compute_stationary_nd(solver, solver.field(d.gamma_initial()), c.solver.stationary_tolerance, 1.0,
                                 c.solver.t_max);
}

inline void write_tensor(const fs::path& path, RunMetadata meta, const DiscretizationND& d,
                         const std::vector<double>& m, std::optional<double> time = std::nullopt) {
    if (time) meta.extra.emplace_back("time", format_number(*time));
    auto cols = axis_columns(d.dim());
    cols.push_back("mass");
    cols.push_back("density");
    CsvWriter w(path, meta, cols);
    const auto& L = d.layout();
    std::vector<double> row(d.dim() + 2);
    for (std::size_t k = 0; k < m.size(); ++k) {
        const auto idx = L.unravel(k);
        double vol = 1.0;
        for (std::size_t i = 0; i < d.dim(); ++i) {
            row[i] = d.grid(i).center(idx[i]);
            vol *= d.grid(i).width(idx[i]);
        }
        row[d.dim()] = m[k];
        row[d.dim() + 1] = m[k] / vol;
        w.row(row);
    }
}

inline void write_marginals(const fs::path& path, const RunMetadata& meta, const DiscretizationND& d,
                            const std::vector<double>& m) {
    CsvWriter w(path, meta, {"axis", "x", "mass", "density"});
    for (std::size_t i = 0; i < d.dim(); ++i) {
        const auto mg = marginal(d.layout(), m, i);
        const auto& g = d.grid(i);
        for (std::size_t j = 0; j < g.cells(); ++j) {
            w.row({static_cast<double>(i), g.center(j), mg[j], mg[j] / g.width(j)});
        }
    }
}

inline std::vector<std::vector<double>> peak_points(const DiscretizationND& d, const std::vector<double>& m) {
    std::vector<std::vector<double>> out;
    if (d.dim() != 2) return out;
    for (auto k : interior_peaks_2d(d, m)) {
        const auto idx = d.layout().unravel(k);
        out.push_back({d.grid(0).center(idx[0]), d.grid(1).center(idx[1])});
    }
    return out;
}

// --- traces -----------------------------------------------------------------

inline void write_trace(const fs::path& path, const RunMetadata& meta, const EntropyTrace& trace) {
    CsvWriter w(path, meta, {"t", "G2", "dG2dt", "D2", "identity_rel", "mass", "umin", "umax"});
    for (const auto& r : trace.rows) {
        const double rel = r.D2 > 0.0 ? std::abs(r.dG2dt + r.D2) / r.D2 : 0.0;
        w.row({r.t, r.G2, r.dG2dt, r.D2, rel, r.mass, r.umin, r.umax});
    }
}

inline double max_g2_increase(const EntropyTrace& trace) {
    double worst = 0.0;
    for (std::size_t i = 1; i < trace.rows.size(); ++i) worst = std::max(worst, trace.rows[i].G2 - trace.rows[i - 1].G2);
    return worst;
}

/// Largest |dG2/dt + D2| / D2 over rows in the middle half of the run whose
/// G2 is at least 1e4 floor; closer to the floor the discretisation error
/// dominates the ratio.
inline double identity_error(const EntropyTrace& trace, double floor) {
    if (trace.rows.empty()) return 0.0;
    const double t0 = trace.rows.front().t, t1 = trace.rows.back().t;
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < trace.rows.size(); ++k) {
        const auto& r = trace.rows[k];
        if (r.t < t0 + 0.25 * (t1 - t0) || r.t > t0 + 0.75 * (t1 - t0) || !(r.G2 > 1e4 * floor)) continue;
        worst = std::max(worst, std::abs(r.dG2dt + r.D2) / r.D2);
    }
    return worst;
}

inline void write_decay(const fs::path& path, const RunMetadata& meta, const EntropyTrace& trace, double floor,
                        double min_r2, double mass_drift, double clipped, double umax_breach, double umin_breach) {
    ReportWriter rep(path, meta);
    try {
        const auto f = fit_decay_rate(trace, floor, min_r2);
        rep.line("status", "fitted");
        rep.line("lambda_est", f.lambda_est);
        rep.line("g2_rate", f.g2_rate);
        rep.line("r_squared", f.r_squared);
        rep.line("window_begin", f.t_begin);
        rep.line("window_end", f.t_end);
        rep.line("points", static_cast<double>(f.points));
    } catch (const EntropyError& e) {
        rep.line("status", std::string("no_fit (") + e.what() + ")");
    }
    rep.line("floor", floor);
    rep.line("G2_initial", trace.rows.front().G2);
    rep.line("G2_final", trace.rows.back().G2);
    const double inc = max_g2_increase(trace);
    rep.line("max_G2_increase", inc);
    rep.line("G2_monotone", inc <= kMonotoneSlack ? "yes" : "no");
    rep.line("identity_max_rel", identity_error(trace, floor));
    rep.line("mass_drift", mass_drift);
    rep.line("clipped_mass", clipped);
    rep.line("umax_breach", umax_breach);
    rep.line("umin_breach", umin_breach);
}

// --- verify -----------------------------------------------------------------

enum class Kind { Hard, Soft, Info };

struct Check {
    std::string name;
    Kind kind = Kind::Hard;
    double value = 0.0;
    double limit = 0.0;  // passes when value <= limit
    std::string note;

    bool passes() const { return kind == Kind::Info || value <= limit; }
};

inline bool write_checks(const fs::path& path, const RunMetadata& meta, const std::vector<Check>& checks,
                         std::ostream& out) {
    ReportWriter rep(path, meta);
    bool ok = true;
    for (const auto& c : checks) {
        const char* kind = c.kind == Kind::Hard ? "hard" : c.kind == Kind::Soft ? "soft" : "info";
        const char* status = c.kind == Kind::Info ? "INFO" : c.passes() ? "PASS" : c.kind == Kind::Hard ? "FAIL" : "WARN";
        std::ostringstream line;
        line << status << " " << kind << " " << c.name << " value=" << format_number(c.value);
        if (c.kind != Kind::Info) line << " limit=" << format_number(c.limit);
        if (!c.note.empty()) line << " (" << c.note << ")";
        rep.text(line.str());
        out << line.str() << "\n";
        if (c.kind == Kind::Hard && !c.passes()) ok = false;
    }
    rep.line("result", ok ? "pass" : "fail");
    return ok;
}

inline std::vector<Check> verify_1d(const RunConfig& c) {
    std::vector<Check> out;
    const auto& s = c.spec_1d();
    const auto prof = normalize(s);
    out.push_back({"stationary_mass_error", Kind::Hard, std::abs(prof.mass - 1.0), 1e-8, ""});

    const auto solver = solver_1d(c);
    const auto& d = solver.discretization();
    const auto& M = d.stationary_masses();
    const double floor = solver.equilibrium_floor(std::min(c.solver.t_end, 10.0));
    out.push_back({"fixed_point_G2", Kind::Soft, floor, 1e-8, "G2 from the stationary cell masses"});

    std::mt19937_64 rng(c.entropy.seed);
    const auto twin = make_twin_setup_1d(solver, 1e-10, c.solver.t_max);
    const auto probe = probe_density(d.grid(), M, rng);
    const auto bat = invariant_battery_1d(twin.solver, twin.reference.masses, twin.solver.field(d.gamma_initial()),
                                          twin.solver.field(probe), c.solver.battery_t_end);
    out.push_back({"twin_reference_drift", Kind::Hard, twin.reference.drift, 1e-10, "first-order fixed point"});
    out.push_back({"mass_drift", Kind::Hard, bat.mass_drift, 1e-6, ""});
    out.push_back({"negative_before_clip", Kind::Hard, -bat.lowest_before_clip, 1e-12, ""});
    out.push_back({"clipped_per_time", Kind::Hard, bat.clipped_per_time, 1e-8, ""});
    out.push_back({"max_principle_upper", Kind::Hard, bat.umax_breach, 1e-6, "twin reconstruction"});
    out.push_back({"max_principle_lower", Kind::Hard, bat.umin_breach, 1e-6, "twin reconstruction"});
    out.push_back({"l1_contraction", Kind::Hard, bat.l1_breach, 1e-8, "largest one-step increase"});
    const auto fixed = discrete_stationary_1d(solver, 1e-10, 1.0, c.solver.t_max);
    const auto ref_bat = invariant_battery_1d(solver, fixed.masses, solver.field(d.gamma_initial()),
                                              solver.field(probe), c.solver.battery_t_end);
    out.push_back({"max_principle_reference_scheme", Kind::Soft, std::max(ref_bat.umax_breach, ref_bat.umin_breach),
                   1e-6, "default reconstruction against its own fixed point"});

    const auto run = solver.run(solver.field(initial_1d(c, d)), c.solver.t_end, c.solver.cadence);
    out.push_back({"G2_increase", Kind::Soft, max_g2_increase(run.trace), kMonotoneSlack, ""});
    out.push_back({"entropy_identity", Kind::Soft, identity_error(run.trace, floor), 0.05, "|dG2/dt + D2| / D2"});

    std::vector<std::vector<double>> samples;
    for (std::size_t i = 0; i < c.entropy.probes; ++i) samples.push_back(probe_density(d.grid(), M, rng));
    const auto& prof_d = d.profile();
    const auto nodes = reference_nodes(
        d.grid(), [&](double x) { return prof_d.density(x); }, prof_d.origin_exponent, 1.0);
    const auto rep = probe_inequalities(samples, d.grid(), d.entropy_weights(), nodes, s.epsilon);
    out.push_back({"G2_equals_H2", Kind::Hard, rep.max_g2_h2_rel, 1e-6, "relative"});
    out.push_back({"dissipation_bound_violations", Kind::Hard, static_cast<double>(rep.violations), 0.0,
                   "D <= (b/(a eps)) e^{1/b} D2, worst margin " + format_number(rep.worst_margin)});
    out.push_back({"dissipation_bound_over_a_violations", Kind::Soft, static_cast<double>(rep.violations_tight), 0.0,
                   "D <= (b/(a eps)) e^{1/b} D2 / a, worst margin " + format_number(rep.worst_margin_tight)});
    out.push_back({"min_D2_over_G2", Kind::Info, rep.min_d2_over_g2, 0.0, "estimate of 2 beta"});
    out.push_back({"min_D2_over_D", Kind::Info, rep.min_d2_over_d, 0.0,
                   "estimate of alpha; bound " + format_number(rep.alpha_bound)});
    return out;
}

inline std::vector<Check> verify_nd(const RunConfig& c) {
    std::vector<Check> out;
    const auto base = solver_nd(c);
    const auto& d = base.discretization();
    auto twin = make_twin_setup(base, d.gamma_initial(), 1e-8, c.solver.t_max);
    out.push_back({"reference_drift", Kind::Hard, twin.reference.drift, 1e-8, "first-order stationary state"});

    std::mt19937_64 rng(c.entropy.seed);
    const auto& P = twin.reference.masses;
    const auto p = perturbed_stationary(d, P, rng);
    const auto q = perturbed_stationary(d, P, rng);
    const auto bat = invariant_battery_nd(twin.solver, twin.reference, twin.solver.field(p), twin.solver.field(q),
                                          c.solver.battery_t_end);
    const BatteryTolerances tol;
    out.push_back({"mass_drift", Kind::Hard, bat.mass_drift, tol.mass, ""});
    out.push_back({"negative_before_clip", Kind::Hard, -bat.lowest_before_clip, 1e-12, ""});
    out.push_back({"clipped_per_time", Kind::Hard, bat.clipped_per_time, tol.clipped, ""});
    out.push_back({"l1_contraction", Kind::Hard, bat.l1_breach, tol.l1, "largest one-step increase"});
    out.push_back({"weighted_l2_bound", Kind::Hard, bat.l2_breach, tol.l2, "largest one-step increase"});
    out.push_back({"max_principle_upper", Kind::Hard, bat.umax_breach, tol.max_principle, "resolved cells"});
    out.push_back({"max_principle_lower", Kind::Hard, bat.umin_breach, tol.max_principle, "resolved cells"});

    double worst = 0.0;
    for (std::size_t i = 0; i < c.entropy.probes; ++i) {
        const auto m = perturbed_stationary(d, P, rng);
        const double G = g2(m, P).value;
        if (G > 1e-14) worst = std::max(worst, std::abs(G - h2(m, P)) / G);
    }
    out.push_back({"G2_equals_H2", Kind::Hard, worst, 1e-6, "relative"});
    const auto flux = boundary_flux_check(twin.reference, p, [](double u) { return u * u - 1.0; });
    out.push_back({"boundary_flux", Kind::Soft, *std::max_element(flux.begin(), flux.end()), 1e-8, "at x_max"});
    return out;
}

}  // namespace detail

inline int cmd_stationary(const RunConfig& c, std::ostream& out) {
    detail::require_bursts(c, "stationary");
    const auto dir = detail::prepare_output(c);
    if (c.is_1d()) {
        const auto& s = c.spec_1d();
        const auto prof = normalize(s);
        const auto meta = metadata_for(c, "stationary", 0);
        {
            CsvWriter w(dir / "profile.csv", meta, {"x", "density"});
            for (std::size_t i = 0; i < prof.grid.size(); ++i) w.row({prof.grid[i], prof.values[i]});
        }
        const auto shape = classify_shape(prof, s);
        ReportWriter rep(dir / "shape.txt", meta);
        rep.line("case", shape.case_id ? std::to_string(*shape.case_id) : "none");
        rep.line("status", to_string(shape.status));
        rep.line("origin_limit", to_string(shape.origin_limit));
        rep.line("peaks", detail::join(shape.peak_locations));
        rep.line("ambiguous", detail::join(shape.ambiguous_locations));
        if (!shape.note.empty()) rep.line("note", shape.note);
        rep.line("log_Z", prof.log_Z);
        rep.line("mass", prof.mass);
        if (s.epsilon == 1.0) {
            // Open loop: the profile is the gamma(a, b) density.
            const double lg = -s.a * std::log(s.b) - std::lgamma(s.a);
            double worst = 0.0;
            for (double x = 1e-3; x <= 50.0 * s.b; x *= 1.01) {
                const double g = std::exp(lg + (s.a - 1.0) * std::log(x) - x / s.b);
                if (g > 0.0) worst = std::max(worst, std::abs(prof.density(x) / g - 1.0));
            }
            rep.line("gamma_max_rel", worst);
        }
        out << "case " << (shape.case_id ? std::to_string(*shape.case_id) : "none") << ", mass "
            << format_number(prof.mass) << "\n";
        return std::abs(prof.mass - 1.0) <= 1e-8 ? kOk : kInvariantFail;
    }
    const auto solver = detail::solver_nd(c);
    const auto& d = solver.discretization();
    const auto st = detail::stationary_nd(c, solver);
    const auto meta = metadata_for(c, "stationary", 0);
    detail::write_tensor(dir / "profile.csv", meta, d, st.masses);
    detail::write_marginals(dir / "marginals.csv", meta, d, st.masses);
    ReportWriter rep(dir / "shape.txt", meta);
    rep.line("converged", st.converged ? "yes" : "no");
    rep.line("time", st.time);
    rep.line("drift", st.drift);
    rep.line("residual", st.residual);
    rep.line("boundary_flux", detail::join(st.boundary_flux));
    const auto peaks = detail::peak_points(d, st.masses);
    rep.line("interior_peaks", static_cast<double>(peaks.size()));
    for (std::size_t k = 0; k < peaks.size(); ++k) rep.line("peak" + std::to_string(k), detail::join(peaks[k]));
    out << (st.converged ? "converged" : "not converged") << " at t = " << format_number(st.time) << ", "
        << peaks.size() << " interior peaks\n";
    return st.converged ? kOk : kInvariantFail;
}

inline int cmd_classify(const RunConfig& c, std::ostream& out) {
    if (!c.is_1d()) throw ConfigError("classify needs a 1D model");
    detail::require_bursts(c, "classify");
    const auto prof = normalize(c.spec_1d());
    const auto shape = classify_shape(prof, c.spec_1d());
    out << "case: " << (shape.case_id ? std::to_string(*shape.case_id) : "none") << "\n";
    out << "status: " << to_string(shape.status) << "\n";
    out << "origin_limit: " << to_string(shape.origin_limit) << "\n";
    out << "peaks: " << detail::join(shape.peak_locations) << "\n";
    out << "ambiguous: " << detail::join(shape.ambiguous_locations) << "\n";
    if (!shape.note.empty()) out << "note: " << shape.note << "\n";
    return kOk;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
    detail::require_bursts(c, "simulate");
    const auto dir = detail::prepare_output(c);
    fs::create_directories(dir / "snapshots");
    const auto meta = metadata_for(c, "simulate", 0);
    const auto rows = static_cast<std::size_t>(std::llround(c.solver.t_end / c.solver.cadence)) + 1;
    const std::size_t every = std::max<std::size_t>(1, rows / kSnapshots);
    std::size_t seen = 0;
    auto snapshot_name = [&](std::size_t k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "row_%06zu.csv", k);
        return dir / "snapshots" / buf;
    };

    if (c.is_1d()) {
        const auto solver = detail::solver_1d(c);
        const auto& d = solver.discretization();
        std::optional<DensityField1D> last;
        auto on_row = [&](const DensityField1D& p) {
            if (seen % every == 0 || seen + 1 == rows) detail::write_snapshot_1d(snapshot_name(seen), meta, p);
            last = p;
            ++seen;
        };
        RunResult res;
        try {
            res = solver.run(solver.field(detail::initial_1d(c, d)), c.solver.t_end, c.solver.cadence, on_row);
        } catch (const std::runtime_error&) {
            if (last) detail::write_snapshot_1d(dir / "snapshots" / "last_good.csv", meta, *last);
            throw;
        }
        const double floor = solver.equilibrium_floor(std::min(c.solver.t_end, 10.0));
        detail::write_trace(dir / "trace.csv", meta, res.trace);
        const auto& inv = res.invariants;
        detail::write_decay(dir / "decay.txt", meta, res.trace, floor, c.entropy.min_r2, inv.max_mass_drift,
                            inv.cumulative_clipped, inv.max_umax_breach, inv.max_umin_breach);
        out << "G2 " << format_number(res.trace.rows.front().G2) << " -> " << format_number(res.trace.rows.back().G2)
            << "\n";
        return kOk;
    }
    const auto solver = detail::solver_nd(c);
    const auto& d = solver.discretization();
    const auto ref = detail::stationary_nd(c, solver);
    std::optional<DensityFieldND> last;
    auto on_row = [&](const DensityFieldND& p) {
        if (seen % every == 0 || seen + 1 == rows) detail::write_tensor(snapshot_name(seen), meta, d, p.masses, p.time);
        last = p;
        ++seen;
    };
    const auto start = c.solver.initial == "stationary" ? ref.masses : d.gamma_initial();
    RunResultND res;
    try {
        res = run_nd(solver, solver.field(start), c.solver.t_end, c.solver.cadence, ref, on_row);
    } catch (const std::runtime_error&) {
        if (last) detail::write_tensor(dir / "snapshots" / "last_good.csv", meta, d, last->masses, last->time);
        throw;
    }
    detail::write_trace(dir / "trace.csv", meta, res.trace);
    const auto& inv = res.invariants;
    detail::write_decay(dir / "decay.txt", meta, res.trace, kNdFitFloor, c.entropy.min_r2, inv.max_mass_drift,
                        inv.cumulative_clipped, inv.max_umax_breach, inv.max_umin_breach);
    out << "G2 " << format_number(res.trace.rows.front().G2) << " -> " << format_number(res.trace.rows.back().G2)
        << (ref.converged ? "" : " (reference not converged)") << "\n";
    return kOk;
}

inline int cmd_ssa(const RunConfig& c, std::ostream& out) {
    const auto dir = detail::prepare_output(c);
    auto meta = metadata_for(c, "ssa", c.ssa.seed);
    const auto& sc = c.ssa;
    if (c.is_1d()) {
        const auto& s = c.spec_1d();
        const auto tr = stationary_samples_1d(s, sc.samples, sc.seed, sc.burn_in, sc.stride);
        {
            CsvWriter w(dir / "samples.csv", meta, {"t", "x"});
            for (std::size_t k = 0; k < tr.sample_count(); ++k) w.row({tr.sample_times[k], tr.sample(k)});
        }
        const auto xs = tr.coordinate(0);
        ReportWriter rep(dir / "compare.txt", meta);
        rep.line("samples", static_cast<double>(tr.sample_count()));
        rep.line("bursts", static_cast<double>(tr.bursts));
        rep.line("proposals", static_cast<double>(tr.proposals));
        EmpiricalDensity h;
        if (s.a > 0.0) {
            const auto sb = stationary_bins(normalize(s), sc.bins);
            const auto cmp = compare_with_stationary(tr, sb);
            h = cmp.histogram;
            rep.line("l1", cmp.l1);
            rep.line("l1_within_0.05", cmp.l1 <= 0.05 ? "yes" : "no");
            rep.line("overflow_fraction", h.overflow_fraction());
            rep.line("analytic_tail_mass", sb.tail);
            rep.line("lag1_autocorrelation", cmp.lag1);
            rep.line("stride_warning", cmp.stride_warning ? "yes" : "no");
            out << "L1 to the stationary density " << format_number(cmp.l1) << "\n";
            if (cmp.stride_warning) out << "warning: lag-1 autocorrelation " << format_number(cmp.lag1) << " > 0.5\n";
        } else {
            const double hi = std::max(*std::max_element(xs.begin(), xs.end()), s.b) * (1.0 + 1e-9);
            h = empirical_density(xs, Grid1D::uniform(hi, sc.bins).edges());
            rep.line("l1", "n/a (a = 0 has no stationary density)");
            rep.line("first_bin_fraction", h.bin_probability(0));
            out << "a = 0: fraction in the first bin " << format_number(h.bin_probability(0)) << "\n";
        }
        meta.extra.emplace_back("overflow", std::to_string(h.overflow));
        CsvWriter w(dir / "hist.csv", meta, {"x", "density"});
        for (std::size_t j = 0; j + 1 < h.edges.size(); ++j) {
            w.row({0.5 * (h.edges[j] + h.edges[j + 1]), h.heights[j]});
        }
        return kOk;
    }
    const auto& s = c.spec_nd();
    const auto tr = stationary_samples_nd(s, sc.samples, sc.seed, sc.burn_in, sc.stride);
    {
        auto cols = detail::axis_columns(s.dim());
        cols.insert(cols.begin(), "t");
        CsvWriter w(dir / "samples.csv", meta, cols);
        std::vector<double> row(s.dim() + 1);
        for (std::size_t k = 0; k < tr.sample_count(); ++k) {
            row[0] = tr.sample_times[k];
            for (std::size_t i = 0; i < s.dim(); ++i) row[i + 1] = tr.sample(k, i);
            w.row(row);
        }
    }
    ReportWriter rep(dir / "compare.txt", meta);
    rep.line("samples", static_cast<double>(tr.sample_count()));
    rep.line("bursts", static_cast<double>(tr.bursts));
    for (std::size_t i = 0; i < s.dim(); ++i) {
        const double lag = lag1_autocorrelation(tr.coordinate(i));
        rep.line("lag1_autocorrelation_x" + std::to_string(i), lag);
        if (lag > kStrideWarning) out << "warning: lag-1 autocorrelation of x" << i << " " << format_number(lag) << "\n";
    }
    if (s.dim() == 2) {
        const auto x0 = tr.coordinate(0), x1 = tr.coordinate(1);
        const double dcor = distance_correlation(x0, x1);
        rep.line("distance_correlation", dcor);
        const double hi0 = *std::max_element(x0.begin(), x0.end()) * (1.0 + 1e-9);
        const double hi1 = *std::max_element(x1.begin(), x1.end()) * (1.0 + 1e-9);
        const auto h = empirical_density_2d(tr, Grid1D::uniform(hi0, sc.bins).edges(), Grid1D::uniform(hi1, sc.bins).edges());
        meta.extra.emplace_back("overflow", std::to_string(h.overflow));
        CsvWriter w(dir / "hist.csv", meta, {"x0", "x1", "density"});
        for (std::size_t i = 0; i < h.bins0(); ++i) {
            for (std::size_t j = 0; j < h.bins1(); ++j) {
                w.row({0.5 * (h.edges0[i] + h.edges0[i + 1]), 0.5 * (h.edges1[j] + h.edges1[j + 1]),
                       h.heights[i * h.bins1() + j]});
            }
        }
        out << "distance correlation " << format_number(dcor) << "\n";
    } else {
        // Higher dimensions: one marginal histogram per coordinate.
        CsvWriter w(dir / "hist.csv", meta, {"axis", "x", "density"});
        for (std::size_t i = 0; i < s.dim(); ++i) {
            const auto xi = tr.coordinate(i);
            const double hi = *std::max_element(xi.begin(), xi.end()) * (1.0 + 1e-9);
            const auto h = empirical_density(xi, Grid1D::uniform(hi, sc.bins).edges());
            for (std::size_t j = 0; j + 1 < h.edges.size(); ++j) {
                w.row({static_cast<double>(i), 0.5 * (h.edges[j] + h.edges[j + 1]), h.heights[j]});
            }
        }
    }
    return kOk;
}

inline int cmd_verify(const RunConfig& c, std::ostream& out) {
    detail::require_bursts(c, "verify");
    const auto dir = detail::prepare_output(c);
    const auto checks = c.is_1d() ? detail::verify_1d(c) : detail::verify_nd(c);
    const bool ok = detail::write_checks(dir / "invariants.txt", metadata_for(c, "verify", c.entropy.seed), checks, out);
    return ok ? kOk : kInvariantFail;
}

/// Runs a subcommand and maps failures to exit codes: configuration and model
/// errors give 2, numerical and invariant failures give 1.
inline int dispatch(const std::string& command, const RunConfig& c, std::ostream& out, std::ostream& err) {
    try {
        if (command == "stationary") return cmd_stationary(c, out);
        if (command == "classify") return cmd_classify(c, out);
        if (command == "simulate") return cmd_simulate(c, out);
        if (command == "ssa") return cmd_ssa(c, out);
        if (command == "verify") return cmd_verify(c, out);
        err << "unknown command " << command << "\n";
        return kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ModelError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SolverAbort& e) {
        err << "solver abort at t = " << e.time << ": " << e.what() << "\n";
        return kInvariantFail;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInvariantFail;
    }
}

}  // namespace genepide::cli
