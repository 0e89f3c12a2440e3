#pragma once

// Time integration of the one-gene equation
//   d_t p - d_x(x p) = a int_0^x w(x-y) c(y) p(y) dy - a c(x) p(x)
// by splitting into the exact dilation p(x) -> p(x e^t) e^t and the burst
// operator, both acting on conservative cell masses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genepide/entropy.hpp"
#include "genepide/fiber.hpp"
#include "genepide/grid.hpp"
#include "genepide/model.hpp"
#include "genepide/quadrature.hpp"
#include "genepide/stationary.hpp"

namespace genepide {

/// Density shape assumed inside each cell.
enum class Reference { Stationary, Lebesgue };

inline const char* to_string(Reference r) { return r == Reference::Stationary ? "stationary" : "lebesgue"; }

class StepRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverAbort : public std::runtime_error {
public:
    SolverAbort(const std::string& what, std::vector<double> state, double t)
        : std::runtime_error(what), state(std::move(state)), time(t) {}
    std::vector<double> state;
    double time;
};

/// Smallest x (at least the larger length scale) beyond which both the
/// stationary density and the gamma(a, b) density carry less than `tail`
/// mass. Keeps every reference cell mass far above underflow.
inline double solver_x_max(const ModelSpec1D& s, const StationaryProfile& prof, double tail = 1e-15) {
    const double lg = -s.a * std::log(s.b) - std::lgamma(s.a);
    auto both_below = [&](double x) {
        // Past the mode the tail mass is at most density * (decay length),
        // taken generously as 2 b (1 + a) to cover the power factor.
        const double len = std::log(2.0 * s.b * (1.0 + s.a));
        const double lp = prof.log_density(x) + len;
        const double lgam = lg + (s.a - 1.0) * std::log(x) - x / s.b + len;
        return lp < std::log(tail) && lgam < std::log(tail);
    };
    double x = 2.0 * std::max({s.b, s.K, s.a * s.b});
    while (!both_below(x)) x *= 1.02;
    return x;
}

struct GridConfig {
    double x_max = 0.0;       // 0 selects solver_x_max
    std::size_t cells = 2048;
    double first_ratio = 1e-6;
    bool hybrid = true;
};

/// Grid, cell weights and cached shift maps for one 1D spec.
class Discretization1D {
public:
    Discretization1D(const ModelSpec1D& spec, const GridConfig& gc = {}, Reference ref = Reference::Stationary)
        : spec_(spec), reference_(ref) {
        spec.validate();
        profile_ = normalize(spec);
        const double x_max = gc.x_max > 0.0 ? gc.x_max : solver_x_max(spec, profile_);
        grid_ = gc.hybrid ? Grid1D::hybrid(x_max, gc.cells, glue_point(spec, x_max), gc.first_ratio)
                          : Grid1D::uniform(x_max, gc.cells);
        build_stationary_weights();
        if (ref == Reference::Stationary) {
            transport_ = stationary_;
            entropy_ = stationary_;
        } else {
            // Lebesgue states have no tail cell; entropy is measured against
            // the stationary masses of the grid cells alone.
            entropy_ = stationary_;
            for (auto* v : {&entropy_.M, &entropy_.C, &entropy_.E, &entropy_.q}) v->pop_back();
            double t = 0.0;
            for (double v : entropy_.M) t += v;
            for (std::size_t j = 0; j < entropy_.M.size(); ++j) {
                entropy_.M[j] /= t;
                entropy_.C[j] /= t;
                entropy_.E[j] /= t;
            }
            std::vector<double> c(grid_.cells());
            for (std::size_t j = 0; j < c.size(); ++j) c[j] = spec.input(grid_.center(j));
            transport_ = lebesgue_weights(grid_, spec.a, spec.b, c);
        }
    }

    const ModelSpec1D& spec() const { return spec_; }
    const Grid1D& grid() const { return grid_; }
    Reference reference() const { return reference_; }
    const StationaryProfile& profile() const { return profile_; }
    /// Weights of the burst operator used for time stepping.
    const ReactionWeights& transport_weights() const { return transport_; }
    /// Weights with the stationary density as reference, one entry per grid
    /// cell plus the tail cell [x_max, inf); M sums to 1.
    const ReactionWeights& stationary_weights() const { return stationary_; }
    /// Stationary weights laid out like the state vector (no tail cell for
    /// the Lebesgue reference).
    const ReactionWeights& entropy_weights() const { return entropy_; }
    const std::vector<double>& stationary_masses() const { return entropy_.M; }
    /// Length of the state vector.
    std::size_t state_size() const { return transport_.size(); }

    /// Shift map for a dilation by e^{dt}; the last two requests are cached.
    const ShiftMap& shift(double dt) const {
        for (auto& c : cache_) {
            if (c && c->factor == std::exp(dt)) return *c;
        }
        auto sm = std::make_shared<ShiftMap>(reference_ == Reference::Lebesgue ? lebesgue_shift(grid_, std::exp(dt))
                                                                             : stationary_shift(std::exp(dt)));
        cache_[next_] = sm;
        next_ = (next_ + 1) % cache_.size();
        return *sm;
    }

    /// Cell masses of a density given pointwise, normalised to sum to 1.
    template <class F>
    std::vector<double> project(F&& density, double origin_exponent) const {
        auto m = cell_integrals(grid_, [&](double x) { return x > 0.0 ? density(x) : 0.0; }, origin_exponent, 20);
        if (state_size() > grid_.cells()) {
            m.push_back(quad::integrate_to_infinity(density, grid_.x_max(), 1e-10, 1e-300).value);
        }
        double total = 0.0;
        for (double v : m) total += v;
        if (!(total > 0.0)) throw std::invalid_argument("project: density has no mass on the grid");
        for (double& v : m) v /= total;
        return m;
    }

    /// Open-loop gamma density with the model's (a, b): x^{a-1} e^{-x/b} / (b^a Gamma(a)).
    std::vector<double> gamma_initial() const {
        const double a = spec_.a, b = spec_.b;
        const double lg = -a * std::log(b) - std::lgamma(a);
        return project([&](double x) { return std::exp(lg + (a - 1.0) * std::log(x) - x / b); }, a - 1.0);
    }

private:
    void build_stationary_weights() {
        const double b = spec_.b;
        const double oe = profile_.origin_exponent;
        const std::size_t n = grid_.cells();
        auto P = [&](double x) { return x > 0.0 ? profile_.density(x) : 0.0; };
        raw_M_ = cell_integrals(grid_, P, oe, 20);
        auto C = cell_integrals(grid_, [&](double x) { return x > 0.0 ? spec_.input(x) * P(x) : 0.0; }, oe, 20);
        std::vector<double> E(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double top = grid_.edge(j + 1);
            E[j] = partial_integral(j, top, [&](double x) {
                return x > 0.0 ? spec_.input(x) * P(x) * std::exp(-(top - x) / b) : 0.0;
            });
        }
        // Tail cell [x_max, inf): bursts never leave it, so E = 0 and q = 0.
        raw_M_.push_back(quad::integrate_to_infinity(P, grid_.x_max(), 1e-10, 1e-300).value);
        C.push_back(quad::integrate_to_infinity([&](double x) { return spec_.input(x) * P(x); }, grid_.x_max(), 1e-10,
                                                1e-300)
                        .value);
        E.push_back(0.0);
        tail_mean_ = quad::integrate_to_infinity([&](double x) { return x * P(x); }, grid_.x_max(), 1e-10, 1e-300).value /
                     raw_M_[n];
        last_mean_ = partial_integral(n - 1, grid_.x_max(), [&](double x) { return x * P(x); }) / raw_M_[n - 1];
        double total = 0.0;
        for (double v : raw_M_) total += v;
        for (double v : raw_M_) {
            if (!(v > 0.0)) throw std::runtime_error("stationary reference underflows on the grid; reduce x_max");
        }
        stationary_.rate = spec_.a;
        stationary_.b = b;
        stationary_.M.resize(n + 1);
        stationary_.C.resize(n + 1);
        stationary_.E.resize(n + 1);
        stationary_.q.resize(n + 1);
        for (std::size_t j = 0; j <= n; ++j) {
            stationary_.M[j] = raw_M_[j] / total;
            stationary_.C[j] = C[j] / total;
            stationary_.E[j] = E[j] / total;
            stationary_.q[j] = j < n ? std::exp(-grid_.width(j) / b) : 0.0;
        }
    }

    /// Integral of f over [edge(j), x] (x inside cell j) with the 20-point rule,
    /// using the origin substitution in cell 0.
    template <class F>
    double partial_integral(std::size_t j, double x, F&& f) const {
        static thread_local const quad::GaussRule rule = quad::gauss_legendre(20);
        if (j == 0) {
            const double oe = profile_.origin_exponent;
            const double q = oe < 0.0 ? 1.0 / (1.0 + oe) : 1.0;
            return quad::gauss_fixed(
                rule, [&](double s) { return s > 0.0 ? f(x * std::pow(s, q)) * x * q * std::pow(s, q - 1.0) : 0.0; },
                0.0, 1.0);
        }
        return quad::gauss_fixed(rule, f, grid_.edge(j), x);
    }

    ShiftMap stationary_shift(double factor) const {
        static thread_local const quad::GaussRule rule = quad::gauss_legendre(20);
        ShiftMap s;
        s.factor = factor;
        const std::size_t n = grid_.cells();
        s.cell.resize(n + 2);
        s.theta.resize(n + 2);
        s.moment.assign(n + 2, 0.0);
        s.tail = true;
        s.tail_gap = tail_mean_ - last_mean_;
        auto P = [&](double x) { return x > 0.0 ? profile_.density(x) : 0.0; };
        for (std::size_t i = 0; i <= n; ++i) {
            const double x = grid_.edge(i) * factor;
            if (x >= grid_.x_max()) {
                s.cell[i] = n;
                s.theta[i] = std::clamp(quad::gauss_fixed(rule, P, grid_.x_max(), x) / raw_M_[n], 0.0, 1.0);
                s.moment[i] =
                    quad::gauss_fixed(rule, [&](double y) { return P(y) * (y - tail_mean_); }, grid_.x_max(), x) /
                    raw_M_[n];
                continue;
            }
            const std::size_t j = grid_.locate(x);
            s.cell[i] = j;
            s.theta[i] = x <= grid_.edge(j) ? 0.0 : std::clamp(partial_integral(j, x, P) / raw_M_[j], 0.0, 1.0);
        }
        s.cell[n + 1] = ShiftMap::npos;
        return s;
    }

    ModelSpec1D spec_;
    Reference reference_;
    StationaryProfile profile_;
    Grid1D grid_;
    std::vector<double> raw_M_;
    double tail_mean_ = 0.0;  // reference mean position of [x_max, inf)
    double last_mean_ = 0.0;  // and of the last grid cell
    ReactionWeights stationary_;
    ReactionWeights transport_;
    ReactionWeights entropy_;
    mutable std::array<std::shared_ptr<ShiftMap>, 2> cache_{};
    mutable std::size_t next_ = 0;
};

/// Cell masses of p(t, .) on a shared discretisation.
struct DensityField1D {
    std::shared_ptr<const Discretization1D> disc;
    std::vector<double> masses;
    double time = 0.0;

    double mass() const {
        double s = 0.0;
        for (double v : masses) s += v;
        return s;
    }
    /// Cell-average density m_j / h_j on the grid cells (the tail cell is left out).
    std::vector<double> values() const {
        std::vector<double> v(disc->grid().cells());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = masses[j] / disc->grid().width(j);
        return v;
    }
};

/// Cell averages of I(x) = int_0^x w(x - y) c(y) p(y) dy, in O(N).
inline std::vector<double> gain_integral(const ReactionWeights& w, const Grid1D& g, std::span<const double> m) {
    const std::size_t n = g.cells();
    std::vector<double> out(n);
    double S = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = m[k] / w.M[k];
        out[k] = ((1.0 - w.q[k]) * S + u * (w.C[k] - w.E[k])) / g.width(k);
        S = w.q[k] * S + u * w.E[k];
    }
    return out;
}

/// I at the grid edges, I(e_k) = S_k / b, by the O(N) recurrence.
inline std::vector<double> gain_integral_edges(const ReactionWeights& w, const Grid1D& g, std::span<const double> m) {
    const std::size_t n = g.cells();
    std::vector<double> out(n + 1);
    double S = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = S / w.b;
        S = w.q[k] * S + (m[k] / w.M[k]) * w.E[k];
    }
    out[n] = S / w.b;
    return out;
}

/// I at the grid edges by direct O(N^2) summation over source cells.
inline std::vector<double> gain_integral_edges_direct(const ReactionWeights& w, const Grid1D& g,
                                                      std::span<const double> m) {
    const std::size_t n = g.cells();
    std::vector<double> out(n + 1, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += (m[j] / w.M[j]) * w.E[j] * std::exp(-(g.edge(k) - g.edge(j + 1)) / w.b);
        out[k] = s / w.b;
    }
    return out;
}

struct SolverConfig {
    double dt = 1e-3;
    SplitScheme scheme = SplitScheme::Heun;
    Reconstruction reconstruction = Reconstruction::Reference;
    double clip_tolerance = 1e-8;  // relative to the mass
};

struct StepReport {
    double clipped = 0.0;
    double lowest = 0.0;
};

/// Bookkeeping of the invariants along a run.
struct InvariantLog {
    double mass0 = 0.0;
    double max_mass_drift = 0.0;
    double cumulative_clipped = 0.0;
    double lowest_before_clip = 0.0;
    double umin0 = 0.0, umax0 = 0.0;
    double max_umax_breach = 0.0;  // max(0, umax(t)/umax(0) - 1)
    double max_umin_breach = 0.0;  // max(0, 1 - umin(t)/umin(0))
    double elapsed = 0.0;
};

struct URange {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
};

inline URange u_range(std::span<const double> m, std::span<const double> M) {
    URange r;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(M[j] > kReferenceFloor)) continue;
        const double u = m[j] / M[j];
        r.lo = std::min(r.lo, u);
        r.hi = std::max(r.hi, u);
    }
    return r;
}

struct RunResult {
    DensityField1D final;
    EntropyTrace trace;
    InvariantLog invariants;
};

class Solver1D {
public:
    Solver1D(std::shared_ptr<const Discretization1D> disc, SolverConfig cfg = {}) : disc_(std::move(disc)), cfg_(cfg) {
        if (!(cfg_.dt > 0.0)) throw ModelError("dt must be > 0");
        if (cfg_.dt > 0.5 / disc_->spec().a) throw ModelError("dt exceeds the explicit bound 0.5 / a");
    }

    const Discretization1D& discretization() const { return *disc_; }
    std::shared_ptr<const Discretization1D> shared_discretization() const { return disc_; }
    const SolverConfig& config() const { return cfg_; }

    DensityField1D field(std::vector<double> masses, double t = 0.0) const {
        if (masses.size() != disc_->state_size()) throw std::invalid_argument("field size does not match the grid");
        return DensityField1D{disc_, std::move(masses), t};
    }

    /// State the twin restarts from every step (Twin reconstruction only).
    void set_twin(std::vector<double> reference) {
        if (reference.size() != disc_->state_size()) throw std::invalid_argument("twin size does not match the grid");
        twin_ref_ = std::move(reference);
    }
    const std::vector<double>& twin() const { return twin_ref_; }

    /// Advances by dt in place. Throws StepRejected when the negative part
    /// removed by clipping exceeds clip_tolerance of the mass.
    StepReport step(DensityField1D& p) const {
        const double dt = cfg_.dt;
        const ShiftMap& full = disc_->shift(dt);
        const ShiftMap& half = cfg_.scheme == SplitScheme::Strang ? disc_->shift(0.5 * dt) : full;
        const bool paired = cfg_.reconstruction == Reconstruction::Twin;
        if (paired) {
            if (twin_ref_.empty()) throw ModelError("twin reconstruction needs a twin reference");
            twin_ = twin_ref_;
        }
        fiber_step(disc_->transport_weights(), full, half, dt, cfg_.scheme, p.masses, ws_, cfg_.reconstruction,
                   paired ? std::span<double>(twin_) : std::span<double>{});
        const auto [clipped, lowest] = clip_negative(p.masses);
        if (clipped > cfg_.clip_tolerance * std::max(p.mass(), 1e-300)) {
            throw StepRejected("clipped mass " + std::to_string(clipped) + " exceeds tolerance; reduce dt");
        }
        p.time += dt;
        return {clipped, lowest};
    }

    TraceRow observe(const DensityField1D& p) const {
        const auto& ws = disc_->entropy_weights();
        TraceRow r;
        r.t = p.time;
        r.G2 = g2(p.masses, ws.M).value;
        r.D2 = d2(ws, p.masses);
        r.mass = p.mass();
        const auto ur = u_range(p.masses, ws.M);
        r.umin = ur.lo;
        r.umax = ur.hi;
        return r;
    }

    /// Fixed-dt run to t_end with a trace row every `cadence` time units;
    /// on_record sees the state at every trace row.
    RunResult run(DensityField1D p, double t_end, double cadence,
                  const std::function<void(const DensityField1D&)>& on_record = {}) const {
        if (!(std::abs(p.mass() - 1.0) < 1e-8)) throw ModelError("initial density must have mass 1 within 1e-8");
        for (double v : p.masses) {
            if (!(v >= 0.0)) throw ModelError("initial density must be nonnegative");
        }
        const auto n_steps = static_cast<std::size_t>(std::llround(t_end / cfg_.dt));
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cadence / cfg_.dt)));
        RunResult res;
        auto& inv = res.invariants;
        const auto& M = disc_->stationary_masses();
        inv.mass0 = p.mass();
        const auto u0 = u_range(p.masses, M);
        inv.umin0 = u0.lo;
        inv.umax0 = u0.hi;
        res.trace.rows.push_back(observe(p));
        if (on_record) on_record(p);
        // dG2/dt of each row is a difference over one step either side of it
        // (one-sided at the ends), so it measures the time scheme, not the cadence.
        double g_prev = res.trace.rows.back().G2, g_before = g_prev;
        bool open_row = true, first = true;
        for (std::size_t i = 1; i <= n_steps; ++i) {
            const auto rep = step(p);
            inv.cumulative_clipped += rep.clipped;
            inv.lowest_before_clip = std::min(inv.lowest_before_clip, rep.lowest);
            const double mass = p.mass();
            if (!std::isfinite(mass)) throw SolverAbort("NaN in density at t = " + std::to_string(p.time), p.masses, p.time);
            inv.max_mass_drift = std::max(inv.max_mass_drift, std::abs(mass - inv.mass0));
            const auto ur = u_range(p.masses, M);
            inv.max_umax_breach = std::max(inv.max_umax_breach, ur.hi / inv.umax0 - 1.0);
            if (inv.umin0 > 0.0) inv.max_umin_breach = std::max(inv.max_umin_breach, 1.0 - ur.lo / inv.umin0);
            const bool record = i % stride == 0 || i == n_steps;
            const bool need_g = open_row || record || (i + 1) % stride == 0 || i + 1 == n_steps;
            const double g_now = need_g ? g2(p.masses, M).value : 0.0;
            if (open_row) {
                auto& r = res.trace.rows.back();
                r.dG2dt = (g_now - g_before) / (first ? cfg_.dt : 2.0 * cfg_.dt);
                open_row = first = false;
            }
            if (record) {
                res.trace.rows.push_back(observe(p));
                if (on_record) on_record(p);
                g_before = g_prev;
                open_row = true;
            }
            g_prev = g_now;
        }
        if (open_row && res.trace.rows.size() > 1) {
            res.trace.rows.back().dG2dt = (res.trace.rows.back().G2 - g_before) / cfg_.dt;
        }
        inv.elapsed = p.time - res.trace.rows.front().t;
        res.final = std::move(p);
        return res;
    }

    /// Largest G2 seen on [0, t_relax] when starting from the cell masses of
    /// the analytic profile: the level at which G2 stops measuring distance to
    /// equilibrium and starts measuring discretization error.
    double equilibrium_floor(double t_relax) const {
        auto p = field(disc_->stationary_masses());
        const auto& M = disc_->stationary_masses();
        double worst = 0.0;
        const auto n_steps = static_cast<std::size_t>(std::llround(t_relax / cfg_.dt));
        for (std::size_t i = 0; i < n_steps; ++i) {
            step(p);
            worst = std::max(worst, g2(p.masses, M).value);
        }
        return worst;
    }

private:
    std::shared_ptr<const Discretization1D> disc_;
    SolverConfig cfg_;
    mutable FiberWorkspace ws_;
    std::vector<double> twin_ref_;
    mutable std::vector<double> twin_;
};

/// Fixed point of the discrete scheme, reached by stepping from the
/// stationary cell masses until the L1 drift per unit time over `interval`
/// falls below `tolerance`. It differs from the cell masses of P by the
/// discretisation error, most visibly in the far tail.
struct DiscreteStationary1D {
    std::vector<double> masses;
    double time = 0.0;
    double drift = 0.0;
    bool converged = false;
};

inline DiscreteStationary1D discrete_stationary_1d(const Solver1D& solver, double tolerance = 1e-10,
                                                   double interval = 1.0, double t_max = 500.0) {
    auto p = solver.field(solver.discretization().stationary_masses());
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(interval / solver.config().dt)));
    const double span = static_cast<double>(steps) * solver.config().dt;
    DiscreteStationary1D out;
    std::vector<double> prev = p.masses;
    while (p.time < t_max) {
        for (std::size_t s = 0; s < steps; ++s) solver.step(p);
        double d = 0.0;
        for (std::size_t j = 0; j < prev.size(); ++j) d += std::abs(p.masses[j] - prev[j]);
        out.drift = d / span;
        prev = p.masses;
        if (out.drift < tolerance) {
            out.converged = true;
            break;
        }
    }
    out.time = p.time;
    out.masses = std::move(p.masses);
    return out;
}

/// Solver with Twin reconstruction and the reference it returns to: the fixed
/// point of the same scheme with Constant reconstruction.
struct TwinSetup1D {
    Solver1D solver;
    DiscreteStationary1D reference;
};

inline TwinSetup1D make_twin_setup_1d(const Solver1D& base, double tolerance = 1e-10, double t_max = 500.0) {
    auto cfg = base.config();
    cfg.reconstruction = Reconstruction::Constant;
    const Solver1D constant(base.shared_discretization(), cfg);
    auto ref = discrete_stationary_1d(constant, tolerance, 1.0, t_max);
    cfg.reconstruction = Reconstruction::Twin;
    Solver1D twin(base.shared_discretization(), cfg);
    twin.set_twin(ref.masses);
    return {std::move(twin), std::move(ref)};
}

/// Invariants for two solutions advanced side by side, with u = m / reference.
/// The limited reconstruction is not monotone against the fixed point of the
/// Reference scheme; with make_twin_setup_1d the range of u is kept exactly.
struct Battery1D {
    double mass_drift = 0.0;
    double clipped_per_time = 0.0;
    double lowest_before_clip = 0.0;
    double l1_breach = 0.0;  // largest one-step increase of ||p - q||_1
    double umax_breach = 0.0;
    double umin_breach = 0.0;
    double elapsed = 0.0;
};

inline Battery1D invariant_battery_1d(const Solver1D& solver, std::span<const double> M, DensityField1D p,
                                      DensityField1D q, double t_end) {
    Battery1D r;
    const double mp = p.mass(), mq = q.mass();
    const auto up = u_range(p.masses, M), uq = u_range(q.masses, M);
    auto l1 = [&] {
        double d = 0.0;
        for (std::size_t j = 0; j < p.masses.size(); ++j) d += std::abs(p.masses[j] - q.masses[j]);
        return d;
    };
    double d_prev = l1(), clipped = 0.0;
    const auto n_steps = static_cast<std::size_t>(std::llround(t_end / solver.config().dt));
    for (std::size_t i = 0; i < n_steps; ++i) {
        const auto a = solver.step(p);
        const auto b = solver.step(q);
        clipped += std::max(a.clipped, b.clipped);
        r.lowest_before_clip = std::min({r.lowest_before_clip, a.lowest, b.lowest});
        r.mass_drift = std::max({r.mass_drift, std::abs(p.mass() - mp), std::abs(q.mass() - mq)});
        const double d = l1();
        r.l1_breach = std::max(r.l1_breach, d - d_prev);
        d_prev = d;
        const auto u = u_range(p.masses, M), v = u_range(q.masses, M);
        r.umax_breach = std::max({r.umax_breach, u.hi / up.hi - 1.0, v.hi / uq.hi - 1.0});
        if (up.lo > 0.0) r.umin_breach = std::max(r.umin_breach, 1.0 - u.lo / up.lo);
        if (uq.lo > 0.0) r.umin_breach = std::max(r.umin_breach, 1.0 - v.lo / uq.lo);
    }
    r.elapsed = static_cast<double>(n_steps) * solver.config().dt;
    r.clipped_per_time = r.elapsed > 0.0 ? clipped / r.elapsed : 0.0;
    return r;
}

}  // namespace genepide
