#pragma once

// Discrete burst/decay operators on one axis. The state is a vector of cell
// masses m_j; inside cell j the density is u_j times a reference density
// (the stationary density in 1D, or Lebesgue measure on nD fibers), so that
// u_j = m_j / M_j with M_j the reference mass of the cell.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "genepide/grid.hpp"

namespace genepide {

/// Cell weights of the burst operator for one fiber.
///   M_j = int_cell ref,  C_j = int_cell c ref,
///   E_j = int_cell c ref exp(-(e_{j+1} - y)/b),  q_j = exp(-h_j/b).
struct ReactionWeights {
    double rate = 0.0;  // burst frequency (a in 1D, k_m^i on axis i)
    double b = 1.0;
    std::vector<double> M, C, E, q;

    std::size_t size() const { return M.size(); }
};

/// Pulled-back position of a grid edge: cell index and the fraction of that
/// cell's reference mass lying to its left. cell == npos means beyond x_max.
///
/// With a tail cell (the last state entry standing for [x_max, inf)), u is
/// taken linear in x there, u_T + s (x - xbar_T), with s fixed by the
/// distance between the reference means of the last two cells. `moment`
/// holds int_{x_max}^{x} ref (x' - xbar_T) dx' / M_T for edges inside the tail.
struct ShiftMap {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    double factor = 1.0;  // e^{gamma dt}
    std::vector<std::size_t> cell;
    std::vector<double> theta;
    bool tail = false;
    double tail_gap = 0.0;  // xbar_T - xbar_{T-1}
    std::vector<double> moment;
};

/// Lebesgue weights with c sampled at the cell centres.
inline ReactionWeights lebesgue_weights(const Grid1D& g, double rate, double b, std::span<const double> c_at_centre) {
    const std::size_t n = g.cells();
    if (c_at_centre.size() != n) throw std::invalid_argument("lebesgue_weights: size mismatch");
    ReactionWeights w;
    w.rate = rate;
    w.b = b;
    w.M.resize(n);
    w.C.resize(n);
    w.E.resize(n);
    w.q.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double h = g.width(j);
        w.M[j] = h;
        w.C[j] = c_at_centre[j] * h;
        w.E[j] = c_at_centre[j] * b * -std::expm1(-h / b);
        w.q[j] = std::exp(-h / b);
    }
    return w;
}

/// Shift map for the Lebesgue reference: theta is linear inside each cell.
inline ShiftMap lebesgue_shift(const Grid1D& g, double factor) {
    ShiftMap s;
    s.factor = factor;
    const std::size_t n = g.cells();
    s.cell.resize(n + 1);
    s.theta.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = g.edge(i) * factor;
        if (x >= g.x_max()) {
            s.cell[i] = ShiftMap::npos;
            s.theta[i] = 0.0;
            continue;
        }
        const std::size_t j = g.locate(x);
        s.cell[i] = j;
        s.theta[i] = std::clamp((x - g.edge(j)) / g.width(j), 0.0, 1.0);
    }
    return s;
}

/// Net burst rate per cell, out = L m. Mass that would burst beyond x_max is
/// returned to the last cell, so sum(out) == 0 up to rounding.
inline void apply_reaction(const ReactionWeights& w, std::span<const double> m, std::span<double> out) {
    const std::size_t n = w.size();
    double S = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = m[k] / w.M[k];
        out[k] = w.rate * ((1.0 - w.q[k]) * S - u * w.E[k]);
        S = w.q[k] * S + u * w.E[k];
    }
    out[n - 1] += w.rate * S;
}

/// Limited slope of u per unit reference-mass fraction of each cell. One-sided
/// differences are divided by the distance between cell centres measured in
/// that unit, so uneven reference masses do not bias the slope. The limiter
/// keeps both edge values between the neighbouring cell values. The first
/// and last cells get zero slope.
inline void limited_slopes(std::span<const double> u, std::span<const double> M, std::span<double> s) {
    const std::size_t n = u.size();
    if (n == 0) return;
    s[0] = 0.0;
    s[n - 1] = 0.0;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double jl = u[j] - u[j - 1];
        const double jr = u[j + 1] - u[j];
        if (jl * jr <= 0.0) {
            s[j] = 0.0;
            continue;
        }
        const double c = 0.5 * (jl * (2.0 * M[j] / (M[j - 1] + M[j])) + jr * (2.0 * M[j] / (M[j] + M[j + 1])));
        const double lim = 2.0 * std::min(std::abs(jl), std::abs(jr));
        s[j] = std::copysign(std::min(std::abs(c), lim), c);
    }
}

/// Dilation step: new m_k is the old mass on [e_k f, e_{k+1} f], f = e^{gamma dt}.
/// Exactly conservative; u_work and s_work need the fiber length.
inline void apply_transport(const ShiftMap& sm, std::span<const double> M, std::span<const double> m,
                            std::span<double> out, std::span<double> u_work, std::span<double> s_work) {
    const std::size_t n = M.size();
    for (std::size_t j = 0; j < n; ++j) u_work[j] = M[j] != 0.0 ? m[j] / M[j] : 0.0;
    limited_slopes(u_work, M, s_work);
    const double tail_slope = sm.tail && n > 1 ? (u_work[n - 1] - u_work[n - 2]) / sm.tail_gap : 0.0;
    // Mass of cell j between reference fractions t0 < t1; mu0, mu1 are the
    // tail moments at the same points.
    auto partial = [&](std::size_t j, double t0, double t1, double mu0, double mu1) {
        if (sm.tail && j == n - 1) return M[j] * ((t1 - t0) * u_work[j] + tail_slope * (mu1 - mu0));
        return M[j] * (t1 - t0) * (u_work[j] + s_work[j] * (0.5 * (t0 + t1) - 0.5));
    };
    auto mom = [&](std::size_t i) { return sm.tail ? sm.moment[i] : 0.0; };
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t ja = sm.cell[k];
        if (ja == ShiftMap::npos) {
            out[k] = 0.0;
            continue;
        }
        const double ta = sm.theta[k];
        const double mua = mom(k);
        std::size_t jb = sm.cell[k + 1];
        double tb = sm.theta[k + 1];
        double mub = mom(k + 1);
        if (jb == ShiftMap::npos) {
            jb = n - 1;
            tb = 1.0;
            mub = 0.0;
        }
        if (ja == jb) {
            out[k] = partial(ja, ta, tb, mua, mub);
        } else {
            double acc = partial(ja, ta, 1.0, mua, 0.0);
            for (std::size_t j = ja + 1; j < jb; ++j) acc += m[j];
            acc += partial(jb, 0.0, tb, 0.0, mub);
            out[k] = acc;
        }
    }
}

enum class SplitScheme { Lie, Strang, Heun };

inline const char* to_string(SplitScheme s) {
    switch (s) {
        case SplitScheme::Lie: return "lie";
        case SplitScheme::Strang: return "strang";
        case SplitScheme::Heun: return "heun";
    }
    return "?";
}

/// What u = m / W is reconstructed against in the transport.
///   Reference: W = the reference masses M (second order).
///   Constant:  W = the transported masses themselves, so u = 1 and the
///              slopes vanish (first order, linear in m).
///   Twin:      W = a twin state advanced alongside m with Constant
///              reconstruction. If the twin starts at a fixed point of the
///              Constant scheme it returns to it, and u = m / W keeps its
///              range through every stage.
enum class Reconstruction { Reference, Constant, Twin };

inline const char* to_string(Reconstruction r) {
    switch (r) {
        case Reconstruction::Reference: return "reference";
        case Reconstruction::Constant: return "constant";
        case Reconstruction::Twin: return "twin";
    }
    return "?";
}

/// Scratch buffers for fiber_step, sized once per fiber length.
struct FiberWorkspace {
    std::vector<double> a, b, c, d, u, s, ta, tb, tc, td;
    void resize(std::size_t n) {
        for (auto* v : {&a, &b, &c, &d, &u, &s, &ta, &tb, &tc, &td}) v->assign(n, 0.0);
    }
};

/// One time step on a fiber, in place. `full` maps edges by e^{gamma dt};
/// `half` by e^{gamma dt / 2} and is only read by the Strang scheme. With
/// Reconstruction::Twin, `twin` holds the twin fiber and is advanced too.
///
///   Lie:    m <- X(m + dt L m)
///   Strang: m <- X_half R X_half m, with R the two-stage Runge-Kutta reaction
///   Heun:   m* = X(m + dt L m);  m <- X(m + dt/2 L m) + dt/2 L m*
inline void fiber_step(const ReactionWeights& w, const ShiftMap& full, const ShiftMap& half, double dt,
                       SplitScheme scheme, std::span<double> m, FiberWorkspace& ws,
                       Reconstruction rec = Reconstruction::Reference, std::span<double> twin = {}) {
    const std::size_t n = w.size();
    if (ws.a.size() != n) ws.resize(n);
    const bool paired = rec == Reconstruction::Twin;
    if (paired && twin.size() != n) throw std::invalid_argument("fiber_step: twin fiber has the wrong length");
    std::span<double> A(ws.a), B(ws.b), Cw(ws.c), D(ws.d), U(ws.u), S(ws.s);
    std::span<double> TA(ws.ta), TB(ws.tb), TC(ws.tc), TD(ws.td);
    const std::span<const double> M(w.M);
    // Twin weights are floored so cells where the twin underflowed keep their mass.
    auto floor_twin = [&](std::span<double> v) {
        for (double& x : v) x = std::max(x, 1e-300);
    };
    // X applied to `in` (whose twin stage is `tin`), written to `out`.
    auto X = [&](const ShiftMap& sm, std::span<const double> in, std::span<double> tin, std::span<double> out) {
        switch (rec) {
            case Reconstruction::Reference: apply_transport(sm, M, in, out, U, S); break;
            case Reconstruction::Constant: apply_transport(sm, in, in, out, U, S); break;
            case Reconstruction::Twin:
                floor_twin(tin);
                apply_transport(sm, tin, in, out, U, S);
                break;
        }
    };
    auto XT = [&](const ShiftMap& sm, std::span<const double> tin, std::span<double> tout) {
        apply_transport(sm, tin, tin, tout, U, S);
    };
    auto axpy = [n](std::span<const double> x, double a, std::span<const double> y, std::span<double> out) {
        for (std::size_t j = 0; j < n; ++j) out[j] = x[j] + a * y[j];
    };
    switch (scheme) {
        case SplitScheme::Lie: {
            apply_reaction(w, m, A);
            axpy(m, dt, A, B);
            if (paired) {
                apply_reaction(w, twin, TA);
                axpy(twin, dt, TA, TB);
            }
            X(full, B, TB, m);
            if (paired) XT(full, TB, twin);
            break;
        }
        case SplitScheme::Strang: {
            if (paired) {
                floor_twin(twin);
                XT(half, twin, TB);
            }
            X(half, m, twin, B);
            apply_reaction(w, B, A);
            axpy(B, dt, A, Cw);
            apply_reaction(w, Cw, D);
            for (std::size_t j = 0; j < n; ++j) B[j] += 0.5 * dt * (A[j] + D[j]);
            if (paired) {
                apply_reaction(w, TB, TA);
                axpy(TB, dt, TA, TC);
                apply_reaction(w, TC, TD);
                for (std::size_t j = 0; j < n; ++j) TB[j] += 0.5 * dt * (TA[j] + TD[j]);
            }
            X(half, B, TB, m);
            if (paired) XT(half, TB, twin);
            break;
        }
        case SplitScheme::Heun: {
            apply_reaction(w, m, A);
            axpy(m, dt, A, B);
            if (paired) {
                apply_reaction(w, twin, TA);
                axpy(twin, dt, TA, TB);
            }
            X(full, B, TB, Cw);  // m*
            if (paired) XT(full, TB, TC);
            axpy(m, 0.5 * dt, A, B);
            if (paired) axpy(twin, 0.5 * dt, TA, TB);
            X(full, B, TB, D);
            if (paired) XT(full, TB, TD);
            apply_reaction(w, Cw, A);
            axpy(D, 0.5 * dt, A, m);
            if (paired) {
                apply_reaction(w, TC, TA);
                axpy(TD, 0.5 * dt, TA, twin);
            }
            break;
        }
    }
}

/// Sets negative entries to zero; returns {clipped mass, most negative value}.
inline std::pair<double, double> clip_negative(std::span<double> m) {
    double clipped = 0.0, lowest = 0.0;
    for (double& v : m) {
        if (v < 0.0) {
            clipped -= v;
            lowest = std::min(lowest, v);
            v = 0.0;
        }
    }
    return {clipped, lowest};
}

}  // namespace genepide
