#pragma once

// Relative entropy functionals on cell masses. A density is given by its cell
// masses m_j over a reference with cell masses M_j (sum M_j = 1 for the
// stationary reference), and u_j = m_j / M_j is piecewise constant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genepide/fiber.hpp"
#include "genepide/grid.hpp"
#include "genepide/quadrature.hpp"

namespace genepide {

class EntropyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reference cells with mass at or below this floor are left out of every
/// functional; the mass of the density sitting on them is reported.
inline constexpr double kReferenceFloor = 1e-300;

struct FunctionalValue {
    double value = 0.0;
    double excluded_mass = 0.0;
    std::size_t excluded_cells = 0;
};

/// G_H = sum H(u_j) M_j for a convex H.
template <class Hfn>
FunctionalValue relative_entropy(std::span<const double> m, std::span<const double> M, Hfn&& H) {
    if (m.size() != M.size()) throw std::invalid_argument("relative_entropy: size mismatch");
    FunctionalValue r;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(M[j] > kReferenceFloor)) {
            r.excluded_mass += m[j];
            ++r.excluded_cells;
            continue;
        }
        r.value += H(m[j] / M[j]) * M[j];
    }
    return r;
}

/// G_2 = sum (m_j - M_j)^2 / M_j.
inline FunctionalValue g2(std::span<const double> m, std::span<const double> M) {
    if (m.size() != M.size()) throw std::invalid_argument("g2: size mismatch");
    FunctionalValue r;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(M[j] > kReferenceFloor)) {
            r.excluded_mass += m[j];
            ++r.excluded_cells;
            continue;
        }
        const double d = m[j] - M[j];
        r.value += d * d / M[j];
    }
    return r;
}

/// Rejects densities whose mass differs from the reference mass; the
/// identities below hold only for equal masses.
inline void require_equal_mass(std::span<const double> m, std::span<const double> M, double tol = 1e-8) {
    const double sm = std::accumulate(m.begin(), m.end(), 0.0);
    const double sM = std::accumulate(M.begin(), M.end(), 0.0);
    if (!(std::abs(sm - sM) <= tol * std::max(1.0, sM))) {
        throw EntropyError("density mass " + std::to_string(sm) + " differs from reference mass " +
                           std::to_string(sM));
    }
}

/// H_2 = sum_{j<k} M_j M_k (u_k - u_j)^2 by explicit pair summation.
inline double h2_direct(std::span<const double> m, std::span<const double> M) {
    const std::size_t n = m.size();
    std::vector<double> u(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) u[j] = M[j] > kReferenceFloor ? m[j] / M[j] : 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!(M[j] > kReferenceFloor)) continue;
        double row = 0.0;
        for (std::size_t k = j + 1; k < n; ++k) {
            if (!(M[k] > kReferenceFloor)) continue;
            const double d = u[k] - u[j];
            row += M[k] * d * d;
        }
        total += M[j] * row;
    }
    return total;
}

/// H_2 in O(N): sum M * sum M (u - ubar)^2 - (sum M (u - ubar))^2, with ubar
/// the weighted mean so the second term is a rounding-level correction.
inline double h2(std::span<const double> m, std::span<const double> M) {
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(M[j] > kReferenceFloor)) continue;
        s0 += M[j];
        s1 += m[j];
    }
    const double ubar = s1 / s0;
    double t1 = 0.0, t2 = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(M[j] > kReferenceFloor)) continue;
        const double d = m[j] / M[j] - ubar;
        t1 += M[j] * d;
        t2 += M[j] * d * d;
    }
    return s0 * t2 - t1 * t1;
}

/// D_2 = rate * sum_{j<k} W_jk (u_k - u_j)^2 with
/// W_jk = E_j exp(-(e_k - e_{j+1})/b) (1 - q_k), the reference mass of
/// bursts from cell j landing in cell k. Pairs are summed one by one.
inline double d2_direct(const ReactionWeights& w, const Grid1D& g, std::span<const double> m) {
    const std::size_t n = w.size();
    std::vector<double> u(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) u[j] = w.M[j] > kReferenceFloor ? m[j] / w.M[j] : 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (w.E[j] == 0.0) continue;
        double row = 0.0;
        for (std::size_t k = j + 1; k < n; ++k) {
            const double d = u[k] - u[j];
            row += std::exp(-(g.edge(k) - g.edge(j + 1)) / w.b) * (1.0 - w.q[k]) * d * d;
        }
        total += w.E[j] * row;
    }
    return w.rate * total;
}

/// D_2 in O(N). With S0_k = sum_{j<k} E_j phi_jk, S1_k = sum E_j phi_jk (u_k - u_j)
/// and S2_k = sum E_j phi_jk (u_k - u_j)^2, moving k -> k+1 multiplies phi by
/// q_k and shifts every difference by delta = u_{k+1} - u_k.
inline double d2(const ReactionWeights& w, std::span<const double> m) {
    const std::size_t n = w.size();
    double S0 = 0.0, S1 = 0.0, S2 = 0.0, total = 0.0;
    auto u_of = [&](std::size_t j) { return w.M[j] > kReferenceFloor ? m[j] / w.M[j] : 0.0; };
    double u_prev = u_of(0);
    for (std::size_t k = 0; k < n; ++k) {
        const double uk = u_of(k);
        if (k > 0) {
            const double delta = uk - u_prev;
            const double q = w.q[k - 1];
            const double e = w.E[k - 1];
            S2 = q * (S2 + 2.0 * delta * S1 + delta * delta * S0) + e * delta * delta;
            S1 = q * (S1 + delta * S0) + e * delta;
            S0 = q * S0 + e;
        }
        total += (1.0 - w.q[k]) * S2;
        u_prev = uk;
    }
    return w.rate * total;
}

/// Quadrature nodes inside every cell, with weights carrying the reference density.
struct ReferenceNodes {
    std::size_t per_cell = 0;
    std::vector<double> x;
    std::vector<double> w;
};

/// Gauss-Legendre nodes per cell weighted by `density`; the origin cell uses
/// x = e1 s^q to absorb an x^origin_exponent singularity. Weights are scaled
/// by `scale` (e.g. the reciprocal of the total reference mass).
template <class F>
ReferenceNodes reference_nodes(const Grid1D& g, F&& density, double origin_exponent, double scale,
                               std::size_t order = 12) {
    const auto rule = quad::gauss_legendre(order);
    ReferenceNodes r;
    r.per_cell = order;
    r.x.resize(g.cells() * order);
    r.w.resize(g.cells() * order);
    const double qexp = origin_exponent < 0.0 ? 1.0 / (1.0 + origin_exponent) : 1.0;
    for (std::size_t j = 0; j < g.cells(); ++j) {
        for (std::size_t i = 0; i < order; ++i) {
            const double t = 0.5 * (rule.nodes[i] + 1.0);
            double x, jac;
            if (j == 0) {
                x = g.edge(1) * std::pow(t, qexp);
                jac = g.edge(1) * qexp * std::pow(t, qexp - 1.0);
            } else {
                x = g.edge(j) + t * g.width(j);
                jac = g.width(j);
            }
            r.x[j * order + i] = x;
            r.w[j * order + i] = 0.5 * rule.weights[i] * jac * density(x) * scale;
        }
    }
    return r;
}

/// D(u) = int_0^inf int_y^{y+1} ref(y) (u(x) - u(y))^2 dx dy for piecewise
/// constant u. For each y node the band [y, y+1] is cut against the cells.
inline double band_functional(const Grid1D& g, const ReferenceNodes& nodes, std::span<const double> m,
                              std::span<const double> M, double band = 1.0) {
    const std::size_t n = g.cells();
    std::vector<double> u(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) u[j] = M[j] > kReferenceFloor ? m[j] / M[j] : 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < nodes.per_cell; ++i) {
            const double y = nodes.x[j * nodes.per_cell + i];
            const double wy = nodes.w[j * nodes.per_cell + i];
            if (wy == 0.0) continue;
            const double top = std::min(y + band, g.x_max());
            double inner = 0.0;
            for (std::size_t k = j + 1; k < n && g.edge(k) < top; ++k) {
                const double len = std::min(top, g.edge(k + 1)) - g.edge(k);
                const double d = u[k] - u[j];
                inner += len * d * d;
            }
            total += wy * inner;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Traces and decay fits

struct TraceRow {
    double t = 0.0;
    double G2 = 0.0;
    double D2 = 0.0;
    double dG2dt = 0.0;
    double mass = 0.0;
    double umin = 0.0;
    double umax = 0.0;
};

struct EntropyTrace {
    std::vector<TraceRow> rows;

    /// Fills dG2dt by centred differences (one-sided at the ends).
    void finalize_derivative() {
        const std::size_t n = rows.size();
        if (n < 2) return;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
            rows[i].dG2dt = (rows[hi].G2 - rows[lo].G2) / (rows[hi].t - rows[lo].t);
        }
    }
};

struct DecayFit {
    double lambda_est = 0.0;  // rate of the weighted L2 norm, half the G2 rate
    double g2_rate = 0.0;     // -slope of log G2
    double t_begin = 0.0;
    double t_end = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

/// Fits log G2 against t over the largest suffix window with R^2 >= min_r2.
/// Rows are used up to the first one whose G2 falls below 10 * floor.
inline DecayFit fit_decay_rate(const EntropyTrace& trace, double floor = 1e-14, double min_r2 = 0.99,
                               std::size_t min_points = 5) {
    if (trace.rows.size() < 10) throw EntropyError("fit_decay_rate: need at least 10 trace rows");
    std::vector<double> t, y;
    for (const auto& r : trace.rows) {
        if (!(r.G2 > 10.0 * floor)) break;
        t.push_back(r.t);
        y.push_back(std::log(r.G2));
    }
    if (t.size() < 10) throw EntropyError("fit_decay_rate: fewer than 10 rows above the quadrature floor");
    const std::size_t n = t.size();
    for (std::size_t start = 0; start + min_points <= n; ++start) {
        const auto f = least_squares(std::span(t).subspan(start), std::span(y).subspan(start));
        if (f.r_squared >= min_r2) {
            DecayFit d;
            d.g2_rate = -f.slope;
            d.lambda_est = -f.slope / 2.0;
            d.t_begin = t[start];
            d.t_end = t.back();
            d.r_squared = f.r_squared;
            d.points = n - start;
            return d;
        }
    }
    throw EntropyError("no linear regime found");
}

// ---------------------------------------------------------------------------
// Probe densities and the functional inequalities

/// u = beta + sum_i alpha_i phi_i with 1 to 3 log-normal bumps phi_i (peak
/// value 1), so u is bounded above and below by construction; the density is
/// m = M u rescaled to the reference mass. M may carry one entry past the
/// grid (the tail cell), where the bumps are evaluated at x_max.
inline std::vector<double> probe_density(const Grid1D& g, std::span<const double> M, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Bump centres are drawn log-uniformly over the part of the grid carrying
    // reference mass.
    double lo = 0.0, hi = 0.0, acc = 0.0;
    const double total = std::accumulate(M.begin(), M.end(), 0.0);
    for (std::size_t j = 0; j < g.cells(); ++j) {
        acc += M[j];
        if (lo == 0.0 && acc >= 1e-4 * total) lo = std::max(g.center(j), g.edge(1));
        if (acc <= (1.0 - 1e-4) * total) hi = g.center(j);
    }
    if (!(hi > lo)) hi = lo * 10.0;
    const double beta = 0.05 + 0.95 * unit(rng);
    const int k = count(rng);
    std::vector<double> mu(k), sigma(k), alpha(k);
    for (int i = 0; i < k; ++i) {
        mu[i] = std::log(lo) + unit(rng) * (std::log(hi) - std::log(lo));
        sigma[i] = 0.1 + 0.9 * unit(rng);
        alpha[i] = 0.2 + 2.8 * unit(rng);
    }
    std::vector<double> m(M.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < M.size(); ++j) {
        const double lx = std::log(j < g.cells() ? g.center(j) : g.x_max());
        double u = beta;
        for (int i = 0; i < k; ++i) {
            const double z = (lx - mu[i]) / sigma[i];
            u += alpha[i] * std::exp(-0.5 * z * z);
        }
        m[j] = M[j] * u;
        sum += m[j];
    }
    for (double& v : m) v *= total / sum;
    return m;
}

struct ProbeSample {
    double G2 = 0.0;
    double H2 = 0.0;
    double D2 = 0.0;
    double D = 0.0;
};

struct ProbeReport {
    std::size_t samples = 0;
    std::size_t skipped = 0;
    double min_d2_over_g2 = std::numeric_limits<double>::infinity();  // estimate of 2 beta
    double min_d2_over_d = std::numeric_limits<double>::infinity();   // estimate of alpha
    double max_g2_h2_rel = 0.0;
    double alpha_bound = 0.0;         // a eps e^{-1/b} / b
    double alpha_bound_tight = 0.0;   // a^2 eps e^{-1/b} / b
    std::size_t violations = 0;       // samples with D > (b/(a eps)) e^{1/b} D2
    std::size_t violations_tight = 0; // samples with D > (b/(a eps)) e^{1/b} D2 / a
    double worst_margin = std::numeric_limits<double>::infinity();        // min of bound - D, relative to D
    double worst_margin_tight = std::numeric_limits<double>::infinity();
    std::vector<ProbeSample> rows;
};

/// Evaluates G2, H2, D2 and the band functional D on each sample and
/// collects the empirical inequality constants. Samples with G2 below
/// g2_floor are skipped.
inline ProbeReport probe_inequalities(const std::vector<std::vector<double>>& samples, const Grid1D& g,
                                      const ReactionWeights& w, const ReferenceNodes& nodes, double epsilon,
                                      double g2_floor = 1e-14) {
    ProbeReport rep;
    const double a = w.rate, b = w.b;
    rep.alpha_bound = a * epsilon * std::exp(-1.0 / b) / b;
    rep.alpha_bound_tight = rep.alpha_bound * a;
    const double k_bound = b / (a * epsilon) * std::exp(1.0 / b);
    const double k_tight = k_bound / a;
    for (const auto& m : samples) {
        ProbeSample s;
        s.G2 = g2(m, w.M).value;
        if (!(s.G2 > g2_floor)) {
            ++rep.skipped;
            continue;
        }
        s.H2 = h2_direct(m, w.M);
        s.D2 = d2(w, m);
        s.D = band_functional(g, nodes, m, w.M);
        ++rep.samples;
        rep.min_d2_over_g2 = std::min(rep.min_d2_over_g2, s.D2 / s.G2);
        if (s.D > 0.0) rep.min_d2_over_d = std::min(rep.min_d2_over_d, s.D2 / s.D);
        rep.max_g2_h2_rel = std::max(rep.max_g2_h2_rel, std::abs(s.G2 - s.H2) / s.G2);
        const double bound = k_bound * s.D2, bound_t = k_tight * s.D2;
        if (s.D > bound) ++rep.violations;
        if (s.D > bound_t) ++rep.violations_tight;
        if (s.D > 0.0) {
            rep.worst_margin = std::min(rep.worst_margin, (bound - s.D) / s.D);
            rep.worst_margin_tight = std::min(rep.worst_margin_tight, (bound_t - s.D) / s.D);
        }
        rep.rows.push_back(s);
    }
    return rep;
}

}  // namespace genepide
