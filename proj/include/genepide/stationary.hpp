#pragma once

// Closed-form one-gene stationary density, its normalisation, endpoint
// behaviour and the five-way shape taxonomy for positive feedback.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "genepide/grid.hpp"
#include "genepide/model.hpp"
#include "genepide/quadrature.hpp"

namespace genepide {

struct EndpointExponents {
    double origin = 0.0;      // P ~ x^origin as x -> 0
    double tail_power = 0.0;  // P ~ x^tail_power e^{-x tail_rate} as x -> inf
    double tail_rate = 0.0;
};

inline EndpointExponents endpoint_exponents(const ModelSpec1D& s) {
    s.validate();
    if (s.epsilon == 1.0) return {s.a - 1.0, s.a - 1.0, 1.0 / s.b};
    if (s.H > 0) return {s.a - 1.0, s.a * s.epsilon - 1.0, 1.0 / s.b};
    return {s.a * s.epsilon - 1.0, s.a - 1.0, 1.0 / s.b};
}

/// log of [x^H + K^H]^{a(eps-1)/H} x^{a-1} e^{-x/b}.
///
/// The bracket is formed as log(x^m + K^m) with m = |H| through a
/// log-sum-exp, and for H < 0 the factor (x K)^{-m} is taken out, so no power
/// of x with a negative exponent is ever materialised.
inline double log_stationary_unnormalized(double x, const ModelSpec1D& s) {
    if (!(x > 0.0)) throw std::domain_error("stationary density requires x > 0");
    const double lx = std::log(x);
    const double lk = std::log(s.K);
    const double m = std::abs(static_cast<double>(s.H));
    const double lse = m * std::max(lx, lk) + std::log1p(std::exp(-m * std::abs(lx - lk)));
    const double log_bracket = s.H > 0 ? lse : lse - m * (lx + lk);
    const double exponent = s.a * (s.epsilon - 1.0) / static_cast<double>(s.H);
    const double bracket_term = s.epsilon == 1.0 ? 0.0 : exponent * log_bracket;
    return bracket_term + (s.a - 1.0) * lx - x / s.b;
}

inline double stationary_unnormalized(double x, const ModelSpec1D& s) {
    return std::exp(log_stationary_unnormalized(x, s));
}

struct QuadratureConfig {
    double rel_tol = 1e-13;
    double x_max = 0.0;               // 0 selects 50 max(b, K)
    std::size_t profile_cells = 4096;  // sampling grid for the returned profile
};

inline double default_x_max(const ModelSpec1D& s) { return 50.0 * std::max(s.b, s.K); }

/// Cell integrals of f over a grid. The origin cell uses x = e1 s^q so that an
/// integrable x^origin_exponent behaviour is resolved by a smooth rule.
template <class F>
std::vector<double> cell_integrals(const Grid1D& grid, F&& f, double origin_exponent, std::size_t order = 16) {
    static thread_local std::size_t cached_order = 0;
    static thread_local quad::GaussRule rule;
    if (cached_order != order) {
        rule = quad::gauss_legendre(order);
        cached_order = order;
    }
    std::vector<double> out(grid.cells());
    const double e1 = grid.edge(1);
    const double q = origin_exponent < 0.0 ? 1.0 / (1.0 + origin_exponent) : 1.0;
    out[0] = quad::gauss_fixed(
        rule,
        [&](double s) {
            const double x = e1 * std::pow(s, q);
            return f(x) * e1 * q * std::pow(s, q - 1.0);
        },
        0.0, 1.0);
    for (std::size_t j = 1; j < grid.cells(); ++j) out[j] = quad::gauss_fixed(rule, f, grid.edge(j), grid.edge(j + 1));
    return out;
}

inline double glue_point(const ModelSpec1D& s, double x_max) {
    return std::clamp(s.K / 10.0, 1e-3 * x_max, 0.25 * x_max);
}

/// Normalised stationary profile sampled on the positive edges of a hybrid grid.
struct StationaryProfile {
    ModelSpec1D spec;
    std::vector<double> grid;
    std::vector<double> values;
    double Z = 0.0;
    double log_Z = 0.0;
    double origin_exponent = 0.0;
    double tail_exponent = 0.0;
    double mass = 0.0;

    double density(double x) const {
        if (x <= 0.0) {
            if (origin_exponent < 0.0) return std::numeric_limits<double>::infinity();
            if (origin_exponent > 0.0) return 0.0;
            return std::exp(log_Z + log_stationary_unnormalized(1e-300, spec));
        }
        return std::exp(log_Z + log_stationary_unnormalized(x, spec));
    }

    double log_density(double x) const { return log_Z + log_stationary_unnormalized(x, spec); }
};

namespace detail {

/// log of the integral over [0, inf) of the unnormalised density, computed as
/// shift + log(integral of exp(logP - shift)).
inline double log_normaliser(const ModelSpec1D& s, double x_max, double rel_tol) {
    const auto ex = endpoint_exponents(s);
    const double x_split = std::min({s.b, s.K, x_max}) / 10.0;
    // Shift by the largest value on a coarse scan of the regular part.
    double shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
        const double x = x_split + (x_max - x_split) * i / 2000.0;
        shift = std::max(shift, log_stationary_unnormalized(x, s));
    }
    shift = std::max(shift, log_stationary_unnormalized(x_split, s));
    auto f = [&](double x) { return x > 0.0 ? std::exp(log_stationary_unnormalized(x, s) - shift) : 0.0; };

    double total = quad::integrate_origin_singular(f, x_split, ex.origin, rel_tol, 1e-300).value;
    const double chunk = 0.5 * std::min(s.b, s.K);
    const auto n_chunks = static_cast<std::size_t>(std::clamp(std::ceil((x_max - x_split) / chunk), 1.0, 2000.0));
    const double width = (x_max - x_split) / static_cast<double>(n_chunks);
    for (std::size_t i = 0; i < n_chunks; ++i) {
        const double lo = x_split + width * static_cast<double>(i);
        total += quad::integrate(f, lo, lo + width, rel_tol, 1e-300).value;
    }
    total += quad::integrate_to_infinity(f, x_max, rel_tol, 1e-300).value;
    return shift + std::log(total);
}

}  // namespace detail

/// Builds the normalised profile. The normalising integral splits [0, inf)
/// into an origin piece (power-law substitution), chunks of half the smaller
/// length scale, and a mapped tail. The reported mass is recomputed with an
/// independent composite Gauss-Legendre rule on the sampling grid.
inline StationaryProfile normalize(const ModelSpec1D& s, const QuadratureConfig& cfg = {}) {
    s.validate();
    const double x_max = cfg.x_max > 0.0 ? cfg.x_max : default_x_max(s);
    const auto ex = endpoint_exponents(s);
    StationaryProfile prof;
    prof.spec = s;
    prof.origin_exponent = ex.origin;
    prof.tail_exponent = ex.tail_power;
    prof.log_Z = -detail::log_normaliser(s, x_max, cfg.rel_tol);
    prof.Z = std::exp(prof.log_Z);

    const Grid1D g = Grid1D::hybrid(x_max, std::max<std::size_t>(cfg.profile_cells, 8), glue_point(s, x_max));
    prof.grid.assign(g.edges().begin() + 1, g.edges().end());
    prof.values.resize(prof.grid.size());
    for (std::size_t i = 0; i < prof.grid.size(); ++i) prof.values[i] = prof.density(prof.grid[i]);

    const auto cells = cell_integrals(g, [&](double x) { return x > 0.0 ? prof.density(x) : 0.0; }, ex.origin, 20);
    double mass = 0.0;
    for (double c : cells) mass += c;
    mass += quad::integrate_to_infinity([&](double x) { return prof.density(x); }, x_max, 1e-10, 1e-300).value;
    prof.mass = mass;
    if (!(std::abs(mass - 1.0) < 1e-8)) {
        throw quad::QuadratureError("stationary profile mass " + std::to_string(mass) + " not within 1e-8 of 1");
    }
    return prof;
}

/// Normalised cell masses of the stationary density on a grid, rescaled to sum
/// to one over the grid (the truncated tail beyond x_max is dropped).
inline std::vector<double> stationary_cell_masses(const StationaryProfile& prof, const Grid1D& grid) {
    auto m = cell_integrals(grid, [&](double x) { return x > 0.0 ? prof.density(x) : 0.0; }, prof.origin_exponent);
    double total = 0.0;
    for (double v : m) total += v;
    for (double& v : m) v /= total;
    return m;
}

enum class OriginLimit { Infinite, Zero, Finite };

enum class ShapeStatus { Classified, Ambiguous, BoundaryFiniteLimit };

struct ShapeClass {
    ShapeStatus status = ShapeStatus::Classified;
    std::optional<int> case_id;
    OriginLimit origin_limit = OriginLimit::Zero;
    std::vector<double> peak_locations;       // interior maxima passing the prominence test
    std::vector<double> ambiguous_locations;  // local maxima with prominence below threshold
    std::string note;
};

inline const char* to_string(OriginLimit o) {
    switch (o) {
        case OriginLimit::Infinite: return "+inf";
        case OriginLimit::Zero: return "0";
        case OriginLimit::Finite: return "finite";
    }
    return "?";
}

inline const char* to_string(ShapeStatus s) {
    switch (s) {
        case ShapeStatus::Classified: return "classified";
        case ShapeStatus::Ambiguous: return "ambiguous";
        case ShapeStatus::BoundaryFiniteLimit: return "boundary-finite-limit";
    }
    return "?";
}

struct PeakOptions {
    double prominence_fraction = 0.01;  // of the reference maximum
    double noise_fraction = 1e-3;       // below this fraction of the threshold a bump is ignored
    // Values below this abscissa do not set the reference maximum; for a singular
    // origin the sampled maximum otherwise depends only on the first grid point.
    double reference_floor = 0.0;
};

struct PeakReport {
    std::vector<std::size_t> peaks;
    std::vector<std::size_t> ambiguous;
};

/// Interior local maxima of y with their topographic prominence compared
/// against prominence_fraction * reference maximum.
inline PeakReport find_peaks(const std::vector<double>& x, const std::vector<double>& y, const PeakOptions& opt) {
    PeakReport rep;
    const std::size_t n = y.size();
    if (n < 3) return rep;
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] >= opt.reference_floor && std::isfinite(y[i])) ref = std::max(ref, y[i]);
    }
    const double threshold = opt.prominence_fraction * ref;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        // Plateaus: take the first sample of a flat top.
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
        double left_min = y[i];
        std::size_t l = i;
        while (l > 0 && y[l - 1] <= y[i]) left_min = std::min(left_min, y[--l]);
        double right_min = y[i];
        std::size_t r = i;
        while (r + 1 < n && y[r + 1] <= y[i]) right_min = std::min(right_min, y[++r]);
        // Sides that reach the domain end without a higher sample take their
        // minimum over the whole side, as in the usual topographic definition.
        const double base = std::max(left_min, right_min);
        const double prominence = y[i] - base;
        if (prominence >= threshold) rep.peaks.push_back(i);
        else if (prominence >= opt.noise_fraction * threshold) rep.ambiguous.push_back(i);
    }
    return rep;
}

/// Five-way classification of a normalised profile.
///
/// Cases 3 and 5 both have a single interior maximum and differ in where it
/// sits: below the binding constant K (low-expression state, case 3) or at or
/// above it (high-expression state, case 5).
inline ShapeClass classify_shape(const StationaryProfile& prof, const ModelSpec1D& s, PeakOptions opt = {}) {
    const auto ex = endpoint_exponents(s);
    ShapeClass out;
    if (ex.origin < 0.0) out.origin_limit = OriginLimit::Infinite;
    else if (ex.origin > 0.0) out.origin_limit = OriginLimit::Zero;
    else out.origin_limit = OriginLimit::Finite;

    // Resolution requirement: grid step small against the burst and binding scales.
    double max_step = 0.0;
    for (std::size_t i = 1; i < prof.grid.size(); ++i) max_step = std::max(max_step, prof.grid[i] - prof.grid[i - 1]);
    if (max_step > 0.25 * std::min(s.b, s.K)) {
        throw std::invalid_argument("classify_shape: profile grid too coarse for the b and K scales");
    }
    if (opt.reference_floor == 0.0) opt.reference_floor = std::min(s.b, s.K) / 10.0;

    const auto rep = find_peaks(prof.grid, prof.values, opt);
    for (auto i : rep.peaks) out.peak_locations.push_back(prof.grid[i]);
    for (auto i : rep.ambiguous) out.ambiguous_locations.push_back(prof.grid[i]);

    if (!rep.ambiguous.empty()) {
        out.status = ShapeStatus::Ambiguous;
        out.note = "local maximum with prominence below threshold";
        return out;
    }
    const std::size_t n_peaks = out.peak_locations.size();
    if (out.origin_limit == OriginLimit::Finite) {
        out.status = ShapeStatus::BoundaryFiniteLimit;
        out.note = "origin exponent is zero: finite positive limit at x = 0";
        return out;
    }
    if (out.origin_limit == OriginLimit::Infinite) {
        if (n_peaks == 0) out.case_id = 1;
        else if (n_peaks == 1) out.case_id = 2;
    } else {
        if (n_peaks == 2) out.case_id = 4;
        else if (n_peaks == 1) out.case_id = out.peak_locations.front() < s.K ? 3 : 5;
    }
    if (!out.case_id) {
        out.status = ShapeStatus::Ambiguous;
        out.note = "peak count " + std::to_string(n_peaks) + " inconsistent with the origin limit";
    }
    return out;
}

}  // namespace genepide
