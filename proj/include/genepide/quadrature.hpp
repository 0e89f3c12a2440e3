#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace genepide::quad {

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gauss-Legendre rule on [-1, 1]; nodes ascending.
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(std::size_t n) {
    if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * static_cast<double>(j) - 1.0) * z * p1 -
                      (static_cast<double>(j) - 1.0) * p2) / static_cast<double>(j);
            }
            dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

/// Fixed-order Gauss-Legendre on [a, b].
template <class F>
double gauss_fixed(const GaussRule& rule, F&& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    return half * sum;
}

namespace detail {

// Kronrod 15-point extension of the 7-point Gauss rule (positive half + centre).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double s = f(c - dx) + f(c + dx);
        kron += kWgk[j] * s;
        if (j % 2 == 1) gauss += kWg[j / 2] * s;
    }
    return {kron * h, std::abs((kron - gauss) * h)};
}

}  // namespace detail

struct IntegrationResult {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
};

/// Globally adaptive Gauss-Kronrod (7/15) on a finite interval.
/// Throws QuadratureError when the tolerance is not met within max_intervals.
template <class F>
IntegrationResult integrate(F&& f, double a, double b, double rel_tol = 1e-12,
                            double abs_tol = 0.0, int max_intervals = 4000) {
    struct Piece {
        double a, b, value, error;
    };
    std::vector<Piece> pieces;
    auto [v0, e0] = detail::gk15(f, a, b);
    pieces.push_back({a, b, v0, e0});
    double total = v0, err = e0;
    while (err > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (static_cast<int>(pieces.size()) >= max_intervals) {
            throw QuadratureError("adaptive quadrature did not converge: estimated error " +
                                  std::to_string(err) + " on value " + std::to_string(total));
        }
        std::size_t worst = 0;
        for (std::size_t i = 1; i < pieces.size(); ++i) {
            if (pieces[i].error > pieces[worst].error) worst = i;
        }
        const Piece p = pieces[worst];
        const double m = 0.5 * (p.a + p.b);
        auto [vl, el] = detail::gk15(f, p.a, m);
        auto [vr, er] = detail::gk15(f, m, p.b);
        pieces[worst] = {p.a, m, vl, el};
        pieces.push_back({m, p.b, vr, er});
        total = 0.0;
        err = 0.0;
        for (const auto& q : pieces) {
            total += q.value;
            err += q.error;
        }
    }
    return {total, err, static_cast<int>(pieces.size())};
}

/// Integral over [a, inf) through x = a + s/(1-s).
template <class F>
IntegrationResult integrate_to_infinity(F&& f, double a, double rel_tol = 1e-12,
                                        double abs_tol = 0.0, int max_intervals = 4000) {
    auto g = [&](double s) {
        if (s >= 1.0) return 0.0;
        const double one_minus = 1.0 - s;
        const double val = f(a + s / one_minus);
        return val / (one_minus * one_minus);
    };
    return integrate(g, 0.0, 1.0, rel_tol, abs_tol, max_intervals);
}

/// Integral of f over [0, b] when f(x) ~ x^alpha near 0 with alpha > -1.
/// Uses x = b s^q with q = 1/(1+alpha) for negative alpha, which removes the
/// algebraic singularity from the transformed integrand.
template <class F>
IntegrationResult integrate_origin_singular(F&& f, double b, double alpha, double rel_tol = 1e-12,
                                            double abs_tol = 0.0) {
    if (!(alpha > -1.0)) throw std::invalid_argument("origin exponent must exceed -1");
    const double q = alpha < 0.0 ? 1.0 / (1.0 + alpha) : 1.0;
    auto g = [&](double s) {
        if (s <= 0.0) return 0.0;
        const double x = b * std::pow(s, q);
        return f(x) * b * q * std::pow(s, q - 1.0);
    };
    return integrate(g, 0.0, 1.0, rel_tol, abs_tol);
}

}  // namespace genepide::quad
