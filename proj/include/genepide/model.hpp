#pragma once

// Network parameters, Hill/input functions and the exponential burst kernel.
// Everything downstream of this header consumes only these types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace genepide {

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Probability that the promoter is in its inactive state, x^H / (x^H + K^H).
///
/// Evaluated through r = (x/K)^|H| so that negative Hill coefficients never
/// form x^H at small x; for H < 0 the value at x = 0 is the limit 1.
inline double hill_rho(double x, double K, int H) {
    if (!(x >= 0.0)) throw std::domain_error("hill_rho: protein level must be >= 0");
    if (!(K > 0.0)) throw std::domain_error("hill_rho: K must be > 0");
    if (H == 0) throw std::domain_error("hill_rho: Hill coefficient must be nonzero");
    const double r = std::pow(x / K, std::abs(H));
    if (H > 0) return r <= 1.0 ? r / (1.0 + r) : 1.0 / (1.0 + 1.0 / r);
    return r <= 1.0 ? 1.0 / (1.0 + r) : (1.0 / r) / (1.0 + 1.0 / r);
}

/// Burst-size density (1/b) exp(-delta/b).
inline double burst_kernel(double delta, double b) {
    if (!(delta >= 0.0)) throw std::domain_error("burst_kernel: jump size must be >= 0");
    if (!(b > 0.0)) throw std::domain_error("burst_kernel: b must be > 0");
    return std::exp(-delta / b) / b;
}

struct ModelSpec1D {
    double a = 1.0;        // burst frequency k_m / gamma_x
    double b = 1.0;        // mean burst size k_x / gamma_m
    double K = 1.0;        // equilibrium binding constant
    int H = 1;             // Hill coefficient, nonzero
    double epsilon = 1.0;  // leakage, in (0, 1]

    void validate() const {
        if (!(a > 0.0)) throw ModelError("a must be > 0");
        if (!(b > 0.0)) throw ModelError("b must be > 0");
        if (!(K > 0.0)) throw ModelError("K must be > 0");
        if (H == 0) throw ModelError("H must be nonzero");
        if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ModelError("epsilon must lie in (0, 1]");
    }

    /// c(x) = (K^H + eps x^H) / (K^H + x^H) = 1 - (1 - eps) rho(x).
    double input(double x) const { return 1.0 - (1.0 - epsilon) * hill_rho(x, K, H); }

    bool operator==(const ModelSpec1D&) const = default;
};

namespace input {

struct Constant {
    bool operator==(const Constant&) const = default;
};

/// (K^H + eps y^H) / (K^H + y^H) with y = x[argument].
struct UnivariateHill {
    double K = 1.0;
    int H = 1;
    double epsilon = 1.0;
    std::size_t argument = 0;
    bool operator==(const UnivariateHill&) const = default;
};

/// Two-site promoter: both sites bound (eps_both), only the partner site bound
/// (eps_partner), only the own site bound (eps_own), none bound (1).
struct BivariatePaired {
    std::size_t own = 0;
    std::size_t partner = 1;
    double K_own = 1.0;
    int H_own = 1;
    double K_partner = 1.0;
    int H_partner = 1;
    double eps_both = 1.0;
    double eps_partner = 1.0;
    double eps_own = 1.0;
    bool operator==(const BivariatePaired&) const = default;
};

/// Repression of gene i by the product of another gene j: Hill function of x[regulator].
struct BivariateRepressor {
    double K = 1.0;
    int H = 1;
    double epsilon = 1.0;
    std::size_t regulator = 1;
    bool operator==(const BivariateRepressor&) const = default;
};

}  // namespace input

using InputFunction = std::variant<input::Constant, input::UnivariateHill, input::BivariatePaired,
                                   input::BivariateRepressor>;

/// Smallest leakage the variant can reach; lower bound of its image.
inline double epsilon_min(const InputFunction& c) {
    return std::visit(
        [](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, input::BivariatePaired>) {
                return std::min({f.eps_both, f.eps_partner, f.eps_own, 1.0});
            } else {
                return f.epsilon;
            }
        },
        c);
}

/// Highest state index the variant reads, plus one.
inline std::size_t required_arity(const InputFunction& c) {
    return std::visit(
        [](const auto& f) -> std::size_t {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return 0;
            } else if constexpr (std::is_same_v<T, input::UnivariateHill>) {
                return f.argument + 1;
            } else if constexpr (std::is_same_v<T, input::BivariatePaired>) {
                return std::max(f.own, f.partner) + 1;
            } else {
                return f.regulator + 1;
            }
        },
        c);
}

inline void validate_input(const InputFunction& c, std::size_t dim) {
    if (required_arity(c) > dim) throw ModelError("input function reads a coordinate beyond the state dimension");
    std::visit(
        [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            auto eps_ok = [](double e) { return e > 0.0 && e <= 1.0; };
            if constexpr (std::is_same_v<T, input::UnivariateHill> ||
                          std::is_same_v<T, input::BivariateRepressor>) {
                if (!(f.K > 0.0) || f.H == 0 || !eps_ok(f.epsilon))
                    throw ModelError("Hill input needs K > 0, H != 0, epsilon in (0, 1]");
            } else if constexpr (std::is_same_v<T, input::BivariatePaired>) {
                if (!(f.K_own > 0.0) || !(f.K_partner > 0.0) || f.H_own == 0 || f.H_partner == 0)
                    throw ModelError("paired input needs positive K and nonzero H");
                if (!eps_ok(f.eps_both) || !eps_ok(f.eps_partner) || !eps_ok(f.eps_own))
                    throw ModelError("paired input leakages must lie in (0, 1]");
                if (f.own == f.partner) throw ModelError("paired input needs two distinct coordinates");
            }
        },
        c);
}

inline double eval_input(const InputFunction& c, std::span<const double> x) {
    if (required_arity(c) > x.size()) throw ModelError("eval_input: arity mismatch");
    for (double xi : x) {
        if (!(xi >= 0.0)) throw std::domain_error("eval_input: state must be component-wise >= 0");
    }
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, input::UnivariateHill>) {
                return 1.0 - (1.0 - f.epsilon) * hill_rho(x[f.argument], f.K, f.H);
            } else if constexpr (std::is_same_v<T, input::BivariateRepressor>) {
                return 1.0 - (1.0 - f.epsilon) * hill_rho(x[f.regulator], f.K, f.H);
            } else {
                const double r1 = hill_rho(x[f.own], f.K_own, f.H_own);
                const double r2 = hill_rho(x[f.partner], f.K_partner, f.H_partner);
                return f.eps_both * r1 * r2 + f.eps_partner * (1.0 - r1) * r2 +
                       f.eps_own * r1 * (1.0 - r2) + (1.0 - r1) * (1.0 - r2);
            }
        },
        c);
}

inline double eval_input(const InputFunction& c, std::initializer_list<double> x) {
    return eval_input(c, std::span<const double>(x.begin(), x.size()));
}

/// Degradation-rate descriptor. Only constants are supported; the variant is
/// the extension point for bounded state-dependent rates.
struct ConstantDegradation {
    double rate = 1.0;
    bool operator==(const ConstantDegradation&) const = default;
};
using Degradation = std::variant<ConstantDegradation>;

inline double degradation_rate(const Degradation& g) { return std::get<ConstantDegradation>(g).rate; }

struct GeneSpec {
    double k_m = 1.0;  // transcription rate (dimensionless, per unit gamma_x time)
    double b = 1.0;    // burst size
    InputFunction input = input::Constant{};
    Degradation gamma = ConstantDegradation{};
    bool operator==(const GeneSpec&) const = default;
};

struct ModelSpecND {
    std::vector<GeneSpec> genes;

    std::size_t dim() const { return genes.size(); }

    void validate() const {
        if (genes.empty()) throw ModelError("ModelSpecND needs at least one gene");
        for (const auto& g : genes) {
            if (!(g.k_m > 0.0)) throw ModelError("k_m must be > 0");
            if (!(g.b > 0.0)) throw ModelError("b must be > 0");
            if (!(degradation_rate(g.gamma) > 0.0)) throw ModelError("degradation rate must be > 0");
            validate_input(g.input, genes.size());
        }
    }

    /// Burst frequency of gene i in units of its own degradation time.
    double frequency(std::size_t i) const { return genes[i].k_m / degradation_rate(genes[i].gamma); }

    bool operator==(const ModelSpecND&) const = default;
};

/// One-gene self-regulation expressed in the n-dimensional form.
inline ModelSpecND as_nd(const ModelSpec1D& s) {
    ModelSpecND nd;
    nd.genes.push_back(GeneSpec{s.a, s.b, input::UnivariateHill{s.K, s.H, s.epsilon, 0}, ConstantDegradation{1.0}});
    return nd;
}

}  // namespace genepide
