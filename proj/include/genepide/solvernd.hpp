#pragma once

// n interacting genes on a tensor-product grid,
//   d_t p = sum_i d_i(gamma_i x_i p) + k_m^i (int_0^{x_i} w_i c_i p dy_i - c_i p),
// integrated by sweeping the axes one after another. A sweep applies the
// one-axis burst/decay step to every fiber along that axis. The reference
// density of a fiber is the stationary profile of the fiber problem with the
// other coordinates frozen at the fiber's cell centres,
//   P_f(x) ~ x^{a c(0) - 1} exp(-x/b + a int_0^x (c(y) - c(0)) / y dy),  a = k_m / gamma.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genepide/entropy.hpp"
#include "genepide/fiber.hpp"
#include "genepide/grid.hpp"
#include "genepide/model.hpp"
#include "genepide/quadrature.hpp"
#include "genepide/solver1d.hpp"
#include "genepide/stationary.hpp"

namespace genepide {

inline constexpr std::size_t kMaxDim = 3;

struct AxisGridConfig {
    double x_max = 0.0;   // 0 selects gamma_tail_point
    std::size_t cells = 256;
    double x_glue = 0.0;  // 0 selects a tenth of the smallest K read by the gene
    double first_ratio = 1e-6;
    bool hybrid = true;
    double tail = 1e-12;  // mass left beyond x_max by the open-loop envelope

    bool operator==(const AxisGridConfig&) const = default;
};

/// Point past which gamma(a, b) leaves less than `tail` mass, from the bound
/// int_x^inf y^{a-1} e^{-y/b} dy <= x^{a-1} e^{-x/b} b x / (x - (a-1) b).
inline double gamma_tail_point(double a, double b, double tail) {
    const double lg = -a * std::log(b) - std::lgamma(a);
    auto log_bound = [&](double x) {
        const double excess = x - std::max(a - 1.0, 0.0) * b;
        return lg + (a - 1.0) * std::log(x) - x / b + std::log(b * x / excess);
    };
    double x = 2.0 * std::max(b, a * b);
    while (log_bound(x) > std::log(tail)) x *= 1.02;
    return x;
}

/// Smallest binding constant read by an input function, or 0 for a constant input.
inline double smallest_K(const InputFunction& c) {
    return std::visit(
        [](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return 0.0;
            } else if constexpr (std::is_same_v<T, input::BivariatePaired>) {
                return std::min(f.K_own, f.K_partner);
            } else {
                return f.K;
            }
        },
        c);
}

/// True when the input, seen along axis `axis`, does not depend on the other coordinates.
inline bool depends_only_on(const InputFunction& c, std::size_t axis) {
    return std::visit(
        [axis](const auto& f) -> bool {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, input::Constant>) {
                return true;
            } else if constexpr (std::is_same_v<T, input::UnivariateHill>) {
                return f.argument == axis;
            } else if constexpr (std::is_same_v<T, input::BivariateRepressor>) {
                return f.regulator == axis;
            } else {
                return false;
            }
        },
        c);
}

/// Row-major layout of a dense tensor (last axis fastest).
class TensorLayout {
public:
    TensorLayout() = default;
    explicit TensorLayout(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.empty() || sizes_.size() > kMaxDim) throw ModelError("tensor dimension must be 1 to 3");
        strides_.assign(sizes_.size(), 1);
        for (std::size_t i = sizes_.size() - 1; i > 0; --i) strides_[i - 1] = strides_[i] * sizes_[i];
        total_ = strides_[0] * sizes_[0];
    }

    std::size_t dim() const { return sizes_.size(); }
    std::size_t size(std::size_t axis) const { return sizes_[axis]; }
    std::size_t stride(std::size_t axis) const { return strides_[axis]; }
    std::size_t total() const { return total_; }
    std::size_t fibers(std::size_t axis) const { return total_ / sizes_[axis]; }

    /// Flat index of the first element of fiber f along `axis`; the fiber
    /// continues with step stride(axis).
    std::size_t fiber_base(std::size_t axis, std::size_t f) const {
        const std::size_t inner = strides_[axis];
        return (f / inner) * inner * sizes_[axis] + f % inner;
    }

    std::array<std::size_t, kMaxDim> unravel(std::size_t flat) const {
        std::array<std::size_t, kMaxDim> idx{};
        for (std::size_t i = 0; i < dim(); ++i) {
            idx[i] = flat / strides_[i];
            flat %= strides_[i];
        }
        return idx;
    }

    std::size_t flat(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t i = 0; i < dim(); ++i) f += idx[i] * strides_[i];
        return f;
    }

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> strides_;
    std::size_t total_ = 0;
};

/// Stationary profile of one fiber problem and the burst weights built on it.
class FiberProfile {
public:
    FiberProfile(const Grid1D& grid, const GeneSpec& gene, std::size_t axis, std::array<double, kMaxDim> frozen,
                 std::size_t dim)
        : grid_(&grid), input_(gene.input), axis_(axis), dim_(dim), frozen_(frozen), b_(gene.b) {
        a_ = gene.k_m / degradation_rate(gene.gamma);
        c0_ = input(0.0);
        origin_exponent_ = a_ * c0_ - 1.0;
        const std::size_t n = grid.cells();
        static thread_local const quad::GaussRule g20 = quad::gauss_legendre(20);
        G_.assign(n + 1, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            G_[j + 1] = G_[j] + quad::gauss_fixed(g20, [&](double y) { return excess(y); }, grid.edge(j), grid.edge(j + 1));
        }
        log_offset_ = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) log_offset_ = std::max(log_offset_, log_shape(grid.center(j), j));

        weights_.rate = gene.k_m;
        weights_.b = b_;
        weights_.M.resize(n);
        weights_.C.resize(n);
        weights_.E.resize(n);
        weights_.q.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double top = grid.edge(j + 1);
            double M = 0.0, C = 0.0, E = 0.0;
            visit_nodes(j, top, [&](double x, double wP) {
                const double c = input(x);
                M += wP;
                C += wP * c;
                E += wP * c * std::exp(-(top - x) / b_);
            });
            if (!(M > 0.0)) throw std::runtime_error("fiber reference underflows; reduce x_max");
            weights_.M[j] = M;
            weights_.C[j] = C;
            weights_.E[j] = E;
            weights_.q[j] = std::exp(-grid.width(j) / b_);
        }
    }

    const ReactionWeights& weights() const { return weights_; }
    double origin_exponent() const { return origin_exponent_; }

    /// c along the fiber.
    double input(double x) const {
        auto p = frozen_;
        p[axis_] = x;
        return eval_input(input_, std::span<const double>(p.data(), dim_));
    }

    /// Reference density (up to the common factor exp(-log_offset)).
    double density(double x) const {
        if (!(x > 0.0)) return origin_exponent_ < 0.0 ? std::numeric_limits<double>::infinity()
                                                      : (origin_exponent_ > 0.0 ? 0.0 : std::exp(-log_offset_));
        return std::exp(log_shape(x, grid_->locate(x)) - log_offset_);
    }

    /// Pulled-back edges for a dilation by `factor`.
    ShiftMap shift(double factor) const {
        const std::size_t n = grid_->cells();
        ShiftMap s;
        s.factor = factor;
        s.cell.resize(n + 1);
        s.theta.resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            const double x = grid_->edge(i) * factor;
            if (x >= grid_->x_max()) {
                s.cell[i] = ShiftMap::npos;
                s.theta[i] = 0.0;
                continue;
            }
            const std::size_t j = grid_->locate(x);
            s.cell[i] = j;
            if (x <= grid_->edge(j)) {
                s.theta[i] = 0.0;
                continue;
            }
            double part = 0.0;
            visit_nodes(j, x, [&](double, double wP) { part += wP; });
            s.theta[i] = std::clamp(part / weights_.M[j], 0.0, 1.0);
        }
        return s;
    }

private:
    double excess(double y) const { return (input(y) - c0_) / y; }

    /// log of x^{-origin_exponent} P_f(x) before the offset, for x in cell j.
    double log_shape(double x, std::size_t j) const {
        static thread_local const quad::GaussRule g8 = quad::gauss_legendre(8);
        const double lo = grid_->edge(j);
        const double inner = x > lo ? quad::gauss_fixed(g8, [&](double y) { return excess(y); }, lo, x) : 0.0;
        return origin_exponent_ * std::log(x) - x / b_ + a_ * (G_[j] + inner);
    }

    /// Calls f(x, weight * P_f(x)) on 20 Gauss nodes of [edge(j), hi]; cell 0
    /// uses x = hi s^q to absorb the origin power.
    template <class F>
    void visit_nodes(std::size_t j, double hi, F&& f) const {
        static thread_local const quad::GaussRule g20 = quad::gauss_legendre(20);
        const double lo = grid_->edge(j);
        if (j == 0) {
            const double q = origin_exponent_ < 0.0 ? 1.0 / (1.0 + origin_exponent_) : 1.0;
            for (std::size_t k = 0; k < g20.nodes.size(); ++k) {
                const double s = 0.5 * (g20.nodes[k] + 1.0);
                const double x = hi * std::pow(s, q);
                const double lw = log_shape(x, 0) - log_offset_ + std::log(hi * q) + (q - 1.0) * std::log(s);
                f(x, 0.5 * g20.weights[k] * std::exp(lw));
            }
            return;
        }
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (std::size_t k = 0; k < g20.nodes.size(); ++k) {
            const double x = mid + half * g20.nodes[k];
            f(x, half * g20.weights[k] * std::exp(log_shape(x, j) - log_offset_));
        }
    }

    const Grid1D* grid_;
    InputFunction input_;
    std::size_t axis_;
    std::size_t dim_;
    std::array<double, kMaxDim> frozen_;
    double a_ = 1.0, b_ = 1.0, c0_ = 1.0;
    double origin_exponent_ = 0.0;
    double log_offset_ = 0.0;
    std::vector<double> G_;  // int_0^{edge} (c - c(0)) / y
    ReactionWeights weights_;
};

/// Grids, fiber references and cached shift maps for one nD spec.
class DiscretizationND {
public:
    /// `axes` holds one config per gene, or a single config used for all.
    DiscretizationND(const ModelSpecND& spec, std::vector<AxisGridConfig> axes) : spec_(spec) {
        spec.validate();
        const std::size_t n = spec.dim();
        if (n > kMaxDim) throw ModelError("at most 3 genes are supported");
        if (axes.size() == 1 && n > 1) axes.assign(n, axes[0]);
        if (axes.size() != n) throw ModelError("need one grid config per gene");
        axes_ = axes;
        std::vector<std::size_t> sizes;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& gene = spec.genes[i];
            const auto& ac = axes[i];
            if (ac.cells < 8) throw ModelError("each axis needs at least 8 cells");
            const double x_max = ac.x_max > 0.0 ? ac.x_max : gamma_tail_point(spec.frequency(i), gene.b, ac.tail);
            double glue = ac.x_glue;
            if (!(glue > 0.0)) {
                const double K = smallest_K(gene.input);
                glue = K > 0.0 ? K / 10.0 : gene.b / 10.0;
            }
            glue = std::clamp(glue, 1e-3 * x_max, 0.25 * x_max);
            grids_.push_back(ac.hybrid ? Grid1D::hybrid(x_max, ac.cells, glue, ac.first_ratio)
                                       : Grid1D::uniform(x_max, ac.cells));
            sizes.push_back(ac.cells);
        }
        layout_ = TensorLayout(sizes);
        profiles_.resize(n);
        shifts_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const bool shared = depends_only_on(spec.genes[i].input, i);
            const std::size_t count = shared ? 1 : layout_.fibers(i);
            profiles_[i].reserve(count);
            for (std::size_t f = 0; f < count; ++f) {
                const auto idx = layout_.unravel(layout_.fiber_base(i, f));
                std::array<double, kMaxDim> frozen{};
                for (std::size_t k = 0; k < n; ++k) frozen[k] = grids_[k].center(idx[k]);
                profiles_[i].emplace_back(grids_[i], spec.genes[i], i, frozen, n);
            }
        }
    }

    const ModelSpecND& spec() const { return spec_; }
    std::size_t dim() const { return spec_.dim(); }
    const Grid1D& grid(std::size_t axis) const { return grids_[axis]; }
    const std::vector<AxisGridConfig>& axis_configs() const { return axes_; }
    const TensorLayout& layout() const { return layout_; }
    bool shared_reference(std::size_t axis) const { return profiles_[axis].size() == 1; }

    const FiberProfile& fiber(std::size_t axis, std::size_t f) const {
        return profiles_[axis][profiles_[axis].size() == 1 ? 0 : f];
    }

    /// Shift map of fiber f along `axis` for a step dt (factor e^{gamma dt});
    /// maps for the most recent three step sizes are kept.
    const ShiftMap& shift(std::size_t axis, std::size_t f, double dt) const {
        const double factor = std::exp(degradation_rate(spec_.genes[axis].gamma) * dt);
        auto& cache = shifts_[axis];
        for (const auto& entry : cache) {
            if (entry.factor == factor) return entry.maps[profiles_[axis].size() == 1 ? 0 : f];
        }
        ShiftSet set;
        set.factor = factor;
        for (const auto& p : profiles_[axis]) set.maps.push_back(p.shift(factor));
        if (cache.size() == 3) cache.erase(cache.begin());
        cache.push_back(std::move(set));
        return cache.back().maps[profiles_[axis].size() == 1 ? 0 : f];
    }

    /// Tensor product of per-axis cell masses.
    std::vector<double> product(const std::vector<std::vector<double>>& factors) const {
        if (factors.size() != dim()) throw std::invalid_argument("product: one factor per axis");
        std::vector<double> m(layout_.total());
        for (std::size_t k = 0; k < m.size(); ++k) {
            const auto idx = layout_.unravel(k);
            double v = 1.0;
            for (std::size_t i = 0; i < dim(); ++i) v *= factors[i][idx[i]];
            m[k] = v;
        }
        return m;
    }

    /// Cell masses on axis i of a density given pointwise, normalised to 1.
    template <class F>
    std::vector<double> project_axis(std::size_t axis, F&& density, double origin_exponent) const {
        auto m = cell_integrals(grids_[axis], [&](double x) { return x > 0.0 ? density(x) : 0.0; }, origin_exponent, 20);
        double total = 0.0;
        for (double v : m) total += v;
        for (double& v : m) v /= total;
        return m;
    }

    /// Product of the open-loop gamma densities x^{a_i - 1} e^{-x/b_i}.
    std::vector<double> gamma_initial() const {
        std::vector<std::vector<double>> f;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double a = spec_.frequency(i), b = spec_.genes[i].b;
            f.push_back(project_axis(i, [&](double x) { return std::exp((a - 1.0) * std::log(x) - x / b); }, a - 1.0));
        }
        return product(f);
    }

private:
    struct ShiftSet {
        double factor = 1.0;
        std::vector<ShiftMap> maps;
    };

    ModelSpecND spec_;
    std::vector<AxisGridConfig> axes_;
    std::vector<Grid1D> grids_;
    TensorLayout layout_;
    std::vector<std::vector<FiberProfile>> profiles_;
    mutable std::vector<std::vector<ShiftSet>> shifts_;
};

struct DensityFieldND {
    std::shared_ptr<const DiscretizationND> disc;
    std::vector<double> masses;
    double time = 0.0;

    double mass() const {
        double s = 0.0;
        for (double v : masses) s += v;
        return s;
    }
};

/// Cell masses of the marginal along `axis`.
inline std::vector<double> marginal(const TensorLayout& L, std::span<const double> m, std::size_t axis) {
    std::vector<double> out(L.size(axis), 0.0);
    for (std::size_t k = 0; k < m.size(); ++k) out[L.unravel(k)[axis]] += m[k];
    return out;
}

inline double l1_distance(std::span<const double> p, std::span<const double> q) {
    double d = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) d += std::abs(p[k] - q[k]);
    return d;
}

/// Order of the axis sweeps within one step. Lie runs 1..n; Strang runs
/// half steps 1..n-1, a full step n, half steps n-1..1; Symmetric averages
/// the Lie orders 1..n and n..1, which keeps gene-swap symmetry exact.
enum class AxisSplitting { Lie, Strang, Symmetric };

inline const char* to_string(AxisSplitting s) {
    switch (s) {
        case AxisSplitting::Lie: return "lie";
        case AxisSplitting::Strang: return "strang";
        case AxisSplitting::Symmetric: return "symmetric";
    }
    return "?";
}

struct SolverNDConfig {
    double dt = 1e-2;
    SplitScheme fiber_scheme = SplitScheme::Heun;
    AxisSplitting splitting = AxisSplitting::Lie;
    Reconstruction reconstruction = Reconstruction::Reference;
    double clip_tolerance = 1e-8;
};

struct StationaryProfileND;

class SolverND {
public:
    SolverND(std::shared_ptr<const DiscretizationND> disc, SolverNDConfig cfg = {})
        : disc_(std::move(disc)), cfg_(cfg) {
        if (!(cfg_.dt > 0.0)) throw ModelError("dt must be > 0");
        const auto& s = disc_->spec();
        double gmin = std::numeric_limits<double>::infinity(), kmax = 0.0;
        for (const auto& g : s.genes) {
            gmin = std::min(gmin, degradation_rate(g.gamma));
            kmax = std::max(kmax, g.k_m);
        }
        if (cfg_.dt > 0.5 / (kmax / gmin)) throw ModelError("dt exceeds the explicit bound 0.5 / max(k_m / gamma_min)");
    }

    const DiscretizationND& discretization() const { return *disc_; }
    std::shared_ptr<const DiscretizationND> shared_discretization() const { return disc_; }
    const SolverNDConfig& config() const { return cfg_; }

    /// Twin reconstruction needs the state the twin restarts from every step,
    /// normally a stationary state of the Constant scheme.
    void set_twin(std::vector<double> reference) {
        if (reference.size() != disc_->layout().total()) throw std::invalid_argument("twin size does not match the grid");
        twin_ref_ = std::move(reference);
    }
    const std::vector<double>& twin() const { return twin_ref_; }

    DensityFieldND field(std::vector<double> masses, double t = 0.0) const {
        if (masses.size() != disc_->layout().total()) throw std::invalid_argument("field size does not match the grid");
        return DensityFieldND{disc_, std::move(masses), t};
    }

    StepReport step(DensityFieldND& p) const {
        StepReport rep;
        const std::size_t n = disc_->dim();
        const double dt = cfg_.dt;
        const bool paired = cfg_.reconstruction == Reconstruction::Twin;
        if (paired && twin_ref_.empty()) throw ModelError("twin reconstruction needs a twin reference");
        std::vector<double>* tw = nullptr;
        if (paired) {
            twin_ = twin_ref_;
            tw = &twin_;
        }
        switch (cfg_.splitting) {
            case AxisSplitting::Lie:
                for (std::size_t i = 0; i < n; ++i) sweep(i, dt, p.masses, rep, tw);
                break;
            case AxisSplitting::Strang:
                for (std::size_t i = 0; i + 1 < n; ++i) sweep(i, 0.5 * dt, p.masses, rep, tw);
                sweep(n - 1, dt, p.masses, rep, tw);
                for (std::size_t i = n - 1; i-- > 0;) sweep(i, 0.5 * dt, p.masses, rep, tw);
                break;
            case AxisSplitting::Symmetric: {
                other_ = p.masses;
                std::vector<double>* tw2 = nullptr;
                if (paired) {
                    twin_other_ = twin_ref_;
                    tw2 = &twin_other_;
                }
                for (std::size_t i = 0; i < n; ++i) sweep(i, dt, p.masses, rep, tw);
                for (std::size_t i = n; i-- > 0;) sweep(i, dt, other_, rep, tw2);
                for (std::size_t k = 0; k < other_.size(); ++k) p.masses[k] = 0.5 * (p.masses[k] + other_[k]);
                rep.clipped *= 0.5;
                break;
            }
        }
        if (rep.clipped > cfg_.clip_tolerance * std::max(p.mass(), 1e-300)) {
            throw StepRejected("clipped mass " + std::to_string(rep.clipped) + " exceeds tolerance; reduce dt");
        }
        p.time += dt;
        return rep;
    }

    /// One axis sweep of length dt on every fiber; fibers are independent.
    /// `twin` is the twin tensor, advanced in step with m (Twin only).
    void sweep(std::size_t axis, double dt, std::vector<double>& m, StepReport& rep,
               std::vector<double>* twin = nullptr) const {
        const auto& L = disc_->layout();
        const std::size_t len = L.size(axis), stride = L.stride(axis);
        const bool paired = cfg_.reconstruction == Reconstruction::Twin;
        if (paired && twin == nullptr) throw ModelError("twin reconstruction needs a twin tensor");
        buf_.resize(len);
        tbuf_.resize(len);
        for (std::size_t f = 0; f < L.fibers(axis); ++f) {
            const std::size_t base = L.fiber_base(axis, f);
            for (std::size_t k = 0; k < len; ++k) buf_[k] = m[base + k * stride];
            if (paired) {
                for (std::size_t k = 0; k < len; ++k) tbuf_[k] = (*twin)[base + k * stride];
            }
            const auto& prof = disc_->fiber(axis, f);
            const ShiftMap& full = disc_->shift(axis, f, dt);
            const ShiftMap& half = cfg_.fiber_scheme == SplitScheme::Strang ? disc_->shift(axis, f, 0.5 * dt) : full;
            fiber_step(prof.weights(), full, half, dt, cfg_.fiber_scheme, buf_, ws_, cfg_.reconstruction,
                       paired ? std::span<double>(tbuf_) : std::span<double>{});
            const auto [clipped, lowest] = clip_negative(buf_);
            rep.clipped += clipped;
            rep.lowest = std::min(rep.lowest, lowest);
            for (std::size_t k = 0; k < len; ++k) m[base + k * stride] = buf_[k];
            if (paired) {
                for (std::size_t k = 0; k < len; ++k) (*twin)[base + k * stride] = tbuf_[k];
            }
        }
    }

private:
    std::shared_ptr<const DiscretizationND> disc_;
    SolverNDConfig cfg_;
    mutable FiberWorkspace ws_;
    std::vector<double> twin_ref_;
    mutable std::vector<double> buf_, tbuf_, other_, twin_, twin_other_;
};

// ---------------------------------------------------------------------------
// Stationary state and diagnostics

struct StationaryProfileND {
    std::shared_ptr<const DiscretizationND> disc;
    std::vector<double> masses;  // sums to 1
    double time = 0.0;           // integration time used
    double drift = 0.0;          // last ||p(t + D) - p(t)||_1 / D
    double residual = 0.0;       // ||S p - p||_1 / dt for one step S of the scheme
    bool converged = false;
    std::vector<double> boundary_flux;  // per axis, for the starting density
};

/// Max over fibers of |H(u) gamma_i x_i P| at both ends of every axis, with u
/// = test / stationary. At x = 0 the factor x_i P vanishes (P ~ x^e, e > -1);
/// at x_max P is the last cell average.
template <class Hfn>
std::vector<double> boundary_flux_check(const StationaryProfileND& prof, std::span<const double> test, Hfn&& H) {
    const auto& d = *prof.disc;
    const auto& L = d.layout();
    std::vector<double> out(d.dim(), 0.0);
    for (std::size_t i = 0; i < d.dim(); ++i) {
        const auto& g = d.grid(i);
        const double gamma = degradation_rate(d.spec().genes[i].gamma);
        const std::size_t last = L.size(i) - 1;
        for (std::size_t f = 0; f < L.fibers(i); ++f) {
            const std::size_t k = L.fiber_base(i, f) + last * L.stride(i);
            const double P = prof.masses[k];
            if (!(P > kReferenceFloor)) continue;
            // Density per unit x_i, integrated over the other coordinates of the cell.
            const double dens = P / g.width(last);
            out[i] = std::max(out[i], std::abs(H(test[k] / P) * gamma * g.x_max() * dens));
        }
    }
    return out;
}

/// Integrates from p0 until the L1 drift per unit time over `interval` falls
/// below `tolerance`, or t_max is reached (converged = false).
inline StationaryProfileND compute_stationary_nd(const SolverND& solver, DensityFieldND p0, double tolerance = 1e-6,
                                                 double interval = 1.0, double t_max = 1000.0) {
    StationaryProfileND out;
    out.disc = solver.shared_discretization();
    const std::vector<double> start = p0.masses;
    const double dt = solver.config().dt;
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(interval / dt)));
    const double span = static_cast<double>(steps) * dt;
    std::vector<double> prev = p0.masses;
    const double t0 = p0.time;
    while (p0.time - t0 < t_max) {
        for (std::size_t s = 0; s < steps; ++s) solver.step(p0);
        out.drift = l1_distance(p0.masses, prev) / (span * std::max(p0.mass(), 1e-300));
        prev = p0.masses;
        if (out.drift < tolerance) {
            out.converged = true;
            break;
        }
    }
    const double mass = p0.mass();
    for (double& v : p0.masses) v /= mass;
    out.masses = p0.masses;
    out.time = p0.time - t0;
    auto probe = p0;
    solver.step(probe);
    out.residual = l1_distance(probe.masses, p0.masses) / dt;
    double ms = 0.0;
    for (double v : start) ms += v;
    std::vector<double> test(start);
    for (double& v : test) v /= ms;
    out.boundary_flux = boundary_flux_check(out, test, [](double u) { return (u - 1.0) * (u - 1.0); });
    return out;
}

/// Cells whose density exceeds every neighbour (8 in 2D) by a strict margin,
/// away from the boundary cells, and is at least `rel_height` of the maximum.
/// Returns flat indices, highest first. 2D only.
inline std::vector<std::size_t> interior_peaks_2d(const DiscretizationND& d, std::span<const double> m,
                                                  double rel_height = 0.01) {
    if (d.dim() != 2) throw std::invalid_argument("interior_peaks_2d needs a 2D field");
    const auto& L = d.layout();
    const std::size_t n0 = L.size(0), n1 = L.size(1);
    std::vector<double> dens(m.size());
    double top = 0.0;
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t j = 0; j < n1; ++j) {
            const std::size_t k = i * n1 + j;
            dens[k] = m[k] / (d.grid(0).width(i) * d.grid(1).width(j));
            top = std::max(top, dens[k]);
        }
    }
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n0; ++i) {
        for (std::size_t j = 1; j + 1 < n1; ++j) {
            const std::size_t k = i * n1 + j;
            if (dens[k] < rel_height * top) continue;
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const std::size_t kk = (i + di) * n1 + (j + dj);
                    if (!(dens[k] > dens[kk])) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) peaks.push_back(k);
        }
    }
    std::sort(peaks.begin(), peaks.end(), [&](std::size_t x, std::size_t y) { return dens[x] > dens[y]; });
    return peaks;
}

/// D_2^n = sum_i k_m^i sum over fibers of the one-axis production, with the
/// stationary masses as reference. Inside a cell the stationary density is
/// taken proportional to the fiber reference.
inline double d2n(const DiscretizationND& d, std::span<const double> P, std::span<const double> m) {
    const auto& L = d.layout();
    double total = 0.0;
    ReactionWeights w;
    std::vector<double> mf;
    for (std::size_t i = 0; i < d.dim(); ++i) {
        const std::size_t len = L.size(i), stride = L.stride(i);
        w.M.resize(len);
        w.C.resize(len);
        w.E.resize(len);
        w.q.resize(len);
        mf.resize(len);
        for (std::size_t f = 0; f < L.fibers(i); ++f) {
            const auto& ref = d.fiber(i, f).weights();
            w.rate = ref.rate;
            w.b = ref.b;
            const std::size_t base = L.fiber_base(i, f);
            for (std::size_t k = 0; k < len; ++k) {
                const double Pk = P[base + k * stride];
                const double scale = Pk / ref.M[k];
                w.M[k] = Pk;
                w.C[k] = scale * ref.C[k];
                w.E[k] = scale * ref.E[k];
                w.q[k] = ref.q[k];
                mf[k] = m[base + k * stride];
            }
            total += d2(w, mf);
        }
    }
    return total;
}

/// Cells with P below this fraction of max P are left out of the u range;
/// there u = m / P is limited only by the splitting error.
inline constexpr double kResolvedFraction = 1e-12;

inline URange u_range_resolved(std::span<const double> m, std::span<const double> P) {
    const double floor = std::max(kReferenceFloor, kResolvedFraction * *std::max_element(P.begin(), P.end()));
    URange r;
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (!(P[k] > floor)) continue;
        const double u = m[k] / P[k];
        r.lo = std::min(r.lo, u);
        r.hi = std::max(r.hi, u);
    }
    return r;
}

struct InvariantLogND {
    double mass0 = 0.0;
    double max_mass_drift = 0.0;
    double cumulative_clipped = 0.0;
    double lowest_before_clip = 0.0;
    double umin0 = 0.0, umax0 = 0.0;
    double max_umax_breach = 0.0;
    double max_umin_breach = 0.0;
    double elapsed = 0.0;
};

struct RunResultND {
    DensityFieldND final;
    EntropyTrace trace;
    InvariantLogND invariants;
};

inline TraceRow observe_nd(const DensityFieldND& p, const StationaryProfileND& ref) {
    TraceRow r;
    r.t = p.time;
    r.G2 = g2(p.masses, ref.masses).value;
    r.D2 = d2n(*ref.disc, ref.masses, p.masses);
    r.mass = p.mass();
    const auto ur = u_range_resolved(p.masses, ref.masses);
    r.umin = ur.lo;
    r.umax = ur.hi;
    return r;
}

/// Fixed-dt run with a trace row every `cadence`; entropy is measured
/// against `ref`. dG2/dt is a one-step difference around each row.
inline RunResultND run_nd(const SolverND& solver, DensityFieldND p, double t_end, double cadence,
                          const StationaryProfileND& ref,
                          const std::function<void(const DensityFieldND&)>& on_record = {}) {
    if (!(std::abs(p.mass() - 1.0) < 1e-8)) throw ModelError("initial density must have mass 1 within 1e-8");
    const double dt = solver.config().dt;
    const auto n_steps = static_cast<std::size_t>(std::llround(t_end / dt));
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cadence / dt)));
    RunResultND res;
    auto& inv = res.invariants;
    inv.mass0 = p.mass();
    const auto u0 = u_range_resolved(p.masses, ref.masses);
    inv.umin0 = u0.lo;
    inv.umax0 = u0.hi;
    res.trace.rows.push_back(observe_nd(p, ref));
    if (on_record) on_record(p);
    double g_prev = res.trace.rows.back().G2, g_before = g_prev;
    bool open_row = true, first = true;
    for (std::size_t i = 1; i <= n_steps; ++i) {
        const auto rep = solver.step(p);
        inv.cumulative_clipped += rep.clipped;
        inv.lowest_before_clip = std::min(inv.lowest_before_clip, rep.lowest);
        const double mass = p.mass();
        if (!std::isfinite(mass)) throw SolverAbort("NaN in density at t = " + std::to_string(p.time), p.masses, p.time);
        inv.max_mass_drift = std::max(inv.max_mass_drift, std::abs(mass - inv.mass0));
        const auto ur = u_range_resolved(p.masses, ref.masses);
        inv.max_umax_breach = std::max(inv.max_umax_breach, ur.hi / inv.umax0 - 1.0);
        if (inv.umin0 > 0.0) inv.max_umin_breach = std::max(inv.max_umin_breach, 1.0 - ur.lo / inv.umin0);
        const bool record = i % stride == 0 || i == n_steps;
        const bool need_g = open_row || record || (i + 1) % stride == 0 || i + 1 == n_steps;
        const double g_now = need_g ? g2(p.masses, ref.masses).value : 0.0;
        if (open_row) {
            res.trace.rows.back().dG2dt = (g_now - g_before) / (first ? dt : 2.0 * dt);
            open_row = first = false;
        }
        if (record) {
            res.trace.rows.push_back(observe_nd(p, ref));
            if (on_record) on_record(p);
            g_before = g_prev;
            open_row = true;
        }
        g_prev = g_now;
    }
    if (open_row && res.trace.rows.size() > 1) {
        res.trace.rows.back().dG2dt = (res.trace.rows.back().G2 - g_before) / dt;
    }
    inv.elapsed = p.time - res.trace.rows.front().t;
    res.final = std::move(p);
    return res;
}

/// P u with u = beta + sum_k alpha_k prod_i exp(-(ln x_i - mu_ki)^2 / (2 sigma_ki^2)),
/// 1 to 3 bumps centred log-uniformly over the range carrying the marginal
/// mass of P; normalised to mass 1. u is bounded above and below.
inline std::vector<double> perturbed_stationary(const DiscretizationND& d, std::span<const double> P,
                                                std::mt19937_64& rng) {
    const auto& L = d.layout();
    std::uniform_int_distribution<int> count(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> lo(d.dim()), hi(d.dim());
    for (std::size_t i = 0; i < d.dim(); ++i) {
        const auto mg = marginal(L, P, i);
        const auto& g = d.grid(i);
        double acc = 0.0;
        lo[i] = hi[i] = 0.0;
        for (std::size_t j = 0; j < g.cells(); ++j) {
            acc += mg[j];
            if (lo[i] == 0.0 && acc >= 1e-4) lo[i] = std::max(g.center(j), g.edge(1));
            if (acc <= 1.0 - 1e-4) hi[i] = g.center(j);
        }
        if (!(hi[i] > lo[i])) hi[i] = 10.0 * lo[i];
    }
    const double beta = 0.05 + 0.95 * unit(rng);
    const int k = count(rng);
    std::vector<double> alpha(k);
    std::vector<std::array<double, kMaxDim>> mu(k), sigma(k);
    for (int b = 0; b < k; ++b) {
        alpha[b] = 0.2 + 2.8 * unit(rng);
        for (std::size_t i = 0; i < d.dim(); ++i) {
            mu[b][i] = std::log(lo[i]) + unit(rng) * (std::log(hi[i]) - std::log(lo[i]));
            sigma[b][i] = 0.1 + 0.9 * unit(rng);
        }
    }
    std::vector<double> m(P.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < m.size(); ++c) {
        const auto idx = L.unravel(c);
        double u = beta;
        for (int b = 0; b < k; ++b) {
            double e = 0.0;
            for (std::size_t i = 0; i < d.dim(); ++i) {
                const double z = (std::log(d.grid(i).center(idx[i])) - mu[b][i]) / sigma[b][i];
                e += 0.5 * z * z;
            }
            u += alpha[b] * std::exp(-e);
        }
        m[c] = P[c] * u;
        sum += m[c];
    }
    for (double& v : m) v /= sum;
    return m;
}

/// Solver with Twin reconstruction and the reference it returns to: the
/// stationary state of the same scheme with Constant reconstruction.
struct TwinSetup {
    SolverND solver;
    StationaryProfileND reference;
};

inline TwinSetup make_twin_setup(const SolverND& base, std::vector<double> start, double tolerance = 1e-8,
                                 double t_max = 1000.0) {
    auto cfg = base.config();
    cfg.reconstruction = Reconstruction::Constant;
    const SolverND constant(base.shared_discretization(), cfg);
    auto ref = compute_stationary_nd(constant, constant.field(std::move(start)), tolerance, 1.0, t_max);
    cfg.reconstruction = Reconstruction::Twin;
    SolverND twin(base.shared_discretization(), cfg);
    twin.set_twin(ref.masses);
    return {std::move(twin), std::move(ref)};
}

struct BatteryTolerances {
    double mass = 1e-5;
    double clipped = 1e-8;  // per unit time
    double l1 = 1e-6;
    double l2 = 1e-6;
    double max_principle = 1e-6;
};

/// Mass, positivity, L1 contraction, weighted L2 bound and maximum principle
/// for two solutions advanced side by side; u is taken against the
/// stationary masses.
struct BatteryND {
    double mass_drift = 0.0;
    double clipped_per_time = 0.0;
    double lowest_before_clip = 0.0;
    double l1_breach = 0.0;  // largest one-step increase of ||p - q||_1
    double l2_breach = 0.0;  // largest one-step increase of sum p^2 / P
    double umax_breach = 0.0;
    double umin_breach = 0.0;
    double elapsed = 0.0;

    bool passes(const BatteryTolerances& t = {}) const {
        return mass_drift < t.mass && clipped_per_time < t.clipped && l1_breach < t.l1 && l2_breach < t.l2 &&
               umax_breach < t.max_principle && umin_breach < t.max_principle;
    }
};

/// Runs p and q side by side. For the maximum principle to be meaningful the
/// solver should use Twin reconstruction around ref (see make_twin_setup).
inline BatteryND invariant_battery_nd(const SolverND& solver, const StationaryProfileND& ref, DensityFieldND p,
                                      DensityFieldND q, double t_end) {
    BatteryND r;
    const auto& P = ref.masses;
    const double m0 = p.mass();
    const auto up = u_range_resolved(p.masses, P), uq = u_range_resolved(q.masses, P);
    auto weighted_l2 = [&](const std::vector<double>& m) {
        double s = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            if (P[k] > kReferenceFloor) s += m[k] * m[k] / P[k];
        }
        return s;
    };
    double d_prev = l1_distance(p.masses, q.masses), l2_prev = weighted_l2(p.masses), clipped = 0.0;
    const auto n_steps = static_cast<std::size_t>(std::llround(t_end / solver.config().dt));
    for (std::size_t i = 0; i < n_steps; ++i) {
        const auto a = solver.step(p);
        const auto b = solver.step(q);
        clipped += a.clipped;
        r.lowest_before_clip = std::min({r.lowest_before_clip, a.lowest, b.lowest});
        r.mass_drift = std::max(r.mass_drift, std::abs(p.mass() - m0));
        const double d = l1_distance(p.masses, q.masses);
        r.l1_breach = std::max(r.l1_breach, d - d_prev);
        d_prev = d;
        const double l2 = weighted_l2(p.masses);
        r.l2_breach = std::max(r.l2_breach, l2 - l2_prev);
        l2_prev = l2;
        const auto u = u_range_resolved(p.masses, P), v = u_range_resolved(q.masses, P);
        r.umax_breach = std::max({r.umax_breach, u.hi / up.hi - 1.0, v.hi / uq.hi - 1.0});
        if (up.lo > 0.0) r.umin_breach = std::max(r.umin_breach, 1.0 - u.lo / up.lo);
        if (uq.lo > 0.0) r.umin_breach = std::max(r.umin_breach, 1.0 - v.lo / uq.lo);
    }
    r.elapsed = static_cast<double>(n_steps) * solver.config().dt;
    r.clipped_per_time = r.elapsed > 0.0 ? clipped / r.elapsed : 0.0;
    return r;
}

}  // namespace genepide
