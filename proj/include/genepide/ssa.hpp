#pragma once

// Exact simulation of the burst/decay jump process. Between bursts every
// x_i decays as x_i(t0) e^{-gamma_i (t - t0)}; gene i proposes bursts at the
// constant majorant rate k_m^i and keeps a proposal with probability
// c_i(x(t-)) <= 1; a kept burst adds an Exponential(mean b_i) amount to x_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genepide/grid.hpp"
#include "genepide/model.hpp"
#include "genepide/stationary.hpp"

namespace genepide {

/// Independent generator for stream `stream` of a master seed.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

/// Sampling times are burn_in + k stride, k = 0 .. samples - 1.
struct SamplingPlan {
    double burn_in = 50.0;
    double stride = 1.0;
    std::size_t samples = 0;
    bool keep_events = true;

    double time(std::size_t k) const { return burn_in + static_cast<double>(k) * stride; }
    double end() const { return samples == 0 ? burn_in : time(samples - 1); }
};

struct Trajectory {
    std::uint64_t seed = 0;
    std::size_t dim = 1;
    double t_end = 0.0;
    std::vector<double> event_times;
    std::vector<std::size_t> event_gene;
    std::vector<double> event_states;  // post-burst state, dim values per event
    std::vector<double> sample_times;
    std::vector<double> samples;  // dim values per sample
    std::vector<double> final_state;
    std::size_t proposals = 0;
    std::size_t bursts = 0;

    std::size_t sample_count() const { return sample_times.size(); }
    double sample(std::size_t k, std::size_t i = 0) const { return samples[k * dim + i]; }

    /// Samples of one coordinate.
    std::vector<double> coordinate(std::size_t i) const {
        std::vector<double> out(sample_count());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = sample(k, i);
        return out;
    }
};

namespace detail {

struct BurstStream {
    double rate = 0.0;  // majorant proposal rate
    double b = 1.0;
    double gamma = 1.0;
};

template <class Input>
Trajectory run_bursts(const std::vector<BurstStream>& genes, Input&& input, std::vector<double> x, double t_end,
                      std::uint64_t seed, const SamplingPlan& plan) {
    const std::size_t n = genes.size();
    if (x.size() != n) throw ModelError("initial state has the wrong dimension");
    for (double v : x) {
        if (!(v >= 0.0)) throw ModelError("initial state must be >= 0");
    }
    if (!(t_end >= 0.0)) throw ModelError("t_end must be >= 0");
    if (plan.samples > 0 && !(plan.burn_in >= 0.0 && plan.stride > 0.0)) {
        throw ModelError("sampling needs burn_in >= 0 and stride > 0");
    }
    if (plan.samples > 0 && plan.end() > t_end) throw ModelError("sampling plan extends past t_end");

    Trajectory tr;
    tr.seed = seed;
    tr.dim = n;
    tr.t_end = t_end;
    tr.sample_times.reserve(plan.samples);
    tr.samples.reserve(plan.samples * n);

    std::vector<std::mt19937_64> rng;
    rng.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rng.push_back(stream_rng(seed, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto exponential = [&](std::size_t i, double rate) {
        return std::exponential_distribution<double>(rate)(rng[i]);
    };
    constexpr double never = std::numeric_limits<double>::infinity();
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = genes[i].rate > 0.0 ? exponential(i, genes[i].rate) : never;

    double t = 0.0;
    std::size_t k = 0;
    auto flow_to = [&](double target, std::vector<double>& y) {
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * std::exp(-genes[i].gamma * (target - t));
    };
    std::vector<double> tmp(n);
    while (true) {
        const auto it = std::min_element(next.begin(), next.end());
        const auto g = static_cast<std::size_t>(it - next.begin());
        const double t_next = std::min(*it, t_end);
        for (; k < plan.samples && plan.time(k) <= t_next; ++k) {
            flow_to(plan.time(k), tmp);
            tr.sample_times.push_back(plan.time(k));
            tr.samples.insert(tr.samples.end(), tmp.begin(), tmp.end());
        }
        flow_to(t_next, x);
        t = t_next;
        if (*it > t_end) break;
        ++tr.proposals;
        if (unit(rng[g]) < input(std::span<const double>(x))[g]) {
            x[g] += exponential(g, 1.0 / genes[g].b);
            ++tr.bursts;
            if (plan.keep_events) {
                tr.event_times.push_back(t);
                tr.event_gene.push_back(g);
                tr.event_states.insert(tr.event_states.end(), x.begin(), x.end());
            }
        }
        next[g] = t + exponential(g, genes[g].rate);
    }
    tr.final_state = x;
    return tr;
}

}  // namespace detail

/// One gene in dimensionless time (gamma = 1). a = 0 gives pure decay.
inline Trajectory simulate_1d(const ModelSpec1D& s, double x0, double t_end, std::uint64_t seed,
                              const SamplingPlan& plan = {}) {
    if (!(s.a >= 0.0)) throw ModelError("a must be >= 0");
    if (s.a > 0.0) s.validate();
    std::vector<detail::BurstStream> genes{{s.a, s.b, 1.0}};
    std::vector<double> c(1);
    auto input = [&](std::span<const double> x) -> const std::vector<double>& {
        c[0] = s.input(x[0]);
        return c;
    };
    return detail::run_bursts(genes, input, {x0}, t_end, seed, plan);
}

/// n genes; gene i draws from stream i of the master seed.
inline Trajectory simulate_nd(const ModelSpecND& s, std::vector<double> x0, double t_end, std::uint64_t seed,
                              const SamplingPlan& plan = {}) {
    s.validate();
    std::vector<detail::BurstStream> genes;
    for (const auto& g : s.genes) genes.push_back({g.k_m, g.b, degradation_rate(g.gamma)});
    std::vector<double> c(s.dim());
    auto input = [&](std::span<const double> x) -> const std::vector<double>& {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = eval_input(s.genes[i].input, x);
        return c;
    };
    return detail::run_bursts(genes, input, std::move(x0), t_end, seed, plan);
}

/// Convenience: `samples` states after burn-in, spaced by stride.
inline Trajectory stationary_samples_1d(const ModelSpec1D& s, std::size_t samples, std::uint64_t seed,
                                        double burn_in = 50.0, double stride = 1.0, double x0 = 0.0) {
    const SamplingPlan plan{burn_in, stride, samples, false};
    return simulate_1d(s, x0, plan.end(), seed, plan);
}

inline Trajectory stationary_samples_nd(const ModelSpecND& s, std::size_t samples, std::uint64_t seed,
                                        double burn_in = 50.0, double stride = 1.0) {
    const SamplingPlan plan{burn_in, stride, samples, false};
    return simulate_nd(s, std::vector<double>(s.dim(), 0.0), plan.end(), seed, plan);
}

// ---------------------------------------------------------------------------
// Histograms and sample statistics

/// Histogram on [edges.front(), edges.back()) plus an overflow bin for
/// samples at or beyond the last edge. heights integrate to 1 - overflow.
struct EmpiricalDensity {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::vector<double> heights;
    std::size_t overflow = 0;
    std::size_t sample_size = 0;

    double overflow_fraction() const { return static_cast<double>(overflow) / static_cast<double>(sample_size); }
    double bin_probability(std::size_t j) const {
        return static_cast<double>(counts[j]) / static_cast<double>(sample_size);
    }
};

inline EmpiricalDensity empirical_density(std::span<const double> samples, std::vector<double> edges) {
    if (samples.empty()) throw std::invalid_argument("empirical_density: no samples");
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw std::invalid_argument("empirical_density: edges must be strictly increasing");
    }
    EmpiricalDensity h;
    h.edges = std::move(edges);
    const std::size_t bins = h.edges.size() - 1;
    h.counts.assign(bins, 0);
    h.sample_size = samples.size();
    for (double v : samples) {
        if (v < h.edges.front()) throw std::invalid_argument("empirical_density: sample below the first edge");
        if (v >= h.edges.back()) {
            ++h.overflow;
            continue;
        }
        const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
        ++h.counts[static_cast<std::size_t>(it - h.edges.begin()) - 1];
    }
    h.heights.resize(bins);
    for (std::size_t j = 0; j < bins; ++j) h.heights[j] = h.bin_probability(j) / (h.edges[j + 1] - h.edges[j]);
    return h;
}

/// Row-major 2D histogram (index i0 * bins1 + i1); samples outside the box
/// in either coordinate count as overflow.
struct EmpiricalDensity2D {
    std::vector<double> edges0, edges1;
    std::vector<std::size_t> counts;
    std::vector<double> heights;
    std::size_t overflow = 0;
    std::size_t sample_size = 0;

    std::size_t bins0() const { return edges0.size() - 1; }
    std::size_t bins1() const { return edges1.size() - 1; }
};

inline EmpiricalDensity2D empirical_density_2d(const Trajectory& tr, std::vector<double> edges0,
                                               std::vector<double> edges1) {
    if (tr.dim != 2) throw std::invalid_argument("empirical_density_2d: trajectory is not 2D");
    if (tr.sample_count() == 0) throw std::invalid_argument("empirical_density_2d: no samples");
    EmpiricalDensity2D h;
    h.edges0 = std::move(edges0);
    h.edges1 = std::move(edges1);
    if (h.edges0.size() < 2 || h.edges1.size() < 2) throw std::invalid_argument("empirical_density_2d: too few edges");
    h.counts.assign(h.bins0() * h.bins1(), 0);
    h.sample_size = tr.sample_count();
    auto bin = [](const std::vector<double>& e, double v) -> std::ptrdiff_t {
        if (v < e.front() || v >= e.back()) return -1;
        return std::upper_bound(e.begin(), e.end(), v) - e.begin() - 1;
    };
    for (std::size_t k = 0; k < tr.sample_count(); ++k) {
        const auto i0 = bin(h.edges0, tr.sample(k, 0));
        const auto i1 = bin(h.edges1, tr.sample(k, 1));
        if (i0 < 0 || i1 < 0) {
            ++h.overflow;
            continue;
        }
        ++h.counts[static_cast<std::size_t>(i0) * h.bins1() + static_cast<std::size_t>(i1)];
    }
    h.heights.resize(h.counts.size());
    const double n = static_cast<double>(h.sample_size);
    for (std::size_t i = 0; i < h.bins0(); ++i) {
        for (std::size_t j = 0; j < h.bins1(); ++j) {
            const double area = (h.edges0[i + 1] - h.edges0[i]) * (h.edges1[j + 1] - h.edges1[j]);
            h.heights[i * h.bins1() + j] = static_cast<double>(h.counts[i * h.bins1() + j]) / n / area;
        }
    }
    return h;
}

/// sum_j |count_j / N - P_j| + |overflow / N - tail| for exact bin masses P_j
/// and the exact mass beyond the last edge.
inline double l1_to_bin_masses(const EmpiricalDensity& h, std::span<const double> P, double tail) {
    if (P.size() != h.counts.size()) throw std::invalid_argument("l1_to_bin_masses: size mismatch");
    double s = std::abs(h.overflow_fraction() - tail);
    for (std::size_t j = 0; j < P.size(); ++j) s += std::abs(h.bin_probability(j) - P[j]);
    return s;
}

/// Kolmogorov-Smirnov statistic sup |F_n - F| of a sample against a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
    if (xs.empty()) throw std::invalid_argument("ks_statistic: no samples");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic one-sample KS critical value at level alpha.
inline double ks_critical(std::size_t n, double alpha = 0.01) {
    return std::sqrt(-0.5 * std::log(0.5 * alpha)) / std::sqrt(static_cast<double>(n));
}

inline double lag1_autocorrelation(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 3) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = xs[k] - mean;
        den += d * d;
        if (k + 1 < n) num += d * (xs[k + 1] - mean);
    }
    return den > 0.0 ? num / den : 0.0;
}

/// Autocorrelation above which the stride is reported as too short.
inline constexpr double kStrideWarning = 0.5;

namespace detail {

/// sum_{i,j} |x_i - x_j| |y_i - y_j| in O(n log n): sort by x, then for each
/// point split the earlier points by y with Fenwick trees of count, sum x,
/// sum y and sum xy.
inline double cross_distance_sum(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    std::vector<std::size_t> ord(n), yrank(n);
    std::iota(ord.begin(), ord.end(), 0);
    std::vector<std::size_t> by_y(ord);
    std::sort(by_y.begin(), by_y.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    for (std::size_t r = 0; r < n; ++r) yrank[by_y[r]] = r;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    struct Fenwick {
        std::vector<double> t;
        explicit Fenwick(std::size_t n) : t(n + 1, 0.0) {}
        void add(std::size_t i, double v) {
            for (++i; i < t.size(); i += i & (~i + 1)) t[i] += v;
        }
        double prefix(std::size_t i) const {  // sum over ranks <= i
            double s = 0.0;
            for (++i; i > 0; i -= i & (~i + 1)) s += t[i];
            return s;
        }
    };
    Fenwick cnt(n), sx(n), sy(n), sxy(n);
    double tc = 0.0, tx = 0.0, ty = 0.0, txy = 0.0, total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t i = ord[p], r = yrank[i];
        const double xi = x[i], yi = y[i];
        const double c = cnt.prefix(r), ax = sx.prefix(r), ay = sy.prefix(r), axy = sxy.prefix(r);
        // sum_j (xi - xj)(yi - yj) over earlier points with y_j <= y_i, minus the rest.
        auto part = [&](double c_, double x_, double y_, double xy_) {
            return c_ * xi * yi - xi * y_ - yi * x_ + xy_;
        };
        total += part(c, ax, ay, axy) - part(tc - c, tx - ax, ty - ay, txy - axy);
        cnt.add(r, 1.0);
        sx.add(r, xi);
        sy.add(r, yi);
        sxy.add(r, xi * yi);
        tc += 1.0;
        tx += xi;
        ty += yi;
        txy += xi * yi;
    }
    return 2.0 * total;
}

/// Row sums a_i = sum_j |x_i - x_j|.
inline std::vector<double> distance_row_sums(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> ord(n);
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    std::vector<double> out(n);
    double below = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t i = ord[p];
        const double k = static_cast<double>(p);
        out[i] = x[i] * k - below + (total - below - x[i]) - x[i] * (static_cast<double>(n) - k - 1.0);
        below += x[i];
    }
    return out;
}

inline double distance_covariance_sq(std::span<const double> x, std::span<const double> y, double cross) {
    const double n = static_cast<double>(x.size());
    const auto a = distance_row_sums(x), b = distance_row_sums(y);
    double ab = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        sa += a[i];
        sb += b[i];
    }
    return cross / (n * n) - 2.0 * ab / (n * n * n) + sa * sb / (n * n * n * n);
}

}  // namespace detail

/// Sample distance correlation of two scalar samples (V-statistic form).
inline double distance_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("distance_correlation: bad sample sizes");
    const double vxy = detail::distance_covariance_sq(x, y, detail::cross_distance_sum(x, y));
    const double vxx = detail::distance_covariance_sq(x, x, detail::cross_distance_sum(x, x));
    const double vyy = detail::distance_covariance_sq(y, y, detail::cross_distance_sum(y, y));
    if (!(vxx > 0.0 && vyy > 0.0)) return 0.0;
    return std::sqrt(std::max(vxy, 0.0) / std::sqrt(vxx * vyy));
}

// ---------------------------------------------------------------------------
// Comparison against the closed-form stationary density

/// Smallest edge of a fine uniform grid with at least 1 - tail of P below it.
inline double stationary_upper_quantile(const StationaryProfile& prof, double tail = 1e-4, std::size_t cells = 20000) {
    const auto g = Grid1D::uniform(default_x_max(prof.spec), cells);
    const auto m = cell_integrals(g, [&](double x) { return x > 0.0 ? prof.density(x) : 0.0; }, prof.origin_exponent);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        acc += m[j];
        if (acc > 1.0 - tail) return g.edge(j + 1);
    }
    return g.x_max();
}

/// Uniform bins up to the 1 - 1e-4 quantile, with exact bin masses of P.
struct StationaryBins {
    Grid1D grid = Grid1D::uniform(1.0, 1);
    std::vector<double> mass;
    double tail = 0.0;  // exact mass beyond the last edge
};

inline StationaryBins stationary_bins(const StationaryProfile& prof, std::size_t bins = 50) {
    StationaryBins sb;
    sb.grid = Grid1D::uniform(stationary_upper_quantile(prof), bins);
    sb.mass = cell_integrals(sb.grid, [&](double x) { return x > 0.0 ? prof.density(x) : 0.0; }, prof.origin_exponent, 20);
    sb.tail = 1.0 - std::accumulate(sb.mass.begin(), sb.mass.end(), 0.0);
    return sb;
}

struct SsaComparison {
    EmpiricalDensity histogram;
    double l1 = 0.0;
    double lag1 = 0.0;
    bool stride_warning = false;
};

inline SsaComparison compare_with_stationary(const Trajectory& tr, const StationaryBins& sb) {
    SsaComparison c;
    const auto xs = tr.coordinate(0);
    c.histogram = empirical_density(xs, sb.grid.edges());
    c.l1 = l1_to_bin_masses(c.histogram, sb.mass, sb.tail);
    c.lag1 = lag1_autocorrelation(xs);
    c.stride_warning = c.lag1 > kStrideWarning;
    return c;
}

/// Mean L1 error over independent replicas at n and at 4n samples.
struct SsaScaling {
    std::size_t samples = 0;
    std::size_t replicas = 0;
    double l1_n = 0.0;
    double l1_4n = 0.0;
    double worst_l1_n = 0.0;
    double ratio() const { return l1_n / l1_4n; }
};

inline SsaScaling ssa_scaling(const ModelSpec1D& s, std::size_t n, std::size_t replicas, std::uint64_t seed,
                              double burn_in = 50.0, double stride = 1.0, std::size_t bins = 50) {
    const auto sb = stationary_bins(normalize(s), bins);
    auto seeds = stream_rng(seed, 1u << 20);
    SsaScaling r;
    r.samples = n;
    r.replicas = replicas;
    for (std::size_t k = 0; k < replicas; ++k) {
        const double e1 = compare_with_stationary(stationary_samples_1d(s, n, seeds(), burn_in, stride), sb).l1;
        const double e4 = compare_with_stationary(stationary_samples_1d(s, 4 * n, seeds(), burn_in, stride), sb).l1;
        r.l1_n += e1 / static_cast<double>(replicas);
        r.l1_4n += e4 / static_cast<double>(replicas);
        r.worst_l1_n = std::max(r.worst_l1_n, e1);
    }
    return r;
}

}  // namespace genepide
