#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "genepide/config.hpp"
#include "genepide/solvernd.hpp"
#include "genepide/ssa.hpp"

using namespace genepide;

namespace {

const std::vector<ModelSpec1D> kGolden = {
    {5, 10, 45, -4, 0.15}, {5, 30, 45, -4, 0.15}, {10, 5, 45, -4, 0.15}, {8, 16, 45, -4, 0.15}, {15, 20, 45, -4, 0.15}};

double naive_dcor(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto centred = [&](const std::vector<double>& v) {
        std::vector<double> A(n * n), row(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                A[i * n + j] = std::abs(v[i] - v[j]);
                row[i] += A[i * n + j] / n;
                all += A[i * n + j] / (double(n) * n);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) A[i * n + j] += all - row[i] - row[j];
        return A;
    };
    const auto A = centred(x), B = centred(y);
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        xy += A[k] * B[k];
        xx += A[k] * A[k];
        yy += B[k] * B[k];
    }
    return std::sqrt(xy / std::sqrt(xx * yy));
}

RunConfig load(const std::string& name) { return load_config(std::string(GENEPIDE_CONFIG_DIR) + "/" + name + ".json"); }

}  // namespace

TEST(Ssa, OpenLoopWaitingTimesAndBurstsAreExponential) {
    // With eps = 1 the input is identically 1, so bursts arrive at rate a and
    // have Exp(b) sizes.
    const ModelSpec1D s{4, 7, 45, -4, 1.0};
    SamplingPlan plan{0.0, 1.0, 1, true};
    const auto tr = simulate_1d(s, 0.0, 20000.0, 17, plan);
    std::vector<double> waits, sizes;
    double prev_t = 0.0, prev_x = 0.0;
    for (std::size_t k = 0; k < tr.event_times.size(); ++k) {
        const double dt = tr.event_times[k] - prev_t;
        waits.push_back(dt);
        sizes.push_back(tr.event_states[k] - prev_x * std::exp(-dt));
        prev_t = tr.event_times[k];
        prev_x = tr.event_states[k];
    }
    ASSERT_GT(waits.size(), 50000u);
    const double dw = ks_statistic(waits, [&](double t) { return 1.0 - std::exp(-s.a * t); });
    const double ds = ks_statistic(sizes, [&](double y) { return 1.0 - std::exp(-y / s.b); });
    EXPECT_LT(dw, ks_critical(waits.size()));
    EXPECT_LT(ds, ks_critical(sizes.size()));
    EXPECT_EQ(tr.bursts, tr.event_times.size());
}

TEST(Ssa, ThinningAcceptanceMatchesInput) {
    const ModelSpec1D s = kGolden[2];
    SamplingPlan plan{0.0, 1.0, 1, true};
    const auto tr = simulate_1d(s, 0.0, 5000.0, 5, plan);
    EXPECT_LT(tr.bursts, tr.proposals);
    EXPECT_GT(static_cast<double>(tr.bursts), s.epsilon * static_cast<double>(tr.proposals));
}

TEST(Ssa, ZeroBurstFrequencyIsPureDecay) {
    const ModelSpec1D s{0.0, 10, 45, -4, 0.15};
    const SamplingPlan plan{0.0, 0.5, 20, true};
    const auto tr = simulate_1d(s, 5.0, plan.end(), 3, plan);
    EXPECT_EQ(tr.bursts, 0u);
    for (std::size_t k = 0; k < tr.sample_count(); ++k) {
        EXPECT_NEAR(tr.sample(k), 5.0 * std::exp(-tr.sample_times[k]), 1e-12);
    }
}

TEST(Ssa, SeedDeterminesTrajectory) {
    const auto a = stationary_samples_1d(kGolden[0], 2000, 99);
    const auto b = stationary_samples_1d(kGolden[0], 2000, 99);
    const auto c = stationary_samples_1d(kGolden[0], 2000, 100);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, c.samples);
}

TEST(Ssa, SingleGeneNdMatchesOneDimensional) {
    const auto a = stationary_samples_1d(kGolden[3], 1000, 8);
    const auto b = stationary_samples_nd(as_nd(kGolden[3]), 1000, 8);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) EXPECT_DOUBLE_EQ(a.samples[k], b.samples[k]);
}

TEST(Histogram, CountsAndOverflow) {
    const std::vector<double> xs = {0.0, 0.5, 0.99, 1.0, 2.5, 3.0, 7.0};
    const auto h = empirical_density(xs, {0.0, 1.0, 2.0, 3.0});
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{3, 1, 1}));
    EXPECT_EQ(h.overflow, 2u);
    double total = 0.0;
    for (std::size_t j = 0; j < 3; ++j) total += h.heights[j] * (h.edges[j + 1] - h.edges[j]);
    EXPECT_NEAR(total, 1.0 - h.overflow_fraction(), 1e-15);
    EXPECT_NEAR(l1_to_bin_masses(h, std::vector<double>{3.0 / 7, 1.0 / 7, 1.0 / 7}, 2.0 / 7), 0.0, 1e-15);
    EXPECT_THROW(empirical_density(xs, {0.0, 1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(empirical_density(std::vector<double>{-1.0}, {0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(empirical_density(std::vector<double>{}, {0.0, 1.0}), std::invalid_argument);
}

TEST(Statistics, LagOneAutocorrelation) {
    std::vector<double> alt(1000);
    for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = k % 2 ? 1.0 : -1.0;
    EXPECT_NEAR(lag1_autocorrelation(alt), -1.0, 2e-3);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    std::vector<double> ar(200000);
    double x = 0.0;
    for (double& v : ar) v = x = 0.6 * x + z(rng);
    EXPECT_NEAR(lag1_autocorrelation(ar), 0.6, 0.01);
}

TEST(Statistics, DistanceCorrelationMatchesDefinition) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    std::vector<double> x(400), y(400);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::round(4.0 * z(rng)) / 4.0;  // ties included
        y[i] = x[i] * x[i] + 0.5 * z(rng);
    }
    EXPECT_NEAR(distance_correlation(x, y), naive_dcor(x, y), 1e-10);
    EXPECT_NEAR(distance_correlation(x, x), 1.0, 1e-12);
    std::vector<double> lin(x);
    for (double& v : lin) v = 3.0 - 2.0 * v;
    EXPECT_NEAR(distance_correlation(x, lin), 1.0, 1e-12);
}

TEST(Ssa, IndependentGenesAreUncorrelated) {
    const auto c = load("independent_pair");
    const auto tr = stationary_samples_nd(c.spec_nd(), 100000, 1);
    EXPECT_LT(distance_correlation(tr.coordinate(0), tr.coordinate(1)), 0.02);
}

TEST(Ssa, MatchesStationaryDensity) {
    for (const auto& s : kGolden) {
        const auto sb = stationary_bins(normalize(s));
        EXPECT_NEAR(sb.tail, 1e-4, 1e-4);
        const auto cmp = compare_with_stationary(stationary_samples_1d(s, 100000, 1), sb);
        EXPECT_LE(cmp.l1, 0.05) << "a=" << s.a << " b=" << s.b;
    }
}

TEST(Ssa, BimodalCaseShowsBothModes) {
    const ModelSpec1D s = kGolden[1];
    const auto sb = stationary_bins(normalize(s));
    const auto h = compare_with_stationary(stationary_samples_1d(s, 100000, 2), sb).histogram;
    // A local maximum in the interior beyond a dip, plus the mass at the origin.
    const auto top = static_cast<std::size_t>(std::max_element(h.heights.begin() + 5, h.heights.end()) - h.heights.begin());
    const auto dip = std::min_element(h.heights.begin(), h.heights.begin() + static_cast<long>(top));
    EXPECT_GT(h.heights[0], *dip);
    EXPECT_GT(h.heights[top], 1.5 * *dip);
    EXPECT_NEAR(sb.grid.center(top), 117.3, sb.grid.width(top));
}

TEST(Ssa, MutualRepressionModesAgreeWithSolver) {
    auto c = load("mutual_repression");
    c.grid.cells = {64};
    SolverNDConfig sc;
    sc.dt = c.solver.dt;
    const SolverND solver(std::make_shared<const DiscretizationND>(c.spec_nd(), axis_grids(c)), sc);
    const auto& d = solver.discretization();
    const auto st = compute_stationary_nd(solver, solver.field(d.gamma_initial()), 1e-7);
    const auto peaks = interior_peaks_2d(d, st.masses);
    ASSERT_EQ(peaks.size(), 2u);

    const auto tr = stationary_samples_nd(c.spec_nd(), 100000, 3, 50.0, 2.0);
    // Both densities binned on a common coarse grid; modes compared per half-plane.
    const double w = 20.0;
    const std::size_t nb = 15;
    auto bin = [&](double v) { return std::min(nb - 1, static_cast<std::size_t>(v / w)); };
    std::vector<double> hs(nb * nb, 0.0), hp(nb * nb, 0.0);
    for (std::size_t k = 0; k < tr.sample_count(); ++k) hs[bin(tr.sample(k, 0)) * nb + bin(tr.sample(k, 1))] += 1.0;
    // Solver cells are spread over the bins they overlap.
    auto overlaps = [&](const Grid1D& g, std::size_t j) {
        std::vector<std::pair<std::size_t, double>> out;
        const double lo = g.edge(j), hi = g.edge(j + 1);
        for (std::size_t b = bin(lo); b <= bin(hi); ++b) {
            const double top = b + 1 == nb ? std::max(hi, nb * w) : (b + 1) * w;
            const double len = std::min(hi, top) - std::max(lo, b * w);
            if (len > 0.0) out.emplace_back(b, len / (hi - lo));
        }
        return out;
    };
    for (std::size_t k = 0; k < st.masses.size(); ++k) {
        const auto idx = d.layout().unravel(k);
        for (const auto& [b0, f0] : overlaps(d.grid(0), idx[0]))
            for (const auto& [b1, f1] : overlaps(d.grid(1), idx[1])) hp[b0 * nb + b1] += st.masses[k] * f0 * f1;
    }
    auto mode = [&](const std::vector<double>& h, bool upper) {
        std::size_t best = 0;
        double top = -1.0;
        for (std::size_t i = 0; i < nb; ++i)
            for (std::size_t j = 0; j < nb; ++j)
                if ((i > j) == upper && h[i * nb + j] > top) {
                    top = h[i * nb + j];
                    best = i * nb + j;
                }
        return std::pair<long, long>(static_cast<long>(best / nb), static_cast<long>(best % nb));
    };
    for (bool upper : {true, false}) {
        const auto ms = mode(hs, upper), mp = mode(hp, upper);
        EXPECT_LE(std::abs(ms.first - mp.first), 1) << upper;
        EXPECT_LE(std::abs(ms.second - mp.second), 1) << upper;
    }
}
