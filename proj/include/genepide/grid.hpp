#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace genepide {

/// Finite-volume grid on [0, x_max]: cell j is [edge(j), edge(j+1)].
class Grid1D {
public:
    Grid1D() = default;

    explicit Grid1D(std::vector<double> edges) : edges_(std::move(edges)) {
        if (edges_.size() < 2) throw std::invalid_argument("Grid1D needs at least one cell");
        if (edges_.front() != 0.0) throw std::invalid_argument("Grid1D must start at 0");
        for (std::size_t i = 1; i < edges_.size(); ++i) {
            if (!(edges_[i] > edges_[i - 1])) throw std::invalid_argument("Grid1D edges must increase strictly");
        }
    }

    static Grid1D uniform(double x_max, std::size_t cells) {
        if (cells == 0 || !(x_max > 0.0)) throw std::invalid_argument("uniform grid needs cells > 0, x_max > 0");
        std::vector<double> e(cells + 1);
        for (std::size_t i = 0; i <= cells; ++i) e[i] = x_max * static_cast<double>(i) / static_cast<double>(cells);
        e.back() = x_max;
        return Grid1D(std::move(e));
    }

    /// Log-spaced cells on [x_first, x_glue] (plus the origin cell [0, x_first])
    /// followed by uniform cells on [x_glue, x_max]. One eighth of the cells
    /// (at least four) go to the geometric part.
    static Grid1D hybrid(double x_max, std::size_t cells, double x_glue, double first_ratio = 1e-6) {
        if (cells < 8) throw std::invalid_argument("hybrid grid needs at least 8 cells");
        if (!(x_glue > 0.0 && x_glue < x_max)) throw std::invalid_argument("hybrid grid needs 0 < x_glue < x_max");
        const std::size_t n_geo = std::max<std::size_t>(4, cells / 8);
        const std::size_t n_uni = cells - n_geo;
        const double x_first = x_glue * first_ratio;
        std::vector<double> e;
        e.reserve(cells + 1);
        e.push_back(0.0);
        // n_geo - 1 geometric cells between x_first and x_glue.
        const double log_ratio = std::log(x_glue / x_first) / static_cast<double>(n_geo - 1);
        for (std::size_t i = 0; i + 1 < n_geo; ++i) e.push_back(x_first * std::exp(log_ratio * static_cast<double>(i)));
        for (std::size_t i = 0; i <= n_uni; ++i) {
            e.push_back(x_glue + (x_max - x_glue) * static_cast<double>(i) / static_cast<double>(n_uni));
        }
        e.back() = x_max;
        return Grid1D(std::move(e));
    }

    std::size_t cells() const { return edges_.size() - 1; }
    double edge(std::size_t i) const { return edges_[i]; }
    double width(std::size_t j) const { return edges_[j + 1] - edges_[j]; }
    double center(std::size_t j) const { return 0.5 * (edges_[j] + edges_[j + 1]); }
    double x_max() const { return edges_.back(); }
    const std::vector<double>& edges() const { return edges_; }

    std::vector<double> centers() const {
        std::vector<double> c(cells());
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = center(j);
        return c;
    }

    std::vector<double> widths() const {
        std::vector<double> w(cells());
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = width(j);
        return w;
    }

    double max_width() const {
        double w = 0.0;
        for (std::size_t j = 0; j < cells(); ++j) w = std::max(w, width(j));
        return w;
    }

    /// Index of the cell containing x (x in [0, x_max]); x_max maps to the last cell.
    std::size_t locate(double x) const {
        if (x <= 0.0) return 0;
        if (x >= edges_.back()) return cells() - 1;
        const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        return static_cast<std::size_t>(it - edges_.begin()) - 1;
    }

    bool operator==(const Grid1D&) const = default;

private:
    std::vector<double> edges_;
};

}  // namespace genepide
