#pragma once

// OCV uncertainty metrics over a SOC grid: cell-to-cell, cycle-rate and curve-fitting error,
// the standard-mean zero-mean test, and SOC-error propagation through the OCV slope.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocvkit/analysis.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/models.hpp"

namespace ocvkit {

struct CellOcv {
    std::string battery_id;
    std::vector<double> v; ///< OCV at each grid point [V]
};

/// Pseudo-OCVs of several cells tested at one C-rate, sampled on a shared grid.
struct CohortOcv {
    SocGrid grid;
    std::vector<CellOcv> cells;
    int c_rate_denominator = 0;

    void validate() const {
        for (const auto& c : cells) {
            if (c.v.size() != grid.k()) {
                throw DataError("cohort cell " + c.battery_id + " has " + std::to_string(c.v.size()) +
                                " grid values, expected " + std::to_string(grid.k()));
            }
        }
    }
};

/// Per-grid mean/dispersion of one metric plus the grid-averaged summaries.
struct GridMetrics {
    std::vector<double> mu;
    std::vector<double> sigma;
    double mu_avg = 0.0;
    double sigma_avg = 0.0;
    /// mu_avg / sigma_avg; absent when sigma_avg == 0.
    std::optional<double> standard_mean;
};

inline double standard_mean(double mu_avg, double sigma_avg) {
    if (!(sigma_avg > 0.0)) {
        throw DataError("standard mean needs a positive dispersion, got " + text::exact(sigma_avg));
    }
    return mu_avg / sigma_avg;
}

namespace detail {

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v;
    }
    return s / static_cast<double>(x.size());
}

inline void finish(GridMetrics& g, double sigma_summary) {
    g.mu_avg = mean(g.mu);
    g.sigma_avg = sigma_summary;
    if (g.sigma_avg > 0.0) {
        g.standard_mean = standard_mean(g.mu_avg, g.sigma_avg);
    }
}

/// Deviation metric with mu = d, sigma = |d| per grid point and an RMS dispersion summary.
inline GridMetrics deviation_metrics(std::vector<double> dev) {
    GridMetrics g;
    g.sigma.reserve(dev.size());
    double sq = 0.0;
    for (double d : dev) {
        g.sigma.push_back(std::abs(d));
        sq += d * d;
    }
    const double rms = std::sqrt(sq / static_cast<double>(dev.size()));
    g.mu = std::move(dev);
    finish(g, rms);
    return g;
}

} // namespace detail

/// Cell-to-cell variation over every unordered pair i < j of the cohort:
///   mu(l)    = mean of v_l(i) - v_l(j)
///   sigma(l) = sqrt(mean of (v_l(i) - v_l(j))^2)
/// Summaries are plain means over the grid.
inline GridMetrics c2c_metrics(const CohortOcv& cohort) {
    cohort.validate();
    const std::size_t q = cohort.cells.size();
    if (q < 2) {
        throw DataError("cell-to-cell metrics need at least 2 cells, got " + std::to_string(q));
    }
    const std::size_t k = cohort.grid.k();
    const double pairs = static_cast<double>(q * (q - 1) / 2);
    GridMetrics g;
    g.mu.assign(k, 0.0);
    g.sigma.assign(k, 0.0);
    for (std::size_t l = 0; l < k; ++l) {
        double sum = 0.0;
        double sq = 0.0;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            for (std::size_t j = i + 1; j < q; ++j) {
                const double d = cohort.cells[i].v[l] - cohort.cells[j].v[l];
                sum += d;
                sq += d * d;
            }
        }
        g.mu[l] = sum / pairs;
        g.sigma[l] = std::sqrt(sq / pairs);
    }
    detail::finish(g, detail::mean(g.sigma));
    return g;
}

/// Cohort-averaged OCV per C-rate.
struct RateAverages {
    SocGrid grid;
    std::map<int, std::vector<double>> by_rate;
    /// Slowest rate present (largest denominator).
    int reference = 0;

    const std::vector<double>& reference_curve() const { return by_rate.at(reference); }
};

inline RateAverages crate_reference(std::span<const CohortOcv> cohorts) {
    if (cohorts.empty()) {
        throw DataError("no cohorts to average");
    }
    RateAverages out;
    out.grid = cohorts.front().grid;
    for (const auto& c : cohorts) {
        if (!(c.grid == out.grid)) {
            throw DataError("cohort at " + text::c_rate_label(c.c_rate_denominator) + " uses a different SOC grid");
        }
        if (c.cells.empty()) {
            throw DataError("cohort at " + text::c_rate_label(c.c_rate_denominator) + " has no cells");
        }
        c.validate();
        if (out.by_rate.count(c.c_rate_denominator) != 0) {
            throw DataError("two cohorts at " + text::c_rate_label(c.c_rate_denominator));
        }
        std::vector<double> avg(out.grid.k(), 0.0);
        for (const auto& cell : c.cells) {
            for (std::size_t l = 0; l < avg.size(); ++l) {
                avg[l] += cell.v[l];
            }
        }
        for (double& a : avg) {
            a /= static_cast<double>(c.cells.size());
        }
        out.by_rate.emplace(c.c_rate_denominator, std::move(avg));
        out.reference = std::max(out.reference, c.c_rate_denominator);
    }
    return out;
}

struct CrateMetrics {
    /// One deviation metric per non-reference rate.
    std::map<int, GridMetrics> per_rate;
    /// Pooled over all non-reference rates; needs at least two of them.
    std::optional<GridMetrics> pooled;
};

/// Pooled cycle-rate metric: mu(l) = mean_i d_i(l), sigma(l) = sqrt(sum_i d_i(l)^2 / (r - 1)).
inline GridMetrics crate_pooled_metrics(const std::map<int, std::vector<double>>& rates,
                                        std::span<const double> reference) {
    const std::size_t r = rates.size();
    if (r == 0) {
        throw DataError("no non-reference rates");
    }
    if (r == 1) {
        throw DataError("pooled cycle-rate sigma undefined: divisor r-1 = 0");
    }
    const std::size_t k = reference.size();
    GridMetrics g;
    g.mu.assign(k, 0.0);
    g.sigma.assign(k, 0.0);
    for (const auto& [rate, v] : rates) {
        if (v.size() != k) {
            throw DataError(text::c_rate_label(rate) + " curve length does not match the reference");
        }
        for (std::size_t l = 0; l < k; ++l) {
            const double d = v[l] - reference[l];
            g.mu[l] += d;
            g.sigma[l] += d * d;
        }
    }
    for (std::size_t l = 0; l < k; ++l) {
        g.mu[l] /= static_cast<double>(r);
        g.sigma[l] = std::sqrt(g.sigma[l] / static_cast<double>(r - 1));
    }
    detail::finish(g, detail::mean(g.sigma));
    return g;
}

/// Cycle-rate error of each rate against the reference curve. Single-rate metrics use the
/// deviation itself (sigma = |d|, RMS summary); the pooled metric is added when r >= 2.
inline CrateMetrics crate_metrics(const std::map<int, std::vector<double>>& rates, std::span<const double> reference) {
    if (rates.empty()) {
        throw DataError("no non-reference rates");
    }
    CrateMetrics out;
    for (const auto& [rate, v] : rates) {
        if (v.size() != reference.size()) {
            throw DataError(text::c_rate_label(rate) + " curve length does not match the reference");
        }
        std::vector<double> dev(v.size());
        for (std::size_t l = 0; l < v.size(); ++l) {
            dev[l] = v[l] - reference[l];
        }
        out.per_rate.emplace(rate, detail::deviation_metrics(std::move(dev)));
    }
    if (rates.size() >= 2) {
        out.pooled = crate_pooled_metrics(rates, reference);
    }
    return out;
}

/// Convenience overload: every rate except the reference is compared against it.
inline CrateMetrics crate_metrics(const RateAverages& avg) {
    std::map<int, std::vector<double>> others;
    for (const auto& [rate, v] : avg.by_rate) {
        if (rate != avg.reference) {
            others.emplace(rate, v);
        }
    }
    return crate_metrics(others, avg.reference_curve());
}

/// Average over cells of each cell's model evaluated on the grid.
inline std::vector<double> curvefit_predicted(std::span<const FittedModel> models, const SocGrid& grid) {
    if (models.empty()) {
        throw DataError("curve-fit prediction needs at least one model");
    }
    for (const auto& m : models) {
        if (m.kind != models.front().kind) {
            throw DataError("curve-fit prediction mixes model kinds");
        }
    }
    std::vector<double> out(grid.k(), 0.0);
    for (std::size_t l = 0; l < grid.k(); ++l) {
        for (const auto& m : models) {
            out[l] += eval(m, grid[l]);
        }
        out[l] /= static_cast<double>(models.size());
    }
    return out;
}

/// Curve-fitting error: mu(l) = predicted - reference, sigma(l) = |mu(l)|, RMS dispersion summary.
inline GridMetrics curvefit_metrics(std::span<const double> predicted, std::span<const double> reference) {
    if (predicted.size() != reference.size() || predicted.empty()) {
        throw DataError("curve-fit metrics: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                        std::to_string(reference.size()) + ")");
    }
    std::vector<double> dev(predicted.size());
    for (std::size_t l = 0; l < dev.size(); ++l) {
        dev[l] = predicted[l] - reference[l];
    }
    return detail::deviation_metrics(std::move(dev));
}

/// Standard normal quantile. Acklam's rational approximation refined by one Halley step.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw UsageError("normal quantile needs 0 < p < 1");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

/// Two-sided critical value. Common levels use the rounded table values (1.96 at 5%).
inline double critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw UsageError("significance level must be in (0, 1), got " + text::exact(alpha));
    }
    if (alpha == 0.10) return 1.645;
    if (alpha == 0.05) return 1.96;
    if (alpha == 0.01) return 2.576;
    return normal_quantile(1.0 - alpha / 2.0);
}

struct ZeroMeanVerdict {
    double standard_mean = 0.0;
    double critical = 0.0;
    double alpha = 0.05;
    bool pass = false;
};

/// Passes when -critical < standard_mean < critical (strict).
inline ZeroMeanVerdict zero_mean_test(double standard_mean_value, double alpha = 0.05) {
    ZeroMeanVerdict v;
    v.standard_mean = standard_mean_value;
    v.alpha = alpha;
    v.critical = critical_value(alpha);
    v.pass = -v.critical < standard_mean_value && standard_mean_value < v.critical;
    return v;
}

/// SOC standard deviation implied by an OCV error of `sigma_e` volts: sigma_e / |f'(s)|.
inline double soc_error_std(const FittedModel& model, double s, double sigma_e) {
    if (sigma_e < 0.0) {
        throw UsageError("OCV error std must be non-negative");
    }
    const double slope = derivative(model, s);
    if (!(std::abs(slope) > 1e-12)) {
        throw NumericError("OCV curve is flat at s=" + text::exact(s) + ": SOC uncertainty is unbounded");
    }
    return sigma_e / std::abs(slope);
}

} // namespace ocvkit
