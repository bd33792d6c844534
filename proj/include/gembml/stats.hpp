#pragma once

#include <algorithm>
#include <cmath>

#include "gembml/types.hpp"

namespace gembml {

inline double mean(const Vec& v) {
    require(!v.empty(), "mean: empty vector");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_variance(const Vec& v) {
    require(v.size() >= 2, "sample_variance: need at least 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(Vec v) {
    require(!v.empty(), "median: empty vector");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolated quantile of an already sorted vector.
inline double quantile_sorted(const Vec& sorted, double q) {
    require(!sorted.empty(), "quantile: empty vector");
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// One-sided paired test (normal approximation): p-value for H1: E[diff] > 0.
inline double paired_one_sided_p(const Vec& diffs) {
    const size_t n = diffs.size();
    require(n >= 2, "paired_one_sided_p: need at least 2 pairs");
    const double m = mean(diffs);
    const double sd = std::sqrt(sample_variance(diffs));
    if (sd == 0.0) return m > 0.0 ? 0.0 : 1.0;
    const double t = m / (sd / std::sqrt(static_cast<double>(n)));
    return 1.0 - normal_cdf(t);
}

/// Mean with a 95% normal-approximation confidence half-width.
struct MeanCI {
    double mean = 0.0;
    double half_width = 0.0;
};

inline MeanCI mean_ci95(const Vec& v) {
    MeanCI r;
    r.mean = mean(v);
    if (v.size() >= 2)
        r.half_width = 1.959963984540054 * std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
    return r;
}

/// Asymptotic Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_tail(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1) ? term : -term;
        if (term < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, s));
}

/// Kolmogorov-Smirnov p-value against U(a, b).
inline double ks_uniform_p(Vec samples, double a, double b) {
    require(samples.size() >= 10, "ks_uniform_p: need at least 10 samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const double cdf = std::min(1.0, std::max(0.0, (samples[i] - a) / (b - a)));
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    const double sn = std::sqrt(n);
    return kolmogorov_tail(d * (sn + 0.12 + 0.11 / sn));
}

}  // namespace gembml
