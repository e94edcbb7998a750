#pragma once

// Goodness-of-fit helpers: Kolmogorov-Smirnov distance and p-value, Hill
// tail-index estimator, least-squares slope.

#include "pamlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace pamlab {

/// sup_x |F_n(x) - F(x)| for a continuous reference CDF.
template <class Cdf>
double ks_distance(std::span<const double> samples, Cdf&& cdf)
{
    if (samples.empty()) throw ConfigError("ks_distance: empty sample");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic Kolmogorov p-value P(D_n > d) with the Stephens correction.
inline double ks_pvalue(double d, std::size_t n)
{
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Hill estimate of the tail index alpha from the top-k order statistics:
///   1/alpha = (1/k) Σ_{i<k} log(X_(n-i) / X_(n-k)).
inline double hill_estimator(std::span<const double> samples, std::size_t k)
{
    const std::size_t n = samples.size();
    if (k < 1 || k >= n) throw ConfigError("hill_estimator: k must satisfy 1 <= k < n");
    std::vector<double> s(samples.begin(), samples.end());
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n - k - 1), s.end());
    const double threshold = s[n - k - 1];
    if (!(threshold > 0.0)) throw ConfigError("hill_estimator: order statistic X_(n-k) must be positive");
    double acc = 0.0;
    for (std::size_t i = n - k; i < n; ++i) acc += std::log(s[i] / threshold);
    return static_cast<double>(k) / acc;
}

/// Ordinary least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("ols_slope: need >= 2 paired points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

inline double sample_variance(std::span<const double> x)
{
    if (x.size() < 2) return 0.0;
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace pamlab
