#pragma once

// Adaptive quadrature of exp(g(x)) for log-concave-ish integrands with a
// known mode, evaluated in log space so that very large moments stay finite.

#include "pamlab/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace pamlab {

struct QuadratureConfig {
    double rel_tol = 1e-11;
    unsigned max_depth = 18;
};

struct LogIntegral {
    double log_value = -std::numeric_limits<double>::infinity();
    double rel_error = 0.0;
};

/// log ∫_a^b exp(g(x)) dx.
///
/// `mode` is where g attains (or nearly attains) its maximum and `width` the
/// scale on which g falls by O(1) around it; both only steer breakpoints.
/// `b` may be +infinity.
template <class G>
LogIntegral log_integrate_exp(G&& g, double a, double b, double mode, double width,
                              const QuadratureConfig& cfg = {})
{
    using boost::math::quadrature::gauss_kronrod;
    if (!(b > a)) return {};

    const double peak = std::clamp(mode, a, std::isfinite(b) ? b : std::max(a, mode));
    const double ref = g(peak);
    if (!std::isfinite(ref)) throw NumericalError("log_integrate_exp: non-finite integrand at mode", ref);
    width = std::max(width, 1e-12 * std::max(1.0, std::abs(peak)));

    std::vector<double> cuts{a};
    for (double k : {-64.0, -16.0, -4.0, 0.0, 4.0, 16.0, 64.0}) {
        const double c = peak + k * width;
        if (c > a && c < b) cuts.push_back(c);
    }
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto f = [&](double x) {
        const double v = g(x) - ref;
        return v < -745.0 ? 0.0 : std::exp(v);
    };

    double total = 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double e = 0.0;
        total += gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1], cfg.max_depth, cfg.rel_tol, &e);
        err += e;
    }
    if (!(total > 0.0)) return {};
    const double rel = err / total;
    if (rel > 1e3 * cfg.rel_tol && rel > 1e-8) {
        throw NumericalError("log_integrate_exp: tolerance not met", rel);
    }
    return {ref + std::log(total), rel};
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) noexcept
{
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(exp(a) - exp(b)) for a >= b.
inline double log_sub(double a, double b) noexcept
{
    if (b == -std::numeric_limits<double>::infinity()) return a;
    if (b >= a) return -std::numeric_limits<double>::infinity();
    return a + std::log1p(-std::exp(b - a));
}

} // namespace pamlab
