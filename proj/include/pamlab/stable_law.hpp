#pragma once

// Totally skewed alpha-stable laws with Levy spectral function x^{-alpha}:
//
//   alpha != 1:  phi(u) = exp{-Gamma(1-alpha) |u|^alpha exp(-i pi alpha/2 sign u)}
//   alpha == 1:  phi(u) = exp{iu(1-gamma_E) - (pi/2)|u| (1 + i (2/pi) sign(u) log|u|)}
//
// CDF and density by Gil-Pelaez inversion, tabulated once per law and
// interpolated; right tails by the convergent (alpha < 1) or asymptotic
// (alpha > 1) series.

#include "pamlab/errors.hpp"
#include "pamlab/rng.hpp"
#include "pamlab/stats.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

namespace pamlab {

struct InversionConfig {
    double abs_tol = 1e-10;
    /// Integration stops where |phi(u)| drops below this.
    double cf_cutoff = 1e-12;
    std::size_t min_panels = 16;
    std::size_t max_panels = std::size_t{1} << 18;
};

struct InversionResult {
    double value = 0.0;
    double error = 0.0;
};

class StableLaw {
public:
    explicit StableLaw(double alpha, InversionConfig cfg = {}) : alpha_(alpha), cfg_(cfg)
    {
        if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("StableLaw: alpha must lie in (0,2)");
        if (alpha != 1.0) {
            g_ = std::tgamma(1.0 - alpha);
            scale_alpha_ = g_ * std::cos(std::numbers::pi * alpha / 2.0);
        } else {
            scale_alpha_ = std::numbers::pi / 2.0;
        }
        table_ = std::make_shared<Table>();
    }

    double alpha() const noexcept { return alpha_; }
    /// sigma^alpha, so that |phi(u)| = exp(-sigma^alpha |u|^alpha).
    double scale_alpha() const noexcept { return scale_alpha_; }
    double sigma2() const noexcept { return 0.0; }
    /// Levy spectral tail x^{-alpha} on (0, inf).
    double levy_spectral(double x) const { return x > 0.0 ? std::pow(x, -alpha_) : 0.0; }

    /// Drift in the 1/(1+x^2)-compensated Levy-Khintchine form; NaN until fitted.
    double shift_a() const noexcept { return shift_a_; }
    void set_shift_a(double a) noexcept { shift_a_ = a; }

    std::complex<double> cf(double u) const
    {
        if (u == 0.0) return 1.0;
        const double au = std::abs(u);
        const double sgn = u > 0.0 ? 1.0 : -1.0;
        if (alpha_ != 1.0) {
            const double w = std::pow(au, alpha_);
            const double ph = std::numbers::pi * alpha_ / 2.0;
            return std::exp(std::complex<double>(-g_ * w * std::cos(ph), g_ * w * std::sin(ph) * sgn));
        }
        const double re = -std::numbers::pi / 2.0 * au;
        const double im = u * (1.0 - std::numbers::egamma) - u * std::log(au);
        return std::exp(std::complex<double>(re, im));
    }

    /// F(x) by Gil-Pelaez inversion, error from panel doubling.
    InversionResult cdf_inversion(double x) const { return invert(x, false); }
    InversionResult density_inversion(double x) const { return invert(x, true); }

    double cdf(double x) const
    {
        if (alpha_ < 1.0 && x <= 0.0) return 0.0;
        const Table& t = table();
        if (x >= t.x_tail) return 1.0 - tail_series(x).first;
        if (x <= t.x_lo) return 0.0;
        return t.interpolate(x);
    }

    double density(double x) const
    {
        if (alpha_ < 1.0 && x <= 0.0) return 0.0;
        const Table& t = table();
        if (x >= t.x_tail) return tail_series(x).second;
        if (x <= t.x_lo) return 0.0;
        return density_inversion(x).value;
    }

    /// (1 - F(x), f(x)) from the tail expansion; alpha = 1 keeps the leading term.
    std::pair<double, double> tail_series(double x) const
    {
        if (alpha_ == 1.0) return {1.0 / x, 1.0 / (x * x)};
        const auto s = series(x);
        return {s.tail, s.dens};
    }

    /// Upper end of the tabulated range; the tail series takes over beyond it.
    double tail_threshold() const { return table().x_tail; }

private:
    struct SeriesValue {
        double tail = 0.0;
        double dens = 0.0;
        double max_term = 0.0;
        double last_term = 0.0;
    };

    // 1 - F(x) ~ (1/pi) sum_k (-1)^{k+1}/k! Gamma(alpha k) sin(pi alpha k) Gamma(1-alpha)^k x^{-alpha k}
    SeriesValue series(double x) const
    {
        SeriesValue s;
        const double lx = std::log(x);
        const double lg = std::log(std::abs(g_));
        const double sg = g_ < 0.0 ? -1.0 : 1.0;
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 400; ++k) {
            const double ak = alpha_ * k;
            const double logmag = std::lgamma(ak) - std::lgamma(k + 1.0) + k * lg - ak * lx;
            const double mag = std::exp(logmag);
            if (alpha_ > 1.0 && mag > prev) break;  // asymptotic: stop at the smallest term
            const double sign = ((k % 2) ? 1.0 : -1.0) * ((k % 2) ? sg : 1.0) * std::sin(std::numbers::pi * ak);
            const double term = sign * mag / std::numbers::pi;
            s.tail += term;
            s.dens += term * ak / x;
            s.max_term = std::max(s.max_term, mag / std::numbers::pi);
            s.last_term = mag / std::numbers::pi;
            prev = mag;
            if (mag < 1e-18 * std::max(std::abs(s.tail), 1e-300) && k > 2) break;
        }
        return s;
    }

    bool series_reliable(double x) const
    {
        const auto s = series(x);
        return s.max_term <= 1e2 && s.last_term <= 1e-13 && s.tail > 0.0;
    }

    InversionResult invert(double x, bool dens) const
    {
        using boost::math::quadrature::gauss;
        const double pi = std::numbers::pi;
        const double q = std::min(alpha_, 1.0);
        const double u_max = std::pow(-std::log(cfg_.cf_cutoff) / scale_alpha_, 1.0 / alpha_);
        const double u_split = std::min(1.0, u_max);

        auto kernel = [&](double u) { return std::exp(std::complex<double>(0.0, -u * x)) * cf(u); };
        // [0, u_split] in v = u^q, which removes the u^{alpha-1} singularity
        auto near = [&](double v) {
            if (v <= 0.0) return 0.0;
            const double u = std::pow(v, 1.0 / q);
            const auto z = kernel(u);
            return dens ? z.real() * u / (q * v) : z.imag() / (q * v);
        };
        auto far = [&](double u) {
            const auto z = kernel(u);
            return dens ? z.real() : z.imag() / u;
        };

        // phase accumulated over [u_split, u_max] sets the panel count
        const double drift = alpha_ == 1.0 ? u_max * (1.0 + std::abs(std::log(u_max)))
                                           : std::abs(g_ * std::sin(pi * alpha_ / 2.0)) * std::pow(u_max, alpha_);
        const double phase = std::abs(x) * (u_max - u_split) + drift;
        std::size_t n = std::max(cfg_.min_panels, static_cast<std::size_t>(std::ceil(phase / 6.0)));
        const double v_split = std::pow(u_split, q);

        const std::size_t near_base =
            std::max(cfg_.min_panels, static_cast<std::size_t>(std::ceil(std::abs(x) * u_split / 6.0)));
        const std::size_t far_base = n;

        auto integrate = [&](std::size_t panels) {
            const std::size_t near_panels = near_base * (panels / far_base);
            const double hn = v_split / static_cast<double>(near_panels);
            double acc = 0.0;
            // first panel graded geometrically towards v = 0
            double hi = hn;
            for (int k = 0; k < 60; ++k) {
                acc += gauss<double, 20>::integrate(near, 0.5 * hi, hi);
                hi *= 0.5;
            }
            for (std::size_t i = 1; i < near_panels; ++i) acc += gauss<double, 20>::integrate(near, i * hn, (i + 1) * hn);
            const double hf = (u_max - u_split) / static_cast<double>(panels);
            for (std::size_t i = 0; i < panels && hf > 0.0; ++i)
                acc += gauss<double, 20>::integrate(far, u_split + i * hf, u_split + (i + 1) * hf);
            return acc;
        };
        double coarse = integrate(n);
        for (;;) {
            const double fine = integrate(2 * n);
            const double err = std::abs(fine - coarse) / pi;
            const double value = dens ? fine / pi : 0.5 - fine / pi;
            if (err <= cfg_.abs_tol || 2 * n >= cfg_.max_panels) {
                if (err > 100 * cfg_.abs_tol) throw NumericalError("StableLaw: inversion tolerance not met", err);
                return {value, err};
            }
            coarse = fine;
            n *= 2;
        }
    }

    struct Table {
        std::once_flag once;
        double x_lo = 0.0;
        double x_tail = 0.0;
        double s_lo = 0.0;
        double h = 0.0;
        std::vector<double> F, dF;  // F and dF/ds on a grid uniform in s = asinh(x)

        double interpolate(double x) const
        {
            const double s = std::asinh(x);
            const double pos = (s - s_lo) / h;
            auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(F.size() - 2)));
            const double tt = pos - static_cast<double>(i);
            const double t2 = tt * tt, t3 = t2 * tt;
            const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + tt, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
            const double v = h00 * F[i] + h10 * h * dF[i] + h01 * F[i + 1] + h11 * h * dF[i + 1];
            return std::clamp(v, 0.0, 1.0);
        }
    };

    const Table& table() const
    {
        Table& t = *table_;
        std::call_once(t.once, [&] { build(t); });
        return t;
    }

    void build(Table& t) const
    {
        // right end: where the series is trustworthy (alpha != 1)
        double xt = 1.0;
        if (alpha_ == 1.0) {
            xt = 1e3;
        } else {
            while (!series_reliable(xt)) {
                xt *= 1.25;
                if (xt > 1e8) throw NumericalError("StableLaw: tail series never becomes reliable", xt);
            }
        }
        // left end
        double xl = 0.0;
        if (alpha_ >= 1.0) {
            xl = -1.0;
            while (std::abs(cdf_inversion(xl).value) > 1e-13) xl *= 1.25;
        }
        t.x_lo = xl;
        t.x_tail = xt;
        t.s_lo = std::asinh(xl);
        const double s_hi = std::asinh(xt);
        const std::size_t nodes = 320;
        t.h = (s_hi - t.s_lo) / static_cast<double>(nodes - 1);
        t.F.resize(nodes);
        t.dF.resize(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            const double s = t.s_lo + t.h * static_cast<double>(i);
            const double x = std::sinh(s);
            if (alpha_ < 1.0 && i == 0) {
                t.F[i] = 0.0;
                t.dF[i] = 0.0;
                continue;
            }
            t.F[i] = cdf_inversion(x).value;
            t.dF[i] = density_inversion(x).value * std::cosh(s);
        }
    }

    double alpha_;
    InversionConfig cfg_;
    double g_ = 0.0;
    double scale_alpha_ = 0.0;
    double shift_a_ = std::numeric_limits<double>::quiet_NaN();
    std::shared_ptr<Table> table_;
};

/// Chambers-Mallows-Stuck draw with skewness 1 and scale sigma = scale_alpha^{1/alpha}.
inline double sample_stable(const StableLaw& law, RngStream& rng)
{
    const double a = law.alpha();
    const double v = rng.uniform_angle();
    const double w = rng.exponential();
    const double pi = std::numbers::pi;
    if (a != 1.0) {
        const double tan_term = std::tan(pi * a / 2.0);
        const double b = std::atan(tan_term) / a;
        const double s = std::pow(1.0 + tan_term * tan_term, 1.0 / (2.0 * a));
        const double x = s * std::sin(a * (v + b)) / std::pow(std::cos(v), 1.0 / a)
                         * std::pow(std::cos(v - a * (v + b)) / w, (1.0 - a) / a);
        return std::pow(law.scale_alpha(), 1.0 / a) * x;
    }
    const double half = pi / 2.0;
    const double x = (2.0 / pi) * ((half + v) * std::tan(v) - std::log(half * w * std::cos(v) / (half + v)));
    const double sigma = law.scale_alpha();
    return sigma * x + (2.0 / pi) * sigma * std::log(sigma) + 1.0 - std::numbers::egamma;
}

inline double ks_statistic(std::span<const double> samples, const StableLaw& law)
{
    return ks_distance(samples, [&](double x) { return law.cdf(x); });
}

struct StabilityVerdict {
    double fitted_exponent = 0.0;
    bool stable = false;
};

/// Power-law fit of a spectral tail L(x) ~ c x^{-exponent}; "stable" only when
/// sigma^2 vanishes and the exponent is within `band` of alpha.
inline StabilityVerdict stability_verdict(std::span<const double> xs, std::span<const double> tail, double alpha,
                                          double sigma2, double band = 0.1, double sigma2_tol = 1e-6)
{
    if (xs.size() != tail.size() || xs.size() < 2) throw ConfigError("stability_verdict: need >= 2 points");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0 && tail[i] > 0.0)) throw ConfigError("stability_verdict: points must be positive");
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(tail[i]));
    }
    StabilityVerdict v;
    v.fitted_exponent = -ols_slope(lx, ly);
    v.stable = std::abs(sigma2) <= sigma2_tol && std::abs(v.fitted_exponent - alpha) <= band;
    return v;
}

} // namespace pamlab
