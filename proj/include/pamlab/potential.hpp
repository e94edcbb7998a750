#pragma once

// The i.i.d. potential marginal, described through its tail exponent
//   phi(x) = -log P(xi(0) > x),  x >= 0.
//
// Built-in laws are supported on [0, inf): P(xi > x) = exp(-phi(x)) for x >= 0
// and P(xi < 0) = 0. For the double-exponential family phi(0) = 1, so the law
// carries an atom of mass 1 - 1/e at the origin.

#include "pamlab/errors.hpp"
#include "pamlab/quadrature.hpp"
#include "pamlab/rng.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace pamlab {

enum class PotentialFamily { Weibull, DoubleExponential, Custom };

class PotentialSpec {
public:
    using Fn = std::function<double(double)>;

    static PotentialSpec weibull(double gamma)
    {
        if (!(gamma > 1.0) || !std::isfinite(gamma)) throw ConfigError("weibull: gamma must be > 1");
        PotentialSpec s;
        s.family_ = PotentialFamily::Weibull;
        s.param_ = gamma;
        s.rho_ = std::numeric_limits<double>::infinity();
        return s;
    }

    static PotentialSpec double_exponential(double rho)
    {
        if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("double_exp: rho must be > 0");
        PotentialSpec s;
        s.family_ = PotentialFamily::DoubleExponential;
        s.param_ = rho;
        s.rho_ = rho;
        return s;
    }

    /// User supplied tail exponent. `rho` is the regularity parameter the
    /// caller asserts for the assumption checks (may be infinity).
    static PotentialSpec custom(Fn phi, Fn phi_prime, Fn phi_second, double rho)
    {
        if (!phi || !phi_prime || !phi_second) throw ConfigError("custom: phi, phi', phi'' required");
        if (!(rho >= 0.0)) throw ConfigError("custom: rho must be in [0, inf]");
        PotentialSpec s;
        s.family_ = PotentialFamily::Custom;
        s.rho_ = rho;
        s.phi_ = std::move(phi);
        s.dphi_ = std::move(phi_prime);
        s.d2phi_ = std::move(phi_second);
        return s;
    }

    PotentialFamily family() const noexcept { return family_; }
    bool builtin() const noexcept { return family_ != PotentialFamily::Custom; }
    /// gamma for Weibull, rho for double-exponential, NaN for custom.
    double parameter() const noexcept { return param_; }
    /// rho of the regularity assumptions; +inf for Weibull.
    double rho() const noexcept { return rho_; }

    double phi(double x) const
    {
        if (!(x >= 0.0)) throw ConfigError("phi: x must be >= 0");
        switch (family_) {
        case PotentialFamily::Weibull: return std::pow(x, param_);
        case PotentialFamily::DoubleExponential: return std::exp(x / param_);
        case PotentialFamily::Custom: return phi_(x);
        }
        return 0.0;
    }

    double phi_prime(double x) const
    {
        switch (family_) {
        case PotentialFamily::Weibull: return x == 0.0 ? 0.0 : param_ * std::pow(x, param_ - 1.0);
        case PotentialFamily::DoubleExponential: return std::exp(x / param_) / param_;
        case PotentialFamily::Custom: return dphi_(x);
        }
        return 0.0;
    }

    double phi_second(double x) const
    {
        switch (family_) {
        case PotentialFamily::Weibull:
            if (x == 0.0) return param_ < 2.0 ? std::numeric_limits<double>::infinity() : (param_ == 2.0 ? 2.0 : 0.0);
            return param_ * (param_ - 1.0) * std::pow(x, param_ - 2.0);
        case PotentialFamily::DoubleExponential: return std::exp(x / param_) / (param_ * param_);
        case PotentialFamily::Custom: return d2phi_(x);
        }
        return 0.0;
    }

    /// Left-continuous inverse psi(s) = min{r >= 0 : phi(r) >= s}.
    double psi(double s) const
    {
        if (!(s >= 0.0)) throw ConfigError("psi: s must be >= 0");
        switch (family_) {
        case PotentialFamily::Weibull: return std::pow(s, 1.0 / param_);
        case PotentialFamily::DoubleExponential: return s <= 1.0 ? 0.0 : param_ * std::log(s);
        case PotentialFamily::Custom: break;
        }
        if (phi_(0.0) >= s) return 0.0;
        double hi = 1.0;
        while (phi_(hi) < s) {
            hi *= 2.0;
            if (hi > 1e300) throw NumericalError("psi: phi does not reach level", s);
        }
        double lo = 0.0;
        for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (phi_(mid) >= s ? hi : lo) = mid;
        }
        return hi;
    }

    /// P(xi(0) > x).
    double tail(double x) const { return x < 0.0 ? 1.0 : std::exp(-phi(x)); }

    /// Inverse-transform sample psi(E), E standard exponential.
    double sample(RngStream& rng) const { return psi(rng.exponential()); }

    /// Maximizer of s*h - phi(h) over h >= 0 (safeguarded Newton on phi'(h) = s).
    double legendre_point(double s) const
    {
        if (!(s >= 0.0)) throw ConfigError("legendre_point: s must be >= 0");
        if (phi_prime(0.0) >= s) return 0.0;
        switch (family_) {
        case PotentialFamily::Weibull: return std::pow(s / param_, 1.0 / (param_ - 1.0));
        case PotentialFamily::DoubleExponential: return param_ * std::log(param_ * s);
        case PotentialFamily::Custom: break;
        }
        double lo = 0.0;
        double hi = 1.0;
        while (phi_prime(hi) < s) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300) throw NumericalError("legendre_point: phi' bounded", s);
        }
        double h = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double f = phi_prime(h) - s;
            if (f == 0.0) return h;
            (f > 0.0 ? hi : lo) = h;
            const double d = phi_second(h);
            double next = (d > 0.0 && std::isfinite(d)) ? h - f / d : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - h) <= 1e-15 * std::max(1.0, h)) return next;
            h = next;
        }
        if (hi - lo <= 1e-10 * std::max(1.0, h)) return h;
        throw NumericalError("legendre_point: Newton did not converge", hi - lo);
    }

    /// "family=weibull gamma=2" style descriptor.
    std::string to_config_string() const
    {
        std::ostringstream os;
        os.precision(17);
        switch (family_) {
        case PotentialFamily::Weibull: os << "family=weibull gamma=" << param_; break;
        case PotentialFamily::DoubleExponential: os << "family=double_exp rho=" << param_; break;
        case PotentialFamily::Custom: os << "family=custom"; break;
        }
        return os.str();
    }

private:
    PotentialSpec() = default;

    PotentialFamily family_ = PotentialFamily::Weibull;
    double param_ = std::numeric_limits<double>::quiet_NaN();
    double rho_ = 0.0;
    Fn phi_, dphi_, d2phi_;
};

/// Parse "family=weibull gamma=2" / "family=double_exp rho=1".
inline PotentialSpec parse_potential(const std::string& text)
{
    std::istringstream is(text);
    std::map<std::string, std::string> kv;
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("potential: expected key=value, got '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto number = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError(std::string("potential: missing ") + key);
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError(std::string("potential: bad number for ") + key);
        }
    };
    const auto fam = kv.find("family");
    if (fam == kv.end()) throw ConfigError("potential: missing family");
    if (fam->second == "weibull") return PotentialSpec::weibull(number("gamma"));
    if (fam->second == "double_exp") return PotentialSpec::double_exponential(number("rho"));
    throw ConfigError("potential: unknown family '" + fam->second + "'");
}

/// Cumulant generating function H(t) = log <exp(t xi(0))>.
///
/// For a law on [0, inf), integration by parts against the tail gives
///   <e^{t xi}> = 1 + t ∫_0^∞ e^{t x - phi(x)} dx,
/// which is integrated in log space around the Laplace point h_t.
inline double cumulant(const PotentialSpec& spec, double t, const QuadratureConfig& cfg = {})
{
    if (!(t >= 0.0)) throw ConfigError("cumulant: t must be >= 0");
    if (t == 0.0) return 0.0;
    const double h = spec.legendre_point(t);
    double curv = spec.phi_second(h);
    double width;
    if (h == 0.0) {
        const double slope = spec.phi_prime(0.0) - t;
        width = 1.0 / (std::max(slope, 0.0) + (std::isfinite(curv) ? std::sqrt(std::max(curv, 0.0)) : 0.0) + 1e-12);
        width = std::min(width, 1.0 / t + 1.0);
    } else {
        width = (curv > 0.0 && std::isfinite(curv)) ? 1.0 / std::sqrt(curv) : 1.0 / t;
    }
    const auto li = log_integrate_exp([&](double x) { return t * x - spec.phi(x); }, 0.0,
                                      std::numeric_limits<double>::infinity(), h, width, cfg);
    return log_add(0.0, std::log(t) + li.log_value);
}

/// Laplace form t*h_t - phi(h_t); differs from H(t) by o(t).
inline double laplace_cumulant(const PotentialSpec& spec, double t)
{
    const double h = spec.legendre_point(t);
    return t * h - spec.phi(h);
}

struct AssumptionReport {
    double c = 0.5;
    double rho = 0.0;
    std::vector<double> t_grid;
    std::vector<double> values;
    /// Limit predicted by the assumption; -inf when rho = inf.
    double target = 0.0;
    bool target_diverges = false;
    /// Richardson extrapolation (error ~ 1/t) of the last two grid values.
    double extrapolated = 0.0;
    /// d log|value| / d log t over the last two points.
    double divergence_rate = 0.0;
    /// True when the sequence settles (last increments shrink) on a finite value.
    bool converged = false;
};

namespace detail {

inline AssumptionReport finish_report(AssumptionReport r)
{
    const std::size_t n = r.values.size();
    if (n >= 2) {
        const double t1 = r.t_grid[n - 2], t2 = r.t_grid[n - 1];
        const double v1 = r.values[n - 2], v2 = r.values[n - 1];
        r.extrapolated = (t2 * v2 - t1 * v1) / (t2 - t1);
        if (v1 != 0.0 && v2 != 0.0) r.divergence_rate = std::log(std::abs(v2 / v1)) / std::log(t2 / t1);
        const double step_last = std::abs(v2 - v1);
        const double step_prev = n >= 3 ? std::abs(v1 - r.values[n - 3]) : std::numeric_limits<double>::infinity();
        r.converged = std::isfinite(v2) && (step_last <= step_prev || step_last <= 1e-12 * std::max(1.0, std::abs(v2)))
                      && !(r.divergence_rate > 0.25 && std::abs(v2) > 1.0);
    } else if (n == 1) {
        r.extrapolated = r.values[0];
    }
    return r;
}

inline void check_grid(double c, const std::vector<double>& t_grid)
{
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("assumption check: c must be in (0,1)");
    if (t_grid.empty()) throw ConfigError("assumption check: empty t grid");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) throw ConfigError("assumption check: t grid must be increasing");
}

inline double rho_target(double rho, double factor)
{
    if (std::isinf(rho)) return factor < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
    return rho * factor;
}

} // namespace detail

/// psi(ct) - psi(t) along the grid. Target rho * log c.
inline AssumptionReport check_assumption_F(const PotentialSpec& spec, double c, const std::vector<double>& t_grid)
{
    detail::check_grid(c, t_grid);
    AssumptionReport r;
    r.c = c;
    r.rho = spec.rho();
    r.t_grid = t_grid;
    for (double t : t_grid) r.values.push_back(spec.psi(c * t) - spec.psi(t));
    r.target = detail::rho_target(r.rho, std::log(c));
    r.target_diverges = std::isinf(r.target);
    return detail::finish_report(std::move(r));
}

/// (1/t)[H(ct) - c H(t)] along the grid. Target rho * c * log c.
inline AssumptionReport check_assumption_H(const PotentialSpec& spec, double c, const std::vector<double>& t_grid,
                                           const QuadratureConfig& cfg = {})
{
    detail::check_grid(c, t_grid);
    AssumptionReport r;
    r.c = c;
    r.rho = spec.rho();
    r.t_grid = t_grid;
    for (double t : t_grid) r.values.push_back((cumulant(spec, c * t, cfg) - c * cumulant(spec, t, cfg)) / t);
    r.target = detail::rho_target(r.rho, c * std::log(c));
    r.target_diverges = std::isinf(r.target);
    return detail::finish_report(std::move(r));
}

/// rho-dependent target of either assumption at a given c (c = 1 gives 0).
inline double assumption_target(double rho, double c, bool h_form)
{
    if (c == 1.0) return 0.0;
    return detail::rho_target(rho, h_form ? c * std::log(c) : std::log(c));
}

} // namespace pamlab
