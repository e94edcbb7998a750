#pragma once

// Time and alpha dependent scales: h_t, l(t), L_alpha(t), B_alpha(t),
// centering constants, annealed moments and the SLLN box threshold.
// Everything that can overflow is kept as a logarithm.

#include "pamlab/errors.hpp"
#include "pamlab/potential.hpp"
#include "pamlab/quadrature.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace pamlab {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Maximizer of s*h - phi(h); checked against h +- delta.
inline double h_of_t(const PotentialSpec& spec, double s)
{
    if (!(s > 0.0)) throw ConfigError("h_of_t: s must be > 0");
    const double h = spec.legendre_point(s);
    const double obj = s * h - spec.phi(h);
    const double delta = 1e-6 * std::max(1.0, h);
    const double slack = 1e-9 * std::max(1.0, std::abs(obj));
    if (s * (h + delta) - spec.phi(h + delta) > obj + slack)
        throw NumericalError("h_of_t: not a maximizer", h);
    if (h - delta >= 0.0 && s * (h - delta) - spec.phi(h - delta) > obj + slack)
        throw NumericalError("h_of_t: not a maximizer", h);
    return h;
}

struct ChiPolicy {
    bool endpoint = true;
    double value = 0.0;

    static ChiPolicy explicit_value(double chi) { return {false, chi}; }
    static ChiPolicy endpoint_rule() { return {true, 0.0}; }
};

/// chi in [0, 2 d kappa]: explicit, or chi(0) = 0 / chi(inf) = 2 d kappa.
inline double resolve_chi(const PotentialSpec& spec, double kappa, int d, const ChiPolicy& policy)
{
    const double top = 2.0 * d * kappa;
    if (!policy.endpoint) {
        if (!(policy.value >= 0.0 && policy.value <= top))
            throw ConfigError("chi must lie in [0, 2 d kappa]");
        return policy.value;
    }
    if (kappa == 0.0 || spec.rho() == 0.0) return 0.0;
    if (std::isinf(spec.rho())) return top;
    throw ConfigError("chi: intermediate rho needs an explicit chi value");
}

/// l(t) = max{t^2 log^2 t, H(4t)}.
inline double l_of_t(const PotentialSpec& spec, double t)
{
    const double lt = std::log(t);
    return std::max(t * t * lt * lt, cumulant(spec, 4.0 * t));
}

enum class MomentMethod { Gm98Asymptotic, LaplaceIntegral, ExactQuadrature };

inline const char* to_string(MomentMethod m)
{
    switch (m) {
    case MomentMethod::Gm98Asymptotic: return "gm98_asymptotic";
    case MomentMethod::LaplaceIntegral: return "laplace_integral";
    case MomentMethod::ExactQuadrature: return "exact_quadrature";
    }
    return "?";
}

namespace detail {

/// log(s ∫_0^upper exp{s h - phi(h + chi)} dh).
inline double shifted_laplace(const PotentialSpec& spec, double s, double chi, double upper)
{
    if (!(upper > 0.0)) return neg_inf;
    const double peak = std::min(std::max(spec.legendre_point(s) - chi, 0.0), std::isfinite(upper) ? upper : 1e300);
    const double curv = spec.phi_second(peak + chi);
    const double width = (curv > 0.0 && std::isfinite(curv)) ? 1.0 / std::sqrt(curv) : 1.0 / s;
    const auto li = log_integrate_exp([&](double h) { return s * h - spec.phi(h + chi); }, 0.0, upper, peak,
                                      std::min(width, std::isfinite(upper) ? upper : width));
    return std::log(s) + li.log_value;
}

} // namespace detail

/// log <u(t,0)^p>.
inline double annealed_moment(const PotentialSpec& spec, double p, double t, double chi, MomentMethod method,
                              double kappa = 0.0)
{
    if (!(p > 0.0)) throw ConfigError("annealed_moment: p must be > 0");
    if (!(t > 0.0)) throw ConfigError("annealed_moment: t must be > 0");
    switch (method) {
    case MomentMethod::Gm98Asymptotic: return cumulant(spec, p * t) - p * t * chi;
    case MomentMethod::LaplaceIntegral:
        return detail::shifted_laplace(spec, p * t, chi, std::numeric_limits<double>::infinity());
    case MomentMethod::ExactQuadrature:
        if (kappa != 0.0) throw ConfigError("annealed_moment: exact quadrature needs kappa = 0");
        return cumulant(spec, p * t);
    }
    throw ConfigError("annealed_moment: unknown method");
}

/// log <e^{t xi} 1{xi <= b}> for the potential law itself.
inline double truncated_exponential_moment(const PotentialSpec& spec, double t, double b)
{
    if (b < 0.0) return neg_inf;
    // 1 - S(b) e^{tb} + t ∫_0^b e^{tx} S(x) dx,  S = exp(-phi)
    const double integral = detail::shifted_laplace(spec, t, 0.0, b);
    const double plus = log_add(0.0, integral);
    return log_sub(plus, t * b - spec.phi(b));
}

struct ScalingBundle {
    PotentialSpec spec = PotentialSpec::weibull(2.0);
    double alpha = 1.0;
    double t = 1.0;
    double kappa = 0.0;
    int d = 1;
    double chi = 0.0;
    double h_alpha_t = 0.0;
    double log_L_alpha = 0.0;
    double log_B_alpha = 0.0;
    double l_t = 0.0;
    double h_tilde_alpha_t = 0.0;
    /// log A(t); -inf when A(t) = 0.
    double centering_A = neg_inf;
    /// log A~(t) = log|Q_l| + log A(t).
    double block_centering_A_tilde = neg_inf;
    double log_block_volume = 0.0;
};

inline ScalingBundle make_bundle(const PotentialSpec& spec, double alpha, double t, double kappa, int d,
                                 const ChiPolicy& chi_policy = ChiPolicy::endpoint_rule())
{
    if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("make_bundle: alpha must lie in (0,2)");
    if (!(t > 0.0)) throw ConfigError("make_bundle: t must be > 0");
    if (!(kappa >= 0.0)) throw ConfigError("make_bundle: kappa must be >= 0");
    if (d < 1) throw ConfigError("make_bundle: d must be >= 1");
    ScalingBundle b;
    b.spec = spec;
    b.alpha = alpha;
    b.t = t;
    b.kappa = kappa;
    b.d = d;
    b.chi = resolve_chi(spec, kappa, d, chi_policy);
    b.h_alpha_t = h_of_t(spec, alpha * t);
    b.log_L_alpha = spec.phi(b.h_alpha_t);
    b.log_B_alpha = t * (b.h_alpha_t - b.chi);
    b.h_tilde_alpha_t = b.h_alpha_t + b.chi;
    b.l_t = l_of_t(spec, t);
    b.log_block_volume = d * std::log(2.0 * std::floor(b.l_t) + 1.0);

    if (alpha < 1.0) {
        b.centering_A = neg_inf;
    } else if (alpha > 1.0) {
        b.centering_A = kappa == 0.0 ? annealed_moment(spec, 1.0, t, 0.0, MomentMethod::ExactQuadrature)
                                     : annealed_moment(spec, 1.0, t, b.chi, MomentMethod::Gm98Asymptotic, kappa);
    } else {
        const double cut = b.log_B_alpha / t;  // u <= B
        b.centering_A = kappa == 0.0 ? truncated_exponential_moment(spec, t, cut)
                                     : detail::shifted_laplace(spec, t, b.chi, cut);
    }
    b.block_centering_A_tilde =
        b.centering_A == neg_inf ? neg_inf : b.log_block_volume + b.centering_A;
    return b;
}

struct TableRow {
    double log_L = 0.0;
    double log_B_table = 0.0;
};

/// Closed-form table values for the built-in families; the B column carries
/// -chi * alpha * t (with chi = 2 d kappa for Weibull).
inline TableRow table_row(const PotentialSpec& spec, double alpha, double t, double kappa, int d,
                          std::optional<double> chi = std::nullopt)
{
    if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("table_row: alpha must lie in (0,2)");
    if (!(t > 0.0)) throw ConfigError("table_row: t must be > 0");
    switch (spec.family()) {
    case PotentialFamily::Weibull: {
        const double g = spec.parameter();
        const double base = alpha * t / g;
        return {std::pow(base, g / (g - 1.0)), t * std::pow(base, 1.0 / (g - 1.0)) - 2.0 * d * kappa * alpha * t};
    }
    case PotentialFamily::DoubleExponential: {
        const double rho = spec.parameter();
        double c = 0.0;
        if (kappa != 0.0) {
            if (!chi) throw ConfigError("table_row: double-exponential row needs chi(rho) when kappa > 0");
            c = *chi;
        }
        return {rho * alpha * t, t * rho * std::log(rho * alpha * t) - c * alpha * t};
    }
    case PotentialFamily::Custom: break;
    }
    throw ConfigError("table_row: only built-in families have closed-form rows");
}

struct SllnRadius {
    double log_volume = 0.0;
    /// Radius r with log|Q_r| = log_volume; +inf if it overflows.
    double radius = 0.0;
    double log_radius = 0.0;
};

/// log|Q_r| = H(2t) - 2H(t) + margin * t.
inline SllnRadius slln_radius(const PotentialSpec& spec, double t, int d, double margin)
{
    if (!(margin > 0.0)) throw ConfigError("slln_radius: margin must be > 0");
    if (!(t > 0.0)) throw ConfigError("slln_radius: t must be > 0");
    if (d < 1) throw ConfigError("slln_radius: d must be >= 1");
    SllnRadius r;
    r.log_volume = cumulant(spec, 2.0 * t) - 2.0 * cumulant(spec, t) + margin * t;
    const double x = r.log_volume / d;  // log side
    // log((e^x - 1) / 2)
    r.log_radius = (x > 30.0 ? x : std::log(std::expm1(x))) - std::log(2.0);
    r.radius = std::exp(r.log_radius);
    return r;
}

// JSON: all magnitudes in log space; -inf becomes null.

inline nlohmann::json log_json(double v)
{
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline nlohmann::json to_json(const ScalingBundle& b)
{
    return {
        {"potential", b.spec.to_config_string()},
        {"alpha", b.alpha},
        {"t", b.t},
        {"kappa", b.kappa},
        {"d", b.d},
        {"chi", b.chi},
        {"h_alpha_t", b.h_alpha_t},
        {"log_L_alpha", b.log_L_alpha},
        {"log_B_alpha", b.log_B_alpha},
        {"l_t", b.l_t},
        {"h_tilde_alpha_t", b.h_tilde_alpha_t},
        {"log_centering_A", log_json(b.centering_A)},
        {"log_block_centering_A_tilde", log_json(b.block_centering_A_tilde)},
        {"log_block_volume", b.log_block_volume},
    };
}

} // namespace pamlab
