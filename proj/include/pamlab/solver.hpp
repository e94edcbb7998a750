#pragma once

// Solutions u(t,·) = exp(tH) u0 of the parabolic Anderson model on a box with
// Dirichlet boundary, by three routes: Krylov propagation, dense spectral
// representation, and Feynman-Kac Monte Carlo. Plus the coarse-grained block
// masses e^{t mu_t^(i)}.

#include "pamlab/errors.hpp"
#include "pamlab/krylov.hpp"
#include "pamlab/lattice.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/quadrature.hpp"
#include "pamlab/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace pamlab {

enum class SolverMethod { OdeKrylov, Spectral, FeynmanKacMC };

inline const char* to_string(SolverMethod m)
{
    switch (m) {
    case SolverMethod::OdeKrylov: return "ode";
    case SolverMethod::Spectral: return "spectral";
    case SolverMethod::FeynmanKacMC: return "feynman_kac";
    }
    return "?";
}

struct SolutionField {
    LatticeBox box;
    double t = 0.0;
    std::vector<double> values;
    /// Per-site standard errors (Monte Carlo); zeros for deterministic methods.
    std::vector<double> stderrs;
    SolverMethod method = SolverMethod::OdeKrylov;
    /// Residual / truncation bound for deterministic methods, max site
    /// standard error for Monte Carlo.
    double error_estimate = 0.0;
    std::string u0 = "constant 1";

    double mass() const
    {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

inline void write_solution_csv(std::ostream& os, const SolutionField& sol)
{
    const int d = sol.box.dim();
    for (int k = 0; k < d; ++k) os << 'x' << (k + 1) << ',';
    os << "u,stderr\n";
    for (std::size_t i = 0; i < sol.box.size(); ++i) {
        for (auto c : sol.box.site(i)) os << c << ',';
        os << format_double(sol.values[i]) << ',' << format_double(sol.stderrs.empty() ? 0.0 : sol.stderrs[i]) << '\n';
    }
}

inline std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

namespace detail {
// values past double range: log_block_mass stays usable there
inline SolutionField& require_finite(SolutionField& sol, const char* who)
{
    for (double v : sol.values)
        if (!std::isfinite(v)) throw NumericalError(std::string(who) + ": solution overflows double range", v);
    return sol;
}
} // namespace detail

/// u(t) = exp(tH) u0 by Krylov propagation (exact decoupled ODEs when kappa = 0).
inline SolutionField solve_ode(const HamiltonianOperator& H, double t, std::span<const double> u0,
                               double tol = 1e-12)
{
    if (!(t >= 0.0)) throw ConfigError("solve_ode: t must be >= 0");
    if (u0.size() != H.size()) throw ConfigError("solve_ode: u0 size does not match box");
    SolutionField sol{H.box(), t, {}, std::vector<double>(H.size(), 0.0), SolverMethod::OdeKrylov, 0.0};
    if (t == 0.0) {
        sol.values.assign(u0.begin(), u0.end());
        return sol;
    }
    if (H.kappa() == 0.0) {
        sol.values.resize(H.size());
        for (std::size_t i = 0; i < H.size(); ++i) sol.values[i] = std::exp(t * H.field().values[i]) * u0[i];
        return detail::require_finite(sol, "solve_ode");
    }
    KrylovConfig cfg;
    cfg.tol = tol;
    const auto kr = krylov_expm_action(H, t, u0, cfg);
    const double scale = std::exp(kr.log_scale);
    sol.values.resize(H.size());
    for (std::size_t i = 0; i < H.size(); ++i) sol.values[i] = std::max(0.0, kr.w[i] * scale);
    sol.error_estimate = kr.error_estimate;
    return detail::require_finite(sol, "solve_ode");
}

/// log Σ_x u(t,x) for u0 ≡ 1, stable for very large t * max xi.
inline double log_block_mass(const HamiltonianOperator& H, double t, double tol = 1e-12)
{
    if (H.kappa() == 0.0 || t == 0.0) {
        double acc = -std::numeric_limits<double>::infinity();
        for (double x : H.field().values) acc = log_add(acc, t * x);
        return acc;
    }
    KrylovConfig cfg;
    cfg.tol = tol;
    const auto u0 = ones(H.size());
    const auto kr = krylov_expm_action(H, t, u0, cfg);
    double s = 0.0;
    for (double x : kr.w) s += x;
    if (!(s > 0.0)) throw NumericalError("log_block_mass: non-positive mass", s);
    return kr.log_scale + std::log(s);
}

/// u(t,x) = Σ_k e^{λ_k t} e_k(x) <e_k, u0>.
inline SolutionField solve_spectral(const HamiltonianOperator& H, double t, std::span<const double> u0,
                                    const Spectrum* precomputed = nullptr)
{
    if (u0.size() != H.size()) throw ConfigError("solve_spectral: u0 size does not match box");
    SolutionField sol{H.box(), t, {}, std::vector<double>(H.size(), 0.0), SolverMethod::Spectral, 0.0};
    if (t == 0.0) {
        sol.values.assign(u0.begin(), u0.end());
        return sol;
    }
    Spectrum local;
    if (!precomputed) local = full_spectrum(H);
    const Spectrum& sp = precomputed ? *precomputed : local;
    const auto n = static_cast<Eigen::Index>(H.size());
    const Eigen::Map<const Eigen::VectorXd> u(u0.data(), n);
    const double top = sp.lambdas.front();
    Eigen::VectorXd coeff = sp.vectors.transpose() * u;
    for (Eigen::Index k = 0; k < n; ++k) coeff[k] *= std::exp((sp.lambdas[static_cast<std::size_t>(k)] - top) * t);
    const Eigen::VectorXd out = sp.vectors * coeff;
    const double scale = std::exp(top * t);
    sol.values.resize(H.size());
    for (Eigen::Index i = 0; i < n; ++i) sol.values[static_cast<std::size_t>(i)] = std::max(0.0, out[i] * scale);
    return detail::require_finite(sol, "solve_spectral");
}

/// Σ_{x,y} Σ_k e^{λ_k t} e_k(x) e_k(y): the block mass for u0 ≡ 1 written as
/// the double sum over sites of the spectral kernel.
inline double spectral_block_mass(const Spectrum& sp, double t)
{
    const auto n = sp.vectors.rows();
    Eigen::VectorXd weights(n);
    for (Eigen::Index k = 0; k < n; ++k) weights[k] = std::exp(sp.lambdas[static_cast<std::size_t>(k)] * t);
    const Eigen::MatrixXd kernel = sp.vectors * weights.asDiagonal() * sp.vectors.transpose();
    return kernel.sum();
}

struct MonteCarloEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

namespace detail {

/// Event-driven continuous-time simple random walk with jump rate 2dκ inside
/// `walk_box`, killed on leaving it. Returns ∫_0^t xi(X_s) ds, or -inf if
/// killed. `left_inner` reports whether the path left `inner` (if given).
struct WalkOutcome {
    double integral = 0.0;
    bool alive = true;
    bool left_inner = false;
    std::size_t end = 0;
};

inline WalkOutcome run_walk(const PotentialField& field, double kappa, double t, std::size_t start,
                            RngStream& rng, const LatticeBox* inner)
{
    const LatticeBox& box = field.box;
    const int d = box.dim();
    const double rate = 2.0 * d * kappa;
    WalkOutcome out;
    std::size_t pos = start;
    if (rate == 0.0) {
        out.integral = field.values[pos] * t;
        out.end = pos;
        return out;
    }
    Point x = box.site(start);
    double clock = 0.0;
    for (;;) {
        const double hold = rng.exponential() / rate;
        if (clock + hold >= t) {
            out.integral += field.values[pos] * (t - clock);
            break;
        }
        out.integral += field.values[pos] * hold;
        clock += hold;
        const auto dir = rng.below(static_cast<std::uint64_t>(2 * d));
        const int k = static_cast<int>(dir / 2);
        const bool up = (dir % 2) == 1;
        const std::size_t c = box.local_coord(pos, k);
        x[static_cast<std::size_t>(k)] += up ? 1 : -1;
        if (inner && !out.left_inner && !inner->contains(x)) out.left_inner = true;
        if (up) {
            if (c + 1 >= box.side()) { out.alive = false; break; }
            pos += box.stride(k);
        } else {
            if (c == 0) { out.alive = false; break; }
            pos -= box.stride(k);
        }
    }
    out.end = pos;
    return out;
}

struct Welford {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x)
    {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    double stderr_of_mean() const
    {
        return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    }
};

} // namespace detail

/// Feynman-Kac estimate u(t,x) = E_x exp{∫_0^t xi(X_s) ds} u0(X_t) 1{τ > t}
/// at every site. Site streams are derived from one draw of `rng`, so the
/// result does not depend on the worker count.
inline SolutionField feynman_kac_mc(const PotentialField& field, double kappa, double t, std::size_t n_paths,
                                    RngStream& rng, std::span<const double> u0 = {}, unsigned workers = 1)
{
    if (n_paths < 1) throw ConfigError("feynman_kac_mc: n_paths must be >= 1");
    if (!(kappa >= 0.0)) throw ConfigError("feynman_kac_mc: kappa must be >= 0");
    if (!u0.empty() && u0.size() != field.box.size()) throw ConfigError("feynman_kac_mc: u0 size does not match box");
    const std::size_t n = field.box.size();
    const std::uint64_t base = rng.bits();
    const double shift = t * field.max_value();

    SolutionField sol{field.box, t, std::vector<double>(n), std::vector<double>(n), SolverMethod::FeynmanKacMC, 0.0};
    parallel_for(n, workers, [&](std::size_t site) {
        RngStream local(base, {static_cast<std::uint64_t>(site)});
        detail::Welford acc;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const auto w = detail::run_walk(field, kappa, t, site, local, nullptr);
            const double init = u0.empty() ? 1.0 : u0[w.end];
            acc.add(w.alive ? std::exp(w.integral - shift) * init : 0.0);
        }
        const double scale = std::exp(shift);
        sol.values[site] = acc.mean * scale;
        sol.stderrs[site] = acc.stderr_of_mean() * scale;
    });
    sol.error_estimate = *std::max_element(sol.stderrs.begin(), sol.stderrs.end());
    return detail::require_finite(sol, "feynman_kac_mc");
}

/// Monte Carlo estimate of E_x exp{∫_0^t xi(X_s) ds} 1{X leaves `inner` before t},
/// the walk living in (and killed on leaving) the field's box. This is
/// u(t,x) - u_inner(t,x) for the Dirichlet solutions on the two boxes.
inline MonteCarloEstimate escape_mass(const LatticeBox& inner, const PotentialField& field, double kappa, double t,
                                      const Point& x, std::size_t n_paths, RngStream& rng)
{
    if (!inner.contains(x)) throw ConfigError("escape_mass: start site outside inner box");
    if (!field.box.contains(x)) throw ConfigError("escape_mass: start site outside field box");
    if (n_paths < 1) throw ConfigError("escape_mass: n_paths must be >= 1");
    if (kappa == 0.0 || t == 0.0) return {};
    const std::size_t start = field.box.index(x);
    const double shift = t * field.max_value();
    detail::Welford acc;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto w = detail::run_walk(field, kappa, t, start, rng, &inner);
        acc.add(w.alive && w.left_inner ? std::exp(w.integral - shift) : 0.0);
    }
    const double scale = std::exp(shift);
    return {acc.mean * scale, acc.stderr_of_mean() * scale};
}

struct BlockStatistic {
    std::size_t block_index = 0;
    double mu_t = 0.0;
    double lambda1 = 0.0;
    double eps_tilde = 0.0;
    /// Block maximum of the potential, xi^(1) over the block.
    double xi_max = 0.0;
};

inline void write_block_csv(std::ostream& os, const std::vector<BlockStatistic>& blocks)
{
    os << "block,mu_t,lambda1,eps_tilde\n";
    for (const auto& b : blocks) {
        os << b.block_index << ',' << format_double(b.mu_t) << ',' << format_double(b.lambda1) << ','
           << format_double(b.eps_tilde) << '\n';
    }
}

/// Sub-boxes Q_l^(i) tiling `big` from its lower corner; the incomplete rim
/// is discarded.
inline std::vector<LatticeBox> tile_blocks(const LatticeBox& big, double l)
{
    if (!(l >= 0.0)) throw ConfigError("tile_blocks: l must be >= 0");
    const auto rl = static_cast<std::int64_t>(std::floor(l));
    const auto side = static_cast<std::size_t>(2 * rl + 1);
    const std::size_t per_dim = big.side() / side;
    if (per_dim < 1) throw ConfigError("tile_blocks: block larger than box (degenerate tiling)");
    const int d = big.dim();
    std::size_t count = 1;
    for (int k = 0; k < d; ++k) count *= per_dim;
    std::vector<LatticeBox> blocks;
    blocks.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        Point c(static_cast<std::size_t>(d));
        std::size_t rem = b;
        for (int k = d - 1; k >= 0; --k) {
            const auto bk = static_cast<std::int64_t>(rem % per_dim);
            rem /= per_dim;
            c[static_cast<std::size_t>(k)] = big.lower()[static_cast<std::size_t>(k)] + bk * static_cast<std::int64_t>(side) + rl;
        }
        blocks.emplace_back(d, static_cast<double>(rl), std::move(c));
    }
    return blocks;
}

/// Solve every block with Dirichlet boundary; mu_t = (1/t) log(block mass).
inline std::vector<BlockStatistic> block_decompose_and_solve(const LatticeBox& big, const PotentialField& field,
                                                             double kappa, double t, double l, unsigned workers = 1)
{
    if (!(field.box == big)) throw ConfigError("block_decompose_and_solve: field not defined on big box");
    if (!(t > 0.0)) throw ConfigError("block_decompose_and_solve: t must be > 0");
    if (l > big.r()) throw ConfigError("block_decompose_and_solve: l exceeds big-box radius");
    const auto blocks = tile_blocks(big, l);
    std::vector<BlockStatistic> out(blocks.size());
    parallel_for(blocks.size(), workers, [&](std::size_t i) {
        const auto sub = field.restrict_to(blocks[i]);
        const HamiltonianOperator H(sub, kappa);
        BlockStatistic s;
        s.block_index = i;
        s.xi_max = sub.max_value();
        s.mu_t = log_block_mass(H, t) / t;
        s.lambda1 = kappa == 0.0 ? s.xi_max : principal_eigenpair(H, 1e-10 * std::max(1.0, H.norm1())).lambda;
        s.eps_tilde = s.mu_t - s.lambda1;
        out[i] = s;
    });
    return out;
}

} // namespace pamlab
