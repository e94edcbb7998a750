#pragma once

// Experiment harnesses: rescaled block sums against F_alpha, the
// deterministic tail-ratio / truncated-moment checks, the spatial-average
// variance experiment and the exponent diagnostics.
//
// kappa = 0 runs are exact i.i.d. computations; kappa > 0 runs go through the
// Dirichlet block solver and are bounded by the solver budget.

#include "pamlab/errors.hpp"
#include "pamlab/lattice.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/potential.hpp"
#include "pamlab/rng.hpp"
#include "pamlab/scalings.hpp"
#include "pamlab/solver.hpp"
#include "pamlab/stable_law.hpp"
#include "pamlab/stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace pamlab {

inline constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

struct Budget {
    /// Sites drawn per replica in i.i.d. (kappa = 0) mode.
    double max_sites = 5e7;
    /// Sites drawn over all replicas of one t.
    double max_total_sites = 5e9;
    /// Box size for runs that need the Dirichlet solver (kappa > 0).
    double max_solver_sites = 2e4;
};

struct ExperimentConfig {
    PotentialSpec spec = PotentialSpec::weibull(2.0);
    double alpha = 0.8;
    double kappa = 0.0;
    int d = 1;
    double chi = 0.0;
    std::vector<double> t_grid;
    int replicas = 1000;
    std::uint64_t master_seed = 1;
    Budget budget;
    unsigned workers = 1;
};

inline void validate(const ExperimentConfig& c)
{
    if (!(c.alpha > 0.0 && c.alpha < 2.0)) throw ConfigError("experiment: alpha must lie in (0,2)");
    if (!(c.kappa >= 0.0)) throw ConfigError("experiment: kappa must be >= 0");
    if (c.d < 1) throw ConfigError("experiment: d must be >= 1");
    if (c.replicas < 1) throw ConfigError("experiment: replicas must be >= 1");
    if (c.t_grid.empty()) throw ConfigError("experiment: empty t grid");
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
        if (!(c.t_grid[i] > 0.0)) throw ConfigError("experiment: t values must be > 0");
        if (i > 0 && !(c.t_grid[i] > c.t_grid[i - 1])) throw ConfigError("experiment: t grid must be increasing");
    }
    if (!(c.budget.max_sites > 0 && c.budget.max_total_sites > 0 && c.budget.max_solver_sites > 0))
        throw ConfigError("experiment: budget caps must be positive");
    resolve_chi(c.spec, c.kappa, c.d, ChiPolicy::explicit_value(c.chi));
}

/// Echo used for hashing and persistence; worker count deliberately absent.
inline nlohmann::json to_json(const ExperimentConfig& c)
{
    return {
        {"potential", c.spec.to_config_string()},
        {"alpha", c.alpha},
        {"kappa", c.kappa},
        {"d", c.d},
        {"chi", c.chi},
        {"t_grid", c.t_grid},
        {"replicas", c.replicas},
        {"master_seed", c.master_seed},
        {"budget",
         {{"max_sites", c.budget.max_sites},
          {"max_total_sites", c.budget.max_total_sites},
          {"max_solver_sites", c.budget.max_solver_sites}}},
    };
}

/// FNV-1a over the canonical config echo.
inline std::uint64_t config_hash(const ExperimentConfig& c)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct TRecord {
    double t = 0.0;
    double log_volume = 0.0;  // log of the site count actually used
    std::size_t blocks = 0;   // per replica
    double log_B = 0.0;
    double log_centering = neg_inf;  // per-site A(t), or block centering / |Q_l|
    double ks = nan_value;
    double hill = nan_value;
    double ratio_x05 = nan_value;
    double ratio_x1 = nan_value;
    double ratio_x2 = nan_value;
    double variance = nan_value;
    double bound = nan_value;
    double mean = nan_value;
    std::vector<double> samples;
};

struct ExperimentRecord {
    std::string experiment;
    std::uint64_t hash = 0;
    nlohmann::json config;
    std::vector<TRecord> rows;
    nlohmann::json extra = nlohmann::json::object();
    double wall_clock = 0.0;
};

inline const char* stats_csv_header() { return "t,ks,hill,ratio_x05,ratio_x1,ratio_x2,variance,bound"; }

inline void write_stats_csv(std::ostream& os, const ExperimentRecord& rec)
{
    os << stats_csv_header() << '\n';
    for (const auto& r : rec.rows) {
        os << format_double(r.t) << ',' << format_double(r.ks) << ',' << format_double(r.hill) << ','
           << format_double(r.ratio_x05) << ',' << format_double(r.ratio_x1) << ',' << format_double(r.ratio_x2)
           << ',' << format_double(r.variance) << ',' << format_double(r.bound) << '\n';
    }
}

inline nlohmann::json num_json(double v)
{
    if (std::isfinite(v)) return v;
    return nullptr;
}

/// Record without wall-clock, so identical configs serialize identically.
inline nlohmann::json statistics_json(const ExperimentRecord& rec, bool with_samples = true)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rec.rows) {
        nlohmann::json j{
            {"t", r.t},
            {"log_volume", r.log_volume},
            {"blocks", r.blocks},
            {"log_B", num_json(r.log_B)},
            {"log_centering", num_json(r.log_centering)},
            {"ks", num_json(r.ks)},
            {"hill", num_json(r.hill)},
            {"ratio_x05", num_json(r.ratio_x05)},
            {"ratio_x1", num_json(r.ratio_x1)},
            {"ratio_x2", num_json(r.ratio_x2)},
            {"variance", num_json(r.variance)},
            {"bound", num_json(r.bound)},
            {"mean", num_json(r.mean)},
        };
        if (with_samples) j["samples"] = r.samples;
        rows.push_back(std::move(j));
    }
    return {
        {"experiment", rec.experiment},
        {"config_hash", hex64(rec.hash)},
        {"config", rec.config},
        {"seeds", {{"master_seed", rec.config.value("master_seed", std::uint64_t{0})}, {"stream_path", rec.experiment == "stable_limit" && rec.config.value("kappa", 0.0) == 0.0 ? "replica" : "t_index,replica"}}},
        {"rows", rows},
        {"extra", rec.extra},
    };
}

inline nlohmann::json to_json(const ExperimentRecord& rec)
{
    auto j = statistics_json(rec);
    j["wall_clock_s"] = rec.wall_clock;
    return j;
}

// ---------------------------------------------------------------------------
// Deterministic checks on the max-of-|Q_l| surrogate for the block variable.
//
// With Y = e^{t mu}/B and log B/t = h - chi, P(Y > e^s) = P(max_{Q_l} xi > h + s/t);
// the chi shifts cancel.

namespace detail {

/// log P(max of n i.i.d. xi > z).
inline double log_max_tail(const PotentialSpec& spec, double log_n, double z)
{
    if (z <= 0.0) return 0.0;
    const double lphi = -spec.phi(z);
    if (lphi < -700.0) return log_n + lphi;
    const double s = std::exp(lphi);
    if (s >= 1.0) return 0.0;
    const double x = std::exp(log_n) * std::log1p(-s);
    const double g = -std::expm1(x);
    if (!(g > 0.0)) return log_n + lphi;
    return std::log(g);
}

struct Surrogate {
    PotentialSpec spec;
    double t = 1.0;
    double h = 0.0;       // h_{alpha t}
    double log_L = 0.0;   // log |Q_L|
    double log_n = 0.0;   // log |Q_l|

    /// log( |Q_L|/|Q_l| * P(Y > e^s) ).
    double log_scaled_tail(double s) const { return log_L - log_n + log_max_tail(spec, log_n, h + s / t); }
};

inline Surrogate make_surrogate(const PotentialSpec& spec, double alpha, double chi, double t, int d = 1)
{
    const auto b = make_bundle(spec, alpha, t, 0.0, d);
    (void)chi;
    return {spec, t, b.h_alpha_t, b.log_L_alpha, b.log_block_volume};
}

/// ∫ f over [a, b] on panels of width <= w.
template <class F>
double panel_sum(F&& f, double a, double b, double w = 0.5)
{
    using boost::math::quadrature::gauss_kronrod;
    if (!(b > a)) return 0.0;
    const auto n = static_cast<std::size_t>(std::ceil((b - a) / w));
    const double h = (b - a) / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += gauss_kronrod<double, 31>::integrate(f, a + i * h, a + (i + 1) * h, 0);
    return acc;
}

/// ∫ f from `start` towards `dir` * infinity, stopping once panels are negligible.
template <class F>
double march(F&& f, double start, double dir, double w = 0.5)
{
    using boost::math::quadrature::gauss_kronrod;
    double acc = 0.0;
    int quiet = 0;
    for (int i = 0; i < 20000; ++i) {
        const double a = start + dir * i * w, b = a + dir * w;
        const double piece = dir > 0 ? gauss_kronrod<double, 31>::integrate(f, a, b, 0)
                                     : gauss_kronrod<double, 31>::integrate(f, b, a, 0);
        if (!std::isfinite(piece)) throw NumericalError("surrogate quadrature: non-finite panel", piece);
        acc += piece;
        quiet = std::abs(piece) <= 1e-15 * std::max(1.0, std::abs(acc)) ? quiet + 1 : 0;
        if (quiet >= 8) return acc;
    }
    throw NumericalError("surrogate quadrature: integrand did not decay", acc);
}

inline double safe_exp(double v) { return v < -745.0 ? 0.0 : std::exp(v); }

} // namespace detail

/// |Q_L| e^{-phi(log B/t + log x/t + chi)} with eps(t) = 0.
inline double lemma_alpha_ratio(const PotentialSpec& spec, double alpha, double chi, double t, double x)
{
    if (!(x > 0.0)) throw ConfigError("lemma_alpha_ratio: x must be > 0");
    if (!spec.builtin()) throw ConfigError("lemma_alpha_ratio: needs a built-in potential");
    const double h = h_of_t(spec, alpha * t);
    const double log_B_over_t = h - chi;
    return detail::safe_exp(spec.phi(h) - spec.phi(log_B_over_t + std::log(x) / t + chi));
}

struct MomentCheck {
    double numeric = 0.0;
    double target = 0.0;
};

/// (|Q_L|/|Q_l|) <(e^{t mu}/B)^p 1{...}> under the surrogate law of mu_t:
/// Y <= tau for p > alpha, Y > tau for p < alpha, 1 < Y <= tau for p = alpha.
inline MomentCheck momente_check(const PotentialSpec& spec, double alpha, double chi, double p, double tau, double t,
                                 int d = 1)
{
    if (!(tau > 0.0)) throw ConfigError("momente_check: tau must be > 0");
    if (!(p > 0.0)) throw ConfigError("momente_check: p must be > 0");
    const auto sg = detail::make_surrogate(spec, alpha, chi, t, d);
    const double lt = std::log(tau);
    // y^p dF(y) integrated by parts in s = log y
    auto body = [&](double s) { return detail::safe_exp(std::log(p) + p * s + sg.log_scaled_tail(s)); };
    auto edge = [&](double s) { return detail::safe_exp(p * s + sg.log_scaled_tail(s)); };

    MomentCheck m;
    if (p > alpha) {
        m.numeric = detail::march(body, lt, -1.0) - edge(lt);
        m.target = alpha / (p - alpha) * std::pow(tau, p - alpha);
    } else if (p < alpha) {
        m.numeric = detail::march(body, lt, 1.0) + edge(lt);
        m.target = alpha / (alpha - p) * std::pow(tau, p - alpha);
    } else {
        const double lo = std::min(0.0, lt), hi = std::max(0.0, lt);
        const double v = detail::panel_sum(body, lo, hi) + edge(lo) - edge(hi);
        m.numeric = lt >= 0.0 ? v : -v;
        m.target = alpha * lt;
    }
    return m;
}

/// Levy drift of F_alpha in the 1/(1+x^2)-compensated form.
inline double levy_shift_oracle(double alpha)
{
    if (alpha == 1.0) return 0.0;
    return alpha * std::numbers::pi / (2.0 * std::cos(std::numbers::pi * alpha / 2.0));
}

/// Finite-t drift |Q_L|/|Q_l| <k(Y)> with the centering matched to the alpha case.
inline double fitted_levy_shift(const PotentialSpec& spec, double alpha, double chi, double t, int d = 1)
{
    const auto sg = detail::make_surrogate(spec, alpha, chi, t, d);
    auto kprime = [&](double y) {
        const double q = 1.0 + y * y;
        double v = (1.0 - y * y) / (q * q);
        if (alpha > 1.0) v -= 1.0;
        if (alpha == 1.0 && y <= 1.0) v -= 1.0;
        return v;
    };
    // ∫ k dF = ∫ k'(y) P(Y > y) dy, y = e^s
    auto f = [&](double s) {
        const double y = std::exp(s);
        return kprime(y) * detail::safe_exp(s + sg.log_scaled_tail(s));
    };
    double v = detail::march(f, 0.0, -1.0) + detail::march(f, 0.0, 1.0);
    // k jumps by +1 at y = 1 when alpha = 1
    if (alpha == 1.0) v += detail::safe_exp(sg.log_scaled_tail(0.0));
    return v;
}

struct ConditionPRow {
    double t = 0.0;
    double exceedance = 0.0;      // (i) single-block P(Y > eps)
    double fitted_exponent = 0.0; // (ii)
    std::string centering_case;   // (iv)
    double log_block_centering = neg_inf;
    double shift_fitted = 0.0;
};

struct ConditionPReport {
    double alpha = 0.0;
    double epsilon = 1.0;
    std::vector<ConditionPRow> rows;
    std::vector<double> taus;
    std::vector<double> truncated_variance;  // (iii), at the largest t
    double shift_oracle = 0.0;
    StabilityVerdict verdict;
};

inline ConditionPReport condition_p_report(const PotentialSpec& spec, double alpha, double chi,
                                           const std::vector<double>& t_grid, double epsilon = 1.0, int d = 1,
                                           const std::vector<double>& x_grid = {0.5, 1.0, 2.0, 4.0},
                                           const std::vector<double>& taus = {1.0, 0.5, 0.25})
{
    if (!spec.builtin()) throw ConfigError("condition_p_report: needs a built-in potential");
    if (t_grid.empty()) throw ConfigError("condition_p_report: empty t grid");
    if (!(epsilon > 0.0)) throw ConfigError("condition_p_report: epsilon must be > 0");
    ConditionPReport rep;
    rep.alpha = alpha;
    rep.epsilon = epsilon;
    rep.shift_oracle = levy_shift_oracle(alpha);
    std::vector<double> last_ratios;
    for (double t : t_grid) {
        ConditionPRow row;
        row.t = t;
        const auto sg = detail::make_surrogate(spec, alpha, chi, t, d);
        row.exceedance = std::exp(detail::log_max_tail(spec, sg.log_n, sg.h + std::log(epsilon) / t));
        std::vector<double> lx, ly, ratios;
        for (double x : x_grid) {
            const double r = lemma_alpha_ratio(spec, alpha, chi, t, x);
            ratios.push_back(r);
            lx.push_back(std::log(x));
            ly.push_back(std::log(r));
        }
        row.fitted_exponent = -ols_slope(lx, ly);
        const auto b = make_bundle(spec, alpha, t, 0.0, d);
        row.centering_case = alpha < 1.0 ? "zero" : alpha > 1.0 ? "full_mean" : "truncated_mean";
        row.log_block_centering = b.block_centering_A_tilde;
        row.shift_fitted = fitted_levy_shift(spec, alpha, chi, t, d);
        rep.rows.push_back(row);
        last_ratios = ratios;
    }
    rep.taus = taus;
    for (double tau : taus) rep.truncated_variance.push_back(momente_check(spec, alpha, chi, 2.0, tau, t_grid.back(), d).numeric);
    rep.verdict = stability_verdict(x_grid, last_ratios, alpha, StableLaw(alpha).sigma2());
    return rep;
}

inline nlohmann::json to_json(const ConditionPReport& r)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"t", row.t},
                        {"exceedance", row.exceedance},
                        {"fitted_exponent", row.fitted_exponent},
                        {"centering_case", row.centering_case},
                        {"log_block_centering", num_json(row.log_block_centering)},
                        {"shift_fitted", row.shift_fitted}});
    }
    return {{"alpha", r.alpha},
            {"epsilon", r.epsilon},
            {"rows", rows},
            {"taus", r.taus},
            {"truncated_variance", r.truncated_variance},
            {"shift_oracle", r.shift_oracle},
            {"fitted_exponent", r.verdict.fitted_exponent},
            {"stable", r.verdict.stable}};
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments.

namespace detail {

/// Largest t whose volume e^{phi(h_{alpha t})} fits into `cap` sites.
inline double largest_feasible_t(const PotentialSpec& spec, double alpha, double cap)
{
    const double h = spec.psi(std::log(cap));
    return spec.phi_prime(h) / alpha;
}

inline std::size_t site_count(double log_volume) { return static_cast<std::size_t>(std::max(1.0, std::round(std::exp(log_volume)))); }

/// Odd side with side^d >= n.
inline LatticeBox box_with_at_least(int d, std::size_t n)
{
    auto side = static_cast<std::int64_t>(std::ceil(std::pow(static_cast<double>(n), 1.0 / d) - 1e-9));
    if (side % 2 == 0) ++side;
    return make_box(d, static_cast<double>((side - 1) / 2));
}

inline std::string ftos(double v) { return format_double(v); }

} // namespace detail

/// Rescaled centered sums over Q_{L_alpha(t)}: per replica one sample of
/// Σ_i (e^{t mu_i} - A~)/B (blocks are sites when kappa = 0).
inline ExperimentRecord stable_limit_experiment(const ExperimentConfig& cfg)
{
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentRecord rec;
    rec.experiment = "stable_limit";
    rec.config = to_json(cfg);
    rec.hash = config_hash(cfg);
    const StableLaw law(cfg.alpha);
    const auto reps = static_cast<std::size_t>(cfg.replicas);

    for (std::size_t ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const double t = cfg.t_grid[ti];
        const auto b = make_bundle(cfg.spec, cfg.alpha, t, cfg.kappa, cfg.d, ChiPolicy::explicit_value(cfg.chi));
        const std::size_t n = detail::site_count(b.log_L_alpha);
        TRecord row;
        row.t = t;
        row.log_B = b.log_B_alpha;
        row.ratio_x05 = lemma_alpha_ratio(cfg.spec, cfg.alpha, cfg.chi, t, 0.5);
        row.ratio_x1 = lemma_alpha_ratio(cfg.spec, cfg.alpha, cfg.chi, t, 1.0);
        row.ratio_x2 = lemma_alpha_ratio(cfg.spec, cfg.alpha, cfg.chi, t, 2.0);

        std::vector<double> raw(reps, 0.0);           // Σ_i Y_i per replica
        std::vector<std::vector<double>> top(reps);   // largest block variables
        std::vector<double> centering_sum(reps, 0.0); // MC centering pieces (kappa > 0)
        const std::size_t keep = reps + 1;
        std::size_t blocks = n;

        if (cfg.kappa == 0.0) {
            if (static_cast<double>(n) > cfg.budget.max_sites || static_cast<double>(n) * reps > cfg.budget.max_total_sites) {
                const double cap = std::min(cfg.budget.max_sites, cfg.budget.max_total_sites / reps);
                throw BudgetError("stable_limit_experiment: " + std::to_string(n) + " sites per replica at t=" +
                                  detail::ftos(t) + " exceed the budget; largest feasible t = " +
                                  detail::ftos(detail::largest_feasible_t(cfg.spec, cfg.alpha, cap)));
            }
            row.log_volume = std::log(static_cast<double>(n));
            parallel_for(reps, cfg.workers, [&](std::size_t r) {
                // one potential per replica; Q_L(t) grows along the grid
                RngStream rng(cfg.master_seed, {r});
                std::vector<double> heap;  // min-heap of the `keep` largest
                heap.reserve(keep);
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double y = std::exp(t * cfg.spec.sample(rng) - b.log_B_alpha);
                    s += y;
                    if (heap.size() < keep) {
                        heap.push_back(y);
                        std::push_heap(heap.begin(), heap.end(), std::greater<>());
                    } else if (y > heap.front()) {
                        std::pop_heap(heap.begin(), heap.end(), std::greater<>());
                        heap.back() = y;
                        std::push_heap(heap.begin(), heap.end(), std::greater<>());
                    }
                }
                raw[r] = s;
                top[r] = std::move(heap);
            });
            row.log_centering = b.centering_A;
        } else {
            const auto box = detail::box_with_at_least(cfg.d, n);
            if (static_cast<double>(box.size()) > cfg.budget.max_solver_sites) {
                throw BudgetError("stable_limit_experiment: box of " + std::to_string(box.size()) + " sites at t=" +
                                  detail::ftos(t) + " exceeds the solver budget; largest feasible t = " +
                                  detail::ftos(detail::largest_feasible_t(cfg.spec, cfg.alpha, cfg.budget.max_solver_sites)));
            }
            row.log_volume = std::log(static_cast<double>(box.size()));
            const double l = std::min(b.l_t, box.r());
            blocks = tile_blocks(box, l).size();
            const double log_B = b.log_B_alpha;
            parallel_for(reps, cfg.workers, [&](std::size_t r) {
                RngStream rng(cfg.master_seed, {ti, r});
                const auto field = sample_field(box, cfg.spec, rng);
                const auto st = block_decompose_and_solve(box, field, cfg.kappa, t, l, 1);
                std::vector<double> ys;
                double s = 0.0, c = 0.0;
                for (const auto& bs : st) {
                    const double y = std::exp(t * bs.mu_t - log_B);
                    ys.push_back(y);
                    s += y;
                    if (cfg.alpha > 1.0 || (cfg.alpha == 1.0 && y <= 1.0)) c += y;
                }
                raw[r] = s;
                centering_sum[r] = c;
                top[r] = std::move(ys);
            });
            if (cfg.alpha >= 1.0) {
                double c = 0.0;
                for (double v : centering_sum) c += v;
                const double mean_y = c / static_cast<double>(reps * blocks);  // A~/B
                row.log_centering = std::log(mean_y) + log_B;
            }
        }
        row.blocks = blocks;

        // subtract the centering: per block A~/B (A~ = A per site when kappa = 0)
        const double shift = row.log_centering == neg_inf ? 0.0 : static_cast<double>(blocks) * std::exp(row.log_centering - row.log_B);
        row.samples.resize(reps);
        for (std::size_t r = 0; r < reps; ++r) row.samples[r] = raw[r] - shift;

        std::vector<double> pooled;
        for (const auto& v : top) pooled.insert(pooled.end(), v.begin(), v.end());
        std::sort(pooled.begin(), pooled.end());
        const std::size_t k = std::min(reps, pooled.size() - 1);
        if (k >= 1 && pooled[pooled.size() - k - 1] > 0.0) row.hill = hill_estimator(pooled, k);
        row.ks = ks_statistic(row.samples, law);
        double m = 0.0;
        for (double v : row.samples) m += v;
        row.mean = m / static_cast<double>(reps);
        rec.rows.push_back(std::move(row));
    }
    rec.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

struct SllnOptions {
    /// Box volume |Q_r|; 0 selects r(t) from the margin rule.
    double volume = 0.0;
    double margin = 1.0;
    /// Averages must stay within band_factor * sqrt(bound) of 1.
    double band_factor = 5.0;
};

/// Normalized spatial averages (1/|Q_r|) Σ u(t,x)/<u(t,0)> per replica.
inline ExperimentRecord slln_experiment(const ExperimentConfig& cfg, const SllnOptions& opt = {})
{
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentRecord rec;
    rec.experiment = "slln";
    rec.config = to_json(cfg);
    rec.config["volume"] = opt.volume;
    rec.config["margin"] = opt.margin;
    rec.config["band_factor"] = opt.band_factor;
    rec.hash = config_hash(cfg);
    const auto reps = static_cast<std::size_t>(cfg.replicas);
    double partial = 0.0;
    bool within = true;
    nlohmann::json bands = nlohmann::json::array();

    for (std::size_t ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const double t = cfg.t_grid[ti];
        partial += std::exp(-t);
        double log_vol = opt.volume > 0.0 ? std::log(opt.volume) : slln_radius(cfg.spec, t, cfg.d, opt.margin).log_volume;
        TRecord row;
        row.t = t;
        std::vector<double> avg(reps, 0.0);

        if (cfg.kappa == 0.0) {
            const std::size_t n = detail::site_count(log_vol);
            if (static_cast<double>(n) > cfg.budget.max_sites || static_cast<double>(n) * reps > cfg.budget.max_total_sites)
                throw BudgetError("slln_experiment: " + std::to_string(n) + " sites at t=" + detail::ftos(t) + " exceed the budget");
            row.log_volume = std::log(static_cast<double>(n));
            const double hu = cumulant(cfg.spec, t);
            row.log_centering = hu;
            parallel_for(reps, cfg.workers, [&](std::size_t r) {
                RngStream rng(cfg.master_seed, {ti, r});
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += std::exp(t * cfg.spec.sample(rng) - hu);
                avg[r] = s / static_cast<double>(n);
            });
            row.bound = std::expm1(cumulant(cfg.spec, 2.0 * t) - 2.0 * hu) / static_cast<double>(n);
        } else {
            const auto box = detail::box_with_at_least(cfg.d, detail::site_count(log_vol));
            if (static_cast<double>(box.size()) > cfg.budget.max_solver_sites)
                throw BudgetError("slln_experiment: box of " + std::to_string(box.size()) + " sites at t=" + detail::ftos(t) +
                                  " exceeds the solver budget");
            row.log_volume = std::log(static_cast<double>(box.size()));
            std::vector<double> mass(reps);
            parallel_for(reps, cfg.workers, [&](std::size_t r) {
                RngStream rng(cfg.master_seed, {ti, r});
                const auto field = sample_field(box, cfg.spec, rng);
                const HamiltonianOperator H(field, cfg.kappa);
                mass[r] = solve_ode(H, t, ones(box.size())).mass() / static_cast<double>(box.size());
            });
            // <u(t,0)> by the pooled Monte Carlo average
            double mu = 0.0;
            for (double v : mass) mu += v;
            mu /= static_cast<double>(reps);
            row.log_centering = std::log(mu);
            for (std::size_t r = 0; r < reps; ++r) avg[r] = mass[r] / mu;
            row.bound = std::exp(annealed_moment(cfg.spec, 2.0, t, cfg.chi, MomentMethod::LaplaceIntegral) -
                                 2.0 * annealed_moment(cfg.spec, 1.0, t, cfg.chi, MomentMethod::LaplaceIntegral)) /
                        static_cast<double>(box.size());
        }
        row.samples = avg;
        row.variance = sample_variance(avg);
        double m = 0.0, dev = 0.0;
        for (double v : avg) {
            m += v;
            dev = std::max(dev, std::abs(v - 1.0));
        }
        row.mean = m / static_cast<double>(reps);
        const double band = opt.band_factor * std::sqrt(row.bound);
        within = within && dev <= band;
        bands.push_back({{"t", t}, {"band", band}, {"max_deviation", dev}});
        rec.rows.push_back(std::move(row));
    }
    rec.extra["partial_sum_exp_minus_t"] = partial;
    rec.extra["bands"] = bands;
    rec.extra["within_band"] = within;
    rec.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

struct ExponentRow {
    double t = 0.0;
    double log_u_over_t = 0.0;
    double xi_max = 0.0;
    double lambda1 = 0.0;
    double gap_u = 0.0;       // log u/t - xi^(1) + chi
    double gap_lambda = 0.0;  // lambda_1 - xi^(1) + chi
    double remark_ratio = 0.0;     // log u(t,0) / log Σ u
    double max_share_ratio = 0.0;  // log max u / log Σ u
};

/// Per t: one draw on Q_t (radius t) and the quenched growth-rate gaps.
inline std::vector<ExponentRow> exponent_diagnostics(const PotentialSpec& spec, double kappa, double chi, int d,
                                                     const std::vector<double>& t_grid, std::uint64_t master_seed,
                                                     const Budget& budget = {})
{
    resolve_chi(spec, kappa, d, ChiPolicy::explicit_value(chi));
    std::vector<ExponentRow> out;
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        const double t = t_grid[ti];
        if (!(t > 0.0)) throw ConfigError("exponent_diagnostics: t must be > 0");
        if (std::exp(log_box_volume(d, t)) > budget.max_solver_sites)
            throw BudgetError("exponent_diagnostics: box Q_t exceeds the solver budget at t=" + detail::ftos(t));
        RngStream rng(master_seed, {ti, 0});
        const auto box = make_box(d, t);
        const auto field = sample_field(box, spec, rng);
        const HamiltonianOperator H(field, kappa);
        ExponentRow row;
        row.t = t;
        row.xi_max = field.max_value();
        row.lambda1 = kappa == 0.0 ? row.xi_max : principal_eigenpair(H, 1e-10 * std::max(1.0, H.norm1())).lambda;
        // log u via the shifted propagator to keep large t finite
        const auto kr = kappa == 0.0 ? KrylovResult{} : krylov_expm_action(H, t, ones(box.size()));
        std::vector<double> log_u(box.size());
        for (std::size_t i = 0; i < box.size(); ++i)
            log_u[i] = kappa == 0.0 ? t * field.values[i] : std::log(std::max(kr.w[i], 1e-300)) + kr.log_scale;
        const double top = *std::max_element(log_u.begin(), log_u.end());
        double s = 0.0;
        for (double v : log_u) s += std::exp(v - top);
        const double log_sum = top + std::log(s);
        const double lu0 = log_u[box.center_index()];
        row.log_u_over_t = lu0 / t;
        row.gap_u = row.log_u_over_t - row.xi_max + chi;
        row.gap_lambda = row.lambda1 - row.xi_max + chi;
        row.remark_ratio = lu0 / log_sum;
        row.max_share_ratio = top / log_sum;
        out.push_back(row);
    }
    return out;
}

inline nlohmann::json to_json(const std::vector<ExponentRow>& rows)
{
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows) {
        a.push_back({{"t", r.t},
                     {"log_u_over_t", r.log_u_over_t},
                     {"xi_max", r.xi_max},
                     {"lambda1", r.lambda1},
                     {"gap_u", r.gap_u},
                     {"gap_lambda", r.gap_lambda},
                     {"remark_ratio", r.remark_ratio},
                     {"max_share_ratio", r.max_share_ratio}});
    }
    return a;
}

struct ExceedanceCheck {
    double mc = 0.0;
    double stderr_ = 0.0;
    double exact = 0.0;
};

/// P(max over a block of n i.i.d. sites > h): Monte Carlo vs 1 - (1 - e^{-phi(h)})^n.
inline ExceedanceCheck block_max_exceedance(const PotentialSpec& spec, std::size_t n, double h, std::size_t blocks,
                                            RngStream& rng)
{
    if (n < 1 || blocks < 1) throw ConfigError("block_max_exceedance: n and blocks must be >= 1");
    std::size_t hits = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, spec.sample(rng));
        hits += m > h;
    }
    ExceedanceCheck c;
    c.exact = std::exp(detail::log_max_tail(spec, std::log(static_cast<double>(n)), h));
    c.mc = static_cast<double>(hits) / static_cast<double>(blocks);
    c.stderr_ = std::sqrt(c.exact * (1.0 - c.exact) / static_cast<double>(blocks));
    return c;
}

/// Σ escape mass / Σ u over the blocks of a box tiled by blocks_per_dim^d
/// blocks of radius l(t), per t.
inline std::vector<double> cut_negligibility(const PotentialSpec& spec, double kappa, int d, int blocks_per_dim,
                                             const std::vector<double>& t_grid, std::size_t n_paths,
                                             std::uint64_t master_seed, std::size_t draws = 8,
                                             const Budget& budget = {})
{
    if (blocks_per_dim < 1) throw ConfigError("cut_negligibility: blocks_per_dim must be >= 1");
    std::vector<double> out;
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        const double t = t_grid[ti];
        const double l = std::floor(l_of_t(spec, t));
        const double side = blocks_per_dim * (2.0 * l + 1.0);
        if (std::pow(side, d) > budget.max_solver_sites)
            throw BudgetError("cut_negligibility: box exceeds the solver budget at t=" + detail::ftos(t));
        const auto big = LatticeBox::from_corner(Point(static_cast<std::size_t>(d), 0), static_cast<std::size_t>(side));
        const auto blocks = tile_blocks(big, l);
        double esc = 0.0, tot = 0.0;
        for (std::size_t k = 0; k < draws; ++k) {
            RngStream rng(master_seed, {ti, k});
            const auto field = sample_field(big, spec, rng);
            const HamiltonianOperator H(field, kappa);
            const auto u = solve_ode(H, t, ones(big.size()));
            for (const auto& blk : blocks) {
                for (std::size_t j = 0; j < blk.size(); ++j) {
                    const auto x = blk.site(j);
                    esc += escape_mass(blk, field, kappa, t, x, n_paths, rng).value;
                    tot += u.values[big.index(x)];
                }
            }
        }
        out.push_back(esc / tot);
    }
    return out;
}

} // namespace pamlab
