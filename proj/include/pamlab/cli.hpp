#pragma once

// Command-line front end: subcommands, INI-style config files with [section]
// headers (command line wins), seeds, output directories and manifests.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include "pamlab/errors.hpp"
#include "pamlab/experiments.hpp"
#include "pamlab/lattice.hpp"
#include "pamlab/potential.hpp"
#include "pamlab/scalings.hpp"
#include "pamlab/solver.hpp"
#include "pamlab/stable_law.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pamlab::cli {

inline constexpr const char* version = "0.1.0";

struct PotentialArgs {
    std::string family = "weibull";
    double gamma = 2.0;
    double rho = 1.0;

    PotentialSpec spec() const
    {
        if (family == "weibull") return PotentialSpec::weibull(gamma);
        if (family == "double_exp") return PotentialSpec::double_exponential(rho);
        throw ConfigError("unknown potential family '" + family + "'");
    }
};

struct Common {
    std::uint64_t seed = 1;
    unsigned workers = default_workers();
    std::string out = "pamlab_out";
};

struct SolveArgs {
    PotentialArgs pot;
    int d = 1;
    double r = 3;
    double kappa = 1.0;
    double t = 1.0;
    std::string method = "all";
    std::size_t paths = 10000;
};

struct ScalingsArgs {
    PotentialArgs pot;
    double alpha = 1.0;
    double t = 1.0;
    double kappa = 0.0;
    int d = 1;
};

struct StableArgs {
    double alpha = 0.8;
    std::vector<double> x{0.5, 1.0, 2.0, 5.0, 10.0};
    std::size_t samples = 0;
};

struct ExperimentArgs {
    PotentialArgs pot;
    double alpha = 0.8;
    double kappa = 0.0;
    int d = 1;
    double chi = 0.0;
    std::vector<double> t_grid{5, 6, 7, 8};
    int replicas = 1000;
    Budget budget;
    // slln
    double volume = 0.0;
    double margin = 1.0;
    double band = 5.0;
    // condp
    double epsilon = 1.0;

    ExperimentConfig config(const Common& c) const
    {
        ExperimentConfig e;
        e.spec = pot.spec();
        e.alpha = alpha;
        e.kappa = kappa;
        e.d = d;
        e.chi = chi;
        e.t_grid = t_grid;
        e.replicas = replicas;
        e.master_seed = c.seed;
        e.budget = budget;
        e.workers = c.workers;
        return e;
    }
};

namespace detail {

inline void add_potential(CLI::App* sub, PotentialArgs& p)
{
    sub->add_option("--family", p.family, "weibull | double_exp")->check(CLI::IsMember({"weibull", "double_exp"}));
    sub->add_option("--gamma", p.gamma, "Weibull exponent (> 1)");
    sub->add_option("--rho", p.rho, "double-exponential parameter (> 0)");
}

inline void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", c.out, "output directory")->envname("PAM_LAB_OUT");
}

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + p.string());
    return os;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j)
{
    auto os = open_out(p);
    os << j.dump(2) << '\n';
}

} // namespace detail

/// Run the CLI; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Parabolic Anderson model lab"};
    app.option_defaults()->always_capture_default();
    auto* config_opt = app.set_config("--config", "", "INI config file; command-line flags take precedence");
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", version);

    Common common;
    SolveArgs solve;
    ScalingsArgs sc;
    StableArgs st;
    ExperimentArgs ex;
    std::string chi_text = "endpoint";

    auto* s_solve = app.add_subcommand("solve", "solve one random box three ways");
    detail::add_potential(s_solve, solve.pot);
    detail::add_common(s_solve, common);
    s_solve->add_option("--d", solve.d)->group("Required");
    s_solve->add_option("--r", solve.r)->group("Required");
    s_solve->add_option("--kappa", solve.kappa)->group("Required");
    s_solve->add_option("--t", solve.t)->group("Required");
    s_solve->add_option("--method", solve.method)->check(CLI::IsMember({"ode", "spectral", "fk", "all"}));
    s_solve->add_option("--paths", solve.paths, "Feynman-Kac paths per site");

    auto* s_sc = app.add_subcommand("scalings", "scaling bundle at one (alpha, t)");
    detail::add_potential(s_sc, sc.pot);
    detail::add_common(s_sc, common);
    s_sc->add_option("--alpha", sc.alpha)->group("Required");
    s_sc->add_option("--t", sc.t)->group("Required");
    s_sc->add_option("--kappa", sc.kappa);
    s_sc->add_option("--d", sc.d);
    s_sc->add_option("--chi", chi_text, "'endpoint' or an explicit value in [0, 2 d kappa]");

    auto* s_st = app.add_subcommand("stable", "F_alpha cdf/density and sampler check");
    detail::add_common(s_st, common);
    s_st->add_option("--alpha", st.alpha)->group("Required");
    s_st->add_option("--x", st.x)->delimiter(',');
    s_st->add_option("--samples", st.samples, "draws for a KS check (0 = none)");

    auto add_experiment = [&](CLI::App* sub) {
        detail::add_potential(sub, ex.pot);
        detail::add_common(sub, common);
        sub->add_option("--alpha", ex.alpha);
        sub->add_option("--kappa", ex.kappa);
        sub->add_option("--d", ex.d);
        sub->add_option("--chi", ex.chi);
        sub->add_option("--t-grid", ex.t_grid)->delimiter(',');
        sub->add_option("--replicas", ex.replicas);
        sub->add_option("--max-sites", ex.budget.max_sites);
        sub->add_option("--max-total-sites", ex.budget.max_total_sites);
        sub->add_option("--max-solver-sites", ex.budget.max_solver_sites);
    };
    auto* s_lim = app.add_subcommand("limit-exp", "rescaled block sums against F_alpha");
    add_experiment(s_lim);
    auto* s_slln = app.add_subcommand("slln-exp", "spatial averages and their variance");
    add_experiment(s_slln);
    s_slln->add_option("--volume", ex.volume, "box volume; 0 = margin rule");
    s_slln->add_option("--margin", ex.margin);
    s_slln->add_option("--band", ex.band);
    auto* s_cp = app.add_subcommand("condp", "deterministic Condition P report");
    add_experiment(s_cp);
    s_cp->add_option("--epsilon", ex.epsilon);
    auto* s_dg = app.add_subcommand("diagnostics", "quenched growth-rate gaps on Q_t");
    add_experiment(s_dg);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << version << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    // required flags may come from the command line or from the config file
    for (const auto* opt : sub->get_options()) {
        if (opt->get_group() == "Required" && opt->count() == 0) {
            err << "error: " << opt->get_name() << " is required\n\n" << sub->help();
            return 1;
        }
    }
    const std::string name = sub->get_name();
    const auto started = std::chrono::steady_clock::now();
    const std::filesystem::path dir = common.out;

    auto write_manifest = [&] {
        std::ostringstream echo;
        echo << '[' << name << "]\n" << sub->config_to_str(true, false);
        {
            auto os = detail::open_out(dir / "config.ini");
            os << echo.str();
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        detail::write_json(dir / "manifest.json",
                           {{"subcommand", name},
                            {"config_file", config_opt->count() > 0 ? config_opt->results().front() : std::string()},
                            {"config", echo.str()},
                            {"master_seed", common.seed},
                            {"seed_derivation", "splitmix64(master, stream path)"},
                            {"output_dir", dir.string()},
                            {"version", version},
                            {"wall_clock_s", wall}});
    };

    try {
        std::filesystem::create_directories(dir);
        if (name == "solve") {
            RngStream rng(common.seed, {0});
            const auto box = make_box(solve.d, solve.r);
            const auto field = sample_field(box, solve.pot.spec(), rng);
            const HamiltonianOperator H(field, solve.kappa);
            const auto u0 = ones(box.size());
            std::optional<SolutionField> ode, spec, fk;
            if (solve.method == "ode" || solve.method == "all") ode = solve_ode(H, solve.t, u0);
            if (solve.method == "spectral" || solve.method == "all") spec = solve_spectral(H, solve.t, u0);
            if (solve.method == "fk" || solve.method == "all") {
                RngStream frng(common.seed, {1});
                fk = feynman_kac_mc(field, solve.kappa, solve.t, solve.paths, frng, {}, common.workers);
            }
            {
                auto os = detail::open_out(dir / "field.csv");
                write_field_csv(os, field);
            }
            auto os = detail::open_out(dir / "comparison.csv");
            const std::string header = "site,xi,ode,spectral,fk,fk_stderr";
            os << header << '\n';
            out << header << '\n';
            for (std::size_t i = 0; i < box.size(); ++i) {
                std::ostringstream row;
                row << i << ',' << format_double(field.values[i]) << ','
                    << format_double(ode ? ode->values[i] : nan_value) << ','
                    << format_double(spec ? spec->values[i] : nan_value) << ','
                    << format_double(fk ? fk->values[i] : nan_value) << ','
                    << format_double(fk ? fk->stderrs[i] : nan_value);
                os << row.str() << '\n';
                out << row.str() << '\n';
            }
        } else if (name == "scalings") {
            const auto spec = sc.pot.spec();
            ChiPolicy policy = ChiPolicy::endpoint_rule();
            if (chi_text != "endpoint") {
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(chi_text, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != chi_text.size()) throw ConfigError("--chi must be 'endpoint' or a number");
                policy = ChiPolicy::explicit_value(v);
            }
            const auto b = make_bundle(spec, sc.alpha, sc.t, sc.kappa, sc.d, policy);
            out << "log_L=" << format_double(b.log_L_alpha) << '\n' << "log_B=" << format_double(b.log_B_alpha) << '\n';
            out << "h_alpha_t=" << format_double(b.h_alpha_t) << '\n' << "chi=" << format_double(b.chi) << '\n';
            out << "l_t=" << format_double(b.l_t) << '\n';
            detail::write_json(dir / "scalings.json", to_json(b));
        } else if (name == "stable") {
            const StableLaw law(st.alpha);
            auto os = detail::open_out(dir / "stable.csv");
            os << "x,cdf,density\n";
            out << "x,cdf,density\n";
            for (double x : st.x) {
                const std::string row = format_double(x) + ',' + format_double(law.cdf(x)) + ',' + format_double(law.density(x));
                os << row << '\n';
                out << row << '\n';
            }
            if (st.samples > 0) {
                RngStream rng(common.seed, {0});
                std::vector<double> xs(st.samples);
                for (auto& v : xs) v = sample_stable(law, rng);
                const double ks = ks_statistic(xs, law);
                out << "ks=" << format_double(ks) << '\n';
                detail::write_json(dir / "stable_ks.json", {{"alpha", st.alpha}, {"samples", st.samples}, {"ks", ks}, {"p_value", ks_pvalue(ks, st.samples)}});
            }
        } else if (name == "limit-exp" || name == "slln-exp") {
            const auto cfg = ex.config(common);
            ExperimentRecord rec;
            if (name == "limit-exp") {
                rec = stable_limit_experiment(cfg);
            } else {
                SllnOptions o;
                o.volume = ex.volume;
                o.margin = ex.margin;
                o.band_factor = ex.band;
                rec = slln_experiment(cfg, o);
            }
            {
                auto os = detail::open_out(dir / "statistics.csv");
                write_stats_csv(os, rec);
            }
            detail::write_json(dir / "record.json", to_json(rec));
            write_stats_csv(out, rec);
        } else if (name == "condp") {
            const auto rep = condition_p_report(ex.pot.spec(), ex.alpha, ex.chi, ex.t_grid, ex.epsilon, ex.d);
            detail::write_json(dir / "condp.json", to_json(rep));
            auto os = detail::open_out(dir / "condp.csv");
            const std::string header = "t,exceedance,fitted_exponent,shift_fitted";
            os << header << '\n';
            out << header << '\n';
            for (const auto& r : rep.rows) {
                const std::string row = format_double(r.t) + ',' + format_double(r.exceedance) + ',' +
                                        format_double(r.fitted_exponent) + ',' + format_double(r.shift_fitted);
                os << row << '\n';
                out << row << '\n';
            }
            out << "stable=" << (rep.verdict.stable ? "true" : "false") << '\n';
        } else if (name == "diagnostics") {
            const auto rows = exponent_diagnostics(ex.pot.spec(), ex.kappa, ex.chi, ex.d, ex.t_grid, common.seed, ex.budget);
            detail::write_json(dir / "diagnostics.json", to_json(rows));
            auto os = detail::open_out(dir / "diagnostics.csv");
            const std::string header = "t,log_u_over_t,xi_max,lambda1,gap_u,gap_lambda,remark_ratio,max_share_ratio";
            os << header << '\n';
            out << header << '\n';
            for (const auto& r : rows) {
                std::string row;
                for (double v : {r.t, r.log_u_over_t, r.xi_max, r.lambda1, r.gap_u, r.gap_lambda, r.remark_ratio, r.max_share_ratio})
                    row += (row.empty() ? "" : ",") + format_double(v);
                os << row << '\n';
                out << row << '\n';
            }
        }
        write_manifest();
        return 0;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        try {
            std::filesystem::create_directories(dir);
            detail::write_json(dir / "failure.json", {{"subcommand", name}, {"error", e.what()}, {"achieved", e.achieved()}});
            write_manifest();
        } catch (...) {
        }
        return 2;
    } catch (const BudgetError& e) {
        err << "budget exceeded: " << e.what() << '\n';
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n' << sub->help();
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    }
}

inline int run(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

} // namespace pamlab::cli
