#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// that it can be driven from tests.
//
// Exit status: 0 success, 1 failed checks or inadmissible model (validate),
// 2 usage, parse, schema or precondition errors.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbi/errors.hpp"
#include "cbi/model.hpp"
#include "cbi/moments.hpp"
#include "cbi/riccati.hpp"
#include "cbi/simulate.hpp"
#include "cbi/spectral.hpp"
#include "cbi/verify.hpp"

namespace cbi::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

namespace detail {

inline std::vector<double> parse_csv_floats(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(item, &used);
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "'" + item + "' is not a number");
        }
        if (used != item.size()) throw CLI::ValidationError(flag, "'" + item + "' is not a number");
        out.push_back(value);
    }
    if (out.empty()) throw CLI::ValidationError(flag, "expects a comma-separated list of numbers");
    return out;
}

inline Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Flag values shared by all subcommands; which ones a subcommand accepts is
/// decided when the parser is built.
struct Flags {
    std::string model;
    std::optional<double> t;
    std::string t_grid;
    double dt = 1e-3;
    std::optional<std::size_t> paths;
    std::uint64_t seed = 42;
    unsigned workers = 1;
    std::optional<std::size_t> pair;
    std::string lambda;
    std::string x;
    std::string checks;
    std::string out;
    std::string mode = "l1";
};

inline std::vector<double> times(const Flags& f, std::vector<double> fallback = {}) {
    if (!f.t_grid.empty()) return parse_csv_floats(f.t_grid, "--t-grid");
    if (f.t) return {*f.t};
    if (!fallback.empty()) return fallback;
    throw CLI::ValidationError("--t", "one of --t or --t-grid is required");
}

inline ModelParams load_admissible(const std::string& path) {
    ModelParams p = load_model(path);
    const auto rep = validate_admissible(p);
    if (!rep.ok) {
        std::string msg = "model is not admissible:";
        for (const auto& v : rep.violations) msg += " " + v.field + " (" + v.rule + ")";
        throw PreconditionError(msg);
    }
    return p;
}

inline Vector checked_vector(const std::string& text, int d, const char* flag) {
    const auto values = parse_csv_floats(text, flag);
    if (values.size() != static_cast<std::size_t>(d))
        throw CLI::ValidationError(flag, "expects " + std::to_string(d) + " values");
    return to_vector(values);
}

/// Writes to --out when given, otherwise to `out`.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw IoError("cannot open output file '" + path + "'");
            stream_ = file_.get();
        }
    }
    std::ostream& os() { return *stream_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

inline void print_complex(std::ostream& os, Complex z) {
    os << z.real();
    if (z.imag() != 0.0) os << (z.imag() < 0 ? "" : "+") << z.imag() << "i";
}

inline void print_vector(std::ostream& os, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_validate(const Flags& f, std::ostream& out) {
    const ModelParams p = load_model(f.model);
    const ValidationReport rep = validate_admissible(p);
    Sink sink(f.out, out);
    if (ends_with(f.out, ".json")) {
        nlohmann::json viol = nlohmann::json::array();
        for (const auto& v : rep.violations)
            viol.push_back({{"field", v.field}, {"rule", v.rule}, {"value", v.value}});
        sink.os() << nlohmann::json{{"ok", rep.ok}, {"violations", viol}}.dump(2) << "\n";
    } else {
        sink.os() << "ok: " << (rep.ok ? "true" : "false") << "\n";
        for (const auto& v : rep.violations)
            sink.os() << "violation: " << v.field << ": " << v.rule << " (value " << v.value << ")\n";
    }
    return rep.ok ? kOk : kFailed;
}

inline int cmd_spectral(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    const SpectralData sd = spectral_data(p);
    Sink sink(f.out, out);
    auto& os = sink.os();
    if (ends_with(f.out, ".json")) {
        os << spectral_summary(sd).dump(2) << "\n";
        return kOk;
    }
    os << std::setprecision(17);
    os << "b_tilde:\n";
    for (Eigen::Index i = 0; i < sd.b_tilde.rows(); ++i) {
        os << "  ";
        print_vector(os, sd.b_tilde.row(i).transpose());
        os << "\n";
    }
    os << "beta_tilde: ";
    print_vector(os, sd.beta_tilde);
    os << "\ns: " << sd.s << "\nu_right: ";
    print_vector(os, sd.u_right);
    os << "\nu_left: ";
    print_vector(os, sd.u_left);
    os << "\nirreducible: " << (sd.irreducible ? "true" : "false")
       << "\nclass: " << to_string(sd.criticality) << "\n";
    for (std::size_t k = 0; k < sd.eigen.size(); ++k) {
        os << "pair " << k << ": lambda=";
        print_complex(os, sd.eigen[k].lambda);
        os << " v=(";
        for (Eigen::Index i = 0; i < sd.eigen[k].v.size(); ++i) {
            if (i) os << ",";
            print_complex(os, sd.eigen[k].v[i]);
        }
        os << ")\n";
    }
    return kOk;
}

inline int cmd_mean(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    const MeanParams mp = build_mean_params(p);
    const auto grid = times(f);
    Sink sink(f.out, out);
    auto& os = sink.os();
    os << std::setprecision(17) << "t";
    for (int i = 1; i <= p.d; ++i) os << ",mean_" << i;
    os << "\n";
    for (double t : grid) {
        os << t << ",";
        print_vector(os, mean_vector(p, mp, t));
        os << "\n";
    }
    return kOk;
}

inline int cmd_second_moment(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    const SpectralData sd = spectral_data(p);
    const std::size_t pair = f.pair.value_or(0);
    const auto grid = times(f);
    std::optional<AsymptoticLimit> limit;
    if (sd.criticality == Criticality::supercritical) limit = second_moment_limit(p, sd, pair);
    Sink sink(f.out, out);
    auto& os = sink.os();
    os << std::setprecision(17) << "t,total,e_term";
    for (int l = 1; l <= p.d; ++l) os << ",i_term_" << l;
    os << ",nu_term";
    if (limit) os << ",h_t_total";
    os << "\n";
    for (double t : grid) {
        const auto b = second_moment_projection(p, sd, pair, t);
        os << t << "," << b.total << "," << b.e_term << ",";
        print_vector(os, b.i_terms);
        os << "," << b.nu_term;
        if (limit) os << "," << limit->h(t) * b.total;
        os << "\n";
    }
    if (limit && f.out.empty())
        os << "# limit: regime=" << to_string(limit->regime) << " h(t)=" << limit->h_description
           << " M2=" << limit->m2 << "\n";
    return kOk;
}

inline int cmd_laplace(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    if (f.lambda.empty()) throw CLI::ValidationError("--lambda", "is required");
    const Vector lam = checked_vector(f.lambda, p.d, "--lambda");
    const Vector x = f.x.empty() ? p.x0 : checked_vector(f.x, p.d, "--x");
    const auto grid = times(f);
    Sink sink(f.out, out);
    auto& os = sink.os();
    os << std::setprecision(17) << "t,laplace\n";
    for (double t : grid) os << t << "," << laplace_transform(p, x, lam, t) << "\n";
    return kOk;
}

inline int cmd_simulate(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    const MeanParams mp = build_mean_params(p);
    SimConfig sc;
    sc.dt = f.dt;
    sc.record_grid = times(f);
    sc.horizon = sc.record_grid.back();
    sc.paths = f.paths.value_or(1);
    sc.seed = f.seed;
    sc.workers = f.workers;
    Sink sink(f.out, out);
    if (sc.paths == 1 && !f.pair) {
        write_trajectory_csv(sink.os(), simulate_path(p, mp, sc, 0), p.d);
        return kOk;
    }
    std::vector<CVector> projections;
    if (f.pair) projections.push_back(cbi::detail::pair_at(spectral_data(p), *f.pair).v);
    write_ensemble_csv(sink.os(), simulate_ensemble(p, mp, sc, projections), p.d);
    return kOk;
}

inline std::vector<Vector> lambda_list(const std::string& text, int d) {
    const auto values = parse_csv_floats(text, "--lambda");
    if (values.size() % static_cast<std::size_t>(d) != 0)
        throw CLI::ValidationError("--lambda", "expects a multiple of " + std::to_string(d) + " values");
    std::vector<Vector> out;
    for (std::size_t k = 0; k < values.size(); k += static_cast<std::size_t>(d))
        out.push_back(Eigen::Map<const Vector>(&values[k], d));
    return out;
}

inline int cmd_verify(const Flags& f, std::ostream& out) {
    const ModelParams p = load_admissible(f.model);
    const MeanParams mp = build_mean_params(p);
    std::optional<SpectralData> sd;
    if (is_irreducible(mp.b_tilde)) sd = perron_and_classify(mp.b_tilde, mp.beta_tilde);
    const bool supercritical = sd && sd->criticality == Criticality::supercritical;

    std::vector<std::string> names = split_names(f.checks);
    if (names.empty()) {
        names = {"martingale", "moment", "laplace"};
        if (supercritical) names.insert(names.end(), {"convergence", "direction"});
    }
    auto need_spectral = [&](const std::string& what) -> const SpectralData& {
        if (!sd) throw PreconditionError(what + " requires an irreducible process (B_tilde is reducible)");
        return *sd;
    };

    VerifyConfig cfg;
    cfg.dt = f.dt;
    cfg.paths = f.paths.value_or(20000);
    cfg.seed = f.seed;
    cfg.workers = f.workers;
    const std::size_t pair = f.pair.value_or(0);
    const std::vector<double> short_grid = times(f, {0.25, 0.5, 1.0});
    std::vector<double> limit_grid = short_grid;
    if (f.t_grid.empty() && !f.t && supercritical) {
        const double t_max = 6.0 / sd->s;
        limit_grid = {0.25 * t_max, 0.5 * t_max, 0.75 * t_max, t_max};
    }

    VerificationReport report;
    report.model = to_json(p);
    if (sd) report.spectral = spectral_summary(*sd);
    report.seed = cfg.seed;
    report.config = {{"dt", cfg.dt},       {"paths", cfg.paths}, {"workers", cfg.workers},
                     {"pair", pair},       {"mode", f.mode},     {"checks", names},
                     {"short_grid", short_grid}, {"limit_grid", limit_grid}};

    for (const auto& name : names) {
        if (name == "martingale") {
            report.checks.push_back(martingale_defect(p, mp, cfg, short_grid));
        } else if (name == "moment") {
            std::optional<std::size_t> proj;
            if (sd) proj = pair;
            report.checks.push_back(
                moment_check(p, sd ? *sd : SpectralData{mp, 0.0, {}, {}, {}, false, Criticality::critical},
                             cfg, proj, short_grid));
        } else if (name == "laplace") {
            const std::vector<Vector> lams =
                f.lambda.empty() ? std::vector<Vector>{Vector::Ones(p.d)} : lambda_list(f.lambda, p.d);
            const Vector x = f.x.empty() ? p.x0 : checked_vector(f.x, p.d, "--x");
            report.checks.push_back(laplace_check(p, mp, cfg, x, lams, short_grid.back()));
        } else if (name == "convergence") {
            if (f.mode != "l1" && f.mode != "l2") throw CLI::ValidationError("--mode", "must be l1 or l2");
            report.checks.push_back(convergence_series(p, need_spectral(name), cfg, pair, limit_grid,
                                                       f.mode == "l1" ? ConvergenceMode::L1
                                                                      : ConvergenceMode::L2));
        } else if (name == "direction") {
            report.checks.push_back(direction_residual(p, need_spectral(name), cfg, limit_grid));
        } else {
            throw CLI::ValidationError("--checks", "unknown check '" + name +
                                                       "' (martingale, moment, laplace, convergence, direction)");
        }
    }

    render_table(out, report);
    if (!f.out.empty()) {
        Sink sink(f.out, out);
        if (ends_with(f.out, ".json"))
            sink.os() << std::setprecision(17) << to_json(report).dump(2) << "\n";
        else
            render_table(sink.os(), report);
    }
    return report.all_pass() ? kOk : kFailed;
}

}  // namespace detail

/// Parses argv and dispatches to a subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-type CBI processes: exact moments, Riccati flows, simulation and verification", "cbi"};
    app.require_subcommand(1, 1);
    detail::Flags f;

    using Handler = std::function<int(const detail::Flags&, std::ostream&)>;
    std::map<CLI::App*, Handler> handlers;

    struct Accepts {
        bool t = false, dt = false, paths = false, seed = false, workers = false, pair = false,
             lambda = false, x = false, checks = false, mode = false;
    };
    auto add = [&](const char* name, const char* help, Accepts a, Handler h) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--model", f.model, "model file (JSON)")->required();
        sub->add_option("--out", f.out, "output path; format chosen by extension (.json or .csv)");
        if (a.t) {
            sub->add_option("--t", f.t, "single time");
            sub->add_option("--t-grid", f.t_grid, "comma-separated times");
        }
        if (a.dt) sub->add_option("--dt", f.dt, "simulation step (default 1e-3)");
        if (a.paths) sub->add_option("--paths", f.paths, "number of simulated paths");
        if (a.seed) sub->add_option("--seed", f.seed, "master seed (default 42)");
        if (a.workers) sub->add_option("--workers", f.workers, "worker threads (results do not depend on it)");
        if (a.pair) sub->add_option("--pair", f.pair, "eigenpair index, 0 = Perron");
        if (a.lambda) sub->add_option("--lambda", f.lambda, "Laplace argument(s), comma-separated, d values each");
        if (a.x) sub->add_option("--x", f.x, "initial state, comma-separated (default x0)");
        if (a.checks)
            sub->add_option("--checks", f.checks,
                            "comma-separated checks: martingale, moment, laplace, convergence, direction");
        if (a.mode) sub->add_option("--mode", f.mode, "convergence mode: l1 or l2")
                        ->check(CLI::IsMember({"l1", "l2"}));
        handlers[sub] = std::move(h);
    };

    add("validate", "check admissibility of a model file", {}, detail::cmd_validate);
    add("spectral", "print B_tilde, beta_tilde, s, Perron vectors, eigenpairs and class", {},
        detail::cmd_spectral);
    add("mean", "print E X_t over --t / --t-grid", {.t = true}, detail::cmd_mean);
    add("second-moment", "print E|<v,X_t>|^2 for eigenpair --pair", {.t = true, .pair = true},
        detail::cmd_second_moment);
    add("laplace", "print E exp(-<lambda,X_t>)", {.t = true, .lambda = true, .x = true},
        detail::cmd_laplace);
    add("simulate", "simulate a trajectory (--paths 1) or an ensemble, CSV output",
        {.t = true, .dt = true, .paths = true, .seed = true, .workers = true, .pair = true},
        detail::cmd_simulate);
    add("verify", "run Monte Carlo checks and write a verification report",
        {.t = true, .dt = true, .paths = true, .seed = true, .workers = true, .pair = true,
         .lambda = true, .x = true, .checks = true, .mode = true},
        detail::cmd_verify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    try {
        for (auto& [sub, handler] : handlers)
            if (sub->parsed()) return handler(f, out);
    } catch (const CLI::Error& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace cbi::cli
