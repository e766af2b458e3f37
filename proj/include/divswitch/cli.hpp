#pragma once

// Command-line front end: validate / solve / simulate / compare.
//
// Exit codes: 0 success, 1 configuration or validation failure (including
// bad or conflicting flags), 2 numerical failure.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "divswitch/config.hpp"
#include "divswitch/errors.hpp"
#include "divswitch/fixedpoint.hpp"
#include "divswitch/format.hpp"
#include "divswitch/model.hpp"
#include "divswitch/parallel.hpp"
#include "divswitch/simulator.hpp"

namespace divswitch::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kSuccess = 0, kInvalid = 1, kNumerical = 2 };

/// Input rejected after parsing (bad flag values, missing thresholds...).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Validation failed; the report has already been written.
class ValidationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
    return os.str();
}

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Options {
    std::string command;
    std::string config;
    std::string out_dir = ".";
    std::string x_max;
    double tol = 0.0;
    std::size_t grid_n = 0;
    std::size_t paths = 0;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::vector<double> thresholds;
    std::string summary;
    std::vector<double> x0{0.0};
    std::string regime;
    std::vector<double> scales{0.5, 0.75, 1.25, 1.5};
    bool emit_plot_data = false;

    bool has_tol = false, has_grid_n = false, has_x_max = false, has_paths = false, has_dt = false,
         has_horizon = false, has_seed = false, has_thresholds = false;
};

class Session {
public:
    Session(Options opt, std::ostream& out) : opt_(std::move(opt)), out_(out) {}

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        started_ = utc_timestamp();
        std::filesystem::create_directories(opt_.out_dir);
        auto finish = [&](const std::string& status) {
            wall_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            status_ = status;
            write_manifest();
        };
        try {
            load();
            if (opt_.command == "validate") {
                do_validate();
            } else if (opt_.command == "solve") {
                do_solve();
            } else if (opt_.command == "simulate") {
                do_simulate();
            } else {
                do_compare();
            }
        } catch (const ConfigError& e) {
            // A document rejected by build_model still gets a report.
            if (opt_.command == "validate" && !loaded_) {
                write_json("validation_report.json",
                           Json{{"pass", false},
                                {"violations", Json::array({Json{{"rule", e.rule()},
                                                                 {"regime", nullptr},
                                                                 {"message", e.what()}}})}});
            }
            finish(std::string("failed: ") + e.what());
            throw;
        } catch (const std::exception& e) {
            finish(std::string("failed: ") + e.what());
            throw;
        }
        finish("ok");
        return kSuccess;
    }

    std::vector<std::string> files() const { return files_; }

private:
    void load() {
        text_ = read_text_file(opt_.config);
        hash_ = sha256_hex(text_);
        const Json doc = parse_json_text(text_, opt_.config);
        cfg_ = parse_config(doc);
        auto& n = cfg_.numerics;
        if (opt_.has_tol) n.tol = opt_.tol;
        if (opt_.has_grid_n) n.grid_n = opt_.grid_n;
        if (opt_.has_x_max) {
            if (opt_.x_max == "auto") {
                n.x_max.reset();
            } else {
                double v = 0.0;
                try {
                    v = parse_double(opt_.x_max);
                } catch (const std::exception&) {
                    throw UsageError("--x-max must be a number or 'auto'");
                }
                if (!(v > 0.0)) throw UsageError("--x-max must be positive");
                n.x_max = v;
            }
        }
        if (!(n.tol > 0.0)) throw UsageError("--tol must be positive");
        if (n.grid_n < 2) throw UsageError("--grid-n must be at least 2");
        auto& s = cfg_.simulation;
        if (opt_.has_paths) s.paths = opt_.paths;
        if (opt_.has_dt) s.dt = opt_.dt;
        if (opt_.has_horizon) s.horizon = opt_.horizon;
        if (opt_.has_seed) s.seed = opt_.seed;
        if (s.paths < 1) throw UsageError("--paths must be at least 1");
        if (!(s.dt > 0.0)) throw UsageError("--dt must be positive");
        if (s.horizon && !(*s.horizon > 0.0)) throw UsageError("--horizon must be positive");
        loaded_ = true;
    }

    static std::string regime_label(const RegimeModel& m, const std::optional<std::size_t>& i) {
        return i ? m.regimes.at(*i).name : std::string();
    }

    ValidationReport validate() {
        const ValidationReport rep = validate_model(cfg_.model, resolved_x_max(cfg_), cfg_.numerics.grid_n);
        Json v = Json::array();
        for (const auto& x : rep.violations) {
            Json e{{"rule", x.rule}, {"x", x.x}, {"measured", x.measured}, {"message", x.message}};
            e["regime"] = x.regime ? Json(regime_label(cfg_.model, x.regime)) : Json(nullptr);
            v.push_back(std::move(e));
        }
        Json fam = Json::object();
        for (std::size_t i = 0; i < cfg_.model.size() && i < rep.families.size(); ++i)
            fam[cfg_.model.regimes[i].name] = rep.families[i];
        write_json("validation_report.json", Json{{"pass", rep.pass},
                                                  {"violations", v},
                                                  {"families", fam},
                                                  {"x_max", resolved_x_max(cfg_)},
                                                  {"grid_n", cfg_.numerics.grid_n}});
        return rep;
    }

    void require_valid() {
        const ValidationReport rep = validate();
        if (!rep.pass) {
            const auto& v = rep.violations.front();
            throw ValidationFailed("model validation failed: " + v.rule + ": " + v.message);
        }
    }

    void do_validate() {
        const ValidationReport rep = validate();
        out_ << (rep.pass ? "validation passed" : "validation failed") << " (" << rep.violations.size()
             << " violations)\n";
        for (const auto& v : rep.violations) out_ << "  " << v.rule << ": " << v.message << '\n';
        if (!rep.pass) throw ValidationFailed("model validation failed");
    }

    ValueSolution solve() {
        FixedPointOptions fp;
        fp.tol = cfg_.numerics.tol;
        fp.p.threshold.b_tol = cfg_.numerics.b_tol;
        fp.p.workers = resolve_workers(opt_.workers);
        return solve_value_function(cfg_.model, Grid(resolved_x_max(cfg_), cfg_.numerics.grid_n), fp);
    }

    void do_solve() {
        require_valid();
        const ValueSolution sol = solve();
        const RegimeModel& m = cfg_.model;
        const HjbAudit audit = hjb_audit(m, sol.v, sol.thresholds);
        const Grid& g = sol.v.grid();

        std::vector<std::string> header{"x"};
        std::vector<std::vector<double>> cols;
        std::vector<double> xs(g.nodes());
        for (std::size_t k = 0; k < g.nodes(); ++k) xs[k] = g.x(k);
        cols.push_back(xs);
        for (std::size_t i = 0; i < m.size(); ++i) {
            header.push_back("V_" + m.regimes[i].name);
            cols.push_back(sol.v[i]);
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            header.push_back("dV_" + m.regimes[i].name);
            cols.push_back(sol.slopes[i]);
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            header.push_back("residual_" + m.regimes[i].name);
            cols.push_back(audit.residual[i]);
        }
        std::ostringstream csv;
        write_csv(csv, header, cols);
        write_text("value_function.csv", csv.str());

        Json th = Json::array();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto& t = sol.thresholds[i];
            th.push_back({{"regime", m.regimes[i].name},
                          {"b", t.b},
                          {"node", t.node},
                          {"boundary_case", to_string(t.boundary_case)},
                          {"slope_at_b", t.slope_at_b},
                          {"V_at_0", sol.v.at(0, i)}});
        }
        write_json("summary.json",
                   Json{{"thresholds", th},
                        {"iterations", sol.iterations},
                        {"upper_iterations", sol.upper_iterations},
                        {"kappa", sol.kappa},
                        {"last_step", sol.last_step},
                        {"error_bound", sol.error_bound},
                        {"bracket_gap", sol.bracket_gap},
                        {"confirmation_sweeps", sol.confirmation_sweeps},
                        {"class_D", sol.class_report.in_D},
                        {"hjb", {{"max_abs_residual", audit.max_abs_residual},
                                 {"region_violations", audit.region_violations}}},
                        {"value_scale", value_scale(m)},
                        {"grid", {{"x_max", g.x_max()}, {"cells", g.cells()}, {"h", g.h()}}},
                        {"wall_seconds", sol.wall_seconds}});

        if (opt_.emit_plot_data) {
            std::ostringstream pd;
            pd << "series,regime,x,value\n";
            const std::pair<const char*, const std::vector<std::vector<double>>*> series[] = {
                {"V", nullptr}, {"dV", &sol.slopes}, {"residual", &audit.residual}};
            for (const auto& [name, data] : series)
                for (std::size_t i = 0; i < m.size(); ++i)
                    for (std::size_t k = 0; k < g.nodes(); ++k)
                        pd << name << ',' << m.regimes[i].name << ',' << format_double(g.x(k)) << ','
                           << format_double(data ? (*data)[i][k] : sol.v.at(k, i)) << '\n';
            write_text("plot_data.csv", pd.str());
        }
        out_ << "solved in " << sol.iterations << " iterations; thresholds:";
        for (std::size_t i = 0; i < m.size(); ++i) out_ << ' ' << m.regimes[i].name << '=' << sol.thresholds[i].b;
        out_ << '\n';
    }

    std::size_t regime_index() const {
        if (opt_.regime.empty()) return 0;
        if (auto i = cfg_.model.find_regime(opt_.regime)) return *i;
        throw UsageError("unknown regime '" + opt_.regime + "'");
    }

    StrategySpec thresholds_from_flags() const {
        const std::size_t m = cfg_.model.size();
        StrategySpec s;
        if (opt_.has_thresholds) {
            s.thresholds = opt_.thresholds;
        } else {
            const Json doc = parse_json_text(read_text_file(opt_.summary), opt_.summary);
            if (!doc.contains("thresholds") || !doc.at("thresholds").is_array())
                throw UsageError("summary '" + opt_.summary + "' has no thresholds");
            s.thresholds.assign(m, -1.0);
            for (const auto& t : doc.at("thresholds")) {
                const auto i = cfg_.model.find_regime(t.at("regime").get<std::string>());
                if (!i) throw UsageError("summary regime '" + t.at("regime").get<std::string>() + "' not in config");
                s.thresholds[*i] = t.at("b").get<double>();
            }
        }
        if (s.thresholds.size() != m)
            throw UsageError("expected " + std::to_string(m) + " thresholds, got " + std::to_string(s.thresholds.size()));
        for (double b : s.thresholds)
            if (!(b >= 0.0) || !std::isfinite(b)) throw UsageError("thresholds must be finite and >= 0");
        return s;
    }

    SimParams sim_params() const {
        SimParams p;
        p.paths = cfg_.simulation.paths;
        p.dt = cfg_.simulation.dt;
        p.horizon = resolved_horizon(cfg_);
        p.seed = cfg_.simulation.seed;
        p.workers = resolve_workers(opt_.workers);
        return p;
    }

    std::vector<std::string> threshold_headers() const {
        std::vector<std::string> h;
        for (const auto& r : cfg_.model.regimes) h.push_back("b_" + r.name);
        return h;
    }

    void do_simulate() {
        if (!opt_.has_thresholds && opt_.summary.empty())
            throw UsageError("simulate needs --thresholds or --summary");
        require_valid();
        const StrategySpec s = thresholds_from_flags();
        const std::size_t i0 = regime_index();
        const SimParams p = sim_params();
        std::ostringstream csv;
        csv << "x0,regime,paths,dt,horizon,seed";
        for (const auto& h : threshold_headers()) csv << ',' << h;
        csv << ",mean,std_error,tail_bias_bound,tail_bias_dividends,tail_bias_injections\n";
        for (double x0 : opt_.x0) {
            const SimEstimate e = simulate_return(cfg_.model, s, x0, i0, p);
            csv << format_double(x0) << ',' << cfg_.model.regimes[i0].name << ',' << e.paths << ','
                << format_double(e.dt) << ',' << format_double(e.horizon) << ',' << p.seed;
            for (double b : s.thresholds) csv << ',' << format_double(b);
            csv << ',' << format_double(e.mean) << ',' << format_double(e.std_error) << ','
                << format_double(e.tail_bias_bound) << ',' << format_double(e.tail_bias_dividends) << ','
                << format_double(e.tail_bias_injections) << '\n';
            out_ << "x0=" << x0 << " mean=" << e.mean << " se=" << e.std_error << '\n';
        }
        write_text("simulation.csv", csv.str());
    }

    void do_compare() {
        require_valid();
        StrategySpec optimal;
        if (opt_.has_thresholds || !opt_.summary.empty()) {
            optimal = thresholds_from_flags();
        } else {
            optimal.thresholds.clear();
            for (const auto& t : solve().thresholds) optimal.thresholds.push_back(t.b);
        }
        if (opt_.x0.size() != 1) throw UsageError("compare takes a single --x0");
        for (double s : opt_.scales)
            if (!(s >= 0.0) || !std::isfinite(s)) throw UsageError("--scales must be finite and >= 0");
        const auto pert = scaled_perturbations(optimal, opt_.scales, true);
        const std::size_t i0 = regime_index();
        const SimParams p = sim_params();
        const DominanceReport rep = compare_strategies(cfg_.model, optimal, pert, opt_.x0.front(), i0, p);

        std::ostringstream csv;
        csv << "label";
        for (const auto& h : threshold_headers()) csv << ',' << h;
        csv << ",mean,std_error,tail_bias_bound,diff_mean,diff_std_error,verdict\n";
        for (const auto& r : rep.rows) {
            csv << r.label;
            for (double b : r.thresholds) csv << ',' << format_double(b);
            csv << ',' << format_double(r.estimate.mean) << ',' << format_double(r.estimate.std_error) << ','
                << format_double(r.estimate.tail_bias_bound) << ',' << format_double(r.diff_mean) << ','
                << format_double(r.diff_std_error) << ',' << to_string(r.verdict) << '\n';
        }
        write_text("dominance.csv", csv.str());
        if (opt_.emit_plot_data) {
            std::ostringstream pd;
            pd << "label,statistic,value\n";
            for (const auto& r : rep.rows) {
                const double lo = r.estimate.mean - 3.0 * r.estimate.std_error;
                const double hi = r.estimate.mean + 3.0 * r.estimate.std_error;
                const std::pair<const char*, double> stats[] = {
                    {"mean", r.estimate.mean}, {"std_error", r.estimate.std_error}, {"lower_3se", lo}, {"upper_3se", hi}};
                for (const auto& [name, v] : stats) pd << r.label << ',' << name << ',' << format_double(v) << '\n';
            }
            write_text("plot_data.csv", pd.str());
        }
        out_ << rep.violations << " dominance violations over " << pert.size() << " perturbations\n";
    }

    std::filesystem::path path_of(const std::string& name) const { return std::filesystem::path(opt_.out_dir) / name; }

    void write_text(const std::string& name, const std::string& body) {
        std::ofstream f(path_of(name), std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write '" + path_of(name).string() + "'");
        f << body;
        if (!f) throw std::runtime_error("write failed for '" + path_of(name).string() + "'");
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }

    void write_json(const std::string& name, const Json& j) { write_text(name, j.dump(2) + "\n"); }

    void write_manifest() {
        Json m{{"command", opt_.command},
               {"config_path", opt_.config},
               {"config_sha256", hash_},
               {"status", status_},
               {"out_dir", opt_.out_dir},
               {"started_at", started_},
               {"wall_seconds", wall_},
               {"version", kVersion},
               {"defaults", defaults_to_json()}};
        if (loaded_) {
            m["numerics"] = numerics_to_json(cfg_.numerics, resolved_x_max(cfg_));
            if (opt_.command == "simulate" || opt_.command == "compare")
                m["simulation"] = simulation_to_json(cfg_.simulation, resolved_horizon(cfg_));
        }
        std::vector<std::string> listed = files_;
        listed.push_back("manifest.json");
        m["files"] = listed;
        write_json("manifest.json", m);
    }

    Options opt_;
    std::ostream& out_;
    std::string text_, hash_, started_, status_;
    Config cfg_;
    bool loaded_ = false;
    double wall_ = 0.0;
    std::vector<std::string> files_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Optimal dividend thresholds for regime-switching surplus models"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1, 1);

    Options o;
    auto common = [&o](CLI::App* sc, bool sim) {
        sc->add_option("--config", o.config, "JSON configuration file")->required();
        sc->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
        sc->add_option("--tol", o.tol, "Fixed-point tolerance");
        sc->add_option("--grid-n", o.grid_n, "Number of grid cells");
        sc->add_option("--x-max", o.x_max, "Domain length or 'auto'");
        sc->add_option("--workers", o.workers, "Worker threads (0 = hardware)");
        if (!sim) return;
        sc->add_option("--paths", o.paths, "Monte Carlo paths");
        sc->add_option("--dt", o.dt, "Euler step");
        sc->add_option("--horizon", o.horizon, "Simulation horizon");
        sc->add_option("--seed", o.seed, "Random seed");
        sc->add_option("--thresholds", o.thresholds, "Per-regime thresholds")->delimiter(',');
        sc->add_option("--summary", o.summary, "summary.json of a previous solve");
        sc->add_option("--x0", o.x0, "Initial surplus")->delimiter(',');
        sc->add_option("--regime", o.regime, "Initial regime name");
    };
    CLI::App* validate = app.add_subcommand("validate", "Check model assumptions");
    CLI::App* solve = app.add_subcommand("solve", "Compute the value function and thresholds");
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo return of a threshold strategy");
    CLI::App* compare = app.add_subcommand("compare", "Optimal thresholds against scaled perturbations");
    common(validate, false);
    common(solve, false);
    common(simulate, true);
    common(compare, true);
    solve->add_flag("--emit-plot-data", o.emit_plot_data, "Write plot_data.csv in long format");
    compare->add_flag("--emit-plot-data", o.emit_plot_data, "Write plot_data.csv in long format");
    compare->add_option("--scales", o.scales, "Threshold scale factors")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInvalid;
    }
    for (CLI::App* sc : {validate, solve, simulate, compare})
        if (sc->parsed()) {
            o.command = sc->get_name();
            o.has_tol = sc->count("--tol") > 0;
            o.has_grid_n = sc->count("--grid-n") > 0;
            o.has_x_max = sc->count("--x-max") > 0;
            if (sc == simulate || sc == compare) {
                o.has_paths = sc->count("--paths") > 0;
                o.has_dt = sc->count("--dt") > 0;
                o.has_horizon = sc->count("--horizon") > 0;
                o.has_seed = sc->count("--seed") > 0;
                o.has_thresholds = sc->count("--thresholds") > 0;
                if (o.has_thresholds && sc->count("--summary") > 0) {
                    err << "error: --thresholds and --summary are mutually exclusive\n";
                    return kInvalid;
                }
            }
        }

    try {
        Session session(o, out);
        return session.run();
    } catch (const ValidationFailed& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"divswitch"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace divswitch::cli
