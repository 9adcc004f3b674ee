// Batch front-end: solve / simulate / validate pipelines plus the bundled
// example regression set.  Exit codes: 0 ok, 2 config error, 3 numerical
// failure, 4 unsupported case, 5 regression mismatch.

#include <mmbm/mmbm.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mmbm;

#ifndef MMBM_CONFIG_DIR
#define MMBM_CONFIG_DIR "configs"
#endif

namespace {

struct Options {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int grid_n = 0;
    bool quiet = false;
};

double elapsed_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

bool wants(const ExperimentConfig& cfg, const std::string& what) {
    return std::find(cfg.outputs.begin(), cfg.outputs.end(), what) !=
           cfg.outputs.end();
}

ExperimentConfig load_with_overrides(const Options& opt) {
    ExperimentConfig cfg = load_config(opt.config);
    if (opt.grid_n > 0) cfg.grid = uniform_grid(cfg.model.b, opt.grid_n);
    if (opt.seed_set) cfg.sim.seed = opt.seed;
    return cfg;
}

std::string out_path(const Options& opt, const std::string& name) {
    fs::create_directories(opt.out);
    return (fs::path(opt.out) / name).string();
}

Json matrix_with_se(const Matrix& est, const Matrix& se) {
    return Json{{"estimate", to_json(est)}, {"se", to_json(se)}};
}

int cmd_solve(const Options& opt) {
    ExperimentConfig cfg = load_with_overrides(opt);
    StationaryDistribution dist = assemble(cfg.model);

    if (wants(cfg, "cdf")) {
        std::vector<std::string> header{"x"};
        for (Eigen::Index j = 0; j < dist.up_phases(); ++j)
            header.push_back("up_" + std::to_string(j + 1));
        for (Eigen::Index j = 0; j < dist.down_phases(); ++j)
            header.push_back("down_" + std::to_string(j + 1));
        header.push_back("total");
        std::vector<std::vector<std::string>> rows;
        for (double x : cfg.grid) {
            RowVector pi = cdf_eval(dist, x);
            std::vector<std::string> row{format_double(x)};
            for (Eigen::Index j = 0; j < pi.size(); ++j)
                row.push_back(format_double(pi(j)));
            row.push_back(format_double(pi.sum()));
            rows.push_back(std::move(row));
        }
        write_csv(out_path(opt, "cdf.csv"), header, rows);
    }

    Json summary{{"schema_version", 1},
                 {"command", "solve"},
                 {"b", dist.b},
                 {"nu_u", to_json(dist.nu_u)},
                 {"nu_d", to_json(dist.nu_d)},
                 {"normalizer", dist.normalizer},
                 {"warnings", dist.warnings}};
    if (wants(cfg, "up_fraction")) summary["up_fraction"] = up_leg_fraction(dist);
    if (wants(cfg, "percentiles")) {
        Json ps = Json::array();
        for (double p : cfg.percentile_levels)
            ps.push_back(Json{{"p", p}, {"x", quantile(dist, p)}});
        summary["percentiles"] = ps;
    }
    if (wants(cfg, "excursions"))
        summary["excursions"] = Json{{"up_times", to_json(dist.up_leg_times)},
                                     {"down_times", to_json(dist.down_leg_times)}};
    if (wants(cfg, "passage"))
        summary["passage"] = Json{{"H0_up", to_json(dist.H0_up)},
                                  {"Hb_down", to_json(dist.Hb_down)}};
    write_json_file(out_path(opt, "summary.json"), summary);

    if (!opt.quiet) {
        std::cout << "wrote summary.json";
        if (wants(cfg, "cdf")) std::cout << ", cdf.csv";
        std::cout << " to " << opt.out << "\n";
        if (wants(cfg, "up_fraction"))
            std::cout << "up_fraction = " << up_leg_fraction(dist) << "\n";
    }
    return 0;
}

int cmd_simulate(const Options& opt) {
    ExperimentConfig cfg = load_with_overrides(opt);
    for (double x : cfg.grid)
        if (x > 0.0) cfg.sim.grid.push_back(x);

    SimReport rep = simulate(cfg.model, cfg.sim);

    Json j{{"schema_version", 1},
           {"command", "simulate"},
           {"seed", rep.seed},
           {"dt", rep.dt},
           {"cycles", rep.cycles},
           {"hit_detection", rep.hit_detection},
           {"grid", rep.grid},
           {"cdf", to_json(rep.cdf)},
           {"cdf_se", to_json(rep.cdf_se)},
           {"total_cdf", to_json(rep.total_cdf)},
           {"total_cdf_se", to_json(rep.total_cdf_se)},
           {"H0", matrix_with_se(rep.H0_hat, rep.H0_se)},
           {"Hb", matrix_with_se(rep.Hb_hat, rep.Hb_se)},
           {"up_visits", to_json(rep.up_visits)},
           {"down_visits", to_json(rep.down_visits)},
           {"up_times", to_json(rep.up_times)},
           {"up_times_se", to_json(rep.up_times_se)},
           {"down_times", to_json(rep.down_times)},
           {"down_times_se", to_json(rep.down_times_se)},
           {"up_fraction", rep.up_fraction},
           {"up_fraction_se", rep.up_fraction_se},
           {"warnings", rep.warnings}};

    // Cross-check against the analytic pipeline where it applies.
    try {
        StationaryDistribution dist = assemble(cfg.model);
        Json rowsj = Json::array();
        bool all_within = true;
        for (size_t k = 0; k < rep.grid.size(); ++k) {
            const double ana = total_cdf(dist, rep.grid[k]);
            const double sim = rep.total_cdf(static_cast<Eigen::Index>(k));
            const double se = rep.total_cdf_se(static_cast<Eigen::Index>(k));
            const double z = se > 0.0 ? (sim - ana) / se : 0.0;
            if (std::abs(z) > 3.0) all_within = false;
            rowsj.push_back(Json{{"x", rep.grid[k]},
                                 {"analytic", ana},
                                 {"simulated", sim},
                                 {"se", json_number(se)},
                                 {"z", json_number(z)}});
        }
        const double zf = rep.up_fraction_se > 0.0
                              ? (rep.up_fraction - up_leg_fraction(dist)) /
                                    rep.up_fraction_se
                              : 0.0;
        if (std::abs(zf) > 3.0) all_within = false;
        j["comparison"] = Json{{"total_cdf", rowsj},
                               {"up_fraction",
                                Json{{"analytic", up_leg_fraction(dist)},
                                     {"simulated", rep.up_fraction},
                                     {"z", json_number(zf)}}},
                               {"within_3se", all_within}};
    } catch (const Error& e) {
        j["comparison"] = Json{{"skipped", e.what()}};
    }

    write_json_file(out_path(opt, "sim_report.json"), j);
    if (!opt.quiet)
        std::cout << "wrote sim_report.json (" << rep.cycles << " cycles, seed "
                  << rep.seed << ")\n";
    return 0;
}

int cmd_validate(const Options& opt) {
    ExperimentConfig cfg = load_with_overrides(opt);
    std::vector<double> lambdas =
        cfg.lambdas.empty() ? std::vector<double>{1e2, 1e3, 1e4} : cfg.lambdas;
    const double x = cfg.validate_x < 0.0 ? cfg.model.b / 2.0 : cfg.validate_x;

    // The oscillating-fluid approximation targets one parameter set; the
    // up-leg parameters drive the check.
    ConvergenceReport rep = convergence_check(cfg.model.up, cfg.model.b, x, lambdas);

    std::vector<std::string> header{"lambda", "error_up", "error_down", "order_up",
                                    "order_down"};
    std::vector<std::vector<std::string>> rows;
    for (size_t k = 0; k < rep.rows.size(); ++k) {
        const ConvergenceRow& r = rep.rows[k];
        rows.push_back({format_double(r.lambda), format_double(r.err_up),
                        format_double(r.err_down),
                        k == 0 ? "" : format_double(r.order_up),
                        k == 0 ? "" : format_double(r.order_down)});
    }
    write_csv(out_path(opt, "convergence.csv"), header, rows);

    if (!opt.quiet) {
        for (size_t k = 0; k < rep.rows.size(); ++k) {
            const ConvergenceRow& r = rep.rows[k];
            std::cout << "lambda " << r.lambda << ": error_up " << r.err_up
                      << " error_down " << r.err_down;
            if (k > 0)
                std::cout << " order " << r.order_up << " / " << r.order_down;
            std::cout << "\n";
        }
        std::cout << (rep.passed ? "PASS" : "FAIL")
                  << " (errors decrease, final within "
                  << rep.threshold * 100 << "% of excursion scale)\n";
    }
    return rep.passed ? 0 : 5;
}

double max_real_eigenvalue(const Matrix& K) {
    Eigen::EigenSolver<Matrix> es(K, false);
    return es.eigenvalues().real().maxCoeff();
}

double eval_quantity(const Json& chk, const StationaryDistribution& dist) {
    const std::string q = chk.at("quantity").get<std::string>();
    if (q == "up_fraction") return up_leg_fraction(dist);
    if (q == "percentile") return quantile(dist, chk.at("p").get<double>());
    if (q == "total_cdf") return total_cdf(dist, chk.at("x").get<double>());
    if (q == "excursion_time") {
        const int i = chk.at("phase").get<int>() - 1;
        return chk.at("leg").get<std::string>() == "up" ? dist.up_leg_times(i)
                                                        : dist.down_leg_times(i);
    }
    if (q == "H_entry") {
        const int i = chk.at("row").get<int>() - 1;
        const int j = chk.at("col").get<int>() - 1;
        return chk.at("leg").get<std::string>() == "up" ? dist.H0_up(i, j)
                                                        : dist.Hb_down(i, j);
    }
    if (q == "k_max_eig")
        return max_real_eigenvalue(chk.at("leg").get<std::string>() == "up"
                                       ? dist.up_kit.K
                                       : dist.down_kit.K);
    throw InvalidModel("expected_values: unknown quantity '" + q + "'");
}

std::string describe_check(const Json& chk) {
    const std::string q = chk.at("quantity").get<std::string>();
    std::string s = q;
    if (chk.contains("leg")) s += " " + chk["leg"].get<std::string>();
    if (chk.contains("p")) s += " p=" + format_double(chk["p"].get<double>());
    if (chk.contains("x")) s += " x=" + format_double(chk["x"].get<double>());
    if (chk.contains("phase")) s += " phase " + std::to_string(chk["phase"].get<int>());
    if (chk.contains("row"))
        s += " (" + std::to_string(chk["row"].get<int>()) + "," +
             std::to_string(chk["col"].get<int>()) + ")";
    return s;
}

int cmd_examples(const Options& opt) {
    // Model files named by the table are resolved next to it, so an
    // alternative table brings its own model directory.
    const fs::path table_path = opt.config.empty()
                                    ? fs::path(MMBM_CONFIG_DIR) / "expected_values.json"
                                    : fs::path(opt.config);
    const fs::path dir = table_path.parent_path();
    Json table = parse_json_file(table_path.string());

    int checks = 0, failures = 0;
    std::vector<std::string> offenders;
    const auto t0 = std::chrono::steady_clock::now();

    for (const Json& entry : table.at("models")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::string file = entry.at("config").get<std::string>();
        ExperimentConfig cfg = load_config((dir / file).string());
        StationaryDistribution dist = assemble(cfg.model);

        for (const Json& chk : entry.at("checks")) {
            const double expect = chk.at("expect").get<double>();
            const double tol = chk.at("tol").get<double>();
            const double got = eval_quantity(chk, dist);
            const bool ok = std::abs(got - expect) <= tol;
            ++checks;
            if (!ok) {
                ++failures;
                offenders.push_back(name + ": " + describe_check(chk));
            }
            if (!ok || !opt.quiet) {
                std::cout << (ok ? "[ OK ] " : "[FAIL] ") << name << "  "
                          << describe_check(chk) << " = " << got << " (expect "
                          << expect << " +/- " << tol << ")";
                if (chk.contains("reported"))
                    std::cout << " [reported elsewhere: "
                              << chk["reported"].get<double>() << "]";
                std::cout << "\n";
            }
        }
    }

    std::cout << checks << " checks, " << failures << " failures ("
              << elapsed_since(t0) << " s)\n";
    if (failures > 0) {
        std::cout << "offenders:\n";
        for (const std::string& s : offenders) std::cout << "  " << s << "\n";
        return 5;
    }
    return 0;
}

void add_common(CLI::App* sub, Options& opt, bool needs_config) {
    if (needs_config)
        sub->add_option("--config", opt.config, "experiment config (JSON)")
            ->required();
    else
        sub->add_option("--config", opt.config,
                        "alternative expected-value table (JSON)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "override simulation seed")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    sub->add_option("--grid", opt.grid_n, "override grid with n uniform levels");
    sub->add_flag("--quiet", opt.quiet, "suppress progress output");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-boundary Markov-modulated Brownian motion toolkit"};
    app.require_subcommand(1);

    Options opt;
    CLI::App* solve = app.add_subcommand(
        "solve", "stationary distribution, passage and sojourn summaries");
    CLI::App* simulate =
        app.add_subcommand("simulate", "regenerative Monte Carlo estimates");
    CLI::App* validate = app.add_subcommand(
        "validate", "fluid-approximation convergence check of the up leg");
    CLI::App* examples = app.add_subcommand(
        "examples", "run the bundled models against the expected-value table");
    add_common(solve, opt, true);
    add_common(simulate, opt, true);
    add_common(validate, opt, true);
    add_common(examples, opt, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(opt);
        if (simulate->parsed()) return cmd_simulate(opt);
        if (validate->parsed()) return cmd_validate(opt);
        return cmd_examples(opt);
    } catch (const InvalidModel& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedCase& e) {
        std::cerr << "unsupported case: " << e.what() << "\n";
        return 4;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
