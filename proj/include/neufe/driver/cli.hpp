#pragma once

// Command-line front end. Every subcommand reads the same key=value config,
// writes its files under output_dir and finishes with a manifest.
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "neufe/driver/config.hpp"
#include "neufe/driver/csv.hpp"
#include "neufe/driver/manifest.hpp"
#include "neufe/driver/solvers.hpp"
#include "neufe/driver/studies.hpp"
#include "neufe/field_io.hpp"

namespace neufe::driver {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_numerical = 2 };

namespace cli_detail {

inline std::string mms_error_cell(const RunConfig& c, const NodalField& u) {
    if (c.is_kl()) return "";
    const int nd = c.ndim();
    return format_real(l2_error(u, [nd](const Point& x) { return mms_exact(x, nd); }));
}

inline void print_table(std::ostream& out, const CsvTable& t) {
    write_csv_row(out, t.header);
    for (const auto& r : t.rows) write_csv_row(out, r);
}

inline int run_solve_instance(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const Instance inst = make_instance(c, c.nel);
    save_field(o.path("input.neufe1"), inst.input);
    InstanceResult r;
    try {
        r = solve_instance(c, inst);
    } catch (const TrainingDiverged& e) {
        nnet::save_checkpoint(o.path("checkpoint_last_good.ckpt"), c.net, e.last_good);
        throw;
    }
    const NodalField ref = cg_solve(build_system(inst.problem), c.cg_tol, c.cg_max_iter).u;
    save_field(o.path("solution.neufe1"), r.u);
    save_csv(o.path("train_log.csv"), r.log);
    nnet::save_checkpoint(o.path("checkpoint.ckpt"), c.net, r.params);
    CsvTable s;
    s.header = {"epochs", "converged", "J_final", "J_ref", "rel_l2_vs_ref", "energy_error", "l2_error"};
    s.add_row(csv_row(r.epochs, r.converged ? "true" : "false", r.loss, energy(inst.problem, ref),
                      relative_l2(r.u, ref), energy_norm(inst.problem, difference(r.u, ref)), mms_error_cell(c, r.u)));
    save_csv(o.path("summary.csv"), s);
    print_table(out, s);
    return exit_ok;
}

inline int run_solve_direct(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const Instance inst = make_instance(c, c.nel);
    const DirectResult r = solve_direct(c, inst);
    save_field(o.path("solution.neufe1"), r.u);
    save_csv(o.path("direct_log.csv"), r.log);
    CsvTable s;
    s.header = {"epochs", "converged", "J_final", "J_ref", "energy_error", "max_identity_defect", "l2_error"};
    s.add_row(csv_row(r.epochs, r.converged ? "true" : "false", r.J, r.J_ref, r.energy_error, r.max_identity_defect,
                      mms_error_cell(c, r.u)));
    save_csv(o.path("summary.csv"), s);
    print_table(out, s);
    return exit_ok;
}

inline int run_train_parametric(const RunConfig& c, OutputSet& o, std::ostream& out) {
    ParametricResult r;
    try {
        r = solve_parametric(c, [&](long epoch, const nnet::NetParams& p) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_epoch_%06ld.ckpt", epoch);
            nnet::save_checkpoint(o.path(name), c.net, p);
        });
    } catch (const TrainingDiverged& e) {
        nnet::save_checkpoint(o.path("checkpoint_last_good.ckpt"), c.net, e.last_good);
        throw;
    }
    nnet::save_checkpoint(o.path("checkpoint.ckpt"), c.net, r.params);
    save_csv(o.path("train_log.csv"), r.log);
    save_csv(o.path("heldout.csv"), r.heldout);
    CsvTable s;
    s.header = {"epochs", "converged", "final_batch_loss", "heldout_median_rel_l2"};
    s.add_row(csv_row(r.epochs, r.converged ? "true" : "false", parse_real(r.log.rows.back().at(2)), r.median_rel_l2));
    save_csv(o.path("summary.csv"), s);
    print_table(out, s);
    return exit_ok;
}

inline int run_infer(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const nnet::Checkpoint ck = nnet::load_checkpoint(c.checkpoint_path);
    NodalField nu = c.infer_nu.empty() ? make_instance(c, c.nel).input : load_field(c.infer_nu);
    const NodalField u = infer(ck, nu);
    save_field(o.path("solution.neufe1"), u);
    out << "wrote " << o.path("solution.neufe1") << '\n';
    return exit_ok;
}

inline int run_reference(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const Instance inst = make_instance(c, c.nel);
    const CgResult r = cg_solve(build_system(inst.problem), c.cg_tol, c.cg_max_iter);
    save_field(o.path("solution.neufe1"), r.u);
    if (c.is_kl()) save_field(o.path("nu.neufe1"), inst.input);
    CsvTable s;
    s.header = {"residual", "iterations", "J", "l2_error"};
    s.add_row(csv_row(r.residual, r.iterations, energy(inst.problem, r.u), mms_error_cell(c, r.u)));
    save_csv(o.path("reference.csv"), s);
    print_table(out, s);
    return exit_ok;
}

inline int run_converge(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const ConvergenceRecord r = convergence_study(c);
    const CsvTable t = to_csv(r);
    save_csv(o.path("converge.csv"), t);
    print_table(out, t);
    for (const auto& e : r.entries) {
        if (e.status != "ok") return exit_numerical;
    }
    return exit_ok;
}

inline int run_stats(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const nnet::Checkpoint ck = nnet::load_checkpoint(c.checkpoint_path);
    const StatsRecord r = stats_study(c, ck);
    save_csv(o.path("histograms.csv"), histogram_table(r));
    save_csv(o.path("query_points.csv"), summary_table(r));
    save_csv(o.path("line_cuts.csv"), r.line_cuts);
    save_field(o.path("mean_net.neufe1"), r.mean_net);
    save_field(o.path("mean_ref.neufe1"), r.mean_ref);
    save_field(o.path("std_net.neufe1"), r.std_net);
    save_field(o.path("std_ref.neufe1"), r.std_ref);
    CsvTable s;
    s.header = {"n_samples", "max_w1", "mean_rel_l2", "std_rel_l2"};
    s.add_row(csv_row(r.n_samples, r.max_w1, r.mean_rel_l2, r.std_rel_l2));
    save_csv(o.path("stats_summary.csv"), s);
    print_table(out, s);
    return exit_ok;
}

/// Emits the training tuples (same seed stream as train-parametric) and the basis.
inline int run_kl_sample(const RunConfig& c, OutputSet& o, std::ostream& out) {
    const kl::KLBasis basis = make_basis(c);
    const auto samples = kl::sample_coeffs(c.kl.n_samples, c.kl.m, c.kl.lo, c.kl.hi, derive_seed(c.seed, Stream::train));
    CsvTable t;
    t.header = {"sample"};
    for (int i = 1; i <= c.kl.m; ++i) t.header.push_back("a" + std::to_string(i));
    for (std::size_t s = 0; s < samples.size(); ++s) {
        std::vector<std::string> row{std::to_string(s)};
        for (double a : samples[s].a) row.push_back(format_real(a));
        t.add_row(row);
    }
    save_csv(o.path("coeffs.csv"), t);
    CsvTable b;
    b.header = {"mode", "omega", "lambda", "parity"};
    for (std::size_t i = 0; i < basis.modes.size(); ++i) {
        const auto& m = basis.modes[i];
        b.add_row(csv_row(i + 1, m.omega, m.lambda, m.parity == kl::Parity::even ? "even" : "odd"));
    }
    save_csv(o.path("basis.csv"), b);
    if (c.kl.dump_nu) {
        const Grid grid = make_grid(c.ndim(), c.nel);
        for (std::size_t s = 0; s < samples.size(); ++s) {
            char name[64];
            std::snprintf(name, sizeof name, "nu_%06zu.neufe1", s);
            save_field(o.path(name), kl::build_nu(basis, samples[s], grid));
        }
    }
    out << "wrote " << samples.size() << " samples to " << o.path("coeffs.csv") << '\n';
    return exit_ok;
}

struct SubcommandInfo {
    const char* name;
    Command cmd;
    const char* help;
    int (*run)(const RunConfig&, OutputSet&, std::ostream&);
};

inline const std::vector<SubcommandInfo>& subcommands() {
    static const std::vector<SubcommandInfo> list{
        {"solve-instance", Command::solve_instance, "train a network on one problem instance", run_solve_instance},
        {"solve-direct", Command::solve_direct, "minimise the energy directly over nodal values", run_solve_direct},
        {"train-parametric", Command::train_parametric, "train a network over sampled KL diffusivities",
         run_train_parametric},
        {"infer", Command::infer, "evaluate a trained checkpoint on one diffusivity", run_infer},
        {"reference", Command::reference, "solve with the conjugate-gradient reference solver", run_reference},
        {"converge", Command::converge, "mesh convergence study on the manufactured problem", run_converge},
        {"stats", Command::stats, "sampling statistics: network vs reference solver", run_stats},
        {"kl-sample", Command::kl_sample, "emit sampled KL coefficients and the basis", run_kl_sample},
    };
    return list;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"neufe: finite-element energy minimisation with neural and direct solvers"};
    app.require_subcommand(1);
    struct Parsed {
        std::string config;
        std::vector<std::string> sets;
    };
    std::vector<Parsed> parsed(cli_detail::subcommands().size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < cli_detail::subcommands().size(); ++i) {
        const auto& info = cli_detail::subcommands()[i];
        CLI::App* s = app.add_subcommand(info.name, info.help);
        s->add_option("-c,--config", parsed[i].config, "key = value configuration file");
        s->add_option("-s,--set", parsed[i].sets, "override one setting, key=value")->allow_extra_args(false);
        subs.push_back(s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "neufe: " << e.what() << '\n' << "run 'neufe --help' for usage\n";
        return exit_usage;
    }

    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        const auto& info = cli_detail::subcommands()[i];
        RunConfig cfg;
        try {
            if (!parsed[i].config.empty()) cfg = load_config(parsed[i].config);
            for (const auto& s : parsed[i].sets) apply_override(cfg, s);
            resolve(cfg, info.cmd);
        } catch (const std::exception& e) {
            err << "neufe " << info.name << ": " << e.what() << '\n';
            return exit_usage;
        }
        OutputSet outputs(cfg.output_dir);
        int code = exit_ok;
        try {
            code = info.run(cfg, outputs, out);
        } catch (const NumericalError& e) {
            err << "neufe " << info.name << ": numerical failure: " << e.what() << '\n';
            code = exit_numerical;
        } catch (const std::exception& e) {
            err << "neufe " << info.name << ": " << e.what() << '\n';
            code = exit_usage;
        }
        try {
            save_manifest(info.name, cfg, outputs);
        } catch (const std::exception& e) {
            err << "neufe " << info.name << ": " << e.what() << '\n';
            if (code == exit_ok) code = exit_usage;
        }
        return code;
    }
    return exit_usage;
}

}  // namespace neufe::driver
