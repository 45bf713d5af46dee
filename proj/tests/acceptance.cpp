// Acceptance runner: one PASS/FAIL line per criterion. With no arguments all
// criteria run; otherwise only the listed numbers (e.g. `neufe_acceptance 1 3`).
// Exit status is non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neufe/driver/cli.hpp"
#include "support/fd_check.hpp"

using namespace neufe;
using namespace neufe::driver;

namespace {

const std::string config_dir = NEUFE_CONFIG_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [x]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

RunConfig load(const std::string& name, Command cmd, const std::vector<std::string>& sets = {}) {
    RunConfig c = load_config(config_dir + "/" + name);
    for (const auto& s : sets) apply_override(c, s);
    resolve(c, cmd);
    return c;
}

RunConfig defaults(Command cmd, const std::vector<std::string>& sets) {
    RunConfig c;
    for (const auto& s : sets) apply_override(c, s);
    resolve(c, cmd);
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

NodalField random_admissible(const EnergyProblem& p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1, 1);
    NodalField u(p.grid);
    for (auto& v : u.data()) v = U(rng);
    return apply_dirichlet(u, p.mask);
}

EnergyProblem random_kl_problem(const Grid& g, std::uint64_t seed) {
    const kl::KLBasis b = kl::eigenpairs(0.5, 1.0, 6);
    return make_kl_problem(kl::build_nu(b, kl::sample_coeffs(1, 6, -std::sqrt(3.0), std::sqrt(3.0), seed).front(), g));
}

Outcome criterion1() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const ConvergenceRecord r = convergence_study(load("converge_direct.cfg", Command::converge));
    const double t = seconds_since(t0);
    bool ok = true;
    for (const auto& e : r.entries) ok = ok && e.status == "ok";
    o.check(ok, "all meshes solved");
    o.check(r.slope >= 1.9 && r.slope <= 2.1, "direct slope " + fmt("%.4f", r.slope));
    o.check(r.ref_slope >= 1.9 && r.ref_slope <= 2.1, "reference slope " + fmt("%.4f", r.ref_slope));
    o.check(t < 120.0, "time " + fmt("%.1f s", t));
    return o;
}

Outcome criterion2() {
    Outcome o;
    const Grid g = make_grid(2, 64);
    auto exact = [](const Point& x) { return mms_exact(x, 2); };
    const double n = l2_norm(interpolate(g, exact));
    o.check(std::abs(n - 0.5) <= 5e-4, "exact-solution norm " + fmt("%.6f", n));
    const double e = l2_error(reference_solution(make_mms_problem(g)), exact);
    o.check(e < 1e-3, "reference l2 error at h=1/64 " + fmt("%.3e", e));
    return o;
}

Outcome criterion3() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(3);
    for (int nd : {2, 3}) {
        const Grid g = make_grid(nd, nd == 2 ? 8 : 4);
        for (int which = 0; which < 2; ++which) {
            const EnergyProblem p = which == 0 ? make_mms_problem(g) : random_kl_problem(g, 30 + nd);
            const NodalField ref = reference_solution(p);
            const double jref = energy(p, ref);
            double worst = 0.0;
            for (int k = 0; k < 100; ++k) {
                const NodalField u = random_admissible(p, rng);
                const double en = energy_norm(p, difference(u, ref));
                worst = std::max(worst, std::abs(energy(p, u) - jref - 0.5 * en * en) / std::abs(jref));
            }
            o.check(worst <= 1e-9, std::string(which == 0 ? "mms" : "kl") + " " + std::to_string(nd) +
                                       "D worst " + fmt("%.2e", worst));
        }
    }
    const double t = seconds_since(t0);
    o.check(t < 10.0, "time " + fmt("%.1f s", t));
    return o;
}

Outcome criterion4() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    nnet::NetConfig c;
    c.depth = 1;
    c.base_channels = 4;
    c.seed = 4;
    {
        c.final_activation = nnet::Activation::identity;
        const EnergyProblem p = make_mms_problem(make_grid(2, 8));
        const auto r = testing::fd_check_params(c, p, *p.f, 50, 41);
        o.check(r.checked >= 50 && r.worst <= 1e-4,
                "mms params " + std::to_string(r.checked) + " checked, worst " + fmt("%.2e", r.worst));
    }
    {
        c.final_activation = nnet::Activation::sigmoid;
        const EnergyProblem p = random_kl_problem(make_grid(2, 8), 42);
        const auto r = testing::fd_check_params(c, p, *p.nu, 50, 42);
        o.check(r.checked >= 50 && r.worst <= 1e-4,
                "kl params " + std::to_string(r.checked) + " checked, worst " + fmt("%.2e", r.worst));
    }
    std::mt19937_64 rng(4);
    for (int which = 0; which < 2; ++which) {
        const Grid g = make_grid(2, 6);
        const EnergyProblem p = which == 0 ? make_mms_problem(g) : random_kl_problem(g, 43);
        const double w = testing::fd_check_nodal(p, random_admissible(p, rng));
        o.check(w <= 1e-6, std::string(which == 0 ? "mms" : "kl") + " nodal worst " + fmt("%.2e", w));
    }
    const double t = seconds_since(t0);
    o.check(t < 60.0, "time " + fmt("%.1f s", t));
    return o;
}

Outcome criterion5() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string zero = "kl.coeffs=0,0,0,0,0,0";
    double worst = 0.0;
    for (auto [nd, nel] : std::vector<std::pair<int, int>>{{2, 4}, {2, 8}, {2, 16}, {2, 32}, {2, 64}, {3, 4}, {3, 8}, {3, 16}}) {
        const RunConfig c = defaults(Command::reference, {nd == 2 ? "problem=kl2d" : "problem=kl3d", zero});
        const Instance inst = make_instance(c, nel);
        const NodalField u = cg_solve(build_system(inst.problem), c.cg_tol, c.cg_max_iter).u;
        const NodalField exact = interpolate(u.grid(), [](const Point& x) { return 1.0 - x[0]; });
        for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - exact[i]));
    }
    o.check(worst <= 1e-9, "reference max-norm " + fmt("%.2e", worst));
    for (int nel : {8, 16}) {
        const RunConfig c = defaults(Command::solve_direct, {"problem=kl2d", zero});
        const Instance inst = make_instance(c, nel);
        const DirectResult r = solve_direct(c, inst);
        const NodalField exact = interpolate(r.u.grid(), [](const Point& x) { return 1.0 - x[0]; });
        const double e = energy_norm(inst.problem, difference(r.u, exact));
        o.check(e <= 1e-6, "direct energy norm nel " + std::to_string(nel) + " " + fmt("%.2e", e));
    }
    const double t = seconds_since(t0);
    o.check(t < 30.0, "time " + fmt("%.1f s", t));
    return o;
}

Outcome criterion6() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const double eta = 0.5, sigma = 1.0;
    const kl::KLBasis b = kl::eigenpairs(eta, sigma, 6);
    bool exact = true, decreasing = true;
    for (std::size_t i = 0; i < b.modes.size(); ++i) {
        const double w = b.modes[i].omega;
        exact = exact && b.modes[i].lambda == 2 * eta * sigma / (1 + eta * eta * w * w);
        if (i > 0) decreasing = decreasing && b.modes[i].lambda < b.modes[i - 1].lambda;
    }
    o.check(exact, "eigenvalues from roots");
    o.check(decreasing, "strictly decreasing");
    // 1024-point composite two-point Gauss rule on [0, 1]
    const int panels = 512;
    const double h = 1.0 / panels, gp = 0.5 / std::sqrt(3.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            double s = 0.0;
            for (int k = 0; k < panels; ++k) {
                const double c = (k + 0.5) * h;
                for (double x : {c - gp * h, c + gp * h}) s += 0.5 * h * b.modes[i](x) * b.modes[j](x);
            }
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    o.check(worst <= 1e-6, "Gram defect " + fmt("%.2e", worst));
    const double t = seconds_since(t0);
    o.check(t < 5.0, "time " + fmt("%.2f s", t));
    return o;
}

Outcome criterion7() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = load("parametric.cfg", Command::train_parametric);
    const ParametricResult r = solve_parametric(c);
    const double t_train = seconds_since(t0);
    o.check(r.median_rel_l2 <= 0.05, "held-out median rel L2 " + fmt("%.4f", r.median_rel_l2) + " after " +
                                         std::to_string(r.epochs) + " epochs");
    // a = 0: the network at nu = 1 against the closed form 1 - x, judged by the held-out spread
    std::vector<double> held;
    for (const auto& row : r.heldout.rows) held.push_back(parse_real(row.at(1)));
    std::sort(held.begin(), held.end());
    const auto quantile = [&](double q) { return held[static_cast<std::size_t>(q * static_cast<double>(held.size() - 1))]; };
    const Grid g = make_grid(2, c.nel);
    const nnet::Checkpoint ck{c.net, r.params};
    const NodalField u0 = infer(ck, NodalField(g, std::vector<double>(g.node_count(), 1.0)));
    const NodalField lin = interpolate(g, [](const Point& x) { return 1.0 - x[0]; });
    const double e0 = relative_l2(u0, lin), bound = r.median_rel_l2 + 2 * (quantile(0.75) - quantile(0.25));
    o.check(e0 <= bound, "a=0 rel L2 " + fmt("%.4f", e0) + " vs bound " + fmt("%.4f", bound));
    const StatsRecord st = stats_study(c, ck);
    o.check(st.max_w1 <= 0.02, "max nine-point W1 " + fmt("%.4f", st.max_w1));
    o.check(st.mean_rel_l2 <= 0.05, "mean-field rel L2 " + fmt("%.4f", st.mean_rel_l2));
    const double t = seconds_since(t0);
    o.check(t <= 1800.0, "time " + fmt("%.0f s", t) + " (training " + fmt("%.0f s", t_train) + ")");
    return o;
}

Outcome criterion8() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const ConvergenceRecord fixed = convergence_study(load("converge_fixed.cfg", Command::converge));
    const ConvergenceRecord enh = convergence_study(load("converge_enhanced.cfg", Command::converge));
    const double t = seconds_since(t0);
    auto errors = [](const ConvergenceRecord& r) {
        std::string s;
        for (const auto& e : r.entries) s += (s.empty() ? "" : " ") + fmt("%.2e", e.l2_error);
        return s;
    };
    bool ok = true;
    for (const auto* r : {&fixed, &enh}) {
        for (const auto& e : r->entries) ok = ok && e.status == "ok";
    }
    o.check(ok, "all runs finished");
    const auto& f = fixed.entries;
    bool non_monotone = false;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) non_monotone = non_monotone || f.back().l2_error > f[i].l2_error;
    o.check(non_monotone, "fixed arm non-monotone [" + errors(fixed) + "]");
    bool monotone = true;
    for (std::size_t i = 1; i < enh.entries.size(); ++i) {
        monotone = monotone && enh.entries[i].l2_error < enh.entries[i - 1].l2_error;
    }
    o.check(monotone, "enhanced arm monotone [" + errors(enh) + "]");
    o.check(enh.slope >= 1.8 && enh.slope <= 2.2, "enhanced slope " + fmt("%.3f", enh.slope));
    o.check(t <= 2700.0, "time " + fmt("%.0f s", t));
    return o;
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::ifstream is(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << is.rdbuf();
        files[e.path().filename().string()] = ss.str();
    }
    return files;
}

Outcome criterion9() {
    Outcome o;
    const auto root = std::filesystem::temp_directory_path() / "neufe_acceptance_determinism";
    std::filesystem::remove_all(root);
    const std::string ck = (root / "train-parametric" / "checkpoint.ckpt").string();
    const std::vector<std::vector<std::string>> runs{
        {"kl-sample", "problem=kl2d", "nel=8", "kl.n_samples=4", "kl.dump_nu=true"},
        {"reference", "problem=kl2d", "nel=16"},
        {"reference", "problem=mms", "nel=16"},
        {"solve-direct", "problem=mms", "nel=8"},
        {"solve-instance", "problem=kl2d", "nel=8", "net.depth=1", "net.base_channels=4", "opt.max_epochs=40"},
        {"train-parametric", "problem=kl2d", "nel=8", "net.depth=1", "net.base_channels=4", "opt.max_epochs=3",
         "kl.n_samples=8", "kl.heldout=4", "opt.batch_size=4", "checkpoint.every=2"},
        {"infer", "problem=kl2d", "nel=8", "checkpoint.path=" + ck},
        {"stats", "problem=kl2d", "nel=8", "checkpoint.path=" + ck, "stats.n_samples=16"},
        {"converge", "problem=mms", "mode=direct", "converge.nel_list=4,8"},
    };
    for (const auto& run : runs) {
        const auto dir = root / run[0];
        std::vector<std::string> args{"neufe", run[0]};
        for (std::size_t i = 1; i < run.size(); ++i) {
            args.push_back("--set");
            args.push_back(run[i]);
        }
        args.push_back("--set");
        args.push_back("output_dir=" + dir.string());
        args.push_back("--set");
        args.push_back("deterministic=true");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::map<std::string, std::string> first;
        bool same = true;
        for (int k = 0; k < 2; ++k) {
            std::ostringstream out, err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            if (code != 0) {
                same = false;
                std::cerr << run[0] << ": exit " << code << ": " << err.str();
            }
            const auto files = snapshot(dir);
            if (k == 0) first = files;
            else same = same && files == first;
        }
        o.check(same, run[0] + " (" + std::to_string(first.size()) + " files)");
    }
    std::filesystem::remove_all(root);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(n)) continue;
        Outcome r;
        try {
            r = criteria[i]();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        failed += r.pass ? 0 : 1;
        std::cout << "criterion " << n << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.detail << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
