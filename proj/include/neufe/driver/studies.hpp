#pragma once

// Mesh-convergence harness for the manufactured problem and the sampling
// statistics harness comparing a trained parametric network with the
// reference solver.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "neufe/driver/config.hpp"
#include "neufe/driver/csv.hpp"
#include "neufe/driver/solvers.hpp"

namespace neufe::driver {

struct ConvergenceEntry {
    double h = 0.0;
    double l2_error = 0.0;      ///< chosen mode vs the analytic solution
    double ref_l2_error = 0.0;  ///< reference solver vs the analytic solution
    double energy_error = 0.0;  ///< ||u - u_ref||_V
    double J_final = 0.0;
    long iterations = 0;        ///< epochs for network/direct runs
    int depth = 0;              ///< network depth used (0 for direct mode)
    std::string status = "ok";
};

struct ConvergenceRecord {
    std::vector<ConvergenceEntry> entries;
    double slope = std::nan("");
    double ref_slope = std::nan("");
};

/// Least-squares slope of log(err) against log(h); NaN with fewer than two points.
inline double fit_slope(const std::vector<double>& h, const std::vector<double>& err) {
    const std::size_t n = h.size();
    if (n < 2 || err.size() != n) return std::nan("");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

/// The manufactured problem on every mesh of converge.nel_list. A failure on one
/// mesh is recorded in its status and the study moves on.
inline ConvergenceRecord convergence_study(const RunConfig& base) {
    if (base.problem != ProblemPreset::mms) throw ConfigError("converge: only the mms problem has an analytic solution");
    const int nd = base.ndim();
    auto exact = [nd](const Point& x) { return mms_exact(x, nd); };
    ConvergenceRecord rec;
    std::vector<double> hs, errs, ref_hs, ref_errs;
    for (std::size_t i = 0; i < base.converge.nel_list.size(); ++i) {
        const int nel = base.converge.nel_list[i];
        ConvergenceEntry en;
        en.h = 1.0 / nel;
        try {
            RunConfig c = base;
            c.nel = nel;
            const Instance inst = make_instance(c, nel);
            const NodalField ref = cg_solve(build_system(inst.problem), c.cg_tol, c.cg_max_iter).u;
            en.ref_l2_error = l2_error(ref, exact);
            ref_hs.push_back(en.h);
            ref_errs.push_back(en.ref_l2_error);
            NodalField u;
            if (c.mode == Mode::direct) {
                DirectResult d = solve_direct(c, inst);
                u = std::move(d.u);
                en.iterations = d.epochs;
            } else {
                if (c.converge.capacity == Capacity::enhanced) c.net.depth = base.net.depth + static_cast<int>(i);
                en.depth = c.net.depth;
                InstanceResult r = solve_instance(c, inst);
                u = std::move(r.u);
                en.iterations = r.epochs;
            }
            en.l2_error = l2_error(u, exact);
            en.energy_error = energy_norm(inst.problem, difference(u, ref));
            en.J_final = energy(inst.problem, u);
            hs.push_back(en.h);
            errs.push_back(en.l2_error);
        } catch (const std::exception& e) {
            en.status = std::string("failed: ") + e.what();
        }
        rec.entries.push_back(en);
    }
    rec.slope = fit_slope(hs, errs);
    rec.ref_slope = fit_slope(ref_hs, ref_errs);
    return rec;
}

inline CsvTable to_csv(const ConvergenceRecord& r) {
    CsvTable t;
    t.header = {"h", "l2_error", "ref_l2_error", "energy_error", "J_final", "iterations", "depth", "status"};
    for (const auto& e : r.entries) {
        t.add_row(csv_row(e.h, e.l2_error, e.ref_l2_error, e.energy_error, e.J_final, e.iterations, e.depth, e.status));
    }
    t.add_row(csv_row("slope", r.slope, r.ref_slope, "", "", "", "", ""));
    return t;
}

inline ConvergenceRecord convergence_from_csv(const CsvTable& t) {
    ConvergenceRecord r;
    for (const auto& row : t.rows) {
        if (row.at(0) == "slope") {
            r.slope = parse_real(row.at(1));
            r.ref_slope = parse_real(row.at(2));
            continue;
        }
        ConvergenceEntry e;
        e.h = parse_real(row.at(0));
        e.l2_error = parse_real(row.at(1));
        e.ref_l2_error = parse_real(row.at(2));
        e.energy_error = parse_real(row.at(3));
        e.J_final = parse_real(row.at(4));
        e.iterations = std::stol(row.at(5));
        e.depth = std::stoi(row.at(6));
        e.status = row.at(7);
        r.entries.push_back(e);
    }
    return r;
}

struct Histogram {
    std::vector<double> edges;  ///< bins + 1 edges on [0, 1]
    std::vector<long> counts;

    explicit Histogram(int bins = 32) : counts(static_cast<std::size_t>(bins), 0) {
        for (int i = 0; i <= bins; ++i) edges.push_back(static_cast<double>(i) / bins);
    }

    /// Values outside [0, 1] land in the end bins.
    void add(double v) {
        const auto bins = static_cast<long>(counts.size());
        auto k = static_cast<long>(std::floor(v * static_cast<double>(bins)));
        counts[static_cast<std::size_t>(std::clamp(k, 0L, bins - 1))] += 1;
    }

    long total() const {
        long n = 0;
        for (long c : counts) n += c;
        return n;
    }

    std::vector<double> frequencies() const {
        const double n = static_cast<double>(total());
        std::vector<double> f;
        for (long c : counts) f.push_back(n > 0 ? static_cast<double>(c) / n : 0.0);
        return f;
    }
};

/// 1-Wasserstein distance between two histograms on the same bins, from their CDFs.
inline double wasserstein1(const Histogram& a, const Histogram& b) {
    const auto fa = a.frequencies(), fb = b.frequencies();
    double ca = 0, cb = 0, w = 0;
    for (std::size_t k = 0; k < fa.size(); ++k) {
        ca += fa[k];
        cb += fb[k];
        w += std::abs(ca - cb) * (a.edges[k + 1] - a.edges[k]);
    }
    return w;
}

/// Running mean / standard deviation of nodal fields (Welford).
class FieldMoments {
public:
    explicit FieldMoments(const Grid& g) : mean_(g), m2_(g) {}

    void add(const NodalField& u) {
        ++n_;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double d = u[i] - mean_[i];
            mean_[i] += d / static_cast<double>(n_);
            m2_[i] += d * (u[i] - mean_[i]);
        }
    }

    const NodalField& mean() const { return mean_; }

    /// Population standard deviation.
    NodalField stddev() const {
        NodalField s = m2_;
        for (auto& v : s.data()) v = n_ > 0 ? std::sqrt(std::max(v, 0.0) / static_cast<double>(n_)) : 0.0;
        return s;
    }

private:
    NodalField mean_, m2_;
    long n_ = 0;
};

struct QueryPoint {
    Point x{};
    Histogram net, ref;
    double w1 = 0.0;
};

struct StatsRecord {
    long n_samples = 0;
    std::vector<QueryPoint> points;
    NodalField mean_net, mean_ref, std_net, std_ref;
    double mean_rel_l2 = 0.0;  ///< ||mean_net - mean_ref|| / ||mean_ref||
    double std_rel_l2 = 0.0;
    double max_w1 = 0.0;
    CsvTable line_cuts;  ///< method, stat, axis, at, coord, value
};

inline constexpr std::array<double, 3> query_coords{0.25, 0.5, 0.75};
inline constexpr std::array<double, 3> cut_coords{0.2, 0.5, 0.8};

inline CsvTable line_cut_table(const std::vector<std::pair<std::string, const NodalField*>>& fields) {
    CsvTable t;
    t.header = {"field", "direction", "at", "coord", "value"};
    for (const auto& [name, f] : fields) {
        const Grid& g = f->grid();
        const int n = g.nodes_per_axis();
        for (double at : cut_coords) {
            for (int i = 0; i < n; ++i) {
                const double s = static_cast<double>(i) * g.h();
                // x-parallel line y = at, then y-parallel line x = at; z = 0.5 in 3D
                t.add_row(csv_row(name, "x", at, s, sample_field(*f, Point{s, at, 0.5})));
            }
            for (int i = 0; i < n; ++i) {
                const double s = static_cast<double>(i) * g.h();
                t.add_row(csv_row(name, "y", at, s, sample_field(*f, Point{at, s, 0.5})));
            }
        }
    }
    return t;
}

/// Network inference and the reference solver over the same fresh samples.
inline StatsRecord stats_study(const RunConfig& c, const nnet::Checkpoint& ck) {
    const Grid grid = make_grid(c.ndim(), c.nel);
    nnet::validate(ck.config, grid);
    const kl::KLBasis basis = make_basis(c);
    const auto samples = kl::sample_coeffs(c.stats.n_samples, basis.m, c.stats.lo, c.stats.hi,
                                           derive_seed(c.seed, Stream::stats));
    StatsRecord rec;
    rec.n_samples = static_cast<long>(samples.size());
    for (double y : query_coords) {
        for (double x : query_coords) {
            QueryPoint q{Point{x, y, 0.5}, Histogram(c.stats.bins), Histogram(c.stats.bins), 0.0};
            rec.points.push_back(q);
        }
    }
    FieldMoments mnet(grid), mref(grid);
    for (const auto& a : samples) {
        const NodalField nu = kl::build_nu(basis, a, grid);
        const NodalField un = infer(ck, nu);
        const NodalField ur = cg_solve(build_system(make_kl_problem(nu)), c.cg_tol, c.cg_max_iter).u;
        mnet.add(un);
        mref.add(ur);
        for (auto& q : rec.points) {
            q.net.add(sample_field(un, q.x));
            q.ref.add(sample_field(ur, q.x));
        }
    }
    for (auto& q : rec.points) {
        q.w1 = wasserstein1(q.net, q.ref);
        rec.max_w1 = std::max(rec.max_w1, q.w1);
    }
    rec.mean_net = mnet.mean();
    rec.mean_ref = mref.mean();
    rec.std_net = mnet.stddev();
    rec.std_ref = mref.stddev();
    rec.mean_rel_l2 = relative_l2(rec.mean_net, rec.mean_ref);
    rec.std_rel_l2 = relative_l2(rec.std_net, rec.std_ref);
    rec.line_cuts = line_cut_table({{"mean_net", &rec.mean_net},
                                    {"mean_ref", &rec.mean_ref},
                                    {"std_net", &rec.std_net},
                                    {"std_ref", &rec.std_ref}});
    return rec;
}

inline CsvTable histogram_table(const StatsRecord& r) {
    CsvTable t;
    t.header = {"point", "x", "y", "bin_lo", "bin_hi", "net_count", "ref_count", "net_freq", "ref_freq"};
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        const auto& q = r.points[p];
        const auto fn = q.net.frequencies(), fr = q.ref.frequencies();
        for (std::size_t k = 0; k < q.net.counts.size(); ++k) {
            t.add_row(csv_row(p, q.x[0], q.x[1], q.net.edges[k], q.net.edges[k + 1], q.net.counts[k], q.ref.counts[k],
                              fn[k], fr[k]));
        }
    }
    return t;
}

inline CsvTable summary_table(const StatsRecord& r) {
    CsvTable t;
    t.header = {"point", "x", "y", "w1", "net_mean", "ref_mean"};
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        const auto& q = r.points[p];
        t.add_row(csv_row(p, q.x[0], q.x[1], q.w1, sample_field(r.mean_net, q.x), sample_field(r.mean_ref, q.x)));
    }
    return t;
}

}  // namespace neufe::driver
