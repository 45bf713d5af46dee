#pragma once

// Training loops: the single-instance network solver, the direct nodal
// Rayleigh-Ritz minimiser, parametric training over KL samples, and inference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "neufe/driver/config.hpp"
#include "neufe/driver/csv.hpp"
#include "neufe/energy.hpp"
#include "neufe/klrf.hpp"
#include "neufe/nnet/adam.hpp"
#include "neufe/nnet/checkpoint.hpp"
#include "neufe/nnet/unet.hpp"
#include "neufe/refsolve.hpp"

namespace neufe::driver {

/// Independent seed streams derived from the run seed.
enum class Stream : std::uint32_t { instance = 1, train = 2, heldout = 3, stats = 4, shuffle = 5 };

inline std::uint64_t derive_seed(std::uint64_t seed, Stream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Loss went non-finite; carries the parameters from the last finite epoch.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, nnet::NetParams last_good, long epoch)
        : NumericalError(what), last_good(std::move(last_good)), epoch(epoch) {}
    nnet::NetParams last_good;
    long epoch;
};

/// Stops when |L_e - L_{e-w}| <= tol |L_e|.
class WindowStop {
public:
    WindowStop(int window, double tol) : window_(static_cast<std::size_t>(window)), tol_(tol) {}

    bool update(double loss) {
        history_.push_back(loss);
        if (history_.size() <= window_) return false;
        const double old = history_[history_.size() - 1 - window_];
        return std::abs(loss - old) <= tol_ * std::abs(loss);
    }

private:
    std::size_t window_;
    double tol_;
    std::vector<double> history_;
};

inline kl::KLBasis make_basis(const RunConfig& c) { return kl::eigenpairs(c.kl.eta, c.kl.sigma, c.kl.m); }

/// One fixed problem plus the field the network sees as input (f for mms, nu for kl).
struct Instance {
    EnergyProblem problem;
    NodalField input;
    std::vector<double> coeffs;
};

inline Instance make_instance(const RunConfig& c, int nel) {
    const Grid grid = make_grid(c.ndim(), nel);
    Instance inst;
    if (!c.is_kl()) {
        inst.problem = make_mms_problem(grid);
        inst.input = *inst.problem.f;
        return inst;
    }
    inst.coeffs = c.kl.coeffs;
    if (inst.coeffs.empty()) {
        inst.coeffs = kl::sample_coeffs(1, c.kl.m, c.kl.lo, c.kl.hi, derive_seed(c.seed, Stream::instance)).front().a;
    }
    const kl::KLBasis basis = make_basis(c);
    inst.input = kl::build_nu(basis, kl::KLSample{inst.coeffs}, grid);
    inst.problem = make_kl_problem(inst.input);
    return inst;
}

inline double relative_l2(const NodalField& u, const NodalField& ref) {
    NodalField d = u;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= ref[i];
    return l2_norm(d) / l2_norm(ref);
}

inline NodalField difference(const NodalField& a, const NodalField& b) {
    NodalField d = a;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= b[i];
    return d;
}

inline void decay_lr(double& lr, const OptimizerConfig& o, long epoch) {
    if (*o.lr_decay < 1.0 && epoch % *o.decay_every == 0) lr *= *o.lr_decay;
}

struct InstanceResult {
    NodalField u;
    nnet::NetParams params;
    CsvTable log;
    long epochs = 0;
    bool converged = false;
    double loss = 0.0;
};

/// Forward, overwrite Dirichlet values, energy, backward, Adam: repeated until
/// the windowed loss change drops below tol or max_epochs is reached.
inline InstanceResult solve_instance(const RunConfig& c, const Instance& inst) {
    const EnergyProblem& p = inst.problem;
    nnet::NetConfig net = c.net;
    nnet::validate(net, p.grid);
    InstanceResult res;
    res.params = nnet::init(net);
    nnet::AdamState adam = nnet::make_adam(res.params, *c.opt.lr);
    WindowStop stop(c.opt.window, *c.opt.tol);
    res.log.header = {"epoch", "loss", "lr"};
    nnet::NetParams best;
    double best_loss = std::numeric_limits<double>::infinity();
    NodalField grad(p.grid);
    nnet::ForwardCache cache;
    for (long e = 1; e <= *c.opt.max_epochs; ++e) {
        const NodalField u = apply_dirichlet(nnet::forward(res.params, net, inst.input, cache), p.mask);
        double J = 0.0;
        try {
            J = energy_and_gradient(p, u, grad);
        } catch (const NumericalError&) {
            throw TrainingDiverged("solve-instance: loss is not finite at epoch " + std::to_string(e), res.params, e - 1);
        }
        res.log.add_row(csv_row(e, J, adam.lr));
        res.epochs = e;
        if (J < best_loss) {
            best_loss = J;
            if (c.opt.keep_best) best = res.params;
        }
        if (stop.update(J)) {
            res.converged = true;
            break;
        }
        const nnet::NetParams g = nnet::backward(res.params, net, cache, grad);
        nnet::adam_step(res.params, g, adam);
        decay_lr(adam.lr, c.opt, e);
    }
    // Adam iterates oscillate; by the energy identity the lowest loss is the
    // iterate closest to the discrete minimiser in the energy norm.
    if (c.opt.keep_best && !best.tensors.empty()) res.params = std::move(best);
    res.u = apply_dirichlet(nnet::forward(res.params, net, inst.input), p.mask);
    res.loss = energy(p, res.u);
    return res;
}

struct DirectResult {
    NodalField u;
    NodalField reference;
    CsvTable log;
    long epochs = 0;
    bool converged = false;
    double J = 0.0;
    double J_ref = 0.0;
    double energy_error = 0.0;       ///< ||u - u_ref||_V
    double max_identity_defect = 0.0;  ///< max over epochs of |J - J_ref - ||u - u_ref||_V^2 / 2| / |J_ref|
};

/// Adam on the free nodal values of J. Each epoch also logs the optimisation-error
/// identity against the reference minimiser.
inline DirectResult solve_direct(const RunConfig& c, const Instance& inst) {
    const EnergyProblem& p = inst.problem;
    DirectResult res;
    res.reference = cg_solve(build_system(p), c.cg_tol, c.cg_max_iter).u;
    res.J_ref = energy(p, res.reference);
    res.log.header = {"epoch", "J", "J_minus_J_ref", "half_energy_norm_sq", "identity_defect"};

    NodalField u = apply_dirichlet(NodalField(p.grid), p.mask);
    NodalField grad(p.grid);
    nnet::AdamMoments mom;
    double lr = *c.opt.lr;
    WindowStop stop(c.opt.window, *c.opt.tol);
    const double scale = std::max(std::abs(res.J_ref), 1e-300);
    for (long e = 1; e <= *c.opt.max_epochs; ++e) {
        const double J = energy_and_gradient(p, u, grad);
        const double en = energy_norm(p, difference(u, res.reference));
        const double half_sq = 0.5 * en * en;
        const double defect = std::abs(J - res.J_ref - half_sq) / scale;
        res.max_identity_defect = std::max(res.max_identity_defect, defect);
        res.log.add_row(csv_row(e, J, J - res.J_ref, half_sq, defect));
        res.epochs = e;
        if (stop.update(J)) {
            res.converged = true;
            break;
        }
        nnet::adam_update(u.values(), grad.values(), mom, e, lr);
        decay_lr(lr, c.opt, e);
    }
    res.u = std::move(u);
    res.J = energy(p, res.u);
    res.energy_error = energy_norm(p, difference(res.u, res.reference));
    return res;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fixed set of KL samples with their problems.
struct SampleSet {
    std::vector<kl::KLSample> samples;
    std::vector<EnergyProblem> problems;
};

inline SampleSet make_samples(const kl::KLBasis& basis, const Grid& grid, int n, double lo, double hi,
                              std::uint64_t seed) {
    SampleSet s;
    s.samples = kl::sample_coeffs(n, basis.m, lo, hi, seed);
    s.problems.reserve(s.samples.size());
    for (const auto& a : s.samples) s.problems.push_back(make_kl_problem(kl::build_nu(basis, a, grid)));
    return s;
}

struct ParametricResult {
    nnet::NetParams params;
    CsvTable log;      ///< epoch, batch, loss
    CsvTable heldout;  ///< per held-out sample relative L2 error vs the reference solver
    long epochs = 0;
    bool converged = false;
    double median_rel_l2 = 0.0;
};

/// Called after every `checkpoint.every` epochs with the epoch number and current parameters.
using CheckpointHook = std::function<void(long, const nnet::NetParams&)>;

/// Mean energy loss over mini-batches of a fixed sample set, Adam per batch.
inline ParametricResult solve_parametric(const RunConfig& c, const CheckpointHook& hook = {}) {
    const Grid grid = make_grid(c.ndim(), c.nel);
    const nnet::NetConfig net = c.net;
    nnet::validate(net, grid);
    const kl::KLBasis basis = make_basis(c);
    const SampleSet train = make_samples(basis, grid, c.kl.n_samples, c.kl.lo, c.kl.hi, derive_seed(c.seed, Stream::train));

    ParametricResult res;
    res.params = nnet::init(net);
    nnet::AdamState adam = nnet::make_adam(res.params, *c.opt.lr);
    WindowStop stop(c.opt.window, *c.opt.tol);
    res.log.header = {"epoch", "batch", "loss"};

    std::vector<std::size_t> order(train.problems.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(c.seed, Stream::shuffle));
    const std::size_t B = static_cast<std::size_t>(c.opt.batch_size);
    NodalField grad(grid);
    nnet::ForwardCache cache;

    for (long e = 1; e <= *c.opt.max_epochs; ++e) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        long batch = 0;
        for (std::size_t start = 0; start < order.size(); start += B, ++batch) {
            const std::size_t end = std::min(order.size(), start + B);
            const double inv = 1.0 / static_cast<double>(end - start);
            nnet::NetParams acc = res.params.zeros_like();
            double loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const EnergyProblem& p = train.problems[order[k]];
                const NodalField u = apply_dirichlet(nnet::forward(res.params, net, *p.nu, cache), p.mask);
                double J = 0.0;
                try {
                    J = energy_and_gradient(p, u, grad);
                } catch (const NumericalError&) {
                    throw TrainingDiverged("train-parametric: loss is not finite at epoch " + std::to_string(e),
                                           res.params, e - 1);
                }
                loss += J * inv;
                const nnet::NetParams g = nnet::backward(res.params, net, cache, grad);
                for (std::size_t t = 0; t < acc.tensors.size(); ++t) {
                    auto& dst = acc.tensors[t].data;
                    const auto& src = g.tensors[t].data;
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += inv * src[i];
                }
            }
            nnet::adam_step(res.params, acc, adam);
            res.log.add_row(csv_row(e, batch, loss));
            epoch_loss += loss * static_cast<double>(end - start);
        }
        epoch_loss /= static_cast<double>(order.size());
        res.epochs = e;
        decay_lr(adam.lr, c.opt, e);
        if (hook && c.checkpoint_every > 0 && e % c.checkpoint_every == 0) hook(e, res.params);
        if (stop.update(epoch_loss)) {
            res.converged = true;
            break;
        }
    }

    const SampleSet held = make_samples(basis, grid, c.kl.heldout, c.kl.lo, c.kl.hi, derive_seed(c.seed, Stream::heldout));
    res.heldout.header = {"sample", "rel_l2_error"};
    std::vector<double> errs;
    for (std::size_t i = 0; i < held.problems.size(); ++i) {
        const EnergyProblem& p = held.problems[i];
        const NodalField u = apply_dirichlet(nnet::forward(res.params, net, *p.nu), p.mask);
        const NodalField ref = cg_solve(build_system(p), c.cg_tol, c.cg_max_iter).u;
        errs.push_back(relative_l2(u, ref));
        res.heldout.add_row(csv_row(i, errs.back()));
    }
    res.median_rel_l2 = median(errs);
    return res;
}

/// Forward pass plus the Dirichlet overwrite for the kl boundary preset.
inline NodalField infer(const nnet::Checkpoint& ck, const NodalField& nu) {
    try {
        nnet::validate(ck.config, nu.grid());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("infer: checkpoint does not fit this grid: ") + e.what());
    }
    const BoundaryMask mask = make_boundary_mask(nu.grid(), BoundaryPreset::kl);
    return apply_dirichlet(nnet::forward(ck.params, ck.config, nu), mask);
}

}  // namespace neufe::driver
