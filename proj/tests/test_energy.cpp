#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "neufe/energy.hpp"
#include "neufe/klrf.hpp"
#include "neufe/refsolve.hpp"

using namespace neufe;

namespace {

NodalField random_bc_field(const EnergyProblem& p, std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> U(-amp, amp);
    NodalField u(p.grid);
    for (auto& v : u.data()) v = U(rng);
    return apply_dirichlet(u, p.mask);
}

EnergyProblem random_kl_problem(int nd, int nel, std::uint64_t seed) {
    const kl::KLBasis b = kl::eigenpairs(0.5, 1.0, 6);
    const auto a = kl::sample_coeffs(1, 6, -1.0, 1.0, seed).front();
    return make_kl_problem(kl::build_nu(b, a, make_grid(nd, nel)));
}

const double pi = std::numbers::pi;

}  // namespace

TEST(Energy, ZeroFieldHasZeroEnergy) {
    const EnergyProblem p = make_mms_problem(make_grid(2, 8));
    EXPECT_EQ(energy(p, NodalField(p.grid)), 0.0);
}

TEST(Energy, MmsExactInterpolantNearAnalytic) {
    const EnergyProblem p = make_mms_problem(make_grid(2, 256));
    const NodalField u = interpolate(p.grid, [](const Point& x) { return mms_exact(x, 2); });
    EXPECT_NEAR(energy(p, u), -pi * pi / 4, 1e-3);
}

TEST(Energy, KlLinearSolutionIsOneHalf) {
    for (int nd : {2, 3}) {
        const Grid g = make_grid(nd, 4);
        const EnergyProblem p = make_kl_problem(NodalField(g, std::vector<double>(g.node_count(), 1.0)));
        const NodalField u = interpolate(g, [](const Point& x) { return 1 - x[0]; });
        EXPECT_NEAR(energy(p, u), 0.5, 1e-13);
        EXPECT_NEAR(energy_norm(p, u), 1.0, 1e-13);
    }
}

TEST(Energy, KlRejectsNonPositiveDiffusivity) {
    const Grid g = make_grid(2, 4);
    NodalField nu(g, std::vector<double>(g.node_count(), 1.0));
    nu[7] = 0.0;
    EXPECT_THROW(make_kl_problem(nu), std::invalid_argument);
}

TEST(Energy, GridMismatchAndNonFinite) {
    const EnergyProblem p = make_mms_problem(make_grid(2, 4));
    EXPECT_THROW(energy(p, NodalField(make_grid(2, 8))), std::invalid_argument);
    NodalField u(p.grid);
    u[12] = std::nan("");
    EXPECT_THROW(energy(p, u), NumericalError);
}

TEST(Energy, GradientMatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    for (const EnergyProblem& p : {make_mms_problem(make_grid(2, 8)), random_kl_problem(2, 8, 3), random_kl_problem(3, 4, 4)}) {
        const NodalField u = random_bc_field(p, rng);
        const NodalField g = energy_gradient(p, u);
        const double eps = 1e-6;
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (p.mask.is_dirichlet(i)) {
                EXPECT_EQ(g[i], 0.0);
                continue;
            }
            NodalField a = u, b = u;
            a[i] += eps;
            b[i] -= eps;
            const double fd = (energy(p, a) - energy(p, b)) / (2 * eps);
            EXPECT_LE(std::abs(fd - g[i]), 1e-6 * (1 + std::abs(g[i]))) << "node " << i;
        }
    }
}

TEST(Energy, GradientVanishesAtReferenceSolution) {
    for (const EnergyProblem& p : {make_mms_problem(make_grid(2, 16)), random_kl_problem(2, 16, 9)}) {
        const LinearSystem sys = build_system(p);
        const NodalField u = cg_solve(sys, 1e-12).u;
        double fnorm = 0;
        for (double v : sys.rhs().values()) fnorm += v * v;
        fnorm = std::sqrt(fnorm);
        const NodalField g = energy_gradient(p, u);
        double gmax = 0;
        for (double v : g.values()) gmax = std::max(gmax, std::abs(v));
        EXPECT_LE(gmax, 1e-8 * fnorm);
    }
}

TEST(Energy, QuadraticIdentityAgainstMinimiser) {
    std::mt19937_64 rng(17);
    for (const EnergyProblem& p :
         {make_mms_problem(make_grid(2, 8)), make_mms_problem(make_grid(3, 4)), random_kl_problem(2, 8, 1), random_kl_problem(3, 4, 2)}) {
        const NodalField ustar = reference_solution(p);
        const double jstar = energy(p, ustar);
        for (int trial = 0; trial < 100; ++trial) {
            const NodalField u = random_bc_field(p, rng, trial % 2 ? 1.0 : 1e-3);
            NodalField d = u;
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= ustar[i];
            const double en = energy_norm(p, d);
            EXPECT_NEAR(energy(p, u) - jstar, 0.5 * en * en, 1e-9 * std::abs(jstar));
        }
    }
}

TEST(Energy, ConvexityDefect) {
    std::mt19937_64 rng(23);
    const EnergyProblem p = random_kl_problem(2, 8, 7);
    for (int trial = 0; trial < 20; ++trial) {
        const NodalField u = random_bc_field(p, rng), v = random_bc_field(p, rng);
        const double lam = std::uniform_real_distribution<double>(0, 1)(rng);
        NodalField w(p.grid), d(p.grid);
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = lam * u[i] + (1 - lam) * v[i];
            d[i] = u[i] - v[i];
        }
        const double en = energy_norm(p, d);
        EXPECT_NEAR(energy(p, w), lam * energy(p, u) + (1 - lam) * energy(p, v) - 0.5 * lam * (1 - lam) * en * en, 1e-10);
    }
}

TEST(Energy, MinimiserInvariantUnderDiffusivityScaling) {
    const EnergyProblem p = random_kl_problem(2, 16, 13);
    NodalField scaled = *p.nu;
    for (auto& v : scaled.data()) v *= 3.7;
    const EnergyProblem q = make_kl_problem(scaled);
    const NodalField a = reference_solution(p), b = reference_solution(q);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
    EXPECT_NEAR(energy(q, b), 3.7 * energy(p, a), 1e-12);
}

TEST(Energy, NormsOfExactSolution) {
    const Grid g = make_grid(2, 256);
    EXPECT_NEAR(l2_norm(interpolate(g, [](const Point& x) { return mms_exact(x, 2); })), 0.5, 5e-4);
    const NodalField zero(make_grid(2, 64));
    EXPECT_EQ(l2_error(zero, [](const Point&) { return 0.0; }), 0.0);
    EXPECT_NEAR(l2_error(zero, [](const Point& x) { return mms_exact(x, 2); }), 0.5, 5e-4);
}

TEST(Energy, EnergyNormProperties) {
    const EnergyProblem p = random_kl_problem(2, 8, 21);
    const NodalField c(p.grid, std::vector<double>(p.grid.node_count(), 4.2));
    EXPECT_NEAR(energy_norm(p, c), 0.0, 1e-12);
    std::mt19937_64 rng(2);
    const NodalField v = random_bc_field(p, rng);
    NodalField nu2 = *p.nu;
    for (auto& x : nu2.data()) x *= 2.25;
    EXPECT_NEAR(energy_norm(make_kl_problem(nu2), v), 1.5 * energy_norm(p, v), 1e-12);
}

TEST(Energy, ParametricLoss) {
    std::mt19937_64 rng(8);
    std::vector<EnergyProblem> ps;
    std::vector<NodalField> us;
    double oracle = 0;
    for (int i = 0; i < 3; ++i) {
        ps.push_back(random_kl_problem(2, 4, 30 + static_cast<std::uint64_t>(i)));
        us.push_back(random_bc_field(ps.back(), rng));
        oracle += energy(ps.back(), us.back());
    }
    EXPECT_NEAR(parametric_loss(ps, us), oracle / 3, 1e-13);
    EXPECT_EQ(parametric_loss(std::span(ps).first(1), std::span(us).first(1)), energy(ps[0], us[0]));
    const std::vector<EnergyProblem> twice{ps[0], ps[0]};
    const std::vector<NodalField> utwice{us[0], us[0]};
    EXPECT_DOUBLE_EQ(parametric_loss(twice, utwice), energy(ps[0], us[0]));
    EXPECT_THROW(parametric_loss(std::span(ps).first(2), std::span(us).first(3)), std::invalid_argument);
}

TEST(Energy, ParametricEnergyIdentity) {
    // mean loss gap equals half the mean squared energy-norm distance to the per-sample minimisers
    std::mt19937_64 rng(41);
    std::vector<EnergyProblem> ps;
    std::vector<NodalField> us, stars, diffs;
    for (int i = 0; i < 4; ++i) {
        ps.push_back(random_kl_problem(2, 8, 50 + static_cast<std::uint64_t>(i)));
        stars.push_back(reference_solution(ps.back()));
        us.push_back(random_bc_field(ps.back(), rng));
        NodalField d = us.back();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] -= stars.back()[k];
        diffs.push_back(d);
    }
    const double gap = parametric_loss(ps, us) - parametric_loss(ps, stars);
    const double en = parametric_energy_norm(ps, diffs);
    EXPECT_NEAR(gap, 0.5 * en * en, 1e-8 * gap);
}
