#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "neufe/klrf.hpp"
#include "neufe/refsolve.hpp"

using namespace neufe;

namespace {

EnergyProblem unit_kl(int nd, int nel) {
    const Grid g = make_grid(nd, nel);
    return make_kl_problem(NodalField(g, std::vector<double>(g.node_count(), 1.0)));
}

EnergyProblem random_kl(int nd, int nel, std::uint64_t seed, double amp = 1.0) {
    const kl::KLBasis b = kl::eigenpairs(0.5, 1.0, 6);
    return make_kl_problem(kl::build_nu(b, kl::sample_coeffs(1, 6, -amp, amp, seed).front(), make_grid(nd, nel)));
}

NodalField random_free(const EnergyProblem& p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1, 1);
    NodalField v(p.grid);
    for (auto& x : v.data()) x = U(rng);
    zero_dirichlet(v.values(), p.mask);
    return v;
}

double dot(const NodalField& a, const NodalField& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(LinearSystem, SymmetricAndPositive) {
    std::mt19937_64 rng(1);
    for (const EnergyProblem& p : {random_kl(2, 8, 3), make_mms_problem(make_grid(2, 8)), random_kl(3, 4, 5)}) {
        const LinearSystem s = build_system(p);
        for (int t = 0; t < 20; ++t) {
            const NodalField v = random_free(p, rng), w = random_free(p, rng);
            const double a = dot(s.apply(v), w), b = dot(v, s.apply(w));
            EXPECT_NEAR(a, b, 1e-12 * (1 + std::abs(a)));
            EXPECT_GT(dot(s.apply(v), v), 0.0);
        }
    }
}

TEST(LinearSystem, AgreesWithEnergyGradient) {
    std::mt19937_64 rng(2);
    for (const EnergyProblem& p : {random_kl(2, 8, 7), make_mms_problem(make_grid(2, 8)), random_kl(3, 4, 8)}) {
        const LinearSystem s = build_system(p);
        std::uniform_real_distribution<double> U(-1, 1);
        NodalField u(p.grid);
        for (auto& x : u.data()) x = U(rng);
        u = apply_dirichlet(u, p.mask);
        NodalField free = u;
        zero_dirichlet(free.values(), p.mask);
        const NodalField ku = s.apply(free), g = energy_gradient(p, u);
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (!p.mask.is_dirichlet(i)) EXPECT_NEAR(ku[i] - s.rhs()[i], g[i], 1e-12);
        }
    }
}

TEST(LinearSystem, CentreLoadMatchesBruteForceAssembly) {
    // grid(2,4): centre node (0.5,0.5) touches four elements; integrate f * phi_c with the
    // same interpolated f and an explicit 2x2 Gauss rule per element
    const EnergyProblem p = make_mms_problem(make_grid(2, 4));
    const LinearSystem s = build_system(p);
    const double h = 0.25, gp = 1 / std::sqrt(3.0);
    const double pi = std::numbers::pi;
    auto fnode = [&](double x, double y) { return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y); };
    double load = 0;
    for (int ex = 1; ex <= 2; ++ex) {
        for (int ey = 1; ey <= 2; ++ey) {
            const double x0 = ex * h, y0 = ey * h;
            for (double xi : {-gp, gp}) {
                for (double et : {-gp, gp}) {
                    const double sx = (1 + xi) / 2, sy = (1 + et) / 2;
                    const double f = (1 - sx) * (1 - sy) * fnode(x0, y0) + sx * (1 - sy) * fnode(x0 + h, y0) +
                                     (1 - sx) * sy * fnode(x0, y0 + h) + sx * sy * fnode(x0 + h, y0 + h);
                    // basis of the centre node (0.5,0.5) within this element
                    const double cx = 0.5 == x0 ? 1 - sx : sx, cy = 0.5 == y0 ? 1 - sy : sy;
                    load += f * cx * cy * (h / 2) * (h / 2);
                }
            }
        }
    }
    EXPECT_NEAR(s.rhs()[12], load, 1e-14);
}

TEST(LinearSystem, LinearDataIsDiscretelyHarmonic) {
    const EnergyProblem p = unit_kl(2, 8);
    const LinearSystem s = build_system(p);
    NodalField lin = interpolate(p.grid, [](const Point& x) { return 1 - x[0]; });
    NodalField free = lin;
    zero_dirichlet(free.values(), p.mask);
    const NodalField ku = s.apply(free);
    for (std::size_t i = 0; i < ku.size(); ++i) {
        if (!p.mask.is_dirichlet(i)) EXPECT_NEAR(ku[i] - s.rhs()[i], 0.0, 1e-13);
    }
}

TEST(LinearSystem, RejectsNonPositiveDiffusivity) {
    EnergyProblem p = unit_kl(2, 4);
    (*p.nu)[6] = -1.0;
    EXPECT_THROW(build_system(p), std::invalid_argument);
}

TEST(CgSolve, LinearSolutionForUnitDiffusivity) {
    for (int nd : {2, 3}) {
        for (int nel : {2, 4, 8, 16}) {
            if (nd == 3 && nel > 8) continue;
            const EnergyProblem p = unit_kl(nd, nel);
            const CgResult r = cg_solve(build_system(p), 1e-12);
            for (std::size_t i = 0; i < r.u.size(); ++i) EXPECT_NEAR(r.u[i], 1 - node_coord(p.grid, i)[0], 1e-9);
        }
    }
}

TEST(CgSolve, ResidualContractAndExactBoundaryValues) {
    const EnergyProblem p = random_kl(2, 32, 11, 1.7);
    const LinearSystem s = build_system(p);
    const CgResult r = cg_solve(s);
    EXPECT_LE(r.residual, 1e-8);
    for (std::size_t i = 0; i < r.u.size(); ++i) {
        if (p.mask.is_dirichlet(i)) EXPECT_EQ(r.u[i], p.mask.dirichlet_value(i));
    }
    NodalField free = r.u;
    zero_dirichlet(free.values(), p.mask);
    const NodalField ku = s.apply(free);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ku.size(); ++i) {
        num += (ku[i] - s.rhs()[i]) * (ku[i] - s.rhs()[i]);
        den += s.rhs()[i] * s.rhs()[i];
    }
    EXPECT_LE(std::sqrt(num / den), 1e-8);
}

TEST(CgSolve, ReportsNonConvergence) {
    const EnergyProblem p = random_kl(2, 32, 12);
    try {
        cg_solve(build_system(p), 1e-12, 3);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("relative residual"), std::string::npos);
    }
}

TEST(CgSolve, EnergyDecreasesOverIterates) {
    for (const EnergyProblem& p : {random_kl(2, 8, 13), random_kl(2, 16, 14, 1.7), random_kl(3, 4, 15)}) {
        const CgResult r = cg_solve(build_system(p), 1e-12, 10000, true);
        ASSERT_GE(r.energies.size(), 2u);
        for (std::size_t k = 1; k < r.energies.size(); ++k) EXPECT_LE(r.energies[k], r.energies[k - 1] + 1e-14);
    }
}

TEST(CgSolve, MmsErrorQuartersWithH) {
    std::vector<double> err;
    for (int nel : {16, 32, 64}) {
        const NodalField u = reference_solution(make_mms_problem(make_grid(2, nel)));
        err.push_back(l2_error(u, [](const Point& x) { return mms_exact(x, 2); }));
    }
    for (std::size_t i = 1; i < err.size(); ++i) {
        EXPECT_GE(err[i - 1] / err[i], 3.7);
        EXPECT_LE(err[i - 1] / err[i], 4.3);
    }
    EXPECT_LT(err.back(), 1e-3);
}

TEST(ReferenceSolution, IsTheEnergyMinimiser) {
    std::mt19937_64 rng(21);
    const EnergyProblem p = random_kl(2, 8, 16);
    const NodalField u = reference_solution(p);
    const double j = energy(p, u);
    std::uniform_real_distribution<double> U(-1e-2, 1e-2);
    for (int t = 0; t < 100; ++t) {
        NodalField v = u;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!p.mask.is_dirichlet(i)) v[i] += U(rng);
        }
        EXPECT_LE(j, energy(p, v));
    }
}

TEST(ReferenceSolution, MaximumPrinciple) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const NodalField u = reference_solution(random_kl(2, 16, 100 + seed, std::sqrt(3.0)));
        for (double v : u.values()) {
            EXPECT_GE(v, -1e-12);
            EXPECT_LE(v, 1 + 1e-12);
        }
    }
}
