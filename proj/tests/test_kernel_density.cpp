#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "nlhom/errors.hpp"
#include "nlhom/kernel_density.hpp"
#include "nlhom/lattice.hpp"
#include "support.hpp"

using namespace nlhom;
using testing_support::unit_lattice;
using testing_support::unit_model;

namespace {

struct LatticeCase {
    ParticleSystem ps;
    BondList bonds;
};

LatticeCase setup(double eps, const std::string& K, LongRangeStorage storage = LongRangeStorage::Automatic)
{
    const LatticeConfig cfg = unit_lattice(eps);
    ParticleSystem ps = build_cubic_lattice(cfg);
    BondList bonds = assemble_bonds(ps, unit_model(K), cfg, storage);
    return {std::move(ps), std::move(bonds)};
}

const TestFunction& library_function(const std::vector<TestFunction>& lib, const std::string& name)
{
    for (const auto& f : lib)
        if (f.name == name)
            return f;
    throw std::runtime_error("missing test function " + name);
}

double cell_average(const std::array<Factor1D, 3>& factors, const Vec3& x, double eps)
{
    double v = 1.0;
    for (int c = 0; c < 3; ++c)
        v *= factors[c].average(std::max(0.0, x[c] - eps / 2), std::min(1.0, x[c] + eps / 2));
    return v;
}

} // namespace

TEST(Density, InteriorAndFaceCells)
{
    const LatticeCase s = setup(0.125, "const:1");
    const DensityField rho(s.ps);
    EXPECT_NEAR(rho(Vec3(0.5, 0.5, 0.5)), 1.0, 1e-12);
    EXPECT_NEAR(rho(Vec3(0.41, 0.3, 0.7)), 1.0, 1e-12);
    EXPECT_NEAR(rho(Vec3(0.01, 0.5, 0.5)), 2.0, 1e-12);
    EXPECT_NEAR(rho(Vec3(0.01, 0.99, 0.5)), 4.0, 1e-12);
    EXPECT_NEAR(rho.max_value(), 8.0, 1e-12);
}

TEST(Density, IntegratesToTotalMass)
{
    const LatticeCase s = setup(0.125, "const:1");
    const DensityField rho = empirical_density(s.ps);
    const auto vol = voronoi_volumes(s.ps);
    double integral = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < s.ps.size(); ++i) {
        integral += rho.cell_values()[i] * vol[i];
        mass += s.ps.mass(i);
    }
    EXPECT_NEAR(integral, mass, 1e-12);
}

TEST(EmpiricalKernel, SublatticePairs)
{
    const double eps = 0.125;
    const LatticeCase s = setup(eps, "const:1", LongRangeStorage::Explicit);
    const EmpiricalKernel G(s.ps, s.bonds);
    const Vec3 x(0.5, 0.5, 0.5);
    const Mat3 g = G(x, x + Vec3(2 * eps, 0, 0));
    EXPECT_NEAR(g(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(g(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(g(0, 2), 0.0, 1e-15);
    EXPECT_NEAR(g(1, 1), 0.0, 1e-15);
    EXPECT_EQ(G(x, x + Vec3(eps, 0, 0)).norm(), 0.0);
    EXPECT_EQ(G(x, x + Vec3(2 * eps, eps, 0)).norm(), 0.0);
    EXPECT_NEAR(G.pair_density(x, x + Vec3(2 * eps, 2 * eps, 0)), 1.0, 1e-12);
    EXPECT_EQ(G.pair_density(x, x + Vec3(eps, 0, 0)), 0.0);

    // Implicit storage gives the same kernel.
    const LatticeCase t = setup(eps, "const:1", LongRangeStorage::Implicit);
    const EmpiricalKernel H(t.ps, t.bonds);
    const Vec3 y(0.25, 0.75, 0.0);
    EXPECT_LT((H(x, y) - G(x, y)).norm(), 1e-12);
}

TEST(LimitKernel, Examples)
{
    const RadialProfile one = RadialProfile::constant(1.0);
    const Vec3 x(0.2, 0.2, 0.2);
    const Mat3 g = limit_kernel(one, 1.0, x, x + Vec3(0.5, 0, 0));
    EXPECT_NEAR(g(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(g(1, 1), 0.0, 1e-15);
    EXPECT_NEAR(limit_kernel(one, 0.125, x, x + Vec3(0.5, 0, 0))(0, 0), 0.125, 1e-15);
    EXPECT_THROW(limit_kernel(one, 1.0, x, x), DomainError);
    EXPECT_EQ(limit_kernel(RadialProfile::constant(0.0), 0.125, x, Vec3::Zero()).norm(), 0.0);

    const RadialProfile K = RadialProfile::parse("exp:2");
    const Vec3 y(0.9, 0.1, 0.6);
    const Mat3 h = limit_kernel(K, 0.125, x, y);
    EXPECT_NEAR(h.trace(), K((x - y).norm()) * 0.125, 1e-15);
    EXPECT_LT((h - h.transpose()).norm(), 1e-16);
    const Eigen::SelfAdjointEigenSolver<Mat3> es(h);
    EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-15);
    EXPECT_NEAR(es.eigenvalues()[1], 0.0, 1e-15);
}

TEST(TestFunctions, Factors)
{
    Factor1D g{Factor1D::Kind::Gaussian, 0.5, 0.2};
    EXPECT_NEAR(g(0.5), 1.0, 1e-15);
    // Mean against a fine midpoint sum.
    double acc = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k)
        acc += g(0.1 + 0.6 * (k + 0.5) / n);
    EXPECT_NEAR(g.average(0.1, 0.7), acc / n, 1e-9);
    Factor1D lin{Factor1D::Kind::Linear};
    EXPECT_NEAR(lin.average(0.2, 0.6), 0.4, 1e-15);
    EXPECT_EQ(Factor1D{}.average(0.0, 1.0), 1.0);
    const TestFunction z = zero_test_function();
    EXPECT_EQ(z(Vec3(0.3, 0.4, 0.5), Vec3(0.1, 0.2, 0.3)), 0.0);
    EXPECT_EQ(component_name(3), "yz");
    EXPECT_EQ(component_pair(5), (std::array<int, 2>{0, 1}));
}

TEST(Pairing, DiscreteMatchesPairSum)
{
    const double eps = 0.125;
    const LatticeCase ex = setup(eps, "exp:1", LongRangeStorage::Explicit);
    const LatticeCase im = setup(eps, "exp:1", LongRangeStorage::Implicit);
    const auto lib = test_function_library(DomainBox{});
    for (const std::string name : {"const", "x1y2", "gauss"}) {
        const TestFunction& f = library_function(lib, name);
        std::array<double, 6> oracle{};
        for (const Bond& b : ex.bonds.bonds()) {
            if (b.kind != BondKind::LongRange)
                continue;
            const Vec3 xi = ex.ps.position(b.i), xj = ex.ps.position(b.j);
            // both orders of the unordered pair
            const double w = cell_average(f.x_factors, xi, eps) * cell_average(f.y_factors, xj, eps) +
                             cell_average(f.x_factors, xj, eps) * cell_average(f.y_factors, xi, eps);
            const Mat3 e = b.direction * b.direction.transpose();
            for (int slot = 0; slot < 6; ++slot) {
                const auto kl = component_pair(slot);
                oracle[slot] += b.stiffness * e(kl[0], kl[1]) * w;
            }
        }
        const auto a = discrete_kernel_pairing(ex.ps, ex.bonds, f);
        const auto c = discrete_kernel_pairing(im.ps, im.bonds, f);
        const double scale = std::abs(oracle[0]) + 1e-300;
        for (int slot = 0; slot < 6; ++slot) {
            EXPECT_NEAR(a[slot], oracle[slot], 1e-11 * scale) << name << " " << component_name(slot);
            EXPECT_NEAR(c[slot], oracle[slot], 1e-11 * scale) << name << " " << component_name(slot);
        }
    }
}

TEST(Pairing, LimitConstantKernelIsExact)
{
    const auto lib = test_function_library(DomainBox{});
    const auto v = limit_kernel_pairing(RadialProfile::constant(1.0), 0.125, DomainBox{}, library_function(lib, "const"));
    for (int slot = 0; slot < 3; ++slot)
        EXPECT_NEAR(v[slot], 1.0 / 24.0, 1e-10);
    for (int slot = 3; slot < 6; ++slot)
        EXPECT_NEAR(v[slot], 0.0, 1e-12);
}

TEST(Pairing, LimitMatchesSeparationIntegral)
{
    // For f = 1 the pairing reduces to phi int G(d) prod_c (1 - |d_c|) dd over [-1, 1]^3.
    const RadialProfile K = RadialProfile::parse("exp:1");
    const double phi = 0.125;
    const int n = 160;
    const double h = 2.0 / n;
    std::array<double, 6> oracle{};
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                const Vec3 d(-1 + (a + 0.5) * h, -1 + (b + 0.5) * h, -1 + (c + 0.5) * h);
                const double w = (1 - std::abs(d[0])) * (1 - std::abs(d[1])) * (1 - std::abs(d[2])) * h * h * h;
                const Mat3 g = limit_kernel(K, phi, d, Vec3::Zero());
                for (int slot = 0; slot < 6; ++slot) {
                    const auto kl = component_pair(slot);
                    oracle[slot] += w * g(kl[0], kl[1]);
                }
            }
    const auto lib = test_function_library(DomainBox{});
    const auto v = limit_kernel_pairing(K, phi, DomainBox{}, library_function(lib, "const"));
    for (int slot = 0; slot < 3; ++slot)
        EXPECT_NEAR(v[slot], oracle[slot], 1e-4 * oracle[slot]);
    for (int slot = 3; slot < 6; ++slot)
        EXPECT_NEAR(v[slot], 0.0, 1e-10);
}

TEST(Pairing, DensityPairings)
{
    const LatticeCase s = setup(0.125, "const:1");
    const auto lib = test_function_library(DomainBox{});
    EXPECT_NEAR(limit_density_pairing(1.0, DomainBox{}, library_function(lib, "const")), 1.0, 1e-15);
    EXPECT_NEAR(limit_density_pairing(2.0, DomainBox{}, library_function(lib, "x1")), 1.0, 1e-15);
    double mass = 0.0;
    for (double m : s.ps.masses())
        mass += m;
    EXPECT_NEAR(discrete_density_pairing(s.ps, library_function(lib, "const")), mass, 1e-12);
}

TEST(WeakConvergence, ZeroFunctionHasNoGap)
{
    const WeakConvergenceReport r = weak_convergence_check({0.25, 0.125}, DomainBox{}, unit_model(), 2,
                                                           {zero_test_function()});
    EXPECT_TRUE(r.monotone);
    for (const auto& row : r.rows)
        EXPECT_EQ(row.gap, 0.0) << row.component;
}

TEST(WeakConvergence, LibraryGapsShrink)
{
    const std::vector<double> eps{0.125, 0.0625, 0.03125};
    const WeakConvergenceReport r =
        weak_convergence_check(eps, DomainBox{}, unit_model(), 2, test_function_library(DomainBox{}));
    EXPECT_TRUE(r.monotone);
    EXPECT_TRUE(r.violations.empty());
    std::vector<double> const_xx;
    for (const auto& row : r.rows) {
        if (row.component == "rho")
            EXPECT_LE(row.gap, 6.0 * row.eps) << row.test_function;
        if (row.test_function == "const" && row.component == "xx") {
            const_xx.push_back(row.gap);
            EXPECT_NEAR(row.limit, 1.0 / 24.0, 1e-10);
        }
    }
    ASSERT_EQ(const_xx.size(), 3u);
    EXPECT_LT(const_xx[1], const_xx[0]);
    EXPECT_LT(const_xx[2], const_xx[1]);
}
