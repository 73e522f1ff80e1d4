#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "nlhom/errors.hpp"
#include "nlhom/field_reconstruction.hpp"
#include "support.hpp"

using namespace nlhom;
using testing_support::random_free_field;
using testing_support::unit_lattice;
using testing_support::unit_model;

namespace {

Field sample(const ParticleSystem& ps, const VectorFunction& f)
{
    Field u = zero_field(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i)
        at(u, i) = f(ps.position(i));
    return u;
}

Vec3 sine(const Vec3& x)
{
    const double s = std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::sin(M_PI * x[2]);
    return Vec3(s, -0.5 * s, 0.25 * s);
}

} // namespace

TEST(Reconstruction, ReproducesNodalValues)
{
    const ParticleSystem ps = build_cubic_lattice(unit_lattice(0.25));
    const Field u = testing_support::random_field(3 * static_cast<Eigen::Index>(ps.size()), 3);
    const PiecewiseConstantField pc(ps, u);
    const SplineField sp(ps, u);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EXPECT_LT((pc(ps.position(i)) - at(u, i)).norm(), 1e-14);
        EXPECT_LT((sp(ps.position(i)) - at(u, i)).norm(), 1e-14);
        EXPECT_LT((evaluate_pc(pc, ps.position(i)) - at(u, i)).norm(), 1e-14);
    }
}

TEST(Reconstruction, ConstantsAndAffineFields)
{
    const ParticleSystem ps = build_cubic_lattice(unit_lattice(0.25));
    const Vec3 c(0.3, -1.0, 2.0);
    Mat3 M;
    M << 1, 2, 3, -1, 0.5, 0, 0.2, 0.1, -2;
    const Field constant = sample(ps, [&](const Vec3&) { return c; });
    const Field affine = sample(ps, [&](const Vec3& x) { return Vec3(M * x + c); });
    const PiecewiseConstantField pc(ps, constant);
    const SplineField sc(ps, constant), sa(ps, affine);
    for (const Vec3& x : {Vec3(0.1, 0.2, 0.3), Vec3(0.77, 0.01, 0.5), Vec3(1, 1, 1), Vec3(0.125, 0.6, 0.9)}) {
        EXPECT_LT((pc(x) - c).norm(), 1e-14);
        EXPECT_LT((sc(x) - c).norm(), 1e-14);
        EXPECT_LT((sa(x) - (M * x + c)).norm(), 1e-13);
        EXPECT_LT((evaluate_spline(sa, x) - (M * x + c)).norm(), 1e-13);
    }
}

TEST(Reconstruction, PiecewiseConstantUsesNearestLatticePoint)
{
    const ParticleSystem ps = build_cubic_lattice(unit_lattice(0.25));
    const Field u = sample(ps, [](const Vec3& x) { return x; });
    const PiecewiseConstantField pc(ps, u);
    EXPECT_LT((pc(Vec3(0.3, 0.62, 0.99)) - Vec3(0.25, 0.5, 1.0)).norm(), 1e-14);
    EXPECT_LT((pc(Vec3(0.01, 0.13, 0.4)) - Vec3(0.0, 0.25, 0.5)).norm(), 1e-14);
}

TEST(Reconstruction, OutsideTheBoxIsADomainError)
{
    const ParticleSystem ps = build_cubic_lattice(unit_lattice(0.25));
    const Field u = zero_field(ps.size());
    const PiecewiseConstantField pc(ps, u);
    const SplineField sp(ps, u);
    EXPECT_THROW(pc(Vec3(1.2, 0.5, 0.5)), DomainError);
    EXPECT_THROW(sp(Vec3(0.5, -0.1, 0.5)), DomainError);
}

TEST(Reconstruction, L2Distance)
{
    const DomainBox box;
    auto zero = [](const Vec3&) { return Vec3::Zero().eval(); };
    auto c = [](const Vec3&) { return Vec3(3, 4, 0); };
    EXPECT_EQ(l2_difference(c, c, box, 8), 0.0);
    EXPECT_NEAR(l2_difference(c, zero, box, 8), 5.0, 1e-14);
    EXPECT_NEAR(l2_norm([](const Vec3& x) { return Vec3(x[0], 0, 0); }, box, 64), std::sqrt(1.0 / 3.0), 1e-4);
}

TEST(Reconstruction, GapHalvesWithSpacing)
{
    const DomainBox box;
    std::vector<double> gaps;
    for (double eps : {0.25, 0.125, 0.0625, 0.03125}) {
        const ParticleSystem ps = build_cubic_lattice(unit_lattice(eps));
        const Field u = sample(ps, sine);
        const PiecewiseConstantField pc(ps, u);
        const SplineField sp(ps, u);
        const int cells = static_cast<int>(std::lround(4.0 / eps));
        gaps.push_back(l2_difference(pc, sp, box, cells));
    }
    for (std::size_t k = 1; k < gaps.size(); ++k) {
        EXPECT_LT(gaps[k], gaps[k - 1]);
        EXPECT_NEAR(gaps[k - 1] / gaps[k], 2.0, 0.5) << "step " << k;
    }
}

TEST(Korn, ConstantIsPositive)
{
    for (double eps : {0.25, 0.125}) {
        const LatticeConfig cfg = unit_lattice(eps);
        const ParticleSystem ps = build_cubic_lattice(cfg);
        const BondList bonds = assemble_bonds(ps, unit_model(), cfg);
        const KornResult k = korn_constant(ps, bonds);
        EXPECT_GT(k.constant, 1e-3);
        EXPECT_GT(k.lanczos_steps, 0);
        EXPECT_NEAR(rayleigh_quotient(ps, bonds, k.minimizer), k.constant, 1e-6 * k.constant);
        for (unsigned seed = 0; seed < 20; ++seed)
            EXPECT_GE(rayleigh_quotient(ps, bonds, random_free_field(ps, seed)), k.constant - 1e-10);
    }
}

TEST(Korn, MatchesDenseGeneralizedEigenproblem)
{
    const LatticeConfig cfg = unit_lattice(0.25);
    const ParticleSystem ps = build_cubic_lattice(cfg);
    const BondList bonds = assemble_bonds(ps, unit_model(), cfg);
    std::vector<Eigen::Index> dofs;
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (!ps.is_fixed(i))
            for (int c = 0; c < 3; ++c)
                dofs.push_back(3 * static_cast<Eigen::Index>(i) + c);
    const Eigen::Index n = static_cast<Eigen::Index>(dofs.size());
    const Eigen::Index full = 3 * static_cast<Eigen::Index>(ps.size());
    auto unit = [&](Eigen::Index a) {
        Field e = Field::Zero(full);
        e[dofs[a]] = 1.0;
        return e;
    };
    Eigen::MatrixXd K(n, n), B(n, n);
    std::vector<std::pair<double, double>> diag(static_cast<std::size_t>(n));
    for (Eigen::Index a = 0; a < n; ++a)
        diag[a] = korn_forms(ps, bonds, unit(a));
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = a; b < n; ++b) {
            if (a == b) {
                K(a, a) = diag[a].first;
                B(a, a) = diag[a].second;
                continue;
            }
            const auto s = korn_forms(ps, bonds, unit(a) + unit(b));
            K(a, b) = K(b, a) = 0.5 * (s.first - diag[a].first - diag[b].first);
            B(a, b) = B(b, a) = 0.5 * (s.second - diag[a].second - diag[b].second);
        }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, B);
    const double oracle = es.eigenvalues()[0];
    EXPECT_NEAR(korn_constant(ps, bonds).constant, oracle, 1e-6 * oracle);
}
