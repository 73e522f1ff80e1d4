#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "nlhom/continuum.hpp"
#include "nlhom/discrete_dynamics.hpp"
#include "nlhom/errors.hpp"
#include "support.hpp"

using namespace nlhom;
using testing_support::random_field;

namespace {

const LimitKernel kNoKernel{RadialProfile::constant(0.0), 0.125};
const LimitKernel kUnitKernel{RadialProfile::constant(1.0), 0.125};

SymTensor4 isotropic_tensor() { return closed_form_tensor(isotropic_k1(1.0, 1.0), 1.0, 1.0); }

Vec3 bubble(const Vec3& x)
{
    return Vec3(std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::sin(M_PI * x[2]), 0, 0);
}

Field masked_random(const ContinuumOperator& op, unsigned seed)
{
    return random_field(3 * static_cast<Eigen::Index>(op.size()), seed).cwiseProduct(op.interior_mask());
}

// max_r |(L u)_r - exact_r| over interior nodes for u = bubble(x) e_1.
double local_truncation_error(int cells, const SymTensor4& a)
{
    const ContinuumGrid grid(DomainBox{}, cells);
    const ContinuumOperator op(grid, a, kNoKernel);
    const Field u = sample_on_grid(grid, bubble);
    Field lu;
    op.apply_local(u, lu);
    double err = 0.0;
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        if (grid.is_boundary(n))
            continue;
        const Vec3 x = grid.position(n);
        const Vec3 s(std::sin(M_PI * x[0]), std::sin(M_PI * x[1]), std::sin(M_PI * x[2]));
        const Vec3 c(std::cos(M_PI * x[0]), std::cos(M_PI * x[1]), std::cos(M_PI * x[2]));
        Mat3 hess; // d_p d_q of u_1
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) {
                double v = M_PI * M_PI;
                for (int k = 0; k < 3; ++k)
                    v *= (k == p || k == q) ? (p == q && k == p ? -s[k] : c[k]) : s[k];
                hess(p, q) = v;
            }
        for (int r = 0; r < 3; ++r) {
            double exact = 0.0;
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q)
                    exact -= 0.5 * (a(0, p, q, r) + a(0, q, p, r)) * hess(p, q);
            err = std::max(err, std::abs(lu[3 * static_cast<Eigen::Index>(n) + r] - exact));
        }
    }
    return err;
}

Eigen::MatrixXd dense_operator(const ContinuumOperator& op, std::vector<Eigen::Index>& dofs)
{
    dofs.clear();
    for (Eigen::Index d = 0; d < op.interior_mask().size(); ++d)
        if (op.interior_mask()[d] != 0.0)
            dofs.push_back(d);
    const Eigen::Index n = static_cast<Eigen::Index>(dofs.size());
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        Field e = Field::Zero(op.interior_mask().size());
        e[dofs[c]] = 1.0;
        const Field col = op.apply(e);
        for (Eigen::Index r = 0; r < n; ++r)
            A(r, c) = col[dofs[r]];
    }
    return A;
}

} // namespace

TEST(ContinuumGrid, Layout)
{
    const ContinuumGrid g(DomainBox{}, 4);
    EXPECT_EQ(g.node_count(), 125u);
    EXPECT_DOUBLE_EQ(g.spacing(), 0.25);
    const std::size_t n = g.linear({1, 2, 3});
    EXPECT_EQ(g.index(n), (Index3{1, 2, 3}));
    EXPECT_LT((g.position(n) - Vec3(0.25, 0.5, 0.75)).norm(), 1e-15);
    EXPECT_FALSE(g.is_boundary(n));
    EXPECT_TRUE(g.is_boundary(g.linear({0, 2, 2})));
    double total = 0.0;
    for (std::size_t k = 0; k < g.node_count(); ++k)
        total += g.cell_volume(k);
    EXPECT_NEAR(total, 1.0, 1e-14);
    EXPECT_THROW(ContinuumGrid(DomainBox{}, 1), ConfigurationError);
}

TEST(ContinuumOperator, RejectsBadInputs)
{
    const ContinuumGrid g(DomainBox{}, 4);
    EXPECT_THROW(ContinuumOperator(g, isotropic_tensor(), kNoKernel, std::vector<double>(g.node_count(), 0.0)),
                 ConfigurationError);
    EXPECT_THROW(ContinuumOperator(g, isotropic_tensor() * -1.0, kNoKernel), ConfigurationError);
    EXPECT_THROW(ContinuumOperator(g, isotropic_tensor(), kNoKernel, std::vector<double>(3, 1.0)), ConfigurationError);
}

TEST(ContinuumOperator, ZeroMapsToZero)
{
    const ContinuumGrid g(DomainBox{}, 6);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    EXPECT_EQ(op.apply(Field::Zero(3 * static_cast<Eigen::Index>(g.node_count()))).norm(), 0.0);
}

TEST(ContinuumOperator, LocalTruncationIsSecondOrder)
{
    const SymTensor4 a = closed_form_tensor(1.0, 0.7, 0.3);
    const double e8 = local_truncation_error(8, a), e16 = local_truncation_error(16, a),
                 e32 = local_truncation_error(32, a);
    // The Delta^4 term still shows at 8 cells; the ratio approaches 4 from below.
    EXPECT_GT(e8 / e16, 3.0);
    EXPECT_NEAR(e16 / e32, 4.0, 0.3);
    // |L u| peaks near a_1111 * 3 pi^2.
    EXPECT_LT(e32, 1e-2 * 3 * M_PI * M_PI * a(0, 0, 0, 0));
}

TEST(ContinuumOperator, SelfAdjointAndNonnegative)
{
    const ContinuumGrid g(DomainBox{}, 8);
    const ContinuumOperator op(g, closed_form_tensor(1.0, 0.7, 0.3), LimitKernel{RadialProfile::parse("exp:1"), 0.125});
    const Field u = masked_random(op, 1), w = masked_random(op, 2);
    Field su, sw;
    op.apply_stiffness(u, su);
    op.apply_stiffness(w, sw);
    const double lhs = op.grid_inner(su, w), rhs = op.grid_inner(u, sw);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(op.grid_inner(su, u)));
    EXPECT_GT(op.grid_inner(su, u), 0.0);
    Field nu;
    op.apply_nonlocal(u, nu);
    EXPECT_GE(op.grid_inner(nu, u), 0.0);
    op.apply_local(u, nu);
    EXPECT_GT(op.grid_inner(nu, u), 0.0);
}

TEST(ContinuumOperator, NonlocalMatchesDirectSum)
{
    const ContinuumGrid g(DomainBox{}, 6);
    const LimitKernel G{RadialProfile::parse("gauss:3"), 0.125};
    const ContinuumOperator op(g, isotropic_tensor(), G);
    const Field u = random_field(3 * static_cast<Eigen::Index>(g.node_count()), 4);
    Field nu;
    op.apply_nonlocal(u, nu);
    double err = 0.0, scale = 0.0;
    for (std::size_t x = 0; x < g.node_count(); ++x) {
        Vec3 acc = Vec3::Zero();
        if (!g.is_boundary(x))
            for (std::size_t y = 0; y < g.node_count(); ++y)
                if (y != x)
                    acc += g.cell_volume(y) * G(g.position(x) - g.position(y)) * (at(u, x) - at(u, y));
        err = std::max(err, (acc - at(nu, x)).cwiseAbs().maxCoeff());
        scale = std::max(scale, acc.cwiseAbs().maxCoeff());
    }
    EXPECT_LE(err, 1e-12 * scale);
}

TEST(ContinuumOperator, NonlocalAnnihilatesConstants)
{
    const ContinuumGrid g(DomainBox{}, 8);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    Field c(3 * static_cast<Eigen::Index>(g.node_count()));
    for (std::size_t n = 0; n < g.node_count(); ++n)
        at(c, n) = Vec3(1.0, -2.0, 0.5);
    Field nc;
    op.apply_nonlocal(c, nc);
    // Scale: the diagonal part alone.
    const Field e = Field::Unit(c.size(), 3 * static_cast<Eigen::Index>(g.linear({4, 4, 4})));
    Field ne;
    op.apply_nonlocal(e, ne);
    EXPECT_LE(nc.cwiseAbs().maxCoeff(), 1e-12 * ne.cwiseAbs().maxCoeff());
}

TEST(ContinuumOperator, SinglePairContribution)
{
    // Switching on u(y) at separation 0.5 e_1 changes (N u)(x) by -dx^3 G(x - y) u(y) = -0.125 dx^3 e_1.
    const ContinuumGrid g(DomainBox{}, 4);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    const std::size_t x = g.linear({1, 2, 2}), y = g.linear({3, 2, 2});
    Field a = zero_field(g.node_count());
    at(a, x) = Vec3(1, 0, 0);
    Field b = a;
    at(b, y) = Vec3(1, 0, 0);
    Field na, nb;
    op.apply_nonlocal(a, na);
    op.apply_nonlocal(b, nb);
    const double dx3 = std::pow(g.spacing(), 3);
    EXPECT_NEAR(at(nb, x)[0] - at(na, x)[0], -0.125 * dx3, 1e-15);
    EXPECT_NEAR(at(nb, x)[1] - at(na, x)[1], 0.0, 1e-15);
}

TEST(ContinuumOperator, LambdaMaxMatchesDenseSpectrum)
{
    const ContinuumGrid g(DomainBox{}, 5);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    std::vector<Eigen::Index> dofs;
    const Eigen::MatrixXd A = dense_operator(op, dofs);
    EXPECT_LE((A - A.transpose()).norm(), 1e-12 * A.norm());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    const double top = es.eigenvalues().maxCoeff();
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    EXPECT_NEAR(op.lambda_max(), top, 1e-3 * top);
    EXPECT_NEAR(op.stability_bound(), 2.0 / std::sqrt(op.lambda_max()), 1e-12);
}

TEST(Leapfrog, ZeroStaysZero)
{
    const ContinuumGrid g(DomainBox{}, 4);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    const Field z = zero_field(g.node_count());
    const double dt = choose_time_step(op.stability_bound(), 0.5, 1.0);
    const ContinuumTrajectory traj = simulate_continuum(op, {z, z}, 1.0, dt, 1);
    for (const auto& s : traj.samples)
        EXPECT_EQ(s.u.norm() + s.v.norm(), 0.0);
}

TEST(Leapfrog, TimeReversible)
{
    const ContinuumGrid g(DomainBox{}, 6);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    ContinuumState s{masked_random(op, 5), masked_random(op, 6), 0.0};
    const ContinuumState start = s;
    const double dt = 0.5 * op.stability_bound();
    for (int k = 0; k < 100; ++k)
        step_leapfrog(op, s, dt);
    for (int k = 0; k < 100; ++k)
        step_leapfrog(op, s, -dt);
    EXPECT_LE((s.u - start.u).norm(), 1e-12 * start.u.norm());
    EXPECT_LE((s.v - start.v).norm(), 1e-12 * start.v.norm());
}

TEST(Leapfrog, DominantFrequencyMatchesDenseEigenmode)
{
    const ContinuumGrid g(DomainBox{}, 6);
    const ContinuumOperator op(g, isotropic_tensor(), kNoKernel);
    std::vector<Eigen::Index> dofs;
    const Eigen::MatrixXd A = dense_operator(op, dofs);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));

    const Field a = sample_on_grid(g, [](const Vec3& x) { return Vec3(std::sin(M_PI * x[0]) * bubble(x)[0], 0, 0); });
    Eigen::VectorXd ar(static_cast<Eigen::Index>(dofs.size()));
    for (std::size_t k = 0; k < dofs.size(); ++k)
        ar[static_cast<Eigen::Index>(k)] = a[dofs[k]];
    const Eigen::VectorXd coeff = es.eigenvectors().transpose() * ar;
    Eigen::Index dominant = 0;
    coeff.cwiseAbs().maxCoeff(&dominant);
    const double omega = std::sqrt(es.eigenvalues()[dominant]);

    const double T = 60.0 * 2 * M_PI / omega;
    const double dt = 0.2 * op.stability_bound();
    const int steps = static_cast<int>(std::ceil(T / dt));
    const ContinuumTrajectory traj =
        simulate_continuum(op, {a, zero_field(g.node_count())}, steps * dt, dt, 1);
    std::vector<double> sig, ts;
    for (const auto& s : traj.samples) {
        sig.push_back(op.mass_inner(s.u, a));
        ts.push_back(s.t);
    }
    const double span = ts.back();
    // Hann-windowed periodogram.
    auto power = [&](double w) {
        double re = 0.0, im = 0.0;
        for (std::size_t k = 0; k < sig.size(); ++k) {
            const double win = 0.5 - 0.5 * std::cos(2 * M_PI * ts[k] / span);
            re += win * sig[k] * std::cos(w * ts[k]);
            im += win * sig[k] * std::sin(w * ts[k]);
        }
        return re * re + im * im;
    };
    const double wmax = std::sqrt(es.eigenvalues().maxCoeff());
    const double step = 2 * M_PI / (8 * span);
    double best = step, best_p = 0.0;
    for (double w = step; w < wmax; w += step)
        if (const double p = power(w); p > best_p) {
            best_p = p;
            best = w;
        }
    double lo = best - step, hi = best + step;
    for (int it = 0; it < 60; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        if (power(m1) < power(m2))
            lo = m1;
        else
            hi = m2;
    }
    EXPECT_NEAR(0.5 * (lo + hi), omega, 1e-2 * omega);
}

TEST(Leapfrog, EnergyIsConserved)
{
    const ContinuumGrid g(DomainBox{}, 8);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    const Field a = sample_on_grid(g, bubble);
    const double T = 5.0;
    const double dt = choose_time_step(op.stability_bound(), 0.5, T);
    const ContinuumTrajectory traj = simulate_continuum(op, {a, zero_field(g.node_count())}, T, dt, 10);
    EXPECT_LE(traj.energy_drift, 1e-4);
    EXPECT_GT(traj.initial_energy, 0.0);
    EXPECT_THROW(simulate_continuum(op, {a, zero_field(g.node_count())}, T, 1.01 * op.stability_bound(), 1),
                 ConfigurationError);
}

TEST(ContinuumStationary, ZeroData)
{
    const ContinuumGrid g(DomainBox{}, 4);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    const Field z = zero_field(g.node_count());
    EXPECT_EQ(solve_stationary_continuum(op, {z, z}, 2.0).u.norm(), 0.0);
}

TEST(ContinuumStationary, IsTheFunctionalMinimizer)
{
    const ContinuumGrid g(DomainBox{}, 6);
    const ContinuumOperator op(g, closed_form_tensor(1.0, 0.7, 0.3), kUnitKernel);
    const ContinuumInitialData init{masked_random(op, 7), masked_random(op, 8)};
    const ContinuumStationary st = solve_stationary_continuum(op, init, 1.5);
    EXPECT_LE(st.residual, 1e-10);
    const double phi0 = continuum_functional(op, init, 1.5, st.u);
    for (unsigned k = 0; k < 100; ++k)
        EXPECT_GE(continuum_functional(op, init, 1.5, st.u + 1e-3 * masked_random(op, 200 + k)), phi0);
}

TEST(ContinuumStationary, LaplaceTransformOfTrajectory)
{
    const ContinuumGrid g(DomainBox{}, 8);
    const ContinuumOperator op(g, isotropic_tensor(), kUnitKernel);
    const ContinuumInitialData init{sample_on_grid(g, bubble), zero_field(g.node_count())};
    const double lambda = 2.0;
    const double T = std::ceil(std::log(1e8) / lambda);
    const double dt = choose_time_step(op.stability_bound(), 0.1, T);
    const ContinuumTrajectory traj = simulate_continuum(op, init, T, dt, 1);
    const Field q = continuum_laplace_quadrature(traj, lambda);
    const ContinuumStationary st = solve_stationary_continuum(op, init, lambda);
    EXPECT_LE(op.mass_norm(q - st.u), 1e-3 * op.mass_norm(st.u));

    const ContinuumTrajectory short_traj = simulate_continuum(op, init, 2.0, choose_time_step(op.stability_bound(), 0.5, 2.0), 1);
    EXPECT_THROW(continuum_laplace_quadrature(short_traj, lambda), PreconditionError);
}

TEST(ContinuumStationary, GridRefinementIsSecondOrder)
{
    std::vector<Field> sols;
    std::vector<ContinuumGrid> grids;
    for (int cells : {8, 16, 32}) {
        const ContinuumGrid g(DomainBox{}, cells);
        const ContinuumOperator op(g, isotropic_tensor(), kNoKernel);
        sols.push_back(solve_stationary_continuum(op, {sample_on_grid(g, bubble), zero_field(g.node_count())}, 2.0).u);
        grids.push_back(g);
    }
    // Compare on the coarse nodes.
    auto diff = [&](std::size_t fine) {
        const int r = grids[fine].cells() / 8, rc = grids[fine - 1].cells() / 8;
        double acc = 0.0;
        for (std::size_t n = 0; n < grids[0].node_count(); ++n) {
            const Index3 c = grids[0].index(n);
            const std::size_t a = grids[fine].linear({c[0] * r, c[1] * r, c[2] * r});
            const std::size_t b = grids[fine - 1].linear({c[0] * rc, c[1] * rc, c[2] * rc});
            acc += (at(sols[fine], a) - at(sols[fine - 1], b)).squaredNorm();
        }
        return std::sqrt(acc);
    };
    EXPECT_NEAR(diff(1) / diff(2), 4.0, 1.0);
}

TEST(Isotropy, Gate)
{
    const IsotropyResult iso = isotropy_gate(isotropic_tensor());
    EXPECT_TRUE(iso.isotropic);
    EXPECT_LE(iso.residual, 1e-12);
    const IsotropyResult cubic = isotropy_gate(closed_form_tensor(1, 1, 1));
    EXPECT_FALSE(cubic.isotropic);
    EXPECT_NEAR(cubic.residual, 0.392, 5e-4);
    EXPECT_NEAR(isotropic_k1(1.0, 0.0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(GridInterpolant, ReproducesTrilinearFields)
{
    const ContinuumGrid g(DomainBox{}, 4);
    auto f = [](const Vec3& x) { return Vec3(1 + x[0] - 2 * x[1] + x[0] * x[1] * x[2], x[2], 3.0); };
    Field v = zero_field(g.node_count());
    for (std::size_t n = 0; n < g.node_count(); ++n)
        at(v, n) = f(g.position(n));
    const GridInterpolant it(g, v);
    for (const Vec3& x : {Vec3(0.1, 0.2, 0.3), Vec3(0.99, 0.5, 0.01), Vec3(1, 1, 1)})
        EXPECT_LT((it(x) - f(x)).norm(), 1e-13);

    const Field s = sample_on_grid(g, [](const Vec3&) { return Vec3(1, 1, 1); });
    for (std::size_t n = 0; n < g.node_count(); ++n)
        EXPECT_EQ(at(s, n).norm() == 0.0, g.is_boundary(n));
}
