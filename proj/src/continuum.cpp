#include "nlhom/continuum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nlhom/errors.hpp"

namespace nlhom {

ContinuumGrid::ContinuumGrid(const DomainBox& box, int cells) : box_(box), cells_(cells)
{
    box.validate();
    if (cells < 2)
        throw ConfigurationError("continuum grid needs at least two cells per side");
    spacing_ = box.side / cells;
}

std::size_t ContinuumGrid::node_count() const
{
    const std::size_t p = static_cast<std::size_t>(cells_) + 1;
    return p * p * p;
}

std::size_t ContinuumGrid::linear(const Index3& idx) const
{
    const std::size_t p = static_cast<std::size_t>(cells_) + 1;
    return (static_cast<std::size_t>(idx[0]) * p + static_cast<std::size_t>(idx[1])) * p +
           static_cast<std::size_t>(idx[2]);
}

Index3 ContinuumGrid::index(std::size_t node) const
{
    const std::size_t p = static_cast<std::size_t>(cells_) + 1;
    return {static_cast<int>(node / (p * p)), static_cast<int>((node / p) % p), static_cast<int>(node % p)};
}

Vec3 ContinuumGrid::position(std::size_t node) const
{
    const Index3 g = index(node);
    return box_.origin + spacing_ * Vec3(g[0], g[1], g[2]);
}

bool ContinuumGrid::is_boundary(std::size_t node) const
{
    const Index3 g = index(node);
    for (int c = 0; c < 3; ++c)
        if (g[c] == 0 || g[c] == cells_)
            return true;
    return false;
}

double ContinuumGrid::cell_volume(std::size_t node) const
{
    const Index3 g = index(node);
    double v = spacing_ * spacing_ * spacing_;
    for (int c = 0; c < 3; ++c)
        if (g[c] == 0 || g[c] == cells_)
            v *= 0.5;
    return v;
}

Field ContinuumGrid::interior_mask() const
{
    Field m(3 * static_cast<Eigen::Index>(node_count()));
    for (std::size_t n = 0; n < node_count(); ++n)
        m.segment<3>(3 * static_cast<Eigen::Index>(n)).setConstant(is_boundary(n) ? 0.0 : 1.0);
    return m;
}

Mat3 LimitKernel::operator()(const Vec3& d) const
{
    const double r2 = d.squaredNorm();
    if (r2 == 0.0)
        throw DomainError("limit kernel is singular at zero separation");
    return profile(std::sqrt(r2)) * phi * d * d.transpose() / r2;
}

ContinuumOperator::ContinuumOperator(const ContinuumGrid& grid, const SymTensor4& tensor, const LimitKernel& kernel,
                                     std::vector<double> density)
    : grid_(grid), tensor_(tensor), kernel_(kernel), density_(std::move(density))
{
    const std::size_t nodes = grid_.node_count();
    if (density_.empty())
        density_.assign(nodes, 1.0);
    if (density_.size() != nodes)
        throw ConfigurationError("density must have one value per grid node");
    for (double r : density_)
        if (!(r > 0.0) || !std::isfinite(r))
            throw ConfigurationError("density must be positive and finite");
    if (!tensor_.is_psd())
        throw ConfigurationError("elasticity tensor is not positive semidefinite");

    mask_ = grid_.interior_mask();
    const double h3 = std::pow(grid_.spacing(), 3);
    mass_weight_.resize(3 * static_cast<Eigen::Index>(nodes));
    for (std::size_t n = 0; n < nodes; ++n)
        mass_weight_.segment<3>(3 * static_cast<Eigen::Index>(n)).setConstant(density_[n] * h3);

    for (int r = 0; r < 3; ++r)
        for (int n = 0; n < 3; ++n)
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q)
                    coef_[r][n][p][q] = 0.5 * (tensor_(n, p, q, r) + tensor_(n, q, p, r));

    if (!kernel_.is_zero()) {
        const double h = grid_.spacing();
        const LimitKernel k = kernel_;
        const int pts = grid_.points_per_side();
        conv_ = std::make_unique<KernelConvolution>(Index3{pts, pts, pts}, [k, h](const Index3& off) -> Sym6 {
            if (off[0] == 0 && off[1] == 0 && off[2] == 0)
                return {};
            return to_sym6(k(h * Vec3(off[0], off[1], off[2])));
        });
        std::vector<double> w(nodes);
        for (std::size_t n = 0; n < nodes; ++n)
            w[n] = grid_.cell_volume(n);
        nonlocal_diag_.resize(6 * nodes);
        conv_->apply_scalar(w, nonlocal_diag_);
    }
}

ContinuumOperator::~ContinuumOperator() = default;
ContinuumOperator::ContinuumOperator(ContinuumOperator&&) noexcept = default;

void ContinuumOperator::apply_local(const Field& u_in, Field& out) const
{
    const Field u = u_in.cwiseProduct(mask_);
    out = Field::Zero(u.size());
    const int m = grid_.cells();
    const double inv = 1.0 / (grid_.spacing() * grid_.spacing());
    auto val = [&](int i, int j, int k, int c) {
        return u[3 * static_cast<Eigen::Index>(grid_.linear({i, j, k})) + c];
    };
    for (int i = 1; i < m; ++i)
        for (int j = 1; j < m; ++j)
            for (int k = 1; k < m; ++k) {
                const Index3 g{i, j, k};
                double d[3][3][3]; // d[p][q][n] = D_pq u_n
                for (int n = 0; n < 3; ++n) {
                    const double c0 = val(i, j, k, n);
                    for (int p = 0; p < 3; ++p) {
                        Index3 a = g, b = g;
                        ++a[p];
                        --b[p];
                        d[p][p][n] = (val(a[0], a[1], a[2], n) - 2.0 * c0 + val(b[0], b[1], b[2], n)) * inv;
                        for (int q = p + 1; q < 3; ++q) {
                            Index3 pp = g, pm = g, mp = g, mm = g;
                            ++pp[p], ++pp[q];
                            ++pm[p], --pm[q];
                            --mp[p], ++mp[q];
                            --mm[p], --mm[q];
                            const double v = (val(pp[0], pp[1], pp[2], n) - val(pm[0], pm[1], pm[2], n) -
                                              val(mp[0], mp[1], mp[2], n) + val(mm[0], mm[1], mm[2], n)) *
                                             0.25 * inv;
                            d[p][q][n] = v;
                            d[q][p][n] = v;
                        }
                    }
                }
                const Eigen::Index base = 3 * static_cast<Eigen::Index>(grid_.linear(g));
                for (int r = 0; r < 3; ++r) {
                    double acc = 0.0;
                    for (int n = 0; n < 3; ++n)
                        for (int p = 0; p < 3; ++p)
                            for (int q = 0; q < 3; ++q)
                                acc += coef_[r][n][p][q] * d[p][q][n];
                    out[base + r] = -acc;
                }
            }
}

void ContinuumOperator::apply_nonlocal(const Field& u, Field& out) const
{
    out = Field::Zero(u.size());
    if (!conv_)
        return;
    // sum_y w_y G(x - y) u(y) with the clipped cell weights
    Field wu = u;
    for (std::size_t n = 0; n < grid_.node_count(); ++n)
        wu.segment<3>(3 * static_cast<Eigen::Index>(n)) *= grid_.cell_volume(n);
    std::vector<double> y(static_cast<std::size_t>(u.size()));
    conv_->apply_vector(std::span<const double>(wu.data(), static_cast<std::size_t>(wu.size())), y);
    for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        if (grid_.is_boundary(n))
            continue;
        Sym6 s;
        std::copy_n(nonlocal_diag_.begin() + 6 * static_cast<std::ptrdiff_t>(n), 6, s.begin());
        const Eigen::Index b = 3 * static_cast<Eigen::Index>(n);
        const Vec3 un = u.segment<3>(b);
        out.segment<3>(b) = from_sym6(s) * un - Vec3(y[b], y[b + 1], y[b + 2]);
    }
}

void ContinuumOperator::apply_stiffness(const Field& u, Field& out) const
{
    apply_local(u, out);
    if (conv_) {
        Field nl;
        apply_nonlocal(u.cwiseProduct(mask_), nl);
        out += nl;
    }
}

void ContinuumOperator::apply(const Field& u, Field& out) const
{
    apply_stiffness(u, out);
    const double h3 = std::pow(grid_.spacing(), 3);
    out.array() *= h3 / mass_weight_.array();
}

Field ContinuumOperator::apply(const Field& u) const
{
    Field out;
    apply(u, out);
    return out;
}

double ContinuumOperator::grid_inner(const Field& a, const Field& b) const
{
    return std::pow(grid_.spacing(), 3) * a.dot(b);
}

double ContinuumOperator::mass_inner(const Field& a, const Field& b) const
{
    return (a.array() * mass_weight_.array() * b.array()).sum();
}

double ContinuumOperator::mass_norm(const Field& a) const { return std::sqrt(mass_inner(a, a)); }

Field ContinuumOperator::diagonal() const
{
    const double inv = 1.0 / (grid_.spacing() * grid_.spacing());
    const double h3 = std::pow(grid_.spacing(), 3);
    Field d = Field::Zero(mask_.size());
    for (std::size_t n = 0; n < grid_.node_count(); ++n) {
        if (grid_.is_boundary(n))
            continue;
        for (int r = 0; r < 3; ++r) {
            double v = 0.0;
            for (int p = 0; p < 3; ++p)
                v += 2.0 * coef_[r][r][p][p] * inv;
            if (conv_)
                v += nonlocal_diag_[6 * n + static_cast<std::size_t>(r)];
            const Eigen::Index k = 3 * static_cast<Eigen::Index>(n) + r;
            d[k] = v * h3 / mass_weight_[k];
        }
    }
    return d;
}

double ContinuumOperator::lambda_max(int steps) const
{
    if (!lambda_max_) {
        LinearMap op = [this](const Field& in, Field& out) { apply(in, out); };
        lambda_max_ = power_iteration(op, mask_.size(), mass_weight_, mask_, steps);
    }
    return *lambda_max_;
}

double ContinuumOperator::stability_bound() const
{
    const double lm = lambda_max();
    return lm > 0.0 ? 2.0 / std::sqrt(lm) : std::numeric_limits<double>::infinity();
}

double continuum_energy(const ContinuumOperator& op, const ContinuumState& state)
{
    Field au;
    op.apply(state.u, au);
    return 0.5 * op.mass_inner(state.v, state.v) + 0.5 * op.mass_inner(au, state.u);
}

double continuum_modified_energy(const ContinuumOperator& op, const ContinuumState& state, double dt)
{
    Field au;
    op.apply(state.u, au);
    return 0.5 * op.mass_inner(state.v, state.v) + 0.5 * op.mass_inner(au, state.u) -
           dt * dt / 8.0 * op.mass_inner(au, au);
}

void step_leapfrog(const ContinuumOperator& op, ContinuumState& state, double dt)
{
    Field acc;
    op.apply(state.u, acc);
    state.v -= 0.5 * dt * acc;
    state.u += dt * state.v;
    op.project(state.u);
    op.apply(state.u, acc);
    state.v -= 0.5 * dt * acc;
    op.project(state.v);
    state.t += dt;
}

namespace {

void check_grid_field(const ContinuumOperator& op, const Field& f, const char* what)
{
    if (f.size() != op.interior_mask().size())
        throw ContractViolation(std::string(what) + " has the wrong size");
    for (Eigen::Index k = 0; k < f.size(); ++k)
        if (op.interior_mask()[k] == 0.0 && f[k] != 0.0)
            throw ContractViolation(std::string(what) + " is nonzero on the boundary");
}

} // namespace

ContinuumTrajectory simulate_continuum(const ContinuumOperator& op, const ContinuumInitialData& init, double T,
                                       double dt, int sample_every)
{
    check_grid_field(op, init.a, "initial displacement");
    check_grid_field(op, init.b, "initial velocity");
    if (!(T >= 0.0))
        throw ConfigurationError("final time must be nonnegative");
    if (sample_every < 1)
        throw ConfigurationError("sample_every must be at least 1");
    const double bound = op.stability_bound();
    if (!(std::abs(dt) < bound) || dt == 0.0) {
        std::ostringstream msg;
        msg << "time step " << dt << " is not below the estimated stability bound " << bound;
        throw ConfigurationError(msg.str());
    }
    const double ratio = T / dt;
    const double steps_d = std::round(ratio);
    if (std::abs(ratio - steps_d) > 1e-9 * std::max(1.0, ratio))
        throw ConfigurationError("final time is not an integer multiple of the time step");

    ContinuumTrajectory traj;
    traj.dt = dt;
    traj.steps = static_cast<std::size_t>(steps_d);
    traj.stability_bound = bound;

    ContinuumState state{init.a, init.b, 0.0};
    const double e0 = continuum_energy(op, state);
    const double eh0 = continuum_modified_energy(op, state, dt);
    traj.initial_energy = e0;
    traj.samples.push_back(state);
    traj.sample_energy.push_back(e0);

    for (std::size_t k = 1; k <= traj.steps; ++k) {
        step_leapfrog(op, state, dt);
        if (k == traj.steps)
            state.t = T;
        if (k % static_cast<std::size_t>(sample_every) == 0 || k == traj.steps) {
            const double e = continuum_energy(op, state);
            traj.samples.push_back(state);
            traj.sample_energy.push_back(e);
            if (e0 > 0.0) {
                traj.energy_fluctuation = std::max(traj.energy_fluctuation, std::abs(e - e0) / e0);
                const double eh = continuum_modified_energy(op, state, dt);
                traj.energy_drift = std::max(traj.energy_drift, std::abs(eh - eh0) / eh0);
            }
        }
    }
    return traj;
}

ContinuumStationary solve_stationary_continuum(const ContinuumOperator& op, const ContinuumInitialData& init,
                                               double lambda, const CgOptions& options)
{
    if (!(lambda > 0.0))
        throw ConfigurationError("spectral parameter lambda must be positive");
    check_grid_field(op, init.a, "initial displacement");
    check_grid_field(op, init.b, "initial velocity");
    const double l2 = lambda * lambda;
    Field rhs = lambda * init.a + init.b;
    op.project(rhs);

    LinearMap apply = [&](const Field& in, Field& out) {
        op.apply(in, out);
        out += l2 * in.cwiseProduct(op.interior_mask());
    };
    const Field diag = op.diagonal().array() + l2;
    LinearMap precond = [&](const Field& in, Field& out) {
        out = in.cwiseQuotient(diag).cwiseProduct(op.interior_mask());
    };
    CgOptions opts = options;
    if (opts.max_iterations <= 0)
        opts.max_iterations = std::max(10, static_cast<int>(50.0 * std::sqrt(op.interior_mask().sum())));

    ContinuumStationary out;
    out.lambda = lambda;
    const CgResult r = conjugate_gradient(apply, rhs, out.u, op.mass_weight(), precond, opts);
    out.residual = r.relative_residual;
    out.iterations = r.iterations;
    out.residual_history = r.history;
    return out;
}

double continuum_functional(const ContinuumOperator& op, const ContinuumInitialData& init, double lambda,
                            const Field& v)
{
    Field av;
    op.apply(v, av);
    const Field f = lambda * init.a + init.b;
    return op.mass_inner(av, v) + lambda * lambda * op.mass_inner(v, v) - 2.0 * op.mass_inner(f, v);
}

Field continuum_laplace_quadrature(const ContinuumTrajectory& trajectory, double lambda)
{
    if (trajectory.samples.empty())
        throw PreconditionError("empty trajectory");
    const double T = trajectory.samples.back().t;
    if (!(std::exp(-lambda * T) <= 1e-8))
        throw PreconditionError("trajectory is too short: exp(-lambda T) = " + std::to_string(std::exp(-lambda * T)) +
                                " exceeds 1e-8");
    Field acc = Field::Zero(trajectory.samples.front().u.size());
    for (std::size_t k = 1; k < trajectory.samples.size(); ++k) {
        const auto& s0 = trajectory.samples[k - 1];
        const auto& s1 = trajectory.samples[k];
        acc += 0.5 * (s1.t - s0.t) * (std::exp(-lambda * s0.t) * s0.u + std::exp(-lambda * s1.t) * s1.u);
    }
    return acc;
}

IsotropyResult isotropy_gate(const SymTensor4& tensor, double tol)
{
    const double a1111 = tensor(0, 0, 0, 0);
    const double a1122 = tensor(0, 0, 1, 1);
    const double a1212 = tensor(0, 1, 0, 1);
    IsotropyResult out;
    if (a1111 == 0.0) {
        out.residual = std::numeric_limits<double>::infinity();
        return out;
    }
    out.residual = std::abs(a1111 - 2.0 * a1212 - a1122) / std::abs(a1111);
    out.isotropic = out.residual <= tol;
    return out;
}

double isotropic_k1(double k2, double k3) { return k2 / std::sqrt(2.0) + 8.0 * k3 / (3.0 * std::sqrt(3.0)); }

GridInterpolant::GridInterpolant(const ContinuumGrid& grid, const Field& values) : grid_(grid), values_(values)
{
    if (point_count(values) != grid.node_count())
        throw ContractViolation("grid data size does not match the grid");
}

Vec3 GridInterpolant::operator()(const Vec3& x) const
{
    const DomainBox& box = grid_.box();
    if (!x.allFinite() || !box.contains(x, 1e-12 * box.side))
        throw DomainError("evaluation point lies outside the domain");
    const int m = grid_.cells();
    Index3 base{};
    Vec3 t;
    for (int c = 0; c < 3; ++c) {
        const double s = std::clamp((x[c] - box.origin[c]) / grid_.spacing(), 0.0, static_cast<double>(m));
        base[c] = std::clamp(static_cast<int>(std::floor(s)), 0, m - 1);
        t[c] = s - base[c];
    }
    Vec3 out = Vec3::Zero();
    for (int corner = 0; corner < 8; ++corner) {
        Index3 g = base;
        double w = 1.0;
        for (int c = 0; c < 3; ++c) {
            const bool up = (corner >> c) & 1;
            g[c] += up ? 1 : 0;
            w *= up ? t[c] : 1.0 - t[c];
        }
        if (w != 0.0)
            out += w * at(values_, grid_.linear(g));
    }
    return out;
}

Field sample_on_grid(const ContinuumGrid& grid, const std::function<Vec3(const Vec3&)>& f)
{
    Field out = Field::Zero(3 * static_cast<Eigen::Index>(grid.node_count()));
    for (std::size_t n = 0; n < grid.node_count(); ++n)
        if (!grid.is_boundary(n))
            at(out, n) = f(grid.position(n));
    return out;
}

} // namespace nlhom
