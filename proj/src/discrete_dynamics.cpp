#include "nlhom/discrete_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nlhom/errors.hpp"

namespace nlhom {

DiscreteOperator::DiscreteOperator(const ParticleSystem& ps, const BondList& bonds)
    : ps_(ps), stiffness_(ps, bonds), dof_mass_(3 * ps.size()), free_mask_(3 * ps.size())
{
    for (std::size_t i = 0; i < ps.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            dof_mass_[3 * i + c] = ps.mass(i);
            free_mask_[3 * i + c] = ps.is_fixed(i) ? 0.0 : 1.0;
        }
    }
}

void DiscreteOperator::apply(const Field& u, Field& out) const
{
    Field masked = u.cwiseProduct(free_mask_);
    stiffness_.apply(masked, out);
    out.array() *= free_mask_.array() / dof_mass_.array();
}

Field DiscreteOperator::apply(const Field& u) const
{
    Field out;
    apply(u, out);
    return out;
}

double DiscreteOperator::mass_inner(const Field& a, const Field& b) const
{
    return (a.array() * dof_mass_.array() * b.array()).sum();
}

double DiscreteOperator::mass_norm(const Field& a) const { return std::sqrt(mass_inner(a, a)); }

double DiscreteOperator::stiffness_form(const Field& u) const
{
    return stiffness_.quadratic_form(u.cwiseProduct(free_mask_));
}

double DiscreteOperator::lambda_max(int steps) const
{
    if (!lambda_max_) {
        LinearMap op = [this](const Field& in, Field& out) { apply(in, out); };
        lambda_max_ = power_iteration(op, static_cast<Eigen::Index>(3 * size()), dof_mass_, free_mask_, steps);
    }
    return *lambda_max_;
}

double DiscreteOperator::stability_bound() const
{
    const double lm = lambda_max();
    return lm > 0.0 ? 2.0 / std::sqrt(lm) : std::numeric_limits<double>::infinity();
}

Field DiscreteOperator::diagonal() const
{
    Field d(3 * size());
    const auto& blocks = stiffness_.diagonal_blocks();
    for (std::size_t i = 0; i < size(); ++i)
        for (int c = 0; c < 3; ++c)
            d[3 * i + c] = blocks[i](c, c) / dof_mass_[3 * i + c] * free_mask_[3 * i + c];
    return d;
}

namespace {

void check_free_field(const DiscreteOperator& op, const Field& f, const char* what)
{
    if (f.size() != op.free_mask().size())
        throw ContractViolation(std::string(what) + " has the wrong size");
    for (Eigen::Index k = 0; k < f.size(); ++k) {
        if (op.free_mask()[k] == 0.0 && f[k] != 0.0)
            throw ContractViolation(std::string(what) + " is nonzero on a fixed particle");
    }
}

void check_dt(const DiscreteOperator& op, double dt)
{
    const double bound = op.stability_bound();
    if (!(std::abs(dt) < bound) || dt == 0.0) {
        std::ostringstream msg;
        msg << "time step " << dt << " is not below the estimated stability bound " << bound;
        throw ConfigurationError(msg.str());
    }
}

} // namespace

void check_initial_data(const DiscreteOperator& op, const InitialData& init)
{
    check_free_field(op, init.a, "initial displacement");
    check_free_field(op, init.b, "initial velocity");
}

double total_energy(const DiscreteOperator& op, const DiscreteState& state)
{
    return 0.5 * op.mass_inner(state.v, state.v) + 0.5 * op.stiffness_form(state.u);
}

double modified_energy(const DiscreteOperator& op, const DiscreteState& state, double dt)
{
    const Field au = op.apply(state.u);
    return total_energy(op, state) - dt * dt / 8.0 * op.mass_inner(au, au);
}

VerletIntegrator::VerletIntegrator(const DiscreteOperator& op, double dt) : op_(op), dt_(dt) { check_dt(op, dt); }

void VerletIntegrator::step(DiscreteState& state)
{
    if (accel_of_.size() != state.u.size() || accel_of_ != state.u) {
        op_.apply(state.u, accel_);
        accel_ = -accel_;
    }
    state.v += 0.5 * dt_ * accel_;
    state.u += dt_ * state.v;
    op_.project(state.u);
    op_.apply(state.u, accel_);
    accel_ = -accel_;
    state.v += 0.5 * dt_ * accel_;
    op_.project(state.v);
    accel_of_ = state.u;
    state.t += dt_;
}

DiscreteState step_verlet(const DiscreteOperator& op, const DiscreteState& state, double dt)
{
    VerletIntegrator integrator(op, dt);
    DiscreteState next = state;
    integrator.step(next);
    return next;
}

double choose_time_step(double stability_bound, double safety, double interval)
{
    if (!(safety > 0.0 && safety < 1.0))
        throw ConfigurationError("time-step safety factor must lie in (0, 1)");
    if (!(interval > 0.0))
        throw ConfigurationError("sample interval must be positive");
    const double target = safety * stability_bound;
    const double steps = std::ceil(interval / target * (1.0 - 1e-12));
    return interval / std::max(1.0, steps);
}

Trajectory simulate(const DiscreteOperator& op, const InitialData& init, double T, double dt, int sample_every)
{
    check_initial_data(op, init);
    if (!(T >= 0.0))
        throw ConfigurationError("final time must be nonnegative");
    if (sample_every < 1)
        throw ConfigurationError("sample_every must be at least 1");
    check_dt(op, dt);
    const double ratio = T / dt;
    const double steps_d = std::round(ratio);
    if (std::abs(ratio - steps_d) > 1e-9 * std::max(1.0, ratio))
        throw ConfigurationError("final time is not an integer multiple of the time step");

    Trajectory traj;
    traj.dt = dt;
    traj.steps = static_cast<std::size_t>(steps_d);

    DiscreteState state{init.a, init.b, 0.0};
    VerletIntegrator integrator(op, dt);
    const double e0 = total_energy(op, state);
    const double eh0 = modified_energy(op, state, dt);
    traj.initial_energy = e0;

    auto record = [&](const DiscreteState& s) {
        const double e = total_energy(op, s);
        const double eh = modified_energy(op, s, dt);
        traj.samples.push_back(s);
        traj.sample_energy.push_back(e);
        traj.sample_modified_energy.push_back(eh);
    };
    auto track = [&](const DiscreteState& s) {
        if (e0 > 0.0) {
            traj.energy_fluctuation = std::max(traj.energy_fluctuation, std::abs(total_energy(op, s) - e0) / e0);
            traj.energy_drift = std::max(traj.energy_drift, std::abs(modified_energy(op, s, dt) - eh0) / eh0);
        }
    };

    record(state);
    for (std::size_t k = 1; k <= traj.steps; ++k) {
        integrator.step(state);
        if (k == traj.steps)
            state.t = T;
        const bool sample = k % static_cast<std::size_t>(sample_every) == 0 || k == traj.steps;
        if (sample) {
            record(state);
            track(state);
        }
    }
    return traj;
}

StationarySolve solve_stationary(const DiscreteOperator& op, const InitialData& init, double lambda,
                                 const CgOptions& options)
{
    if (!(lambda > 0.0))
        throw ConfigurationError("spectral parameter lambda must be positive");
    check_initial_data(op, init);
    const double l2 = lambda * lambda;
    Field rhs = lambda * init.a + init.b;
    op.project(rhs);

    LinearMap apply = [&](const Field& in, Field& out) {
        op.apply(in, out);
        out += l2 * in.cwiseProduct(op.free_mask());
    };
    const Field diag = op.diagonal().array() + l2;
    LinearMap precond = [&](const Field& in, Field& out) { out = in.cwiseQuotient(diag).cwiseProduct(op.free_mask()); };

    CgOptions opts = options;
    if (opts.max_iterations <= 0) {
        const double free_dof = op.free_mask().sum();
        opts.max_iterations = std::max(10, static_cast<int>(50.0 * std::sqrt(free_dof)));
    }
    StationarySolve out;
    out.lambda = lambda;
    const CgResult r = conjugate_gradient(apply, rhs, out.u, op.dof_mass(), precond, opts);
    out.residual = r.relative_residual;
    out.iterations = r.iterations;
    out.residual_history = r.history;
    return out;
}

double stationary_functional(const DiscreteOperator& op, const InitialData& init, double lambda, const Field& v)
{
    const Field f = lambda * init.a + init.b;
    return op.stiffness_form(v) + lambda * lambda * op.mass_inner(v, v) - 2.0 * op.mass_inner(f, v);
}

Field laplace_quadrature(const Trajectory& trajectory, double lambda)
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
        const double h = s1.t - s0.t;
        acc += 0.5 * h * (std::exp(-lambda * s0.t) * s0.u + std::exp(-lambda * s1.t) * s1.u);
    }
    return acc;
}

} // namespace nlhom
