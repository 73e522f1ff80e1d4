#pragma once

#include <optional>
#include <vector>

#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"
#include "nlhom/linalg.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

/// A = M^{-1} S restricted to the free particles: (A u)_i = (1/m_i) sum_j E^{ij}(u_i - u_j) for free i, 0 for fixed i.
/// Self-adjoint and positive definite in the mass inner product (u, w) = sum_i m_i <u_i, w_i>.
class DiscreteOperator {
public:
    DiscreteOperator(const ParticleSystem& ps, const BondList& bonds);

    void apply(const Field& u, Field& out) const;
    Field apply(const Field& u) const;

    /// sum_i m_i <a_i, b_i>
    double mass_inner(const Field& a, const Field& b) const;
    double mass_norm(const Field& a) const;

    /// (A u, u) = u^T S u on the free subspace.
    double stiffness_form(const Field& u) const;

    /// Largest eigenvalue of A from power iteration (cached after the first call).
    double lambda_max(int steps = 100) const;

    /// 2 / sqrt(lambda_max)
    double stability_bound() const;

    const ParticleSystem& system() const { return ps_; }
    const StiffnessOperator& stiffness() const { return stiffness_; }
    /// Mass of each degree of freedom (three copies per particle).
    const Field& dof_mass() const { return dof_mass_; }
    /// 1 on free degrees of freedom, 0 on fixed ones.
    const Field& free_mask() const { return free_mask_; }
    std::size_t size() const { return ps_.size(); }

    /// Zeroes the entries of fixed particles.
    void project(Field& u) const { u.array() *= free_mask_.array(); }

    /// Diagonal of A on the free degrees of freedom (0 on fixed ones).
    Field diagonal() const;

private:
    ParticleSystem ps_;
    StiffnessOperator stiffness_;
    Field dof_mass_;
    Field free_mask_;
    mutable std::optional<double> lambda_max_;
};

struct DiscreteState {
    Field u;
    Field v;
    double t = 0.0;
};

struct InitialData {
    Field a;
    Field b;
};

/// Throws ContractViolation when the data is not zero on fixed particles or has the wrong size.
void check_initial_data(const DiscreteOperator& op, const InitialData& init);

/// 1/2 sum_i m_i |v_i|^2 + 1/2 (A u, u)
double total_energy(const DiscreteOperator& op, const DiscreteState& state);

/// The quantity velocity Verlet conserves exactly: total_energy - (dt^2/8) (A u, A u).
double modified_energy(const DiscreteOperator& op, const DiscreteState& state, double dt);

/// Velocity Verlet for u'' = -A u, caching the acceleration between steps.
class VerletIntegrator {
public:
    /// Throws ConfigurationError when |dt| is not below the stability bound.
    VerletIntegrator(const DiscreteOperator& op, double dt);

    void step(DiscreteState& state);
    double dt() const { return dt_; }

private:
    const DiscreteOperator& op_;
    double dt_;
    Field accel_;
    Field accel_of_; // displacement the cached acceleration belongs to
};

/// One velocity-Verlet step; dt may be negative (time reversal).
DiscreteState step_verlet(const DiscreteOperator& op, const DiscreteState& state, double dt);

struct Trajectory {
    std::vector<DiscreteState> samples;
    double dt = 0.0;
    std::size_t steps = 0;
    /// max_t |E_h(t) - E_h(0)| / E_h(0) with E_h the integrator's conserved energy
    double energy_drift = 0.0;
    /// max_t |E(t) - E(0)| / E(0) with E = total_energy
    double energy_fluctuation = 0.0;
    double initial_energy = 0.0;
    std::vector<double> sample_energy;
    std::vector<double> sample_modified_energy;
};

/// Integrates from the initial data to T with step dt, keeping every `sample_every`-th state plus the final one.
/// T must be an integer multiple of dt (relative tolerance 1e-9).
Trajectory simulate(const DiscreteOperator& op, const InitialData& init, double T, double dt, int sample_every);

/// Largest step not above safety * bound that divides `interval` into an integer number of steps.
double choose_time_step(double stability_bound, double safety, double interval);

struct StationarySolve {
    double lambda = 0.0;
    Field u;
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;
};

/// Solves (A + lambda^2) u = lambda a + b on the free particles by Jacobi-preconditioned CG in the mass inner product.
StationarySolve solve_stationary(const DiscreteOperator& op, const InitialData& init, double lambda,
                                 const CgOptions& options = {});

/// Phi(v) = (A v, v) + lambda^2 ||v||^2 - 2 (lambda a + b, v), all in the mass inner product.
double stationary_functional(const DiscreteOperator& op, const InitialData& init, double lambda, const Field& v);

/// Composite trapezoid approximation of int_0^T exp(-lambda t) u(t) dt over the trajectory samples.
/// Throws PreconditionError unless exp(-lambda T) <= 1e-8.
Field laplace_quadrature(const Trajectory& trajectory, double lambda);

} // namespace nlhom
