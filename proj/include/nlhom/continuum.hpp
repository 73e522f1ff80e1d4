#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "nlhom/convolution.hpp"
#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"
#include "nlhom/linalg.hpp"
#include "nlhom/meso_tensor.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

/// Uniform node grid of spacing L/cells over the closed box; boundary nodes are Dirichlet.
class ContinuumGrid {
public:
    ContinuumGrid(const DomainBox& box, int cells);

    const DomainBox& box() const { return box_; }
    int cells() const { return cells_; }
    int points_per_side() const { return cells_ + 1; }
    double spacing() const { return spacing_; }
    std::size_t node_count() const;

    std::size_t linear(const Index3& idx) const;
    Index3 index(std::size_t node) const;
    Vec3 position(std::size_t node) const;
    bool is_boundary(std::size_t node) const;

    /// Node cell volume clipped to the box (spacing^3 halved once per face the node lies on).
    double cell_volume(std::size_t node) const;

    /// 1 on interior degrees of freedom, 0 on Dirichlet ones.
    Field interior_mask() const;

private:
    DomainBox box_;
    int cells_;
    double spacing_;
};

/// Long-range limit kernel G(d) = K(|d|) phi d d^T / |d|^2.
struct LimitKernel {
    RadialProfile profile;
    double phi = 0.125;

    Mat3 operator()(const Vec3& d) const;
    bool is_zero() const { return profile.is_zero() || phi == 0.0; }
};

/// Operators of rho u'' + (L + N) u = 0 on a grid.
///
/// L is the local divergence-form operator of a constant tensor, -(a_npqr d_q d_p u_n) with central differences.
/// N is the nonlocal term sum_{y != x} w_y G(x - y)(u(x) - u(y)) with clipped cell weights w_y, applied by FFT.
class ContinuumOperator {
public:
    ContinuumOperator(const ContinuumGrid& grid, const SymTensor4& tensor, const LimitKernel& kernel,
                      std::vector<double> density = {});
    ~ContinuumOperator();
    ContinuumOperator(ContinuumOperator&&) noexcept;
    ContinuumOperator& operator=(ContinuumOperator&&) = delete;

    const ContinuumGrid& grid() const { return grid_; }
    const SymTensor4& tensor() const { return tensor_; }
    const LimitKernel& kernel() const { return kernel_; }
    const std::vector<double>& density() const { return density_; }
    std::size_t size() const { return grid_.node_count(); }

    /// Local operator on interior nodes (input masked first, Dirichlet output zero).
    void apply_local(const Field& u, Field& out) const;
    /// Nonlocal operator evaluated at interior nodes for any node data (Dirichlet output zero).
    void apply_nonlocal(const Field& u, Field& out) const;
    /// (L + N) u
    void apply_stiffness(const Field& u, Field& out) const;
    /// A u = rho^{-1} (L + N) u
    void apply(const Field& u, Field& out) const;
    Field apply(const Field& u) const;

    /// Quadrature-weighted inner products: <u, w> = sum_x dx^3 u.w and (u, w)_rho = sum_x rho dx^3 u.w
    double grid_inner(const Field& a, const Field& b) const;
    double mass_inner(const Field& a, const Field& b) const;
    double mass_norm(const Field& a) const;

    /// Weight vector rho dx^3 (three copies per node).
    const Field& mass_weight() const { return mass_weight_; }
    const Field& interior_mask() const { return mask_; }
    /// Diagonal of A on interior degrees of freedom.
    Field diagonal() const;

    double lambda_max(int steps = 100) const;
    double stability_bound() const;

    void project(Field& u) const { u.array() *= mask_.array(); }

private:
    ContinuumGrid grid_;
    SymTensor4 tensor_;
    LimitKernel kernel_;
    std::vector<double> density_;
    Field mask_;
    Field mass_weight_;
    // C^{rn}_{pq} = (a_npqr + a_nqpr) / 2
    double coef_[3][3][3][3] = {};
    std::unique_ptr<KernelConvolution> conv_;
    std::vector<double> nonlocal_diag_; // six values per node
    mutable std::optional<double> lambda_max_;
};

struct ContinuumState {
    Field u;
    Field v;
    double t = 0.0;
};

struct ContinuumInitialData {
    Field a;
    Field b;
};

double continuum_energy(const ContinuumOperator& op, const ContinuumState& state);
double continuum_modified_energy(const ContinuumOperator& op, const ContinuumState& state, double dt);

/// One leapfrog (kick-drift-kick) step of u'' = -A u; dt may be negative.
void step_leapfrog(const ContinuumOperator& op, ContinuumState& state, double dt);

struct ContinuumTrajectory {
    std::vector<ContinuumState> samples;
    double dt = 0.0;
    std::size_t steps = 0;
    double energy_drift = 0.0;       ///< on the leapfrog's conserved energy
    double energy_fluctuation = 0.0; ///< on continuum_energy
    double initial_energy = 0.0;
    double stability_bound = 0.0;
    std::vector<double> sample_energy;
};

/// Integrates to T keeping every `sample_every`-th state and the last one.  Throws ConfigurationError when
/// |dt| is not below the stability bound or T is not a multiple of dt.
ContinuumTrajectory simulate_continuum(const ContinuumOperator& op, const ContinuumInitialData& init, double T,
                                       double dt, int sample_every);

struct ContinuumStationary {
    double lambda = 0.0;
    Field u;
    double residual = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;
};

/// Solves (L + N + lambda^2 rho) u = rho (lambda a + b) on interior nodes by preconditioned CG.
ContinuumStationary solve_stationary_continuum(const ContinuumOperator& op, const ContinuumInitialData& init,
                                               double lambda, const CgOptions& options = {});

/// <(L + N) v, v> + lambda^2 (v, v)_rho - 2 (lambda a + b, v)_rho
double continuum_functional(const ContinuumOperator& op, const ContinuumInitialData& init, double lambda,
                            const Field& v);

/// Trapezoid approximation of int_0^T exp(-lambda t) u(t) dt; throws PreconditionError unless exp(-lambda T) <= 1e-8.
Field continuum_laplace_quadrature(const ContinuumTrajectory& trajectory, double lambda);

struct IsotropyResult {
    bool isotropic = false;
    double residual = 0.0;
};

/// residual = |a_1111 - 2 a_1212 - a_1122| / a_1111, isotropic iff residual <= tol.
IsotropyResult isotropy_gate(const SymTensor4& tensor, double tol = 1e-10);

/// k1 that makes the periodic-lattice tensor isotropic: k2/sqrt2 + 8 k3/(3 sqrt3).
double isotropic_k1(double k2, double k3);

/// Trilinear interpolation of node data.
class GridInterpolant {
public:
    GridInterpolant(const ContinuumGrid& grid, const Field& values);
    Vec3 operator()(const Vec3& x) const;

private:
    ContinuumGrid grid_;
    Field values_;
};

/// Samples a vector function at the grid nodes, zero on Dirichlet nodes.
Field sample_on_grid(const ContinuumGrid& grid, const std::function<Vec3(const Vec3&)>& f);

} // namespace nlhom
