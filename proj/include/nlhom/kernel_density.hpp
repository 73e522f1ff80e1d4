#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

/// Piecewise-constant mass density rho_eps(x) = m_i / |V_i| on the Voronoi cell of particle i.
class DensityField {
public:
    explicit DensityField(const ParticleSystem& ps);

    double operator()(const Vec3& x) const;
    /// Per-particle cell value m_i / |V_i|.
    const std::vector<double>& cell_values() const { return values_; }
    double max_value() const;

private:
    DomainBox domain_;
    double eps_ = 0.0;
    int cells_ = 0;
    std::vector<double> values_;
    std::vector<std::size_t> grid_to_id_;
};

DensityField empirical_density(const ParticleSystem& ps);

/// Lazy evaluator of the empirical kernel G_eps(x, y) and pair density phi_eps(x, y).
class EmpiricalKernel {
public:
    EmpiricalKernel(const ParticleSystem& ps, const BondList& bonds);

    Mat3 operator()(const Vec3& x, const Vec3& y) const;
    /// eps^6 A_ij / (|V_i||V_j|) for the cells holding x and y.
    double pair_density(const Vec3& x, const Vec3& y) const;

private:
    std::size_t cell_of(const Vec3& x) const;
    std::pair<bool, double> long_range_pair(std::size_t i, std::size_t j) const;

    const ParticleSystem& ps_;
    const BondList& bonds_;
    std::vector<double> volumes_;
};

EmpiricalKernel empirical_kernel(const ParticleSystem& ps, const BondList& bonds);

/// G_kl = K(|x - y|) phi (x_k - y_k)(x_l - y_l) / |x - y|^2.  Throws DomainError at x = y.
Mat3 limit_kernel(const RadialProfile& K, double phi, const Vec3& x, const Vec3& y);

/// One-dimensional factor of a separable test function.
struct Factor1D {
    enum class Kind { One, Linear, Gaussian, Zero };
    Kind kind = Kind::One;
    double center = 0.5; ///< Gaussian center
    double width = 0.2;  ///< Gaussian standard deviation

    double operator()(double t) const;
    /// Mean over [a, b].
    double average(double a, double b) const;
};

/// Separable test function f(x, y) = prod_c g_c(x_c) * prod_c h_c(y_c).
struct TestFunction {
    std::string name;
    std::array<Factor1D, 3> x_factors;
    std::array<Factor1D, 3> y_factors;

    double operator()(const Vec3& x, const Vec3& y) const;
    double x_part(const Vec3& x) const;
};

/// Built-in library: constant, coordinate monomials and a Gaussian bump.
std::vector<TestFunction> test_function_library(const DomainBox& box);

/// The zero test function f = 0 (for degenerate checks).
TestFunction zero_test_function();

/// Component slot (k, l) in xx, yy, zz, yz, xz, xy order.
std::array<int, 2> component_pair(int slot);
std::string component_name(int slot);

/// Pairing int int G_eps,kl(x, y) f(x, y) dx dy, evaluated exactly as a sum over long-range pairs with
/// cell-averaged f. All six components.
std::array<double, 6> discrete_kernel_pairing(const ParticleSystem& ps, const BondList& bonds, const TestFunction& f);

/// Reference value of int int G_kl(x - y) f(x, y) dx dy over the box for the limit kernel, by Gauss-Legendre rules.
std::array<double, 6> limit_kernel_pairing(const RadialProfile& K, double phi, const DomainBox& box,
                                           const TestFunction& f);

/// int rho_eps g dx (exact cell sums) and int rho g dx for constant rho, with g the x part of f.
double discrete_density_pairing(const ParticleSystem& ps, const TestFunction& f);
double limit_density_pairing(double rho, const DomainBox& box, const TestFunction& f);

struct WeakConvergenceRow {
    double eps = 0.0;
    std::string test_function;
    std::string component; ///< "xx", ..., or "rho"
    double discrete = 0.0;
    double limit = 0.0;
    double gap = 0.0;
};

struct WeakConvergenceReport {
    std::vector<WeakConvergenceRow> rows;
    bool monotone = false;
    /// (test_function, component) series that are not non-increasing
    std::vector<std::string> violations;
};

/// Gap series over the eps schedule for every test function, kernel component and the density.
/// A series passes when each gap is at most the previous one plus floor_rel * (scale of the limit pairings).
WeakConvergenceReport weak_convergence_check(const std::vector<double>& eps_schedule, const DomainBox& box,
                                             const InteractionModel& model, int period,
                                             const std::vector<TestFunction>& functions, double floor_rel = 1e-12);

} // namespace nlhom
