#pragma once

#include <functional>

#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

using VectorFunction = std::function<Vec3(const Vec3&)>;

/// Per-particle values on a complete cubic lattice, laid out on the lattice grid.
class LatticeData {
public:
    LatticeData(const ParticleSystem& ps, const Field& values);

    const DomainBox& domain() const { return domain_; }
    double eps() const { return eps_; }
    int cells() const { return cells_; }
    Vec3 value(const Index3& idx) const;

protected:
    /// Lattice coordinates s = (x - origin)/eps; DomainError outside the closed box.
    Vec3 coordinates(const Vec3& x) const;

    DomainBox domain_;
    double eps_ = 0.0;
    int cells_ = 0;
    std::vector<Vec3> grid_values_;
};

/// The piecewise-constant field: value of the particle whose half-open Voronoi cell holds x
/// (ties on a cell face go to the lower lattice index).
class PiecewiseConstantField : public LatticeData {
public:
    using LatticeData::LatticeData;
    Vec3 operator()(const Vec3& x) const;
};

/// The continuous piecewise-linear spline on the Kuhn tetrahedra of the lattice.
class SplineField : public LatticeData {
public:
    using LatticeData::LatticeData;
    Vec3 operator()(const Vec3& x) const;
};

Vec3 evaluate_pc(const PiecewiseConstantField& field, const Vec3& x);
Vec3 evaluate_spline(const SplineField& field, const Vec3& x);

/// Midpoint-rule L2(box) distance between two vector fields on a grid of `cells` cells per side.
double l2_difference(const VectorFunction& a, const VectorFunction& b, const DomainBox& box, int cells);
double l2_norm(const VectorFunction& a, const DomainBox& box, int cells);

struct KornResult {
    double constant = 0.0;
    int lanczos_steps = 0;
    Field minimizer;
};

/// Numerator and denominator of the discrete Korn quotient over the Kuhn-edge subgraph:
/// sum' <E(u_i - u_j), u_i - u_j>  and  eps sum' |u_i - u_j|^2 + eps^3 sum |u_i|^2.
std::pair<double, double> korn_forms(const ParticleSystem& ps, const BondList& bonds, const Field& u);

double rayleigh_quotient(const ParticleSystem& ps, const BondList& bonds, const Field& u);

/// Smallest value of the Korn quotient over displacements vanishing on fixed particles.
/// Computed as 1 / (largest eigenvalue of K^{-1} B) by Lanczos; throws SolverError on non-convergence.
KornResult korn_constant(const ParticleSystem& ps, const BondList& bonds);

} // namespace nlhom
