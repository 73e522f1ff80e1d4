#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

/// Axis-aligned cube K(x, h) with penalty exponent gamma.
struct MesoProbe {
    Vec3 center = Vec3::Constant(0.5);
    double side = 0.25;
    double gamma = 1.0;

    /// Throws ProbeError unless h/eps >= 4 and 0 < gamma < 2.
    void validate(double eps) const;
    double penalty() const { return std::pow(side, -2.0 - gamma); }
};

/// Fourth-rank elasticity tensor with minor and major symmetries, stored as a 6x6 matrix over the
/// index pairs 11, 22, 33, 23, 13, 12.
class SymTensor4 {
public:
    using Matrix6 = Eigen::Matrix<double, 6, 6>;

    SymTensor4() : v_(Matrix6::Zero()) {}
    explicit SymTensor4(const Matrix6& v) : v_(v) {}

    /// a_npqr with zero-based indices.
    double operator()(int n, int p, int q, int r) const { return v_(pair_index(n, p), pair_index(q, r)); }
    const Matrix6& voigt() const { return v_; }

    /// sum_npqr a_npqr T_np S_qr
    double contract(const Mat3& T, const Mat3& S) const;

    /// max |V - V^T| / max |V|
    double symmetry_defect() const;
    double min_eigenvalue() const;
    double trace() const { return v_.trace(); }
    bool is_psd(double rel_tol = 1e-10) const;

    SymTensor4 operator*(double s) const { return SymTensor4(v_ * s); }

    static int pair_index(int n, int p);
    /// Zero-based index pair of Voigt slot I.
    static std::array<int, 2> pair_of(int slot);
    /// Basis tensor with unit (n, p) and (p, n) entries for Voigt slot I.
    static Mat3 basis(int slot);

private:
    Matrix6 v_;
};

struct CellSolution {
    std::vector<std::size_t> ids;  ///< particles in the closed cube
    Field v;                       ///< minimizer, three values per entry of ids
    double value = 0.0;            ///< H = bond_energy + p * penalty_sum
    double bond_energy = 0.0;      ///< sum over cube bonds of K <v_i - v_j, e>^2
    double penalty_sum = 0.0;      ///< sum_i |v_i - T x_i|^2
};

/// Minimizes the penalized cell functional for the affine target g_i = T (x_i - center).
/// Only short-range bonds with both endpoints in the closed cube take part.
CellSolution minimize_cell_functional(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds,
                                      const Mat3& T);

/// Same minimization for an arbitrary per-particle target g (indexed like ps).
CellSolution minimize_cell_functional(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds,
                                      const Field& target);

/// Tensor a(x; eps, h; gamma)/h^3 by polarization over the six basis tensors and their fifteen pairwise sums.
SymTensor4 extract_tensor(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds);

/// Closed form for the periodic lattice: a_nnnn = k1 + sqrt2 k2 + 4k3/(3 sqrt3), a_nnpp = a_npnp = k2/sqrt2 + 4k3/(3 sqrt3).
SymTensor4 closed_form_tensor(double k1, double k2, double k3);

/// Lattice patch aligned with the lattice whose origin is `lattice_origin`, covering the probe cube;
/// boundary flags of the patch are irrelevant to the cell problem.
struct ProbePatch {
    ParticleSystem ps;
    BondList bonds;
};
ProbePatch build_probe_patch(const MesoProbe& probe, double eps, const InteractionModel& model,
                             const Vec3& lattice_origin = Vec3::Zero());

struct TensorStudyRow {
    double eps = 0.0;
    double h = 0.0;
    double gamma = 0.0;
    std::string component; ///< e.g. "1111"
    double value = 0.0;
    double closed_form = 0.0;
    double rel_error = 0.0;
};

/// Component classes reported by the study: "1111", "1122", "1212".
std::vector<TensorStudyRow> tensor_limit_study(const std::vector<double>& eps_schedule,
                                               const std::vector<double>& h_schedule,
                                               const std::vector<double>& gammas, const InteractionModel& model,
                                               const Vec3& center, const Vec3& lattice_origin = Vec3::Zero());

struct CellScalingReport {
    std::vector<double> h;
    std::vector<double> bond_energy;
    std::vector<double> penalty_sum;
    double bond_energy_slope = 0.0;
    double penalty_slope = 0.0;
    double gamma = 1.0;
    bool degenerate = false;
    bool bond_energy_ok = false; ///< slope in [2.5, 3.5]
    bool penalty_ok = false;     ///< slope >= 5 + gamma - 0.5
};

/// Least-squares log-log slopes over an h series at fixed h/eps. Throws InsufficientDataError for fewer than 3 values.
CellScalingReport cell_scaling_check(const std::vector<double>& h_series, double h_over_eps, double gamma,
                                    const InteractionModel& model, const Mat3& T, const Vec3& center);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace nlhom
