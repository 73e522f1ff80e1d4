#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlhom/lattice.hpp"
#include "nlhom/types.hpp"

namespace nlhom {

class KernelConvolution;

enum class BondKind { ShortRange, LongRange };

struct Bond {
    std::size_t i = 0;
    std::size_t j = 0;
    double stiffness = 0.0;
    Vec3 direction = Vec3::UnitX(); ///< (x_i - x_j) / |x_i - x_j|
    BondKind kind = BondKind::ShortRange;
};

/// Long-range radial profile K(r), selected by name: "const:c", "exp:a" = exp(-a r), "gauss:a" = exp(-a r^2).
class RadialProfile {
public:
    enum class Shape { Constant, Exponential, Gaussian };

    RadialProfile() = default;
    static RadialProfile parse(const std::string& spec);
    static RadialProfile constant(double c) { return RadialProfile(Shape::Constant, c); }

    double operator()(double r) const;
    bool is_zero() const { return shape_ == Shape::Constant && parameter_ == 0.0; }
    std::string spec() const;

private:
    RadialProfile(Shape shape, double parameter) : shape_(shape), parameter_(parameter) {}

    Shape shape_ = Shape::Constant;
    double parameter_ = 0.0;
};

struct InteractionModel {
    double k1 = 1.0;
    double k2 = 1.0;
    double k3 = 1.0;
    RadialProfile long_range;
    double alpha = std::sqrt(3.0);
    double beta = 2.0;
    /// Cutoff phi(s), s = r/eps.  Empty means the linear ramp from 1 at alpha to 0 at beta.
    std::function<double(double)> near_profile;
    double pair_strength_min = 1e-12;
    double pair_strength_max = 1e12;

    double phi(double s) const;
    void validate() const;

    /// K^{ij} of the periodic structure by squared lattice offset: 1 -> k1, 2 -> 4 k2, 3 -> 9 k3.
    double pair_strength(int squared_offset) const;

    /// Near-range coefficient eps^6 K^{ij} phi(r/eps) / r^5.
    double short_range_stiffness(double r, double eps, double pair_strength) const;

    /// Far-range coefficient eps^6 K(r).
    double long_range_stiffness(double r, double eps) const;
};

/// Implicit long-range pair set of the periodic lattice: every particle couples to each particle of
/// its N-periodic sublattice with stiffness eps^6 K(r).
struct SublatticeCoupling {
    int period = 2;
    double eps = 0.0;
    int points_per_side = 0;
    RadialProfile profile;

    /// Stiffness for a lattice offset; zero unless the offset is a nonzero multiple of the period.
    double stiffness(const Index3& offset) const;
};

class BondList {
public:
    BondList() = default;
    explicit BondList(std::vector<Bond> bonds, std::optional<SublatticeCoupling> sublattice = std::nullopt,
                      const ParticleSystem* ps = nullptr);

    /// Explicitly stored bonds (all short-range ones, plus long-range ones unless stored implicitly).
    const std::vector<Bond>& bonds() const { return bonds_; }
    const std::optional<SublatticeCoupling>& sublattice() const { return sublattice_; }

    std::size_t count(BondKind kind) const;
    double min_stiffness(BondKind kind) const;
    double max_stiffness(BondKind kind) const;

    /// Explicit bond between i and j (either order), or nullptr.
    const Bond* find(std::size_t i, std::size_t j) const;

    BondList short_range_only() const;

    /// Calls f once per long-range pair, explicit or implicit; cost is proportional to the pair count.
    void for_each_long_range(const ParticleSystem& ps, const std::function<void(const Bond&)>& f) const;

private:
    static std::uint64_t key(std::size_t i, std::size_t j);

    std::vector<Bond> bonds_;
    std::optional<SublatticeCoupling> sublattice_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::size_t implicit_count_ = 0;
    double implicit_min_ = 0.0;
    double implicit_max_ = 0.0;
};

enum class LongRangeStorage { Automatic, Explicit, Implicit };

/// Explicit long-range pair budget used by LongRangeStorage::Automatic.
inline constexpr std::size_t kExplicitLongRangeLimit = 2'000'000;

/// Short-range bonds within each lattice cube plus long-range sublattice bonds.
/// Throws ModelError when the period is below the cutoff beta.
BondList assemble_bonds(const ParticleSystem& ps, const InteractionModel& model, const LatticeConfig& config,
                        LongRangeStorage storage = LongRangeStorage::Automatic);

/// E = K e e^T.
Mat3 pair_matrix(const Bond& b);

/// Linear map (S u)_i = sum_j E^{ij} (u_i - u_j) over every bond, explicit and implicit.
class StiffnessOperator {
public:
    StiffnessOperator(const ParticleSystem& ps, const BondList& bonds);
    ~StiffnessOperator();
    StiffnessOperator(StiffnessOperator&&) noexcept;
    StiffnessOperator& operator=(StiffnessOperator&&) noexcept;

    void apply(const Field& u, Field& out) const;
    Field apply(const Field& u) const;

    /// u^T S u = sum over unordered bonded pairs of K <u_i - u_j, e>^2.
    double quadratic_form(const Field& u) const;

    /// Diagonal 3x3 blocks of S.
    const std::vector<Mat3>& diagonal_blocks() const { return diagonal_; }

    std::size_t size() const { return n_; }

private:
    struct Implicit;

    std::size_t n_ = 0;
    std::vector<Bond> bonds_;
    std::vector<Mat3> diagonal_;
    std::unique_ptr<Implicit> implicit_;
};

enum class BoundaryPolicy { Enforce, Ignore };

/// H = sum over unordered bonded pairs of K <u_i - u_j, e>^2, i.e. half the ordered double sum.
/// With BoundaryPolicy::Enforce a nonzero displacement on a fixed particle is a ContractViolation.
double energy(const ParticleSystem& ps, const BondList& bonds, const Field& u,
              BoundaryPolicy policy = BoundaryPolicy::Enforce);

/// F_i = -sum_j E^{ij}(u_i - u_j) on free particles and 0 on fixed ones; F = -grad(H)/2.
Field force(const ParticleSystem& ps, const BondList& bonds, const Field& u);

} // namespace nlhom
