#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlhom/types.hpp"

namespace nlhom {

class BondList;

/// Axis-aligned cube [origin, origin + side]^3.
struct DomainBox {
    Vec3 origin = Vec3::Zero();
    double side = 1.0;

    double diameter() const;
    Vec3 upper() const { return origin + Vec3::Constant(side); }
    bool contains(const Vec3& x, double tol = 0.0) const;
    void validate() const;
};

struct LatticeConfig {
    double eps = 0.125;
    int long_range_period = 2;
    DomainBox domain;

    /// Number of lattice cells along one side, L/eps.  Throws ConfigurationError unless it is an integer >= 1.
    int cells_per_side() const;
    void validate() const;
};

/// Dimensionless mass coefficient m^i as a function of position; the particle mass is m^i * eps^3.
using MassProfile = std::function<double(const Vec3&)>;

MassProfile uniform_mass(double m = 1.0);

struct MassBounds {
    double min = 1e-12;
    double max = 1e12;
};

/// Particles at equilibrium positions, with masses and boundary-fixed flags.
///
/// A system built from a cubic lattice additionally carries the bijection between lattice
/// triples and particle ids; particles can be removed, which leaves holes in that map.
/// Instances are immutable once constructed.
class ParticleSystem {
public:
    ParticleSystem(double eps, std::vector<Vec3> positions, std::vector<double> masses,
                   std::vector<bool> fixed);

    std::size_t size() const { return positions_.size(); }
    std::size_t free_count() const { return free_count_; }
    double eps() const { return eps_; }

    const Vec3& position(std::size_t i) const { return positions_[i]; }
    double mass(std::size_t i) const { return masses_[i]; }
    bool is_fixed(std::size_t i) const { return fixed_[i]; }
    const std::vector<Vec3>& positions() const { return positions_; }
    const std::vector<double>& masses() const { return masses_; }

    bool has_lattice() const { return lattice_.has_value(); }
    const DomainBox& domain() const;
    int cells_per_side() const;
    int points_per_side() const { return cells_per_side() + 1; }
    int long_range_period() const;
    std::optional<std::size_t> id_at(const Index3& idx) const;
    Index3 lattice_index(std::size_t id) const;
    bool lattice_complete() const;
    std::int64_t grid_linear(const Index3& idx) const;

    ParticleSystem without(std::size_t id) const;
    ParticleSystem with_all_free() const;

private:
    friend ParticleSystem build_cubic_lattice(const LatticeConfig&, const MassProfile&, const MassBounds&);

    struct LatticeMeta {
        DomainBox domain;
        int cells = 0;
        int period = 2;
        std::vector<std::int64_t> grid_to_id;
        std::vector<Index3> id_to_grid;
    };

    ParticleSystem() = default;
    void count_free();
    const LatticeMeta& meta() const;

    double eps_ = 0.0;
    std::vector<Vec3> positions_;
    std::vector<double> masses_;
    std::vector<bool> fixed_;
    std::size_t free_count_ = 0;
    std::optional<LatticeMeta> lattice_;
};

/// Particles at origin + eps*(i,j,k) covering the closed box; every particle on a box face is fixed.
ParticleSystem build_cubic_lattice(const LatticeConfig& config, const MassProfile& mass_profile = uniform_mass(),
                                   const MassBounds& bounds = {});

/// Voronoi cell volumes of a complete lattice system (cells clipped to the box).
std::vector<double> voronoi_volumes(const ParticleSystem& ps);

/// Seven lattice edge directions of the Kuhn subdivision: three axes, three (+,+) face diagonals, one body diagonal.
const std::array<Index3, 7>& kuhn_edge_offsets();

/// The six Kuhn tetrahedra of the lattice cube with lower corner `base`.
std::array<std::array<Index3, 4>, 6> kuhn_simplices(const Index3& base);

/// True when every point of a boundary sample grid of spacing eps/2 lies within eps of a fixed particle.
bool fixed_set_is_epsilon_net(const ParticleSystem& ps);

struct TriangulationReport {
    double min_edge_ratio = 0.0;
    double max_edge_ratio = 0.0;
    double min_simplex_volume_ratio = 0.0;
    double min_edge_stiffness_ratio = 0.0;
    double volume_threshold = 0.1;
    std::size_t simplex_count = 0;
    std::size_t missing_simplices = 0;
    std::size_t missing_edges = 0;
    bool epsilon_net = false;
    bool pass = false;
    std::vector<std::string> warnings;
};

/// Checks the triangulation (Kuhn subdivision) and boundary epsilon-net conditions.
/// Throws ValidationError when the system has no simplices at all.
TriangulationReport validate_triangulation(const ParticleSystem& ps, const BondList& bonds,
                                           double volume_threshold = 0.1);

} // namespace nlhom
