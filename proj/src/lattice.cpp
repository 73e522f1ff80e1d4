#include "nlhom/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "nlhom/errors.hpp"
#include "nlhom/interaction.hpp"

namespace nlhom {

double DomainBox::diameter() const { return std::sqrt(3.0) * side; }

bool DomainBox::contains(const Vec3& x, double tol) const
{
    for (int c = 0; c < 3; ++c) {
        if (x[c] < origin[c] - tol || x[c] > origin[c] + side + tol)
            return false;
    }
    return true;
}

void DomainBox::validate() const
{
    if (!(side > 0.0) || !std::isfinite(side))
        throw ConfigurationError("domain side must be positive and finite");
    if (!origin.allFinite())
        throw ConfigurationError("domain origin must be finite");
}

int LatticeConfig::cells_per_side() const
{
    if (!(eps > 0.0) || !std::isfinite(eps))
        throw ConfigurationError("lattice eps must be positive");
    const double ratio = domain.side / eps;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "L/eps = " << ratio << " is not a positive integer";
        throw ConfigurationError(msg.str());
    }
    return static_cast<int>(rounded);
}

void LatticeConfig::validate() const
{
    domain.validate();
    cells_per_side();
    if (long_range_period < 2)
        throw ConfigurationError("long-range period N must be >= 2");
}

MassProfile uniform_mass(double m)
{
    return [m](const Vec3&) { return m; };
}

ParticleSystem::ParticleSystem(double eps, std::vector<Vec3> positions, std::vector<double> masses,
                               std::vector<bool> fixed)
    : eps_(eps), positions_(std::move(positions)), masses_(std::move(masses)), fixed_(std::move(fixed))
{
    if (!(eps_ > 0.0))
        throw ConfigurationError("particle system eps must be positive");
    if (masses_.size() != positions_.size() || fixed_.size() != positions_.size())
        throw ConfigurationError("positions, masses and fixed flags must have equal length");
    for (double m : masses_) {
        if (!(m > 0.0) || !std::isfinite(m))
            throw ConfigurationError("particle masses must be positive");
    }
    count_free();
}

void ParticleSystem::count_free()
{
    free_count_ = static_cast<std::size_t>(std::count(fixed_.begin(), fixed_.end(), false));
}

const ParticleSystem::LatticeMeta& ParticleSystem::meta() const
{
    if (!lattice_)
        throw PreconditionError("particle system was not built from a lattice");
    return *lattice_;
}

const DomainBox& ParticleSystem::domain() const { return meta().domain; }
int ParticleSystem::cells_per_side() const { return meta().cells; }
int ParticleSystem::long_range_period() const { return meta().period; }

std::int64_t ParticleSystem::grid_linear(const Index3& idx) const
{
    const std::int64_t p = meta().cells + 1;
    return (static_cast<std::int64_t>(idx[0]) * p + idx[1]) * p + idx[2];
}

std::optional<std::size_t> ParticleSystem::id_at(const Index3& idx) const
{
    const auto& m = meta();
    for (int c = 0; c < 3; ++c) {
        if (idx[c] < 0 || idx[c] > m.cells)
            return std::nullopt;
    }
    const std::int64_t id = m.grid_to_id[static_cast<std::size_t>(grid_linear(idx))];
    if (id < 0)
        return std::nullopt;
    return static_cast<std::size_t>(id);
}

Index3 ParticleSystem::lattice_index(std::size_t id) const { return meta().id_to_grid.at(id); }

bool ParticleSystem::lattice_complete() const
{
    const auto& m = meta();
    return m.id_to_grid.size() == m.grid_to_id.size();
}

ParticleSystem ParticleSystem::without(std::size_t id) const
{
    if (id >= size())
        throw ContractViolation("particle id out of range");
    ParticleSystem out;
    out.eps_ = eps_;
    for (std::size_t i = 0; i < size(); ++i) {
        if (i == id)
            continue;
        out.positions_.push_back(positions_[i]);
        out.masses_.push_back(masses_[i]);
        out.fixed_.push_back(fixed_[i]);
    }
    if (lattice_) {
        LatticeMeta m = *lattice_;
        m.id_to_grid.erase(m.id_to_grid.begin() + static_cast<std::ptrdiff_t>(id));
        for (auto& g : m.grid_to_id) {
            if (g == static_cast<std::int64_t>(id))
                g = -1;
            else if (g > static_cast<std::int64_t>(id))
                --g;
        }
        out.lattice_ = std::move(m);
    }
    out.count_free();
    return out;
}

ParticleSystem ParticleSystem::with_all_free() const
{
    ParticleSystem out = *this;
    std::fill(out.fixed_.begin(), out.fixed_.end(), false);
    out.count_free();
    return out;
}

ParticleSystem build_cubic_lattice(const LatticeConfig& config, const MassProfile& mass_profile,
                                   const MassBounds& bounds)
{
    config.validate();
    const int n = config.cells_per_side();
    const int p = n + 1;
    const double eps = config.eps;
    const double eps3 = eps * eps * eps;

    ParticleSystem ps;
    ps.eps_ = eps;
    ParticleSystem::LatticeMeta meta;
    meta.domain = config.domain;
    meta.cells = n;
    meta.period = config.long_range_period;
    const std::size_t total = static_cast<std::size_t>(p) * p * p;
    meta.grid_to_id.resize(total);
    meta.id_to_grid.reserve(total);
    ps.positions_.reserve(total);
    ps.masses_.reserve(total);
    ps.fixed_.reserve(total);

    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            for (int k = 0; k < p; ++k) {
                const Vec3 x = config.domain.origin + eps * Vec3(i, j, k);
                const double m = mass_profile(x);
                if (!(m >= bounds.min && m <= bounds.max))
                    throw ConfigurationError("mass profile value outside [m1, m2]");
                const bool on_face = i == 0 || j == 0 || k == 0 || i == n || j == n || k == n;
                meta.grid_to_id[ps.positions_.size()] = static_cast<std::int64_t>(ps.positions_.size());
                meta.id_to_grid.push_back({i, j, k});
                ps.positions_.push_back(x);
                ps.masses_.push_back(m * eps3);
                ps.fixed_.push_back(on_face);
            }
        }
    }
    ps.lattice_ = std::move(meta);
    ps.count_free();
    return ps;
}

std::vector<double> voronoi_volumes(const ParticleSystem& ps)
{
    if (!ps.lattice_complete())
        throw PreconditionError("voronoi_volumes requires a complete cubic lattice");
    const int n = ps.cells_per_side();
    const double eps = ps.eps();
    std::vector<double> out(ps.size());
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const Index3 idx = ps.lattice_index(id);
        double v = 1.0;
        for (int c = 0; c < 3; ++c)
            v *= (idx[c] == 0 || idx[c] == n) ? 0.5 * eps : eps;
        out[id] = v;
    }
    return out;
}

const std::array<Index3, 7>& kuhn_edge_offsets()
{
    static const std::array<Index3, 7> offsets = {{
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1},
    }};
    return offsets;
}

std::array<std::array<Index3, 4>, 6> kuhn_simplices(const Index3& base)
{
    static const std::array<std::array<int, 3>, 6> perms = {{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
    }};
    std::array<std::array<Index3, 4>, 6> out{};
    for (std::size_t s = 0; s < perms.size(); ++s) {
        Index3 v = base;
        out[s][0] = v;
        for (int step = 0; step < 3; ++step) {
            ++v[perms[s][step]];
            out[s][step + 1] = v;
        }
    }
    return out;
}

bool fixed_set_is_epsilon_net(const ParticleSystem& ps)
{
    const DomainBox& box = ps.domain();
    const double eps = ps.eps();
    const int samples = 2 * ps.cells_per_side();
    const double ds = box.side / samples;
    const double tol = eps * (1.0 + 1e-12);

    auto covered = [&](const Vec3& x) {
        Index3 base{};
        for (int c = 0; c < 3; ++c)
            base[c] = static_cast<int>(std::floor((x[c] - box.origin[c]) / eps));
        for (int di = -1; di <= 2; ++di) {
            for (int dj = -1; dj <= 2; ++dj) {
                for (int dk = -1; dk <= 2; ++dk) {
                    const auto id = ps.id_at({base[0] + di, base[1] + dj, base[2] + dk});
                    if (id && ps.is_fixed(*id) && (ps.position(*id) - x).norm() <= tol)
                        return true;
                }
            }
        }
        return false;
    };

    for (int axis = 0; axis < 3; ++axis) {
        const int a = (axis + 1) % 3;
        const int b = (axis + 2) % 3;
        for (int face = 0; face < 2; ++face) {
            for (int s = 0; s <= samples; ++s) {
                for (int t = 0; t <= samples; ++t) {
                    Vec3 x = box.origin;
                    x[axis] += face * box.side;
                    x[a] += s * ds;
                    x[b] += t * ds;
                    if (!covered(x))
                        return false;
                }
            }
        }
    }
    return true;
}

TriangulationReport validate_triangulation(const ParticleSystem& ps, const BondList& bonds,
                                           double volume_threshold)
{
    if (!(volume_threshold > 0.0))
        throw ConfigurationError("triangulation volume threshold must be positive");
    TriangulationReport report;
    report.volume_threshold = volume_threshold;
    const int n = ps.cells_per_side();
    const double eps = ps.eps();
    const double eps3 = eps * eps * eps;

    double min_edge = std::numeric_limits<double>::infinity();
    double max_edge = 0.0;
    double min_vol = std::numeric_limits<double>::infinity();
    double min_k = std::numeric_limits<double>::infinity();
    std::set<std::pair<std::size_t, std::size_t>> missing_edges;

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                for (const auto& simplex : kuhn_simplices({i, j, k})) {
                    std::array<std::size_t, 4> ids{};
                    bool complete = true;
                    for (int v = 0; v < 4; ++v) {
                        const auto id = ps.id_at(simplex[v]);
                        if (!id) {
                            complete = false;
                            break;
                        }
                        ids[v] = *id;
                    }
                    if (!complete) {
                        ++report.missing_simplices;
                        continue;
                    }
                    ++report.simplex_count;
                    const Vec3 x0 = ps.position(ids[0]);
                    Mat3 edges;
                    for (int v = 1; v < 4; ++v)
                        edges.col(v - 1) = ps.position(ids[v]) - x0;
                    min_vol = std::min(min_vol, std::abs(edges.determinant()) / 6.0 / eps3);
                    for (int a = 0; a < 4; ++a) {
                        for (int b = a + 1; b < 4; ++b) {
                            const double len = (ps.position(ids[a]) - ps.position(ids[b])).norm() / eps;
                            min_edge = std::min(min_edge, len);
                            max_edge = std::max(max_edge, len);
                            const Bond* bond = bonds.find(ids[a], ids[b]);
                            if (bond == nullptr || bond->kind != BondKind::ShortRange || !(bond->stiffness > 0.0))
                                missing_edges.insert(std::minmax(ids[a], ids[b]));
                            else
                                min_k = std::min(min_k, bond->stiffness / eps);
                        }
                    }
                }
            }
        }
    }

    if (report.simplex_count == 0)
        throw ValidationError("triangulation subgraph is empty");

    report.min_edge_ratio = min_edge;
    report.max_edge_ratio = max_edge;
    report.min_simplex_volume_ratio = min_vol;
    report.min_edge_stiffness_ratio = missing_edges.empty() ? min_k : 0.0;
    report.missing_edges = missing_edges.size();
    report.epsilon_net = fixed_set_is_epsilon_net(ps);
    report.pass = report.missing_simplices == 0 && report.missing_edges == 0 && min_edge > 0.0 &&
                  std::isfinite(max_edge) && min_vol > volume_threshold && report.epsilon_net;

    if (ps.free_count() == 0)
        report.warnings.push_back("system has no free particles; every particle is boundary-fixed");
    if (n < 4)
        report.warnings.push_back("fewer than 4 lattice cells per side");
    if (report.missing_simplices > 0)
        report.warnings.push_back("triangulation has holes: " + std::to_string(report.missing_simplices) +
                                  " simplices lack a vertex");
    return report;
}

} // namespace nlhom
