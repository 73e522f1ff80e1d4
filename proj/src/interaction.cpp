#include "nlhom/interaction.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "nlhom/convolution.hpp"
#include "nlhom/errors.hpp"

namespace nlhom {

RadialProfile RadialProfile::parse(const std::string& spec)
{
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw ConfigurationError("radial profile '" + spec + "' must look like name:value");
    const std::string name = spec.substr(0, colon);
    const std::string value = spec.substr(colon + 1);
    char* end = nullptr;
    const double p = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(p))
        throw ConfigurationError("radial profile '" + spec + "' has a non-numeric parameter");
    if (name == "const") {
        if (p < 0.0)
            throw ConfigurationError("constant radial profile must be nonnegative");
        return RadialProfile(Shape::Constant, p);
    }
    if (name == "exp")
        return RadialProfile(Shape::Exponential, p);
    if (name == "gauss")
        return RadialProfile(Shape::Gaussian, p);
    throw ConfigurationError("unknown radial profile '" + name + "' (expected const, exp or gauss)");
}

double RadialProfile::operator()(double r) const
{
    switch (shape_) {
    case Shape::Constant:
        return parameter_;
    case Shape::Exponential:
        return std::exp(-parameter_ * r);
    case Shape::Gaussian:
        return std::exp(-parameter_ * r * r);
    }
    return 0.0;
}

std::string RadialProfile::spec() const
{
    std::ostringstream out;
    out.precision(17);
    switch (shape_) {
    case Shape::Constant:
        out << "const:";
        break;
    case Shape::Exponential:
        out << "exp:";
        break;
    case Shape::Gaussian:
        out << "gauss:";
        break;
    }
    out << parameter_;
    return out.str();
}

double InteractionModel::phi(double s) const
{
    if (near_profile)
        return near_profile(s);
    if (s <= alpha)
        return 1.0;
    if (s >= beta)
        return 0.0;
    return (beta - s) / (beta - alpha);
}

void InteractionModel::validate() const
{
    for (double k : {k1, k2, k3}) {
        if (!(k >= 0.0) || !std::isfinite(k))
            throw ModelError("short-range coefficients k1, k2, k3 must be nonnegative");
    }
    if (k1 + k2 + k3 <= 0.0)
        throw ModelError("at least one of k1, k2, k3 must be positive");
    if (!(alpha > 0.0) || !(alpha < beta))
        throw ModelError("cutoffs must satisfy 0 < alpha < beta");
    if (!(pair_strength_min > 0.0) || !(pair_strength_min <= pair_strength_max))
        throw ModelError("pair strength bounds must satisfy 0 < a0 <= A0");
}

double InteractionModel::pair_strength(int squared_offset) const
{
    switch (squared_offset) {
    case 1:
        return k1;
    case 2:
        return 4.0 * k2;
    case 3:
        return 9.0 * k3;
    default:
        throw ContractViolation("short-range pair strength requested for squared offset " +
                                std::to_string(squared_offset));
    }
}

double InteractionModel::short_range_stiffness(double r, double eps, double kij) const
{
    const double e2 = eps * eps;
    return e2 * e2 * e2 * kij * phi(r / eps) / std::pow(r, 5);
}

double InteractionModel::long_range_stiffness(double r, double eps) const
{
    const double e2 = eps * eps;
    return e2 * e2 * e2 * long_range(r);
}

double SublatticeCoupling::stiffness(const Index3& offset) const
{
    if (offset[0] == 0 && offset[1] == 0 && offset[2] == 0)
        return 0.0;
    for (int c = 0; c < 3; ++c) {
        if (offset[c] % period != 0)
            return 0.0;
    }
    const double r = eps * std::sqrt(double(offset[0]) * offset[0] + double(offset[1]) * offset[1] +
                                     double(offset[2]) * offset[2]);
    const double e2 = eps * eps;
    return e2 * e2 * e2 * profile(r);
}

namespace {

Bond make_bond(const ParticleSystem& ps, std::size_t i, std::size_t j, double k, BondKind kind)
{
    const Vec3 d = ps.position(i) - ps.position(j);
    return Bond{i, j, k, d / d.norm(), kind};
}

// Per residue class mod N, the ids of present lattice points.
std::vector<std::vector<std::size_t>> sublattice_classes(const ParticleSystem& ps, int period)
{
    std::vector<std::vector<std::size_t>> classes(static_cast<std::size_t>(period) * period * period);
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const Index3 g = ps.lattice_index(id);
        classes[(static_cast<std::size_t>(g[0] % period) * period + g[1] % period) * period + g[2] % period]
            .push_back(id);
    }
    return classes;
}

} // namespace

BondList::BondList(std::vector<Bond> bonds, std::optional<SublatticeCoupling> sublattice, const ParticleSystem* ps)
    : bonds_(std::move(bonds)), sublattice_(std::move(sublattice))
{
    index_.reserve(bonds_.size());
    for (std::size_t b = 0; b < bonds_.size(); ++b) {
        const Bond& bond = bonds_[b];
        if (bond.i == bond.j)
            throw ContractViolation("self-bond in bond list");
        if (!(bond.stiffness > 0.0))
            throw ContractViolation("bond stiffness must be positive");
        if (!index_.emplace(key(bond.i, bond.j), b).second)
            throw ContractViolation("duplicate bond in bond list");
    }
    if (sublattice_) {
        if (ps == nullptr || !ps->has_lattice())
            throw ContractViolation("implicit sublattice bonds need the lattice particle system");
        const int n = ps->cells_per_side();
        const int period = sublattice_->period;
        for (const auto& cls : sublattice_classes(*ps, period)) {
            const std::size_t c = cls.size();
            implicit_count_ += c * (c - (c > 0 ? 1 : 0)) / 2;
        }
        // K is monotone in r for every built-in profile, so the extremes sit at the nearest and farthest offsets.
        const int far = (n / period) * period;
        const double a = sublattice_->stiffness({period, 0, 0});
        const double b = sublattice_->stiffness({far, far, far});
        implicit_min_ = std::min(a, b);
        implicit_max_ = std::max(a, b);
    }
}

std::uint64_t BondList::key(std::size_t i, std::size_t j)
{
    const auto [lo, hi] = std::minmax(i, j);
    return (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint64_t>(hi);
}

std::size_t BondList::count(BondKind kind) const
{
    std::size_t c = static_cast<std::size_t>(
        std::count_if(bonds_.begin(), bonds_.end(), [kind](const Bond& b) { return b.kind == kind; }));
    if (kind == BondKind::LongRange)
        c += implicit_count_;
    return c;
}

double BondList::min_stiffness(BondKind kind) const
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : bonds_) {
        if (b.kind == kind)
            m = std::min(m, b.stiffness);
    }
    if (kind == BondKind::LongRange && implicit_count_ > 0)
        m = std::min(m, implicit_min_);
    return std::isfinite(m) ? m : 0.0;
}

double BondList::max_stiffness(BondKind kind) const
{
    double m = 0.0;
    for (const auto& b : bonds_) {
        if (b.kind == kind)
            m = std::max(m, b.stiffness);
    }
    if (kind == BondKind::LongRange && implicit_count_ > 0)
        m = std::max(m, implicit_max_);
    return m;
}

const Bond* BondList::find(std::size_t i, std::size_t j) const
{
    const auto it = index_.find(key(i, j));
    return it == index_.end() ? nullptr : &bonds_[it->second];
}

BondList BondList::short_range_only() const
{
    std::vector<Bond> out;
    std::copy_if(bonds_.begin(), bonds_.end(), std::back_inserter(out),
                 [](const Bond& b) { return b.kind == BondKind::ShortRange; });
    return BondList(std::move(out));
}

void BondList::for_each_long_range(const ParticleSystem& ps, const std::function<void(const Bond&)>& f) const
{
    for (const auto& b : bonds_) {
        if (b.kind == BondKind::LongRange)
            f(b);
    }
    if (!sublattice_)
        return;
    for (const auto& cls : sublattice_classes(ps, sublattice_->period)) {
        for (std::size_t a = 0; a < cls.size(); ++a) {
            const Index3 ga = ps.lattice_index(cls[a]);
            for (std::size_t b = a + 1; b < cls.size(); ++b) {
                const Index3 gb = ps.lattice_index(cls[b]);
                const double k = sublattice_->stiffness({ga[0] - gb[0], ga[1] - gb[1], ga[2] - gb[2]});
                if (k > 0.0)
                    f(make_bond(ps, cls[a], cls[b], k, BondKind::LongRange));
            }
        }
    }
}

BondList assemble_bonds(const ParticleSystem& ps, const InteractionModel& model, const LatticeConfig& config,
                        LongRangeStorage storage)
{
    model.validate();
    config.validate();
    if (!ps.has_lattice())
        throw PreconditionError("assemble_bonds needs a lattice particle system");
    const int period = config.long_range_period;
    if (period < model.beta)
        throw ModelError("long-range period N = " + std::to_string(period) + " is below the cutoff beta");

    const double eps = ps.eps();
    std::vector<Bond> bonds;

    // Offsets in {-1,0,1}^3 that are lexicographically positive: every in-cube pair once.
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const Index3 g = ps.lattice_index(id);
        for (int a = -1; a <= 1; ++a) {
            for (int b = -1; b <= 1; ++b) {
                for (int c = -1; c <= 1; ++c) {
                    if (a < 0 || (a == 0 && (b < 0 || (b == 0 && c <= 0))))
                        continue;
                    const auto other = ps.id_at({g[0] + a, g[1] + b, g[2] + c});
                    if (!other)
                        continue;
                    const int sq = a * a + b * b + c * c;
                    const double kij = model.pair_strength(sq);
                    if (kij == 0.0)
                        continue;
                    if (kij < model.pair_strength_min || kij > model.pair_strength_max)
                        throw ModelError("pair strength outside the configured bounds [a0, A0]");
                    const double r = eps * std::sqrt(double(sq));
                    const double k = model.short_range_stiffness(r, eps, kij);
                    if (k > 0.0)
                        bonds.push_back(make_bond(ps, id, *other, k, BondKind::ShortRange));
                }
            }
        }
    }

    if (model.long_range.is_zero())
        return BondList(std::move(bonds), std::nullopt, &ps);

    SublatticeCoupling coupling{period, eps, ps.points_per_side(), model.long_range};
    std::size_t pairs = 0;
    const auto classes = sublattice_classes(ps, period);
    for (const auto& cls : classes)
        pairs += cls.size() * (cls.size() - (cls.empty() ? 0 : 1)) / 2;

    const bool implicit = storage == LongRangeStorage::Implicit ||
                          (storage == LongRangeStorage::Automatic && pairs > kExplicitLongRangeLimit);
    if (implicit)
        return BondList(std::move(bonds), coupling, &ps);

    bonds.reserve(bonds.size() + pairs);
    for (const auto& cls : classes) {
        for (std::size_t a = 0; a < cls.size(); ++a) {
            const Index3 ga = ps.lattice_index(cls[a]);
            for (std::size_t b = a + 1; b < cls.size(); ++b) {
                const Index3 gb = ps.lattice_index(cls[b]);
                const double k = coupling.stiffness({ga[0] - gb[0], ga[1] - gb[1], ga[2] - gb[2]});
                if (k > 0.0)
                    bonds.push_back(make_bond(ps, cls[a], cls[b], k, BondKind::LongRange));
            }
        }
    }
    return BondList(std::move(bonds), std::nullopt, &ps);
}

Mat3 pair_matrix(const Bond& b) { return b.stiffness * b.direction * b.direction.transpose(); }

struct StiffnessOperator::Implicit {
    KernelConvolution conv;
    std::vector<std::int64_t> grid_to_id;
    std::vector<Mat3> diag;
};

StiffnessOperator::StiffnessOperator(const ParticleSystem& ps, const BondList& bonds)
    : n_(ps.size()), bonds_(bonds.bonds()), diagonal_(ps.size(), Mat3::Zero())
{
    for (const auto& b : bonds_) {
        if (b.i >= n_ || b.j >= n_)
            throw ContractViolation("bond references a particle outside the system");
        const Mat3 e = pair_matrix(b);
        diagonal_[b.i] += e;
        diagonal_[b.j] += e;
    }
    if (!bonds.sublattice())
        return;

    const SublatticeCoupling coupling = *bonds.sublattice();
    const int p = ps.points_per_side();
    auto kernel = [coupling](const Index3& off) -> Sym6 {
        const double k = coupling.stiffness(off);
        if (k == 0.0)
            return {};
        const Vec3 d(off[0], off[1], off[2]);
        return to_sym6(k * d * d.transpose() / d.squaredNorm());
    };
    std::vector<std::int64_t> map(static_cast<std::size_t>(p) * p * p, -1);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < p; ++k) {
                const auto id = ps.id_at({i, j, k});
                if (id)
                    map[static_cast<std::size_t>(ps.grid_linear({i, j, k}))] = static_cast<std::int64_t>(*id);
            }
    implicit_ = std::make_unique<Implicit>(Implicit{KernelConvolution({p, p, p}, kernel), std::move(map), {}});

    std::vector<double> presence(implicit_->grid_to_id.size());
    for (std::size_t g = 0; g < presence.size(); ++g)
        presence[g] = implicit_->grid_to_id[g] >= 0 ? 1.0 : 0.0;
    std::vector<double> d6(6 * presence.size());
    implicit_->conv.apply_scalar(presence, d6);
    implicit_->diag.assign(n_, Mat3::Zero());
    for (std::size_t g = 0; g < presence.size(); ++g) {
        const std::int64_t id = implicit_->grid_to_id[g];
        if (id < 0)
            continue;
        Sym6 s;
        std::copy(d6.begin() + 6 * g, d6.begin() + 6 * g + 6, s.begin());
        implicit_->diag[id] = from_sym6(s);
        diagonal_[id] += implicit_->diag[id];
    }
}

StiffnessOperator::~StiffnessOperator() = default;
StiffnessOperator::StiffnessOperator(StiffnessOperator&&) noexcept = default;
StiffnessOperator& StiffnessOperator::operator=(StiffnessOperator&&) noexcept = default;

void StiffnessOperator::apply(const Field& u, Field& out) const
{
    if (point_count(u) != n_)
        throw ContractViolation("displacement field size does not match the particle system");
    out = Field::Zero(u.size());
    for (const auto& b : bonds_) {
        const Vec3 du = at(u, b.i) - at(u, b.j);
        const Vec3 f = b.stiffness * b.direction.dot(du) * b.direction;
        at(out, b.i) += f;
        at(out, b.j) -= f;
    }
    if (!implicit_)
        return;
    const std::size_t g = implicit_->grid_to_id.size();
    std::vector<double> x(3 * g, 0.0), y(3 * g);
    for (std::size_t q = 0; q < g; ++q) {
        const std::int64_t id = implicit_->grid_to_id[q];
        if (id >= 0)
            for (int c = 0; c < 3; ++c)
                x[3 * q + c] = u[3 * id + c];
    }
    implicit_->conv.apply_vector(x, y);
    for (std::size_t q = 0; q < g; ++q) {
        const std::int64_t id = implicit_->grid_to_id[q];
        if (id < 0)
            continue;
        const Vec3 wu(y[3 * q], y[3 * q + 1], y[3 * q + 2]);
        at(out, static_cast<std::size_t>(id)) += implicit_->diag[id] * at(u, static_cast<std::size_t>(id)) - wu;
    }
}

Field StiffnessOperator::apply(const Field& u) const
{
    Field out;
    apply(u, out);
    return out;
}

double StiffnessOperator::quadratic_form(const Field& u) const
{
    if (!implicit_) {
        double e = 0.0;
        for (const auto& b : bonds_) {
            const double s = b.direction.dot(at(u, b.i) - at(u, b.j));
            e += b.stiffness * s * s;
        }
        return e;
    }
    return u.dot(apply(u));
}

namespace {

void check_boundary(const ParticleSystem& ps, const Field& u)
{
    if (point_count(u) != ps.size())
        throw ContractViolation("displacement field size does not match the particle system");
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps.is_fixed(i) && at(u, i).squaredNorm() != 0.0)
            throw ContractViolation("nonzero displacement on fixed particle " + std::to_string(i));
    }
}

} // namespace

double energy(const ParticleSystem& ps, const BondList& bonds, const Field& u, BoundaryPolicy policy)
{
    if (policy == BoundaryPolicy::Enforce)
        check_boundary(ps, u);
    else if (point_count(u) != ps.size())
        throw ContractViolation("displacement field size does not match the particle system");
    return StiffnessOperator(ps, bonds).quadratic_form(u);
}

Field force(const ParticleSystem& ps, const BondList& bonds, const Field& u)
{
    Field f = -StiffnessOperator(ps, bonds).apply(u);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps.is_fixed(i))
            at(f, i).setZero();
    }
    return f;
}

} // namespace nlhom
