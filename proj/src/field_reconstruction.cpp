#include "nlhom/field_reconstruction.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nlhom/errors.hpp"
#include "nlhom/linalg.hpp"

namespace nlhom {

LatticeData::LatticeData(const ParticleSystem& ps, const Field& values)
{
    if (!ps.has_lattice() || !ps.lattice_complete())
        throw PreconditionError("field reconstruction needs a complete cubic lattice");
    if (point_count(values) != ps.size())
        throw ContractViolation("particle data size does not match the particle system");
    domain_ = ps.domain();
    eps_ = ps.eps();
    cells_ = ps.cells_per_side();
    grid_values_.resize(ps.size());
    for (std::size_t id = 0; id < ps.size(); ++id)
        grid_values_[static_cast<std::size_t>(ps.grid_linear(ps.lattice_index(id)))] = at(values, id);
}

Vec3 LatticeData::value(const Index3& idx) const
{
    const std::size_t p = static_cast<std::size_t>(cells_) + 1;
    return grid_values_[(idx[0] * p + idx[1]) * p + idx[2]];
}

Vec3 LatticeData::coordinates(const Vec3& x) const
{
    const double tol = 1e-12 * domain_.side;
    if (!x.allFinite() || !domain_.contains(x, tol))
        throw DomainError("evaluation point lies outside the domain");
    Vec3 s = (x - domain_.origin) / eps_;
    for (int c = 0; c < 3; ++c)
        s[c] = std::clamp(s[c], 0.0, static_cast<double>(cells_));
    return s;
}

Vec3 PiecewiseConstantField::operator()(const Vec3& x) const
{
    const Vec3 s = coordinates(x);
    Index3 idx{};
    for (int c = 0; c < 3; ++c)
        idx[c] = std::clamp(static_cast<int>(std::ceil(s[c] - 0.5)), 0, cells_);
    return value(idx);
}

Vec3 SplineField::operator()(const Vec3& x) const
{
    const Vec3 s = coordinates(x);
    Index3 base{};
    Vec3 t;
    for (int c = 0; c < 3; ++c) {
        base[c] = std::clamp(static_cast<int>(std::floor(s[c])), 0, cells_ - 1);
        t[c] = s[c] - base[c];
    }
    // The Kuhn simplex holding t is selected by the descending order of its coordinates.
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return t[a] > t[b]; });
    Index3 v = base;
    Vec3 out = (1.0 - t[order[0]]) * value(v);
    for (int step = 0; step < 3; ++step) {
        ++v[order[step]];
        const double w = step < 2 ? t[order[step]] - t[order[step + 1]] : t[order[2]];
        out += w * value(v);
    }
    return out;
}

Vec3 evaluate_pc(const PiecewiseConstantField& field, const Vec3& x) { return field(x); }
Vec3 evaluate_spline(const SplineField& field, const Vec3& x) { return field(x); }

double l2_difference(const VectorFunction& a, const VectorFunction& b, const DomainBox& box, int cells)
{
    if (cells < 1)
        throw ConfigurationError("quadrature grid needs at least one cell per side");
    const double h = box.side / cells;
    double acc = 0.0;
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j < cells; ++j)
            for (int k = 0; k < cells; ++k) {
                const Vec3 x = box.origin + h * Vec3(i + 0.5, j + 0.5, k + 0.5);
                acc += (a(x) - b(x)).squaredNorm();
            }
    return std::sqrt(acc * h * h * h);
}

double l2_norm(const VectorFunction& a, const DomainBox& box, int cells)
{
    return l2_difference(a, [](const Vec3&) { return Vec3::Zero().eval(); }, box, cells);
}

namespace {

struct KornEdge {
    std::size_t i;
    std::size_t j;
    double stiffness;
    Vec3 direction;
};

std::vector<KornEdge> korn_edges(const ParticleSystem& ps, const BondList& bonds)
{
    std::vector<KornEdge> edges;
    const int n = ps.cells_per_side();
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const Index3 g = ps.lattice_index(id);
        for (const auto& d : kuhn_edge_offsets()) {
            const Index3 h{g[0] + d[0], g[1] + d[1], g[2] + d[2]};
            if (h[0] > n || h[1] > n || h[2] > n)
                continue;
            const auto other = ps.id_at(h);
            if (!other)
                continue;
            const Bond* b = bonds.find(id, *other);
            const Vec3 dir = (ps.position(id) - ps.position(*other)).normalized();
            edges.push_back({id, *other, b != nullptr ? b->stiffness : 0.0, dir});
        }
    }
    return edges;
}

Field free_mask_of(const ParticleSystem& ps)
{
    Field m(3 * ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i)
        m.segment<3>(3 * static_cast<Eigen::Index>(i)).setConstant(ps.is_fixed(i) ? 0.0 : 1.0);
    return m;
}

} // namespace

std::pair<double, double> korn_forms(const ParticleSystem& ps, const BondList& bonds, const Field& u)
{
    if (point_count(u) != ps.size())
        throw ContractViolation("displacement field size does not match the particle system");
    const double eps = ps.eps();
    double num = 0.0, grad = 0.0, mass = 0.0;
    for (const auto& e : korn_edges(ps, bonds)) {
        const Vec3 du = at(u, e.i) - at(u, e.j);
        const double s = e.direction.dot(du);
        num += e.stiffness * s * s;
        grad += du.squaredNorm();
    }
    for (std::size_t i = 0; i < ps.size(); ++i)
        mass += at(u, i).squaredNorm();
    return {num, eps * grad + eps * eps * eps * mass};
}

double rayleigh_quotient(const ParticleSystem& ps, const BondList& bonds, const Field& u)
{
    const auto [num, den] = korn_forms(ps, bonds, u);
    if (!(den > 0.0))
        throw DomainError("Rayleigh quotient is undefined for u = 0");
    return num / den;
}

KornResult korn_constant(const ParticleSystem& ps, const BondList& bonds)
{
    if (ps.free_count() == 0)
        throw PreconditionError("Korn constant needs at least one free particle");
    const auto edges = korn_edges(ps, bonds);
    const Field mask = free_mask_of(ps);
    const double eps = ps.eps();
    const Eigen::Index n = static_cast<Eigen::Index>(3 * ps.size());

    LinearMap apply_k = [&](const Field& in, Field& out) {
        out = Field::Zero(n);
        for (const auto& e : edges) {
            const Vec3 f = e.stiffness * e.direction.dot(at(in, e.i) - at(in, e.j)) * e.direction;
            at(out, e.i) += f;
            at(out, e.j) -= f;
        }
        out.array() *= mask.array();
    };
    LinearMap apply_b = [&](const Field& in, Field& out) {
        out = eps * eps * eps * in;
        for (const auto& e : edges) {
            const Vec3 f = eps * (at(in, e.i) - at(in, e.j));
            at(out, e.i) += f;
            at(out, e.j) -= f;
        }
        out.array() *= mask.array();
    };

    Field kdiag = Field::Zero(n);
    for (const auto& e : edges) {
        for (int c = 0; c < 3; ++c) {
            const double v = e.stiffness * e.direction[c] * e.direction[c];
            kdiag[3 * e.i + c] += v;
            kdiag[3 * e.j + c] += v;
        }
    }
    for (Eigen::Index k = 0; k < n; ++k)
        kdiag[k] = (mask[k] > 0.0 && kdiag[k] > 0.0) ? 1.0 / kdiag[k] : 0.0;

    CgOptions cg;
    cg.tolerance = 1e-12;
    cg.max_iterations = std::max(200, static_cast<int>(50.0 * std::sqrt(mask.sum())));
    LinearMap precond = [&](const Field& in, Field& out) { out = in.cwiseProduct(kdiag); };
    LinearMap solve_k = [&](const Field& in, Field& out) {
        Field rhs = in.cwiseProduct(mask);
        out = Field::Zero(n);
        conjugate_gradient(apply_k, rhs, out, Field(), precond, cg);
    };

    const LanczosResult lz = lanczos_largest(apply_b, solve_k, apply_k, n, mask, 300, 1e-9);
    KornResult out;
    out.constant = 1.0 / lz.largest;
    out.lanczos_steps = lz.steps;
    out.minimizer = lz.vector;
    return out;
}

} // namespace nlhom
