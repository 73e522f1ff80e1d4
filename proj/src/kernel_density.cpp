#include "nlhom/kernel_density.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/quadrature/gauss.hpp>

#include "nlhom/convolution.hpp"
#include "nlhom/errors.hpp"

namespace nlhom {

namespace {

Index3 cell_index(const DomainBox& box, double eps, int cells, const Vec3& x)
{
    if (!x.allFinite() || !box.contains(x, 1e-12 * box.side))
        throw DomainError("evaluation point lies outside the domain");
    Index3 idx{};
    for (int c = 0; c < 3; ++c) {
        const double s = std::clamp((x[c] - box.origin[c]) / eps, 0.0, static_cast<double>(cells));
        idx[c] = std::clamp(static_cast<int>(std::ceil(s - 0.5)), 0, cells);
    }
    return idx;
}

// Voronoi cell of lattice index i along one axis, clipped to the box.
std::pair<double, double> cell_interval(double origin, double eps, int cells, int i)
{
    const double a = origin + eps * std::max(0.0, i - 0.5);
    const double b = origin + eps * std::min(static_cast<double>(cells), i + 0.5);
    return {a, b};
}

std::vector<double> cell_averages(const ParticleSystem& ps, const std::array<Factor1D, 3>& factors)
{
    const DomainBox& box = ps.domain();
    const int n = ps.cells_per_side();
    const double eps = ps.eps();
    std::vector<std::vector<double>> axis(3, std::vector<double>(n + 1));
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i <= n; ++i) {
            const auto [a, b] = cell_interval(box.origin[c], eps, n, i);
            axis[c][i] = factors[c].average(a, b);
        }
    std::vector<double> out(ps.size());
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const Index3 g = ps.lattice_index(id);
        out[id] = axis[0][g[0]] * axis[1][g[1]] * axis[2][g[2]];
    }
    return out;
}

} // namespace

DensityField::DensityField(const ParticleSystem& ps)
{
    if (!ps.has_lattice() || !ps.lattice_complete())
        throw PreconditionError("empirical density needs a complete cubic lattice");
    domain_ = ps.domain();
    eps_ = ps.eps();
    cells_ = ps.cells_per_side();
    const auto vol = voronoi_volumes(ps);
    values_.resize(ps.size());
    grid_to_id_.resize(ps.size());
    for (std::size_t id = 0; id < ps.size(); ++id) {
        values_[id] = ps.mass(id) / vol[id];
        grid_to_id_[static_cast<std::size_t>(ps.grid_linear(ps.lattice_index(id)))] = id;
    }
}

double DensityField::operator()(const Vec3& x) const
{
    const Index3 g = cell_index(domain_, eps_, cells_, x);
    const std::size_t p = static_cast<std::size_t>(cells_) + 1;
    return values_[grid_to_id_[(g[0] * p + g[1]) * p + g[2]]];
}

double DensityField::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

DensityField empirical_density(const ParticleSystem& ps) { return DensityField(ps); }

EmpiricalKernel::EmpiricalKernel(const ParticleSystem& ps, const BondList& bonds)
    : ps_(ps), bonds_(bonds), volumes_(voronoi_volumes(ps))
{
}

std::size_t EmpiricalKernel::cell_of(const Vec3& x) const
{
    return *ps_.id_at(cell_index(ps_.domain(), ps_.eps(), ps_.cells_per_side(), x));
}

std::pair<bool, double> EmpiricalKernel::long_range_pair(std::size_t i, std::size_t j) const
{
    if (i == j)
        return {false, 0.0};
    const Index3 gi = ps_.lattice_index(i), gj = ps_.lattice_index(j);
    const Index3 off{gi[0] - gj[0], gi[1] - gj[1], gi[2] - gj[2]};
    const int period = ps_.long_range_period();
    const bool adjacent = off[0] % period == 0 && off[1] % period == 0 && off[2] % period == 0;
    if (!adjacent)
        return {false, 0.0};
    if (const Bond* b = bonds_.find(i, j); b != nullptr && b->kind == BondKind::LongRange)
        return {true, b->stiffness};
    if (bonds_.sublattice())
        return {true, bonds_.sublattice()->stiffness(off)};
    return {true, 0.0};
}

Mat3 EmpiricalKernel::operator()(const Vec3& x, const Vec3& y) const
{
    const std::size_t i = cell_of(x), j = cell_of(y);
    const auto [adjacent, k] = long_range_pair(i, j);
    if (!adjacent || k == 0.0)
        return Mat3::Zero();
    const Vec3 e = (ps_.position(i) - ps_.position(j)).normalized();
    return k * e * e.transpose() / (volumes_[i] * volumes_[j]);
}

double EmpiricalKernel::pair_density(const Vec3& x, const Vec3& y) const
{
    const std::size_t i = cell_of(x), j = cell_of(y);
    if (!long_range_pair(i, j).first)
        return 0.0;
    const double e3 = std::pow(ps_.eps(), 3);
    return e3 * e3 / (volumes_[i] * volumes_[j]);
}

EmpiricalKernel empirical_kernel(const ParticleSystem& ps, const BondList& bonds) { return EmpiricalKernel(ps, bonds); }

Mat3 limit_kernel(const RadialProfile& K, double phi, const Vec3& x, const Vec3& y)
{
    const Vec3 d = x - y;
    const double r2 = d.squaredNorm();
    if (r2 == 0.0)
        throw DomainError("limit kernel is singular at x = y");
    return K(std::sqrt(r2)) * phi * d * d.transpose() / r2;
}

double Factor1D::operator()(double t) const
{
    switch (kind) {
    case Kind::One:
        return 1.0;
    case Kind::Linear:
        return t;
    case Kind::Gaussian:
        return std::exp(-0.5 * (t - center) * (t - center) / (width * width));
    case Kind::Zero:
        return 0.0;
    }
    return 0.0;
}

double Factor1D::average(double a, double b) const
{
    if (!(b > a))
        return (*this)(a);
    switch (kind) {
    case Kind::One:
        return 1.0;
    case Kind::Linear:
        return 0.5 * (a + b);
    case Kind::Gaussian: {
        const double s = std::sqrt(2.0) * width;
        return std::sqrt(M_PI / 2.0) * width * (std::erf((b - center) / s) - std::erf((a - center) / s)) / (b - a);
    }
    case Kind::Zero:
        return 0.0;
    }
    return 0.0;
}

double TestFunction::operator()(const Vec3& x, const Vec3& y) const
{
    double v = 1.0;
    for (int c = 0; c < 3; ++c)
        v *= x_factors[c](x[c]) * y_factors[c](y[c]);
    return v;
}

double TestFunction::x_part(const Vec3& x) const
{
    double v = 1.0;
    for (int c = 0; c < 3; ++c)
        v *= x_factors[c](x[c]);
    return v;
}

std::vector<TestFunction> test_function_library(const DomainBox& box)
{
    using K = Factor1D::Kind;
    const Factor1D one{};
    const Factor1D lin{K::Linear};
    std::vector<TestFunction> lib;
    lib.push_back({"const", {one, one, one}, {one, one, one}});
    lib.push_back({"x1", {lin, one, one}, {one, one, one}});
    lib.push_back({"x1y2", {lin, one, one}, {one, lin, one}});
    std::array<Factor1D, 3> bump;
    for (int c = 0; c < 3; ++c)
        bump[c] = Factor1D{K::Gaussian, box.origin[c] + 0.5 * box.side, 0.2 * box.side};
    lib.push_back({"gauss", bump, bump});
    return lib;
}

TestFunction zero_test_function()
{
    const Factor1D one{};
    return {"zero", {Factor1D{Factor1D::Kind::Zero}, one, one}, {one, one, one}};
}

std::array<int, 2> component_pair(int slot)
{
    static const std::array<std::array<int, 2>, 6> pairs = {{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};
    return pairs.at(static_cast<std::size_t>(slot));
}

std::string component_name(int slot)
{
    static const char* names[] = {"xx", "yy", "zz", "yz", "xz", "xy"};
    return names[slot];
}

std::array<double, 6> discrete_kernel_pairing(const ParticleSystem& ps, const BondList& bonds, const TestFunction& f)
{
    const std::vector<double> fx = cell_averages(ps, f.x_factors);
    const std::vector<double> fy = cell_averages(ps, f.y_factors);
    std::array<double, 6> out{};
    for (const auto& b : bonds.bonds()) {
        if (b.kind != BondKind::LongRange)
            continue;
        const double w = fx[b.i] * fy[b.j] + fx[b.j] * fy[b.i];
        for (int s = 0; s < 6; ++s) {
            const auto [k, l] = component_pair(s);
            out[s] += b.stiffness * b.direction[k] * b.direction[l] * w;
        }
    }
    if (!bonds.sublattice())
        return out;

    const SublatticeCoupling coupling = *bonds.sublattice();
    const int p = ps.points_per_side();
    KernelConvolution conv({p, p, p}, [coupling](const Index3& off) -> Sym6 {
        const double k = coupling.stiffness(off);
        if (k == 0.0)
            return {};
        const Vec3 d(off[0], off[1], off[2]);
        return to_sym6(k * d * d.transpose() / d.squaredNorm());
    });
    std::vector<double> gx(conv.node_count(), 0.0), gy(conv.node_count(), 0.0);
    for (std::size_t id = 0; id < ps.size(); ++id) {
        const auto g = static_cast<std::size_t>(ps.grid_linear(ps.lattice_index(id)));
        gx[g] = fx[id];
        gy[g] = fy[id];
    }
    std::vector<double> y(6 * conv.node_count());
    conv.apply_scalar(gy, y);
    for (std::size_t g = 0; g < gx.size(); ++g)
        for (int s = 0; s < 6; ++s)
            out[s] += gx[g] * y[6 * g + s];
    return out;
}

namespace {

// Gauss-Legendre nodes and weights on [0, 1].
template <int N>
const std::vector<std::pair<double, double>>& unit_rule()
{
    static const std::vector<std::pair<double, double>> rule = [] {
        using G = boost::math::quadrature::gauss<double, N>;
        std::vector<std::pair<double, double>> r;
        const auto& x = G::abscissa();
        const auto& w = G::weights();
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (x[k] == 0.0) {
                r.emplace_back(0.5, 0.5 * w[k]);
                continue;
            }
            r.emplace_back(0.5 + 0.5 * x[k], 0.5 * w[k]);
            r.emplace_back(0.5 - 0.5 * x[k], 0.5 * w[k]);
        }
        return r;
    }();
    return rule;
}

} // namespace

std::array<double, 6> limit_kernel_pairing(const RadialProfile& K, double phi, const DomainBox& box,
                                           const TestFunction& f)
{
    const auto& outer = unit_rule<20>();
    const auto& inner = unit_rule<30>();
    const double L = box.side;

    // C_c(s) = int g_c(t + s) h_c(t) dt over the t with t and t + s in the box.
    auto overlap = [&](int c, double s) {
        const double lo = box.origin[c] + std::max(0.0, -s);
        const double hi = box.origin[c] + L - std::max(0.0, s);
        if (!(hi > lo))
            return 0.0;
        const Factor1D& g = f.x_factors[c];
        const Factor1D& h = f.y_factors[c];
        double acc = 0.0;
        for (const auto& [t, w] : inner) {
            const double y = lo + (hi - lo) * t;
            acc += w * g(y + s) * h(y);
        }
        return acc * (hi - lo);
    };

    std::array<double, 6> out{};
    // Duffy split: eight octants, each cut into three pyramids with apex at d = 0 keyed by the dominant axis.
    for (int octant = 0; octant < 8; ++octant) {
        const Vec3 sign((octant & 1) ? -1.0 : 1.0, (octant & 2) ? -1.0 : 1.0, (octant & 4) ? -1.0 : 1.0);
        for (int axis = 0; axis < 3; ++axis) {
            const int b = (axis + 1) % 3, c = (axis + 2) % 3;
            for (const auto& [ts, ws] : outer) {
                const double s = L * ts;
                for (const auto& [u, wu] : outer)
                    for (const auto& [w, ww] : outer) {
                        Vec3 d;
                        d[axis] = sign[axis] * s;
                        d[b] = sign[b] * s * u;
                        d[c] = sign[c] * s * w;
                        const double r2 = d.squaredNorm();
                        const double k = K(std::sqrt(r2)) * phi;
                        if (k == 0.0)
                            continue;
                        const double weight = ws * wu * ww * L * s * s * k / r2 * overlap(0, d[0]) *
                                              overlap(1, d[1]) * overlap(2, d[2]);
                        for (int slot = 0; slot < 6; ++slot) {
                            const auto [kk, ll] = component_pair(slot);
                            out[slot] += weight * d[kk] * d[ll];
                        }
                    }
            }
        }
    }
    return out;
}

double discrete_density_pairing(const ParticleSystem& ps, const TestFunction& f)
{
    const std::vector<double> fx = cell_averages(ps, f.x_factors);
    double acc = 0.0;
    for (std::size_t id = 0; id < ps.size(); ++id)
        acc += ps.mass(id) * fx[id];
    return acc;
}

double limit_density_pairing(double rho, const DomainBox& box, const TestFunction& f)
{
    double v = rho;
    for (int c = 0; c < 3; ++c)
        v *= box.side * f.x_factors[c].average(box.origin[c], box.origin[c] + box.side);
    return v;
}

WeakConvergenceReport weak_convergence_check(const std::vector<double>& eps_schedule, const DomainBox& box,
                                             const InteractionModel& model, int period,
                                             const std::vector<TestFunction>& functions, double floor_rel)
{
    WeakConvergenceReport rep;
    const double phi = 1.0 / (static_cast<double>(period) * period * period);
    std::vector<std::array<double, 6>> limits;
    std::vector<double> density_limits;
    for (const auto& f : functions) {
        limits.push_back(limit_kernel_pairing(model.long_range, phi, box, f));
        density_limits.push_back(limit_density_pairing(1.0, box, f));
    }
    // series key -> gaps in schedule order
    std::map<std::pair<std::string, std::string>, std::vector<double>> series;
    std::map<std::string, double> scale;
    for (double eps : eps_schedule) {
        LatticeConfig cfg{eps, period, box};
        const ParticleSystem ps = build_cubic_lattice(cfg);
        const BondList bonds = assemble_bonds(ps, model, cfg);
        for (std::size_t t = 0; t < functions.size(); ++t) {
            const auto& f = functions[t];
            const auto disc = discrete_kernel_pairing(ps, bonds, f);
            double s = 0.0;
            for (int slot = 0; slot < 6; ++slot) {
                WeakConvergenceRow row{eps, f.name, component_name(slot), disc[slot], limits[t][slot],
                                       std::abs(disc[slot] - limits[t][slot])};
                series[{f.name, row.component}].push_back(row.gap);
                s = std::max(s, std::abs(limits[t][slot]));
                rep.rows.push_back(row);
            }
            scale[f.name] = std::max(scale[f.name], s);
            const double dd = discrete_density_pairing(ps, f);
            WeakConvergenceRow row{eps, f.name, "rho", dd, density_limits[t], std::abs(dd - density_limits[t])};
            series[{f.name, "rho"}].push_back(row.gap);
            rep.rows.push_back(row);
        }
    }
    rep.monotone = true;
    for (const auto& [key, gaps] : series) {
        const double s = key.second == "rho" ? std::abs(density_limits[0]) + 1.0 : scale[key.first];
        const double floor = floor_rel * std::max(s, 1e-300);
        for (std::size_t k = 1; k < gaps.size(); ++k) {
            if (gaps[k] > gaps[k - 1] + floor) {
                rep.monotone = false;
                rep.violations.push_back(key.first + "/" + key.second);
                break;
            }
        }
    }
    return rep;
}

} // namespace nlhom
