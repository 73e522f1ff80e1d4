#include "nlhom/meso_tensor.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "nlhom/errors.hpp"
#include "nlhom/linalg.hpp"

namespace nlhom {

void MesoProbe::validate(double eps) const
{
    if (!(side > 0.0) || !center.allFinite())
        throw ProbeError("probe cube needs a positive side and a finite center");
    if (!(gamma > 0.0 && gamma < 2.0))
        throw ProbeError("penalty exponent gamma must lie in (0, 2)");
    if (side / eps < 4.0 - 1e-9) {
        std::ostringstream msg;
        msg << "probe side h = " << side << " is below 4 eps (h/eps = " << side / eps << ")";
        throw ProbeError(msg.str());
    }
}

int SymTensor4::pair_index(int n, int p)
{
    if (n == p)
        return n;
    // 23 -> 3, 13 -> 4, 12 -> 5
    return 6 - n - p;
}

std::array<int, 2> SymTensor4::pair_of(int slot)
{
    static const std::array<std::array<int, 2>, 6> pairs = {{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};
    return pairs.at(static_cast<std::size_t>(slot));
}

Mat3 SymTensor4::basis(int slot)
{
    const auto [n, p] = pair_of(slot);
    Mat3 t = Mat3::Zero();
    t(n, p) = 1.0;
    t(p, n) = 1.0;
    return t;
}

double SymTensor4::contract(const Mat3& T, const Mat3& S) const
{
    double acc = 0.0;
    for (int n = 0; n < 3; ++n)
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
                for (int r = 0; r < 3; ++r)
                    acc += (*this)(n, p, q, r) * T(n, p) * S(q, r);
    return acc;
}

double SymTensor4::symmetry_defect() const
{
    const double scale = v_.cwiseAbs().maxCoeff();
    if (scale == 0.0)
        return 0.0;
    return (v_ - v_.transpose()).cwiseAbs().maxCoeff() / scale;
}

double SymTensor4::min_eigenvalue() const
{
    const Matrix6 sym = 0.5 * (v_ + v_.transpose());
    return Eigen::SelfAdjointEigenSolver<Matrix6>(sym).eigenvalues()(0);
}

bool SymTensor4::is_psd(double rel_tol) const { return min_eigenvalue() >= -rel_tol * std::abs(trace()); }

namespace {

struct LocalBond {
    std::size_t i;
    std::size_t j;
    double k;
    Vec3 e;
};

struct CellSystem {
    std::vector<std::size_t> ids;
    std::vector<LocalBond> bonds;
    Field diag;
};

CellSystem cell_system(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds)
{
    probe.validate(ps.eps());
    const double half = 0.5 * probe.side;
    const double tol = 1e-9 * ps.eps();
    if (ps.has_lattice()) {
        const DomainBox& box = ps.domain();
        for (int c = 0; c < 3; ++c) {
            if (probe.center[c] - half < box.origin[c] - tol || probe.center[c] + half > box.origin[c] + box.side + tol)
                throw ProbeError("probe cube is not contained in the domain");
        }
    }
    CellSystem cs;
    std::vector<std::int64_t> local(ps.size(), -1);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Vec3 d = ps.position(i) - probe.center;
        if (d.cwiseAbs().maxCoeff() <= half + tol) {
            local[i] = static_cast<std::int64_t>(cs.ids.size());
            cs.ids.push_back(i);
        }
    }
    if (cs.ids.empty())
        throw ProbeError("probe cube contains no particles");
    cs.diag = Field::Zero(3 * static_cast<Eigen::Index>(cs.ids.size()));
    for (const auto& b : short_bonds.bonds()) {
        if (b.kind != BondKind::ShortRange || local[b.i] < 0 || local[b.j] < 0)
            continue;
        const LocalBond lb{static_cast<std::size_t>(local[b.i]), static_cast<std::size_t>(local[b.j]), b.stiffness,
                           b.direction};
        for (int c = 0; c < 3; ++c) {
            cs.diag[3 * lb.i + c] += lb.k * lb.e[c] * lb.e[c];
            cs.diag[3 * lb.j + c] += lb.k * lb.e[c] * lb.e[c];
        }
        cs.bonds.push_back(lb);
    }
    return cs;
}

void apply_cell(const CellSystem& cs, const Field& in, Field& out)
{
    out = Field::Zero(in.size());
    for (const auto& b : cs.bonds) {
        const Vec3 f = b.k * b.e.dot(at(in, b.i) - at(in, b.j)) * b.e;
        at(out, b.i) += f;
        at(out, b.j) -= f;
    }
}

double cell_energy(const CellSystem& cs, const Field& v)
{
    double e = 0.0;
    for (const auto& b : cs.bonds) {
        const double s = b.e.dot(at(v, b.i) - at(v, b.j));
        e += b.k * s * s;
    }
    return e;
}

CellSolution solve_cell(const MesoProbe& probe, const CellSystem& cs, const Field& g)
{
    const double p = probe.penalty();
    // v = g + w with (S + p) w = -S g.
    Field sg;
    apply_cell(cs, g, sg);
    LinearMap op = [&](const Field& in, Field& out) {
        apply_cell(cs, in, out);
        out += p * in;
    };
    const Field diag = cs.diag.array() + p;
    LinearMap precond = [&](const Field& in, Field& out) { out = in.cwiseQuotient(diag); };
    CgOptions opts;
    opts.tolerance = 1e-13;
    opts.max_iterations = 5000;
    Field w = Field::Zero(g.size());
    conjugate_gradient(op, -sg, w, Field(), precond, opts);

    CellSolution sol;
    sol.ids = cs.ids;
    sol.v = g + w;
    sol.bond_energy = cell_energy(cs, sol.v);
    sol.penalty_sum = w.squaredNorm();
    sol.value = sol.bond_energy + p * sol.penalty_sum;
    return sol;
}

Field affine_target(const CellSystem& cs, const ParticleSystem& ps, const Vec3& center, const Mat3& T)
{
    Field g(3 * static_cast<Eigen::Index>(cs.ids.size()));
    for (std::size_t l = 0; l < cs.ids.size(); ++l)
        at(g, l) = T * (ps.position(cs.ids[l]) - center);
    return g;
}

void check_symmetric(const Mat3& T)
{
    if ((T - T.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, T.cwiseAbs().maxCoeff()))
        throw ContractViolation("cell functional needs a symmetric strain tensor");
}

} // namespace

CellSolution minimize_cell_functional(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds,
                                      const Mat3& T)
{
    check_symmetric(T);
    const CellSystem cs = cell_system(probe, ps, short_bonds);
    return solve_cell(probe, cs, affine_target(cs, ps, probe.center, T));
}

CellSolution minimize_cell_functional(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds,
                                      const Field& target)
{
    if (point_count(target) != ps.size())
        throw ContractViolation("cell target size does not match the particle system");
    const CellSystem cs = cell_system(probe, ps, short_bonds);
    Field g(3 * static_cast<Eigen::Index>(cs.ids.size()));
    for (std::size_t l = 0; l < cs.ids.size(); ++l)
        at(g, l) = at(target, cs.ids[l]);
    return solve_cell(probe, cs, g);
}

SymTensor4 extract_tensor(const MesoProbe& probe, const ParticleSystem& ps, const BondList& short_bonds)
{
    const CellSystem cs = cell_system(probe, ps, short_bonds);
    auto H = [&](const Mat3& T) { return solve_cell(probe, cs, affine_target(cs, ps, probe.center, T)).value; };

    std::array<double, 6> diag{};
    for (int I = 0; I < 6; ++I)
        diag[I] = H(SymTensor4::basis(I));
    auto weight = [](int I) { return I < 3 ? 1.0 : 2.0; };

    SymTensor4::Matrix6 v;
    for (int I = 0; I < 6; ++I) {
        v(I, I) = diag[I] / (weight(I) * weight(I));
        for (int J = I + 1; J < 6; ++J) {
            const double b = 0.5 * (H(SymTensor4::basis(I) + SymTensor4::basis(J)) - diag[I] - diag[J]);
            v(I, J) = v(J, I) = b / (weight(I) * weight(J));
        }
    }
    return SymTensor4(v / std::pow(probe.side, 3));
}

SymTensor4 closed_form_tensor(double k1, double k2, double k3)
{
    if (k1 < 0.0 || k2 < 0.0 || k3 < 0.0)
        throw ModelError("closed-form tensor needs nonnegative k1, k2, k3");
    const double body = 4.0 * k3 / (3.0 * std::sqrt(3.0));
    const double nnnn = k1 + std::sqrt(2.0) * k2 + body;
    const double mixed = k2 / std::sqrt(2.0) + body;
    SymTensor4::Matrix6 v = SymTensor4::Matrix6::Zero();
    for (int I = 0; I < 3; ++I) {
        v(I, I) = nnnn;
        v(I + 3, I + 3) = mixed;
        for (int J = 0; J < 3; ++J)
            if (J != I)
                v(I, J) = mixed;
    }
    return SymTensor4(v);
}

ProbePatch build_probe_patch(const MesoProbe& probe, double eps, const InteractionModel& model,
                             const Vec3& lattice_origin)
{
    probe.validate(eps);
    const double half = 0.5 * probe.side;
    Index3 lo{}, hi{};
    for (int c = 0; c < 3; ++c) {
        lo[c] = static_cast<int>(std::floor((probe.center[c] - half - lattice_origin[c]) / eps + 1e-9));
        hi[c] = static_cast<int>(std::ceil((probe.center[c] + half - lattice_origin[c]) / eps - 1e-9));
    }
    const int cells = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    LatticeConfig cfg;
    cfg.eps = eps;
    cfg.long_range_period = std::max(2, static_cast<int>(std::ceil(model.beta)));
    cfg.domain.origin = lattice_origin + eps * Vec3(lo[0], lo[1], lo[2]);
    cfg.domain.side = eps * cells;
    InteractionModel local = model;
    local.long_range = RadialProfile::constant(0.0);
    ParticleSystem ps = build_cubic_lattice(cfg);
    BondList bonds = assemble_bonds(ps, local, cfg).short_range_only();
    return ProbePatch{std::move(ps), std::move(bonds)};
}

std::vector<TensorStudyRow> tensor_limit_study(const std::vector<double>& eps_schedule,
                                               const std::vector<double>& h_schedule,
                                               const std::vector<double>& gammas, const InteractionModel& model,
                                               const Vec3& center, const Vec3& lattice_origin)
{
    const SymTensor4 exact = closed_form_tensor(model.k1, model.k2, model.k3);
    struct Component {
        const char* name;
        int n, p, q, r;
    };
    static const Component comps[] = {{"1111", 0, 0, 0, 0}, {"1122", 0, 0, 1, 1}, {"1212", 0, 1, 0, 1}};

    std::vector<TensorStudyRow> rows;
    for (double eps : eps_schedule) {
        for (double h : h_schedule) {
            for (double gamma : gammas) {
                MesoProbe probe{center, h, gamma};
                const ProbePatch patch = build_probe_patch(probe, eps, model, lattice_origin);
                const SymTensor4 a = extract_tensor(probe, patch.ps, patch.bonds);
                for (const auto& c : comps) {
                    TensorStudyRow row;
                    row.eps = eps;
                    row.h = h;
                    row.gamma = gamma;
                    row.component = c.name;
                    row.value = a(c.n, c.p, c.q, c.r);
                    row.closed_form = exact(c.n, c.p, c.q, c.r);
                    row.rel_error = row.closed_form != 0.0 ? std::abs(row.value - row.closed_form) / row.closed_form
                                                           : std::abs(row.value);
                    rows.push_back(row);
                }
            }
        }
    }
    return rows;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw InsufficientDataError("log-log fit needs at least two points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0))
            return std::numeric_limits<double>::quiet_NaN();
        const double lx = std::log(x[k]), ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

CellScalingReport cell_scaling_check(const std::vector<double>& h_series, double h_over_eps, double gamma,
                                    const InteractionModel& model, const Mat3& T, const Vec3& center)
{
    if (h_series.size() < 3)
        throw InsufficientDataError("cell scaling check needs at least three h values");
    CellScalingReport rep;
    rep.gamma = gamma;
    for (double h : h_series) {
        const double eps = h / h_over_eps;
        MesoProbe probe{center, h, gamma};
        const ProbePatch patch = build_probe_patch(probe, eps, model);
        const CellSolution sol = minimize_cell_functional(probe, patch.ps, patch.bonds, T);
        rep.h.push_back(h);
        rep.bond_energy.push_back(sol.bond_energy);
        rep.penalty_sum.push_back(sol.penalty_sum);
    }
    const bool zero_energy = std::all_of(rep.bond_energy.begin(), rep.bond_energy.end(), [](double v) { return v == 0.0; });
    const bool zero_penalty = std::all_of(rep.penalty_sum.begin(), rep.penalty_sum.end(), [](double v) { return v == 0.0; });
    if (zero_energy || zero_penalty) {
        rep.degenerate = true;
        rep.bond_energy_slope = std::numeric_limits<double>::quiet_NaN();
        rep.penalty_slope = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }
    rep.bond_energy_slope = loglog_slope(rep.h, rep.bond_energy);
    rep.penalty_slope = loglog_slope(rep.h, rep.penalty_sum);
    rep.bond_energy_ok = rep.bond_energy_slope >= 2.5 && rep.bond_energy_slope <= 3.5;
    rep.penalty_ok = rep.penalty_slope >= 5.0 + gamma - 0.5;
    return rep;
}

} // namespace nlhom
