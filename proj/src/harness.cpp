#include "nlhom/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <random>
#include <sstream>

#include "nlhom/errors.hpp"
#include "nlhom/field_reconstruction.hpp"
#include "nlhom/kernel_density.hpp"
#include "nlhom/meso_tensor.hpp"

namespace nlhom {

using nlohmann::json;

InitialRecipe InitialRecipe::parse(const std::string& spec, const DomainBox& box)
{
    InitialRecipe r;
    r.spec_ = spec;
    r.box_ = box;
    if (spec == "zero")
        return r;
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    if (colon == std::string::npos || (name != "bubble" && name != "bubble2"))
        throw ConfigurationError("unknown initial-data recipe '" + spec + "' (expected zero, bubble:ax,ay,az or bubble2:ax,ay,az)");
    std::vector<double> amp;
    try {
        amp = parse_number_list(spec.substr(colon + 1));
    } catch (const ConfigurationError&) {
        amp.clear();
    }
    if (amp.size() != 3)
        throw ConfigurationError("initial-data recipe '" + spec + "' needs three amplitudes");
    r.amplitude_ = Vec3(amp[0], amp[1], amp[2]);
    r.power_ = name == "bubble" ? 1 : 2;
    return r;
}

Vec3 InitialRecipe::operator()(const Vec3& x) const
{
    if (is_zero())
        return Vec3::Zero();
    double shape = 1.0;
    for (int c = 0; c < 3; ++c) {
        const double s = std::sin(M_PI * (x[c] - box_.origin[c]) / box_.side);
        shape *= power_ == 1 ? s : s * s;
    }
    return shape * amplitude_;
}

InitialData sample_initial_data(const ParticleSystem& ps, const InitialRecipe& a, const InitialRecipe& b)
{
    InitialData init{zero_field(ps.size()), zero_field(ps.size())};
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps.is_fixed(i))
            continue;
        at(init.a, i) = a(ps.position(i));
        at(init.b, i) = b(ps.position(i));
    }
    return init;
}

ContinuumInitialData sample_initial_data(const ContinuumGrid& grid, const InitialRecipe& a, const InitialRecipe& b)
{
    return {sample_on_grid(grid, [&](const Vec3& x) { return a(x); }),
            sample_on_grid(grid, [&](const Vec3& x) { return b(x); })};
}

std::string format_number(double v)
{
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            return buf;
    }
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& config_hash,
                     const std::vector<std::string>& columns)
    : out_(path), hash_(config_hash), columns_(columns.size() + 1)
{
    if (!out_)
        throw ConfigurationError("cannot write " + path.string());
    out_ << "config_hash";
    for (const auto& c : columns)
        out_ << ',' << c;
    out_ << '\n';
}

void CsvWriter::cell(const std::string& text)
{
    if (cells_ == 0)
        out_ << hash_;
    out_ << ',' << text;
    ++cells_;
}

CsvWriter& CsvWriter::operator<<(double v)
{
    cell(format_number(v));
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v)
{
    cell(std::to_string(v));
    return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v)
{
    cell(v);
    return *this;
}

void CsvWriter::end_row()
{
    if (cells_ + 1 != columns_)
        throw ContractViolation("CSV row has " + std::to_string(cells_ + 1) + " cells, header has " +
                                std::to_string(columns_));
    out_ << '\n';
    cells_ = 0;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct ReferenceRun {
    std::vector<Field> u; // one per sample instant
    double energy_drift = 0.0;
    double runtime = 0.0;
};

ReferenceRun continuum_reference(const ConvergenceSettings& s, const InitialRecipe& a, const InitialRecipe& b,
                                 int cells)
{
    const auto t0 = Clock::now();
    const ContinuumGrid grid(s.box, cells);
    const SymTensor4 tensor = closed_form_tensor(s.model.k1, s.model.k2, s.model.k3);
    const LimitKernel kernel{s.model.long_range, 1.0 / std::pow(s.period, 3)};
    const ContinuumOperator op(grid, tensor, kernel);
    const double interval = s.T / s.samples;
    const double dt = choose_time_step(op.stability_bound(), s.safety, interval);
    const int every = static_cast<int>(std::lround(interval / dt));
    const ContinuumTrajectory traj = simulate_continuum(op, sample_initial_data(grid, a, b), s.T, dt, every);
    ReferenceRun out;
    for (const auto& st : traj.samples)
        out.u.push_back(st.u);
    out.energy_drift = traj.energy_drift;
    out.runtime = seconds_since(t0);
    return out;
}

// Trapezoid in time of per-instant squared L2 errors; returns {space-time, final-time}.
std::pair<double, double> combine_in_time(const std::vector<double>& sq, double interval)
{
    double acc = 0.0;
    for (std::size_t k = 1; k < sq.size(); ++k)
        acc += 0.5 * interval * (sq[k - 1] + sq[k]);
    return {std::sqrt(acc), std::sqrt(sq.back())};
}

double squared_l2(const VectorFunction& f, const VectorFunction& g, const DomainBox& box, int q)
{
    const double d = l2_difference(f, g, box, q);
    return d * d;
}

ConvergenceRow discrete_run(const ConvergenceSettings& s, const InitialRecipe& a, const InitialRecipe& b,
                            const ContinuumGrid& grid, const ReferenceRun& ref, double eps)
{
    const auto t0 = Clock::now();
    LatticeConfig cfg{eps, s.period, s.box};
    const ParticleSystem ps = build_cubic_lattice(cfg);
    const BondList bonds = assemble_bonds(ps, s.model, cfg);
    const DiscreteOperator op(ps, bonds);
    const InitialData init = sample_initial_data(ps, a, b);
    const double interval = s.T / s.samples;
    const double dt = choose_time_step(op.stability_bound(), s.safety, interval);
    const int every = static_cast<int>(std::lround(interval / dt));
    const Trajectory traj = simulate(op, init, s.T, dt, every);
    if (traj.samples.size() != ref.u.size())
        throw ContractViolation("discrete and continuum sample instants differ");

    const int q = 2 * grid.cells();
    std::vector<double> sq;
    for (std::size_t k = 0; k < traj.samples.size(); ++k) {
        const PiecewiseConstantField pc(ps, traj.samples[k].u);
        const GridInterpolant cont(grid, ref.u[k]);
        sq.push_back(squared_l2([&](const Vec3& x) { return pc(x); }, [&](const Vec3& x) { return cont(x); }, s.box, q));
    }
    ConvergenceRow row;
    row.eps = eps;
    std::tie(row.l2_space_time_diff, row.l2_final_time_diff) = combine_in_time(sq, interval);
    row.initial_energy = op.stiffness_form(init.a) + op.mass_inner(init.b, init.b);
    row.runtime = seconds_since(t0);
    return row;
}

} // namespace

ConvergenceStudy run_convergence_study(const ConvergenceSettings& s)
{
    if (s.eps_schedule.empty())
        throw ConfigurationError("convergence study needs a nonempty eps schedule");
    for (std::size_t k = 1; k < s.eps_schedule.size(); ++k)
        if (!(s.eps_schedule[k] < s.eps_schedule[k - 1]))
            throw ConfigurationError("eps schedule must be strictly decreasing");
    if (s.samples < 1 || !(s.T > 0.0))
        throw ConfigurationError("convergence study needs T > 0 and at least one sample interval");
    const InitialRecipe a = InitialRecipe::parse(s.initial_a, s.box);
    const InitialRecipe b = InitialRecipe::parse(s.initial_b, s.box);

    ConvergenceStudy study;
    study.degenerate = a.is_zero() && b.is_zero();
    const ContinuumGrid grid(s.box, s.continuum_cells);
    ReferenceRun ref;
    try {
        ref = continuum_reference(s, a, b, s.continuum_cells);
    } catch (const Error& e) {
        throw Error(std::string("continuum reference: ") + e.what());
    }
    study.reference_runtime = ref.runtime;
    study.reference_energy_drift = ref.energy_drift;

    std::vector<ConvergenceRow> rows(s.eps_schedule.size());
    const std::size_t workers = static_cast<std::size_t>(std::max(1, s.threads));
    for (std::size_t start = 0; start < rows.size(); start += workers) {
        std::vector<std::future<ConvergenceRow>> jobs;
        for (std::size_t k = start; k < std::min(rows.size(), start + workers); ++k) {
            const double eps = s.eps_schedule[k];
            auto job = [&, eps] {
                try {
                    return discrete_run(s, a, b, grid, ref, eps);
                } catch (const Error& e) {
                    throw Error("discrete run at eps = " + format_number(eps) + ": " + e.what());
                }
            };
            jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, job));
        }
        for (std::size_t k = 0; k < jobs.size(); ++k)
            rows[start + k] = jobs[k].get();
    }
    study.rows = rows;

    bool all_zero = true, strict = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        all_zero = all_zero && rows[k].l2_space_time_diff == 0.0;
        if (k > 0 && !(rows[k].l2_space_time_diff < rows[k - 1].l2_space_time_diff))
            strict = false;
    }
    study.decreasing = strict || all_zero;

    double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
    for (const auto& r : rows) {
        emin = std::min(emin, r.initial_energy);
        emax = std::max(emax, r.initial_energy);
    }
    study.energy_bounded = std::isfinite(emax) && (emax == 0.0 || emax <= 4.0 * emin);

    if (s.refinement && s.continuum_cells % 2 == 0) {
        const ReferenceRun coarse = continuum_reference(s, a, b, s.continuum_cells / 2);
        const ContinuumGrid cgrid(s.box, s.continuum_cells / 2);
        std::vector<double> sq;
        for (std::size_t k = 0; k < ref.u.size(); ++k) {
            const GridInterpolant fine(grid, ref.u[k]);
            const GridInterpolant crs(cgrid, coarse.u[k]);
            sq.push_back(squared_l2([&](const Vec3& x) { return fine(x); }, [&](const Vec3& x) { return crs(x); },
                                    s.box, 2 * s.continuum_cells));
        }
        std::tie(study.refinement_space_time_diff, study.refinement_final_time_diff) =
            combine_in_time(sq, s.T / s.samples);
    }
    return study;
}

bool ExperimentResult::all_pass() const
{
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

const std::vector<std::string>& experiment_kinds()
{
    static const std::vector<std::string> kinds = {"simulate",   "stationary", "meso-tensor", "continuum",
                                                   "converge",   "korn-check", "kernel-check", "bonds-info",
                                                   "lattice-info", "diagnostics"};
    return kinds;
}

const std::vector<ConfigKey>& config_schema()
{
    static const std::vector<ConfigKey> schema = {
        {"experiment", "", "optional; must match the subcommand when present"},
        {"domain.origin", "0,0,0", "box corner"},
        {"domain.side", "1", "box side L"},
        {"lattice.eps", "0.125", "lattice period eps (L/eps must be an integer)"},
        {"lattice.period", "2", "long-range sublattice period N"},
        {"lattice.mass", "1", "uniform mass coefficient m (particle mass m eps^3)"},
        {"model.k1", "1", "edge stiffness coefficient"},
        {"model.k2", "1", "face-diagonal stiffness coefficient"},
        {"model.k3", "1", "body-diagonal stiffness coefficient"},
        {"model.K", "const:1", "long-range profile: const:c, exp:a or gauss:a"},
        {"model.alpha", "1.7320508075688772", "near cutoff start (units of eps)"},
        {"model.beta", "2", "near cutoff end (units of eps)"},
        {"triangulation.min_volume_ratio", "0.1", "simplex volume threshold C in |P| > C eps^3"},
        {"initial.a", "bubble:1,0,0", "initial displacement recipe"},
        {"initial.b", "zero", "initial velocity recipe"},
        {"time.T", "10", "final time for simulate and continuum"},
        {"time.safety", "0.5", "time step as a fraction of the stability bound"},
        {"time.sample_every", "10", "steps between stored samples"},
        {"energy.drift_tol", "1e-4", "relative energy drift tolerance"},
        {"stationary.lambda", "2", "list of spectral parameters"},
        {"stationary.tolerance", "1e-10", "CG relative residual tolerance"},
        {"laplace.check", "true", "stationary: also compare against the Laplace quadrature of a trajectory"},
        {"laplace.dt_fraction", "0.1", "time step of the Laplace trajectory as a fraction of the stability bound"},
        {"laplace.tol", "1e-3", "relative tolerance of the Laplace identity"},
        {"laplace.cells", "8", "continuum grid cells for the Laplace check"},
        {"continuum.cells", "16", "continuum grid cells per side"},
        {"continuum.snapshots", "5", "number of snapshot instants written by the continuum subcommand"},
        {"tensor.h", "0.25", "probe side h"},
        {"tensor.h_over_eps", "8,16", "list of h/eps ratios"},
        {"tensor.gamma", "1", "list of penalty exponents"},
        {"tensor.center", "0.5,0.5,0.5", "probe center"},
        {"tensor.tolerance", "0.15", "relative tolerance against the closed form at the first ratio"},
        {"tensor.gamma_pair", "0.5,1.5", "diagnostics: two gammas compared at the last ratio"},
        {"tensor.gamma_tol", "0.1", "diagnostics: relative agreement of the gamma pair"},
        {"scaling.h", "0.25,0.125,0.0625", "probe sides for the scaling fit"},
        {"scaling.h_over_eps", "8", "fixed h/eps of the scaling fit"},
        {"scaling.gamma", "1", "penalty exponent of the scaling fit"},
        {"korn.eps", "0.25,0.125,0.0625", "eps series for the Korn constant"},
        {"korn.floor", "1e-3", "lower bound the Korn constant must exceed"},
        {"kernel.eps", "0.125,0.0625,0.03125", "eps series for the weak-convergence check"},
        {"converge.eps", "0.125,0.0625,0.03125", "strictly decreasing eps series"},
        {"converge.T", "1", "final time of the convergence study"},
        {"converge.samples", "20", "sample intervals over [0, T]"},
        {"converge.cells", "32", "continuum reference grid cells per side"},
        {"converge.control", "true", "also run the K = 0 control"},
        {"converge.refinement", "true", "also report the reference grid refinement difference"},
    };
    return schema;
}

namespace {

std::vector<std::string> schema_keys()
{
    std::vector<std::string> keys;
    for (const auto& k : config_schema())
        keys.push_back(k.key);
    return keys;
}

std::string schema_default(const std::string& key)
{
    for (const auto& k : config_schema())
        if (k.key == key)
            return k.fallback;
    throw ContractViolation("no schema entry for " + key);
}

double cfg_double(const Config& c, const std::string& key)
{
    return c.get_double(key, std::stod(schema_default(key)));
}

int cfg_int(const Config& c, const std::string& key) { return c.get_int(key, std::stoi(schema_default(key))); }

std::string cfg_string(const Config& c, const std::string& key) { return c.get_string(key, schema_default(key)); }

bool cfg_bool(const Config& c, const std::string& key) { return c.get_bool(key, schema_default(key) == "true"); }

std::vector<double> cfg_list(const Config& c, const std::string& key)
{
    return c.get_list(key, parse_number_list(schema_default(key)));
}

Vec3 cfg_vec3(const Config& c, const std::string& key)
{
    const auto v = parse_number_list(schema_default(key));
    return c.get_vec3(key, Vec3(v[0], v[1], v[2]));
}

DomainBox box_from_config(const Config& c)
{
    DomainBox box{cfg_vec3(c, "domain.origin"), cfg_double(c, "domain.side")};
    box.validate();
    return box;
}

void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigurationError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

struct Context {
    const Config& cfg;
    const RunOptions& options;
    std::string hash;
    ExperimentResult& result;

    std::filesystem::path artifact(const std::string& name) const
    {
        result.artifacts.push_back(name);
        return options.out_dir / name;
    }
    void verdict(const std::string& name, bool pass, const std::string& detail = {}) const
    {
        result.verdicts.push_back({name, pass, detail});
    }
};

struct LaplaceCheck {
    double lambda = 0.0;
    double T = 0.0;
    double dt = 0.0;
    double rel_diff = 0.0;
    double stationary_residual = 0.0;
};

double laplace_horizon(double lambda) { return std::ceil(std::log(1e8) / lambda * (1.0 + 1e-12)); }

LaplaceCheck discrete_laplace_check(const DiscreteOperator& op, const InitialData& init, double lambda,
                                    double fraction, double tol)
{
    LaplaceCheck out;
    out.lambda = lambda;
    out.T = laplace_horizon(lambda);
    out.dt = choose_time_step(op.stability_bound(), fraction, out.T);
    const Trajectory traj = simulate(op, init, out.T, out.dt, 1);
    const Field q = laplace_quadrature(traj, lambda);
    CgOptions cg;
    cg.tolerance = tol;
    const StationarySolve st = solve_stationary(op, init, lambda, cg);
    out.stationary_residual = st.residual;
    const double n = op.mass_norm(st.u);
    out.rel_diff = n > 0.0 ? op.mass_norm(q - st.u) / n : op.mass_norm(q);
    return out;
}

LaplaceCheck continuum_laplace_check(const ContinuumOperator& op, const ContinuumInitialData& init, double lambda,
                                     double fraction, double tol)
{
    LaplaceCheck out;
    out.lambda = lambda;
    out.T = laplace_horizon(lambda);
    out.dt = choose_time_step(op.stability_bound(), fraction, out.T);
    const ContinuumTrajectory traj = simulate_continuum(op, init, out.T, out.dt, 1);
    const Field q = continuum_laplace_quadrature(traj, lambda);
    CgOptions cg;
    cg.tolerance = tol;
    const ContinuumStationary st = solve_stationary_continuum(op, init, lambda, cg);
    out.stationary_residual = st.residual;
    const double n = op.mass_norm(st.u);
    out.rel_diff = n > 0.0 ? op.mass_norm(q - st.u) / n : op.mass_norm(q);
    return out;
}

json laplace_json(const LaplaceCheck& l)
{
    return {{"lambda", l.lambda}, {"T", l.T}, {"dt", l.dt}, {"relative_difference", l.rel_diff},
            {"stationary_residual", l.stationary_residual}};
}

struct DiscreteSetup {
    LatticeConfig lattice;
    ParticleSystem ps;
    BondList bonds;
};

DiscreteSetup discrete_setup(const Config& c, std::optional<double> eps = std::nullopt)
{
    LatticeConfig lat = lattice_from_config(c);
    if (eps)
        lat.eps = *eps;
    const InteractionModel model = model_from_config(c);
    ParticleSystem ps = build_cubic_lattice(lat, uniform_mass(cfg_double(c, "lattice.mass")));
    BondList bonds = assemble_bonds(ps, model, lat);
    return {lat, std::move(ps), std::move(bonds)};
}

ContinuumOperator continuum_operator(const Config& c, int cells)
{
    const InteractionModel model = model_from_config(c);
    const ContinuumGrid grid(box_from_config(c), cells);
    const int period = cfg_int(c, "lattice.period");
    const LimitKernel kernel{model.long_range, 1.0 / std::pow(period, 3)};
    std::vector<double> rho(grid.node_count(), cfg_double(c, "lattice.mass"));
    return ContinuumOperator(grid, closed_form_tensor(model.k1, model.k2, model.k3), kernel, std::move(rho));
}

void run_simulate(const Context& ctx)
{
    const Config& c = ctx.cfg;
    const DiscreteSetup s = discrete_setup(c);
    const DiscreteOperator op(s.ps, s.bonds);
    const InitialData init = sample_initial_data(s.ps, InitialRecipe::parse(cfg_string(c, "initial.a"), s.lattice.domain),
                                                 InitialRecipe::parse(cfg_string(c, "initial.b"), s.lattice.domain));
    const double T = cfg_double(c, "time.T");
    const double dt = choose_time_step(op.stability_bound(), cfg_double(c, "time.safety"), T);
    const Trajectory traj = simulate(op, init, T, dt, cfg_int(c, "time.sample_every"));

    CsvWriter samples(ctx.artifact("samples.csv"), ctx.hash,
                      {"t", "particle_id", "x", "y", "z", "ux", "uy", "uz", "vx", "vy", "vz"});
    for (const auto& st : traj.samples)
        for (std::size_t i = 0; i < s.ps.size(); ++i) {
            const Vec3 x = s.ps.position(i), u = at(st.u, i), v = at(st.v, i);
            samples << st.t << i << x[0] << x[1] << x[2] << u[0] << u[1] << u[2] << v[0] << v[1] << v[2];
            samples.end_row();
        }
    CsvWriter energy(ctx.artifact("energy.csv"), ctx.hash, {"t", "energy", "modified_energy"});
    for (std::size_t k = 0; k < traj.samples.size(); ++k) {
        energy << traj.samples[k].t << traj.sample_energy[k] << traj.sample_modified_energy[k];
        energy.end_row();
    }
    const double tol = cfg_double(c, "energy.drift_tol");
    ctx.result.report = {{"particles", s.ps.size()},
                         {"free_particles", s.ps.free_count()},
                         {"dt", dt},
                         {"steps", traj.steps},
                         {"stability_bound", op.stability_bound()},
                         {"initial_energy", traj.initial_energy},
                         {"energy_drift", traj.energy_drift},
                         {"energy_fluctuation", traj.energy_fluctuation}};
    ctx.verdict("energy_drift", traj.energy_drift <= tol, format_number(traj.energy_drift));
}

void run_stationary(const Context& ctx)
{
    const Config& c = ctx.cfg;
    const DiscreteSetup s = discrete_setup(c);
    const DiscreteOperator op(s.ps, s.bonds);
    const InitialData init = sample_initial_data(s.ps, InitialRecipe::parse(cfg_string(c, "initial.a"), s.lattice.domain),
                                                 InitialRecipe::parse(cfg_string(c, "initial.b"), s.lattice.domain));
    const double tol = cfg_double(c, "stationary.tolerance");
    CgOptions cg;
    cg.tolerance = tol;
    CsvWriter out(ctx.artifact("stationary.csv"), ctx.hash, {"lambda", "particle_id", "x", "y", "z", "ux", "uy", "uz"});
    json solves = json::array();
    for (double lambda : cfg_list(c, "stationary.lambda")) {
        const StationarySolve st = solve_stationary(op, init, lambda, cg);
        for (std::size_t i = 0; i < s.ps.size(); ++i) {
            const Vec3 x = s.ps.position(i), u = at(st.u, i);
            out << lambda << i << x[0] << x[1] << x[2] << u[0] << u[1] << u[2];
            out.end_row();
        }
        json j = {{"lambda", lambda}, {"residual", st.residual}, {"iterations", st.iterations}};
        ctx.verdict("residual_lambda_" + format_number(lambda), st.residual <= tol, format_number(st.residual));
        if (cfg_bool(c, "laplace.check")) {
            const LaplaceCheck l = discrete_laplace_check(op, init, lambda, cfg_double(c, "laplace.dt_fraction"), tol);
            j["laplace"] = laplace_json(l);
            ctx.verdict("laplace_lambda_" + format_number(lambda), l.rel_diff <= cfg_double(c, "laplace.tol"),
                        format_number(l.rel_diff));
        }
        solves.push_back(j);
    }
    ctx.result.report = {{"solves", solves}};
}

struct TensorProbeResult {
    double ratio = 0.0;
    double eps = 0.0;
    double gamma = 0.0;
    SymTensor4 tensor;
    double max_rel_error = 0.0;
};

std::vector<TensorProbeResult> tensor_probes(const Config& c, const std::vector<double>& ratios,
                                             const std::vector<double>& gammas, CsvWriter* csv)
{
    const InteractionModel model = model_from_config(c);
    const double h = cfg_double(c, "tensor.h");
    const Vec3 center = cfg_vec3(c, "tensor.center");
    const SymTensor4 exact = closed_form_tensor(model.k1, model.k2, model.k3);
    struct Comp {
        const char* name;
        int n, p, q, r;
    };
    static const Comp comps[] = {{"1111", 0, 0, 0, 0}, {"1122", 0, 0, 1, 1}, {"1212", 0, 1, 0, 1}};
    std::vector<TensorProbeResult> out;
    for (double ratio : ratios)
        for (double gamma : gammas) {
            TensorProbeResult r;
            r.ratio = ratio;
            r.eps = h / ratio;
            r.gamma = gamma;
            const MesoProbe probe{center, h, gamma};
            const ProbePatch patch = build_probe_patch(probe, r.eps, model);
            r.tensor = extract_tensor(probe, patch.ps, patch.bonds);
            for (const auto& cp : comps) {
                const double v = r.tensor(cp.n, cp.p, cp.q, cp.r), e = exact(cp.n, cp.p, cp.q, cp.r);
                const double rel = e != 0.0 ? std::abs(v - e) / std::abs(e) : std::abs(v);
                r.max_rel_error = std::max(r.max_rel_error, rel);
                if (csv) {
                    *csv << r.eps << h << gamma << cp.name << v << e << rel;
                    csv->end_row();
                }
            }
            out.push_back(r);
        }
    return out;
}

json tensor_json(const SymTensor4& t)
{
    json rows = json::array();
    for (int i = 0; i < 6; ++i) {
        std::vector<double> row(6);
        for (int j = 0; j < 6; ++j)
            row[j] = t.voigt()(i, j);
        rows.push_back(row);
    }
    return rows;
}

// Verdicts shared by meso-tensor and diagnostics.
json tensor_verdicts(const std::vector<TensorProbeResult>& probes, const std::vector<double>& ratios,
                     const std::vector<double>& gammas, double tol, std::vector<Verdict>& verdicts)
{
    json j = json::array();
    bool sym_ok = true;
    for (const auto& p : probes) {
        const bool ok = p.tensor.symmetry_defect() <= 1e-10 && p.tensor.is_psd(1e-10);
        sym_ok = sym_ok && ok;
        j.push_back({{"h_over_eps", p.ratio},
                     {"eps", p.eps},
                     {"gamma", p.gamma},
                     {"max_rel_error", p.max_rel_error},
                     {"symmetry_defect", p.tensor.symmetry_defect()},
                     {"min_eigenvalue", p.tensor.min_eigenvalue()},
                     {"voigt", tensor_json(p.tensor)}});
    }
    verdicts.push_back({"tensor_symmetry_psd", sym_ok, ""});
    for (double gamma : gammas) {
        std::vector<double> errs;
        for (const auto& p : probes)
            if (p.gamma == gamma)
                errs.push_back(p.max_rel_error);
        const std::string g = format_number(gamma);
        verdicts.push_back({"tensor_within_tolerance_gamma_" + g, !errs.empty() && errs.front() <= tol,
                            "h/eps=" + format_number(ratios.front()) + " max rel error " + format_number(errs.front())});
        bool dec = true;
        for (std::size_t k = 1; k < errs.size(); ++k)
            dec = dec && errs[k] < errs[k - 1];
        if (errs.size() > 1)
            verdicts.push_back({"tensor_error_decreasing_gamma_" + g, dec, ""});
    }
    return j;
}

void run_meso_tensor(const Context& ctx)
{
    const Config& c = ctx.cfg;
    const auto ratios = cfg_list(c, "tensor.h_over_eps");
    const auto gammas = cfg_list(c, "tensor.gamma");
    CsvWriter csv(ctx.artifact("tensor.csv"), ctx.hash,
                  {"eps", "h", "gamma", "npqr", "value", "closed_form", "rel_error"});
    const auto probes = tensor_probes(c, ratios, gammas, &csv);
    const InteractionModel model = model_from_config(c);
    ctx.result.report = {{"probes", tensor_verdicts(probes, ratios, gammas, cfg_double(c, "tensor.tolerance"),
                                                    ctx.result.verdicts)},
                         {"closed_form", tensor_json(closed_form_tensor(model.k1, model.k2, model.k3))}};
}

void run_continuum(const Context& ctx)
{
    const Config& c = ctx.cfg;
    const ContinuumOperator op = continuum_operator(c, cfg_int(c, "continuum.cells"));
    const DomainBox box = box_from_config(c);
    const ContinuumInitialData init = sample_initial_data(op.grid(), InitialRecipe::parse(cfg_string(c, "initial.a"), box),
                                                          InitialRecipe::parse(cfg_string(c, "initial.b"), box));
    const double T = cfg_double(c, "time.T");
    const double dt = choose_time_step(op.stability_bound(), cfg_double(c, "time.safety"), T);
    const ContinuumTrajectory traj = simulate_continuum(op, init, T, dt, cfg_int(c, "time.sample_every"));

    const int snaps = std::max(1, cfg_int(c, "continuum.snapshots"));
    const std::size_t last = traj.samples.size() - 1;
    std::vector<std::size_t> picks;
    for (int k = 0; k < snaps; ++k) {
        const std::size_t idx = snaps == 1 ? last : static_cast<std::size_t>(std::lround(double(k) * last / (snaps - 1)));
        if (picks.empty() || picks.back() != idx)
            picks.push_back(idx);
    }
    CsvWriter csv(ctx.artifact("snapshots.csv"), ctx.hash, {"t", "x", "y", "z", "ux", "uy", "uz"});
    for (std::size_t idx : picks) {
        const auto& st = traj.samples[idx];
        for (std::size_t n = 0; n < op.grid().node_count(); ++n) {
            const Vec3 x = op.grid().position(n), u = at(st.u, n);
            csv << st.t << x[0] << x[1] << x[2] << u[0] << u[1] << u[2];
            csv.end_row();
        }
    }
    CsvWriter energy(ctx.artifact("energy.csv"), ctx.hash, {"t", "energy"});
    for (std::size_t k = 0; k < traj.samples.size(); ++k) {
        energy << traj.samples[k].t << traj.sample_energy[k];
        energy.end_row();
    }
    const IsotropyResult iso = isotropy_gate(op.tensor());
    const double tol = cfg_double(c, "energy.drift_tol");
    ctx.result.report = {{"nodes", op.grid().node_count()},
                         {"dt", dt},
                         {"steps", traj.steps},
                         {"stability_bound", traj.stability_bound},
                         {"energy_drift", traj.energy_drift},
                         {"energy_fluctuation", traj.energy_fluctuation},
                         {"isotropy_residual", iso.residual},
                         {"isotropic", iso.isotropic}};
    ctx.verdict("energy_drift", traj.energy_drift <= tol, format_number(traj.energy_drift));
}

ConvergenceSettings convergence_settings(const Config& c, int threads)
{
    ConvergenceSettings s;
    s.box = box_from_config(c);
    s.model = model_from_config(c);
    s.period = cfg_int(c, "lattice.period");
    s.eps_schedule = cfg_list(c, "converge.eps");
    s.T = cfg_double(c, "converge.T");
    s.samples = cfg_int(c, "converge.samples");
    s.continuum_cells = cfg_int(c, "converge.cells");
    s.safety = cfg_double(c, "time.safety");
    s.initial_a = cfg_string(c, "initial.a");
    s.initial_b = cfg_string(c, "initial.b");
    s.refinement = cfg_bool(c, "converge.refinement");
    s.threads = threads;
    return s;
}

json study_json(const ConvergenceStudy& st)
{
    json rows = json::array();
    for (const auto& r : st.rows)
        rows.push_back({{"eps", r.eps},
                        {"l2_space_time_diff", r.l2_space_time_diff},
                        {"l2_final_time_diff", r.l2_final_time_diff},
                        {"runtime_seconds", r.runtime},
                        {"initial_energy", r.initial_energy}});
    return {{"rows", rows},
            {"strictly_decreasing", st.decreasing},
            {"degenerate", st.degenerate},
            {"initial_energy_bounded", st.energy_bounded},
            {"reference_runtime_seconds", st.reference_runtime},
            {"reference_energy_drift", st.reference_energy_drift}};
}

void run_converge(const Context& ctx)
{
    const Config& c = ctx.cfg;
    const ConvergenceSettings s = convergence_settings(c, ctx.options.threads);
    const ConvergenceStudy main = run_convergence_study(s);

    CsvWriter csv(ctx.artifact("convergence.csv"), ctx.hash,
                  {"series", "eps", "l2_space_time_diff", "l2_final_time_diff"});
    for (const auto& r : main.rows) {
        csv << "main" << r.eps << r.l2_space_time_diff << r.l2_final_time_diff;
        csv.end_row();
    }
    json report = {{"main", study_json(main)},
                   {"note", "verdicts assert monotone decrease only; no convergence rate is claimed"}};
    ctx.verdict("convergence_decreasing", main.decreasing);
    if (cfg_bool(c, "converge.control")) {
        ConvergenceSettings sc = s;
        sc.model.long_range = RadialProfile::constant(0.0);
        sc.refinement = false;
        const ConvergenceStudy control = run_convergence_study(sc);
        for (const auto& r : control.rows) {
            csv << "control" << r.eps << r.l2_space_time_diff << r.l2_final_time_diff;
            csv.end_row();
        }
        report["control"] = study_json(control);
        ctx.verdict("control_decreasing", control.decreasing);
    }
    if (main.refinement_space_time_diff >= 0.0) {
        CsvWriter ref(ctx.artifact("refinement.csv"), ctx.hash,
                      {"coarse_cells", "fine_cells", "l2_space_time_diff", "l2_final_time_diff"});
        ref << s.continuum_cells / 2 << s.continuum_cells << main.refinement_space_time_diff
            << main.refinement_final_time_diff;
        ref.end_row();
        report["refinement"] = {{"coarse_cells", s.continuum_cells / 2},
                                {"fine_cells", s.continuum_cells},
                                {"l2_space_time_diff", main.refinement_space_time_diff},
                                {"l2_final_time_diff", main.refinement_final_time_diff}};
    }
    ctx.result.report = report;
}

struct KornSeries {
    std::vector<double> eps;
    std::vector<double> constants;
    std::vector<int> steps;
};

KornSeries korn_series(const Config& c)
{
    KornSeries out;
    Config local = c;
    local.set("model.K", "const:0");
    for (double eps : cfg_list(c, "korn.eps")) {
        const DiscreteSetup s = discrete_setup(local, eps);
        const KornResult k = korn_constant(s.ps, s.bonds);
        out.eps.push_back(eps);
        out.constants.push_back(k.constant);
        out.steps.push_back(k.lanczos_steps);
    }
    return out;
}

void run_korn(const Context& ctx)
{
    const KornSeries k = korn_series(ctx.cfg);
    const double floor = cfg_double(ctx.cfg, "korn.floor");
    CsvWriter csv(ctx.artifact("korn.csv"), ctx.hash, {"eps", "C_emp", "lanczos_steps"});
    bool ok = true;
    for (std::size_t i = 0; i < k.eps.size(); ++i) {
        csv << k.eps[i] << k.constants[i] << k.steps[i];
        csv.end_row();
        ok = ok && k.constants[i] > floor;
    }
    ctx.result.report = {{"eps", k.eps}, {"C_emp", k.constants}, {"floor", floor}};
    ctx.verdict("korn_above_floor", ok);
}

WeakConvergenceReport weak_report(const Config& c)
{
    const DomainBox box = box_from_config(c);
    return weak_convergence_check(cfg_list(c, "kernel.eps"), box, model_from_config(c), cfg_int(c, "lattice.period"),
                                  test_function_library(box));
}

json weak_json(const WeakConvergenceReport& rep)
{
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"eps", r.eps},
                        {"test_function", r.test_function},
                        {"component", r.component},
                        {"discrete", r.discrete},
                        {"limit", r.limit},
                        {"gap", r.gap}});
    return {{"rows", rows}, {"monotone", rep.monotone}, {"violations", rep.violations}};
}

void run_kernel(const Context& ctx)
{
    const WeakConvergenceReport rep = weak_report(ctx.cfg);
    CsvWriter csv(ctx.artifact("kernel.csv"), ctx.hash,
                  {"eps", "component", "test_function", "gap", "discrete", "limit"});
    for (const auto& r : rep.rows) {
        csv << r.eps << r.component << r.test_function << r.gap << r.discrete << r.limit;
        csv.end_row();
    }
    ctx.result.report = weak_json(rep);
    ctx.verdict("weak_convergence_monotone", rep.monotone);
}

void run_bonds_info(const Context& ctx)
{
    const DiscreteSetup s = discrete_setup(ctx.cfg);
    json j;
    for (auto kind : {BondKind::ShortRange, BondKind::LongRange}) {
        const std::string name = kind == BondKind::ShortRange ? "short_range" : "long_range";
        const std::size_t n = s.bonds.count(kind);
        j[name] = {{"count", n}};
        if (n > 0) {
            j[name]["min_stiffness"] = s.bonds.min_stiffness(kind);
            j[name]["max_stiffness"] = s.bonds.max_stiffness(kind);
        }
    }
    j["long_range_storage"] = s.bonds.sublattice() ? "implicit" : "explicit";
    ctx.result.report = j;
}

void run_lattice_info(const Context& ctx)
{
    const DiscreteSetup s = discrete_setup(ctx.cfg);
    const auto vol = voronoi_volumes(s.ps);
    std::map<std::string, std::size_t> hist;
    const double e3 = std::pow(s.lattice.eps, 3);
    double total = 0.0;
    for (double v : vol) {
        ++hist[format_number(v / e3)];
        total += v;
    }
    const TriangulationReport tri =
        validate_triangulation(s.ps, s.bonds, cfg_double(ctx.cfg, "triangulation.min_volume_ratio"));
    ctx.result.report = {{"particles", s.ps.size()},
                         {"fixed", s.ps.size() - s.ps.free_count()},
                         {"free", s.ps.free_count()},
                         {"voronoi_volume_histogram", hist},
                         {"voronoi_total", total},
                         {"triangulation",
                          {{"min_edge_ratio", tri.min_edge_ratio},
                           {"max_edge_ratio", tri.max_edge_ratio},
                           {"min_simplex_volume_ratio", tri.min_simplex_volume_ratio},
                           {"volume_threshold", tri.volume_threshold},
                           {"simplex_count", tri.simplex_count},
                           {"epsilon_net", tri.epsilon_net},
                           {"pass", tri.pass},
                           {"warnings", tri.warnings}}}};
    ctx.verdict("triangulation", tri.pass);
}

template <class F>
void section(json& report, std::vector<Verdict>& verdicts, const std::string& name, F&& body)
{
    json j;
    bool pass = false;
    try {
        pass = body(j);
    } catch (const std::exception& e) {
        j["error"] = e.what();
        pass = false;
    }
    j["pass"] = pass;
    report[name] = j;
    verdicts.push_back({name, pass, j.contains("error") ? j["error"].get<std::string>() : std::string()});
}

void run_diagnostics(const Context& ctx)
{
    const Config& c = ctx.cfg;
    json report;
    auto& verdicts = ctx.result.verdicts;
    const double drift_tol = cfg_double(c, "energy.drift_tol");
    const double lambda = cfg_list(c, "stationary.lambda").front();

    section(report, verdicts, "korn", [&](json& j) {
        const KornSeries k = korn_series(c);
        const double floor = cfg_double(c, "korn.floor");
        j = {{"eps", k.eps}, {"C_emp", k.constants}, {"floor", floor}};
        return std::all_of(k.constants.begin(), k.constants.end(), [&](double v) { return v > floor; });
    });

    section(report, verdicts, "cell_scaling", [&](json& j) {
        const CellScalingReport r =
            cell_scaling_check(cfg_list(c, "scaling.h"), cfg_double(c, "scaling.h_over_eps"),
                                  cfg_double(c, "scaling.gamma"), model_from_config(c), SymTensor4::basis(0),
                                  cfg_vec3(c, "tensor.center"));
        j = {{"h", r.h},
             {"bond_energy", r.bond_energy},
             {"penalty_sum", r.penalty_sum},
             {"bond_energy_slope", r.bond_energy_slope},
             {"penalty_slope", r.penalty_slope},
             {"gamma", r.gamma}};
        return r.bond_energy_ok && r.penalty_ok;
    });

    section(report, verdicts, "weak_convergence", [&](json& j) {
        const WeakConvergenceReport r = weak_report(c);
        j = weak_json(r);
        return r.monotone;
    });

    section(report, verdicts, "isotropy", [&](json& j) {
        const InteractionModel m = model_from_config(c);
        const IsotropyResult configured = isotropy_gate(closed_form_tensor(m.k1, m.k2, m.k3));
        const IsotropyResult reference =
            isotropy_gate(closed_form_tensor(isotropic_k1(m.k2, m.k3), m.k2, m.k3), 1e-12);
        j = {{"configured_residual", configured.residual},
             {"configured_isotropic", configured.isotropic},
             {"isotropic_k1", isotropic_k1(m.k2, m.k3)},
             {"isotropic_reference_residual", reference.residual}};
        return reference.isotropic;
    });

    section(report, verdicts, "laplace", [&](json& j) {
        const DiscreteSetup s = discrete_setup(c);
        const DiscreteOperator op(s.ps, s.bonds);
        const DomainBox box = box_from_config(c);
        const InitialRecipe a = InitialRecipe::parse(cfg_string(c, "initial.a"), box);
        const InitialRecipe b = InitialRecipe::parse(cfg_string(c, "initial.b"), box);
        const double frac = cfg_double(c, "laplace.dt_fraction");
        const double tol = cfg_double(c, "stationary.tolerance");
        const LaplaceCheck d = discrete_laplace_check(op, sample_initial_data(s.ps, a, b), lambda, frac, tol);
        const ContinuumOperator cop = continuum_operator(c, cfg_int(c, "laplace.cells"));
        const LaplaceCheck k = continuum_laplace_check(cop, sample_initial_data(cop.grid(), a, b), lambda, frac, tol);
        j = {{"discrete", laplace_json(d)}, {"continuum", laplace_json(k)}};
        const double lt = cfg_double(c, "laplace.tol");
        return d.rel_diff <= lt && k.rel_diff <= lt;
    });

    section(report, verdicts, "energy", [&](json& j) {
        const DiscreteSetup s = discrete_setup(c);
        const DiscreteOperator op(s.ps, s.bonds);
        const DomainBox box = box_from_config(c);
        const InitialRecipe a = InitialRecipe::parse(cfg_string(c, "initial.a"), box);
        const InitialRecipe b = InitialRecipe::parse(cfg_string(c, "initial.b"), box);
        const double T = cfg_double(c, "time.T");
        const double safety = cfg_double(c, "time.safety");
        const Trajectory d = simulate(op, sample_initial_data(s.ps, a, b), T,
                                      choose_time_step(op.stability_bound(), safety, T), 50);
        const ContinuumOperator cop = continuum_operator(c, cfg_int(c, "continuum.cells"));
        const ContinuumTrajectory k = simulate_continuum(cop, sample_initial_data(cop.grid(), a, b), T,
                                                         choose_time_step(cop.stability_bound(), safety, T), 50);
        j = {{"discrete_energy_drift", d.energy_drift},
             {"discrete_energy_fluctuation", d.energy_fluctuation},
             {"continuum_energy_drift", k.energy_drift},
             {"continuum_energy_fluctuation", k.energy_fluctuation},
             {"T", T}};
        return d.energy_drift <= drift_tol && k.energy_drift <= drift_tol;
    });

    section(report, verdicts, "tensor", [&](json& j) {
        const auto ratios = cfg_list(c, "tensor.h_over_eps");
        const auto gammas = cfg_list(c, "tensor.gamma");
        std::vector<Verdict> local;
        const auto probes = tensor_probes(c, ratios, gammas, nullptr);
        j["probes"] = tensor_verdicts(probes, ratios, gammas, cfg_double(c, "tensor.tolerance"), local);
        const auto pair = cfg_list(c, "tensor.gamma_pair");
        if (pair.size() != 2)
            throw ConfigurationError("tensor.gamma_pair needs two values");
        const auto gp = tensor_probes(c, {ratios.back()}, pair, nullptr);
        const double diff = (gp[0].tensor.voigt() - gp[1].tensor.voigt()).cwiseAbs().maxCoeff() /
                            gp[1].tensor.voigt().cwiseAbs().maxCoeff();
        j["gamma_pair_relative_difference"] = diff;
        local.push_back({"gamma_independence", diff <= cfg_double(c, "tensor.gamma_tol"), format_number(diff)});
        json checks = json::array();
        bool ok = true;
        for (const auto& v : local) {
            checks.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
            ok = ok && v.pass;
        }
        j["checks"] = checks;
        return ok;
    });

    ctx.result.report = report;
}

} // namespace

InteractionModel model_from_config(const Config& c)
{
    InteractionModel m;
    m.k1 = cfg_double(c, "model.k1");
    m.k2 = cfg_double(c, "model.k2");
    m.k3 = cfg_double(c, "model.k3");
    m.long_range = RadialProfile::parse(cfg_string(c, "model.K"));
    m.alpha = cfg_double(c, "model.alpha");
    m.beta = cfg_double(c, "model.beta");
    m.validate();
    return m;
}

LatticeConfig lattice_from_config(const Config& c)
{
    LatticeConfig lat;
    lat.eps = cfg_double(c, "lattice.eps");
    lat.long_range_period = cfg_int(c, "lattice.period");
    lat.domain = box_from_config(c);
    lat.validate();
    return lat;
}

ExperimentResult run_experiment(const std::string& kind, const Config& cfg, const RunOptions& options)
{
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw ConfigurationError("unknown experiment kind '" + kind + "'");
    cfg.require_known(schema_keys());
    if (cfg.has("experiment") && cfg.get_string("experiment", "") != kind)
        throw ConfigurationError("config is for experiment '" + cfg.get_string("experiment", "") + "', not '" + kind +
                                 "'");
    std::filesystem::create_directories(options.out_dir);

    ExperimentResult result;
    result.kind = kind;
    const Context ctx{cfg, options, cfg.hash(), result};
    if (kind == "simulate")
        run_simulate(ctx);
    else if (kind == "stationary")
        run_stationary(ctx);
    else if (kind == "meso-tensor")
        run_meso_tensor(ctx);
    else if (kind == "continuum")
        run_continuum(ctx);
    else if (kind == "converge")
        run_converge(ctx);
    else if (kind == "korn-check")
        run_korn(ctx);
    else if (kind == "kernel-check")
        run_kernel(ctx);
    else if (kind == "bonds-info")
        run_bonds_info(ctx);
    else if (kind == "lattice-info")
        run_lattice_info(ctx);
    else
        run_diagnostics(ctx);

    json verdicts = json::array();
    for (const auto& v : result.verdicts)
        verdicts.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    json report = {{"experiment", kind},
                   {"config_hash", ctx.hash},
                   {"seed", options.seed},
                   {"verdicts", verdicts},
                   {"all_pass", result.all_pass()},
                   {"results", result.report}};
    write_json(options.out_dir / "report.json", report);
    result.artifacts.push_back("report.json");
    json manifest = {{"experiment", kind},
                     {"config_hash", ctx.hash},
                     {"config", cfg.entries()},
                     {"artifacts", result.artifacts}};
    write_json(options.out_dir / "manifest.json", manifest);
    return result;
}

} // namespace nlhom
