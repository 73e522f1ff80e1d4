#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlhom/config.hpp"
#include "nlhom/continuum.hpp"
#include "nlhom/discrete_dynamics.hpp"
#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"

namespace nlhom {

/// Smooth vector field vanishing on the box boundary, selected by name:
/// "zero", "bubble:ax,ay,az" = (ax,ay,az) prod_c sin(pi s_c), "bubble2:ax,ay,az" = (ax,ay,az) prod_c sin^2(pi s_c),
/// with s = (x - origin) / L.
class InitialRecipe {
public:
    static InitialRecipe parse(const std::string& spec, const DomainBox& box);

    Vec3 operator()(const Vec3& x) const;
    bool is_zero() const { return amplitude_.isZero(); }
    const std::string& spec() const { return spec_; }

private:
    std::string spec_;
    DomainBox box_;
    Vec3 amplitude_ = Vec3::Zero();
    int power_ = 1;
};

/// Particle samples of the recipes, zero on fixed particles.
InitialData sample_initial_data(const ParticleSystem& ps, const InitialRecipe& a, const InitialRecipe& b);
/// Node samples of the recipes, zero on Dirichlet nodes.
ContinuumInitialData sample_initial_data(const ContinuumGrid& grid, const InitialRecipe& a, const InitialRecipe& b);

/// Cumulative row writer; every row starts with the config hash.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& config_hash, const std::vector<std::string>& columns);

    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(const std::string& v);
    CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
    /// Ends the current row; throws ContractViolation when the cell count does not match the header.
    void end_row();

private:
    void cell(const std::string& text);

    std::ofstream out_;
    std::string hash_;
    std::size_t columns_;
    std::size_t cells_ = 0;
};

/// Shortest round-trip decimal text of a double (deterministic).
std::string format_number(double v);

struct ConvergenceSettings {
    DomainBox box;
    InteractionModel model;
    int period = 2;
    std::vector<double> eps_schedule{0.125, 0.0625, 0.03125};
    double T = 1.0;
    int samples = 20;          ///< sample instants are k T / samples
    int continuum_cells = 32;  ///< reference grid L / Delta
    double safety = 0.5;
    std::string initial_a = "bubble:1,0,0";
    std::string initial_b = "zero";
    bool refinement = true;    ///< also compare the reference against a grid of half the resolution
    int threads = 1;
};

struct ConvergenceRow {
    double eps = 0.0;
    double l2_space_time_diff = 0.0;
    double l2_final_time_diff = 0.0;
    double runtime = 0.0;      ///< seconds
    double initial_energy = 0.0;
};

struct ConvergenceStudy {
    std::vector<ConvergenceRow> rows;
    bool decreasing = false;   ///< strictly decreasing, or all rows zero
    bool degenerate = false;   ///< zero initial data
    bool energy_bounded = false;
    double reference_runtime = 0.0;
    double reference_energy_drift = 0.0;
    /// Reference on L/(cells/2) against the reference on L/cells; negative when not computed.
    double refinement_space_time_diff = -1.0;
    double refinement_final_time_diff = -1.0;
};

/// Continuum reference once on the fixed grid, then one discrete run per eps compared in L2(Omega x [0, T]) by
/// midpoint quadrature on a grid of spacing Delta/2 and the trapezoid rule over the sample instants.
ConvergenceStudy run_convergence_study(const ConvergenceSettings& settings);

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunOptions {
    std::filesystem::path out_dir = "out";
    int threads = 1;
    unsigned seed = 12345;
};

struct ExperimentResult {
    std::string kind;
    nlohmann::json report;
    std::vector<Verdict> verdicts;
    std::vector<std::string> artifacts;

    bool all_pass() const;
};

/// Experiment kinds accepted by run_experiment.
const std::vector<std::string>& experiment_kinds();

/// Every config key the harness understands, with its default and a one-line description.
struct ConfigKey {
    std::string key;
    std::string fallback;
    std::string description;
};
const std::vector<ConfigKey>& config_schema();

/// Shared model/lattice settings read from a config.
InteractionModel model_from_config(const Config& cfg);
LatticeConfig lattice_from_config(const Config& cfg);

/// Runs one experiment, writing its CSV tables, report.json and manifest.json into options.out_dir.
/// Throws ConfigurationError for an unknown kind or unknown config keys.
ExperimentResult run_experiment(const std::string& kind, const Config& cfg, const RunOptions& options);

} // namespace nlhom
