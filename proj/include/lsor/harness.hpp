#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsor/assessment.hpp"
#include "lsor/integrators.hpp"
#include "lsor/microgrid.hpp"
#include "lsor/reduction.hpp"

namespace lsor {

// A system together with the map between its (x, z) split and the natural state order.
struct PartitionedSystem {
    SingularSystem sys;
    std::vector<int> slow, fast; // natural indices
    std::vector<std::string> labels;
    double gap_ratio = 10.0;

    int order() const { return sys.n + sys.m; }
    Vec join(const Vec& x, const Vec& z) const;
    Vec slow_of(const Vec& s) const;
    Vec fast_of(const Vec& s) const;
};

// natural order is (x; z)
PartitionedSystem trivially_partitioned(SingularSystem sys);
PartitionedSystem from_assembled(const AssembledSystem& as, double gap_ratio);

// gap_ratio -> system; called again with a tighter ratio on the retry
using SystemFactory = std::function<PartitionedSystem(double gap_ratio)>;

// the eps-family member whose largest coefficient is eps (ratios kept)
SingularSystem with_eps_bar(const SingularSystem& sys, double eps);

struct LsorOptions {
    AssessConfig assess;
    // natural-order operating point for the deviation coordinates; empty: origin
    Vec s_op, u_op, s_scale, u_scale;
    double gap_ratio = 10.0;
    double retry_factor = 2.0;
    bool throw_on_reject = true;
    // optional error study
    std::vector<double> eps_list;
    Vec s0; // natural initial state
    InputSignal u;
    double horizon = 0.0;
    int grid = 2000;
    SolverConfig study_solver;
};

struct LsorResult {
    PartitionedSystem ps;
    OperatingPoint op;
    QssPtr qss;
    AssessmentReport report;

    ReducedModel rom() const { return ReducedModel(qss); }
    BoundaryLayerModel blm() const { return BoundaryLayerModel(qss); }
};

LsorResult run_lsor(const SystemFactory& make, const LsorOptions& opt);

Assumption failed_assumption(const AssessmentReport& rep);

// ROM on a grid. Stiff runs use the implicit-differentiation Jacobian.
Trajectory simulate_rom(QssMap& qss, const Vec& x0, const InputSignal& u, double t0, double t1,
                        const SolverConfig& cfg, const std::vector<double>& grid);

// Boundary-layer correction y-hat(t), restarted at every input breakpoint with x frozen at x-hat.
Trajectory simulate_blm(QssMap& qss, const Trajectory& rom, const Vec& z0, const InputSignal& u,
                        const Vec& eps, const SolverConfig& cfg);

struct StudyRuns {
    std::vector<double> grid;
    Trajectory rom;
    std::vector<Trajectory> full, blm;
};

StudyRuns error_study_runs(const SingularSystem& sys, QssMap& qss, const Vec& x0, const Vec& z0,
                           const InputSignal& u, double horizon,
                           const std::vector<double>& eps_list, int grid,
                           const SolverConfig& cfg);

// ---------------------------------------------------------------------------

struct CaseSetup {
    std::string id;
    std::string kind; // builtin | microgrid
    SystemFactory make;
    std::shared_ptr<const MicrogridModel> model; // microgrid only
    Vec s0;
    InputSignal u;
    double horizon = 1.0;
    LsorOptions lsor;
    bool assess = true;
    SolverConfig solver;
    int grid = 2000;
    int repeats = 5;
    double bench_start = 0.0;
    double bench_horizon = NAN; // window length; NaN: to the end
    double slow_tol = 0.01, fast_tol = 0.05;
};

struct TimingRow {
    std::string solver, model;
    double wall_s = 0.0;
    long steps = 0, rhs_evals = 0;
};

struct VariantSeries {
    Mat states; // natural order, one row per grid time
    SolverStats stats;
};

struct RunBundle {
    std::string id;
    std::vector<double> grid;
    std::vector<std::string> labels;
    std::vector<int> slow, fast;
    std::map<std::string, VariantSeries> series; // full, rom, rom-blm, smallsig
    std::optional<AssessmentReport> report;
    std::vector<TimingRow> timing;
    nlohmann::json metrics;
};

extern const std::vector<std::string> kVariants;

// one variant on the case grid; natural order
VariantSeries simulate_variant(const CaseSetup& c, const PartitionedSystem& ps,
                               const std::string& variant, const SolverConfig& cfg,
                               const std::vector<double>& grid);

std::vector<TimingRow> timing_table(const CaseSetup& c, const PartitionedSystem& ps);

RunBundle run_scenario(const CaseSetup& c, bool with_timing = true);

nlohmann::json compute_metrics(const RunBundle& b, const std::vector<double>& breakpoints,
                               double slow_tol, double fast_tol);

// trajectories.csv, metrics.json, timing.csv, report.json
void emit(const RunBundle& b, const std::string& dir);

void write_trajectories_csv(const RunBundle& b, const std::string& path);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path);

// ROM and BLM description for the reduce subcommand
nlohmann::json describe_reduction(const PartitionedSystem& ps);

} // namespace lsor
