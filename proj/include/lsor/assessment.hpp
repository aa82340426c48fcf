#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsor/integrators.hpp"
#include "lsor/lyapunov.hpp"
#include "lsor/reduction.hpp"
#include "lsor/sysdef.hpp"

namespace lsor {

// Assessment runs in deviation coordinates: x = x_c + diag(x_scale) x~, same for z and u.
struct OperatingPoint {
    Vec x, z, u;
    Vec x_scale, z_scale, u_scale; // empty means ones
};

SingularSystem shifted_system(const SingularSystem& sys, const OperatingPoint& op);
Vec unshift_x(const OperatingPoint& op, const Vec& xt);
Vec unshift_z(const OperatingPoint& op, const Vec& zt);

enum class SamplingScheme { Grid, LowDiscrepancy };
SamplingScheme parse_scheme(const std::string& s); // "grid" | "halton"
const char* scheme_name(SamplingScheme s);

struct DomainBox {
    double mu = 1.0;
    int samples = 64;
    SamplingScheme scheme = SamplingScheme::LowDiscrepancy;
    std::uint64_t seed = 0;
    void validate() const;
};

// Points in the radius-mu ball of each block (concatenated). The centre comes first.
std::vector<Vec> sample_blocks(const std::vector<int>& dims, const DomainBox& box);
inline std::vector<Vec> sample_ball(int dim, const DomainBox& box) { return sample_blocks({dim}, box); }

struct KLFunctionExp {
    double M = 1.0;
    double lambda = 1.0;
    double operator()(double r, double s) const;
};

struct KFunctionLin {
    double gain = 0.0;
    double operator()(double r) const { return gain * r; }
};

struct GrowthResult {
    bool ok = true;
    double sup_f = 0, sup_g = 0;
    double sup_fx = 0, sup_fz = 0, sup_fu = 0;
    double sup_gx = 0, sup_gz = 0, sup_gu = 0;
    std::string offending; // map that failed
    Vec witness;           // (x, z, u) of the failing sample
    int samples = 0;
};

GrowthResult check_growth(const SingularSystem& sys, const DomainBox& box);

struct RomStability {
    bool exp_stable = false;
    std::vector<std::complex<double>> eigenvalues;
    std::vector<int> excluded; // states with an identically zero row (pure integrators of others)
    Mat A, B;
    KFunctionLin iss_gain;
    std::optional<LyapunovConstants> lyap;
    KLFunctionExp beta_x_hat;
    double certified_radius = 0.0; // largest sampled shell with V decreasing
    double margin = 1e-6;
};

// Linearisation of the ROM by implicit differentiation of the QSS map.
std::pair<Mat, Mat> rom_jacobians(QssMap& qss, const Vec& x, const Vec& u);

RomStability check_rom_stability(ReducedModel& rom, const Vec& x_eq, const Vec& u_eq,
                                 const DomainBox& box, double margin = 1e-6,
                                 double eq_tol = 1e-6);

struct BlmResult {
    bool gas = true;
    std::string reason;
    Vec witness_x, witness_u, witness_y;
    double worst_abscissa = -INFINITY; // of diag(eps_bar/eps) dg/dz
    int samples = 0;
};

BlmResult check_blm_gas(BoundaryLayerModel& blm, const DomainBox& box, double margin = 1e-6);

// lambda from the slowest local eigenvalue, M from simulated overshoot; tau = t/eps_bar
KLFunctionExp fit_beta_y(BoundaryLayerModel& blm, const DomainBox& box, const SolverConfig& cfg,
                         int max_sims = 24);

// max spectral norm of the finite-difference Jacobian over the sampled box
double estimate_lipschitz(const std::function<Vec(const Vec&)>& fn, int dim, const DomainBox& box,
                          const Vec& center = Vec());

struct EstimationWorkspace {
    double mu = 1.0, xi = 0.0;
    double l1 = 0, l2 = 0, l3 = 0, l4 = 0; // ROM remainder, f wrt z, f wrt eps
    double kappa_y = 0;                    // O(eps) offset of y against the BLM
    double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    double la = 0, lb = 0, lc = 0, ld = 0, le = 0, lf = 0;
    double k = NAN;
    double eps_bar = 0;
    KLFunctionExp beta_x_hat, beta_y;
    KFunctionLin alpha_x_hat;
};

EstimationWorkspace estimate_workspace(QssMap& qss, const RomStability& rom,
                                       const KLFunctionExp& beta_y, const DomainBox& box,
                                       double xi);

// predicted sup ||x - x_hat|| for the eps-family scaled from the nominal coefficients
double slow_error_bound(const EstimationWorkspace& ws, double eps);

struct EpsilonComponent {
    double value = NAN;
    std::string formula;
};

struct EpsilonStar {
    double value = NAN;
    EpsilonComponent e1, e2, e3;
};

EpsilonStar epsilon_star(const EstimationWorkspace& ws);

enum class EpsMode { FixEpsSolveT, FixTSolveEps };

struct EpsilonBounds {
    double eps_star = NAN;
    double eps_star2 = NAN;
    double T = NAN;
    EpsilonStar components;
    std::vector<std::string> notes;
};

// Returns (eps, T).
std::pair<double, double> epsilon_double_star(const KLFunctionExp& beta_y, double k, double mu,
                                              EpsMode mode, double value);

struct ErrorStudy {
    std::vector<double> eps;
    std::vector<double> e_slow, e_fast, e_fast_T;
    double slope_slow = NAN, slope_fast = NAN, slope_fast_T = NAN;
    double intercept_slow = NAN; // e_slow ~ intercept * eps^slope
    double T = NAN;
    std::vector<double> T_list; // per eps
};

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err,
                    double* intercept = nullptr);

// All trajectories on one grid; full has (x; z) columns, rom has x, blm[i] has y-hat.
ErrorStudy verify_error_bounds(const std::vector<Trajectory>& full, const Trajectory& rom,
                               const std::vector<Trajectory>& blm, QssMap& qss,
                               const InputSignal& u, const std::vector<double>& eps_list,
                               double T);
// one tail start per eps
ErrorStudy verify_error_bounds(const std::vector<Trajectory>& full, const Trajectory& rom,
                               const std::vector<Trajectory>& blm, QssMap& qss,
                               const InputSignal& u, const std::vector<double>& eps_list,
                               const std::vector<double>& T_list);

// ||z - h(x_hat, u)|| along each run
std::vector<std::vector<double>> fast_residual_paths(const std::vector<Trajectory>& full,
                                                     const Trajectory& rom, QssMap& qss,
                                                     const InputSignal& u);

// Smallest k with max_{t >= T(k, eps)} ||z - h|| <= k eps for every run (T from the fix-eps mode).
double fit_tail_k(const std::vector<std::vector<double>>& paths, const std::vector<double>& times,
                  const std::vector<double>& eps_list, const KLFunctionExp& beta_y, double mu);

struct IssCheck {
    bool ok = true;
    double t_violation = NAN;
    std::string which; // "x" or "y"
};

IssCheck verify_iss_envelope(const std::vector<double>& times, const Mat& xs, const Mat& ys,
                             const KLFunctionExp& beta_x, const KFunctionLin& alpha_x,
                             double u_sup, const KLFunctionExp& beta_y, double xi, double eps);

struct AssessConfig {
    DomainBox box;
    double xi = NAN; // default 0.5 mu
    double margin = 1e-6;
    double T = NAN;  // fix-T mode when set
    double k = NAN;  // override
    SolverConfig blm_solver;
    int growth_samples = 0; // 0: box.samples
    bool with_bounds = true; // false: stop after the workspace
};

struct AssessmentReport {
    std::string system;
    double eps_bar = 0;
    bool growth_ok = false, rom_stable = false, blm_gas = false;
    GrowthResult growth;
    RomStability rom;
    BlmResult blm;
    KLFunctionExp beta_y;
    std::optional<EstimationWorkspace> workspace;
    std::optional<EpsilonBounds> bounds;
    std::optional<ErrorStudy> errors;
    std::string verdict;        // accepted | rejected
    std::string reconstruction; // h | h+yhat
    std::string failed;         // assumption name on rejection
    int attempts = 1;
    std::vector<std::string> notes;
};

// Assumptions 1-3 plus constants and bounds on an already shifted system.
AssessmentReport assess(const SingularSystem& shifted, const AssessConfig& cfg);

// fills bounds from the workspace and the chosen k
void compute_bounds(AssessmentReport& rep, const AssessConfig& cfg);

nlohmann::json to_json(const AssessmentReport& rep);

} // namespace lsor
