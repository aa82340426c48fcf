#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lsor/sysdef.hpp"

namespace lsor {

enum class Method { ExplicitRK45, ImplicitStiff };

const char* method_name(Method m);
Method parse_method(const std::string& s); // "explicit" | "stiff"

struct SolverConfig {
    double rtol = 1e-6;
    double atol = 1e-8;
    double h0 = 0.0; // <= 0: automatic initial step
    double hmin = 1e-14;
    double hmax = INFINITY;
    long max_steps = 50'000'000;
    Method method = Method::ExplicitRK45;
    void validate() const;
};

struct SolverStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evals = 0;
    long jac_evals = 0;
    long jac_rhs_evals = 0; // spent on finite-difference Jacobians
    long factorizations = 0;
    long newton_iters = 0;
    long newton_failures = 0;
    double wall_s = 0.0;
};

struct Trajectory {
    std::vector<double> times;
    Mat states; // row per time
    SolverStats stats;
    std::vector<std::string> labels;

    int size() const { return int(times.size()); }
    Vec row(int i) const { return states.row(i).transpose(); }
    Vec back() const { return row(size() - 1); }
};

struct EventSchedule {
    std::vector<double> breakpoints;
    void normalize(double t0, double t1); // sort, dedupe, clip to (t0, t1)
};

using Rhs = std::function<void(double t, const Vec& y, Vec& dy)>;
using JacFn = std::function<Mat(double t, const Vec& y)>;

// Output is every accepted step (plus breakpoints) unless t_eval is given,
// in which case the dense interpolant is sampled at exactly those times.
Trajectory integrate_explicit(const Rhs& rhs, const Vec& y0, double t0, double t1,
                              const SolverConfig& cfg, EventSchedule events = {},
                              const std::vector<double>& t_eval = {});

Trajectory integrate_stiff(const Rhs& rhs, const JacFn& jac, const Vec& y0, double t0,
                           double t1, const SolverConfig& cfg, EventSchedule events = {},
                           const std::vector<double>& t_eval = {});

Trajectory integrate(const Rhs& rhs, const Vec& y0, double t0, double t1, const SolverConfig& cfg,
                     EventSchedule events = {}, const std::vector<double>& t_eval = {},
                     const JacFn& jac = nullptr);

// Stacked (x; z) with z' = g/eps. eps empty means the system's own coefficients.
Trajectory integrate_coupled(const SingularSystem& sys, const Vec& x0, const Vec& z0,
                             const InputSignal& u, double t0, double t1, const SolverConfig& cfg,
                             EventSchedule events = {}, const std::vector<double>& t_eval = {},
                             const Vec& eps = Vec());

std::vector<double> uniform_grid(double t0, double t1, int n);

} // namespace lsor
