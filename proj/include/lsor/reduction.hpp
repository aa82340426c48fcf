#pragma once

#include <memory>
#include <vector>

#include "lsor/sysdef.hpp"

namespace lsor {

struct SlowFastPartition {
    std::vector<int> slow;
    std::vector<int> fast;
    Vec coeffs;
    double gap_ratio = 10.0; // required
    double observed_gap = 0.0;
};

// Largest multiplicative gap in the sorted coefficients splits fast (below) from slow.
SlowFastPartition identify_partition(const Vec& coeffs, double gap_ratio = 10.0);

struct QssOptions {
    double residual_tol = 1e-9;
    int max_iter = 60;
    int max_halvings = 8;
    double fd_step = 1e-6;
    double rcond_min = 1e-13;
    Vec scale; // per fast residual; empty means ones
};

// z = h(x,u) on the branch reached from the guess. One instance per simulation thread.
class QssMap {
public:
    explicit QssMap(SingularSystem sys, QssOptions opt = {});

    Vec solve(const Vec& x, const Vec& u, const Vec& z_guess);
    Vec solve(const Vec& x, const Vec& u); // continues from the last solution
    Vec operator()(const Vec& x, const Vec& u) { return solve(x, u); }

    double residual(const Vec& x, const Vec& z, const Vec& u) const;

    Mat dg_dz(const Vec& x, const Vec& z, const Vec& u) const;
    Mat dg_dx(const Vec& x, const Vec& z, const Vec& u) const;
    Mat dg_du(const Vec& x, const Vec& z, const Vec& u) const;
    // implicit differentiation at z = h(x,u)
    Mat dh_dx(const Vec& x, const Vec& u, const Vec& z) const;
    Mat dh_du(const Vec& x, const Vec& u, const Vec& z) const;

    void seed(const Vec& z);
    bool seeded() const { return have_last_; }
    const Vec& last() const { return last_; }
    const SingularSystem& system() const { return sys_; }
    const QssOptions& options() const { return opt_; }
    const Vec& zero_eps() const { return zero_eps_; }

    struct Stats {
        long solves = 0;
        long iterations = 0;
        long factorizations = 0;
        long g_evals = 0;
    } stats;

private:
    Vec g0(const Vec& x, const Vec& z, const Vec& u);
    double scaled_norm(const Vec& r) const;
    void factor(const Vec& x, const Vec& z, const Vec& u);

    SingularSystem sys_;
    QssOptions opt_;
    Vec zero_eps_;
    Vec inv_scale_;
    Vec last_;
    bool have_last_ = false;
    Eigen::PartialPivLU<Mat> lu_;
    bool have_lu_ = false;
};

using QssPtr = std::shared_ptr<QssMap>;

class ReducedModel {
public:
    explicit ReducedModel(QssPtr h) : h_(std::move(h)) {}
    Vec rhs(const Vec& x, const Vec& u);  // f(x, h(x,u), u, 0)
    Vec fast(const Vec& x, const Vec& u); // h(x,u)
    int dim() const { return h_->system().n; }
    QssMap& qss() { return *h_; }
    QssPtr qss_ptr() const { return h_; }
    const SingularSystem& base() const { return h_->system(); }

private:
    QssPtr h_;
};

// dy/dtau = diag(eps_bar/eps) g(x, y + h(x,u), u, 0), tau = t/eps_bar, x and u frozen.
class BoundaryLayerModel {
public:
    explicit BoundaryLayerModel(QssPtr h);
    Vec rhs(const Vec& y, const Vec& x, const Vec& u);
    Vec rhs_at(const Vec& y, const Vec& x, const Vec& u, const Vec& h) const;
    const Vec& time_scale() const { return scale_; }
    int dim() const { return h_->system().m; }
    QssMap& qss() { return *h_; }
    const SingularSystem& base() const { return h_->system(); }

private:
    QssPtr h_;
    Vec scale_;
};

ReducedModel build_rom(const SingularSystem& sys, QssPtr qss);
ReducedModel build_rom(const SingularSystem& sys, QssPtr qss, const Vec& x0, const Vec& u0);
BoundaryLayerModel build_blm(const SingularSystem& sys, QssPtr qss);

// Exact y-dynamics in tau = t/eps_bar; eps = 0 gives the BLM right-hand side.
Vec eval_y_dynamics(const SingularSystem& sys, QssMap& qss, const Vec& x, const Vec& y,
                    const Vec& u, const Vec& u_dot, const Vec& eps);

// Linearise at an equilibrium and eliminate the fast block (Schur complement).
struct LinearRom {
    Vec x_eq, z_eq, u_eq;
    Mat A, B;   // slow deviation dynamics
    Mat Kx, Ku; // z - z_eq = Kx dx + Ku du
    Vec rhs(const Vec& x, const Vec& u) const;
    Vec fast(const Vec& x, const Vec& u) const;
};

LinearRom baseline_small_signal(const SingularSystem& sys, const Vec& x_eq, const Vec& z_eq,
                                const Vec& u_eq, double eq_tol = 1e-6);

} // namespace lsor
