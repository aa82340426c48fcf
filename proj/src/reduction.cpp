#include "lsor/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lsor {

SlowFastPartition identify_partition(const Vec& coeffs, double gap_ratio) {
    if (!(gap_ratio > 1.0))
        throw DimensionError("gap_ratio must exceed 1");
    const int N = int(coeffs.size());
    if (N < 2)
        throw NoTimeScaleSeparation("need at least two coefficients");
    for (int i = 0; i < N; ++i)
        if (!(coeffs[i] > 0.0) || !std::isfinite(coeffs[i]))
            throw DimensionError("coefficients must be positive and finite");

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return coeffs[a] < coeffs[b]; });

    int cut = -1;
    double best = 0.0;
    for (int k = 0; k + 1 < N; ++k) {
        const double r = coeffs[order[k + 1]] / coeffs[order[k]];
        if (r > best) {
            best = r;
            cut = k;
        }
    }
    if (best < gap_ratio) {
        std::ostringstream os;
        os << "largest coefficient gap " << best << " is below the required " << gap_ratio;
        throw NoTimeScaleSeparation(os.str());
    }

    SlowFastPartition part;
    part.coeffs = coeffs;
    part.gap_ratio = gap_ratio;
    part.observed_gap = best;
    const double thr = coeffs[order[cut]];
    for (int i = 0; i < N; ++i)
        (coeffs[i] <= thr ? part.fast : part.slow).push_back(i);
    return part;
}

// ---------------------------------------------------------------------------

QssMap::QssMap(SingularSystem sys, QssOptions opt) : sys_(std::move(sys)), opt_(std::move(opt)) {
    sys_.validate();
    zero_eps_ = Vec::Zero(sys_.m);
    if (opt_.scale.size() == 0)
        opt_.scale = Vec::Ones(sys_.m);
    if (opt_.scale.size() != sys_.m)
        throw DimensionError("qss residual scale has the wrong length");
    inv_scale_ = opt_.scale.cwiseInverse();
    last_ = Vec::Zero(sys_.m);
}

Vec QssMap::g0(const Vec& x, const Vec& z, const Vec& u) {
    ++stats.g_evals;
    return eval_g(sys_, x, z, u, zero_eps_);
}

double QssMap::scaled_norm(const Vec& r) const {
    return r.cwiseProduct(inv_scale_).cwiseAbs().maxCoeff();
}

double QssMap::residual(const Vec& x, const Vec& z, const Vec& u) const {
    if (sys_.m == 0)
        return 0.0;
    return scaled_norm(eval_g(sys_, x, z, u, zero_eps_));
}

void QssMap::factor(const Vec& x, const Vec& z, const Vec& u) {
    Mat J = dg_dz(x, z, u);
    stats.g_evals += 2 * sys_.m;
    ++stats.factorizations;
    lu_.compute(J);
    const double rc = lu_.rcond();
    if (!(rc > opt_.rcond_min)) {
        have_lu_ = false;
        std::ostringstream os;
        os << "dg/dz is numerically singular (rcond " << rc << ")";
        throw SingularJacobian(os.str());
    }
    have_lu_ = true;
}

Vec QssMap::solve(const Vec& x, const Vec& u, const Vec& z_guess) {
    ++stats.solves;
    if (sys_.m == 0)
        return Vec();
    require_finite(z_guess, "qss guess");
    Vec z = z_guess;
    Vec r = g0(x, z, u);
    double nr = scaled_norm(r);
    bool fresh = false;
    for (int it = 0; nr > opt_.residual_tol; ++it) {
        if (it >= opt_.max_iter) {
            std::ostringstream os;
            os << "qss Newton did not converge in " << opt_.max_iter << " iterations (residual "
               << nr << ")";
            throw NewtonDivergence(os.str());
        }
        ++stats.iterations;
        if (!have_lu_) {
            factor(x, z, u);
            fresh = true;
        }
        const Vec dz = -lu_.solve(r);
        double lam = 1.0;
        bool ok = false;
        Vec zt, rt;
        double nt = 0.0;
        for (int k = 0; k <= opt_.max_halvings; ++k) {
            zt = z + lam * dz;
            rt = g0(x, zt, u);
            nt = rt.allFinite() ? scaled_norm(rt) : INFINITY;
            if (nt < nr) {
                ok = true;
                break;
            }
            lam *= 0.5;
        }
        if (!ok) {
            if (!fresh) {
                // stale chord matrix; retry with a Jacobian at the current point
                have_lu_ = false;
                continue;
            }
            std::ostringstream os;
            os << "qss Newton step failed after " << opt_.max_halvings << " halvings (residual "
               << nr << ")";
            throw NewtonDivergence(os.str());
        }
        // slow contraction with an old matrix: refresh next time round
        if (!fresh && nt > 0.25 * nr)
            have_lu_ = false;
        fresh = false;
        z = std::move(zt);
        r = std::move(rt);
        nr = nt;
    }
    last_ = z;
    have_last_ = true;
    return z;
}

Vec QssMap::solve(const Vec& x, const Vec& u) { return solve(x, u, last_); }

void QssMap::seed(const Vec& z) {
    if (z.size() != sys_.m)
        throw DimensionError("qss seed has the wrong length");
    last_ = z;
    have_last_ = true;
}

Mat QssMap::dg_dz(const Vec& x, const Vec& z, const Vec& u) const {
    return fd_jacobian([&](const Vec& v) { return eval_g(sys_, x, v, u, zero_eps_); }, z,
                       opt_.fd_step);
}
Mat QssMap::dg_dx(const Vec& x, const Vec& z, const Vec& u) const {
    return fd_jacobian([&](const Vec& v) { return eval_g(sys_, v, z, u, zero_eps_); }, x,
                       opt_.fd_step);
}
Mat QssMap::dg_du(const Vec& x, const Vec& z, const Vec& u) const {
    if (u.size() == 0)
        return Mat::Zero(sys_.m, 0);
    return fd_jacobian([&](const Vec& v) { return eval_g(sys_, x, z, v, zero_eps_); }, u,
                       opt_.fd_step);
}

static Mat implicit_solve(const Mat& Gz, const Mat& rhs) {
    Eigen::PartialPivLU<Mat> lu(Gz);
    if (!(lu.rcond() > 1e-14))
        throw SingularJacobian("dg/dz is numerically singular");
    return -lu.solve(rhs);
}

Mat QssMap::dh_dx(const Vec& x, const Vec& u, const Vec& z) const {
    return implicit_solve(dg_dz(x, z, u), dg_dx(x, z, u));
}
Mat QssMap::dh_du(const Vec& x, const Vec& u, const Vec& z) const {
    if (u.size() == 0)
        return Mat::Zero(sys_.m, 0);
    return implicit_solve(dg_dz(x, z, u), dg_du(x, z, u));
}

// ---------------------------------------------------------------------------

Vec ReducedModel::rhs(const Vec& x, const Vec& u) {
    const Vec z = h_->solve(x, u);
    return eval_f(h_->system(), x, z, u, h_->zero_eps());
}

Vec ReducedModel::fast(const Vec& x, const Vec& u) { return h_->solve(x, u); }

BoundaryLayerModel::BoundaryLayerModel(QssPtr h) : h_(std::move(h)) {
    const Vec& e = h_->system().eps;
    scale_ = e.size() ? Vec(Vec::Constant(e.size(), e.maxCoeff()).cwiseQuotient(e)) : Vec();
}

Vec BoundaryLayerModel::rhs_at(const Vec& y, const Vec& x, const Vec& u, const Vec& h) const {
    return scale_.cwiseProduct(eval_g(h_->system(), x, y + h, u, h_->zero_eps()));
}

Vec BoundaryLayerModel::rhs(const Vec& y, const Vec& x, const Vec& u) {
    const Vec h = h_->solve(x, u);
    return rhs_at(y, x, u, h);
}

ReducedModel build_rom(const SingularSystem& sys, QssPtr qss) {
    if (&qss->system() != &sys && (qss->system().n != sys.n || qss->system().m != sys.m))
        throw DimensionError("qss map belongs to a different system");
    return ReducedModel(std::move(qss));
}

ReducedModel build_rom(const SingularSystem& sys, QssPtr qss, const Vec& x0, const Vec& u0) {
    ReducedModel rom = build_rom(sys, std::move(qss));
    rom.fast(x0, u0);
    return rom;
}

BoundaryLayerModel build_blm(const SingularSystem& sys, QssPtr qss) {
    if (qss->system().n != sys.n || qss->system().m != sys.m)
        throw DimensionError("qss map belongs to a different system");
    return BoundaryLayerModel(std::move(qss));
}

Vec eval_y_dynamics(const SingularSystem& sys, QssMap& qss, const Vec& x, const Vec& y,
                    const Vec& u, const Vec& u_dot, const Vec& eps) {
    if (eps.size() != sys.m)
        throw DimensionError("eps has the wrong length");
    const Vec h = qss.solve(x, u);
    const double ebar = eps.size() ? eps.maxCoeff() : 0.0;
    // ratios eps_bar/eps_i; at eps = 0 fall back to the system's own spread
    const Vec& ref = ebar > 0.0 ? eps : sys.eps;
    const Vec ratio = Vec::Constant(sys.m, ref.maxCoeff()).cwiseQuotient(ref);
    const Vec z = y + h;
    Vec out = ratio.cwiseProduct(eval_g(sys, x, z, u, eps));
    if (ebar > 0.0) {
        Vec corr = qss.dh_dx(x, u, h) * eval_f(sys, x, z, u, eps);
        if (sys.p > 0 && u_dot.size() == sys.p && u_dot.squaredNorm() > 0.0)
            corr += qss.dh_du(x, u, h) * u_dot;
        out -= ebar * corr;
    }
    return out;
}

// ---------------------------------------------------------------------------

Vec LinearRom::rhs(const Vec& x, const Vec& u) const {
    Vec dx = A * (x - x_eq);
    if (B.cols() > 0)
        dx += B * (u - u_eq);
    return dx;
}

Vec LinearRom::fast(const Vec& x, const Vec& u) const {
    Vec z = z_eq + Kx * (x - x_eq);
    if (Ku.cols() > 0)
        z += Ku * (u - u_eq);
    return z;
}

LinearRom baseline_small_signal(const SingularSystem& sys, const Vec& x_eq, const Vec& z_eq,
                                const Vec& u_eq, double eq_tol) {
    const Vec zero = Vec::Zero(sys.m);
    const Vec f0 = eval_f(sys, x_eq, z_eq, u_eq, zero);
    const Vec g0 = eval_g(sys, x_eq, z_eq, u_eq, zero);
    const double scale = 1.0 + std::max(x_eq.cwiseAbs().maxCoeff(), z_eq.size() ? z_eq.cwiseAbs().maxCoeff() : 0.0);
    const double res = std::max(f0.size() ? f0.cwiseAbs().maxCoeff() : 0.0,
                                g0.size() ? g0.cwiseAbs().maxCoeff() : 0.0);
    if (res > eq_tol * scale) {
        std::ostringstream os;
        os << "linearisation point is not an equilibrium (residual " << res << ")";
        throw NotAnEquilibrium(os.str());
    }
    JacobianRequest r;
    r.x = x_eq;
    r.z = z_eq;
    r.u = u_eq;
    r.eps = zero;
    auto J = [&](Target t, Wrt w) {
        r.target = t;
        r.wrt = w;
        if (w == Wrt::U && sys.p == 0)
            return Mat(Mat::Zero(t == Target::F ? sys.n : sys.m, 0));
        return jacobian(sys, r);
    };
    const Mat A11 = J(Target::F, Wrt::X), A12 = J(Target::F, Wrt::Z), B1 = J(Target::F, Wrt::U);
    const Mat A21 = J(Target::G, Wrt::X), A22 = J(Target::G, Wrt::Z), B2 = J(Target::G, Wrt::U);
    // relative to the whole g-Jacobian; rcond alone misses a uniformly tiny block
    Mat Jg(sys.m, sys.n + sys.m);
    Jg << A21, A22;
    const Vec sv = Eigen::JacobiSVD<Mat>(A22).singularValues();
    if (sys.m > 0 && !(sv(sys.m - 1) > 1e-8 * std::max(1.0, Jg.norm())))
        throw SingularFastBlock("fast block of the linearisation is singular");
    Eigen::PartialPivLU<Mat> lu(A22);

    LinearRom out;
    out.x_eq = x_eq;
    out.z_eq = z_eq;
    out.u_eq = u_eq;
    out.Kx = -lu.solve(A21);
    out.Ku = B2.cols() ? Mat(-lu.solve(B2)) : Mat::Zero(sys.m, 0);
    out.A = A11 + A12 * out.Kx;
    out.B = B1.cols() ? Mat(B1 + A12 * out.Ku) : Mat::Zero(sys.n, 0);
    return out;
}

} // namespace lsor
