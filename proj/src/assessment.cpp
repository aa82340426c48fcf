#include "lsor/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace lsor {

namespace {

double norm2(const Mat& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues()(0);
}

Vec ones_if_empty(const Vec& s, int n) { return s.size() ? s : Vec(Vec::Ones(n)); }

constexpr int kPrimes[16] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(std::uint64_t i, int base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * double(i % std::uint64_t(base));
        i /= std::uint64_t(base);
        f *= inv;
    }
    return r;
}

void project_blocks(Vec& p, const std::vector<int>& dims, double mu) {
    int off = 0;
    for (int d : dims) {
        auto seg = p.segment(off, d);
        const double nrm = seg.norm();
        if (nrm > mu) seg *= mu / nrm;
        off += d;
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// largest eps in (0, hi) with fn(eps) <= target, fn increasing from fn(0) = 0
double bisect_increasing(const std::function<double(double)>& fn, double target, double hi) {
    if (!(target > 0.0)) return 0.0;
    if (std::isinf(target)) return hi;
    double lo = 0.0, up = hi;
    if (fn(up * (1.0 - 1e-12)) <= target) return up;
    for (int i = 0; i < 200 && up - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + up);
        if (fn(mid) <= target) lo = mid; else up = mid;
    }
    return lo;
}

Vec drop(const Vec& v, const std::vector<int>& ex) {
    if (ex.empty()) return v;
    Vec r(v.size() - int(ex.size()));
    int k = 0;
    for (int i = 0; i < v.size(); ++i)
        if (std::find(ex.begin(), ex.end(), i) == ex.end()) r(k++) = v(i);
    return r;
}

Mat drop_rc(const Mat& A, const std::vector<int>& ex, bool rows, bool cols) {
    std::vector<int> ri, ci;
    for (int i = 0; i < A.rows(); ++i)
        if (!rows || std::find(ex.begin(), ex.end(), i) == ex.end()) ri.push_back(i);
    for (int j = 0; j < A.cols(); ++j)
        if (!cols || std::find(ex.begin(), ex.end(), j) == ex.end()) ci.push_back(j);
    Mat R(ri.size(), ci.size());
    for (size_t i = 0; i < ri.size(); ++i)
        for (size_t j = 0; j < ci.size(); ++j) R(i, j) = A(ri[i], ci[j]);
    return R;
}

Vec embed(const Vec& r, const std::vector<int>& ex, int n) {
    if (ex.empty()) return r;
    Vec v = Vec::Zero(n);
    int k = 0;
    for (int i = 0; i < n; ++i)
        if (std::find(ex.begin(), ex.end(), i) == ex.end()) v(i) = r(k++);
    return v;
}

} // namespace

// ---------------------------------------------------------------------------

SingularSystem shifted_system(const SingularSystem& sys, const OperatingPoint& op) {
    sys.validate();
    const Vec xs = ones_if_empty(op.x_scale, sys.n), zs = ones_if_empty(op.z_scale, sys.m),
              us = ones_if_empty(op.u_scale, sys.p);
    const Vec xc = op.x.size() ? op.x : Vec(Vec::Zero(sys.n));
    const Vec zc = op.z.size() ? op.z : Vec(Vec::Zero(sys.m));
    const Vec uc = op.u.size() ? op.u : Vec(Vec::Zero(sys.p));
    if (xs.size() != sys.n || zs.size() != sys.m || us.size() != sys.p || xc.size() != sys.n ||
        zc.size() != sys.m || uc.size() != sys.p)
        throw DimensionError("operating point does not match the system");
    SingularSystem s = sys;
    const SysFn f = sys.f, g = sys.g;
    s.f = [=](const Vec& x, const Vec& z, const Vec& u, const Vec& e) {
        return Vec(f(xc + xs.cwiseProduct(x), zc + zs.cwiseProduct(z), uc + us.cwiseProduct(u), e)
                       .cwiseQuotient(xs));
    };
    s.g = [=](const Vec& x, const Vec& z, const Vec& u, const Vec& e) {
        return Vec(g(xc + xs.cwiseProduct(x), zc + zs.cwiseProduct(z), uc + us.cwiseProduct(u), e)
                       .cwiseQuotient(zs));
    };
    s.name = sys.name + " (deviation)";
    return s;
}

Vec unshift_x(const OperatingPoint& op, const Vec& xt) {
    return op.x + ones_if_empty(op.x_scale, int(xt.size())).cwiseProduct(xt);
}
Vec unshift_z(const OperatingPoint& op, const Vec& zt) {
    return op.z + ones_if_empty(op.z_scale, int(zt.size())).cwiseProduct(zt);
}

SamplingScheme parse_scheme(const std::string& s) {
    if (s == "grid") return SamplingScheme::Grid;
    if (s == "halton" || s == "low-discrepancy" || s == "lowdisc") return SamplingScheme::LowDiscrepancy;
    throw ConfigError("unknown sampling scheme '" + s + "'");
}

const char* scheme_name(SamplingScheme s) {
    return s == SamplingScheme::Grid ? "grid" : "halton";
}

void DomainBox::validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be positive");
    if (samples < 1) throw ConfigError("samples must be >= 1");
}

std::vector<Vec> sample_blocks(const std::vector<int>& dims, const DomainBox& box) {
    box.validate();
    int D = 0;
    for (int d : dims) D += d;
    std::vector<Vec> pts;
    pts.push_back(Vec::Zero(D));
    if (D == 0 || box.samples == 1) return pts;
    const double mu = box.mu;
    if (box.scheme == SamplingScheme::Grid) {
        int n = std::max(2, int(std::floor(std::pow(double(box.samples), 1.0 / D) + 1e-9)));
        if (std::pow(double(n), double(D)) > 2e6)
            throw ConfigError("grid sampling too large for this dimension; use halton");
        long total = 1;
        for (int i = 0; i < D; ++i) total *= n;
        for (long k = 0; k < total; ++k) {
            Vec p(D);
            long r = k;
            for (int i = 0; i < D; ++i) {
                p(i) = -mu + 2.0 * mu * double(r % n) / double(n - 1);
                r /= n;
            }
            if (p.squaredNorm() == 0.0) continue;
            project_blocks(p, dims, mu);
            pts.push_back(p);
        }
        return pts;
    }
    std::mt19937_64 rng(box.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (D <= 16) {
        Vec shift(D);
        for (int i = 0; i < D; ++i) shift(i) = uni(rng);
        for (int k = 1; k < box.samples; ++k) {
            Vec p(D);
            for (int i = 0; i < D; ++i) {
                double v = radical_inverse(std::uint64_t(k), kPrimes[i]) + shift(i);
                v -= std::floor(v);
                p(i) = -mu + 2.0 * mu * v;
            }
            project_blocks(p, dims, mu);
            pts.push_back(p);
        }
    } else {
        for (int k = 1; k < box.samples; ++k) {
            Vec p(D);
            for (int i = 0; i < D; ++i) p(i) = -mu + 2.0 * mu * uni(rng);
            project_blocks(p, dims, mu);
            pts.push_back(p);
        }
    }
    return pts;
}

double KLFunctionExp::operator()(double r, double s) const { return M * r * std::exp(-lambda * s); }

// ---------------------------------------------------------------------------

GrowthResult check_growth(const SingularSystem& sys, const DomainBox& box) {
    sys.validate();
    GrowthResult res;
    const auto pts = sample_blocks({sys.n, sys.m, sys.p}, box);
    const Vec& e = sys.eps;
    for (const Vec& p : pts) {
        const Vec x = p.head(sys.n), z = p.segment(sys.n, sys.m), u = p.tail(sys.p);
        ++res.samples;
        auto fail = [&](const std::string& what) {
            res.ok = false;
            res.offending = what;
            res.witness = p;
            return res;
        };
        Vec fv, gv;
        try { fv = eval_f(sys, x, z, u, e); } catch (const EvaluationError&) { return fail("f"); }
        try { gv = eval_g(sys, x, z, u, e); } catch (const EvaluationError&) { return fail("g"); }
        res.sup_f = std::max(res.sup_f, fv.norm());
        res.sup_g = std::max(res.sup_g, gv.norm());
        struct Part { Target t; Wrt w; const char* name; double* sup; };
        const Part parts[] = {{Target::F, Wrt::X, "df/dx", &res.sup_fx},
                              {Target::F, Wrt::Z, "df/dz", &res.sup_fz},
                              {Target::F, Wrt::U, "df/du", &res.sup_fu},
                              {Target::G, Wrt::X, "dg/dx", &res.sup_gx},
                              {Target::G, Wrt::Z, "dg/dz", &res.sup_gz},
                              {Target::G, Wrt::U, "dg/du", &res.sup_gu}};
        for (const auto& pt : parts) {
            if (pt.w == Wrt::U && sys.p == 0) continue;
            JacobianRequest req{pt.t, pt.w, x, z, u, e, 1e-6};
            Mat J;
            try { J = jacobian(sys, req); } catch (const EvaluationError&) { return fail(pt.name); }
            if (!J.allFinite()) return fail(pt.name);
            *pt.sup = std::max(*pt.sup, norm2(J));
        }
    }
    return res;
}

std::pair<Mat, Mat> rom_jacobians(QssMap& qss, const Vec& x, const Vec& u) {
    const SingularSystem& sys = qss.system();
    const Vec z = qss.solve(x, u);
    const Vec& e0 = qss.zero_eps();
    const Mat fx = jacobian(sys, {Target::F, Wrt::X, x, z, u, e0, 1e-6});
    const Mat fz = jacobian(sys, {Target::F, Wrt::Z, x, z, u, e0, 1e-6});
    const Mat hx = qss.dh_dx(x, u, z);
    Mat A = fx + fz * hx;
    Mat B = Mat::Zero(sys.n, sys.p);
    if (sys.p > 0) {
        const Mat fu = jacobian(sys, {Target::F, Wrt::U, x, z, u, e0, 1e-6});
        B = fu + fz * qss.dh_du(x, u, z);
    }
    return {A, B};
}

RomStability check_rom_stability(ReducedModel& rom, const Vec& x_eq, const Vec& u_eq,
                                 const DomainBox& box, double margin, double eq_tol) {
    box.validate();
    RomStability rs;
    rs.margin = margin;
    QssMap& qss = rom.qss();
    const int n = rom.dim();
    const Vec h_eq = qss.solve(x_eq, u_eq);
    const Vec F = rom.rhs(x_eq, u_eq);
    if (F.cwiseAbs().maxCoeff() > eq_tol * (1.0 + x_eq.cwiseAbs().maxCoeff())) {
        std::ostringstream os;
        os << "ROM residual " << F.cwiseAbs().maxCoeff() << " at the requested equilibrium";
        throw NotAnEquilibrium(os.str());
    }
    auto [A, B] = rom_jacobians(qss, x_eq, u_eq);
    for (int i = 0; i < n; ++i)
        if ((A.row(i).array() == 0.0).all() && (B.row(i).array() == 0.0).all())
            rs.excluded.push_back(i);
    rs.A = A;
    rs.B = B;
    const Mat Ar = drop_rc(A, rs.excluded, true, true);
    const Mat Br = drop_rc(B, rs.excluded, true, false);
    rs.eigenvalues = eigenvalues(Ar);
    double amax = -INFINITY;
    for (const auto& l : rs.eigenvalues) amax = std::max(amax, l.real());
    rs.exp_stable = Ar.size() == 0 || amax < -margin;
    if (!rs.exp_stable || Ar.size() == 0) return rs;

    const Mat I = Mat::Identity(Ar.rows(), Ar.rows());
    rs.lyap = lyapunov_constants(Ar, I);
    const auto& L = *rs.lyap;
    rs.iss_gain.gain = 2.0 * norm2(Br) * norm2(L.P) / L.c3;
    rs.beta_x_hat.M = std::sqrt(L.c2 / L.c1);
    rs.beta_x_hat.lambda = L.c3 / (2.0 * L.c2);

    // sampled decrease of V = e'Pe on shells of the unforced ROM
    const int nr = int(Ar.rows());
    std::vector<Vec> dirs;
    for (const Vec& p : sample_ball(nr, box))
        if (p.norm() > 0) dirs.push_back(p / p.norm());
    for (int i = 0; i < nr && int(dirs.size()) < 2 * nr + 16; ++i) {
        dirs.push_back(Vec::Unit(nr, i));
        dirs.push_back(-Vec::Unit(nr, i));
    }
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
        const double r = frac * box.mu;
        bool ok = true;
        try {
            for (const Vec& d : dirs) {
                const Vec e = r * d;
                qss.seed(h_eq);
                const Vec Fx = drop(rom.rhs(x_eq + embed(e, rs.excluded, n), u_eq), rs.excluded);
                if (!(2.0 * e.dot(L.P * Fx) < 0.0)) { ok = false; break; }
            }
        } catch (const Error&) {
            ok = false;
        }
        if (!ok) break;
        rs.certified_radius = r;
    }
    qss.seed(h_eq);
    return rs;
}

BlmResult check_blm_gas(BoundaryLayerModel& blm, const DomainBox& box, double margin) {
    BlmResult res;
    QssMap& qss = blm.qss();
    const SingularSystem& sys = qss.system();
    const Vec& D = blm.time_scale();
    const auto pts = sample_blocks({sys.n, sys.p}, box);
    const Vec z0 = qss.solve(pts[0].head(sys.n), pts[0].tail(sys.p));
    for (const Vec& p : pts) {
        const Vec x = p.head(sys.n), u = p.tail(sys.p);
        ++res.samples;
        auto fail = [&](const std::string& why, const Vec& y) {
            res.gas = false;
            res.reason = why;
            res.witness_x = x;
            res.witness_u = u;
            res.witness_y = y;
            return res;
        };
        Vec h;
        try { h = qss.solve(x, u, z0); } catch (const Error& e) {
            return fail(std::string("no QSS root: ") + e.what(), Vec());
        }
        const Mat J = D.asDiagonal() * qss.dg_dz(x, h, u);
        const double a = spectral_abscissa(J);
        res.worst_abscissa = std::max(res.worst_abscissa, a);
        if (!(a < -margin)) return fail("dg/dz is not Hurwitz", Vec::Zero(sys.m));
        const Mat P = solve_lyapunov(J, Mat::Identity(sys.m, sys.m));
        std::vector<Vec> dirs;
        for (int i = 0; i < sys.m; ++i) {
            dirs.push_back(Vec::Unit(sys.m, i));
            dirs.push_back(-Vec::Unit(sys.m, i));
        }
        std::mt19937_64 rng(box.seed + std::uint64_t(res.samples));
        std::normal_distribution<double> nd;
        for (int k = 0; k < 8; ++k) {
            Vec d(sys.m);
            for (int i = 0; i < sys.m; ++i) d(i) = nd(rng);
            dirs.push_back(d / d.norm());
        }
        for (double frac : {0.25, 0.5, 0.75, 1.0})
            for (const Vec& d : dirs) {
                const Vec y = frac * box.mu * d;
                Vec r;
                try { r = blm.rhs_at(y, x, u, h); } catch (const EvaluationError& e) {
                    return fail(std::string("BLM evaluation failed: ") + e.what(), y);
                }
                if (!(2.0 * y.dot(P * r) < 0.0)) return fail("V does not decrease", y);
            }
    }
    return res;
}

KLFunctionExp fit_beta_y(BoundaryLayerModel& blm, const DomainBox& box, const SolverConfig& cfg,
                         int max_sims) {
    QssMap& qss = blm.qss();
    const SingularSystem& sys = qss.system();
    const Vec& D = blm.time_scale();
    const auto pts = sample_blocks({sys.n, sys.p}, box);
    const Vec z0 = qss.solve(pts[0].head(sys.n), pts[0].tail(sys.p));
    double lam = INFINITY;
    std::vector<Vec> hs;
    for (const Vec& p : pts) {
        const Vec x = p.head(sys.n), u = p.tail(sys.p);
        const Vec h = qss.solve(x, u, z0);
        hs.push_back(h);
        lam = std::min(lam, -spectral_abscissa(D.asDiagonal() * qss.dg_dz(x, h, u)));
    }
    if (!(lam > 0.0)) throw NotHurwitz("BLM has a non-decaying mode; beta_y cannot be fitted");
    KLFunctionExp beta{1.0, lam};
    const double tau_end = 10.0 / lam;
    const auto grid = uniform_grid(0.0, tau_end, 201);
    std::mt19937_64 rng(box.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> nd;
    const int sims = std::min<int>(max_sims, int(pts.size()) * 2 * std::max(1, sys.m));
    for (int s = 0; s < sims; ++s) {
        const size_t ip = size_t(s) % pts.size();
        const Vec x = pts[ip].head(sys.n), u = pts[ip].tail(sys.p);
        const Vec& h = hs[ip];
        Vec d(sys.m);
        if (s < 2 * sys.m) {
            d = (s % 2 ? -1.0 : 1.0) * Vec::Unit(sys.m, (s / 2) % sys.m);
        } else {
            for (int i = 0; i < sys.m; ++i) d(i) = nd(rng);
            d /= d.norm();
        }
        const Vec y0 = box.mu * d;
        Rhs rhs = [&](double, const Vec& y, Vec& dy) { dy = blm.rhs_at(y, x, u, h); };
        const Trajectory tr = integrate(rhs, y0, 0.0, tau_end, cfg, {}, grid);
        for (int k = 0; k < tr.size(); ++k) {
            const double ratio = tr.row(k).norm() * std::exp(lam * tr.times[k]) / box.mu;
            beta.M = std::max(beta.M, ratio);
        }
    }
    return beta;
}

double estimate_lipschitz(const std::function<Vec(const Vec&)>& fn, int dim, const DomainBox& box,
                          const Vec& center) {
    const Vec c = center.size() ? center : Vec(Vec::Zero(dim));
    double L = 0.0;
    for (const Vec& p : sample_ball(dim, box)) {
        const Mat J = fd_jacobian(fn, c + p, 1e-6);
        if (!J.allFinite()) throw EvaluationError("non-finite Jacobian while estimating Lipschitz");
        L = std::max(L, norm2(J));
    }
    return L;
}

// ---------------------------------------------------------------------------

EstimationWorkspace estimate_workspace(QssMap& qss, const RomStability& rom,
                                       const KLFunctionExp& beta_y, const DomainBox& box,
                                       double xi) {
    if (!rom.lyap) throw InfeasibleConstants("ROM Lyapunov constants are unavailable");
    const SingularSystem& sys = qss.system();
    EstimationWorkspace ws;
    ws.mu = box.mu;
    ws.xi = xi;
    ws.eps_bar = sys.eps_bar();
    const auto& L = *rom.lyap;
    ws.c1 = L.c1;
    ws.c2 = L.c2;
    ws.c3 = L.c3;
    ws.c4 = L.c4;
    ws.beta_x_hat = rom.beta_x_hat;
    ws.alpha_x_hat = rom.iss_gain;
    ws.beta_y = beta_y;

    const Vec x0 = Vec::Zero(sys.n), u0 = Vec::Zero(sys.p);
    const Vec h0 = qss.solve(x0, u0);
    const Mat A0 = drop_rc(rom_jacobians(qss, x0, u0).first, rom.excluded, true, true);

    // Lipschitz constant of the ROM Jacobian about the centre
    double Lj = 0.0;
    for (const Vec& p : sample_blocks({sys.n, sys.p}, box)) {
        if (p.norm() == 0.0) continue;
        try {
            qss.seed(h0);
            const Mat Ap = drop_rc(rom_jacobians(qss, p.head(sys.n), p.tail(sys.p)).first,
                                   rom.excluded, true, true);
            Lj = std::max(Lj, norm2(Ap - A0) / p.norm());
        } catch (const Error&) {
        }
    }
    ws.l1 = ws.l2 = Lj;

    // f against z, f and g against eps, and the y-offset forcing
    const Vec ratio = sys.eps / ws.eps_bar;
    const Vec D = Vec::Constant(sys.m, ws.eps_bar).cwiseQuotient(sys.eps);
    const Vec& e0 = qss.zero_eps();
    double S = 0.0;
    for (const Vec& p : sample_blocks({sys.n, sys.m, sys.p}, box)) {
        const Vec x = p.head(sys.n), y = p.segment(sys.n, sys.m), u = p.tail(sys.p);
        Vec h;
        try { h = qss.solve(x, u, h0); } catch (const Error&) { continue; }
        const Vec z = y + h;
        ws.l3 = std::max(ws.l3, norm2(jacobian(sys, {Target::F, Wrt::Z, x, z, u, e0, 1e-6})));
        const Vec f_e = eval_f(sys, x, z, u, sys.eps), f_0 = eval_f(sys, x, z, u, e0);
        ws.l4 = std::max(ws.l4, (f_e - f_0).norm() / ws.eps_bar);
        const Vec dg = D.cwiseProduct(eval_g(sys, x, z, u, sys.eps) - eval_g(sys, x, z, u, e0));
        const Vec hxf = qss.dh_dx(x, u, h) * f_e;
        S = std::max(S, hxf.norm() + dg.norm() / ws.eps_bar);
    }
    (void)ratio;
    ws.kappa_y = beta_y.M * S / beta_y.lambda;

    const double gam = ws.alpha_x_hat.gain;
    const double mu = ws.mu;
    if (ws.l1 > 0.0)
        ws.la = std::min(ws.c3 - ws.c4 * ws.l1 * gam * mu,
                         0.5 * ws.c3 - ws.c4 * ws.l2 * (gam + 1.0) * mu);
    else
        ws.la = ws.c3;
    ws.lb = ws.c4 * ws.l2;
    ws.lc = ws.c4 * (ws.l4 + ws.l3 * ws.kappa_y) / (2.0 * std::sqrt(ws.c1));
    ws.ld = ws.c4 * ws.l3 / (2.0 * std::sqrt(ws.c1));
    ws.lf = ws.la / (2.0 * ws.c2);
    ws.le = std::exp(ws.lb * ws.beta_x_hat.M * mu / (2.0 * ws.c2 * ws.beta_x_hat.lambda));
    qss.seed(h0);
    return ws;
}

double slow_error_bound(const EstimationWorkspace& ws, double eps) {
    if (eps <= 0.0) return 0.0;
    if (!(ws.lf > 0.0)) return INFINITY;
    const double lam = ws.beta_y.lambda;
    if (eps * ws.lf >= lam) return INFINITY;
    return ws.le / std::sqrt(ws.c1) *
           (ws.lc * eps / ws.lf + ws.ld * ws.beta_y.M * ws.mu * eps / (lam - ws.lf * eps));
}

EpsilonStar epsilon_star(const EstimationWorkspace& ws) {
    if (!(ws.la > 0.0)) {
        std::ostringstream os;
        os << "l_a = " << ws.la << " <= 0: the ROM decay margin is used up by the input gain";
        throw InfeasibleConstants(os.str());
    }
    for (double c : {ws.c1, ws.c2, ws.c3, ws.c4, ws.beta_y.lambda, ws.mu})
        if (!(c > 0.0)) throw InfeasibleConstants("non-positive workspace constant");
    EpsilonStar es;
    const double lam = ws.beta_y.lambda;
    const double hi = lam / ws.lf;
    auto bound = [&](double e) { return slow_error_bound(ws, e); };

    const double r1 = ws.l1 > 0.0 ? ws.c3 / (2.0 * ws.c4 * ws.l1) : INFINITY;
    es.e1.value = bisect_increasing(bound, r1, hi);
    es.e1.formula = "largest eps with B(eps) <= c3/(2 c4 l1) = " + fmt(r1) +
                    ", B(eps) = (l_e/sqrt(c1)) [l_c eps/l_f + l_d M_y mu eps/(lambda_y - l_f eps)]";
    es.e2.value = 0.5 * hi;
    es.e2.formula = "lambda_y/(2 l_f) = " + fmt(es.e2.value) +
                    " (BLM decay at least twice the slow envelope rate)";
    es.e3.value = bisect_increasing(
        [&](double e) { return std::max(bound(e), ws.kappa_y * e); }, ws.xi, hi);
    es.e3.formula = "largest eps with max(B(eps), kappa_y eps) <= xi = " + fmt(ws.xi);
    es.value = std::min({es.e1.value, es.e2.value, es.e3.value});
    return es;
}

std::pair<double, double> epsilon_double_star(const KLFunctionExp& b, double k, double mu,
                                              EpsMode mode, double value) {
    if (!(b.M > 0.0 && b.lambda > 0.0 && k > 0.0 && mu > 0.0))
        throw ConfigError("epsilon_double_star needs M, lambda, k, mu > 0");
    if (mode == EpsMode::FixEpsSolveT) {
        const double eps = value;
        if (!(eps > 0.0)) throw ConfigError("eps must be positive");
        const double T = (eps / b.lambda) * std::log(b.M * mu / (k * eps));
        return {eps, std::max(0.0, T)};
    }
    const double T = value;
    if (!(T > 0.0)) throw ConfigError("T must be positive");
    // phi rises on (0, lambda T] and peaks there
    auto phi = [&](double e) { return b.M * mu * std::exp(-b.lambda * T / e) / (k * e); };
    const double peak = b.lambda * T;
    if (phi(peak) < 1.0) {
        std::ostringstream os;
        os << "no eps solves M mu exp(-lambda T/eps) = k eps (peak ratio " << phi(peak) << ")";
        throw NoFeasibleEpsilon(os.str());
    }
    double hi = peak, lo = peak;
    while (phi(lo) >= 1.0 && lo > 1e-300) { hi = lo; lo *= 0.5; }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (phi(mid) < 1.0) lo = mid; else hi = mid;
    }
    return {lo, T};
}

// ---------------------------------------------------------------------------

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err,
                    double* intercept) {
    const size_t n = eps.size();
    if (n < 2 || err.size() != n) return NAN;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!(eps[i] > 0.0) || !(err[i] > 0.0)) return NAN;
        const double lx = std::log(eps[i]), ly = std::log(err[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = double(n) * sxx - sx * sx;
    if (den == 0.0) return NAN;
    const double s = (double(n) * sxy - sx * sy) / den;
    if (intercept) *intercept = std::exp((sy - s * sx) / double(n));
    return s;
}

namespace {

void check_grid(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size()) throw GridMismatch("trajectories have different lengths");
    for (int i = 0; i < a.size(); ++i)
        if (std::abs(a.times[i] - b.times[i]) > 1e-12 * (1.0 + std::abs(a.times[i])))
            throw GridMismatch("trajectories are sampled on different grids");
}

std::vector<Vec> qss_path(const Trajectory& rom, QssMap& qss, const InputSignal& u) {
    std::vector<Vec> hs;
    hs.reserve(rom.size());
    for (int i = 0; i < rom.size(); ++i) hs.push_back(qss.solve(rom.row(i), u.at(rom.times[i])));
    return hs;
}

} // namespace

ErrorStudy verify_error_bounds(const std::vector<Trajectory>& full, const Trajectory& rom,
                               const std::vector<Trajectory>& blm, QssMap& qss,
                               const InputSignal& u, const std::vector<double>& eps_list,
                               double T) {
    ErrorStudy st = verify_error_bounds(full, rom, blm, qss, u, eps_list,
                                        std::vector<double>(eps_list.size(), T));
    st.T = T;
    return st;
}

ErrorStudy verify_error_bounds(const std::vector<Trajectory>& full, const Trajectory& rom,
                               const std::vector<Trajectory>& blm, QssMap& qss,
                               const InputSignal& u, const std::vector<double>& eps_list,
                               const std::vector<double>& T_list) {
    if (full.size() != eps_list.size() || blm.size() != eps_list.size() ||
        T_list.size() != eps_list.size())
        throw DimensionError("one full and one BLM trajectory per eps required");
    const int n = qss.system().n, m = qss.system().m;
    for (size_t i = 0; i < full.size(); ++i) {
        check_grid(full[i], rom);
        check_grid(blm[i], rom);
    }
    ErrorStudy st;
    st.eps = eps_list;
    st.T_list = T_list;
    const auto hs = qss_path(rom, qss, u);
    bool have_T = true;
    for (size_t i = 0; i < full.size(); ++i) {
        const double T = T_list[i];
        have_T = have_T && !std::isnan(T);
        double es = 0, ef = 0, eft = 0;
        for (int k = 0; k < rom.size(); ++k) {
            const Vec xz = full[i].row(k);
            const Vec ez = xz.segment(n, m) - hs[size_t(k)];
            es = std::max(es, (xz.head(n) - rom.row(k)).norm());
            ef = std::max(ef, (ez - blm[i].row(k)).norm());
            if (!std::isnan(T) && rom.times[k] >= T) eft = std::max(eft, ez.norm());
        }
        st.e_slow.push_back(es);
        st.e_fast.push_back(ef);
        st.e_fast_T.push_back(std::isnan(T) ? NAN : eft);
    }
    st.slope_slow = loglog_slope(st.eps, st.e_slow, &st.intercept_slow);
    st.slope_fast = loglog_slope(st.eps, st.e_fast);
    if (have_T) st.slope_fast_T = loglog_slope(st.eps, st.e_fast_T);
    return st;
}

std::vector<std::vector<double>> fast_residual_paths(const std::vector<Trajectory>& full,
                                                     const Trajectory& rom, QssMap& qss,
                                                     const InputSignal& u) {
    const int n = qss.system().n, m = qss.system().m;
    const auto hs = qss_path(rom, qss, u);
    std::vector<std::vector<double>> out;
    for (const auto& tr : full) {
        check_grid(tr, rom);
        std::vector<double> p(size_t(tr.size()));
        for (int k = 0; k < tr.size(); ++k)
            p[size_t(k)] = (tr.states.row(k).segment(n, m).transpose() - hs[size_t(k)]).norm();
        out.push_back(std::move(p));
    }
    return out;
}

double fit_tail_k(const std::vector<std::vector<double>>& paths, const std::vector<double>& times,
                  const std::vector<double>& eps_list, const KLFunctionExp& beta_y, double mu) {
    auto feasible = [&](double k) {
        for (size_t i = 0; i < paths.size(); ++i) {
            const double T = epsilon_double_star(beta_y, k, mu, EpsMode::FixEpsSolveT,
                                                  eps_list[i]).second;
            double mx = 0.0;
            for (size_t j = 0; j < times.size(); ++j)
                if (times[j] >= T) mx = std::max(mx, paths[i][j]);
            if (mx > k * eps_list[i]) return false;
        }
        return true;
    };
    double khi = 0.0;
    for (size_t i = 0; i < paths.size(); ++i)
        for (double v : paths[i]) khi = std::max(khi, v / eps_list[i]);
    khi = std::max(khi * (1.0 + 1e-12), 1e-300);
    double prev = 0.0, first = khi;
    for (int s = 0; s <= 120; ++s) {
        const double k = khi * std::pow(10.0, -8.0 + 8.0 * s / 120.0);
        if (feasible(k)) { first = k; break; }
        prev = k;
    }
    double lo = prev, hi = first;
    for (int i = 0; i < 60 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid)) hi = mid; else lo = mid;
    }
    return hi;
}

IssCheck verify_iss_envelope(const std::vector<double>& times, const Mat& xs, const Mat& ys,
                             const KLFunctionExp& beta_x, const KFunctionLin& alpha_x,
                             double u_sup, const KLFunctionExp& beta_y, double xi, double eps) {
    IssCheck res;
    if (xs.rows() != int(times.size()) || ys.rows() != int(times.size()))
        throw GridMismatch("envelope check needs one row per time");
    const double x0 = xs.rows() ? xs.row(0).norm() : 0.0;
    const double y0 = ys.rows() ? ys.row(0).norm() : 0.0;
    for (size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (xs.row(int(k)).norm() > beta_x(x0, t) + alpha_x(u_sup) + xi) {
            res.ok = false;
            res.t_violation = t;
            res.which = "x";
            return res;
        }
        const double s = eps > 0.0 ? t / eps : INFINITY;
        if (ys.row(int(k)).norm() > beta_y(y0, s) + xi) {
            res.ok = false;
            res.t_violation = t;
            res.which = "y";
            return res;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

AssessmentReport assess(const SingularSystem& sh, const AssessConfig& cfg) {
    cfg.box.validate();
    AssessmentReport rep;
    rep.system = sh.name;
    rep.eps_bar = sh.eps_bar();
    rep.notes.push_back("norm: Euclidean 2-norm; all quantities in deviation coordinates");

    DomainBox gbox = cfg.box;
    if (cfg.growth_samples > 0) gbox.samples = cfg.growth_samples;
    rep.growth = check_growth(sh, gbox);
    rep.growth_ok = rep.growth.ok;
    auto reject = [&](Assumption a, const std::string& why) {
        rep.verdict = "rejected";
        rep.failed = assumption_name(a);
        rep.notes.push_back(why);
        return rep;
    };
    if (!rep.growth_ok) return reject(Assumption::Growth, "unbounded or non-finite " + rep.growth.offending);

    auto qss = std::make_shared<QssMap>(sh);
    const Vec x0 = Vec::Zero(sh.n), u0 = Vec::Zero(sh.p);
    const Vec h0 = qss->solve(x0, u0, Vec::Zero(sh.m));
    ReducedModel rom = build_rom(sh, qss, x0, u0);
    BoundaryLayerModel blm = build_blm(sh, qss);

    rep.rom = check_rom_stability(rom, x0, u0, cfg.box, cfg.margin);
    rep.rom_stable = rep.rom.exp_stable;
    if (!rep.rom.excluded.empty()) {
        std::ostringstream os;
        os << "ROM states with an identically zero row excluded from the eigenvalue test:";
        for (int i : rep.rom.excluded) os << ' ' << (size_t(i) < sh.slow_labels.size() ? sh.slow_labels[size_t(i)] : std::to_string(i));
        rep.notes.push_back(os.str());
    }
    if (!rep.rom_stable) return reject(Assumption::RomStability, "ROM linearisation is not Hurwitz");

    qss->seed(h0);
    rep.blm = check_blm_gas(blm, cfg.box, cfg.margin);
    rep.blm_gas = rep.blm.gas;
    if (!rep.blm_gas) return reject(Assumption::BlmStability, "BLM: " + rep.blm.reason);

    rep.beta_y = fit_beta_y(blm, cfg.box, cfg.blm_solver);
    const double xi = std::isnan(cfg.xi) ? 0.5 * cfg.box.mu : cfg.xi;
    rep.workspace = estimate_workspace(*qss, rep.rom, rep.beta_y, cfg.box, xi);
    if (cfg.with_bounds) compute_bounds(rep, cfg);
    return rep;
}

void compute_bounds(AssessmentReport& rep, const AssessConfig& cfg) {
    if (!rep.workspace) return;
    EstimationWorkspace& ws = *rep.workspace;
    EpsilonBounds b;
    try {
        b.components = epsilon_star(ws);
    } catch (const InfeasibleConstants& e) {
        rep.verdict = "rejected";
        rep.failed = assumption_name(Assumption::RomStability);
        rep.notes.push_back(std::string("InfeasibleConstants: ") + e.what());
        rep.bounds.reset();
        return;
    }
    b.eps_star = b.components.value;
    if (!std::isnan(cfg.k)) {
        ws.k = cfg.k;
        b.notes.push_back("k supplied by the user");
    } else if (std::isnan(ws.k)) {
        const double e = std::min(rep.eps_bar, b.eps_star);
        ws.k = std::max(slow_error_bound(ws, e) / e, ws.kappa_y);
        b.notes.push_back("k from the workspace envelope max(B(eps)/eps, kappa_y)");
    }
    try {
        if (!std::isnan(cfg.T)) {
            auto [e2, T] = epsilon_double_star(ws.beta_y, ws.k, ws.mu, EpsMode::FixTSolveEps, cfg.T);
            b.eps_star2 = e2;
            b.T = T;
        } else {
            auto [e, T] = epsilon_double_star(ws.beta_y, ws.k, ws.mu, EpsMode::FixEpsSolveT,
                                              rep.eps_bar);
            b.T = T;
            b.eps_star2 = e;
            if (T <= 0.0) b.notes.push_back("BLM envelope already below k eps at t = 0");
        }
    } catch (const NoFeasibleEpsilon& e) {
        b.notes.push_back(std::string("NoFeasibleEpsilon: ") + e.what());
        b.eps_star2 = NAN;
        if (!std::isnan(cfg.T)) b.T = cfg.T;
    }
    if (!std::isnan(b.eps_star2) && b.eps_star2 > b.eps_star) {
        b.eps_star2 = b.eps_star;
        b.notes.push_back("eps** clipped to eps*");
    }
    rep.bounds = b;
    if (rep.eps_bar <= b.eps_star) {
        rep.verdict = "accepted";
        rep.failed.clear();
        const bool h_only = !std::isnan(b.eps_star2) && rep.eps_bar <= b.eps_star2;
        rep.reconstruction = h_only ? "h" : "h+yhat";
    } else {
        rep.verdict = "rejected";
        rep.failed = assumption_name(Assumption::EpsilonBound);
        rep.reconstruction = "h+yhat";
        std::ostringstream os;
        os << "eps_bar = " << rep.eps_bar << " exceeds eps* = " << b.eps_star;
        rep.notes.push_back(os.str());
    }
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json num(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

nlohmann::json vec_json(const Vec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

nlohmann::json mat_json(const Mat& A) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < A.rows(); ++i) a.push_back(vec_json(A.row(i).transpose()));
    return a;
}

} // namespace

nlohmann::json to_json(const AssessmentReport& rep) {
    using nlohmann::json;
    json j;
    j["system"] = rep.system;
    j["eps_bar"] = num(rep.eps_bar);
    j["norm"] = "2";
    j["verdict"] = rep.verdict;
    j["failed"] = rep.failed.empty() ? json(nullptr) : json(rep.failed);
    j["reconstruction"] = rep.reconstruction.empty() ? json(nullptr) : json(rep.reconstruction);
    j["attempts"] = rep.attempts;
    j["growth_ok"] = rep.growth_ok;
    j["rom_stable"] = rep.rom_stable;
    j["blm_gas"] = rep.blm_gas;
    const auto& g = rep.growth;
    j["growth"] = {{"samples", g.samples}, {"sup_f", num(g.sup_f)}, {"sup_g", num(g.sup_g)},
                   {"sup_df_dx", num(g.sup_fx)}, {"sup_df_dz", num(g.sup_fz)},
                   {"sup_df_du", num(g.sup_fu)}, {"sup_dg_dx", num(g.sup_gx)},
                   {"sup_dg_dz", num(g.sup_gz)}, {"sup_dg_du", num(g.sup_gu)},
                   {"offending", g.offending}, {"witness", vec_json(g.witness)}};
    json ev = json::array();
    for (const auto& l : rep.rom.eigenvalues) ev.push_back({num(l.real()), num(l.imag())});
    j["rom_eigenvalues"] = ev;
    j["rom_excluded_states"] = rep.rom.excluded;
    j["iss_gain"] = num(rep.rom.iss_gain.gain);
    j["rom_certified_radius"] = num(rep.rom.certified_radius);
    j["stability_margin"] = num(rep.rom.margin);
    if (rep.rom.lyap) j["rom_lyapunov_P"] = mat_json(rep.rom.lyap->P);
    j["blm"] = {{"samples", rep.blm.samples}, {"worst_abscissa", num(rep.blm.worst_abscissa)},
                {"reason", rep.blm.reason}, {"witness_x", vec_json(rep.blm.witness_x)},
                {"witness_u", vec_json(rep.blm.witness_u)},
                {"witness_y", vec_json(rep.blm.witness_y)}};
    j["beta_y"] = {{"M", num(rep.beta_y.M)}, {"lambda", num(rep.beta_y.lambda)},
                   {"time", "tau = t/eps_bar"}};
    if (rep.workspace) {
        const auto& w = *rep.workspace;
        j["workspace"] = {{"mu", num(w.mu)}, {"xi", num(w.xi)}, {"l1", num(w.l1)},
                          {"l2", num(w.l2)}, {"l3", num(w.l3)}, {"l4", num(w.l4)},
                          {"kappa_y", num(w.kappa_y)}, {"c1", num(w.c1)}, {"c2", num(w.c2)},
                          {"c3", num(w.c3)}, {"c4", num(w.c4)}, {"l_a", num(w.la)},
                          {"l_b", num(w.lb)}, {"l_c", num(w.lc)}, {"l_d", num(w.ld)},
                          {"l_e", num(w.le)}, {"l_f", num(w.lf)}, {"k", num(w.k)},
                          {"beta_x_hat", {{"M", num(w.beta_x_hat.M)}, {"lambda", num(w.beta_x_hat.lambda)}}},
                          {"alpha_x_hat", num(w.alpha_x_hat.gain)}};
    }
    if (rep.bounds) {
        const auto& b = *rep.bounds;
        j["bounds"] = {{"eps_star", num(b.eps_star)}, {"eps_star2", num(b.eps_star2)},
                       {"T", num(b.T)},
                       {"eps_1", {{"value", num(b.components.e1.value)}, {"formula", b.components.e1.formula}}},
                       {"eps_2", {{"value", num(b.components.e2.value)}, {"formula", b.components.e2.formula}}},
                       {"eps_3", {{"value", num(b.components.e3.value)}, {"formula", b.components.e3.formula}}},
                       {"notes", b.notes}};
    } else {
        j["bounds"] = nullptr;
    }
    if (rep.errors) {
        const auto& e = *rep.errors;
        j["error_slopes"] = {{"eps", e.eps}, {"e_slow", e.e_slow}, {"e_fast", e.e_fast},
                             {"T", num(e.T)}, {"T_per_eps", e.T_list},
                             {"slope_slow", num(e.slope_slow)}, {"slope_fast", num(e.slope_fast)},
                             {"slope_fast_T", num(e.slope_fast_T)},
                             {"intercept_slow", num(e.intercept_slow)}};
        json ft = json::array();
        for (double v : e.e_fast_T) ft.push_back(num(v));
        j["error_slopes"]["e_fast_T"] = ft;
    } else {
        j["error_slopes"] = nullptr;
    }
    j["notes"] = rep.notes;
    return j;
}

} // namespace lsor
