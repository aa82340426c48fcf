#include "lsor/integrators.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace lsor {

const char* method_name(Method m) {
    return m == Method::ExplicitRK45 ? "explicit" : "stiff";
}

Method parse_method(const std::string& s) {
    if (s == "explicit" || s == "rk45")
        return Method::ExplicitRK45;
    if (s == "stiff" || s == "implicit")
        return Method::ImplicitStiff;
    throw ConfigError("unknown solver '" + s + "' (expected explicit|stiff)");
}

void SolverConfig::validate() const {
    if (!(rtol > 0.0) || !(atol > 0.0))
        throw ConfigError("tolerances must be positive");
    if (!(hmin > 0.0) || !(hmax >= hmin))
        throw ConfigError("need 0 < hmin <= hmax");
    if (h0 > 0.0 && (h0 < hmin || h0 > hmax))
        throw ConfigError("initial step outside [hmin, hmax]");
    if (max_steps <= 0)
        throw ConfigError("max_steps must be positive");
}

void EventSchedule::normalize(double t0, double t1) {
    std::vector<double> b;
    for (double t : breakpoints)
        if (t > t0 && t < t1)
            b.push_back(t);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    breakpoints = std::move(b);
}

std::vector<double> uniform_grid(double t0, double t1, int n) {
    if (n < 2)
        throw ConfigError("grid needs at least two points");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        g[std::size_t(i)] = t0 + (t1 - t0) * double(i) / double(n - 1);
    g.back() = t1;
    return g;
}

namespace {

using Clock = std::chrono::steady_clock;

double wrms(const Vec& e, const Vec& sk) {
    if (e.size() == 0)
        return 0.0;
    return std::sqrt(e.cwiseQuotient(sk).squaredNorm() / double(e.size()));
}

Vec weights(const Vec& a, const Vec& b, const SolverConfig& cfg) {
    return (cfg.atol + cfg.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
}

// Collects output rows either at step ends or on a requested grid.
class Recorder {
public:
    Recorder(const std::vector<double>& t_eval, int n, double t0, double t1) : eval_(t_eval), n_(n) {
        for (std::size_t i = 0; i < eval_.size(); ++i) {
            if (eval_[i] < t0 - 1e-12 * (1 + std::abs(t0)) || eval_[i] > t1 + 1e-12 * (1 + std::abs(t1)))
                throw ConfigError("requested output time outside the integration span");
            if (i && !(eval_[i] > eval_[i - 1]))
                throw ConfigError("requested output times must be strictly increasing");
        }
    }
    bool dense() const { return !eval_.empty(); }

    void start(double t, const Vec& y) {
        if (!dense())
            push(t, y);
        else
            while (next_ < eval_.size() && eval_[next_] <= t)
                push(eval_[next_++], y);
    }
    // step [ta, tb]; interp(theta) gives the state at ta + theta*(tb-ta)
    template <class F> void step(double ta, double tb, const Vec& yb, F&& interp) {
        if (!dense()) {
            push(tb, yb);
            return;
        }
        while (next_ < eval_.size() && eval_[next_] <= tb) {
            const double te = eval_[next_++];
            if (te == tb)
                push(te, yb);
            else
                push(te, interp((te - ta) / (tb - ta)));
        }
    }
    void finish(double t1, const Vec& y) {
        // points within rounding of the end
        while (dense() && next_ < eval_.size())
            push(eval_[next_++], y);
        (void)t1;
    }
    Trajectory take() {
        Trajectory tr;
        tr.times = std::move(times_);
        tr.states.resize(Eigen::Index(tr.times.size()), n_);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            tr.states.row(Eigen::Index(i)) = rows_[i].transpose();
        return tr;
    }

private:
    void push(double t, const Vec& y) {
        times_.push_back(t);
        rows_.push_back(y);
    }
    const std::vector<double>& eval_;
    std::size_t next_ = 0;
    int n_;
    std::vector<double> times_;
    std::vector<Vec> rows_;
};

std::vector<double> segment_ends(EventSchedule ev, double t0, double t1) {
    ev.normalize(t0, t1);
    std::vector<double> ends = ev.breakpoints;
    ends.push_back(t1);
    return ends;
}

void check_span(const Vec& y0, double t0, double t1) {
    if (!(t1 > t0))
        throw ConfigError("integration span must satisfy t1 > t0");
    require_finite(y0, "initial state");
}

// ---- Dormand-Prince 5(4) ----------------------------------------------------

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double initial_step(const Rhs& rhs, double t0, const Vec& y0, const Vec& f0, double dir_span,
                    const SolverConfig& cfg, SolverStats& st) {
    const Vec sk = (cfg.atol + cfg.rtol * y0.cwiseAbs().array()).matrix();
    const double dn0 = wrms(y0, sk), dn1 = wrms(f0, sk);
    double h0 = (dn0 < 1e-10 || dn1 < 1e-10) ? 1e-6 : 0.01 * dn0 / dn1;
    h0 = std::min({h0, cfg.hmax, dir_span});
    Vec y1 = y0 + h0 * f0, f1(y0.size());
    rhs(t0 + h0, y1, f1);
    ++st.rhs_evals;
    const double dn2 = wrms(f1 - f0, sk) / h0;
    const double der = std::max(dn1, dn2);
    const double h1 = der <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der, 0.2);
    return std::max(cfg.hmin, std::min({100.0 * h0, h1, cfg.hmax, dir_span}));
}

} // namespace

Trajectory integrate_explicit(const Rhs& rhs, const Vec& y0, double t0, double t1,
                              const SolverConfig& cfg, EventSchedule events,
                              const std::vector<double>& t_eval) {
    cfg.validate();
    check_span(y0, t0, t1);
    const int n = int(y0.size());
    Recorder rec(t_eval, n, t0, t1);
    SolverStats st;
    const auto ends = segment_ends(events, t0, t1);

    const auto wall0 = Clock::now();
    double t = t0;
    Vec y = y0;
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ys(n), y1(n);
    rec.start(t, y);

    const double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
    double facold = 1e-4;
    double h = cfg.h0;
    bool reject = false;

    for (double tend : ends) {
        rhs(t, y, k1);
        ++st.rhs_evals;
        if (!(h > 0.0))
            h = initial_step(rhs, t, y, k1, tend - t, cfg, st);
        reject = false;
        while (t < tend) {
            if (st.accepted + st.rejected >= cfg.max_steps)
                throw MaxStepsExceeded("explicit solver exceeded max_steps");
            bool last = false;
            double hs = std::min(h, cfg.hmax);
            if (t + 1.01 * hs >= tend) {
                hs = tend - t;
                last = true;
            }
            if (hs < cfg.hmin && !last) {
                std::ostringstream os;
                os << "step size " << hs << " below hmin at t = " << t;
                throw StepSizeUnderflow(os.str());
            }
            ys = y + hs * a21 * k1;
            rhs(t + c2 * hs, ys, k2);
            ys = y + hs * (a31 * k1 + a32 * k2);
            rhs(t + c3 * hs, ys, k3);
            ys = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
            rhs(t + c4 * hs, ys, k4);
            ys = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            rhs(t + c5 * hs, ys, k5);
            ys = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            const double tn = last ? tend : t + hs;
            rhs(tn, ys, k6);
            y1 = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            rhs(tn, y1, k7);
            st.rhs_evals += 6;

            const Vec err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double en = wrms(err, weights(y, y1, cfg));
            if (!std::isfinite(en) || !y1.allFinite())
                en = 1e10;
            const double fac11 = std::pow(std::max(en, 1e-300), expo1);
            if (en <= 1.0) {
                double ratio = safe / (fac11 / std::pow(facold, beta));
                ratio = std::clamp(ratio, 0.1, 5.0);
                if (reject)
                    ratio = std::min(ratio, 1.0);
                facold = std::max(en, 1e-4);
                ++st.accepted;
                const double ta = t;
                rec.step(ta, tn, y1, [&](double th) {
                    const Vec r2 = y1 - y;
                    const Vec r3 = hs * k1 - r2;
                    const Vec r4 = r2 - hs * k7 - r3;
                    const Vec r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                    const double th1 = 1.0 - th;
                    return Vec(y + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))));
                });
                y = y1;
                k1 = k7;
                t = tn;
                h = hs * ratio;
                reject = false;
            } else {
                ++st.rejected;
                h = hs * std::max(0.1, safe / fac11);
                reject = true;
                if (h < cfg.hmin) {
                    std::ostringstream os;
                    os << "step size " << h << " below hmin at t = " << t;
                    throw StepSizeUnderflow(os.str());
                }
            }
        }
    }
    rec.finish(t1, y);
    Trajectory tr = rec.take();
    st.wall_s = std::chrono::duration<double>(Clock::now() - wall0).count();
    tr.stats = st;
    return tr;
}

// ---- Radau IIA, 3 stages, order 5, stiffly accurate, L-stable ---------------

namespace {

constexpr int S = 3;
const double SQ6 = std::sqrt(6.0);
const double C[S] = {(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0};
const double A[S][S] = {
    {(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0},
    {(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0},
    {(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0},
};
// embedded estimate: err = (g0/h - J)^-1 (f0 + sum D_i Z_i / h)
const double D[S] = {-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0};
const double G0 = 30.0 / (6.0 + std::cbrt(81.0) - std::cbrt(9.0)); // real eigenvalue of A^-1

Mat fd_jac(const Rhs& rhs, double t, const Vec& y, const Vec& fy, SolverStats& st) {
    const int n = int(y.size());
    Mat J(n, n);
    Vec yp = y, fp(n);
    const double sq = std::sqrt(2.2e-16);
    for (int j = 0; j < n; ++j) {
        const double d = sq * std::max(std::abs(y[j]), 1e-5);
        yp[j] = y[j] + d;
        rhs(t, yp, fp);
        yp[j] = y[j];
        J.col(j) = (fp - fy) / d;
    }
    st.jac_rhs_evals += n;
    return J;
}

// collocation polynomial through (0, 0), (c_i, Z_i), evaluated at s (units of the step)
Vec colloc(const Vec (&Z)[S], double s) {
    const double nodes[S + 1] = {0.0, C[0], C[1], C[2]};
    Vec out = Vec::Zero(Z[0].size());
    for (int i = 1; i <= S; ++i) {
        double l = 1.0;
        for (int j = 0; j <= S; ++j)
            if (j != i)
                l *= (s - nodes[j]) / (nodes[i] - nodes[j]);
        out += l * Z[i - 1];
    }
    return out;
}

} // namespace

Trajectory integrate_stiff(const Rhs& rhs, const JacFn& jac, const Vec& y0, double t0, double t1,
                           const SolverConfig& cfg, EventSchedule events,
                           const std::vector<double>& t_eval) {
    cfg.validate();
    check_span(y0, t0, t1);
    const int n = int(y0.size());
    Recorder rec(t_eval, n, t0, t1);
    SolverStats st;
    const auto ends = segment_ends(events, t0, t1);
    const auto wall0 = Clock::now();

    constexpr double kappa = 0.03;
    constexpr int max_newton = 7;
    constexpr int jac_every = 20;

    double t = t0;
    Vec y = y0;
    Vec fn(n), fy(n);
    Mat J;
    bool jac_fresh = false;
    long jac_age = 0;
    Eigen::PartialPivLU<Mat> lu, lu_e;
    double lu_h = -1.0;
    Vec Z[S], Zp[S], F[S];
    for (int i = 0; i < S; ++i) {
        Z[i].resize(n);
        F[i].resize(n);
    }
    bool have_prev = false;
    double h_prev = 0.0;
    rec.start(t, y);

    double h = cfg.h0;
    auto refresh_jac = [&]() {
        if (jac) {
            J = jac(t, y);
        } else {
            Vec f0(n);
            rhs(t, y, f0);
            ++st.jac_rhs_evals;
            J = fd_jac(rhs, t, y, f0, st);
        }
        ++st.jac_evals;
        jac_fresh = true;
        jac_age = 0;
        lu_h = -1.0;
    };
    auto factor = [&](double hs) {
        Mat M = Mat::Identity(S * n, S * n);
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j)
                M.block(i * n, j * n, n, n) -= hs * A[i][j] * J;
        lu.compute(M);
        Mat E = -J;
        E.diagonal().array() += G0 / hs;
        lu_e.compute(E);
        st.factorizations += 2;
        lu_h = hs;
    };

    for (double tend : ends) {
        rhs(t, y, fn);
        ++st.rhs_evals;
        if (!(h > 0.0))
            h = initial_step(rhs, t, y, fn, tend - t, cfg, st);
        if (J.size() == 0)
            refresh_jac();
        have_prev = false;
        bool reject = false, first = true;
        while (t < tend) {
            if (st.accepted + st.rejected >= cfg.max_steps)
                throw MaxStepsExceeded("stiff solver exceeded max_steps");
            bool last = false;
            double hs = std::min(h, cfg.hmax);
            if (t + 1.01 * hs >= tend) {
                hs = tend - t;
                last = true;
            }
            if (hs < cfg.hmin && !last) {
                std::ostringstream os;
                os << "step size " << hs << " below hmin at t = " << t;
                throw StepSizeUnderflow(os.str());
            }
            if (lu_h != hs)
                factor(hs);

            // starting values from the previous collocation polynomial
            for (int i = 0; i < S; ++i) {
                if (have_prev)
                    Z[i] = colloc(Zp, 1.0 + C[i] * hs / h_prev) - Zp[S - 1];
                else
                    Z[i].setZero();
            }
            const Vec sk = (cfg.atol + cfg.rtol * y.cwiseAbs().array()).matrix();
            bool conv = false;
            double dold = 0.0, eta = 1.0;
            Vec R(S * n);
            for (int k = 0; k < max_newton; ++k) {
                bool finite = true;
                for (int i = 0; i < S; ++i) {
                    rhs(t + C[i] * hs, Vec(y + Z[i]), F[i]);
                    finite = finite && F[i].allFinite();
                }
                st.rhs_evals += S;
                ++st.newton_iters;
                if (!finite)
                    break;
                for (int i = 0; i < S; ++i) {
                    Vec r = -Z[i];
                    for (int j = 0; j < S; ++j)
                        r += hs * A[i][j] * F[j];
                    R.segment(i * n, n) = r;
                }
                const Vec dZ = lu.solve(R);
                double d = 0.0;
                for (int i = 0; i < S; ++i) {
                    Z[i] += dZ.segment(i * n, n);
                    d = std::max(d, wrms(dZ.segment(i * n, n), sk));
                }
                if (k > 0) {
                    const double theta = d / std::max(dold, 1e-300);
                    if (theta >= 0.99)
                        break;
                    eta = theta / (1.0 - theta);
                    if (std::pow(theta, max_newton - 1 - k) / (1.0 - theta) * d > kappa)
                        break; // would not converge in time
                } else {
                    eta = std::max(eta, 1e-2);
                }
                if (eta * d <= kappa || d <= 1e-14) {
                    conv = true;
                    break;
                }
                dold = d;
            }
            for (int i = 0; i < S && conv; ++i)
                conv = Z[i].allFinite();
            if (!conv) {
                ++st.newton_failures;
                ++st.rejected;
                if (!jac_fresh) {
                    refresh_jac();
                } else {
                    h = hs * 0.5;
                    if (h < cfg.hmin)
                        throw NewtonDivergence("stiff solver Newton iteration failed at minimum step");
                }
                continue;
            }

            const Vec ynew = y + Z[S - 1];
            Vec f2 = Vec::Zero(n);
            for (int i = 0; i < S; ++i)
                f2 += (D[i] / hs) * Z[i];
            Vec err = lu_e.solve(fn + f2);
            const Vec w = weights(y, ynew, cfg);
            double en = wrms(err, w);
            if (en >= 1.0 && (first || reject)) {
                // second filter against stiff overestimates
                Vec f1(n);
                rhs(t, Vec(y + err), f1);
                ++st.rhs_evals;
                err = lu_e.solve(f1 + f2);
                en = wrms(err, w);
            }
            if (!std::isfinite(en))
                en = 1e10;
            double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.25);
            fac = std::clamp(fac, 0.1, 5.0);
            if (en <= 1.0) {
                ++st.accepted;
                const double tn = last ? tend : t + hs;
                const Vec ybase = y;
                rec.step(t, tn, ynew, [&](double th) { return Vec(ybase + colloc(Z, th)); });
                for (int i = 0; i < S; ++i)
                    Zp[i] = Z[i];
                have_prev = true;
                h_prev = hs;
                y = ynew;
                t = tn;
                rhs(t, y, fn);
                ++st.rhs_evals;
                jac_fresh = false;
                first = false;
                if (reject)
                    fac = std::min(fac, 1.0);
                // hold the step (and the factorisation) on small changes
                if (!(fac >= 1.0 && fac <= 1.2))
                    h = hs * fac;
                else
                    h = hs;
                reject = false;
                if (++jac_age >= jac_every && t < tend)
                    refresh_jac();
            } else {
                ++st.rejected;
                reject = true;
                h = hs * std::min(fac, 0.9);
                if (h < cfg.hmin) {
                    std::ostringstream os;
                    os << "step size " << h << " below hmin at t = " << t;
                    throw StepSizeUnderflow(os.str());
                }
            }
        }
        J.resize(0, 0); // the rhs may jump at the breakpoint
    }
    rec.finish(t1, y);
    Trajectory tr = rec.take();
    st.wall_s = std::chrono::duration<double>(Clock::now() - wall0).count();
    tr.stats = st;
    return tr;
}

Trajectory integrate(const Rhs& rhs, const Vec& y0, double t0, double t1, const SolverConfig& cfg,
                     EventSchedule events, const std::vector<double>& t_eval, const JacFn& jac) {
    if (cfg.method == Method::ExplicitRK45)
        return integrate_explicit(rhs, y0, t0, t1, cfg, std::move(events), t_eval);
    return integrate_stiff(rhs, jac, y0, t0, t1, cfg, std::move(events), t_eval);
}

Trajectory integrate_coupled(const SingularSystem& sys, const Vec& x0, const Vec& z0,
                             const InputSignal& u, double t0, double t1, const SolverConfig& cfg,
                             EventSchedule events, const std::vector<double>& t_eval,
                             const Vec& eps) {
    sys.validate();
    const Vec e = eps.size() ? eps : sys.eps;
    if (x0.size() != sys.n || z0.size() != sys.m || e.size() != sys.m)
        throw DimensionError("integrate_coupled: dimension mismatch");
    if (u.dim() != sys.p)
        throw DimensionError("integrate_coupled: input dimension mismatch");
    const int n = sys.n, m = sys.m;
    const Vec inv_e = e.cwiseInverse();
    Rhs rhs = [&](double t, const Vec& y, Vec& dy) {
        const Vec x = y.head(n), z = y.tail(m), uu = u.at(t);
        dy.head(n) = sys.f(x, z, uu, e);
        dy.tail(m) = sys.g(x, z, uu, e).cwiseProduct(inv_e);
    };
    for (double b : u.breakpoints())
        events.breakpoints.push_back(b);
    Vec y0(n + m);
    y0 << x0, z0;
    Trajectory tr = integrate(rhs, y0, t0, t1, cfg, std::move(events), t_eval);
    tr.labels = sys.labels();
    return tr;
}

} // namespace lsor
