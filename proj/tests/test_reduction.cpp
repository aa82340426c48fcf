#include <doctest.h>

#include <cmath>

#include "lsor/builtin.hpp"
#include "lsor/integrators.hpp"
#include "lsor/microgrid.hpp"
#include "lsor/reduction.hpp"

using namespace lsor;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Vec vec(std::initializer_list<double> xs) {
    Vec v(int(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

// every accepted solve must satisfy the residual contract
Vec checked_solve(QssMap& q, const Vec& x, const Vec& u, const Vec& guess) {
    const Vec z = q.solve(x, u, guess);
    CHECK(q.residual(x, z, u) <= q.options().residual_tol);
    return z;
}

} // namespace

TEST_CASE("identify_partition") {
    const auto p = identify_partition(vec({0.02, 0.03, 1e-4, 5e-5}), 10.0);
    CHECK(p.slow == std::vector<int>{0, 1});
    CHECK(p.fast == std::vector<int>{2, 3});
    CHECK(p.observed_gap == doctest::Approx(200.0));
    CHECK_THROWS_AS(identify_partition(vec({0.01, 0.01, 0.01}), 10.0), NoTimeScaleSeparation);
    CHECK_THROWS_AS(identify_partition(vec({0.01, 0.005}), 10.0), NoTimeScaleSeparation);
    CHECK_THROWS(identify_partition(vec({0.01, -1.0}), 10.0));
    CHECK_THROWS(identify_partition(vec({0.01, 1e-4}), 1.0));
}

TEST_CASE("grid-tied DER coefficients split 8 slow / 7 fast") {
    const DerVec c = der_coefficients(DerParams{}, Mode::GridTied);
    const auto p = identify_partition(c, 10.0);
    CHECK(p.slow.size() == 8);
    CHECK(p.fast.size() == 7);
    CHECK(p.slow == std::vector<int>{der::P, der::Q, der::Phi_PLL, der::delta, der::Phi_1, der::Phi_2,
                                     der::Gamma_d, der::Gamma_q});
}

TEST_CASE("partition invariants and idempotence") {
    const Vec c = vec({3e-3, 0.5, 2e-6, 1.0, 7e-5, 0.05, 1e-6});
    const auto p = identify_partition(c, 10.0);
    std::vector<int> all = p.slow;
    all.insert(all.end(), p.fast.begin(), p.fast.end());
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    double min_slow = INFINITY;
    for (int i : p.slow) min_slow = std::min(min_slow, c(i));
    for (int i : p.fast) CHECK(c(i) <= min_slow / 10.0);

    // concatenating slow then fast keeps the split
    Vec reordered(c.size());
    int k = 0;
    for (int i : p.slow) reordered(k++) = c(i);
    for (int i : p.fast) reordered(k++) = c(i);
    const auto q = identify_partition(reordered, 10.0);
    CHECK(q.slow.size() == p.slow.size());
    for (size_t i = 0; i < q.slow.size(); ++i) CHECK(q.slow[i] == int(i));
}

TEST_CASE("QSS solve on NLS-1") {
    QssMap q(builtin::nls1(0.1));
    CHECK(std::abs(checked_solve(q, v1(0), v1(0), v1(0.3))(0)) < 1e-9);
    CHECK(checked_solve(q, v1(2), v1(0), v1(0.0))(0) == doctest::Approx(1.0).epsilon(1e-9));
    // bisection oracle on z + z^3 = 5
    CHECK(checked_solve(q, v1(5), v1(0), v1(0.0))(0) == doctest::Approx(1.5159802276928206).epsilon(1e-6));
    // continuation from the cached solution
    const Vec z = q.solve(v1(5.1), v1(0));
    CHECK(q.residual(v1(5.1), z, v1(0)) <= 1e-9);
    CHECK(q.last()(0) == z(0));
}

TEST_CASE("QSS failures") {
    SingularSystem s = builtin::lts1(0.1);
    s.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(x - z.array().cube().matrix()); };
    QssMap q(s);
    // dg/dz = -3 z^2 vanishes at the guess
    CHECK_THROWS_AS(q.solve(v1(1), Vec(), v1(0)), SingularJacobian);

    QssOptions opt;
    opt.max_iter = 2;
    QssMap r(builtin::nls1(0.1), opt);
    CHECK_THROWS_AS(r.solve(v1(1000), v1(0), v1(0)), NewtonDivergence);
}

TEST_CASE("ROM right-hand sides") {
    auto q = std::make_shared<QssMap>(builtin::lts1(0.1));
    auto rom = build_rom(q->system(), q);
    CHECK(rom.dim() == 1);
    for (double x : {-2.0, 0.5, 3.0}) CHECK(rom.rhs(v1(x), Vec())(0) == doctest::Approx(-x));

    auto qn = std::make_shared<QssMap>(builtin::nls1(0.1));
    auto romn = build_rom(qn->system(), qn);
    qn->seed(v1(1.0));
    CHECK(romn.rhs(v1(2), v1(0))(0) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(romn.fast(v1(2), v1(0))(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("BLM right-hand sides") {
    auto q = std::make_shared<QssMap>(builtin::lts1(0.1));
    auto blm = build_blm(q->system(), q);
    for (double y : {-1.0, 0.25, 2.0}) CHECK(blm.rhs(v1(y), v1(1.7), Vec())(0) == doctest::Approx(-y));

    auto qn = std::make_shared<QssMap>(builtin::nls1(0.1));
    auto blmn = build_blm(qn->system(), qn);
    qn->seed(v1(1.0));
    CHECK(std::abs(blmn.rhs(v1(0), v1(2), v1(0))(0)) <= 1e-9);
    CHECK(blmn.rhs(v1(-1), v1(2), v1(0))(0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(blmn.dim() + build_rom(qn->system(), qn).dim() == 2);
}

TEST_CASE("BLM time scale follows eps ratios") {
    SingularSystem s;
    s.n = 1;
    s.m = 2;
    s.f = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(-x + z.head(1)); };
    s.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(Vec::Constant(2, x(0)) - z); };
    s.eps = vec({0.1, 0.025});
    auto q = std::make_shared<QssMap>(s);
    auto blm = build_blm(s, q);
    CHECK(blm.time_scale()(0) == doctest::Approx(1.0));
    CHECK(blm.time_scale()(1) == doctest::Approx(4.0));
    const Vec r = blm.rhs(vec({1.0, 1.0}), v1(0.5), Vec());
    CHECK(r(0) == doctest::Approx(-1.0));
    CHECK(r(1) == doctest::Approx(-4.0));
}

TEST_CASE("exact y-dynamics") {
    const auto s = builtin::lts1(0.1);
    QssMap q(s);
    CHECK(eval_y_dynamics(s, q, v1(2), v1(1), Vec(), Vec(), s.eps)(0) == doctest::Approx(-0.9));
    CHECK(eval_y_dynamics(s, q, v1(1), v1(0), Vec(), Vec(), s.eps)(0) == doctest::Approx(0.1));

    const auto n = builtin::nls1(0.1);
    QssMap qn(n);
    auto qp = std::make_shared<QssMap>(n);
    auto blm = build_blm(n, qp);
    qn.seed(v1(1.0));
    qp->seed(v1(1.0));
    const Vec a = eval_y_dynamics(n, qn, v1(2), v1(-0.3), v1(0.4), v1(0), Vec::Zero(1));
    const Vec b = blm.rhs(v1(-0.3), v1(2), v1(0.4));
    CHECK(a(0) == doctest::Approx(b(0)).epsilon(1e-9));
}

TEST_CASE("(x, y) integration agrees with (x, z)") {
    const auto s = builtin::lts1(0.1);
    const double eps = 0.1;
    QssMap q(s);
    SolverConfig cfg;
    cfg.rtol = 1e-10;
    cfg.atol = 1e-12;
    const std::vector<double> grid = uniform_grid(0.0, 2.0, 41);
    const Trajectory xz = integrate_coupled(s, v1(1), v1(0), InputSignal(Vec()), 0.0, 2.0, cfg, {}, grid);
    Rhs rhs = [&](double, const Vec& w, Vec& dw) {
        const Vec x = w.head(1), y = w.tail(1);
        const Vec h = q.solve(x, Vec(), x);
        dw.resize(2);
        dw(0) = eval_f(s, x, y + h, Vec(), s.eps)(0);
        dw(1) = eval_y_dynamics(s, q, x, y, Vec(), Vec(), s.eps)(0) / eps;
    };
    const Trajectory xy = integrate(rhs, vec({1.0, -1.0}), 0.0, 2.0, cfg, {}, grid);
    for (int k = 0; k < xz.size(); ++k) {
        CHECK(xy.states(k, 0) == doctest::Approx(xz.states(k, 0)).epsilon(1e-7));
        CHECK(xy.states(k, 1) + xy.states(k, 0) == doctest::Approx(xz.states(k, 1)).epsilon(1e-7));
    }
}

TEST_CASE("small-signal baseline") {
    const auto s = builtin::lts1(0.1);
    const LinearRom lin = baseline_small_signal(s, v1(0), v1(0), Vec());
    CHECK(lin.A(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(lin.Kx(0, 0) == doctest::Approx(1.0).epsilon(1e-8));

    // h'(0) = 1/(1 + 3 * 0^2) = 1, so A = -1 + 1 = 0 and B = 1
    const auto n = builtin::nls1(0.1);
    const LinearRom ln = baseline_small_signal(n, v1(0), v1(0), v1(0));
    CHECK(std::abs(ln.A(0, 0)) < 1e-7);
    CHECK(ln.B(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(ln.Ku(0, 0) == doctest::Approx(0.0).epsilon(1e-8));

    CHECK_THROWS_AS(baseline_small_signal(n, v1(1), v1(0), v1(0)), NotAnEquilibrium);

    SingularSystem c = builtin::lts1(0.1);
    c.f = [](const Vec&, const Vec& z, const Vec&, const Vec&) { return Vec(z); };
    c.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(x - z.array().cube().matrix()); };
    CHECK_THROWS_AS(baseline_small_signal(c, v1(0), v1(0), Vec()), SingularFastBlock);
}
