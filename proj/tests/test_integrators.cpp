#include <doctest.h>

#include <cmath>

#include "lsor/builtin.hpp"
#include "lsor/integrators.hpp"

using namespace lsor;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

SolverConfig tol(double rtol, double atol, Method m = Method::ExplicitRK45) {
    SolverConfig c;
    c.rtol = rtol;
    c.atol = atol;
    c.method = m;
    return c;
}

const Rhs decay = [](double, const Vec& y, Vec& dy) { dy = -y; };
const JacFn decay_jac = [](double, const Vec& y) { return Mat(-Mat::Identity(y.size(), y.size())); };

// y' = -1e3 (y - cos t), y(0) = 0
const Rhs forced = [](double t, const Vec& y, Vec& dy) { dy = v1(-1e3 * (y(0) - std::cos(t))); };
const JacFn forced_jac = [](double, const Vec&) { return Mat(Mat::Constant(1, 1, -1e3)); };
constexpr double kForced1 = 0.5411432357097119;

} // namespace

TEST_CASE("exponential decay") {
    const auto e = integrate_explicit(decay, v1(1), 0.0, 1.0, tol(1e-8, 1e-10));
    CHECK(std::abs(e.back()(0) - std::exp(-1.0)) < 1e-6);
    CHECK(e.times.front() == 0.0);
    CHECK(e.times.back() == 1.0);
    const auto s = integrate_stiff(decay, decay_jac, v1(1), 0.0, 1.0, tol(1e-8, 1e-10, Method::ImplicitStiff));
    CHECK(std::abs(s.back()(0) - 0.3678794) < 1e-5);
    // no Jacobian: finite differences
    const auto s2 = integrate_stiff(decay, nullptr, v1(1), 0.0, 1.0, tol(1e-8, 1e-10, Method::ImplicitStiff));
    CHECK(std::abs(s2.back()(0) - std::exp(-1.0)) < 1e-5);
    CHECK(s2.stats.jac_rhs_evals > 0);
}

TEST_CASE("harmonic oscillator energy over ten periods") {
    Rhs osc = [](double, const Vec& y, Vec& dy) {
        dy.resize(2);
        dy << y(1), -y(0);
    };
    Vec y0(2);
    y0 << 1, 0;
    const auto tr = integrate_explicit(osc, y0, 0.0, 20 * M_PI, tol(1e-9, 1e-12));
    const double E = tr.back().squaredNorm();
    CHECK(std::abs(E - 1.0) <= 1e-5);
}

TEST_CASE("forced stiff problem: cross-solver agreement and step counts") {
    const auto e = integrate_explicit(forced, v1(0), 0.0, 1.0, tol(1e-6, 1e-8));
    const auto s = integrate_stiff(forced, forced_jac, v1(0), 0.0, 1.0, tol(1e-6, 1e-8, Method::ImplicitStiff));
    CHECK(std::abs(e.back()(0) - s.back()(0)) < 1e-4);
    CHECK(std::abs(s.back()(0) - kForced1) < 1e-4);
    // the explicit count is stability-bound, so the gap is widest at moderate tolerance
    const auto e4 = integrate_explicit(forced, v1(0), 0.0, 1.0, tol(1e-4, 1e-6));
    const auto s4 = integrate_stiff(forced, forced_jac, v1(0), 0.0, 1.0, tol(1e-4, 1e-6, Method::ImplicitStiff));
    CHECK(e4.stats.accepted >= 10 * s4.stats.accepted);
    CHECK(std::abs(e4.back()(0) - s4.back()(0)) < 1e-4);
}

TEST_CASE("linear stiff 2x2 against the matrix exponential") {
    Mat A(2, 2);
    A << -1, 1, 0, -1e4;
    Rhs rhs = [&](double, const Vec& y, Vec& dy) { dy = A * y; };
    JacFn jac = [&](double, const Vec&) { return A; };
    Vec y0(2);
    y0 << 1, 1;
    const std::vector<double> te{1e-3, 1.0};
    const auto tr = integrate_stiff(rhs, jac, y0, 0.0, 1.0, tol(1e-8, 1e-10, Method::ImplicitStiff), {}, te);
    REQUIRE(tr.size() == 2);
    CHECK(std::abs(tr.states(0, 0) - 0.9991004053339154) < 1e-6);
    CHECK(std::abs(tr.states(0, 1) - 4.5399929762484854e-05) < 1e-6);
    CHECK(std::abs(tr.states(1, 0) - 0.3679162327947218) < 1e-6);
    CHECK(std::abs(tr.states(1, 1)) < 1e-6);
}

TEST_CASE("coupled LTS-1 against the matrix exponential") {
    const auto s = builtin::lts1(0.1);
    for (Method m : {Method::ExplicitRK45, Method::ImplicitStiff}) {
        const auto tr = integrate_coupled(s, v1(1), v1(0), InputSignal(Vec()), 0.0, 1.0, tol(1e-9, 1e-11, m));
        CHECK(std::abs(tr.back()(0) - 0.36240069913946277) < 1e-6);
        CHECK(std::abs(tr.back()(1) - 0.39826881506253503) < 1e-6);
    }
    // eps argument overrides the system coefficients
    const auto tr = integrate_coupled(builtin::lts1(0.5), v1(1), v1(2), InputSignal(Vec()), 0.0, 0.5,
                                      tol(1e-10, 1e-12), {}, {}, v1(0.1));
    CHECK(std::abs(tr.back()(0) - 0.693277836430791) < 1e-7);
    CHECK(std::abs(tr.back()(1) - 0.765430111206059) < 1e-7);
}

TEST_CASE("tiny eps: explicit stalls or takes far more steps") {
    const auto s = builtin::lts1(1e-6);
    const auto st = integrate_coupled(s, v1(1), v1(0), InputSignal(Vec()), 0.0, 1.0,
                                      tol(1e-6, 1e-8, Method::ImplicitStiff));
    SolverConfig ec = tol(1e-6, 1e-8);
    ec.max_steps = 200 * st.stats.accepted;
    bool stalled = false;
    long steps = 0;
    try {
        steps = integrate_coupled(s, v1(1), v1(0), InputSignal(Vec()), 0.0, 1.0, ec).stats.accepted;
    } catch (const StepSizeUnderflow&) {
        stalled = true;
    } catch (const MaxStepsExceeded&) {
        stalled = true;
    }
    CHECK((stalled || steps >= 100 * st.stats.accepted));
}

TEST_CASE("starting on the slow manifold keeps z - h = O(eps)") {
    for (double eps : {0.02, 0.01}) {
        const auto s = builtin::lts1(eps);
        const auto tr = integrate_coupled(s, v1(1), v1(1), InputSignal(Vec()), 0.0, 5.0, tol(1e-10, 1e-12));
        double worst = 0;
        for (int k = 0; k < tr.size(); ++k) worst = std::max(worst, std::abs(tr.states(k, 1) - tr.states(k, 0)));
        // z - x starts at 0 and is driven by eps * x'
        CHECK(worst <= 2.0 * eps);
        CHECK(worst > 0.1 * eps);
    }
}

TEST_CASE("breakpoints land exactly and the state is continuous") {
    InputSignal u(v1(0.0));
    u.add(0.37, v1(1.0));
    Rhs rhs = [&](double t, const Vec& y, Vec& dy) { dy = -y + u.at(t); };
    EventSchedule ev;
    ev.breakpoints = {0.37, 5.0, -1.0, 0.37};
    for (Method m : {Method::ExplicitRK45, Method::ImplicitStiff}) {
        const auto tr = integrate(rhs, v1(0), 0.0, 1.0, tol(1e-9, 1e-12, m), ev, {}, decay_jac);
        int hits = 0;
        for (double t : tr.times) hits += t == 0.37;
        CHECK(hits >= 1);
        for (size_t k = 1; k < tr.times.size(); ++k) CHECK(tr.times[k] >= tr.times[k - 1]);
        // exact solution 1 - exp(-(t - 0.37)) after the step
        CHECK(std::abs(tr.back()(0) - (1 - std::exp(-0.63))) < 1e-7);
    }
    EventSchedule n = ev;
    n.normalize(0.0, 1.0);
    CHECK(n.breakpoints == std::vector<double>{0.37});
}

TEST_CASE("dense output on t_eval") {
    const auto grid = uniform_grid(0.0, 2.0, 21);
    CHECK(grid.size() == 21);
    CHECK(grid[10] == doctest::Approx(1.0));
    const auto tr = integrate_explicit(decay, v1(1), 0.0, 2.0, tol(1e-10, 1e-12), {}, grid);
    REQUIRE(tr.size() == 21);
    for (int k = 0; k < 21; ++k) {
        CHECK(tr.times[k] == grid[k]);
        CHECK(std::abs(tr.states(k, 0) - std::exp(-grid[k])) < 1e-8);
    }
}

TEST_CASE("observed order of the explicit pair") {
    // fixed steps: loose tolerances never reject, hmax sets h
    std::vector<double> hs, errs;
    for (int N : {8, 16, 32, 64}) {
        SolverConfig c = tol(1.0, 1.0);
        c.h0 = c.hmax = 1.0 / N;
        const auto tr = integrate_explicit(decay, v1(1), 0.0, 1.0, c);
        CHECK(tr.stats.rejected == 0);
        hs.push_back(1.0 / N);
        errs.push_back(std::abs(tr.back()(0) - std::exp(-1.0)));
    }
    for (size_t i = 1; i < hs.size(); ++i) {
        const double order = std::log(errs[i - 1] / errs[i]) / std::log(hs[i - 1] / hs[i]);
        CHECK(order >= 4.0);
    }
}

TEST_CASE("tighter rtol never increases the error") {
    Rhs osc = [](double, const Vec& y, Vec& dy) {
        dy.resize(2);
        dy << y(1), -y(0);
    };
    Vec y0(2);
    y0 << 1, 0;
    for (Method m : {Method::ExplicitRK45, Method::ImplicitStiff}) {
        double prev = INFINITY;
        for (double r : {1e-4, 1e-6, 1e-8}) {
            const auto de = integrate(decay, v1(1), 0.0, 3.0, tol(r, r * 1e-2, m), {}, {}, decay_jac);
            const double err = std::abs(de.back()(0) - std::exp(-3.0));
            CHECK(err <= prev);
            prev = err;
        }
    }
}

TEST_CASE("stats bookkeeping") {
    SolverConfig c = tol(1e-7, 1e-9);
    const auto tr = integrate_explicit(forced, v1(0), 0.0, 0.2, c);
    // six stages per attempt (FSAL), one per segment start, one for the initial step guess
    CHECK(tr.stats.rhs_evals == 6 * (tr.stats.accepted + tr.stats.rejected) + 2);
    EventSchedule ev;
    ev.breakpoints = {0.05, 0.1};
    const auto t2 = integrate_explicit(forced, v1(0), 0.0, 0.2, c, ev);
    CHECK(t2.stats.rhs_evals == 6 * (t2.stats.accepted + t2.stats.rejected) + 3 + 1);
    CHECK(t2.stats.wall_s >= 0.0);
    CHECK(t2.size() == int(t2.stats.accepted) + 1);
}

TEST_CASE("determinism") {
    const auto s = builtin::nls1(0.05);
    const InputSignal u(v1(0.5));
    for (Method m : {Method::ExplicitRK45, Method::ImplicitStiff}) {
        const auto a = integrate_coupled(s, v1(2), v1(0), u, 0.0, 2.0, tol(1e-8, 1e-10, m));
        const auto b = integrate_coupled(s, v1(2), v1(0), u, 0.0, 2.0, tol(1e-8, 1e-10, m));
        CHECK(a.times == b.times);
        CHECK(a.states == b.states);
        CHECK(a.stats.accepted == b.stats.accepted);
    }
}

TEST_CASE("configuration errors") {
    SolverConfig c;
    c.rtol = -1;
    CHECK_THROWS(integrate_explicit(decay, v1(1), 0.0, 1.0, c));
    CHECK(parse_method("stiff") == Method::ImplicitStiff);
    CHECK(parse_method("explicit") == Method::ExplicitRK45);
    CHECK_THROWS(parse_method("euler"));
    SolverConfig m = tol(1e-10, 1e-12);
    m.max_steps = 5;
    CHECK_THROWS_AS(integrate_explicit(forced, v1(0), 0.0, 1.0, m), MaxStepsExceeded);
    SolverConfig h = tol(1e-10, 1e-12);
    h.hmin = 0.1;
    CHECK_THROWS_AS(integrate_explicit(forced, v1(0), 0.0, 1.0, h), StepSizeUnderflow);
}
