#include <doctest.h>

#include <cmath>

#include "lsor/assessment.hpp"
#include "lsor/builtin.hpp"
#include "lsor/integrators.hpp"

using namespace lsor;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

// x' = a x + b u (+ 0 z), z'= -z: the ROM is x' = a x + b u
SingularSystem scalar_rom(double a, double b) {
    SingularSystem s;
    s.n = 1;
    s.m = 1;
    s.p = 1;
    s.f = [a, b](const Vec& x, const Vec&, const Vec& u, const Vec&) { return Vec(a * x + b * u); };
    s.g = [](const Vec&, const Vec& z, const Vec&, const Vec&) { return Vec(-z); };
    s.eps = v1(0.01);
    s.name = "scalar";
    return s;
}

// pure fast system with BLM dy/dtau = sign * y
SingularSystem scalar_blm(double sign) {
    SingularSystem s;
    s.n = 1;
    s.m = 1;
    s.f = [](const Vec& x, const Vec&, const Vec&, const Vec&) { return Vec(-x); };
    s.g = [sign](const Vec&, const Vec& z, const Vec&, const Vec&) { return Vec(sign * z); };
    s.eps = v1(0.01);
    return s;
}

DomainBox box(double mu, int samples = 64, SamplingScheme sch = SamplingScheme::LowDiscrepancy) {
    DomainBox b;
    b.mu = mu;
    b.samples = samples;
    b.scheme = sch;
    return b;
}

} // namespace

TEST_CASE("sampling: centre first, inside the ball, deterministic") {
    for (auto sch : {SamplingScheme::LowDiscrepancy, SamplingScheme::Grid}) {
        const auto b = box(0.7, 50, sch);
        const auto pts = sample_blocks({2, 1, 3}, b);
        // the grid rounds to whole points per axis
        if (sch == SamplingScheme::LowDiscrepancy) CHECK(pts.size() == 50);
        else CHECK(pts.size() == 65);
        CHECK(pts[0].norm() == 0.0);
        for (const auto& p : pts) {
            REQUIRE(p.size() == 6);
            CHECK(p.head(2).norm() <= 0.7 + 1e-12);
            CHECK(p.segment(2, 1).norm() <= 0.7 + 1e-12);
            CHECK(p.tail(3).norm() <= 0.7 + 1e-12);
        }
        const auto again = sample_blocks({2, 1, 3}, b);
        for (size_t i = 0; i < pts.size(); ++i) CHECK(pts[i] == again[i]);
    }
    auto b2 = box(1.0, 16);
    b2.seed = 5;
    CHECK(sample_ball(2, b2)[3] != sample_ball(2, box(1.0, 16))[3]);
    CHECK_THROWS(box(-1.0).validate());
    CHECK(parse_scheme("grid") == SamplingScheme::Grid);
    CHECK(parse_scheme("halton") == SamplingScheme::LowDiscrepancy);
}

TEST_CASE("class-K and class-KL helpers") {
    const KLFunctionExp b{2.0, 0.5};
    CHECK(b(3.0, 0.0) == doctest::Approx(6.0));
    CHECK(b(3.0, 2.0) == doctest::Approx(6.0 * std::exp(-1.0)));
    CHECK(b(1.0, 1.0) < b(2.0, 1.0));
    CHECK(b(1.0, 2.0) < b(1.0, 1.0));
    CHECK(KFunctionLin{3.0}(2.0) == 6.0);
}

TEST_CASE("growth check") {
    const auto g = check_growth(builtin::lts1(0.1), box(10.0));
    CHECK(g.ok);
    CHECK(g.sup_fx == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g.sup_gz == doctest::Approx(1.0).epsilon(1e-6));

    SingularSystem bad = builtin::lts1(0.1);
    bad.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(x.array() / z.array()); };
    const auto r = check_growth(bad, box(1.0));
    CHECK_FALSE(r.ok);
    CHECK(r.offending.find('g') != std::string::npos);
    CHECK(r.witness.size() == 2);
}

TEST_CASE("ROM stability on scalar examples") {
    {
        ReducedModel rom(std::make_shared<QssMap>(scalar_rom(-1, 0)));
        const auto r = check_rom_stability(rom, v1(0), v1(0), box(1.0));
        CHECK(r.exp_stable);
        REQUIRE(r.eigenvalues.size() == 1);
        CHECK(r.eigenvalues[0].real() == doctest::Approx(-1.0).epsilon(1e-8));
    }
    {
        ReducedModel rom(std::make_shared<QssMap>(scalar_rom(1, 0)));
        CHECK_FALSE(check_rom_stability(rom, v1(0), v1(0), box(1.0)).exp_stable);
    }
    {
        // |x| <= |x0| e^-t + sup|u|: gain 2 |B| |P| / lmin(Q) = 2 * 1 * 0.5 / 1
        ReducedModel rom(std::make_shared<QssMap>(scalar_rom(-1, 1)));
        const auto r = check_rom_stability(rom, v1(0), v1(0), box(1.0));
        CHECK(r.iss_gain.gain == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(r.lyap->P(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(r.certified_radius == doctest::Approx(1.0));
    }
    ReducedModel rom(std::make_shared<QssMap>(scalar_rom(-1, 1)));
    CHECK_THROWS_AS(check_rom_stability(rom, v1(0.5), v1(0), box(1.0)), NotAnEquilibrium);
}

TEST_CASE("ROM linearisation by implicit differentiation") {
    QssMap q(builtin::nls1(0.1));
    q.seed(v1(1.0));
    // h'(2) = 1/(1 + 3) so A = -1 + 1/4
    const auto [A, B] = rom_jacobians(q, v1(2), v1(0));
    CHECK(A(0, 0) == doctest::Approx(-0.75).epsilon(1e-7));
    CHECK(B(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("BLM GAS check") {
    {
        BoundaryLayerModel blm(std::make_shared<QssMap>(scalar_blm(-1)));
        const auto r = check_blm_gas(blm, box(1.0));
        CHECK(r.gas);
        CHECK(r.worst_abscissa == doctest::Approx(-1.0).epsilon(1e-6));
    }
    {
        BoundaryLayerModel blm(std::make_shared<QssMap>(scalar_blm(+1)));
        const auto r = check_blm_gas(blm, box(1.0));
        CHECK_FALSE(r.gas);
        CHECK_FALSE(r.reason.empty());
        CHECK(r.witness_x.size() == 1);
    }
    {
        BoundaryLayerModel blm(std::make_shared<QssMap>(builtin::nls1(0.1)));
        CHECK(check_blm_gas(blm, box(5.0, 400, SamplingScheme::Grid)).gas);
    }
    BoundaryLayerModel flipped(std::make_shared<QssMap>(builtin::lts1_flipped(0.1)));
    CHECK_FALSE(check_blm_gas(flipped, box(1.0)).gas);
}

TEST_CASE("beta_y fit on LTS-1") {
    BoundaryLayerModel blm(std::make_shared<QssMap>(builtin::lts1(0.1)));
    SolverConfig cfg;
    cfg.rtol = 1e-9;
    cfg.atol = 1e-11;
    const auto b = fit_beta_y(blm, box(1.0), cfg);
    CHECK(b.lambda == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(b.M >= 1.0);
    CHECK(b.M == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("Lipschitz estimates") {
    auto lin = [](const Vec& x) { return Vec(2.0 * x); };
    CHECK(estimate_lipschitz(lin, 1, box(1.0)) == doctest::Approx(2.0).epsilon(1e-6));
    auto sq = [](const Vec& x) { return Vec(x.array().square()); };
    CHECK(estimate_lipschitz(sq, 1, box(2.0, 101, SamplingScheme::Grid)) == doctest::Approx(4.0).epsilon(1e-5));
    auto sn = [](const Vec& x) { return Vec(x.array().sin()); };
    const double l = estimate_lipschitz(sn, 1, box(M_PI, 201));
    CHECK(l <= 1.0 + 1e-6);
    CHECK(l >= 0.99);
}

TEST_CASE("epsilon double star closed forms") {
    const KLFunctionExp b{1.0, 1.0};
    const auto [e, T] = epsilon_double_star(b, 1.0, 1.0, EpsMode::FixEpsSolveT, 0.1);
    CHECK(e == 0.1);
    CHECK(std::abs(T - 0.23025850929940458) <= 1e-6);
    const auto [e2, T2] = epsilon_double_star(b, 1.0, 1.0, EpsMode::FixTSolveEps, 0.23025850929940458);
    CHECK(std::abs(e2 - 0.1) <= 1e-4);
    CHECK(T2 == doctest::Approx(0.23025850929940458));
    // max over eps of exp(-1/eps)/eps is 1/e < 1
    CHECK_THROWS_AS(epsilon_double_star(b, 1.0, 1.0, EpsMode::FixTSolveEps, 1.0), NoFeasibleEpsilon);
    // eps already below the envelope: no waiting
    CHECK(epsilon_double_star(b, 20.0, 1.0, EpsMode::FixEpsSolveT, 0.1).second == 0.0);
    CHECK_THROWS(epsilon_double_star(b, -1.0, 1.0, EpsMode::FixEpsSolveT, 0.1));
}

TEST_CASE("epsilon star from a hand-built LTS-1 workspace") {
    EstimationWorkspace ws;
    ws.mu = 1.0;
    ws.xi = 0.5;
    ws.c1 = ws.c2 = 0.5;
    ws.c3 = ws.c4 = 1.0;
    ws.l1 = ws.l2 = 0.0;
    ws.l3 = 1.0;
    ws.l4 = 0.0;
    ws.kappa_y = 1.0;
    ws.beta_y = {1.0, 1.0};
    ws.beta_x_hat = {1.0, 1.0};
    ws.la = 1.0;
    ws.lb = 0.0;
    ws.lc = ws.c4 * (ws.l4 + ws.l3 * ws.kappa_y) / (2 * std::sqrt(ws.c1));
    ws.ld = ws.c4 * ws.l3 / (2 * std::sqrt(ws.c1));
    ws.lf = ws.la / (2 * ws.c2);
    ws.le = 1.0;
    ws.eps_bar = 0.1;
    const auto es = epsilon_star(ws);
    CHECK(es.value > 0.0);
    CHECK(es.value == doctest::Approx(std::min({es.e1.value, es.e2.value, es.e3.value})));
    CHECK_FALSE(es.e3.formula.empty());
    // eps_2 = lambda_y / (2 l_f)
    CHECK(es.e2.value == doctest::Approx(1.0 / (2 * ws.lf)));
    // at eps_3 the binding envelope equals xi
    const double e3 = es.e3.value;
    CHECK(std::max(slow_error_bound(ws, e3), ws.kappa_y * e3) == doctest::Approx(ws.xi).epsilon(1e-6));

    EstimationWorkspace bad = ws;
    bad.la = -0.1;
    CHECK_THROWS_AS(epsilon_star(bad), InfeasibleConstants);
}

TEST_CASE("LTS-1: the slow bound holds on a brute-force eps sweep") {
    AssessConfig cfg;
    cfg.box = box(1.0);
    cfg.blm_solver.rtol = 1e-9;
    cfg.blm_solver.atol = 1e-11;
    const auto rep = assess(builtin::lts1(0.1), cfg);
    REQUIRE(rep.verdict == "accepted");
    const auto& ws = *rep.workspace;
    const double es = rep.bounds->eps_star;
    SolverConfig sc;
    sc.rtol = 1e-10;
    sc.atol = 1e-12;
    QssMap q(builtin::lts1(0.1));
    for (double e : {es, es / 2, es / 4, es / 8}) {
        double worst = 0.0;
        // corners of the (x0, y0) box
        for (double x0 : {-1.0, 1.0})
            for (double y0 : {-1.0, 0.0, 1.0}) {
                const auto full = integrate_coupled(builtin::lts1(e), v1(x0), v1(x0 + y0), InputSignal(Vec()),
                                                    0.0, 10.0, sc, {}, uniform_grid(0, 10, 1001));
                for (int k = 0; k < full.size(); ++k)
                    worst = std::max(worst, std::abs(full.states(k, 0) - x0 * std::exp(-full.times[k])));
            }
        CHECK(worst <= slow_error_bound(ws, e));
    }
}

TEST_CASE("log-log slope and error verification") {
    double c = 0;
    CHECK(loglog_slope({0.1, 0.05, 0.025}, {0.3, 0.15, 0.075}, &c) == doctest::Approx(1.0));
    CHECK(c == doctest::Approx(3.0));
    CHECK(loglog_slope({0.1, 0.05, 0.025}, {0.01, 0.0025, 0.000625}) == doctest::Approx(2.0));

    // full run identical to the ROM and on the manifold: every error is 0
    const auto s = builtin::lts1(0.1);
    QssMap q(s);
    Trajectory rom, full, blm;
    rom.times = full.times = blm.times = uniform_grid(0, 1, 11);
    rom.states.resize(11, 1);
    full.states.resize(11, 2);
    blm.states = Mat::Zero(11, 1);
    for (int k = 0; k < 11; ++k) {
        rom.states(k, 0) = std::exp(-rom.times[k]);
        full.states(k, 0) = full.states(k, 1) = rom.states(k, 0);
    }
    const auto st = verify_error_bounds({full, full, full}, rom, {blm, blm, blm}, q, InputSignal(Vec()),
                                        {0.1, 0.05, 0.025}, 0.0);
    // fast errors sit at the QSS residual level
    for (int i = 0; i < 3; ++i) {
        CHECK(st.e_slow[i] == 0.0);
        CHECK(st.e_fast[i] <= q.options().residual_tol);
        CHECK(st.e_fast_T[i] <= q.options().residual_tol);
    }
    Trajectory shorter = rom;
    shorter.times.pop_back();
    shorter.states.conservativeResize(10, 1);
    CHECK_THROWS_AS(verify_error_bounds({full}, shorter, {blm}, q, InputSignal(Vec()), {0.1}, 0.0), GridMismatch);
}

TEST_CASE("fitted tail constant is the smallest that works") {
    const auto s = builtin::lts1(0.1);
    QssMap q(s);
    SolverConfig sc;
    sc.rtol = 1e-10;
    sc.atol = 1e-12;
    const auto grid = uniform_grid(0, 5, 2001);
    const std::vector<double> eps{0.1, 0.05, 0.025};
    std::vector<Trajectory> full;
    for (double e : eps)
        full.push_back(integrate_coupled(builtin::lts1(e), v1(1), v1(2), InputSignal(Vec()), 0, 5, sc, {}, grid));
    Rhs rr = [](double, const Vec& x, Vec& dx) { dx = -x; };
    const auto rom = integrate(rr, v1(1), 0, 5, sc, {}, grid);
    const auto paths = fast_residual_paths(full, rom, q, InputSignal(Vec()));
    const KLFunctionExp by{1.0, 1.0};
    const double k = fit_tail_k(paths, grid, eps, by, 1.0);
    auto holds = [&](double kk) {
        for (size_t i = 0; i < eps.size(); ++i) {
            const double T = epsilon_double_star(by, kk, 1.0, EpsMode::FixEpsSolveT, eps[i]).second;
            for (size_t j = 0; j < grid.size(); ++j)
                if (grid[j] >= T && paths[i][j] > kk * eps[i]) return false;
        }
        return true;
    };
    CHECK(holds(k * (1 + 1e-6)));
    CHECK_FALSE(holds(k * 0.99));
}

TEST_CASE("ISS envelope check") {
    const auto s = builtin::lts1(0.1);
    SolverConfig sc;
    sc.rtol = 1e-10;
    sc.atol = 1e-12;
    const auto grid = uniform_grid(0, 10, 2001);
    const auto tr = integrate_coupled(s, v1(1), v1(0), InputSignal(Vec()), 0, 10, sc, {}, grid);
    const Mat xs = tr.states.leftCols(1);
    const Mat ys = tr.states.rightCols(1) - tr.states.leftCols(1);
    const auto ok = verify_iss_envelope(grid, xs, ys, {1.1, 1.0}, {0.0}, 0.0, {1.1, 0.05}, 0.01, 0.1);
    CHECK(ok.ok);
    const auto bad = verify_iss_envelope(grid, xs, ys, {1.0, 1.0}, {0.0}, 0.0, {1.0, 1.0}, 0.0, 0.1);
    CHECK_FALSE(bad.ok);
    CHECK(std::isfinite(bad.t_violation));
    CHECK_FALSE(bad.which.empty());
    const Mat zero = Mat::Zero(grid.size(), 1);
    CHECK(verify_iss_envelope(grid, zero, zero, {1.0, 1.0}, {0.0}, 0.0, {1.0, 1.0}, 0.0, 0.1).ok);
}

TEST_CASE("full assessment on the builtins") {
    AssessConfig cfg;
    cfg.box = box(1.0);
    const auto a = assess(builtin::lts1(0.1), cfg);
    CHECK(a.growth_ok);
    CHECK(a.rom_stable);
    CHECK(a.blm_gas);
    CHECK(a.verdict == "accepted");
    REQUIRE(a.bounds);
    CHECK(a.bounds->eps_star2 <= a.bounds->eps_star);
    CHECK(a.eps_bar == doctest::Approx(0.1));
    const auto j = to_json(a);
    CHECK(j["norm"] == "2");
    CHECK(j["rom_eigenvalues"][0].size() == 2);
    CHECK(j["bounds"]["eps_1"].contains("formula"));
    // deterministic under a fixed seed
    CHECK(to_json(assess(builtin::lts1(0.1), cfg)).dump() == j.dump());

    const auto f = assess(builtin::lts1_flipped(0.1), cfg);
    CHECK_FALSE(f.blm_gas);
    CHECK(f.verdict == "rejected");
    CHECK(f.failed == "Assumption 3");
    CHECK_FALSE(f.bounds);
}
