#include <doctest.h>

#include <cmath>

#include "lsor/builtin.hpp"
#include "lsor/sysdef.hpp"

using namespace lsor;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Mat jac(const SingularSystem& s, Target t, Wrt w, double x, double z, double u = 0.0) {
    JacobianRequest r;
    r.target = t;
    r.wrt = w;
    r.x = v1(x);
    r.z = v1(z);
    r.u = s.p ? v1(u) : Vec();
    r.eps = s.eps;
    return jacobian(s, r);
}

} // namespace

TEST_CASE("evaluate LTS-1 and NLS-1 at hand points") {
    const auto lts = builtin::lts1(0.1);
    auto [f, g] = evaluate(lts, v1(1), v1(0), Vec(), lts.eps);
    CHECK(f(0) == doctest::Approx(-2.0));
    CHECK(g(0) == doctest::Approx(1.0));

    const auto nls = builtin::nls1(0.1);
    auto [f0, g0] = evaluate(nls, v1(0), v1(0), v1(0), nls.eps);
    CHECK(f0(0) == 0.0);
    CHECK(g0(0) == 0.0);
    auto [f2, g2] = evaluate(nls, v1(2), v1(1), v1(0), nls.eps);
    CHECK(f2(0) == doctest::Approx(-1.0));
    CHECK(g2(0) == doctest::Approx(0.0));
}

TEST_CASE("evaluate rejects wrong dimensions and non-finite output") {
    const auto lts = builtin::lts1(0.1);
    CHECK_THROWS_AS(evaluate(lts, Vec::Zero(2), v1(0), Vec(), lts.eps), DimensionError);

    SingularSystem bad = lts;
    bad.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return Vec(x.array() / z.array()); };
    CHECK_THROWS_AS(evaluate(bad, v1(1), v1(0), Vec(), bad.eps), EvaluationError);
}

TEST_CASE("validate catches bad eps") {
    auto s = builtin::lts1(0.1);
    s.eps = v1(-0.1);
    CHECK_THROWS(s.validate());
    s.eps = Vec::Constant(2, 0.1);
    CHECK_THROWS(s.validate());
}

TEST_CASE("finite-difference Jacobians") {
    const auto lts = builtin::lts1(0.1);
    CHECK(jac(lts, Target::F, Wrt::X, 0.3, -1.2)(0, 0) == doctest::Approx(-2.0).epsilon(1e-8));
    CHECK(jac(lts, Target::G, Wrt::Z, 5.0, 7.0)(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));

    const auto nls = builtin::nls1(0.1);
    CHECK(jac(nls, Target::G, Wrt::Z, 0.0, 0.0)(0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    // -1 - 3 z^2 at z = 2
    CHECK(jac(nls, Target::G, Wrt::Z, 0.0, 2.0)(0, 0) == doctest::Approx(-13.0).epsilon(1e-6));
    CHECK(jac(nls, Target::F, Wrt::U, 0.0, 2.0, 0.5)(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("fd_jacobian on a linear map is exact to 1e-8") {
    Mat A(3, 2);
    A << 1, -2, 3.5, 0.25, -7, 11;
    const Mat J = fd_jacobian([&](const Vec& p) { return Vec(A * p); }, Vec::Constant(2, 0.7));
    CHECK((J - A).norm() / A.norm() < 1e-8);
}

TEST_CASE("evaluate is pure") {
    const auto nls = builtin::nls1(0.1);
    const Vec x = v1(0.123456789), z = v1(-1.987654321), u = v1(0.5);
    const auto a = evaluate(nls, x, z, u, nls.eps);
    const auto b = evaluate(nls, x, z, u, nls.eps);
    CHECK(a.first(0) == b.first(0));
    CHECK(a.second(0) == b.second(0));
}

TEST_CASE("InputSignal lookup") {
    InputSignal u(v1(1.0));
    u.add(2.0, v1(3.0));
    u.add(4.0, v1(-1.0));
    CHECK(u.at(0.0)(0) == 1.0);
    CHECK(u.at(1.999)(0) == 1.0);
    CHECK(u.at(2.0)(0) == 3.0); // right-hand value at the breakpoint
    CHECK(u.at(3.5)(0) == 3.0);
    CHECK(u.at(100.0)(0) == -1.0);
    CHECK(u.derivative(3.0)(0) == 0.0);
    CHECK(u.breakpoints() == std::vector<double>{2.0, 4.0});
    CHECK(u.sup_norm() == 3.0);
    CHECK_THROWS(u.add(3.0, v1(0.0)));
}
