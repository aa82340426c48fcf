#include "lsor/builtin.hpp"

namespace lsor::builtin {

static Vec one(double v) { return Vec::Constant(1, v); }

SingularSystem lts1(double eps) {
    SingularSystem s;
    s.name = "lts1";
    s.n = 1;
    s.m = 1;
    s.p = 0;
    s.f = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return one(-2.0 * x[0] + z[0]); };
    s.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return one(x[0] - z[0]); };
    s.eps = one(eps);
    s.slow_labels = {"x"};
    s.fast_labels = {"z"};
    return s;
}

SingularSystem nls1(double eps) {
    SingularSystem s;
    s.name = "nls1";
    s.n = 1;
    s.m = 1;
    s.p = 1;
    s.f = [](const Vec& x, const Vec& z, const Vec& u, const Vec&) {
        return one(-x[0] + z[0] + u[0]);
    };
    s.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) {
        return one(x[0] - z[0] - z[0] * z[0] * z[0]);
    };
    s.eps = one(eps);
    s.slow_labels = {"x"};
    s.fast_labels = {"z"};
    s.input_labels = {"u"};
    return s;
}

SingularSystem lts1_flipped(double eps) {
    SingularSystem s = lts1(eps);
    s.name = "lts1_flipped";
    s.g = [](const Vec& x, const Vec& z, const Vec&, const Vec&) { return one(z[0] - x[0]); };
    return s;
}

SingularSystem by_name(const std::string& name, double eps) {
    if (name == "lts1")
        return lts1(eps);
    if (name == "nls1")
        return nls1(eps);
    if (name == "lts1_flipped")
        return lts1_flipped(eps);
    throw ConfigError("unknown builtin system '" + name + "'");
}

} // namespace lsor::builtin
