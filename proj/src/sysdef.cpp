#include "lsor/sysdef.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lsor {

void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite())
        throw EvaluationError(std::string("non-finite value in ") + what);
}

void SingularSystem::validate() const {
    if (n < 0 || m < 0 || p < 0)
        throw DimensionError("negative dimension");
    if (!f || !g)
        throw DimensionError("system needs both f and g");
    if (eps.size() != m)
        throw DimensionError("eps must have one entry per fast state");
    for (int i = 0; i < m; ++i)
        if (!(eps[i] > 0.0))
            throw DimensionError("eps entries must be positive");
}

std::vector<std::string> SingularSystem::labels() const {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i)
        out.push_back(i < int(slow_labels.size()) ? slow_labels[i] : "x" + std::to_string(i));
    for (int i = 0; i < m; ++i)
        out.push_back(i < int(fast_labels.size()) ? fast_labels[i] : "z" + std::to_string(i));
    return out;
}

static void check_dims(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u,
                       const Vec& eps) {
    if (x.size() != sys.n || z.size() != sys.m || u.size() != sys.p || eps.size() != sys.m) {
        std::ostringstream os;
        os << "expected (n,m,p)=(" << sys.n << "," << sys.m << "," << sys.p << "), got x="
           << x.size() << " z=" << z.size() << " u=" << u.size() << " eps=" << eps.size();
        throw DimensionError(os.str());
    }
    require_finite(x, "x");
    require_finite(z, "z");
    require_finite(u, "u");
    require_finite(eps, "eps");
}

Vec eval_f(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u, const Vec& eps) {
    check_dims(sys, x, z, u, eps);
    Vec out = sys.f(x, z, u, eps);
    if (out.size() != sys.n)
        throw DimensionError("f returned wrong length");
    require_finite(out, "f");
    return out;
}

Vec eval_g(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u, const Vec& eps) {
    check_dims(sys, x, z, u, eps);
    Vec out = sys.g(x, z, u, eps);
    if (out.size() != sys.m)
        throw DimensionError("g returned wrong length");
    require_finite(out, "g");
    return out;
}

std::pair<Vec, Vec> evaluate(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u,
                             const Vec& eps) {
    return {eval_f(sys, x, z, u, eps), eval_g(sys, x, z, u, eps)};
}

InputSignal::InputSignal(Vec constant) { add(0.0, std::move(constant)); }

void InputSignal::add(double start, Vec value) {
    if (starts_.empty()) {
        if (start != 0.0)
            throw DimensionError("first input segment must start at t = 0");
    } else {
        if (!(start > starts_.back()))
            throw DimensionError("input segment starts must be strictly increasing");
        if (value.size() != values_.front().size())
            throw DimensionError("input segments must share one dimension");
    }
    starts_.push_back(start);
    values_.push_back(std::move(value));
}

Vec InputSignal::at(double t) const {
    if (values_.empty())
        return Vec();
    // last segment whose start <= t; a breakpoint belongs to the new segment
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    if (it == starts_.begin())
        return values_.front();
    return values_[std::size_t(it - starts_.begin()) - 1];
}

std::vector<double> InputSignal::breakpoints() const {
    if (starts_.size() < 2)
        return {};
    return std::vector<double>(starts_.begin() + 1, starts_.end());
}

double InputSignal::sup_norm() const {
    double s = 0.0;
    for (const auto& v : values_)
        s = std::max(s, v.norm());
    return s;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& p, double step) {
    if (!(step > 0.0))
        throw DimensionError("finite-difference step must be positive");
    require_finite(p, "jacobian point");
    Vec q = p;
    Mat J;
    for (int j = 0; j < p.size(); ++j) {
        const double h = step * (1.0 + std::abs(p[j]));
        q[j] = p[j] + h;
        Vec fp = fn(q);
        q[j] = p[j] - h;
        Vec fm = fn(q);
        q[j] = p[j];
        if (j == 0)
            J.resize(fp.size(), p.size());
        J.col(j) = (fp - fm) / (2.0 * h);
    }
    if (p.size() == 0)
        J.resize(fn(p).size(), 0);
    if (!J.allFinite())
        throw EvaluationError("non-finite jacobian entry");
    return J;
}

Mat jacobian(const SingularSystem& sys, const JacobianRequest& r) {
    auto call = [&](const Vec& x, const Vec& z, const Vec& u) {
        return r.target == Target::F ? eval_f(sys, x, z, u, r.eps) : eval_g(sys, x, z, u, r.eps);
    };
    switch (r.wrt) {
    case Wrt::X: return fd_jacobian([&](const Vec& v) { return call(v, r.z, r.u); }, r.x, r.step);
    case Wrt::Z: return fd_jacobian([&](const Vec& v) { return call(r.x, v, r.u); }, r.z, r.step);
    case Wrt::U: return fd_jacobian([&](const Vec& v) { return call(r.x, r.z, v); }, r.u, r.step);
    }
    return Mat();
}

} // namespace lsor
