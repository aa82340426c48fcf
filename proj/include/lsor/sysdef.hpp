#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lsor/errors.hpp"

namespace lsor {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// (x, z, u, eps) -> vector
using SysFn = std::function<Vec(const Vec&, const Vec&, const Vec&, const Vec&)>;

// x' = f(x,z,u,eps), eps_i z_i' = g_i(x,z,u,eps)
struct SingularSystem {
    int n = 0;
    int m = 0;
    int p = 0;
    SysFn f;
    SysFn g;
    Vec eps;
    std::vector<std::string> slow_labels;
    std::vector<std::string> fast_labels;
    std::vector<std::string> input_labels;
    std::string name;

    void validate() const;
    double eps_bar() const { return eps.size() ? eps.maxCoeff() : 0.0; }
    std::vector<std::string> labels() const; // slow then fast
};

std::pair<Vec, Vec> evaluate(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u,
                             const Vec& eps);
Vec eval_f(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u, const Vec& eps);
Vec eval_g(const SingularSystem& sys, const Vec& x, const Vec& z, const Vec& u, const Vec& eps);

// Piecewise-constant input; u' = 0 between breakpoints.
class InputSignal {
public:
    InputSignal() = default;
    explicit InputSignal(Vec constant);
    void add(double start, Vec value);

    Vec at(double t) const;
    Vec derivative(double) const { return Vec::Zero(dim()); }
    int dim() const { return values_.empty() ? 0 : int(values_.front().size()); }
    std::vector<double> breakpoints() const; // starts after t = 0
    const std::vector<double>& starts() const { return starts_; }
    const std::vector<Vec>& values() const { return values_; }
    double sup_norm() const;

private:
    std::vector<double> starts_;
    std::vector<Vec> values_;
};

enum class Target { F, G };
enum class Wrt { X, Z, U };

struct JacobianRequest {
    Target target = Target::G;
    Wrt wrt = Wrt::Z;
    Vec x, z, u, eps;
    double step = 1e-6;
};

Mat jacobian(const SingularSystem& sys, const JacobianRequest& req);

// central differences with h = step*(1+|p_j|)
Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& p, double step = 1e-6);

void require_finite(const Vec& v, const char* what);

} // namespace lsor
