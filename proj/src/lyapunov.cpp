#include "lsor/lyapunov.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace lsor {

std::vector<std::complex<double>> eigenvalues(const Mat& A) {
    if (A.rows() == 0)
        return {};
    Eigen::EigenSolver<Mat> es(A, false);
    if (es.info() != Eigen::Success)
        throw EigenvalueFailure("eigenvalue iteration did not converge");
    std::vector<std::complex<double>> out;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        out.push_back(es.eigenvalues()[i]);
    return out;
}

double spectral_abscissa(const Mat& A) {
    double s = -INFINITY;
    for (auto& l : eigenvalues(A))
        s = std::max(s, l.real());
    return s;
}

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
    const int n = int(A.rows());
    if (A.cols() != n || Q.rows() != n || Q.cols() != n)
        throw DimensionError("lyapunov: A and Q must be square and of equal size");
    if (n == 0)
        return Mat();
    const double sa = spectral_abscissa(A);
    if (!(sa < 0.0)) {
        std::ostringstream os;
        os << "matrix is not Hurwitz (max real part " << sa << ")";
        throw NotHurwitz(os.str());
    }
    using CMat = Eigen::MatrixXcd;
    Eigen::ComplexSchur<CMat> cs(A.cast<std::complex<double>>());
    if (cs.info() != Eigen::Success)
        throw SolveFailure("Schur decomposition failed");
    const CMat& U = cs.matrixU();
    const CMat& T = cs.matrixT();
    // with A = U T U^H:  T^H X + X T = -C,  X = U^H P U,  C = U^H Q U
    const CMat C = U.adjoint() * Q.cast<std::complex<double>>() * U;
    const CMat TH = T.adjoint();
    CMat X = CMat::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXcd rhs = -C.col(j);
        for (int k = 0; k < j; ++k)
            rhs -= X.col(k) * T(k, j);
        // (T^H + T_jj I) is lower triangular
        CMat L = TH;
        L.diagonal().array() += T(j, j);
        X.col(j) = L.triangularView<Eigen::Lower>().solve(rhs);
    }
    Mat P = (U * X * U.adjoint()).real();
    P = (0.5 * (P + P.transpose())).eval();
    if (!P.allFinite())
        throw SolveFailure("lyapunov solution is not finite");
    return P;
}

LyapunovConstants lyapunov_constants(const Mat& A, const Mat& Q) {
    LyapunovConstants out;
    out.P = solve_lyapunov(A, Q);
    Eigen::SelfAdjointEigenSolver<Mat> ep(out.P), eq(0.5 * (Q + Q.transpose()));
    out.c1 = ep.eigenvalues().minCoeff();
    out.c2 = ep.eigenvalues().maxCoeff();
    out.c3 = eq.eigenvalues().minCoeff();
    out.c4 = 2.0 * ep.eigenvalues().cwiseAbs().maxCoeff();
    out.residual = (A.transpose() * out.P + out.P * A + Q).cwiseAbs().maxCoeff();
    if (!(out.c1 > 0.0))
        throw SolveFailure("lyapunov solution is not positive definite");
    return out;
}

} // namespace lsor
