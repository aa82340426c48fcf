#pragma once

#include <complex>
#include <vector>

#include "lsor/sysdef.hpp"

namespace lsor {

struct LyapunovConstants {
    Mat P;
    double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    double residual = 0; // ||A'P + PA + Q||_max
};

// A'P + PA = -Q via complex Schur form; A must be Hurwitz.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

// c1 = lmin(P), c2 = lmax(P), c3 = lmin(Q), c4 = 2||P||_2
LyapunovConstants lyapunov_constants(const Mat& A, const Mat& Q);

std::vector<std::complex<double>> eigenvalues(const Mat& A);
double spectral_abscissa(const Mat& A);

} // namespace lsor
