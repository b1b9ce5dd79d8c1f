#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace opmod {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension or layout disagreement between an element and its space.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A mathematical precondition (positivity, invariance, domination...) failed.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------- seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, used for stream tags and content digests.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    return derive_seed(master, fnv1a(tag));
}

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Standard complex Gaussian: real and imaginary parts N(0, 1/2).
inline cplx complex_gaussian(Rng& rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    double re = nd(rng);
    double im = nd(rng);
    return {re, im};
}

inline CVec gaussian_vector(Rng& rng, Index n) {
    CVec v(n);
    for (Index i = 0; i < n; ++i) v(i) = complex_gaussian(rng);
    return v;
}

inline CVec random_unit_vector(Rng& rng, Index n) {
    CVec v = gaussian_vector(rng, n);
    double nv = v.norm();
    if (nv == 0.0) {
        v.setZero();
        v(0) = 1.0;
        return v;
    }
    return v / nv;
}

inline CMat gaussian_matrix(Rng& rng, Index rows, Index cols) {
    CMat m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = complex_gaussian(rng);
    return m;
}

inline RVec uniform_vector(Rng& rng, Index n, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> ud(lo, hi);
    RVec v(n);
    for (Index i = 0; i < n; ++i) v(i) = ud(rng);
    return v;
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase fix.
inline CMat haar_unitary(Rng& rng, Index n) {
    CMat g = gaussian_matrix(rng, n, n);
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ();
    CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j) {
        cplx d = r(j, j);
        double a = std::abs(d);
        if (a > 0) q.col(j) *= d / a;
    }
    return q;
}

/// U diag(s) W* with Haar U, W and singular values uniform in [0,1].
inline CMat random_contraction(Rng& rng, Index rows, Index cols) {
    Index k = std::min(rows, cols);
    CMat u = haar_unitary(rng, rows).leftCols(k);
    CMat w = haar_unitary(rng, cols).leftCols(k);
    RVec s = uniform_vector(rng, k);
    return u * s.cast<cplx>().asDiagonal() * w.adjoint();
}

inline CMat random_contraction(Rng& rng, Index n) { return random_contraction(rng, n, n); }

/// Unit-modulus vector with uniform phases.
inline CVec random_phases(Rng& rng, Index n) {
    CVec v(n);
    for (Index i = 0; i < n; ++i) v(i) = std::polar(1.0, 2.0 * M_PI * uniform01(rng));
    return v;
}

// ---------------------------------------------------------------- linear algebra

inline RVec singular_values(const CMat& m) {
    if (m.size() == 0) return RVec();
    Eigen::JacobiSVD<CMat> svd(m);
    return svd.singularValues();
}

inline double trace_norm(const CMat& m) {
    if (m.size() == 0) return 0.0;
    return singular_values(m).sum();
}

inline double op_norm(const CMat& m) {
    if (m.size() == 0) return 0.0;
    return singular_values(m)(0);
}

/// Unitary factor U of the polar decomposition m = U|m|, so that tr(U* m) = ||m||_1.
inline CMat polar_unitary(const CMat& m) {
    Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

inline CMat hermitian_part(const CMat& m) { return 0.5 * (m + m.adjoint()); }

struct EigenPair {
    double value = 0.0;
    CVec vector;
};

inline EigenPair hermitian_min_eig(const CMat& m) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m));
    return {es.eigenvalues()(0), es.eigenvectors().col(0)};
}

inline EigenPair hermitian_max_eig(const CMat& m) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m));
    Index last = m.rows() - 1;
    return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}

/// f applied to the spectrum of a Hermitian matrix.
template <class F>
CMat hermitian_function(const CMat& h, F&& f) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(h));
    CVec fl(h.rows());
    for (Index i = 0; i < h.rows(); ++i) fl(i) = f(es.eigenvalues()(i));
    return es.eigenvectors() * fl.asDiagonal() * es.eigenvectors().adjoint();
}

inline double max_abs(const CVec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
inline double max_abs(const CMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline bool all_finite(const CVec& v) {
    for (Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v(i).real()) || !std::isfinite(v(i).imag())) return false;
    return true;
}

/// Row-major reshape of a flat coordinate block into a rows x cols matrix.
inline CMat unflatten(const CVec& v, Index rows, Index cols, Index offset = 0) {
    CMat m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = v(offset + i * cols + j);
    return m;
}

inline CVec flatten(const CMat& m) {
    CVec v(m.size());
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
    return v;
}

/// Smallest eigenvalue of z* G z over unit z, returned together with the conjugate
/// of the minimizer: for a table g_ij, sum_ij x_i conj(x_j) g_ij = z* G z with z = conj(x).
inline EigenPair min_quadratic(const CMat& g) {
    EigenPair p = hermitian_min_eig(g);
    p.vector = p.vector.conjugate();
    return p;
}

}  // namespace opmod
