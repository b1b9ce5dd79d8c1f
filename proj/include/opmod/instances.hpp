#pragma once

#include "opmod/stinespring.hpp"

#include <functional>

namespace opmod {

// ---------------------------------------------------------------- kernels and functional calculus

enum class KernelKind { Constant, Product, Gaussian };

/// Nonnegative kernel k(x, t) on [0, ||W||]^2.
struct KernelFn {
    KernelKind kind = KernelKind::Gaussian;
    double param = 1.0;

    double operator()(double x, double t) const {
        switch (kind) {
            case KernelKind::Constant: return param;
            case KernelKind::Product: return param * x * t;
            case KernelKind::Gaussian: return std::exp(-(x - t) * (x - t) / (param * param));
        }
        return 0.0;
    }

    static KernelFn constant(double c = 1.0) { return {KernelKind::Constant, c}; }
    static KernelFn product(double c = 1.0) { return {KernelKind::Product, c}; }
    static KernelFn gaussian(double width = 1.0) { return {KernelKind::Gaussian, width}; }
};

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::Constant: return "constant";
        case KernelKind::Product: return "product";
        case KernelKind::Gaussian: return "gaussian";
    }
    return "?";
}

struct KernelSpec {
    CMat w;
    KernelFn k;
    Index grid = 65;
    /// rho(X) = weight * tr(X).
    double weight = 1.0;

    Index n() const { return w.rows(); }
    double w_norm() const { return std::max(0.0, hermitian_max_eig(w).value); }

    std::vector<double> points() const {
        std::vector<double> p(static_cast<size_t>(grid));
        double top = w_norm();
        for (Index g = 0; g < grid; ++g) p[g] = grid == 1 ? 0.0 : top * static_cast<double>(g) / static_cast<double>(grid - 1);
        return p;
    }

    void validate(double tol = 1e-10) const {
        if (w.rows() < 1 || w.rows() != w.cols()) throw ShapeError("W must be a nonempty square matrix");
        if (!all_finite(flatten(w))) throw ShapeError("W must be finite");
        if (grid < 2) throw ShapeError("grid needs at least two points");
        if (!(weight > 0)) throw PreconditionError("trace weight must be positive");
        double scale = std::max(1.0, max_abs(w));
        if (max_abs(CMat(w - w.adjoint())) > tol * scale) throw PreconditionError("W is not Hermitian");
        if (hermitian_min_eig(w).value < -tol * scale) throw PreconditionError("W is not positive semidefinite");
        std::vector<double> p = points();
        for (double x : p)
            for (double t : p)
                if (k(x, t) < 0) throw PreconditionError("kernel takes a negative value on the grid");
    }
};

/// eta_x(W) = k(x, W) by eigendecomposition, eigenvalues clamped to [0, ||W||].
class FunctionalCalculus {
public:
    explicit FunctionalCalculus(const CMat& w) {
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(w));
        vecs_ = es.eigenvectors();
        vals_ = es.eigenvalues();
        top_ = std::max(0.0, vals_.size() ? vals_.maxCoeff() : 0.0);
        for (Index i = 0; i < vals_.size(); ++i) vals_(i) = std::clamp(vals_(i), 0.0, top_);
    }

    template <class G>
    CMat apply(G&& g) const {
        CVec d(vals_.size());
        for (Index i = 0; i < vals_.size(); ++i) d(i) = g(vals_(i));
        return vecs_ * d.asDiagonal() * vecs_.adjoint();
    }

    CMat eta(const KernelFn& k, double x) const {
        return apply([&](double t) { return k(x, t); });
    }

    const RVec& eigenvalues() const { return vals_; }
    const CMat& eigenvectors() const { return vecs_; }
    double top() const { return top_; }

private:
    CMat vecs_;
    RVec vals_;
    double top_ = 0.0;
};

/// A = (M_n, Frobenius) over A0 = (M_n, operator norm): the finite picture of L^2 over L^infinity.
inline AlgebraPtr l2_over_linf(Index n) { return make_matrix_algebra(n, MatrixNorm::Frobenius); }

/// Matrix algebra for perfect squares, else functions on d points with the l^2 norm.
inline AlgebraPtr algebra_for_dim(Index d) {
    Index n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(d))));
    if (n * n == d) return make_matrix_algebra(n, MatrixNorm::Frobenius);
    return make_function_algebra(d, 2.0);
}

inline CMat matrix_unit(Index n, Index i) {
    CMat e = CMat::Zero(n, n);
    e(i / n, i % n) = 1.0;
    return e;
}

/// phi(X, Y)(x) = rho(X eta_x(W) Y*) sampled on the grid.
inline SesquiForm gen_kernel_form(const KernelSpec& spec) {
    spec.validate();
    Index n = spec.n(), d = n * n, g = spec.grid;
    FunctionalCalculus fc(spec.w);
    std::vector<double> pts = spec.points();
    CMat c = CMat::Zero(g, d * d);
    for (Index t = 0; t < g; ++t) {
        CMat eta = fc.eta(spec.k, pts[t]);
        // tr(E_ab eta E_dc) = delta_ac eta_bd
        for (Index a = 0; a < n; ++a)
            for (Index b = 0; b < n; ++b)
                for (Index dd = 0; dd < n; ++dd) c(t, (a * n + b) * d + (a * n + dd)) = spec.weight * eta(b, dd);
    }
    return SesquiForm(BimoduleSpace::c_grid(g, pts), d, c, l2_over_linf(n));
}

/// psi(X, Y)(s) = phi(X, Y)(f(s)), with f given by its values on an equispaced grid of [0, 1].
inline SesquiForm gen_composed_form(const KernelSpec& spec, const std::vector<double>& f) {
    spec.validate();
    if (f.empty()) throw ShapeError("composition map needs at least one sample");
    double top = spec.w_norm();
    for (double v : f)
        if (!(v >= 0.0 && v <= top * (1.0 + 1e-12) + 1e-15))
            throw PreconditionError("composition map leaves [0, ||W||]");
    Index n = spec.n(), d = n * n, l = static_cast<Index>(f.size());
    FunctionalCalculus fc(spec.w);
    CMat c = CMat::Zero(l, d * d);
    for (Index s = 0; s < l; ++s) {
        CMat eta = fc.eta(spec.k, std::min(f[s], top));
        for (Index a = 0; a < n; ++a)
            for (Index b = 0; b < n; ++b)
                for (Index dd = 0; dd < n; ++dd) c(s, (a * n + b) * d + (a * n + dd)) = spec.weight * eta(b, dd);
    }
    return SesquiForm(BimoduleSpace::l2_finite(l), d, c, l2_over_linf(n));
}

/// d Psi~(a, b) = Psi(a, b) d mu, atom by atom.
inline SesquiForm gen_measure_form(const SesquiForm& psi, const RVec& mu) {
    const BimoduleSpace& t = psi.target();
    if (!(t.kind() == SpaceKind::L2Finite || t.kind() == SpaceKind::CGrid || t.kind() == SpaceKind::MeasuresFinite))
        throw ShapeError("measure form needs a function-valued input form");
    if (mu.size() != t.flat_size()) throw ShapeError("measure needs one weight per atom");
    for (Index i = 0; i < mu.size(); ++i)
        if (!(mu(i) >= 0.0)) throw PreconditionError("measure weights must be nonnegative");
    CMat c = mu.cast<cplx>().asDiagonal() * psi.coeffs();
    return SesquiForm(BimoduleSpace::measures_finite(t.flat_size()), psi.dim(), c, psi.algebra());
}

// ---------------------------------------------------------------- Gel'fand-Pettis integral

/// F(x) = sum_r x^r F_r with every F_r PSD, so F(x) >= 0 on [0, ||W||].
struct GPIntegralSpec {
    KernelSpec kernel;
    std::vector<CMat> f_poly;
    CMat t;

    Index h() const { return t.rows(); }

    CMat f_at(double x) const {
        CMat out = CMat::Zero(h(), h());
        double p = 1.0;
        for (const CMat& fr : f_poly) {
            out += p * fr;
            p *= x;
        }
        return out;
    }

    void validate() const {
        kernel.validate();
        if (t.rows() < 1 || t.rows() != t.cols()) throw ShapeError("T must be a nonempty square matrix");
        if (f_poly.empty()) throw ShapeError("F needs at least one coefficient");
        for (const CMat& fr : f_poly) {
            if (fr.rows() != h() || fr.cols() != h()) throw ShapeError("F coefficients must match T");
            double s = std::max(1.0, max_abs(fr));
            if (max_abs(CMat(fr - fr.adjoint())) > 1e-10 * s || hermitian_min_eig(fr).value < -1e-10 * s)
                throw PreconditionError("F coefficients must be positive semidefinite");
        }
    }
};

/// Trapezoid weights on the kernel grid.
inline std::vector<double> trapezoid_weights(const std::vector<double>& pts) {
    std::vector<double> w(pts.size(), 0.0);
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        double h = pts[i + 1] - pts[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

/// Phi(A, B)(X1, X2) = T* (integral of rho(X2* B* A X1 eta_x(W)) F(x) dx) T, with the
/// fiber X = (M_n, operator norm) and values in L1Trace(h).
inline CPForm gen_gelfand_pettis(const GPIntegralSpec& spec) {
    spec.validate();
    const KernelSpec& ks = spec.kernel;
    Index n = ks.n(), m = n * n, h = spec.h();
    FunctionalCalculus fc(ks.w);
    std::vector<double> pts = ks.points();
    std::vector<double> wq = trapezoid_weights(pts);
    std::vector<CMat> etas, fs;
    for (size_t g = 0; g < pts.size(); ++g) {
        etas.push_back(fc.eta(ks.k, pts[g]));
        fs.push_back(spec.f_at(pts[g]));
    }
    BimoduleSpace target = BimoduleSpace::l1_trace(h);
    CMat tad = spec.t.adjoint();
    auto entry = [&](Index i, Index j, Index k, Index l) {
        CMat pik = matrix_unit(n, i) * matrix_unit(n, k);
        CMat pjl = matrix_unit(n, j) * matrix_unit(n, l);
        CMat core = pjl.adjoint() * pik;
        CMat acc = CMat::Zero(h, h);
        if (core.cwiseAbs().maxCoeff() != 0.0)
            for (size_t g = 0; g < pts.size(); ++g) {
                cplx s = ks.weight * (core * etas[g]).trace();
                if (s != cplx(0.0)) acc += wq[g] * s * fs[g];
            }
        return flatten(CMat(tad * acc * spec.t));
    };
    return CPForm::from_entries(l2_over_linf(n), m, NormSpec::operator_norm(n), target, entry);
}

// ---------------------------------------------------------------- operator-valued examples

enum class GammaVariant { CGrid, Dual, L1 };

inline const char* to_string(GammaVariant v) {
    switch (v) {
        case GammaVariant::CGrid: return "cgrid";
        case GammaVariant::Dual: return "dual";
        case GammaVariant::L1: return "l1";
    }
    return "?";
}

struct GammaInstance {
    SesquiForm phi;
    SesquiMap gamma;
    NormSpec fiber;
    GammaVariant variant = GammaVariant::CGrid;
};

struct GammaOptions {
    /// Positive matrix with the same norm as W, used by the dual and L1 variants.
    CMat w_tilde;
    /// G in the L1 variant.
    CMat g;
};

/// (phi(A, B)(T))(x) = rho(A eta_x T eta_x B*) and the dual/L1 variants at W~.
inline GammaInstance gen_gamma_example(const KernelSpec& spec, GammaVariant variant, const GammaOptions& opt = {}) {
    spec.validate();
    Index n = spec.n(), d = n * n;
    FunctionalCalculus fc(spec.w);
    GammaInstance out;
    out.variant = variant;
    out.gamma = matrix_product_gamma(n);
    out.fiber = NormSpec::operator_norm(n);
    OpDomain dom{DomainKind::Matrix, n};
    // g(x) for basis (A, B, T = E_pq) is w (eta_x B* A eta_x)_qp
    auto values = [&](Index i, Index j, double x) {
        CMat eta = fc.eta(spec.k, x);
        return CMat(spec.weight * eta * matrix_unit(n, j).adjoint() * matrix_unit(n, i) * eta);
    };
    if (variant == GammaVariant::CGrid) {
        std::vector<double> pts = spec.points();
        BimoduleSpace cod = BimoduleSpace::c_grid(spec.grid, pts);
        BimoduleSpace t = BimoduleSpace::op_map(dom, cod);
        Index g = spec.grid;
        CMat c(t.flat_size(), d * d);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j) {
                CMat images(g, n * n);
                for (Index x = 0; x < g; ++x) {
                    CMat v = values(i, j, pts[x]);
                    for (Index p = 0; p < n; ++p)
                        for (Index q = 0; q < n; ++q) images(x, p * n + q) = v(q, p);
                }
                c.col(i * d + j) = from_images(images);
            }
        out.phi = SesquiForm(t, d, c, l2_over_linf(n));
        return out;
    }
    CMat wt = opt.w_tilde.size() ? opt.w_tilde : spec.w;
    if (wt.rows() != wt.cols()) throw ShapeError("W~ must be square");
    FunctionalCalculus ft(wt);
    if (std::abs(ft.top() - fc.top()) > 1e-9 * std::max(1.0, fc.top()))
        throw PreconditionError("W~ must have the same norm as W");
    if (hermitian_min_eig(wt).value < -1e-10 * std::max(1.0, ft.top())) throw PreconditionError("W~ must be positive");
    Index nt = wt.rows();
    CMat gm = opt.g.size() ? opt.g : CMat(CMat::Identity(nt, nt));
    if (variant == GammaVariant::L1 && (gm.rows() != nt || gm.cols() != nt)) throw ShapeError("G must match W~");
    BimoduleSpace cod = variant == GammaVariant::Dual ? BimoduleSpace::dual_vn(nt) : BimoduleSpace::l1_trace(nt);
    BimoduleSpace t = BimoduleSpace::op_map(dom, cod);
    const RVec& lam = ft.eigenvalues();
    const CMat& vec = ft.eigenvectors();
    CMat c(t.flat_size(), d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
            std::vector<CMat> per_eig;
            for (Index e = 0; e < lam.size(); ++e) per_eig.push_back(values(i, j, lam(e)));
            CMat images(nt * nt, n * n);
            for (Index p = 0; p < n; ++p)
                for (Index q = 0; q < n; ++q) {
                    CVec gl(lam.size());
                    for (Index e = 0; e < lam.size(); ++e) gl(e) = per_eig[e](q, p);
                    CMat dens = vec * gl.asDiagonal() * vec.adjoint();
                    if (variant == GammaVariant::L1) dens = gm * dens * gm.adjoint();
                    images.col(p * n + q) = flatten(dens);
                }
            c.col(i * d + j) = from_images(images);
        }
    out.phi = SesquiForm(t, d, c, l2_over_linf(n));
    return out;
}

struct PsiInstance {
    SesquiForm phi;
    SesquiMap psi;
    BimoduleSpace out;
    NormSpec fiber;
    bool norming = true;
};

/// Phi(A, B)(X) = W* B* A W X into B(M_n, L1Trace(n)) with Psi(Z, X) = X* Z.
inline PsiInstance gen_psi_example(const CMat& w) {
    if (w.rows() < 1 || w.rows() != w.cols()) throw ShapeError("W must be a nonempty square matrix");
    Index n = w.rows(), d = n * n;
    PsiInstance out;
    out.psi = adjoint_product_psi(n);
    out.out = BimoduleSpace::l1_trace(n);
    out.fiber = NormSpec::operator_norm(n);
    BimoduleSpace t = BimoduleSpace::op_map(OpDomain{DomainKind::Matrix, n}, BimoduleSpace::l1_trace(n));
    CMat c(t.flat_size(), d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
            CMat m = w.adjoint() * matrix_unit(n, j).adjoint() * matrix_unit(n, i) * w;
            CMat images(n * n, n * n);
            for (Index b = 0; b < n * n; ++b) images.col(b) = flatten(CMat(m * matrix_unit(n, b)));
            c.col(i * d + j) = from_images(images);
        }
    out.phi = SesquiForm(t, d, c, l2_over_linf(n));
    return out;
}

/// Phi(a, b) = tr(b* a) on M_n with scalar values.
inline SesquiForm trace_form(Index n) {
    AlgebraPtr alg = make_matrix_algebra(n, MatrixNorm::Operator);
    Index d = n * n;
    CMat c = CMat::Zero(1, d * d);
    for (Index i = 0; i < d; ++i) c(0, i * d + i) = 1.0;
    return SesquiForm(BimoduleSpace::l2_finite(1), d, c, alg);
}

// ---------------------------------------------------------------- feature model

/// Positive linear map K: M_q -> Y stored as flat x q^2 with K(Z) = kmat * flatten(Z).
/// Built as a sum of terms so that sub-sums stay positive.
struct PositiveMapModel {
    Index q = 1;
    std::vector<CMat> terms;

    CMat total() const {
        CMat out = terms.front();
        for (size_t t = 1; t < terms.size(); ++t) out += terms[t];
        return out;
    }
};

/// Matrix of Z -> P Z P on row-major flattened q x q matrices.
inline CMat compression_operator(const CMat& p) {
    Index q = p.rows();
    CMat s(q * q, q * q);
    for (Index b = 0; b < q; ++b)
        for (Index a = 0; a < q; ++a)
            for (Index g = 0; g < q; ++g)
                for (Index dd = 0; dd < q; ++dd) s(b * q + a, g * q + dd) = p(b, g) * p(dd, a);
    return s;
}

namespace detail {

/// Row block of K(Z)_c = tr(Z Q) for a PSD q x q matrix Q.
inline CVec trace_row(const CMat& q) {
    Index n = q.rows();
    CVec r(n * n);
    for (Index b = 0; b < n; ++b)
        for (Index a = 0; a < n; ++a) r(b * n + a) = q(a, b);
    return r;
}

inline void add_entrywise_terms(CMat& k, Index offset, Index count, Index q, Rng& rng, bool faithful) {
    for (Index c = 0; c < count; ++c) {
        CMat qc = random_psd(rng, q);
        if (faithful) qc += 0.25 * CMat::Identity(q, q);
        k.row(offset + c) = trace_row(qc).transpose();
    }
}

/// x -> V Z V* (and optionally V Z^T V*), placed at flat offset.
inline void add_matrix_terms(CMat& k, Index offset, Index n, Index q, Rng& rng, bool faithful, bool transpose_term) {
    Index terms = std::max<Index>(1, (q + n - 1) / n) + (faithful ? 1 : 0);
    for (Index t = 0; t < terms; ++t) {
        CMat v = gaussian_matrix(rng, n, q);
        for (Index r = 0; r < n; ++r)
            for (Index s = 0; s < n; ++s)
                for (Index b = 0; b < q; ++b)
                    for (Index a = 0; a < q; ++a) k(offset + r * n + s, b * q + a) += v(r, b) * std::conj(v(s, a));
    }
    if (transpose_term) {
        CMat v = gaussian_matrix(rng, n, q);
        for (Index r = 0; r < n; ++r)
            for (Index s = 0; s < n; ++s)
                for (Index b = 0; b < q; ++b)
                    for (Index a = 0; a < q; ++a) k(offset + r * n + s, b * q + a) += v(r, a) * std::conj(v(s, b));
    }
}

inline CMat random_kmat(const BimoduleSpace& s, Index q, Rng& rng, bool faithful, bool transpose_term) {
    Index f = s.flat_size();
    CMat k = CMat::Zero(f, q * q);
    if (s.is_entrywise()) {
        add_entrywise_terms(k, 0, f, q, rng, faithful);
        return k;
    }
    if (s.is_matrix_kind()) {
        add_matrix_terms(k, 0, s.size(), q, rng, faithful, transpose_term);
        return k;
    }
    // OpMap
    const BimoduleSpace& cod = s.codomain();
    Index cf = cod.flat_size();
    Index p = s.domain().dim;
    if (s.domain().kind == DomainKind::Diagonal) {
        for (Index b = 0; b < p; ++b) k.middleRows(b * cf, cf) = random_kmat(cod, q, rng, faithful, transpose_term);
        return k;
    }
    // Z -> (x -> R* (Z (x) x) R) for matrix codomains, x -> tr((Z (x) x) Q_t) pointwise otherwise
    Index qp = q * p;
    if (cod.is_matrix_kind()) {
        Index n = cod.size();
        Index terms = std::max<Index>(1, (qp + n - 1) / n) + (faithful ? 1 : 0);
        for (Index t = 0; t < terms; ++t) {
            CMat r = gaussian_matrix(rng, qp, n);
            for (Index a = 0; a < p; ++a)
                for (Index b = 0; b < p; ++b)
                    for (Index rr = 0; rr < n; ++rr)
                        for (Index ss = 0; ss < n; ++ss)
                            for (Index be = 0; be < q; ++be)
                                for (Index al = 0; al < q; ++al)
                                    k((a * p + b) * cf + rr * n + ss, be * q + al) +=
                                        std::conj(r(be * p + a, rr)) * r(al * p + b, ss);
        }
        return k;
    }
    for (Index t = 0; t < cf; ++t) {
        CMat qt = random_psd(rng, qp);
        if (faithful) qt += 0.25 * CMat::Identity(qp, qp);
        for (Index a = 0; a < p; ++a)
            for (Index b = 0; b < p; ++b)
                for (Index be = 0; be < q; ++be)
                    for (Index al = 0; al < q; ++al) k((a * p + b) * cf + t, be * q + al) = qt(al * p + b, be * p + a);
    }
    return k;
}

/// Table with column u*D + w equal to K(X_w* X_u).
inline CMat feature_table(const CMat& kmat, const std::vector<CMat>& feats) {
    Index big = static_cast<Index>(feats.size());
    CMat c(kmat.rows(), big * big);
    for (Index u = 0; u < big; ++u)
        for (Index w = 0; w < big; ++w) c.col(u * big + w) = kmat * flatten(CMat(feats[w].adjoint() * feats[u]));
    return c;
}

inline bool star_compatible(const QuasiAlgebra& alg, double tol = 1e-12) {
    for (Index i : alg.a0_indices())
        if (max_abs(CMat(alg.left_mult(alg.star(alg.basis(i))) - alg.structure[i].adjoint())) > tol) return false;
    return true;
}

}  // namespace detail

struct RandomFormOptions {
    /// Feature width; 0 draws it from [1, 3].
    Index q = 0;
    bool faithful = false;
    /// Add a positive but not completely positive transpose term for matrix targets.
    bool transpose_term = false;
};

/// Left-invariant positive form Phi(a, b) = K((b Xi)* (a Xi)) over an algebra whose left
/// multiplications satisfy L_{c*} = L_c*.
inline SesquiForm random_positive(Rng& rng, const AlgebraPtr& alg, const BimoduleSpace& target,
                                  const RandomFormOptions& opt = {}) {
    if (!detail::star_compatible(*alg)) throw UnsupportedError("algebra is not compatible with the feature model");
    Index q = opt.q > 0 ? opt.q : 1 + static_cast<Index>(rng() % 3);
    Index d = alg->dim;
    CMat xi = gaussian_matrix(rng, d, q);
    CMat kmat = detail::random_kmat(target, q, rng, opt.faithful, opt.transpose_term);
    std::vector<CMat> feats;
    for (Index i = 0; i < d; ++i) feats.push_back(alg->structure[i] * xi);
    return SesquiForm(target, d, detail::feature_table(kmat, feats), alg);
}

inline SesquiForm random_positive(std::uint64_t seed, Index d, const BimoduleSpace& target,
                                  const RandomFormOptions& opt = {}) {
    Rng rng(seed);
    return random_positive(rng, algebra_for_dim(d), target, opt);
}

/// Positive form on C^d (no algebra) with a planted null space of dimension k.
inline SesquiForm planted_null_form(Rng& rng, Index d, Index k, const BimoduleSpace& target, Index q = 2) {
    if (k < 0 || k > d) throw ShapeError("planted null dimension must lie in [0, d]");
    // F = B U_c* vanishes exactly on the span of the remaining k columns of U
    CMat u = haar_unitary(rng, d);
    Index rows = d;
    CMat f = gaussian_matrix(rng, rows * q, d - k) * u.leftCols(d - k).adjoint();
    CMat kmat = detail::random_kmat(target, q, rng, true, false);
    std::vector<CMat> feats;
    for (Index i = 0; i < d; ++i) feats.push_back(unflatten(f.col(i), rows, q));
    return SesquiForm(target, d, detail::feature_table(kmat, feats));
}

struct RandomCpOptions {
    Index q = 0;
    bool faithful = false;
    bool transpose_term = false;
};

/// Completely positive form Phi(a, b)(x, y) = K((b V y)* (a V x)) with V: C^m -> A (x) C^q.
struct CpModel {
    AlgebraPtr algebra;
    Index m = 1;
    Index q = 1;
    NormSpec fiber;
    BimoduleSpace target;
    PositiveMapModel kmap;
    std::vector<CMat> feats;

    CPForm form(const CMat& kmat) const {
        return CPForm(algebra, m, fiber, target, detail::feature_table(kmat, feats));
    }
    CPForm form() const { return form(kmap.total()); }
};

inline CpModel random_cp_model(Rng& rng, const AlgebraPtr& alg, Index m, NormSpec fiber, const BimoduleSpace& target,
                               const RandomCpOptions& opt = {}) {
    if (!detail::star_compatible(*alg)) throw UnsupportedError("algebra is not compatible with the feature model");
    CpModel model;
    model.algebra = alg;
    model.m = m;
    model.fiber = fiber;
    model.target = target;
    model.q = opt.q > 0 ? opt.q : 1 + static_cast<Index>(rng() % 3);
    Index d = alg->dim, q = model.q;
    model.kmap.q = q;
    model.kmap.terms.push_back(detail::random_kmat(target, q, rng, opt.faithful, opt.transpose_term));
    model.kmap.terms.push_back(detail::random_kmat(target, q, rng, opt.faithful, false));
    CMat v = gaussian_matrix(rng, d * q, m);
    for (Index i = 0; i < d; ++i)
        for (Index k = 0; k < m; ++k) model.feats.push_back(alg->structure[i] * unflatten(v.col(k), d, q));
    return model;
}

inline CPForm random_cp(Rng& rng, const AlgebraPtr& alg, Index m, NormSpec fiber, const BimoduleSpace& target,
                        const RandomCpOptions& opt = {}) {
    return random_cp_model(rng, alg, m, fiber, target, opt).form();
}

inline CPForm random_cp(std::uint64_t seed, Index d, Index m, const BimoduleSpace& target,
                        const RandomCpOptions& opt = {}) {
    Rng rng(seed);
    return random_cp(rng, algebra_for_dim(d), m, NormSpec::euclidean(m), target, opt);
}

/// Dominated pair: Phi from the model and Psi = c K(P Z P) with K splitting across P and
/// its complement, so gamma Phi - Psi stays completely positive for c <= gamma.
struct DominatedPair {
    CPForm phi;
    CPForm psi;
    double gamma = 1.0;
    double c = 1.0;
};

inline DominatedPair compressed_pair(Rng& rng, const AlgebraPtr& alg, Index m, NormSpec fiber,
                                     const BimoduleSpace& target, double gamma, Index q = 2) {
    if (q < 2) throw ShapeError("compression needs a feature width of at least two");
    CpModel model = random_cp_model(rng, alg, m, fiber, target, RandomCpOptions{q, false, false});
    Index rank = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(q - 1));
    CMat u = haar_unitary(rng, q);
    CMat p = u.leftCols(rank) * u.leftCols(rank).adjoint();
    CMat pc = CMat::Identity(q, q) - p;
    CMat k1 = model.kmap.terms[0] * compression_operator(p);
    CMat k2 = model.kmap.terms[1] * compression_operator(pc);
    DominatedPair out;
    out.gamma = gamma;
    out.c = gamma * (0.25 + 0.75 * uniform01(rng));
    out.phi = model.form(CMat(k1 + k2));
    out.psi = model.form(CMat(out.c * k1));
    return out;
}

// ---------------------------------------------------------------- perturbations

struct Perturbation {
    Index index = 0;
    CVec cone_element;
    double epsilon = 0.0;
};

/// Smallest s on the sampled probes with Phi - s c e_i e_i* leaving the cone: min over
/// probes l of 1 / (l(c) [G_l^+]_ii), 0 when e_i is outside the range of some G_l.
inline double spectral_margin(const SesquiForm& f, Index i, const CVec& c) {
    const BimoduleSpace& t = f.target();
    std::vector<CVec> probes = dominating_functionals(t).functionals;
    Index fs = t.flat_size();
    if (t.is_entrywise()) {
        probes.clear();
        for (Index k = 0; k < fs; ++k) probes.push_back(CVec::Unit(fs, k));
    } else if (t.is_matrix_kind()) {
        for (Index a = 0; a < t.size(); ++a) probes.push_back(detail::matrix_probe(CVec::Unit(t.size(), a)));
    }
    double best = std::numeric_limits<double>::infinity();
    Index d = f.dim();
    for (const CVec& l : probes) {
        double lc = (l.transpose() * c)(0).real();
        if (lc <= 0) continue;
        CMat g = hermitian_part(f.pair_with(l));
        Eigen::SelfAdjointEigenSolver<CMat> es(g);
        RVec ev = es.eigenvalues();
        double cut = std::max(1.0, std::abs(ev(d - 1))) * 1e-12 * static_cast<double>(d);
        double ginv = 0.0;
        bool in_range = true;
        for (Index k = 0; k < d; ++k) {
            double wk = std::norm(es.eigenvectors()(i, k));
            if (ev(k) > cut) ginv += wk / ev(k);
            else if (wk > 1e-20) in_range = false;
        }
        double margin = in_range ? 1.0 / (lc * ginv) : 0.0;
        best = std::min(best, margin);
    }
    return best;
}

/// Subtract eps * c from the diagonal entry (i, i).
inline SesquiForm perturb_noncp(const SesquiForm& f, double eps, Index i, const CVec& c) {
    if (!(eps >= 0)) throw PreconditionError("perturbation size must be nonnegative");
    if (i < 0 || i >= f.dim()) throw ShapeError("perturbed index out of range");
    CMat coeffs = f.coeffs();
    coeffs.col(i * f.dim() + i) -= eps * c;
    return SesquiForm(f.target(), f.dim(), coeffs, f.algebra());
}

struct PerturbedInstance {
    SesquiForm form;
    Perturbation perturbation;
    double margin = 0.0;
};

/// Random index and cone element; eps = factor * margin (factor >= 10 makes positivity fail).
inline PerturbedInstance perturb_noncp(const SesquiForm& f, double factor, std::uint64_t seed) {
    Rng rng(seed);
    PerturbedInstance out;
    out.perturbation.index = static_cast<Index>(rng() % static_cast<std::uint64_t>(f.dim()));
    out.perturbation.cone_element = random_cone_element(f.target(), rng);
    out.margin = spectral_margin(f, out.perturbation.index, out.perturbation.cone_element);
    out.perturbation.epsilon = factor * out.margin;
    out.form = perturb_noncp(f, out.perturbation.epsilon, out.perturbation.index, out.perturbation.cone_element);
    return out;
}

inline CPForm perturb_noncp(const CPForm& f, double factor, std::uint64_t seed, double* margin = nullptr) {
    PerturbedInstance p = perturb_noncp(f.tensor_form(), factor, seed);
    if (margin) *margin = p.margin;
    return CPForm::from_tensor(p.form, f.algebra(), f.m(), f.fiber());
}

// ---------------------------------------------------------------- standard specs

inline CMat random_psd_with_norm(Rng& rng, Index n, double top) {
    CMat w = random_psd(rng, n, n);
    double e = hermitian_max_eig(w).value;
    return e > 0 ? CMat(w * (top / e)) : w;
}

/// The reference kernel spec: n = 3, random PSD W of norm 1.5, Gaussian kernel, G = 65.
inline KernelSpec standard_kernel_spec(std::uint64_t seed = 7, Index n = 3, Index grid = 65) {
    Rng rng(seed);
    KernelSpec s;
    s.w = random_psd_with_norm(rng, n, 1.5);
    s.k = KernelFn::gaussian(1.0);
    s.grid = grid;
    return s;
}

inline GPIntegralSpec standard_gp_spec(std::uint64_t seed = 11, Index n = 2, Index h = 2, Index grid = 65) {
    Rng rng(seed);
    GPIntegralSpec s;
    s.kernel = standard_kernel_spec(derive_seed(seed, "kernel"), n, grid);
    s.f_poly = {random_psd(rng, h, h), random_psd(rng, h, 1), random_psd(rng, h, 1)};
    s.t = gaussian_matrix(rng, h, h);
    return s;
}

}  // namespace opmod
