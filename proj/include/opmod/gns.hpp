#pragma once

#include "opmod/form.hpp"

#include <numeric>

namespace opmod {

/// Relative singular-value threshold used for span (surjectivity) checks.
inline constexpr double kSpanTol = 1e-9;

inline Index numerical_rank(const CMat& m, double rel_tol = kSpanTol) {
    if (m.size() == 0) return 0;
    RVec s = singular_values(m);
    if (s(0) == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_tol * s(0)) ++r;
    return r;
}

/// Moore-Penrose pseudo-inverse with a relative cutoff.
inline CMat pinv(const CMat& m, double rel_tol = kSpanTol) {
    Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    RVec s = svd.singularValues();
    RVec inv = RVec::Zero(s.size());
    double cut = s.size() ? rel_tol * s(0) : 0.0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) inv(i) = 1.0 / s(i);
    return svd.matrixV() * inv.cast<cplx>().asDiagonal() * svd.matrixU().adjoint();
}

/// Quotient of C^D by the null space of a positive form, with the form pushed down.
struct QuotientSpace {
    Index ambient = 0;
    Index rank = 0;
    /// r x D with orthonormal rows; kernel is the null space.
    CMat lambda;
    /// Y-valued inner product on the quotient coordinates.
    SesquiForm gram;
    NullSpace null;
    double reconstruction_residual = 0.0;

    const BimoduleSpace& target() const { return gram.target(); }
};

struct QuotientOptions {
    double rank_tol = -1.0;
    /// New coordinate i reads old coordinate permutation[i]; empty means identity.
    std::vector<Index> permutation;
    /// Nonzero: rotate the quotient basis by a Haar unitary drawn from this seed.
    std::uint64_t rotation_seed = 0;
};

/// coeffs of (x, y) -> Phi(A x, A y) for a D x r matrix A.
inline CMat pull_back_coeffs(const SesquiForm& f, const CMat& a) {
    Index big = f.dim();
    Index r = a.cols();
    CMat k(big * big, r * r);
    for (Index i = 0; i < big; ++i)
        for (Index j = 0; j < big; ++j)
            for (Index p = 0; p < r; ++p)
                for (Index q = 0; q < r; ++q) k(i * big + j, p * r + q) = a(i, p) * std::conj(a(j, q));
    return f.coeffs() * k;
}

inline SesquiForm permuted_form(const SesquiForm& f, const std::vector<Index>& perm) {
    Index d = f.dim();
    CMat c(f.coeffs().rows(), d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) c.col(i * d + j) = f.entry(perm[i], perm[j]);
    return SesquiForm(f.target(), d, c);
}

inline QuotientSpace build_quotient(const SesquiForm& f, const QuotientOptions& opt = {}) {
    Index big = f.dim();
    QuotientSpace q;
    q.ambient = big;
    CMat range;
    if (!opt.permutation.empty()) {
        if (static_cast<Index>(opt.permutation.size()) != big) throw ShapeError("permutation has the wrong length");
        std::vector<Index> check = opt.permutation;
        std::sort(check.begin(), check.end());
        for (Index i = 0; i < big; ++i)
            if (check[i] != i) throw ShapeError("not a permutation");
        NullSpace ns = null_space(permuted_form(f, opt.permutation), opt.rank_tol);
        range = CMat::Zero(big, ns.rank);
        CMat nb = CMat::Zero(big, ns.basis.cols());
        for (Index i = 0; i < big; ++i) {
            range.row(opt.permutation[i]) = ns.range.row(i);
            nb.row(opt.permutation[i]) = ns.basis.row(i);
        }
        q.null = ns;
        q.null.range = range;
        q.null.basis = nb;
    } else {
        q.null = null_space(f, opt.rank_tol);
        range = q.null.range;
    }
    q.rank = range.cols();
    if (opt.rotation_seed != 0 && q.rank > 0) {
        Rng rng(opt.rotation_seed);
        range = range * haar_unitary(rng, q.rank);
    }
    q.lambda = range.adjoint();
    q.gram = SesquiForm(f.target(), q.rank, pull_back_coeffs(f, range));
    // Phi(e_i, e_j) against gram(Lambda e_i, Lambda e_j)
    CMat rebuilt = pull_back_coeffs(q.gram, q.lambda);
    double scale = max_abs(f.coeffs());
    q.reconstruction_residual = scale > 0 ? max_abs(CMat(rebuilt - f.coeffs())) / scale : max_abs(rebuilt);
    return q;
}

// ---------------------------------------------------------------- GNS

struct GnsRep {
    QuotientSpace quotient;
    /// pi(a_i), one r x r matrix per basis element.
    std::vector<CMat> rep;
    CVec cyclic;
    AlgebraPtr algebra;
    double invariance_residual = 0.0;
    double well_definedness_residual = 0.0;

    Index rank() const { return quotient.rank; }

    CMat pi(const CVec& a) const {
        CMat out = CMat::Zero(rank(), rank());
        for (Index i = 0; i < a.size(); ++i)
            if (a(i) != cplx(0.0)) out += a(i) * rep[i];
        return out;
    }
};

struct GnsOptions {
    double rank_tol = -1.0;
    double invariance_tol = 1e-8;
    QuotientOptions quotient;
};

namespace detail {

/// Section S: C^r -> span(A0) with Lambda S = I; throws if A0 does not span the quotient.
inline CMat a0_section(const CMat& lambda, const std::vector<bool>& mask, Index rep_block) {
    Index r = lambda.rows();
    Index big = lambda.cols();
    std::vector<Index> cols;
    for (Index u = 0; u < big; ++u)
        if (mask[u / rep_block]) cols.push_back(u);
    if (static_cast<Index>(cols.size()) == big) return lambda.adjoint();
    CMat l0(r, static_cast<Index>(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) l0.col(static_cast<Index>(k)) = lambda.col(cols[k]);
    if (numerical_rank(l0) < r)
        throw PreconditionError("A0 does not span the quotient (rank " + std::to_string(numerical_rank(l0)) +
                                " < " + std::to_string(r) + ")");
    CMat p = pinv(l0);
    CMat s = CMat::Zero(big, r);
    for (size_t k = 0; k < cols.size(); ++k) s.row(cols[k]) = p.row(static_cast<Index>(k));
    return s;
}

/// Kernel of Lambda restricted to A0 coordinates, embedded in C^D.
inline CMat a0_kernel(const CMat& lambda, const std::vector<bool>& mask, Index rep_block) {
    Index big = lambda.cols();
    std::vector<Index> cols;
    for (Index u = 0; u < big; ++u)
        if (mask[u / rep_block]) cols.push_back(u);
    Index n0 = static_cast<Index>(cols.size());
    CMat l0(lambda.rows(), n0);
    for (Index k = 0; k < n0; ++k) l0.col(k) = lambda.col(cols[k]);
    Index rk = numerical_rank(l0);
    CMat ker0;
    if (l0.rows() == 0) ker0 = CMat::Identity(n0, n0);
    else {
        Eigen::JacobiSVD<CMat> svd(l0, Eigen::ComputeFullV);
        ker0 = svd.matrixV().rightCols(n0 - rk);
    }
    CMat out = CMat::Zero(big, ker0.cols());
    for (Index k = 0; k < n0; ++k) out.row(cols[k]) = ker0.row(k);
    return out;
}

inline double relative(double v, double scale) { return scale > 0 ? v / scale : v; }

/// max ||Lambda (L_a (x) I) k|| / ||L_a|| over basis a and unit kernel vectors k.
inline double ideal_residual(const CMat& lambda, const QuasiAlgebra& alg, const CMat& ker, Index block) {
    double worst = 0.0;
    CMat ib = CMat::Identity(block, block);
    for (Index i = 0; i < alg.dim; ++i) {
        double ln = Eigen::JacobiSVD<CMat>(alg.structure[i]).singularValues()(0);
        if (ln == 0.0) continue;
        CMat l = CMat::Zero(alg.dim * block, alg.dim * block);
        for (Index r = 0; r < alg.dim; ++r)
            for (Index c = 0; c < alg.dim; ++c)
                if (alg.structure[i](r, c) != cplx(0.0)) l.block(r * block, c * block, block, block) = alg.structure[i](r, c) * ib;
        for (Index k = 0; k < ker.cols(); ++k) {
            double nk = ker.col(k).norm();
            if (nk > 0) worst = std::max(worst, (lambda * (l * ker.col(k))).norm() / (ln * nk));
        }
    }
    return worst;
}

}  // namespace detail

/// GNS representation of a positive left-invariant form over a unital algebra.
inline GnsRep build_gns(const SesquiForm& f, const GnsOptions& opt = {}) {
    if (!f.algebra()) throw PreconditionError("GNS construction needs a form over an algebra");
    const QuasiAlgebra& alg = *f.algebra();
    InvarianceReport inv = check_left_invariant(f, opt.invariance_tol);
    if (!inv.passed)
        throw PreconditionError("form is not left-invariant (residual " + std::to_string(inv.residual) + ")");
    GnsRep g;
    g.algebra = f.algebra();
    g.invariance_residual = inv.residual;
    QuotientOptions qo = opt.quotient;
    if (opt.rank_tol > 0) qo.rank_tol = opt.rank_tol;
    g.quotient = build_quotient(f, qo);
    const CMat& lam = g.quotient.lambda;
    CMat sec = detail::a0_section(lam, alg.a0_mask, 1);
    for (Index i = 0; i < alg.dim; ++i) g.rep.push_back(lam * alg.structure[i] * sec);
    g.cyclic = lam * alg.unit;
    // Lambda(a k) must vanish for k in the null space inside A0
    g.well_definedness_residual = detail::ideal_residual(lam, alg, detail::a0_kernel(lam, alg.a0_mask, 1), 1);
    return g;
}

struct GnsReport {
    bool passed = true;
    Index rank = 0;
    Index cyclic_rank = 0;
    double adjoint_residual = 0.0;
    double homomorphism_residual = 0.0;
    double factorization_residual = 0.0;
    double unit_residual = 0.0;
    double well_definedness_residual = 0.0;
    std::string note = "finite-dimensional: dense domain equals the whole space";
};

inline GnsReport verify_gns(const GnsRep& g, const SesquiForm& f, Index trials = 1000, double tol = 1e-8,
                            std::uint64_t seed = 1) {
    const QuasiAlgebra& alg = *g.algebra;
    Index r = g.rank();
    Index d = alg.dim;
    GnsReport rep;
    rep.rank = r;
    rep.well_definedness_residual = g.well_definedness_residual;
    double fscale = max_abs(f.coeffs());
    double pscale = 1.0;
    for (const CMat& m : g.rep) pscale = std::max(pscale, op_norm(m));

    std::vector<CMat> pistar(static_cast<size_t>(d));
    for (Index i = 0; i < d; ++i) pistar[i] = g.pi(alg.star(alg.basis(i)));
    if (r > 0) {
        const SesquiForm& gram = g.quotient.gram;
        double gscale = max_abs(gram.coeffs());
        Rng rng(seed);
        double worst = 0.0;
        for (Index t = 0; t < trials; ++t) {
            CVec xi = random_unit_vector(rng, r);
            CVec eta = random_unit_vector(rng, r);
            for (Index i = 0; i < d; ++i) {
                CVec diff = gram.eval(g.rep[i] * xi, eta) - gram.eval(xi, pistar[i] * eta);
                worst = std::max(worst, max_abs(diff));
            }
        }
        rep.adjoint_residual = detail::relative(worst, gscale);
    }
    double hom = 0.0;
    for (Index i = 0; i < d; ++i)
        for (Index c : alg.a0_indices()) {
            CMat lhs = g.pi(alg.product(alg.basis(i), alg.basis(c)));
            hom = std::max(hom, max_abs(CMat(lhs - g.rep[i] * g.rep[c])));
        }
    rep.homomorphism_residual = hom / pscale;

    std::vector<Index> a0 = alg.a0_indices();
    CMat span(r, static_cast<Index>(a0.size()));
    for (size_t k = 0; k < a0.size(); ++k) span.col(static_cast<Index>(k)) = g.rep[a0[k]] * g.cyclic;
    rep.cyclic_rank = numerical_rank(span);

    double fac = 0.0;
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
            CVec v = r > 0 ? g.quotient.gram.eval(g.rep[i] * g.cyclic, g.rep[j] * g.cyclic)
                           : CVec::Zero(f.target().flat_size());
            fac = std::max(fac, max_abs(CVec(v - f.entry(i, j))));
        }
    rep.factorization_residual = detail::relative(fac, fscale);
    rep.unit_residual = max_abs(CMat(g.pi(alg.unit) - CMat::Identity(r, r)));

    rep.passed = rep.adjoint_residual <= tol && rep.homomorphism_residual <= tol &&
                 rep.factorization_residual <= tol && rep.unit_residual <= tol &&
                 rep.well_definedness_residual <= tol && rep.cyclic_rank == r;
    return rep;
}

/// Phi'(a, b) = <pi(a) xi, pi(b) xi>, the form recovered from a representation.
inline SesquiForm factored_form(const GnsRep& g) {
    Index d = g.algebra->dim;
    Index r = g.rank();
    CMat a(r, d);
    for (Index i = 0; i < d; ++i) a.col(i) = g.rep[i] * g.cyclic;
    if (r == 0) return SesquiForm::zero(g.quotient.target(), d, g.algebra);
    return SesquiForm(g.quotient.target(), d, pull_back_coeffs(g.quotient.gram, a), g.algebra);
}

struct StateGns {
    GnsRep gns;
    CVec eta;
    /// max over basis a, b, c of |omega(b* a c) - <pi(a) Lambda(c), Lambda(b)>|
    double triple_residual = 0.0;
    /// max over basis a of |omega(a) - <pi(a) eta, eta>|
    double state_residual = 0.0;
};

inline StateGns gns_from_state(const LinearPositiveMap& w, const GnsOptions& opt = {}) {
    if (!w.algebra->a0_full()) throw PreconditionError("state construction needs A = A0");
    const QuasiAlgebra& alg = *w.algebra;
    SesquiForm f = w.induced_form();
    StateGns s;
    s.gns = build_gns(f, opt);
    s.eta = s.gns.cyclic;
    Index d = alg.dim;
    Index r = s.gns.rank();
    double scale = max_abs(w.images);
    const CMat& lam = s.gns.quotient.lambda;
    auto inner = [&](const CVec& x, const CVec& y) {
        return r > 0 ? s.gns.quotient.gram.eval(x, y) : CVec(CVec::Zero(w.target.flat_size()));
    };
    double tri = 0.0, st = 0.0;
    for (Index a = 0; a < d; ++a) {
        st = std::max(st, max_abs(CVec(w.apply(alg.basis(a)) - inner(s.gns.rep[a] * s.eta, s.eta))));
        for (Index b = 0; b < d; ++b)
            for (Index c = 0; c < d; ++c) {
                CVec lhs = w.apply(alg.product(alg.star(alg.basis(b)), alg.product(alg.basis(a), alg.basis(c))));
                CVec rhs = inner(s.gns.rep[a] * lam.col(c), lam.col(b));
                tri = std::max(tri, max_abs(CVec(lhs - rhs)));
            }
    }
    s.triple_residual = detail::relative(tri, scale);
    s.state_residual = detail::relative(st, scale);
    return s;
}

}  // namespace opmod
