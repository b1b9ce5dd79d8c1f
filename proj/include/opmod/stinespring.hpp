#pragma once

#include "opmod/gns.hpp"

namespace opmod {

/// S_Y(X)-valued sesquilinear map on A, stored over the tensor basis a_i (x) x_k with index
/// u = i*m + k: column u*(d*m) + w holds Phi(a_i, a_j)(x_k, x_l) for w = j*m + l.
class CPForm {
public:
    CPForm() = default;
    CPForm(AlgebraPtr algebra, Index m, NormSpec fiber, BimoduleSpace target, CMat coeffs,
           std::optional<double> declared_bound = std::nullopt)
        : algebra_(std::move(algebra)), m_(m), fiber_(fiber), declared_bound_(declared_bound) {
        if (!algebra_) throw ShapeError("completely positive form needs an algebra");
        if (m_ < 1) throw ShapeError("fiber dimension must be positive");
        if (fiber_.coord_size() != m_) throw ShapeError("fiber norm does not match the fiber dimension");
        tensor_ = SesquiForm(std::move(target), algebra_->dim * m_, std::move(coeffs));
    }

    static CPForm from_tensor(const SesquiForm& f, AlgebraPtr algebra, Index m, NormSpec fiber,
                              std::optional<double> declared_bound = std::nullopt) {
        return CPForm(std::move(algebra), m, fiber, f.target(), f.coeffs(), declared_bound);
    }

    /// Build from a callback entry(i, j, k, l) returning target coordinates.
    template <class F>
    static CPForm from_entries(AlgebraPtr algebra, Index m, NormSpec fiber, const BimoduleSpace& target, F&& entry,
                               std::optional<double> declared_bound = std::nullopt) {
        Index d = algebra->dim;
        Index big = d * m;
        CMat c(target.flat_size(), big * big);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                for (Index k = 0; k < m; ++k)
                    for (Index l = 0; l < m; ++l) c.col((i * m + k) * big + (j * m + l)) = entry(i, j, k, l);
        return CPForm(std::move(algebra), m, fiber, target, std::move(c), declared_bound);
    }

    const AlgebraPtr& algebra() const { return algebra_; }
    Index d() const { return algebra_->dim; }
    Index m() const { return m_; }
    Index tensor_dim() const { return d() * m_; }
    const NormSpec& fiber() const { return fiber_; }
    const BimoduleSpace& target() const { return tensor_.target(); }
    const CMat& coeffs() const { return tensor_.coeffs(); }
    const std::optional<double>& declared_bound() const { return declared_bound_; }

    CVec entry(Index i, Index j, Index k, Index l) const { return tensor_.entry(i * m_ + k, j * m_ + l); }

    /// Phi(a, b)(x, y) for coordinate vectors.
    CVec eval(const CVec& a, const CVec& b, const CVec& x, const CVec& y) const {
        return tensor_.eval(kron(a, x), kron(b, y));
    }

    const SesquiForm& tensor_form() const { return tensor_; }

    CPForm scaled(double c) const {
        return CPForm(algebra_, m_, fiber_, target(), c * coeffs(), declared_bound_ ? std::optional<double>(c * *declared_bound_) : std::nullopt);
    }

    static CVec kron(const CVec& a, const CVec& x) {
        CVec out(a.size() * x.size());
        for (Index i = 0; i < a.size(); ++i) out.segment(i * x.size(), x.size()) = a(i) * x;
        return out;
    }

private:
    AlgebraPtr algebra_;
    Index m_ = 1;
    NormSpec fiber_;
    SesquiForm tensor_;
    std::optional<double> declared_bound_;
};

/// The sesquilinear extension to A (x) X as a (d*m)-dimensional form.
inline SesquiForm extend_to_tensor(const CPForm& f) { return f.tensor_form(); }

/// Finite family a_n (x) x_n read off a tensor vector: a_n = basis element n, x_n = block n.
struct TensorWitness {
    std::vector<CVec> a;
    std::vector<CVec> x;
};

inline TensorWitness decode_tensor(const CVec& z, Index d, Index m) {
    TensorWitness w;
    for (Index i = 0; i < d; ++i) {
        CVec xi = z.segment(i * m, m);
        if (xi.norm() == 0.0) continue;
        w.a.push_back(CVec::Unit(d, i));
        w.x.push_back(xi);
    }
    return w;
}

/// Complete positivity as positivity of the tensor extension.
inline PositivityReport check_cp(const CPForm& f, const PositivityOptions& opt = {}) {
    return check_positive(f.tensor_form(), opt);
}

struct BoundValue {
    double value = 0.0;
    std::string method;
};

/// Declared bound if present, else c_A^2 c_X^2 max_l lambda_max(G_l) over the dominating
/// functionals of the target; an upper bound for positive extensions.
inline BoundValue bound_constant(const CPForm& f) {
    if (f.declared_bound()) return {*f.declared_bound(), "declared"};
    DominatingFunctionals dom = dominating_functionals(f.target());
    double lmax = 0.0;
    for (const CVec& l : dom.functionals)
        lmax = std::max(lmax, hermitian_max_eig(f.tensor_form().pair_with(l)).value);
    double ca = f.algebra()->norm_a.l2_constant();
    double cx = f.fiber().l2_constant();
    return {ca * ca * cx * cx * lmax, "certified-upper"};
}

/// Sampled lower estimate of sup ||Phi(a,b)(x,y)|| / (||a|| ||b|| ||x|| ||y||).
inline double bound_estimate(const CPForm& f, Index trials = 1000, std::uint64_t seed = 1) {
    Rng rng(seed);
    const QuasiAlgebra& alg = *f.algebra();
    double best = 0.0;
    NormOptions no = NormOptions::light(seed);
    for (Index t = 0; t < trials; ++t) {
        CVec a = t == 0 ? alg.unit : gaussian_vector(rng, f.d());
        CVec b = t == 0 ? alg.unit : gaussian_vector(rng, f.d());
        CVec x = gaussian_vector(rng, f.m()), y = gaussian_vector(rng, f.m());
        double den = alg.norm_a.eval(a) * alg.norm_a.eval(b) * f.fiber().eval(x) * f.fiber().eval(y);
        if (den == 0.0) continue;
        best = std::max(best, norm(f.target(), f.eval(a, b, x, y), no).value / den);
    }
    return best;
}

// ---------------------------------------------------------------- Stinespring triple

struct StinespringTriple {
    AlgebraPtr algebra;
    Index m = 1;
    NormSpec fiber;
    QuotientSpace quotient;
    std::vector<CMat> rep;
    /// r x m, column k is Lambda(e (x) x_k).
    CMat v;
    double bound_m = 0.0;
    std::string bound_method;
    double unit_norm = 0.0;
    double v_norm_sq = 0.0;
    std::string v_method;
    double invariance_residual = 0.0;
    double factorization_residual = 0.0;
    double well_definedness_residual = 0.0;
    Index span_rank = 0;
    bool bound_ok = true;

    Index rank() const { return quotient.rank; }

    CMat pi(const CVec& a) const {
        CMat out = CMat::Zero(rank(), rank());
        for (Index i = 0; i < a.size(); ++i)
            if (a(i) != cplx(0.0)) out += a(i) * rep[i];
        return out;
    }

    /// Columns pi(a_i) V x_k in tensor order; spans the quotient.
    CMat spanning_vectors() const {
        Index d = algebra->dim;
        CMat w(rank(), d * m);
        for (Index i = 0; i < d; ++i) w.middleCols(i * m, m) = rep[i] * v;
        return w;
    }

    /// Phi(e, e) as a form on the fiber: x, y -> <V x, V y>.
    SesquiForm unit_fiber_form() const {
        if (rank() == 0) return SesquiForm::zero(quotient.target(), m);
        return SesquiForm(quotient.target(), m, pull_back_coeffs(quotient.gram, v));
    }
};

struct StinespringOptions {
    double rank_tol = -1.0;
    double tol = 1e-8;
    double bound_tol = 1e-9;
    std::uint64_t seed = 1;
    Index v_samples = 4096;
    bool check_cp = true;
    PositivityOptions cp{PositivityMode::Auto, 200, 1e-10, 1, 4, 1};
    QuotientOptions quotient;
};

/// sup over ||x||_X <= 1 of ||Phi(x, x)|| for a positive form on the fiber.
inline BoundValue fiber_sup(const SesquiForm& f, const NormSpec& fiber, Index samples, std::uint64_t seed) {
    Index m = f.dim();
    DominatingFunctionals dom = dominating_functionals(f.target());
    auto value = [&](const CVec& x) {
        double nx = fiber.eval(x);
        if (nx == 0.0) return 0.0;
        return cone_norm(f.target(), f.eval(x, x)) / (nx * nx);
    };
    bool euclid = fiber.kind == NormKind::Euclidean || fiber.kind == NormKind::Frobenius;
    if (euclid && dom.exact) {
        double best = 0.0;
        for (const CVec& l : dom.functionals) best = std::max(best, hermitian_max_eig(f.pair_with(l)).value);
        return {best, "exact"};
    }
    Rng rng(seed);
    std::vector<CVec> cands;
    for (Index k = 0; k < m; ++k) cands.push_back(CVec::Unit(m, k));
    bool matrix_fiber = fiber.kind == NormKind::Operator || fiber.kind == NormKind::Frobenius;
    for (Index s = 0; s < samples; ++s) {
        if (matrix_fiber && s % 2 == 0) cands.push_back(flatten(haar_unitary(rng, fiber.n)));
        else cands.push_back(gaussian_vector(rng, m));
    }
    auto polish = [&](CVec x) {
        double best = value(x);
        for (int it = 0; it < 20; ++it) {
            CVec y = f.eval(x, x);
            CVec lbest;
            double lval = -1.0;
            for (const CVec& l : dom.functionals) {
                double v = (l.transpose() * y)(0).real();
                if (v > lval) { lval = v; lbest = l; }
            }
            CVec z = hermitian_max_eig(f.pair_with(lbest)).vector.conjugate();
            CVec nx = z;
            if (matrix_fiber) {
                CMat zm = unflatten(z, fiber.n, fiber.n);
                nx = flatten(polar_unitary(zm));
                best = std::max(best, value(z));
            }
            double v = value(nx);
            if (v <= best * (1.0 + 1e-14)) { best = std::max(best, v); break; }
            best = v;
            x = nx;
        }
        return best;
    };
    std::vector<std::pair<double, size_t>> vals;
    for (size_t i = 0; i < cands.size(); ++i) vals.emplace_back(value(cands[i]), i);
    std::stable_sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.first > b.first; });
    double best = vals.empty() ? 0.0 : vals.front().first;
    for (size_t i = 0; i < std::min<size_t>(4, vals.size()); ++i) best = std::max(best, polish(cands[vals[i].second]));
    return {best, "witness"};
}

inline StinespringTriple build_stinespring(const CPForm& f, const StinespringOptions& opt = {}) {
    const QuasiAlgebra& alg = *f.algebra();
    Index d = f.d(), m = f.m(), big = f.tensor_dim();
    if (opt.check_cp) {
        PositivityOptions po = opt.cp;
        po.seed = derive_seed(opt.seed, "cp");
        PositivityReport pr = check_cp(f, po);
        if (!pr.ok()) throw PreconditionError("form is not completely positive (counterexample found)");
    }
    InvarianceReport inv = tensor_left_invariance(f.tensor_form(), alg, m, opt.tol);
    if (!inv.passed)
        throw PreconditionError("form is not left-invariant (residual " + std::to_string(inv.residual) + ")");
    StinespringTriple t;
    t.algebra = f.algebra();
    t.m = m;
    t.fiber = f.fiber();
    t.invariance_residual = inv.residual;
    QuotientOptions qo = opt.quotient;
    if (opt.rank_tol > 0) qo.rank_tol = opt.rank_tol;
    t.quotient = build_quotient(f.tensor_form(), qo);
    const CMat& lam = t.quotient.lambda;
    Index r = t.quotient.rank;
    CMat sec = detail::a0_section(lam, alg.a0_mask, m);
    CMat im = CMat::Identity(m, m);
    auto lift = [&](const CMat& a) {
        CMat out = CMat::Zero(big, big);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                if (a(i, j) != cplx(0.0)) out.block(i * m, j * m, m, m) = a(i, j) * im;
        return out;
    };
    std::vector<CMat> lifted;
    for (Index i = 0; i < d; ++i) {
        lifted.push_back(lift(alg.structure[i]));
        t.rep.push_back(lam * lifted.back() * sec);
    }
    CMat ue(big, m);
    for (Index k = 0; k < m; ++k) ue.col(k) = CPForm::kron(alg.unit, CVec::Unit(m, k));
    t.v = lam * ue;

    CMat w = t.spanning_vectors();
    t.span_rank = numerical_rank(w);
    double scale = max_abs(f.coeffs());
    if (r > 0) {
        CMat rebuilt = pull_back_coeffs(t.quotient.gram, w);
        t.factorization_residual = detail::relative(max_abs(CMat(rebuilt - f.coeffs())), scale);
    } else {
        t.factorization_residual = detail::relative(max_abs(f.coeffs()), scale > 0 ? scale : 1.0);
    }
    t.well_definedness_residual = detail::ideal_residual(lam, alg, detail::a0_kernel(lam, alg.a0_mask, m), m);

    BoundValue bm = bound_constant(f);
    t.bound_m = bm.value;
    t.bound_method = bm.method;
    t.unit_norm = alg.norm_a.eval(alg.unit);
    BoundValue vv = fiber_sup(t.unit_fiber_form(), f.fiber(), opt.v_samples, derive_seed(opt.seed, "v-norm"));
    t.v_norm_sq = vv.value;
    t.v_method = vv.method;
    t.bound_ok = t.v_norm_sq <= t.bound_m * t.unit_norm * t.unit_norm * (1.0 + opt.bound_tol);
    return t;
}

struct TripleReport {
    bool passed = true;
    double factorization_residual = 0.0;
    double well_definedness_residual = 0.0;
    Index rank = 0;
    Index span_rank = 0;
    bool bound_ok = true;
};

inline TripleReport verify_stinespring(const StinespringTriple& t, double tol = 1e-8) {
    TripleReport r;
    r.factorization_residual = t.factorization_residual;
    r.well_definedness_residual = t.well_definedness_residual;
    r.rank = t.rank();
    r.span_rank = t.span_rank;
    r.bound_ok = t.bound_ok;
    r.passed = r.factorization_residual <= tol && r.well_definedness_residual <= tol && r.span_rank == r.rank &&
               r.bound_ok;
    return r;
}

// ---------------------------------------------------------------- unitary equivalence

struct UnitaryEquivalence {
    /// r2 x r1, maps pi_1(a) V_1 x to pi_2(a) V_2 x.
    CMat u;
    double gram_mismatch = 0.0;
    double uv_residual = 0.0;
    double intertwine_residual = 0.0;
    double gram_preservation = 0.0;
    bool passed = true;
};

inline UnitaryEquivalence unitary_equiv(const StinespringTriple& t1, const StinespringTriple& t2, double tol = 1e-8,
                                        Index trials = 100, std::uint64_t seed = 1) {
    if (t1.algebra->dim != t2.algebra->dim || t1.m != t2.m) throw ShapeError("triples have different shapes");
    UnitaryEquivalence ue;
    CMat w1 = t1.spanning_vectors(), w2 = t2.spanning_vectors();
    Index big = w1.cols();
    auto grams = [&](const StinespringTriple& t, const CMat& w) -> CMat {
        if (t.rank() == 0) return CMat::Zero(t.quotient.target().flat_size(), big * big);
        return pull_back_coeffs(t.quotient.gram, w);
    };
    CMat g1 = grams(t1, w1), g2 = grams(t2, w2);
    if (g1.rows() != g2.rows()) throw PreconditionError("triples have different target spaces");
    double scale = std::max(max_abs(g1), max_abs(g2));
    ue.gram_mismatch = detail::relative(max_abs(CMat(g1 - g2)), scale);
    if (ue.gram_mismatch > tol)
        throw PreconditionError("triples decompose different forms (Gram mismatch " + std::to_string(ue.gram_mismatch) + ")");
    Index r1 = t1.rank(), r2 = t2.rank();
    ue.u = r1 > 0 && r2 > 0 ? CMat(w2 * pinv(w1)) : CMat::Zero(r2, r1);
    double vscale = std::max(1.0, max_abs(t2.v));
    ue.uv_residual = max_abs(CMat(ue.u * t1.v - t2.v)) / vscale;
    double pscale = 1.0;
    for (const CMat& p : t2.rep) pscale = std::max(pscale, op_norm(p));
    double inter = 0.0;
    for (Index i = 0; i < t1.algebra->dim; ++i)
        inter = std::max(inter, max_abs(CMat(ue.u * t1.rep[i] - t2.rep[i] * ue.u)));
    ue.intertwine_residual = inter / pscale;
    if (r1 > 0) {
        Rng rng(seed);
        double gs = std::max(max_abs(t1.quotient.gram.coeffs()), 1e-300);
        double worst = 0.0;
        for (Index k = 0; k < trials; ++k) {
            CVec xi = random_unit_vector(rng, r1), eta = random_unit_vector(rng, r1);
            CVec lhs = r2 > 0 ? t2.quotient.gram.eval(ue.u * xi, ue.u * eta) : CVec::Zero(g1.rows());
            worst = std::max(worst, max_abs(CVec(lhs - t1.quotient.gram.eval(xi, eta))));
        }
        ue.gram_preservation = worst / gs;
    }
    ue.passed = ue.uv_residual <= tol && ue.intertwine_residual <= tol && ue.gram_preservation <= tol;
    return ue;
}

// ---------------------------------------------------------------- Radon-Nikodym

struct RNOperator {
    CMat t;
    double gamma = 1.0;
    double norm_estimate = 0.0;
    bool norm_checked = false;
    double tv_residual = 0.0;
    double intertwine_residual = 0.0;
    double factorization_residual = 0.0;
    double containment_residual = 0.0;
    Index rank_phi = 0;
    Index rank_psi = 0;
    bool passed = true;
};

struct RnOptions {
    double tol = 1e-8;
    double bound_tol = 1e-9;
    double cone_tol = 1e-10;
    std::uint64_t seed = 1;
    Index domination_trials = 100;
    Index norm_samples = 4096;
    StinespringOptions build;
};

namespace detail {

/// sup ||T u||_Psi / ||u||_Phi over sampled u and the coordinate vectors.
inline double rn_norm_estimate(const CMat& t, const SesquiForm& gphi, const SesquiForm& gpsi, Index samples,
                               std::uint64_t seed) {
    Index r = t.cols();
    if (r == 0) return 0.0;
    Rng rng(seed);
    double best = 0.0;
    auto ratio = [&](const CVec& u) {
        double den = cone_norm(gphi.target(), gphi.eval(u, u));
        if (den <= 0.0) return 0.0;
        CVec tu = t * u;
        double num = t.rows() > 0 ? cone_norm(gpsi.target(), gpsi.eval(tu, tu)) : 0.0;
        return std::sqrt(std::max(0.0, num) / den);
    };
    for (Index k = 0; k < r; ++k) best = std::max(best, ratio(CVec::Unit(r, k)));
    for (Index s = 0; s < samples; ++s) best = std::max(best, ratio(random_unit_vector(rng, r)));
    return best;
}

inline void check_domination(const SesquiForm& psi, const SesquiForm& phi, double gamma, Index d, Index m,
                             Index trials, double tol, std::uint64_t seed) {
    for (Index big_n : {1, 2, 4}) {
        for (Index t = 0; t < trials; ++t) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(big_n * 1000003 + t)));
            CVec z = CVec::Zero(d * m);
            for (Index n = 0; n < big_n; ++n) z += CPForm::kron(gaussian_vector(rng, d), gaussian_vector(rng, m));
            CVec y = gamma * phi.eval(z, z) - psi.eval(z, z);
            if (!cone_contains(phi.target(), y, tol, &rng))
                throw PreconditionError("domination fails: gamma*Phi - Psi leaves the cone on a sum of " +
                                        std::to_string(big_n) + " elementary tensors");
        }
    }
}

inline double null_containment(const SesquiForm& psi, const CMat& null_basis) {
    double scale = max_abs(psi.coeffs());
    double worst = 0.0;
    for (Index k = 0; k < null_basis.cols(); ++k) {
        CVec v = null_basis.col(k);
        worst = std::max(worst, norm_upper(psi.target(), psi.eval(v, v)));
    }
    return relative(worst, scale);
}

}  // namespace detail

/// Intertwiner T with T Lambda_Phi(u) = Lambda_Psi(u) for Psi dominated by gamma Phi.
inline RNOperator radon_nikodym(const CPForm& psi, const CPForm& phi, double gamma, const RnOptions& opt = {}) {
    if (psi.d() != phi.d() || psi.m() != phi.m() || psi.target() != phi.target())
        throw ShapeError("Radon-Nikodym pair must share algebra, fiber and target");
    if (!(gamma > 0)) throw PreconditionError("gamma must be positive");
    detail::check_domination(psi.tensor_form(), phi.tensor_form(), gamma, phi.d(), phi.m(), opt.domination_trials,
                             opt.cone_tol, derive_seed(opt.seed, "domination"));
    StinespringOptions so = opt.build;
    so.seed = derive_seed(opt.seed, "build");
    StinespringTriple tphi = build_stinespring(phi, so);
    StinespringTriple tpsi = build_stinespring(psi, so);
    RNOperator rn;
    rn.gamma = gamma;
    rn.rank_phi = tphi.rank();
    rn.rank_psi = tpsi.rank();
    rn.containment_residual = detail::null_containment(psi.tensor_form(), tphi.quotient.null.basis);
    if (rn.containment_residual > opt.tol)
        throw PreconditionError("null space of Phi is not contained in that of Psi");
    rn.t = tpsi.quotient.lambda * tphi.quotient.lambda.adjoint();
    double vscale = std::max(1.0, max_abs(tpsi.v));
    rn.tv_residual = max_abs(CMat(rn.t * tphi.v - tpsi.v)) / vscale;
    double pscale = 1.0;
    for (const CMat& p : tpsi.rep) pscale = std::max(pscale, op_norm(p));
    double inter = 0.0;
    for (Index i = 0; i < phi.d(); ++i)
        inter = std::max(inter, max_abs(CMat(rn.t * tphi.rep[i] - tpsi.rep[i] * rn.t)));
    rn.intertwine_residual = inter / pscale;
    double scale = max_abs(psi.coeffs());
    if (rn.rank_psi > 0) {
        CMat rebuilt = pull_back_coeffs(tpsi.quotient.gram, rn.t * tphi.spanning_vectors());
        rn.factorization_residual = detail::relative(max_abs(CMat(rebuilt - psi.coeffs())), scale);
    } else {
        rn.factorization_residual = detail::relative(max_abs(psi.coeffs()), scale > 0 ? scale : 1.0);
    }
    if (rn.rank_phi > 0)
        rn.norm_estimate = detail::rn_norm_estimate(rn.t, tphi.quotient.gram,
                                                    rn.rank_psi > 0 ? tpsi.quotient.gram : tphi.quotient.gram,
                                                    opt.norm_samples, derive_seed(opt.seed, "rn-norm"));
    rn.norm_checked = phi.target().order_preserving();
    bool norm_ok = !rn.norm_checked || rn.norm_estimate <= std::sqrt(gamma) * (1.0 + opt.bound_tol);
    rn.passed = rn.tv_residual <= opt.tol && rn.intertwine_residual <= opt.tol &&
                rn.factorization_residual <= opt.tol && norm_ok;
    return rn;
}

/// For Psi = c Phi: distance between T and sqrt(c) J, with J the unitary identifying the
/// triple of Phi with (pi_Psi, V_Psi / sqrt(c)).
inline double rn_scaling_residual(const CPForm& phi, double c, const RNOperator& rn, const StinespringOptions& so = {}) {
    StinespringTriple tphi = build_stinespring(phi, so);
    StinespringTriple tpsi = build_stinespring(phi.scaled(c), so);
    StinespringTriple rescaled = tpsi;
    rescaled.v = tpsi.v / std::sqrt(c);
    UnitaryEquivalence j = unitary_equiv(tphi, rescaled);
    return max_abs(CMat(rn.t - std::sqrt(c) * j.u));
}

/// Radon-Nikodym for positive forms over an algebra: T pi_Phi(a) xi_Phi = pi_Psi(a) xi_Psi.
inline RNOperator radon_nikodym_positive(const SesquiForm& psi, const SesquiForm& phi, double gamma,
                                         const RnOptions& opt = {}) {
    if (!phi.target().order_preserving())
        throw PreconditionError(phi.target().name() + " is not order-preserving");
    if (psi.dim() != phi.dim() || psi.target() != phi.target())
        throw ShapeError("Radon-Nikodym pair must share dimension and target");
    if (!phi.algebra()) throw PreconditionError("positive Radon-Nikodym needs forms over an algebra");
    SesquiForm psi_a = psi.algebra() ? psi : psi.with_algebra(phi.algebra());
    detail::check_domination(psi_a, phi, gamma, phi.dim(), 1, opt.domination_trials, opt.cone_tol,
                             derive_seed(opt.seed, "domination"));
    GnsRep gphi = build_gns(phi);
    GnsRep gpsi = build_gns(psi_a);
    RNOperator rn;
    rn.gamma = gamma;
    rn.rank_phi = gphi.rank();
    rn.rank_psi = gpsi.rank();
    rn.containment_residual = detail::null_containment(psi_a, gphi.quotient.null.basis);
    if (rn.containment_residual > opt.tol)
        throw PreconditionError("null space of Phi is not contained in that of Psi");
    rn.t = gpsi.quotient.lambda * gphi.quotient.lambda.adjoint();
    rn.tv_residual = max_abs(CVec(rn.t * gphi.cyclic - gpsi.cyclic)) / std::max(1.0, max_abs(gpsi.cyclic));
    double pscale = 1.0;
    for (const CMat& p : gpsi.rep) pscale = std::max(pscale, op_norm(p));
    double inter = 0.0;
    for (Index i = 0; i < phi.dim(); ++i)
        inter = std::max(inter, max_abs(CMat(rn.t * gphi.rep[i] - gpsi.rep[i] * rn.t)));
    rn.intertwine_residual = inter / pscale;
    double scale = max_abs(psi_a.coeffs());
    if (rn.rank_psi > 0) {
        CMat a(rn.rank_phi, phi.dim());
        for (Index i = 0; i < phi.dim(); ++i) a.col(i) = gphi.rep[i] * gphi.cyclic;
        CMat rebuilt = pull_back_coeffs(gpsi.quotient.gram, rn.t * a);
        rn.factorization_residual = detail::relative(max_abs(CMat(rebuilt - psi_a.coeffs())), scale);
    } else {
        rn.factorization_residual = detail::relative(max_abs(psi_a.coeffs()), scale > 0 ? scale : 1.0);
    }
    if (rn.rank_phi > 0)
        rn.norm_estimate = detail::rn_norm_estimate(rn.t, gphi.quotient.gram,
                                                    rn.rank_psi > 0 ? gpsi.quotient.gram : gphi.quotient.gram,
                                                    opt.norm_samples, derive_seed(opt.seed, "rn-norm"));
    rn.norm_checked = true;
    rn.passed = rn.tv_residual <= opt.tol && rn.intertwine_residual <= opt.tol &&
                rn.factorization_residual <= opt.tol && rn.norm_estimate <= std::sqrt(gamma) * (1.0 + opt.bound_tol);
    return rn;
}

// ---------------------------------------------------------------- relative complete positivity

/// Sesquilinear map C^n1 x C^n2 -> C^out, linear in the first argument; column k*n2 + l
/// holds the value on (e_k, e_l).
struct SesquiMap {
    Index first_dim = 1;
    Index second_dim = 1;
    Index out_dim = 1;
    CMat coeffs;
    std::optional<double> declared_norm;

    CVec apply(const CVec& x, const CVec& y) const {
        CVec w(first_dim * second_dim);
        for (Index k = 0; k < first_dim; ++k)
            for (Index l = 0; l < second_dim; ++l) w(k * second_dim + l) = x(k) * std::conj(y(l));
        return coeffs * w;
    }

    CVec column(Index k, Index l) const { return coeffs.col(k * second_dim + l); }
};

/// Gamma(T1, T2) = T1 T2* on M_q in the matrix-unit basis; norm 1 declared.
inline SesquiMap matrix_product_gamma(Index q) {
    SesquiMap g;
    g.first_dim = g.second_dim = g.out_dim = q * q;
    g.coeffs = CMat::Zero(q * q, q * q * q * q);
    // E_ab E_cd* = E_ab E_dc = delta_bd E_ac
    for (Index a = 0; a < q; ++a)
        for (Index b = 0; b < q; ++b)
            for (Index c = 0; c < q; ++c) g.coeffs(a * q + c, (a * q + b) * q * q + (c * q + b)) = 1.0;
    g.declared_norm = 1.0;
    return g;
}

/// Psi(Z, X) = X* Z on M_q; norm 1 declared.
inline SesquiMap adjoint_product_psi(Index q) {
    SesquiMap p;
    p.first_dim = p.second_dim = p.out_dim = q * q;
    p.coeffs = CMat::Zero(q * q, q * q * q * q);
    // E_cd* E_ab = E_dc E_ab = delta_ca E_db
    for (Index a = 0; a < q; ++a)
        for (Index b = 0; b < q; ++b)
            for (Index d = 0; d < q; ++d) p.coeffs(d * q + b, (a * q + b) * q * q + (a * q + d)) = 1.0;
    p.declared_norm = 1.0;
    return p;
}

inline void require_operator_table(const SesquiForm& f) {
    if (!f.algebra()) throw ShapeError("operator-valued table needs an algebra");
    if (f.target().kind() != SpaceKind::OpMap || f.target().domain().kind != DomainKind::Matrix)
        throw ShapeError("operator-valued table needs an OpMap target on a full matrix domain");
}

/// Table Phi(a_i, a_j)(Gamma(x_k, x_l)) for Phi with values in B(X, Y), X = M_q.
inline CPForm gamma_lift(const SesquiForm& phi, const SesquiMap& gamma, NormSpec fiber) {
    require_operator_table(phi);
    const BimoduleSpace& t = phi.target();
    Index q = t.domain().dim;
    if (gamma.first_dim != q * q || gamma.second_dim != q * q || gamma.out_dim != q * q)
        throw ShapeError("Gamma must act on the operator domain");
    Index m = q * q;
    return CPForm::from_entries(phi.algebra(), m, fiber, t.codomain(), [&](Index i, Index j, Index k, Index l) {
        return CVec(op_images(t, phi.entry(i, j)) * gamma.column(k, l));
    });
}

/// Table Psi(Phi(a_i, a_j) x_k, x_l) for Phi with values in B(X, Z), X = M_q, Psi: Z x X -> Y.
inline CPForm psi_lift(const SesquiForm& phi, const SesquiMap& psi, const BimoduleSpace& out, NormSpec fiber) {
    require_operator_table(phi);
    const BimoduleSpace& t = phi.target();
    Index q = t.domain().dim;
    Index zf = t.codomain().flat_size();
    if (psi.first_dim != zf || psi.second_dim != q * q || psi.out_dim != out.flat_size())
        throw ShapeError("Psi must map Z x X into the output space");
    Index m = q * q;
    return CPForm::from_entries(phi.algebra(), m, fiber, out, [&](Index i, Index j, Index k, Index l) {
        CVec z = op_images(t, phi.entry(i, j)).col(k);
        CVec acc = CVec::Zero(out.flat_size());
        for (Index c = 0; c < zf; ++c)
            if (z(c) != cplx(0.0)) acc += z(c) * psi.column(c, l);
        return acc;
    });
}

struct LiftReport {
    bool passed = true;
    std::string cp_verdict;
    double v_norm_sq = 0.0;
    std::string v_method;
    double unit_map_norm = 0.0;
    std::string unit_map_method;
    double map_norm = 1.0;
    std::string map_norm_method = "declared";
    bool v_bound_ok = true;
    double display_worst_margin = -std::numeric_limits<double>::infinity();
    bool operator_checked = false;
    double operator_worst_margin = -std::numeric_limits<double>::infinity();
    double factorization_residual = 0.0;
};

struct LiftOptions {
    Index trials = 200;
    double tol = 1e-9;
    std::uint64_t seed = 1;
    /// Gamma maps the unit ball onto itself, or Psi is norming; enables the operator-norm check.
    bool unit_ball_property = true;
    StinespringOptions build;
};

namespace detail {

/// Lower estimate of the norm of a sesquilinear map on M_q x M_q (operator norms).
inline double sesqui_map_norm_estimate(const SesquiMap& g, Index q, const BimoduleSpace* out, Index trials,
                                       std::uint64_t seed) {
    Rng rng(seed);
    double best = 0.0;
    for (Index t = 0; t < trials; ++t) {
        CVec x = flatten(t == 0 ? CMat(CMat::Identity(q, q)) : haar_unitary(rng, q));
        CVec y = flatten(t == 0 ? CMat(CMat::Identity(q, q)) : haar_unitary(rng, q));
        CVec v = g.apply(x, y);
        double nv = out ? norm(*out, v).value : op_norm(unflatten(v, q, q));
        best = std::max(best, nv);
    }
    return best;
}

inline LiftReport verify_lift(const CPForm& lifted, const SesquiForm& phi, double map_norm, const std::string& map_method,
                              const LiftOptions& opt) {
    LiftReport r;
    r.map_norm = map_norm;
    r.map_norm_method = map_method;
    PositivityOptions po = opt.build.cp;
    po.seed = derive_seed(opt.seed, "cp");
    PositivityReport pr = check_cp(lifted, po);
    r.cp_verdict = to_string(pr.verdict);
    if (!pr.ok()) {
        r.passed = false;
        return r;
    }
    StinespringOptions so = opt.build;
    so.check_cp = false;
    so.seed = derive_seed(opt.seed, "build");
    StinespringTriple t = build_stinespring(lifted, so);
    r.factorization_residual = t.factorization_residual;
    r.v_norm_sq = t.v_norm_sq;
    r.v_method = t.v_method;
    const QuasiAlgebra& alg = *phi.algebra();
    CVec pee = phi.eval(alg.unit, alg.unit);
    NormResult nee = norm(phi.target(), pee);
    r.unit_map_norm = nee.value;
    r.unit_map_method = to_string(nee.method);
    r.v_bound_ok = r.v_norm_sq <= r.unit_map_norm * map_norm * (1.0 + opt.tol) + opt.tol;

    Rng rng(derive_seed(opt.seed, "display"));
    const BimoduleSpace& y = lifted.target();
    for (Index k = 0; k < opt.trials; ++k) {
        CVec a = gaussian_vector(rng, lifted.d()), b = gaussian_vector(rng, lifted.d());
        CVec x1 = gaussian_vector(rng, lifted.m()), x2 = gaussian_vector(rng, lifted.m());
        double l = norm(y, lifted.eval(a, b, x1, x2), NormOptions::light(rng())).value;
        double r1 = cone_norm(y, lifted.eval(a, a, x1, x1));
        double r2 = cone_norm(y, lifted.eval(b, b, x2, x2));
        double rhs = std::sqrt(std::max(0.0, r1)) * std::sqrt(std::max(0.0, r2));
        r.display_worst_margin = std::max(r.display_worst_margin, (l - rhs) / std::max(1.0, rhs));
        if (l > rhs * (1.0 + opt.tol) + opt.tol) r.passed = false;
    }
    if (opt.unit_ball_property) {
        r.operator_checked = true;
        NormOptions no;
        no.unitaries = 32;
        no.contractions = 32;
        for (Index k = 0; k < std::max<Index>(1, opt.trials / 10); ++k) {
            CVec a = k == 0 ? alg.unit : gaussian_vector(rng, lifted.d());
            CVec b = gaussian_vector(rng, lifted.d());
            no.seed = rng();
            double l = norm(phi.target(), phi.eval(a, b), no).value;
            double ra = norm(phi.target(), phi.eval(a, a), no).value;
            double rb = norm(phi.target(), phi.eval(b, b), no).value;
            double rhs = std::sqrt(ra) * std::sqrt(rb);
            r.operator_worst_margin = std::max(r.operator_worst_margin, (l - rhs) / std::max(1.0, rhs));
            if (l > rhs * (1.0 + opt.tol) + opt.tol) r.passed = false;
        }
    }
    if (!r.v_bound_ok || t.factorization_residual > opt.build.tol || t.span_rank != t.rank()) r.passed = false;
    return r;
}

}  // namespace detail

inline LiftReport verify_gamma_lift(const SesquiForm& phi, const SesquiMap& gamma, NormSpec fiber,
                                    const LiftOptions& opt = {}) {
    CPForm lifted = gamma_lift(phi, gamma, fiber);
    Index q = phi.target().domain().dim;
    double gn = gamma.declared_norm ? *gamma.declared_norm
                                    : detail::sesqui_map_norm_estimate(gamma, q, nullptr, 256, derive_seed(opt.seed, "gamma-norm"));
    return detail::verify_lift(lifted, phi, gn, gamma.declared_norm ? "declared" : "estimate-lower", opt);
}

inline LiftReport verify_psi_lift(const SesquiForm& phi, const SesquiMap& psi, const BimoduleSpace& out, NormSpec fiber,
                                  const LiftOptions& opt = {}) {
    CPForm lifted = psi_lift(phi, psi, out, fiber);
    Index q = phi.target().domain().dim;
    double pn = 1.0;
    std::string method = "declared";
    if (psi.declared_norm) pn = *psi.declared_norm;
    else {
        // Psi acts on Z x X; sample Z from the unit sphere of the codomain norm
        Rng rng(derive_seed(opt.seed, "psi-norm"));
        const BimoduleSpace& z = phi.target().codomain();
        pn = 0.0;
        for (Index k = 0; k < 256; ++k) {
            CVec zz = random_element(z, rng);
            zz /= norm(z, zz).value;
            CVec x = flatten(haar_unitary(rng, q));
            pn = std::max(pn, norm(out, psi.apply(zz, x)).value);
        }
        method = "estimate-lower";
    }
    return detail::verify_lift(lifted, phi, pn, method, opt);
}

/// Truncated series bound for completely positive forms on elementary tensors a_n (x) x_n.
inline SeriesReport verify_series_cp_cs(const std::vector<CPForm>& forms, const std::vector<CVec>& as,
                                        const std::vector<CVec>& ats, const std::vector<CVec>& xs,
                                        const std::vector<CVec>& xts, double tol = 1e-9) {
    if (forms.size() != as.size() || forms.size() != ats.size() || forms.size() != xs.size() || forms.size() != xts.size())
        throw ShapeError("series lists differ in length");
    std::vector<SesquiForm> tf;
    std::vector<CVec> z, zt;
    for (size_t n = 0; n < forms.size(); ++n) {
        tf.push_back(forms[n].tensor_form());
        z.push_back(CPForm::kron(as[n], xs[n]));
        zt.push_back(CPForm::kron(ats[n], xts[n]));
    }
    SeriesReport r = verify_series_cs(tf, z, zt, tol);
    r.op = "verify_series_cp_cs";
    return r;
}

}  // namespace opmod
