#pragma once

#include "opmod/algebra.hpp"
#include "opmod/bimodule.hpp"
#include "opmod/parallel.hpp"

#include <optional>

namespace opmod {

/// Y-valued sesquilinear map on a d-dimensional space, linear in the first argument.
///
/// Column i*d+j of the coefficient matrix holds the flat coordinates of Phi(a_i, a_j), so
/// Phi(x, y) = coeffs * (x (x) conj(y)).
class SesquiForm {
public:
    SesquiForm() = default;
    SesquiForm(BimoduleSpace target, Index dim, CMat coeffs, AlgebraPtr algebra = nullptr)
        : target_(std::move(target)), dim_(dim), coeffs_(std::move(coeffs)), algebra_(std::move(algebra)) {
        if (dim_ < 0) throw ShapeError("form dimension must be nonnegative");
        if (coeffs_.rows() != target_.flat_size() || coeffs_.cols() != dim_ * dim_)
            throw ShapeError("form table must be " + std::to_string(target_.flat_size()) + " x " +
                             std::to_string(dim_ * dim_));
        if (algebra_ && algebra_->dim != dim_) throw ShapeError("form dimension differs from its algebra");
        for (Index j = 0; j < coeffs_.cols(); ++j)
            if (!all_finite(coeffs_.col(j))) throw ShapeError("form table entries must be finite");
    }

    static SesquiForm zero(BimoduleSpace target, Index dim, AlgebraPtr algebra = nullptr) {
        Index f = target.flat_size();
        return SesquiForm(std::move(target), dim, CMat::Zero(f, dim * dim), std::move(algebra));
    }

    Index dim() const { return dim_; }
    const BimoduleSpace& target() const { return target_; }
    const CMat& coeffs() const { return coeffs_; }
    const AlgebraPtr& algebra() const { return algebra_; }

    CVec entry(Index i, Index j) const { return coeffs_.col(i * dim_ + j); }

    CVec eval(const CVec& x, const CVec& y) const {
        if (x.size() != dim_ || y.size() != dim_) throw ShapeError("form argument has the wrong dimension");
        CVec w(dim_ * dim_);
        for (Index i = 0; i < dim_; ++i)
            for (Index j = 0; j < dim_; ++j) w(i * dim_ + j) = x(i) * std::conj(y(j));
        return coeffs_ * w;
    }

    /// Scalar table G(i,j) = l(Phi(a_i, a_j)) for a functional l on the target.
    CMat pair_with(const CVec& functional) const { return unflatten(coeffs_.transpose() * functional, dim_, dim_); }

    SesquiForm scaled(double c) const { return SesquiForm(target_, dim_, c * coeffs_, algebra_); }
    SesquiForm with_algebra(AlgebraPtr alg) const { return SesquiForm(target_, dim_, coeffs_, std::move(alg)); }

private:
    BimoduleSpace target_;
    Index dim_ = 1;
    CMat coeffs_;
    AlgebraPtr algebra_;
};

/// max_ij |Phi(a_j,a_i) - Phi(a_i,a_j)*|, relative to the largest table coefficient.
inline double hermitian_residual(const SesquiForm& f) {
    double scale = max_abs(f.coeffs());
    if (scale == 0.0) return 0.0;
    double worst = 0.0;
    for (Index i = 0; i < f.dim(); ++i)
        for (Index j = 0; j <= i; ++j)
            worst = std::max(worst, max_abs(CVec(f.entry(j, i) - adjoint_element(f.target(), f.entry(i, j)))));
    return worst / scale;
}

// ---------------------------------------------------------------- positivity

enum class Verdict { VerifiedExact, NoCounterexample, Counterexample, CertifiedSufficient };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::VerifiedExact: return "verified-exact";
        case Verdict::NoCounterexample: return "no-counterexample";
        case Verdict::Counterexample: return "counterexample";
        case Verdict::CertifiedSufficient: return "certified-sufficient";
    }
    return "?";
}

enum class PositivityMode { Auto, Exact, Sampled };

struct PositivityOptions {
    PositivityMode mode = PositivityMode::Auto;
    Index trials = 1000;
    double tol = 1e-10;
    std::uint64_t seed = 1;
    Index refine_starts = 4;
    Index threads = 1;
};

struct PositivityReport {
    Verdict verdict = Verdict::VerifiedExact;
    std::string mode;
    Index trials = 0;
    /// Smallest probe value of Phi(x,x) over unit x found, relative to max(1, ||Phi(x,x)||).
    double min_value = 0.0;
    /// Counterexample x with a positive functional taking a negative value on Phi(x,x).
    std::optional<CVec> witness;
    std::optional<CVec> witness_probe;

    bool ok() const { return verdict != Verdict::Counterexample; }
};

namespace detail {

struct DiagProbe {
    double rel = 0.0;
    double raw = 0.0;
    double herm = 0.0;
    double scale = 1.0;
    CVec functional;
};

inline DiagProbe probe_diagonal(const SesquiForm& f, const CVec& x, Rng* rng) {
    CVec y = f.eval(x, x);
    DiagProbe d;
    d.scale = std::max(1.0, norm_upper(f.target(), y));
    d.herm = hermitian_residual(f.target(), y);
    Probe p = worst_probe(f.target(), y, rng);
    d.raw = p.value;
    d.rel = p.value / d.scale;
    d.functional = p.functional;
    return d;
}

/// Alternate between the worst probe at x and the minimizing x for that probe.
inline DiagProbe refine_descent(const SesquiForm& f, CVec x, Rng* rng, CVec* xout) {
    DiagProbe best = probe_diagonal(f, x, rng);
    *xout = x;
    for (int it = 0; it < 40; ++it) {
        EigenPair m = min_quadratic(f.pair_with(best.functional));
        CVec nx = m.vector;
        DiagProbe next = probe_diagonal(f, nx, rng);
        // the probe from the previous step may already certify a lower value
        double via_old = m.value / std::max(1.0, norm_upper(f.target(), f.eval(nx, nx)));
        if (via_old < next.rel) {
            next.rel = via_old;
            next.raw = m.value;
            next.functional = best.functional;
        }
        if (next.rel >= best.rel - 1e-15) break;
        best = next;
        *xout = nx;
    }
    return best;
}

}  // namespace detail

/// Positivity of Phi(x,x) over all x. Exact pointwise Gram test for commutative targets,
/// otherwise sampling followed by alternating descent; PSD-cone targets additionally get the
/// sufficient lifted-block test.
inline PositivityReport check_positive(const SesquiForm& f, const PositivityOptions& opt = {}) {
    const BimoduleSpace& t = f.target();
    Index d = f.dim();
    PositivityReport r;
    bool exact = opt.mode == PositivityMode::Exact || (opt.mode == PositivityMode::Auto && t.is_commutative());
    if (opt.mode == PositivityMode::Exact && !t.is_commutative())
        throw UnsupportedError("exact positivity test needs a commutative target, got " + t.name());

    if (exact) {
        r.mode = "exact";
        r.min_value = std::numeric_limits<double>::infinity();
        Index worst_c = 0;
        CVec worst_x;
        for (Index c = 0; c < t.flat_size(); ++c) {
            CMat g(d, d);
            for (Index i = 0; i < d; ++i)
                for (Index j = 0; j < d; ++j) g(i, j) = f.coeffs()(c, i * d + j);
            double scale = std::max(1.0, op_norm(g));
            double herm = max_abs(CMat(g - g.adjoint()));
            EigenPair m = min_quadratic(g);
            double rel = m.value / scale;
            if (herm > opt.tol * scale) rel = std::min(rel, -herm / scale);
            if (rel < r.min_value) {
                r.min_value = rel;
                worst_c = c;
                worst_x = m.vector;
            }
        }
        if (r.min_value < -opt.tol) {
            r.verdict = Verdict::Counterexample;
            CVec e = CVec::Zero(t.flat_size());
            e(worst_c) = 1.0;
            CMat g(d, d);
            for (Index i = 0; i < d; ++i)
                for (Index j = 0; j < d; ++j) g(i, j) = f.coeffs()(worst_c, i * d + j);
            if (max_abs(CMat(g - g.adjoint())) > opt.tol * std::max(1.0, op_norm(g))) {
                // non-real diagonal value: some x among e_i + w e_j with w in {1, i} is complex
                for (Index i = 0; i < d && !r.witness; ++i)
                    for (Index j = 0; j < d && !r.witness; ++j)
                        for (cplx w : {cplx(1.0), cplx(0.0, 1.0)}) {
                            CVec x = CVec::Unit(d, i);
                            if (i != j) x(j) += w;
                            if (std::abs(f.eval(x, x)(worst_c).imag()) > opt.tol * std::max(1.0, op_norm(g))) {
                                r.witness = x;
                                break;
                            }
                        }
            }
            if (!r.witness) r.witness = worst_x;
            r.witness_probe = e;
        } else if (r.min_value == std::numeric_limits<double>::infinity()) {
            r.min_value = 0.0;
        }
        r.verdict = r.min_value < -opt.tol ? Verdict::Counterexample : Verdict::VerifiedExact;
        return r;
    }

    r.mode = "sampled";
    r.trials = opt.trials;
    std::vector<double> vals(static_cast<size_t>(opt.trials));
    std::vector<double> herms(static_cast<size_t>(opt.trials));
    parallel_for(opt.trials, opt.threads, [&](Index i) {
        Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
        CVec x = random_unit_vector(rng, d);
        detail::DiagProbe p = detail::probe_diagonal(f, x, nullptr);
        vals[i] = p.rel;
        herms[i] = p.herm / p.scale;
    });
    // basis vectors and the lowest samples seed the descent
    std::vector<std::pair<double, Index>> order;
    for (Index i = 0; i < opt.trials; ++i) order.emplace_back(vals[i], i);
    std::stable_sort(order.begin(), order.end());
    r.min_value = order.empty() ? 0.0 : order.front().first;

    auto record = [&](const CVec& x, const detail::DiagProbe& p) {
        if (p.rel < r.min_value || !r.witness) {
            if (p.rel < -opt.tol || p.herm / p.scale > opt.tol) {
                r.witness = x;
                r.witness_probe = p.functional;
            }
        }
        r.min_value = std::min(r.min_value, p.rel);
    };

    for (Index i = 0; i < opt.trials; ++i) {
        if (vals[i] < -opt.tol || herms[i] > opt.tol) {
            Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
            CVec x = random_unit_vector(rng, d);
            record(x, detail::probe_diagonal(f, x, nullptr));
            break;
        }
    }
    if (!r.witness) {
        Rng rng(derive_seed(opt.seed, "descent"));
        std::vector<CVec> starts;
        for (Index i = 0; i < d; ++i) starts.push_back(CVec::Unit(d, i));
        for (Index k = 0; k < std::min<Index>(opt.refine_starts, static_cast<Index>(order.size())); ++k) {
            Rng r2(derive_seed(opt.seed, static_cast<std::uint64_t>(order[k].second)));
            starts.push_back(random_unit_vector(r2, d));
        }
        for (const CVec& s : starts) {
            CVec xo;
            detail::DiagProbe p = detail::refine_descent(f, s, &rng, &xo);
            record(xo, p);
            if (r.witness) break;
        }
    }
    if (r.witness) {
        r.verdict = Verdict::Counterexample;
        return r;
    }
    r.verdict = Verdict::NoCounterexample;
    if (t.is_matrix_kind()) {
        Index n = t.size();
        CMat big(d * n, d * n);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j) big.block(i * n, j * n, n, n) = unflatten(f.entry(i, j), n, n);
        double scale = std::max(1.0, op_norm(big));
        if (max_abs(CMat(big - big.adjoint())) <= opt.tol * scale && hermitian_min_eig(big).value >= -opt.tol * scale)
            r.verdict = Verdict::CertifiedSufficient;
    }
    return r;
}

// ---------------------------------------------------------------- left invariance

struct InvarianceReport {
    bool passed = true;
    double residual = 0.0;
    Index worst_a = -1;
};

/// max |Phi((a c) (x) x_k, d (x) x_l) - Phi(c (x) x_k, (a* d) (x) x_l)| over basis a, c, d in A0
/// and fiber basis k, l, for a form on A (x) C^m with index i*m+k. Relative to the table scale.
inline InvarianceReport tensor_left_invariance(const SesquiForm& f, const QuasiAlgebra& alg, Index m, double tol) {
    Index d = alg.dim;
    Index big = d * m;
    if (f.dim() != big) throw ShapeError("form dimension is not algebra dimension times fiber dimension");
    InvarianceReport r;
    double scale = max_abs(f.coeffs());
    if (scale == 0.0) return r;
    std::vector<Index> rows;
    for (Index c : alg.a0_indices())
        for (Index k = 0; k < m; ++k) rows.push_back(c * m + k);
    CMat im = CMat::Identity(m, m);
    auto kron = [&](const CMat& a) {
        CMat out = CMat::Zero(big, big);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                if (a(i, j) != cplx(0.0)) out.block(i * m, j * m, m, m) = a(i, j) * im;
        return out;
    };
    // slice matrices M_f(u, w) = Phi(e_u, e_w)[f]
    Index flat = f.target().flat_size();
    std::vector<CMat> slices(static_cast<size_t>(flat));
    for (Index c = 0; c < flat; ++c) slices[c] = unflatten(f.coeffs().row(c).transpose(), big, big);
    for (Index a = 0; a < d; ++a) {
        CMat la = kron(alg.structure[a]);
        CMat lastar = kron(alg.left_mult(alg.star(alg.basis(a))));
        double worst = 0.0;
        for (Index c = 0; c < flat; ++c) {
            // Phi(A x, y) = x^T A^T M conj(y), Phi(x, B y) = x^T M conj(B) conj(y)
            CMat diff = la.transpose() * slices[c] - slices[c] * lastar.conjugate();
            for (Index u : rows)
                for (Index w : rows) worst = std::max(worst, std::abs(diff(u, w)));
        }
        worst /= scale;
        if (worst > r.residual) {
            r.residual = worst;
            r.worst_a = a;
        }
    }
    r.passed = r.residual <= tol;
    return r;
}

inline InvarianceReport check_left_invariant(const SesquiForm& f, double tol = 1e-10) {
    if (!f.algebra()) throw PreconditionError("left invariance needs a form over an algebra");
    return tensor_left_invariance(f, *f.algebra(), 1, tol);
}

// ---------------------------------------------------------------- null space and Phi-norm

struct NullSpace {
    /// Orthonormal basis of the null space, one column per vector.
    CMat basis;
    /// Orthonormal basis of its complement (right singular vectors above threshold).
    CMat range;
    RVec singular_values;
    double threshold = 0.0;
    Index rank = 0;
    bool degenerate = false;
};

/// Default relative rank tolerance: max(rows, cols) * eps.
inline double default_rank_tol(Index rows, Index cols) { return static_cast<double>(std::max(rows, cols)) * kEps; }

/// Kernel of x -> (Phi(x, a_j))_j, from the SVD of the stacked coefficient matrix.
/// rank_tol <= 0 selects the default; the threshold is rank_tol * sigma_max.
inline NullSpace null_space(const SesquiForm& f, double rank_tol = -1.0) {
    Index d = f.dim();
    Index flat = f.target().flat_size();
    CMat stacked(flat * d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) stacked.block(j * flat, i, flat, 1) = f.entry(i, j);
    Eigen::JacobiSVD<CMat> svd(stacked, Eigen::ComputeFullV);
    NullSpace ns;
    ns.singular_values = svd.singularValues();
    double smax = ns.singular_values.size() ? ns.singular_values(0) : 0.0;
    double rel = rank_tol > 0 ? rank_tol : default_rank_tol(stacked.rows(), stacked.cols());
    ns.threshold = rel * smax;
    Index rank = 0;
    if (smax > 0)
        for (Index i = 0; i < ns.singular_values.size(); ++i)
            if (ns.singular_values(i) > ns.threshold) ++rank;
    ns.rank = rank;
    ns.degenerate = smax == 0.0;
    const CMat& v = svd.matrixV();
    ns.range = v.leftCols(rank);
    ns.basis = v.rightCols(d - rank);
    return ns;
}

/// sqrt(||Phi(x,x)||); throws when Phi(x,x) is found outside the cone.
inline double phi_norm(const SesquiForm& f, const CVec& x, double tol = 1e-10) {
    CVec y = f.eval(x, x);
    ConeCheck c = cone_check(f.target(), y, tol);
    if (!c.contains())
        throw PreconditionError("Phi(x,x) lies outside the cone (probe value " + std::to_string(c.min_probe) + ")");
    return std::sqrt(std::max(0.0, cone_norm(f.target(), y)));
}

// ---------------------------------------------------------------- inequality verifiers

struct CsOptions {
    Index trials = 1000;
    double tol = 1e-9;
    std::uint64_t seed = 1;
    Index threads = 1;
    /// Contraction pairs (S, T) per sampled pair for the operator-valued trace inequality.
    Index intermediate_samples = 2;
    /// Unitary witnesses per operator-valued left side (identity and polish always included).
    Index witness_unitaries = 3;
    double cone_tol = 1e-10;
};

struct CsWitness {
    CVec x1, x2;
    double lhs = 0.0;
    double rhs = 0.0;
    std::string clause;
};

struct InequalityReport {
    std::string op;
    std::uint64_t seed = 0;
    Index trials = 0;
    bool passed = true;
    /// max (L - R) / max(1, R); negative when every pair satisfies the inequality with room.
    double worst_margin = -std::numeric_limits<double>::infinity();
    std::string lhs_method = "exact";
    bool intermediate_checked = false;
    double intermediate_worst_margin = -std::numeric_limits<double>::infinity();
    std::optional<CsWitness> witness;
};

namespace detail {

struct PairOutcome {
    double margin = -std::numeric_limits<double>::infinity();
    double inter_margin = -std::numeric_limits<double>::infinity();
    bool violated = false;
    bool inter_violated = false;
    bool diag_out = false;
    double lhs = 0.0, rhs = 0.0;
};

/// Pairing of a codomain dual element with an element: sum_ij T_ji Y_ij for matrices,
/// sum_t T_t y_t for functions.
inline cplx dual_pairing(const BimoduleSpace& cod, const CMat& t, const CVec& y) {
    CVec tf = cod.is_matrix_kind() ? flatten(t.transpose()) : CVec(Eigen::Map<const CVec>(t.data(), t.size()));
    return tf.cwiseProduct(y).sum();
}

inline double dual_total(const BimoduleSpace& cod, const CVec& y) {
    if (cod.is_matrix_kind()) return unflatten(y, cod.size(), cod.size()).trace().real();
    return y.real().sum();
}

inline PairOutcome cs_pair(const SesquiForm& f, const CVec& x1, const CVec& x2, const CsOptions& opt, Rng& rng) {
    const BimoduleSpace& t = f.target();
    PairOutcome o;
    CVec y12 = f.eval(x1, x2);
    CVec y11 = f.eval(x1, x1);
    CVec y22 = f.eval(x2, x2);
    if (!cone_contains(t, y11, opt.cone_tol) || !cone_contains(t, y22, opt.cone_tol)) {
        o.diag_out = true;
        o.violated = true;
        o.margin = std::numeric_limits<double>::infinity();
        return o;
    }
    double n11 = cone_norm(t, y11), n22 = cone_norm(t, y22);
    double rhs = std::sqrt(std::max(0.0, n11)) * std::sqrt(std::max(0.0, n22));
    NormOptions no = NormOptions::light(rng());
    no.unitaries = opt.witness_unitaries;
    double lhs = norm(t, y12, no).value;
    o.lhs = lhs;
    o.rhs = rhs;
    o.margin = (lhs - rhs) / std::max(1.0, rhs);
    o.violated = lhs > rhs * (1.0 + opt.tol) + opt.tol;
    if (t.kind() == SpaceKind::OpMap) {
        const BimoduleSpace& cod = t.codomain();
        const OpDomain& dom = t.domain();
        CMat id = domain_identity(dom);
        double a = std::max(0.0, dual_total(cod, apply_map(t, y11, id)));
        double b = std::max(0.0, dual_total(cod, apply_map(t, y22, id)));
        double bound0 = std::sqrt(a) * std::sqrt(b);
        for (Index s = 0; s < opt.intermediate_samples; ++s) {
            CMat sm = dom.kind == DomainKind::Matrix ? random_contraction(rng, dom.dim)
                                                     : CMat(random_phases(rng, dom.dim).cwiseProduct(
                                                           uniform_vector(rng, dom.dim).cast<cplx>()));
            CMat tm;
            if (cod.is_matrix_kind()) tm = random_contraction(rng, cod.size());
            else tm = random_phases(rng, cod.size()).cwiseProduct(uniform_vector(rng, cod.size()).cast<cplx>());
            double ns = dom.kind == DomainKind::Matrix ? op_norm(sm) : max_abs(CVec(sm));
            double nt = cod.is_matrix_kind() ? op_norm(tm) : max_abs(CVec(tm));
            double l = std::abs(dual_pairing(cod, tm, apply_map(t, y12, sm)));
            double bound = nt * ns * bound0;
            o.inter_margin = std::max(o.inter_margin, (l - bound) / std::max(1.0, bound));
            if (l > bound * (1.0 + opt.tol) + opt.tol) o.inter_violated = true;
        }
    }
    return o;
}

}  // namespace detail

/// ||Phi(x1,x2)|| <= ||Phi(x1,x1)||^(1/2) ||Phi(x2,x2)||^(1/2) on sampled pairs; operator-valued
/// targets also get the trace inequality |<T, Phi(x1,x2)(S)>| <= ||T|| ||S|| tr^(1/2) tr^(1/2).
inline InequalityReport verify_cs(const SesquiForm& f, const CsOptions& opt = {}) {
    InequalityReport r;
    r.op = "verify_cs";
    r.seed = opt.seed;
    r.trials = opt.trials;
    const BimoduleSpace& t = f.target();
    r.lhs_method = (t.kind() == SpaceKind::OpMap && t.codomain().kind() != SpaceKind::CGrid) ? "witness" : "exact";
    r.intermediate_checked = t.kind() == SpaceKind::OpMap;
    Index d = f.dim();
    std::vector<detail::PairOutcome> out(static_cast<size_t>(opt.trials));
    auto pair_for = [&](Index i, CVec& x1, CVec& x2, Rng& rng) {
        x1 = random_unit_vector(rng, d);
        x2 = random_unit_vector(rng, d);
        // a few structured pairs: equality case, zero vector, near-parallel
        if (i == 0) x2 = x1;
        else if (i == 1) x2.setZero();
        else if (i % 10 == 2) x2 = x1 + 1e-3 * x2;
    };
    parallel_for(opt.trials, opt.threads, [&](Index i) {
        Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
        CVec x1, x2;
        pair_for(i, x1, x2, rng);
        out[i] = detail::cs_pair(f, x1, x2, opt, rng);
    });
    for (Index i = 0; i < opt.trials; ++i) {
        const auto& o = out[i];
        r.worst_margin = std::max(r.worst_margin, o.margin);
        r.intermediate_worst_margin = std::max(r.intermediate_worst_margin, o.inter_margin);
        if ((o.violated || o.inter_violated) && !r.witness) {
            Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
            CsWitness w;
            pair_for(i, w.x1, w.x2, rng);
            w.lhs = o.lhs;
            w.rhs = o.rhs;
            w.clause = o.diag_out ? "diagonal value outside the cone" : (o.violated ? "norm inequality" : "trace inequality");
            r.witness = w;
            r.passed = false;
        }
    }
    return r;
}

/// Positive linear map omega: A -> Y stored by its images of the basis.
struct LinearPositiveMap {
    AlgebraPtr algebra;
    BimoduleSpace target;
    CMat images;  // flat x d

    CVec apply(const CVec& x) const { return images * x; }

    /// Phi(a, b) = omega(b* a).
    SesquiForm induced_form() const {
        Index d = algebra->dim;
        CMat coeffs(target.flat_size(), d * d);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                coeffs.col(i * d + j) = images * algebra->product(algebra->star(algebra->basis(j)), algebra->basis(i));
        return SesquiForm(target, d, coeffs, algebra);
    }
};

/// Kadison-Schwarz type bound ||omega(b*a)|| <= ||omega(a*a)||^(1/2) ||omega(b*b)||^(1/2).
inline InequalityReport verify_ks(const LinearPositiveMap& w, const CsOptions& opt = {}) {
    if (!w.algebra) throw PreconditionError("positive linear map needs an algebra");
    if (!w.algebra->a0_full()) throw PreconditionError("Kadison-Schwarz check needs A = A0");
    InequalityReport r = verify_cs(w.induced_form(), opt);
    r.op = "verify_ks";
    return r;
}

struct SeriesReport {
    std::string op = "verify_series_cs";
    bool passed = true;
    Index terms = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool monotone = true;
};

/// Truncated series bound for a family of positive forms into an order-preserving target.
inline SeriesReport verify_series_cs(const std::vector<SesquiForm>& forms, const std::vector<CVec>& xs,
                                     const std::vector<CVec>& xts, double tol = 1e-9) {
    if (forms.empty()) throw ShapeError("series needs at least one term");
    if (forms.size() != xs.size() || forms.size() != xts.size()) throw ShapeError("series lists differ in length");
    const BimoduleSpace& t = forms.front().target();
    if (!t.order_preserving()) throw PreconditionError(t.name() + " is not order-preserving");
    for (const auto& f : forms)
        if (f.target() != t) throw ShapeError("series terms must share the target space");
    SeriesReport r;
    r.terms = static_cast<Index>(forms.size());
    CVec s12 = CVec::Zero(t.flat_size()), s11 = s12, s22 = s12;
    double prev = 0.0;
    for (size_t n = 0; n < forms.size(); ++n) {
        s12 += forms[n].eval(xs[n], xts[n]);
        s11 += forms[n].eval(xs[n], xs[n]);
        s22 += forms[n].eval(xts[n], xts[n]);
        double cur = norm(t, s11).value;
        if (cur < prev * (1.0 - tol) - tol) r.monotone = false;
        prev = cur;
    }
    r.lhs = norm(t, s12).value;
    r.rhs = std::sqrt(norm(t, s11).value) * std::sqrt(norm(t, s22).value);
    r.margin = (r.lhs - r.rhs) / std::max(1.0, r.rhs);
    r.passed = r.monotone && r.lhs <= r.rhs * (1.0 + tol) + tol;
    return r;
}

/// Lower estimate of sup ||Phi(a,b)|| / (||a|| ||b||) over basis pairs, the unit pair,
/// random unitaries (matrix algebras) and Gaussian pairs.
inline double bound_estimate(const SesquiForm& f, Index trials = 1000, std::uint64_t seed = 1) {
    Index d = f.dim();
    NormSpec ns = f.algebra() ? f.algebra()->norm_a : NormSpec::euclidean(d);
    std::vector<CVec> cands;
    for (Index i = 0; i < d; ++i) cands.push_back(CVec::Unit(d, i));
    if (f.algebra()) cands.push_back(f.algebra()->unit);
    Rng rng(seed);
    bool matrix = ns.kind == NormKind::Operator || ns.kind == NormKind::Frobenius;
    for (Index t = 0; t < trials; ++t) {
        if (matrix && t % 2 == 0) cands.push_back(flatten(haar_unitary(rng, ns.n)));
        else cands.push_back(gaussian_vector(rng, d));
    }
    double best = 0.0;
    NormOptions no = NormOptions::light(seed);
    auto ratio = [&](const CVec& a, const CVec& b) {
        double na = ns.eval(a), nb = ns.eval(b);
        if (na == 0.0 || nb == 0.0) return 0.0;
        return norm(f.target(), f.eval(a, b), no).value / (na * nb);
    };
    for (size_t i = 0; i < cands.size(); ++i) {
        best = std::max(best, ratio(cands[i], cands[i]));
        best = std::max(best, ratio(cands[i], cands[(i + 1) % cands.size()]));
    }
    return best;
}

}  // namespace opmod
