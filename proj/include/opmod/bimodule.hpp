#pragma once

#include "opmod/core.hpp"

#include <memory>
#include <optional>
#include <sstream>

namespace opmod {

enum class SpaceKind { L2Finite, MeasuresFinite, CGrid, L1Trace, DualVN, BCC, SeqC, OpMap };

enum class DomainKind { Matrix, Diagonal };

/// Domain of an operator-valued space: all of M_p, or its diagonal.
struct OpDomain {
    DomainKind kind = DomainKind::Matrix;
    Index dim = 1;

    Index basis_size() const { return kind == DomainKind::Matrix ? dim * dim : dim; }
    bool operator==(const OpDomain& o) const { return kind == o.kind && dim == o.dim; }
};

/// A concrete ordered Banach bimodule, described by kind and sizes.
///
/// Coordinates are flat complex vectors. Layouts, all row-major:
///   L2Finite, MeasuresFinite, CGrid : n values
///   L1Trace, DualVN                 : n x n matrix (for DualVN the density)
///   BCC(m,k)                        : k x m kernel, phi(f)(t) = sum_s K(t,s) f(s)
///   SeqC(N,m)                       : N x m, row n holds f_n on the m points
///   OpMap                           : images of the domain basis, one codomain block each;
///                                     the image of E_ab sits at block a*p+b
class BimoduleSpace {
public:
    BimoduleSpace() = default;

    static BimoduleSpace l2_finite(Index n) { return simple(SpaceKind::L2Finite, n, 1); }
    static BimoduleSpace measures_finite(Index n) { return simple(SpaceKind::MeasuresFinite, n, 1); }
    static BimoduleSpace l1_trace(Index n) { return simple(SpaceKind::L1Trace, n, 1); }
    static BimoduleSpace dual_vn(Index n) { return simple(SpaceKind::DualVN, n, 1); }
    static BimoduleSpace bcc(Index m, Index k) { return simple(SpaceKind::BCC, m, k); }
    static BimoduleSpace seq_c(Index big_n, Index m) { return simple(SpaceKind::SeqC, big_n, m); }

    static BimoduleSpace c_grid(Index n, std::vector<double> points = {}) {
        BimoduleSpace s = simple(SpaceKind::CGrid, n, 1);
        if (!points.empty() && static_cast<Index>(points.size()) != n)
            throw ShapeError("grid point labels must match the grid size");
        s.points_ = std::move(points);
        return s;
    }

    static BimoduleSpace op_map(OpDomain domain, const BimoduleSpace& codomain) {
        if (domain.dim < 1) throw ShapeError("operator domain dimension must be positive");
        switch (codomain.kind()) {
            case SpaceKind::L1Trace:
            case SpaceKind::DualVN:
            case SpaceKind::MeasuresFinite:
            case SpaceKind::CGrid:
                break;
            default:
                throw UnsupportedError("operator-valued space needs an L1Trace, DualVN, "
                                       "MeasuresFinite or CGrid codomain, got " + codomain.name());
        }
        BimoduleSpace s;
        s.kind_ = SpaceKind::OpMap;
        s.p1_ = domain.dim;
        s.p2_ = 1;
        s.domain_ = domain;
        s.codomain_ = std::make_shared<const BimoduleSpace>(codomain);
        return s;
    }

    SpaceKind kind() const { return kind_; }
    /// n for the single-size kinds; m (domain points) for BCC; N for SeqC; p for OpMap.
    Index size() const { return p1_; }
    /// k (image points) for BCC; m (points) for SeqC.
    Index size2() const { return p2_; }
    const std::vector<double>& points() const { return points_; }
    const OpDomain& domain() const { return domain_; }

    const BimoduleSpace& codomain() const {
        if (!codomain_) throw UnsupportedError("space " + name() + " has no codomain");
        return *codomain_;
    }

    Index flat_size() const {
        switch (kind_) {
            case SpaceKind::L2Finite:
            case SpaceKind::MeasuresFinite:
            case SpaceKind::CGrid:
                return p1_;
            case SpaceKind::L1Trace:
            case SpaceKind::DualVN:
                return p1_ * p1_;
            case SpaceKind::BCC:
            case SpaceKind::SeqC:
                return p1_ * p2_;
            case SpaceKind::OpMap:
                return domain_.basis_size() * codomain_->flat_size();
        }
        return 0;
    }

    bool is_matrix_kind() const { return kind_ == SpaceKind::L1Trace || kind_ == SpaceKind::DualVN; }

    /// Cone is coordinatewise nonnegativity.
    bool is_entrywise() const {
        switch (kind_) {
            case SpaceKind::L2Finite:
            case SpaceKind::MeasuresFinite:
            case SpaceKind::CGrid:
            case SpaceKind::BCC:
            case SpaceKind::SeqC:
                return true;
            case SpaceKind::OpMap:
                return domain_.kind == DomainKind::Diagonal && codomain_->is_entrywise();
            default:
                return false;
        }
    }

    /// Positivity of a form is decidable coordinatewise (pointwise Gram test).
    bool is_commutative() const { return is_entrywise(); }

    bool order_preserving() const {
        switch (kind_) {
            case SpaceKind::L2Finite:
            case SpaceKind::MeasuresFinite:
            case SpaceKind::CGrid:
            case SpaceKind::L1Trace:
            case SpaceKind::BCC:
            case SpaceKind::SeqC:
                return true;
            default:
                return false;
        }
    }

    std::string name() const {
        std::ostringstream os;
        switch (kind_) {
            case SpaceKind::L2Finite: os << "L2Finite(" << p1_ << ")"; break;
            case SpaceKind::MeasuresFinite: os << "MeasuresFinite(" << p1_ << ")"; break;
            case SpaceKind::CGrid: os << "CGrid(" << p1_ << ")"; break;
            case SpaceKind::L1Trace: os << "L1Trace(" << p1_ << ")"; break;
            case SpaceKind::DualVN: os << "DualVN(" << p1_ << ")"; break;
            case SpaceKind::BCC: os << "BCC(" << p1_ << "," << p2_ << ")"; break;
            case SpaceKind::SeqC: os << "SeqC(" << p1_ << "," << p2_ << ")"; break;
            case SpaceKind::OpMap:
                os << "OpMap(" << (domain_.kind == DomainKind::Matrix ? "M" : "D") << domain_.dim
                   << "," << codomain_->name() << ")";
                break;
        }
        return os.str();
    }

    bool operator==(const BimoduleSpace& o) const {
        if (kind_ != o.kind_ || p1_ != o.p1_ || p2_ != o.p2_ || points_ != o.points_) return false;
        if (kind_ != SpaceKind::OpMap) return true;
        return domain_ == o.domain_ && *codomain_ == *o.codomain_;
    }
    bool operator!=(const BimoduleSpace& o) const { return !(*this == o); }

private:
    static BimoduleSpace simple(SpaceKind k, Index a, Index b) {
        if (a < 1 || b < 1) throw ShapeError("space sizes must be positive");
        BimoduleSpace s;
        s.kind_ = k;
        s.p1_ = a;
        s.p2_ = b;
        return s;
    }

    SpaceKind kind_ = SpaceKind::L2Finite;
    Index p1_ = 1;
    Index p2_ = 1;
    std::vector<double> points_;
    OpDomain domain_;
    std::shared_ptr<const BimoduleSpace> codomain_;
};

struct BimoduleElement {
    BimoduleSpace space;
    CVec coords;

    BimoduleElement() = default;
    BimoduleElement(BimoduleSpace s, CVec c) : space(std::move(s)), coords(std::move(c)) {
        if (coords.size() != space.flat_size())
            throw ShapeError("element has " + std::to_string(coords.size()) + " coordinates, " +
                             space.name() + " needs " + std::to_string(space.flat_size()));
        if (!all_finite(coords)) throw ShapeError("element coordinates must be finite");
    }
};

inline void require_shape(const BimoduleSpace& s, const CVec& y) {
    if (y.size() != s.flat_size())
        throw ShapeError("coordinate vector of length " + std::to_string(y.size()) + " does not fit " +
                         s.name());
}

// ---------------------------------------------------------------- operator-valued helpers

inline CVec op_image(const BimoduleSpace& s, const CVec& y, Index b) {
    Index cf = s.codomain().flat_size();
    return y.segment(b * cf, cf);
}

/// Codomain blocks as the columns of a (codomain flat) x (domain basis) matrix.
inline CMat op_images(const BimoduleSpace& s, const CVec& y) {
    Index cf = s.codomain().flat_size();
    Index nb = s.domain().basis_size();
    return Eigen::Map<const CMat>(y.data(), cf, nb);
}

inline CVec from_images(const CMat& images) {
    return Eigen::Map<const CVec>(images.data(), images.size());
}

/// Domain element flattened in basis order: matrix entries row-major, or the diagonal.
inline CVec domain_coords(const OpDomain& d, const CMat& x) {
    if (d.kind == DomainKind::Matrix) {
        if (x.rows() != d.dim || x.cols() != d.dim) throw ShapeError("domain element must be p x p");
        return flatten(x);
    }
    if (x.size() != d.dim) throw ShapeError("diagonal domain element must have p entries");
    return Eigen::Map<const CVec>(x.data(), d.dim);
}

inline CMat domain_identity(const OpDomain& d) {
    if (d.kind == DomainKind::Matrix) return CMat::Identity(d.dim, d.dim);
    return CMat::Ones(d.dim, 1);
}

/// phi(x) for an operator-valued element phi.
inline CVec apply_map(const BimoduleSpace& s, const CVec& y, const CMat& x) {
    return op_images(s, y) * domain_coords(s.domain(), x);
}

// ---------------------------------------------------------------- involution and module action

inline CVec adjoint_element(const BimoduleSpace& s, const CVec& y) {
    require_shape(s, y);
    switch (s.kind()) {
        case SpaceKind::L1Trace:
        case SpaceKind::DualVN: {
            Index n = s.size();
            return flatten(unflatten(y, n, n).adjoint());
        }
        case SpaceKind::OpMap: {
            const BimoduleSpace& cod = s.codomain();
            Index cf = cod.flat_size();
            Index p = s.domain().dim;
            CVec out(y.size());
            if (s.domain().kind == DomainKind::Diagonal) {
                for (Index b = 0; b < p; ++b) out.segment(b * cf, cf) = adjoint_element(cod, y.segment(b * cf, cf));
            } else {
                for (Index a = 0; a < p; ++a)
                    for (Index c = 0; c < p; ++c)
                        out.segment((a * p + c) * cf, cf) = adjoint_element(cod, y.segment((c * p + a) * cf, cf));
            }
            return out;
        }
        default:
            return y.conjugate();
    }
}

/// z* y z under the module action of the acting algebra.
///
/// Shape of z: n-vector of function values (L2Finite, MeasuresFinite, CGrid); n x n matrix
/// (L1Trace, DualVN); m-vector on the domain points (BCC); N x m array (SeqC); p x p matrix
/// or p-vector (OpMap, acting on the domain: x -> phi(z x z*)).
inline CVec sandwich(const BimoduleSpace& s, const CMat& z, const CVec& y) {
    require_shape(s, y);
    auto need = [&](bool ok) {
        if (!ok) throw ShapeError("module element has the wrong shape for " + s.name());
    };
    switch (s.kind()) {
        case SpaceKind::L2Finite:
        case SpaceKind::MeasuresFinite:
        case SpaceKind::CGrid: {
            need(z.size() == s.size());
            CVec out = y;
            for (Index i = 0; i < s.size(); ++i) out(i) *= std::norm(z.data()[i]);
            return out;
        }
        case SpaceKind::L1Trace:
        case SpaceKind::DualVN: {
            Index n = s.size();
            need(z.rows() == n && z.cols() == n);
            return flatten(z.adjoint() * unflatten(y, n, n) * z);
        }
        case SpaceKind::BCC: {
            Index m = s.size(), k = s.size2();
            need(z.size() == m);
            CVec out = y;
            for (Index t = 0; t < k; ++t)
                for (Index j = 0; j < m; ++j) out(t * m + j) *= std::norm(z.data()[j]);
            return out;
        }
        case SpaceKind::SeqC: {
            Index big_n = s.size(), m = s.size2();
            need(z.rows() == big_n && z.cols() == m);
            CVec out = y;
            for (Index i = 0; i < big_n; ++i)
                for (Index t = 0; t < m; ++t) out(i * m + t) *= std::norm(z(i, t));
            return out;
        }
        case SpaceKind::OpMap: {
            Index p = s.domain().dim;
            CMat img = op_images(s, y);
            if (s.domain().kind == DomainKind::Diagonal) {
                need(z.size() == p);
                for (Index b = 0; b < p; ++b) img.col(b) *= std::norm(z.data()[b]);
                return from_images(img);
            }
            need(z.rows() == p && z.cols() == p);
            // image of E_ab becomes phi(z E_ab z*) = sum_cd z_ca conj(z_db) Y_cd
            CMat coef(p * p, p * p);
            for (Index c = 0; c < p; ++c)
                for (Index d = 0; d < p; ++d)
                    for (Index a = 0; a < p; ++a)
                        for (Index b = 0; b < p; ++b) coef(c * p + d, a * p + b) = z(c, a) * std::conj(z(d, b));
            return from_images(img * coef);
        }
    }
    return y;
}

// ---------------------------------------------------------------- norms

enum class NormMethod { Exact, Witness };

inline const char* to_string(NormMethod m) { return m == NormMethod::Exact ? "exact" : "witness"; }

struct NormResult {
    double value = 0.0;
    NormMethod method = NormMethod::Exact;
};

/// Witness configuration for operator-valued norms.
struct NormOptions {
    Index unitaries = 256;
    Index contractions = 256;
    Index polish_starts = 4;
    Index polish_iters = 60;
    std::uint64_t seed = 0x6f706d6f64ULL;
    /// Use the exact value ||phi(1)|| when phi is certified positive.
    bool cone_shortcut = true;

    static NormOptions light(std::uint64_t seed) {
        NormOptions o;
        o.unitaries = 3;
        o.contractions = 0;
        o.polish_starts = 2;
        o.polish_iters = 25;
        o.seed = seed;
        o.cone_shortcut = false;
        return o;
    }
};

namespace detail {

inline double entrywise_norm(const BimoduleSpace& s, const CVec& y) {
    switch (s.kind()) {
        case SpaceKind::L2Finite: return y.norm();
        case SpaceKind::MeasuresFinite: return y.cwiseAbs().sum();
        case SpaceKind::CGrid: return max_abs(y);
        case SpaceKind::BCC: {
            Index m = s.size(), k = s.size2();
            double best = 0.0;
            for (Index t = 0; t < k; ++t) best = std::max(best, y.segment(t * m, m).cwiseAbs().sum());
            return best;
        }
        case SpaceKind::SeqC: {
            Index big_n = s.size(), m = s.size2();
            double best = 0.0;
            for (Index t = 0; t < m; ++t) {
                double acc = 0.0;
                for (Index i = 0; i < big_n; ++i) acc += std::norm(y(i * m + t));
                best = std::max(best, acc);
            }
            return std::sqrt(best);
        }
        default:
            throw UnsupportedError("not an entrywise space");
    }
}

/// Flat dual element beta with Re sum beta_c y_c = ||y|| and dual norm at most one.
inline CVec norming_dual(const BimoduleSpace& s, const CVec& y) {
    auto phase = [](cplx v) { double a = std::abs(v); return a > 0 ? std::conj(v) / a : cplx(1.0); };
    CVec beta = CVec::Zero(y.size());
    switch (s.kind()) {
        case SpaceKind::L2Finite: {
            double nv = y.norm();
            if (nv > 0) beta = y.conjugate() / nv;
            else beta(0) = 1.0;
            return beta;
        }
        case SpaceKind::MeasuresFinite:
            for (Index i = 0; i < y.size(); ++i) beta(i) = phase(y(i));
            return beta;
        case SpaceKind::CGrid: {
            Index t = 0;
            y.cwiseAbs().maxCoeff(&t);
            beta(t) = phase(y(t));
            return beta;
        }
        case SpaceKind::L1Trace:
        case SpaceKind::DualVN: {
            Index n = s.size();
            // tr(U* M) = ||M||_1 with M = U|M|; pairing sum_ij B_ji M_ij with B = U*
            CMat u = polar_unitary(unflatten(y, n, n));
            return flatten(u.conjugate());
        }
        default:
            throw UnsupportedError("no norming dual for " + s.name());
    }
}

inline double codomain_norm(const BimoduleSpace& cod, const CVec& v) {
    if (cod.is_matrix_kind()) return trace_norm(unflatten(v, cod.size(), cod.size()));
    return entrywise_norm(cod, v);
}

/// Best domain contraction against the functional D -> sum_b D_b g_b.
inline CMat best_domain_input(const OpDomain& d, const CVec& g) {
    if (d.kind == DomainKind::Diagonal) {
        CMat x(d.dim, 1);
        for (Index s = 0; s < d.dim; ++s) {
            double a = std::abs(g(s));
            x(s, 0) = a > 0 ? std::conj(g(s)) / a : cplx(1.0);
        }
        return x;
    }
    // sum_ab D_ab G_ab = tr(D G^T), maximized by D = U* for G^T = U|G^T|
    CMat gt = unflatten(g, d.dim, d.dim).transpose();
    return polar_unitary(gt).adjoint();
}

/// Alternating ascent on |<beta, phi(x)>| over contractions x and norming functionals beta.
inline double polish_opmap(const BimoduleSpace& s, const CMat& images, CMat x, Index iters) {
    const BimoduleSpace& cod = s.codomain();
    double best = 0.0;
    for (Index it = 0; it < iters; ++it) {
        CVec img = images * domain_coords(s.domain(), x);
        double val = codomain_norm(cod, img);
        if (it > 0 && val <= best * (1.0 + 1e-13)) {
            best = std::max(best, val);
            break;
        }
        best = std::max(best, val);
        CVec beta = norming_dual(cod, img);
        CVec g = images.transpose() * beta;
        x = best_domain_input(s.domain(), g);
    }
    return best;
}

}  // namespace detail

/// Cheap upper bound of ||y||; exact except for OpMap.
inline double norm_upper(const BimoduleSpace& s, const CVec& y) {
    require_shape(s, y);
    if (s.kind() == SpaceKind::OpMap) {
        const BimoduleSpace& cod = s.codomain();
        double acc = 0.0;
        for (Index b = 0; b < s.domain().basis_size(); ++b)
            acc += detail::codomain_norm(cod, op_image(s, y, b));
        return acc;
    }
    return detail::codomain_norm(s, y);
}

/// Operator-valued norm with a certified lower bound: the max over the identity, Haar
/// unitaries and random contractions, each polished by alternating ascent. Exact for CGrid
/// codomains (row-wise trace norms) and for certified-positive maps.
inline NormResult opmap_norm(const BimoduleSpace& s, const CVec& y, const NormOptions& opt);

inline NormResult norm(const BimoduleSpace& s, const CVec& y, const NormOptions& opt = {}) {
    require_shape(s, y);
    if (s.kind() != SpaceKind::OpMap) return {detail::codomain_norm(s, y), NormMethod::Exact};
    return opmap_norm(s, y, opt);
}

// ---------------------------------------------------------------- cone

enum class ConeStatus { InConeExact, NoCounterexample, OutOfCone };

inline const char* to_string(ConeStatus c) {
    switch (c) {
        case ConeStatus::InConeExact: return "in-cone-exact";
        case ConeStatus::NoCounterexample: return "no-counterexample";
        case ConeStatus::OutOfCone: return "out-of-cone";
    }
    return "?";
}

struct ConeCheck {
    ConeStatus status = ConeStatus::InConeExact;
    /// Smallest probe value found (negative means outside the cone).
    double min_probe = 0.0;
    double hermitian_residual = 0.0;
    double scale = 1.0;
    /// Linear functional on flat coordinates attaining min_probe.
    CVec witness;

    bool contains() const { return status != ConeStatus::OutOfCone; }
};

/// Positive functionals ("probes") in flat coordinates, value Re sum_c l_c y_c.
struct Probe {
    double value = 0.0;
    CVec functional;
};

/// Whether the minimum over all probes is computed exactly.
inline bool probe_is_exact(const BimoduleSpace& s) {
    if (s.kind() != SpaceKind::OpMap) return true;
    if (s.domain().kind == DomainKind::Diagonal) return true;
    return !s.codomain().is_matrix_kind();
}

namespace detail {

inline CVec matrix_probe(const CVec& w) {
    Index n = w.size();
    CVec l(n * n);
    for (Index a = 0; a < n; ++a)
        for (Index b = 0; b < n; ++b) l(a * n + b) = std::conj(w(a)) * w(b);
    return l;
}

inline Probe worst_probe_simple(const BimoduleSpace& s, const CVec& y) {
    Probe p;
    if (s.is_matrix_kind()) {
        Index n = s.size();
        EigenPair e = hermitian_min_eig(unflatten(y, n, n));
        p.value = e.value;
        p.functional = matrix_probe(e.vector);
        return p;
    }
    Index at = 0;
    p.value = y.real().minCoeff(&at);
    p.functional = CVec::Zero(y.size());
    p.functional(at) = 1.0;
    return p;
}

/// sum_ab v_a conj(v_b) E_ab as a domain functional, tensored with a codomain probe.
inline CVec lift_probe(Index p, const CVec& v, const CVec& cod_probe) {
    Index cf = cod_probe.size();
    CVec l(p * p * cf);
    for (Index a = 0; a < p; ++a)
        for (Index b = 0; b < p; ++b) l.segment((a * p + b) * cf, cf) = v(a) * std::conj(v(b)) * cod_probe;
    return l;
}

inline CMat pair_table(Index p, const CMat& images, const CVec& cod_probe) {
    CVec g = images.transpose() * cod_probe;
    return unflatten(g, p, p);
}

}  // namespace detail

/// Minimizing probe. Exact unless the space maps all of M_p into a matrix codomain, where it
/// alternates between the input vector v and the output vector w from several starts.
inline Probe worst_probe(const BimoduleSpace& s, const CVec& y, Rng* rng = nullptr, Index random_starts = 2) {
    require_shape(s, y);
    if (s.kind() != SpaceKind::OpMap) return detail::worst_probe_simple(s, y);
    const BimoduleSpace& cod = s.codomain();
    Index cf = cod.flat_size();
    Index p = s.domain().dim;
    Probe best;
    best.value = std::numeric_limits<double>::infinity();
    if (s.domain().kind == DomainKind::Diagonal) {
        for (Index b = 0; b < p; ++b) {
            Probe q = detail::worst_probe_simple(cod, y.segment(b * cf, cf));
            if (q.value < best.value) {
                best.value = q.value;
                best.functional = CVec::Zero(y.size());
                best.functional.segment(b * cf, cf) = q.functional;
            }
        }
        return best;
    }
    CMat images = op_images(s, y);
    if (!cod.is_matrix_kind()) {
        for (Index t = 0; t < cf; ++t) {
            CVec e = CVec::Zero(cf);
            e(t) = 1.0;
            EigenPair m = min_quadratic(detail::pair_table(p, images, e));
            if (m.value < best.value) {
                best.value = m.value;
                best.functional = detail::lift_probe(p, m.vector, e);
            }
        }
        return best;
    }
    Index n = cod.size();
    std::vector<CVec> starts;
    for (Index a = 0; a < p; ++a) starts.push_back(CVec::Unit(p, a));
    if (rng)
        for (Index r = 0; r < random_starts; ++r) starts.push_back(random_unit_vector(*rng, p));
    for (CVec v : starts) {
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 60; ++it) {
            CVec out = images * detail::lift_probe(p, v, CVec::Ones(1));
            EigenPair w = hermitian_min_eig(unflatten(out, n, n));
            CVec wl = detail::matrix_probe(w.vector);
            if (w.value < best.value) {
                best.value = w.value;
                best.functional = detail::lift_probe(p, v, wl);
            }
            EigenPair nv = min_quadratic(detail::pair_table(p, images, wl));
            if (nv.value < best.value) {
                best.value = nv.value;
                best.functional = detail::lift_probe(p, nv.vector, wl);
            }
            if (nv.value >= prev - 1e-15 * (1.0 + std::abs(prev))) break;
            prev = nv.value;
            v = nv.vector;
        }
    }
    return best;
}

inline double hermitian_residual(const BimoduleSpace& s, const CVec& y) {
    return max_abs(CVec(y - adjoint_element(s, y)));
}

/// Cone membership with verdict. Tolerance is relative to max(1, ||y||).
inline ConeCheck cone_check(const BimoduleSpace& s, const CVec& y, double tol = 1e-10, Rng* rng = nullptr) {
    require_shape(s, y);
    ConeCheck c;
    c.scale = std::max(1.0, norm_upper(s, y));
    c.hermitian_residual = hermitian_residual(s, y);
    Probe p = worst_probe(s, y, rng);
    c.min_probe = p.value;
    c.witness = p.functional;
    if (c.hermitian_residual > tol * c.scale || c.min_probe < -tol * c.scale)
        c.status = ConeStatus::OutOfCone;
    else
        c.status = probe_is_exact(s) ? ConeStatus::InConeExact : ConeStatus::NoCounterexample;
    return c;
}

inline bool cone_contains(const BimoduleSpace& s, const CVec& y, double tol = 1e-10, Rng* rng = nullptr) {
    return cone_check(s, y, tol, rng).contains();
}

/// Norm of an element known to lie in the cone, computed exactly.
/// For operator-valued elements this is the codomain norm of the image of the identity.
inline double cone_norm(const BimoduleSpace& s, const CVec& y) {
    require_shape(s, y);
    if (s.kind() != SpaceKind::OpMap) return detail::codomain_norm(s, y);
    return detail::codomain_norm(s.codomain(), apply_map(s, y, domain_identity(s.domain())));
}

inline NormResult opmap_norm(const BimoduleSpace& s, const CVec& y, const NormOptions& opt) {
    const BimoduleSpace& cod = s.codomain();
    const OpDomain& dom = s.domain();
    Index p = dom.dim;
    CMat images = op_images(s, y);
    if (cod.kind() == SpaceKind::CGrid) {
        double best = 0.0;
        for (Index t = 0; t < cod.size(); ++t) {
            CVec g = images.row(t).transpose();
            double v = dom.kind == DomainKind::Matrix ? trace_norm(unflatten(g, p, p)) : g.cwiseAbs().sum();
            best = std::max(best, v);
        }
        return {best, NormMethod::Exact};
    }
    if (opt.cone_shortcut && probe_is_exact(s)) {
        ConeCheck c = cone_check(s, y);
        if (c.status == ConeStatus::InConeExact) return {cone_norm(s, y), NormMethod::Exact};
    }
    Rng rng(opt.seed);
    std::vector<CMat> cands;
    cands.push_back(domain_identity(dom));
    for (Index i = 0; i < opt.unitaries; ++i) {
        if (dom.kind == DomainKind::Matrix) cands.push_back(haar_unitary(rng, p));
        else cands.push_back(random_phases(rng, p));
    }
    for (Index i = 0; i < opt.contractions; ++i) {
        if (dom.kind == DomainKind::Matrix) cands.push_back(random_contraction(rng, p));
        else cands.push_back(random_phases(rng, p).cwiseProduct(uniform_vector(rng, p).cast<cplx>()));
    }
    std::vector<std::pair<double, Index>> vals;
    vals.reserve(cands.size());
    for (Index i = 0; i < static_cast<Index>(cands.size()); ++i)
        vals.emplace_back(detail::codomain_norm(cod, images * domain_coords(dom, cands[i])), i);
    std::stable_sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.first > b.first; });
    double best = vals.front().first;
    Index starts = std::min<Index>(opt.polish_starts, static_cast<Index>(vals.size()));
    for (Index i = 0; i < starts; ++i)
        best = std::max(best, detail::polish_opmap(s, images, cands[vals[i].second], opt.polish_iters));
    return {best, NormMethod::Witness};
}

// ---------------------------------------------------------------- norming functionals

/// Linear functionals l with ||y|| <= max_l Re l(y) on the cone; `exact` when equality holds.
struct DominatingFunctionals {
    std::vector<CVec> functionals;
    bool exact = true;
};

inline DominatingFunctionals dominating_functionals(const BimoduleSpace& s) {
    DominatingFunctionals out;
    Index f = s.flat_size();
    auto unit = [&](Index i) { CVec e = CVec::Zero(f); e(i) = 1.0; return e; };
    switch (s.kind()) {
        case SpaceKind::L2Finite:
            out.functionals.push_back(CVec::Ones(f));
            out.exact = (f == 1);
            break;
        case SpaceKind::MeasuresFinite:
            out.functionals.push_back(CVec::Ones(f));
            break;
        case SpaceKind::CGrid:
            for (Index i = 0; i < f; ++i) out.functionals.push_back(unit(i));
            break;
        case SpaceKind::L1Trace:
        case SpaceKind::DualVN:
            out.functionals.push_back(flatten(CMat::Identity(s.size(), s.size())));
            break;
        case SpaceKind::BCC: {
            Index m = s.size();
            for (Index t = 0; t < s.size2(); ++t) {
                CVec l = CVec::Zero(f);
                l.segment(t * m, m).setOnes();
                out.functionals.push_back(l);
            }
            break;
        }
        case SpaceKind::SeqC: {
            Index m = s.size2();
            for (Index t = 0; t < m; ++t) {
                CVec l = CVec::Zero(f);
                for (Index i = 0; i < s.size(); ++i) l(i * m + t) = 1.0;
                out.functionals.push_back(l);
            }
            out.exact = (s.size() == 1);
            break;
        }
        case SpaceKind::OpMap: {
            DominatingFunctionals inner = dominating_functionals(s.codomain());
            CVec id = domain_coords(s.domain(), domain_identity(s.domain()));
            Index cf = s.codomain().flat_size();
            for (const CVec& l : inner.functionals) {
                CVec big(f);
                for (Index b = 0; b < id.size(); ++b) big.segment(b * cf, cf) = id(b) * l;
                out.functionals.push_back(big);
            }
            out.exact = inner.exact;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------- sampling

/// Random element of the acting algebra, shaped for `sandwich`.
inline CMat random_module_element(const BimoduleSpace& s, Rng& rng) {
    switch (s.kind()) {
        case SpaceKind::L2Finite:
        case SpaceKind::MeasuresFinite:
        case SpaceKind::CGrid:
            return gaussian_matrix(rng, s.size(), 1);
        case SpaceKind::L1Trace:
        case SpaceKind::DualVN:
            return gaussian_matrix(rng, s.size(), s.size());
        case SpaceKind::BCC:
            return gaussian_matrix(rng, s.size(), 1);
        case SpaceKind::SeqC:
            return gaussian_matrix(rng, s.size(), s.size2());
        case SpaceKind::OpMap:
            if (s.domain().kind == DomainKind::Diagonal) return gaussian_matrix(rng, s.domain().dim, 1);
            return gaussian_matrix(rng, s.domain().dim, s.domain().dim);
    }
    return CMat();
}

inline CMat random_psd(Rng& rng, Index n, Index rank = -1) {
    if (rank < 0) rank = 1 + static_cast<Index>(uniform01(rng) * n) % n;
    CMat g = gaussian_matrix(rng, n, rank);
    return g * g.adjoint();
}

inline CVec random_cone_element(const BimoduleSpace& s, Rng& rng) {
    Index f = s.flat_size();
    if (s.is_matrix_kind()) return flatten(random_psd(rng, s.size()));
    if (s.kind() != SpaceKind::OpMap) {
        CVec v(f);
        for (Index i = 0; i < f; ++i) v(i) = std::abs(complex_gaussian(rng));
        return v;
    }
    const BimoduleSpace& cod = s.codomain();
    Index cf = cod.flat_size();
    Index p = s.domain().dim;
    CVec out = CVec::Zero(f);
    if (s.domain().kind == DomainKind::Diagonal) {
        for (Index b = 0; b < p; ++b) out.segment(b * cf, cf) = random_cone_element(cod, rng);
        return out;
    }
    if (cod.is_matrix_kind()) {
        // x -> M* x M plus a transpose term M'* x^T M', positive but not completely positive
        Index n = cod.size();
        for (int term = 0; term < 2; ++term) {
            CMat m = gaussian_matrix(rng, p, n);
            for (Index a = 0; a < p; ++a)
                for (Index b = 0; b < p; ++b) {
                    Index ia = term == 0 ? a : b, ib = term == 0 ? b : a;
                    CMat img = m.row(ia).adjoint() * m.row(ib);
                    out.segment((a * p + b) * cf, cf) += flatten(img);
                }
        }
        return out;
    }
    // per point a positive functional x -> tr(x rho_t)
    for (Index t = 0; t < cf; ++t) {
        CMat rho = random_psd(rng, p);
        for (Index a = 0; a < p; ++a)
            for (Index b = 0; b < p; ++b) out((a * p + b) * cf + t) = rho(b, a);
    }
    return out;
}

/// Random element with no structure, complex Gaussian coordinates.
inline CVec random_element(const BimoduleSpace& s, Rng& rng) { return gaussian_vector(rng, s.flat_size()); }

// ---------------------------------------------------------------- order preservation

struct OrderReport {
    bool passed = true;
    Index trials = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
};

/// Samples y1 <= y2 = y1 + k in the cone and checks ||y1|| <= ||y2||(1 + tol).
inline OrderReport check_order_preserving(const BimoduleSpace& s, Index trials, double tol, std::uint64_t seed) {
    if (!s.order_preserving())
        throw PreconditionError(s.name() + " is not flagged order-preserving");
    OrderReport r;
    r.trials = trials;
    for (Index i = 0; i < trials; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        CVec y1 = random_cone_element(s, rng);
        CVec k = random_cone_element(s, rng) * uniform01(rng);
        double n1 = norm(s, y1).value;
        double n2 = norm(s, y1 + k).value;
        double margin = (n1 - n2 * (1.0 + tol)) / std::max(1.0, n2);
        r.worst_margin = std::max(r.worst_margin, margin);
        if (n1 > n2 * (1.0 + tol)) r.passed = false;
    }
    return r;
}

}  // namespace opmod
