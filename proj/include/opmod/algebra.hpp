#pragma once

#include "opmod/core.hpp"

#include <map>
#include <memory>

namespace opmod {

enum class NormKind { Operator, Frobenius, Lp, Sup, Euclidean };

/// Norm on a coordinate vector. Operator and Frobenius read the vector as a row-major n x n
/// matrix in the matrix-unit basis.
struct NormSpec {
    NormKind kind = NormKind::Euclidean;
    Index n = 1;
    double p = 2.0;

    static NormSpec operator_norm(Index n) { return {NormKind::Operator, n, 2.0}; }
    static NormSpec frobenius(Index n) { return {NormKind::Frobenius, n, 2.0}; }
    static NormSpec lp(Index n, double p) { return {NormKind::Lp, n, p}; }
    static NormSpec sup(Index n) { return {NormKind::Sup, n, 2.0}; }
    static NormSpec euclidean(Index n) { return {NormKind::Euclidean, n, 2.0}; }

    Index coord_size() const {
        return (kind == NormKind::Operator || kind == NormKind::Frobenius) ? n * n : n;
    }

    double eval(const CVec& x) const {
        if (x.size() != coord_size()) throw ShapeError("norm descriptor does not match coordinate length");
        switch (kind) {
            case NormKind::Operator: return op_norm(unflatten(x, n, n));
            case NormKind::Frobenius:
            case NormKind::Euclidean: return x.norm();
            case NormKind::Sup: return max_abs(x);
            case NormKind::Lp: {
                if (std::isinf(p)) return max_abs(x);
                double acc = 0.0;
                for (Index i = 0; i < x.size(); ++i) acc += std::pow(std::abs(x(i)), p);
                return std::pow(acc, 1.0 / p);
            }
        }
        return 0.0;
    }

    /// sup ||x||_2 / ||x|| over nonzero x.
    double l2_constant() const {
        switch (kind) {
            case NormKind::Operator: return std::sqrt(static_cast<double>(n));
            case NormKind::Sup: return std::sqrt(static_cast<double>(n));
            case NormKind::Lp:
                if (p <= 2.0) return 1.0;
                if (std::isinf(p)) return std::sqrt(static_cast<double>(n));
                return std::pow(static_cast<double>(n), 0.5 - 1.0 / p);
            default: return 1.0;
        }
    }

    std::string name() const {
        switch (kind) {
            case NormKind::Operator: return "operator";
            case NormKind::Frobenius: return "frobenius";
            case NormKind::Lp: return "lp";
            case NormKind::Sup: return "sup";
            case NormKind::Euclidean: return "euclidean";
        }
        return "?";
    }
};

/// Finite-dimensional quasi *-algebra (A, A0) with unit.
///
/// structure[i].col(j) holds the coordinates of a_i a_j; only products with a factor in
/// A0 are meaningful. The involution is x* = involution * conj(x).
enum class AlgebraKind { Matrix, Function, Custom };

/// How an algebra was built; lets serialized forms name their algebra.
struct AlgebraSpec {
    AlgebraKind kind = AlgebraKind::Custom;
    Index n = 1;
    bool frobenius = false;
    bool diagonal_a0 = false;
    double p = 2.0;
};

struct QuasiAlgebra {
    Index dim = 0;
    AlgebraSpec spec;
    std::vector<std::string> labels;
    std::vector<CMat> structure;
    CMat involution;
    CVec unit;
    NormSpec norm_a;
    NormSpec norm_a0;
    std::vector<bool> a0_mask;
    double gamma = 1.0;

    void validate() const {
        if (dim < 1) throw ShapeError("algebra dimension must be positive");
        if (static_cast<Index>(structure.size()) != dim) throw ShapeError("structure table needs dim slices");
        for (const CMat& s : structure)
            if (s.rows() != dim || s.cols() != dim) throw ShapeError("structure slice must be dim x dim");
        if (involution.rows() != dim || involution.cols() != dim) throw ShapeError("involution must be dim x dim");
        if (unit.size() != dim) throw ShapeError("unit must have dim coordinates");
        if (static_cast<Index>(a0_mask.size()) != dim) throw ShapeError("A0 mask must have dim entries");
        if (norm_a.coord_size() != dim || norm_a0.coord_size() != dim)
            throw ShapeError("norm descriptors do not match the algebra dimension");
        if (!(gamma > 0)) throw ShapeError("gamma must be positive");
    }

    CMat left_mult(const CVec& x) const {
        CMat l = CMat::Zero(dim, dim);
        for (Index i = 0; i < dim; ++i)
            if (x(i) != cplx(0.0)) l += x(i) * structure[i];
        return l;
    }

    CMat left_mult_basis(Index i) const { return structure[i]; }

    /// Matrix of x -> x y.
    CMat right_mult(const CVec& y) const {
        CMat r(dim, dim);
        for (Index i = 0; i < dim; ++i) r.col(i) = structure[i] * y;
        return r;
    }

    CVec product(const CVec& x, const CVec& y) const { return left_mult(x) * y; }
    CVec star(const CVec& x) const { return involution * x.conjugate(); }
    CVec basis(Index i) const { return CVec::Unit(dim, i); }

    std::vector<Index> a0_indices() const {
        std::vector<Index> out;
        for (Index i = 0; i < dim; ++i)
            if (a0_mask[i]) out.push_back(i);
        return out;
    }

    bool a0_full() const {
        return std::all_of(a0_mask.begin(), a0_mask.end(), [](bool b) { return b; });
    }

    bool supported_on_a0(const CVec& x, double tol = 0.0) const {
        for (Index i = 0; i < dim; ++i)
            if (!a0_mask[i] && std::abs(x(i)) > tol) return false;
        return true;
    }
};

using AlgebraPtr = std::shared_ptr<const QuasiAlgebra>;

struct AlgebraElement {
    AlgebraPtr algebra;
    CVec coords;
    bool in_a0 = false;

    AlgebraElement() = default;
    AlgebraElement(AlgebraPtr alg, CVec c, bool a0) : algebra(std::move(alg)), coords(std::move(c)), in_a0(a0) {
        if (!algebra) throw ShapeError("element needs an algebra");
        if (coords.size() != algebra->dim) throw ShapeError("element has the wrong number of coordinates");
        if (!all_finite(coords)) throw ShapeError("element coordinates must be finite");
        if (in_a0 && !algebra->supported_on_a0(coords)) throw ShapeError("A0 element has support outside the A0 mask");
    }

    double norm() const { return in_a0 ? algebra->norm_a0.eval(coords) : algebra->norm_a.eval(coords); }
};

/// The module product. One factor must lie in A0; the product of two elements outside A0
/// is undefined and raises PreconditionError.
inline AlgebraElement multiply(const AlgebraElement& x, const AlgebraElement& y) {
    if (x.algebra != y.algebra && x.algebra->dim != y.algebra->dim)
        throw ShapeError("factors belong to different algebras");
    if (!x.in_a0 && !y.in_a0) throw PreconditionError("product of two elements outside A0 is not defined");
    bool a0 = x.in_a0 && y.in_a0;
    CVec c = x.algebra->product(x.coords, y.coords);
    if (a0) {
        for (Index i = 0; i < c.size(); ++i)
            if (!x.algebra->a0_mask[i]) c(i) = 0.0;
    }
    return AlgebraElement(x.algebra, c, a0);
}

inline AlgebraElement involution(const AlgebraElement& x) {
    return AlgebraElement(x.algebra, x.algebra->star(x.coords), x.in_a0);
}

inline AlgebraElement unit(const AlgebraPtr& alg) { return AlgebraElement(alg, alg->unit, true); }

enum class MatrixNorm { Operator, Frobenius };
enum class A0Kind { Full, Diagonal };

/// M_n with matrix units E_ij at index i*n+j. Frobenius gives A = (M_n, ||.||_F) over
/// A0 = (M_n, ||.||_op).
inline AlgebraPtr make_matrix_algebra(Index n, MatrixNorm kind, A0Kind a0 = A0Kind::Full) {
    if (n < 1) throw ShapeError("matrix algebra size must be positive");
    auto alg = std::make_shared<QuasiAlgebra>();
    Index d = n * n;
    alg->dim = d;
    alg->structure.assign(d, CMat::Zero(d, d));
    alg->involution = CMat::Zero(d, d);
    alg->unit = CVec::Zero(d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            alg->labels.push_back("E" + std::to_string(i + 1) + std::to_string(j + 1));
            alg->involution(j * n + i, i * n + j) = 1.0;
            for (Index l = 0; l < n; ++l) alg->structure[i * n + j](i * n + l, j * n + l) = 1.0;
        }
    for (Index i = 0; i < n; ++i) alg->unit(i * n + i) = 1.0;
    alg->norm_a = kind == MatrixNorm::Operator ? NormSpec::operator_norm(n) : NormSpec::frobenius(n);
    alg->norm_a0 = NormSpec::operator_norm(n);
    alg->a0_mask.assign(d, true);
    alg->spec = {AlgebraKind::Matrix, n, kind == MatrixNorm::Frobenius, a0 == A0Kind::Diagonal, 2.0};
    if (a0 == A0Kind::Diagonal)
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) alg->a0_mask[i * n + j] = (i == j);
    alg->gamma = 1.0;
    alg->validate();
    return alg;
}

/// Functions on n points, A-norm l^p, A0-norm sup.
inline AlgebraPtr make_function_algebra(Index n, double p) {
    if (n < 1) throw ShapeError("function algebra size must be positive");
    if (!(p >= 1.0)) throw ShapeError("l^p exponent must be at least 1");
    auto alg = std::make_shared<QuasiAlgebra>();
    alg->dim = n;
    alg->structure.assign(n, CMat::Zero(n, n));
    for (Index i = 0; i < n; ++i) {
        alg->labels.push_back("d" + std::to_string(i + 1));
        alg->structure[i](i, i) = 1.0;
    }
    alg->involution = CMat::Identity(n, n);
    alg->unit = CVec::Ones(n);
    alg->spec = {AlgebraKind::Function, n, false, false, p};
    alg->norm_a = NormSpec::lp(n, p);
    alg->norm_a0 = NormSpec::sup(n);
    alg->a0_mask.assign(n, true);
    alg->gamma = 1.0;
    alg->validate();
    return alg;
}

inline AlgebraPtr make_scalar_algebra() { return make_matrix_algebra(1, MatrixNorm::Operator); }

inline AlgebraPtr make_algebra(const AlgebraSpec& s) {
    switch (s.kind) {
        case AlgebraKind::Matrix:
            return make_matrix_algebra(s.n, s.frobenius ? MatrixNorm::Frobenius : MatrixNorm::Operator,
                                       s.diagonal_a0 ? A0Kind::Diagonal : A0Kind::Full);
        case AlgebraKind::Function: return make_function_algebra(s.n, s.p);
        case AlgebraKind::Custom: break;
    }
    throw UnsupportedError("custom algebras cannot be rebuilt from a descriptor");
}

struct AxiomReport {
    bool passed = true;
    double worst_residual = 0.0;
    double gamma_declared = 1.0;
    double gamma_empirical = 0.0;
    std::map<std::string, double> residuals;
};

inline CVec random_a0_element(const QuasiAlgebra& alg, Rng& rng) {
    CVec c = gaussian_vector(rng, alg.dim);
    for (Index i = 0; i < alg.dim; ++i)
        if (!alg.a0_mask[i]) c(i) = 0.0;
    return c;
}

/// Verifies the quasi *-algebra identities on the basis and the normed axioms on samples.
inline AxiomReport check_axioms(const QuasiAlgebra& alg, Index trials, double tol, std::uint64_t seed) {
    alg.validate();
    AxiomReport r;
    r.gamma_declared = alg.gamma;
    Index d = alg.dim;
    double scale = 1.0;
    for (const CMat& s : alg.structure) scale = std::max(scale, max_abs(s));
    auto note = [&](const std::string& key, double v) {
        double& slot = r.residuals[key];
        slot = std::max(slot, v / scale);
    };
    for (const char* k : {"associativity", "star_product", "unit", "involutive", "a0_closed", "isometry"})
        r.residuals[k] = 0.0;

    std::vector<Index> a0 = alg.a0_indices();
    note("a0_closed", alg.supported_on_a0(alg.unit) ? 0.0 : 1.0);
    CMat jj = alg.involution * alg.involution.conjugate();
    note("involutive", max_abs(CMat(jj - CMat::Identity(d, d))));
    for (Index i = 0; i < d; ++i) {
        CVec a = alg.basis(i);
        note("unit", max_abs(CVec(alg.product(alg.unit, a) - a)));
        note("unit", max_abs(CVec(alg.product(a, alg.unit) - a)));
        for (Index c : a0) {
            CVec cv = alg.basis(c);
            CVec ac = alg.product(a, cv);
            CVec ca = alg.product(cv, a);
            note("star_product", max_abs(CVec(alg.star(ac) - alg.product(alg.star(cv), alg.star(a)))));
            for (Index e : a0) {
                CVec ev = alg.basis(e);
                note("associativity", max_abs(CVec(alg.product(ca, ev) - alg.product(cv, alg.product(a, ev)))));
                note("associativity", max_abs(CVec(alg.product(a, alg.product(cv, ev)) - alg.product(ac, ev))));
            }
        }
    }
    for (Index c : a0) {
        if (!alg.supported_on_a0(alg.star(alg.basis(c)), 1e-14)) note("a0_closed", 1.0);
        for (Index e : a0)
            if (!alg.supported_on_a0(alg.product(alg.basis(c), alg.basis(e)), 1e-14)) note("a0_closed", 1.0);
    }

    Rng rng(seed);
    double gemp = 0.0;
    for (Index t = 0; t < trials; ++t) {
        CVec a = gaussian_vector(rng, d);
        CVec c = random_a0_element(alg, rng);
        double na = alg.norm_a.eval(a);
        double nc = alg.norm_a0.eval(c);
        if (nc == 0.0 || na == 0.0) continue;
        c /= nc;
        note("isometry", std::abs(alg.norm_a.eval(alg.star(a)) - na) / na);
        note("isometry", std::abs(alg.norm_a0.eval(alg.star(c)) - 1.0));
        double g = std::max(alg.norm_a.eval(alg.product(a, c)), alg.norm_a.eval(alg.product(c, a))) / na;
        gemp = std::max(gemp, g);
    }
    r.gamma_empirical = gemp;
    for (auto& [k, v] : r.residuals) r.worst_residual = std::max(r.worst_residual, v);
    r.passed = r.worst_residual <= tol && gemp <= alg.gamma * (1.0 + tol);
    return r;
}

}  // namespace opmod
