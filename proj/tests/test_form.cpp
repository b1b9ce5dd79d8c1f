#include "opmod/instances.hpp"

#include <gtest/gtest.h>

using namespace opmod;

namespace {

std::vector<BimoduleSpace> cs_targets() {
    OpDomain mat{DomainKind::Matrix, 2};
    return {BimoduleSpace::l2_finite(3),
            BimoduleSpace::op_map(mat, BimoduleSpace::l1_trace(2)),
            BimoduleSpace::dual_vn(2),
            BimoduleSpace::measures_finite(3),
            BimoduleSpace::op_map(mat, BimoduleSpace::measures_finite(2)),
            BimoduleSpace::bcc(3, 2),
            BimoduleSpace::l1_trace(2),
            BimoduleSpace::op_map(mat, BimoduleSpace::dual_vn(2)),
            BimoduleSpace::seq_c(3, 2)};
}

// Scalar Gram form Phi(x, y) = y* G x with the given PSD G.
SesquiForm gram_form(const CMat& g) {
    Index d = g.rows();
    CMat c(1, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) c(0, i * d + j) = g(j, i);
    return SesquiForm(BimoduleSpace::l2_finite(1), d, c);
}

}  // namespace

TEST(Form, EvalIsSesquilinear) {
    Rng rng(1);
    CMat b = gaussian_matrix(rng, 3, 3);
    CMat g = b.adjoint() * b;
    SesquiForm f = gram_form(g);
    CVec x = gaussian_vector(rng, 3), y = gaussian_vector(rng, 3);
    cplx expect = (y.adjoint() * g * x)(0);
    EXPECT_NEAR(std::abs(f.eval(x, y)(0) - expect), 0.0, 1e-12);
    cplx s(0.3, -1.7);
    EXPECT_NEAR(std::abs(f.eval(s * x, y)(0) - s * expect), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(f.eval(x, s * y)(0) - std::conj(s) * expect), 0.0, 1e-12);
}

TEST(Form, TraceFormIsExactlyPositive) {
    SesquiForm f = trace_form(2);
    PositivityReport r = check_positive(f);
    EXPECT_EQ(r.verdict, Verdict::VerifiedExact);
    // tr(b* a) against Eigen
    Rng rng(2);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    EXPECT_NEAR(std::abs(f.eval(flatten(a), flatten(b))(0) - (b.adjoint() * a).trace()), 0.0, 1e-12);
}

TEST(Form, NegativeFormHasWitness) {
    SesquiForm f = trace_form(2).scaled(-1.0);
    PositivityReport r = check_positive(f);
    ASSERT_EQ(r.verdict, Verdict::Counterexample);
    ASSERT_TRUE(r.witness.has_value());
    EXPECT_LT(f.eval(*r.witness, *r.witness)(0).real(), 0.0);
}

TEST(Form, RandomFormsArePositiveInEveryTarget) {
    for (const auto& t : cs_targets())
        for (std::uint64_t s = 1; s <= 5; ++s) {
            SesquiForm f = random_positive(s, 4, t);
            PositivityOptions po;
            po.trials = 100;
            po.seed = s;
            EXPECT_TRUE(check_positive(f, po).ok()) << t.name();
            EXPECT_LT(hermitian_residual(f), 1e-12) << t.name();
        }
}

TEST(Form, MatrixValuesArePsd) {
    Rng rng(3);
    SesquiForm f = random_positive(7, 4, BimoduleSpace::l1_trace(3));
    for (int t = 0; t < 50; ++t) {
        CVec x = gaussian_vector(rng, 4);
        CMat v = unflatten(f.eval(x, x), 3, 3);
        EXPECT_LT((v - v.adjoint()).norm(), 1e-10);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<CMat>(hermitian_part(v)).eigenvalues().minCoeff(), -1e-10);
    }
}

TEST(Form, CauchySchwarzScalarOracle) {
    Rng rng(4);
    CMat b = gaussian_matrix(rng, 4, 2);
    SesquiForm f = gram_form(CMat(b * b.adjoint()));
    CsOptions co;
    co.trials = 300;
    InequalityReport r = verify_cs(f, co);
    EXPECT_TRUE(r.passed);
    for (int t = 0; t < 300; ++t) {
        CVec x = gaussian_vector(rng, 4), y = gaussian_vector(rng, 4);
        double l = std::norm(f.eval(x, y)(0));
        double rhs = f.eval(x, x)(0).real() * f.eval(y, y)(0).real();
        EXPECT_LE(l, rhs * (1 + 1e-12) + 1e-12);
    }
}

TEST(Form, CauchySchwarzAcrossTargets) {
    for (const auto& t : cs_targets()) {
        SesquiForm f = random_positive(11, 4, t);
        CsOptions co;
        co.trials = 100;
        co.seed = 5;
        InequalityReport r = verify_cs(f, co);
        EXPECT_TRUE(r.passed) << t.name() << " margin " << r.worst_margin;
        EXPECT_LE(r.worst_margin, 1e-9) << t.name();
    }
}

TEST(Form, KadisonSchwarz) {
    for (const auto& t : {BimoduleSpace::l1_trace(2), BimoduleSpace::dual_vn(2)}) {
        Rng rng(6);
        LinearPositiveMap w;
        w.algebra = make_matrix_algebra(2, MatrixNorm::Operator);
        w.target = t;
        w.images = detail::random_kmat(t, 2, rng, false, true);
        CsOptions co;
        co.trials = 200;
        EXPECT_TRUE(verify_ks(w, co).passed) << t.name();
        // omega(b* a) bound with the induced form, evaluated directly
        SesquiForm g = w.induced_form();
        CVec a = gaussian_vector(rng, 4), b = gaussian_vector(rng, 4);
        CVec direct = w.apply(w.algebra->product(w.algebra->star(b), a));
        EXPECT_LT((direct - g.eval(a, b)).norm(), 1e-12);
    }
}

TEST(Form, LeftInvariance) {
    SesquiForm f = random_positive(13, 4, BimoduleSpace::l2_finite(2));
    EXPECT_TRUE(check_left_invariant(f).passed);
    Rng rng(7);
    CMat b = gaussian_matrix(rng, 4, 4);
    SesquiForm g = gram_form(CMat(b * b.adjoint())).with_algebra(make_matrix_algebra(2, MatrixNorm::Operator));
    EXPECT_FALSE(check_left_invariant(g).passed);
}

TEST(Form, PlantedNullSpace) {
    for (Index k = 0; k <= 5; ++k) {
        Rng rng(100 + k);
        SesquiForm f = planted_null_form(rng, 5, k, BimoduleSpace::l1_trace(2));
        NullSpace ns = null_space(f);
        EXPECT_EQ(ns.rank, 5 - k);
        EXPECT_EQ(ns.basis.cols(), k);
    }
}

TEST(Form, PerturbationBreaksPositivity) {
    int detected = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        SesquiForm f = random_positive(s, 4, BimoduleSpace::c_grid(3));
        PerturbedInstance p = perturb_noncp(f, 10.0, s + 1000);
        if (!(p.margin > 0) || std::isinf(p.margin)) continue;
        PositivityOptions po;
        po.seed = s;
        if (!check_positive(p.form, po).ok()) ++detected;
    }
    EXPECT_GE(detected, 19);
}

TEST(Form, SeriesBound) {
    for (Index terms : {1, 10, 50}) {
        Rng rng(terms);
        std::vector<SesquiForm> fs;
        std::vector<CVec> xs, xts;
        for (Index n = 0; n < terms; ++n) {
            fs.push_back(random_positive(rng, algebra_for_dim(4), BimoduleSpace::c_grid(3)));
            xs.push_back(gaussian_vector(rng, 4));
            xts.push_back(gaussian_vector(rng, 4));
        }
        SeriesReport r = verify_series_cs(fs, xs, xts);
        EXPECT_TRUE(r.passed);
        EXPECT_TRUE(r.monotone);
        EXPECT_EQ(r.terms, terms);
    }
    std::vector<SesquiForm> bad{random_positive(1, 4, BimoduleSpace::dual_vn(2))};
    std::vector<CVec> v{CVec::Ones(4)};
    EXPECT_THROW(verify_series_cs(bad, v, v), PreconditionError);
}

TEST(Form, ShapeErrors) {
    EXPECT_THROW(SesquiForm(BimoduleSpace::l2_finite(2), 3, CMat::Zero(2, 8)), ShapeError);
    SesquiForm f = trace_form(2);
    EXPECT_THROW(f.eval(CVec::Zero(3), CVec::Zero(4)), ShapeError);
}
