#include "opmod/instances.hpp"

#include <gtest/gtest.h>

using namespace opmod;

namespace {

std::vector<BimoduleSpace> cp_targets() {
    OpDomain mat{DomainKind::Matrix, 2};
    return {BimoduleSpace::l2_finite(2), BimoduleSpace::l1_trace(2), BimoduleSpace::dual_vn(2),
            BimoduleSpace::measures_finite(2), BimoduleSpace::c_grid(3), BimoduleSpace::bcc(2, 2),
            BimoduleSpace::seq_c(2, 2), BimoduleSpace::op_map(mat, BimoduleSpace::l1_trace(2)),
            BimoduleSpace::op_map(mat, BimoduleSpace::dual_vn(2))};
}

CMat unit2(Index i) {
    CMat e = CMat::Zero(2, 2);
    e(i / 2, i % 2) = 1.0;
    return e;
}

}  // namespace

TEST(Stinespring, RandomCpFormsFactor) {
    for (const auto& t : cp_targets())
        for (std::uint64_t s = 1; s <= 3; ++s) {
            CPForm f = random_cp(s, 4, 2, t);
            StinespringTriple tr = build_stinespring(f);
            TripleReport r = verify_stinespring(tr);
            EXPECT_TRUE(r.passed) << t.name();
            EXPECT_EQ(tr.v.rows(), tr.rank());
            EXPECT_EQ(tr.v.cols(), 2);
            EXPECT_EQ(tr.span_rank, tr.rank());
            EXPECT_LE(tr.v_norm_sq, tr.bound_m * tr.unit_norm * tr.unit_norm * (1 + 1e-9)) << t.name();
        }
}

TEST(Stinespring, UnitFiberFormIsPhiAtUnit) {
    CPForm f = random_cp(5, 4, 3, BimoduleSpace::l1_trace(2));
    StinespringTriple tr = build_stinespring(f);
    SesquiForm u = tr.unit_fiber_form();
    Rng rng(1);
    const CVec& e = f.algebra()->unit;
    for (int k = 0; k < 10; ++k) {
        CVec x = gaussian_vector(rng, 3), y = gaussian_vector(rng, 3);
        EXPECT_LT((u.eval(x, y) - f.eval(e, e, x, y)).norm(), 1e-9);
    }
}

TEST(Stinespring, ReconstructsFromTriple) {
    // Phi(a, b)(x, y) = <pi(a) V x, pi(b) V y> evaluated from the triple pieces
    CPForm f = random_cp(7, 4, 2, BimoduleSpace::c_grid(2));
    StinespringTriple tr = build_stinespring(f);
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
        CVec a = gaussian_vector(rng, 4), b = gaussian_vector(rng, 4);
        CVec x = gaussian_vector(rng, 2), y = gaussian_vector(rng, 2);
        CVec got = tr.quotient.gram.eval(tr.pi(a) * tr.v * x, tr.pi(b) * tr.v * y);
        CVec expect = f.eval(a, b, x, y);
        EXPECT_LT((got - expect).norm(), 1e-9 * std::max(1.0, expect.norm()));
    }
}

TEST(Stinespring, PermutedRebuildIsUnitarilyEquivalent) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
        CPForm f = random_cp(s, 4, 2, BimoduleSpace::l1_trace(2));
        StinespringOptions o2;
        std::vector<Index> perm(8);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(s);
        std::shuffle(perm.begin(), perm.end(), rng);
        o2.quotient.permutation = perm;
        o2.quotient.rotation_seed = s + 10;
        StinespringTriple t1 = build_stinespring(f), t2 = build_stinespring(f, o2);
        UnitaryEquivalence u = unitary_equiv(t1, t2);
        EXPECT_TRUE(u.passed);
        EXPECT_LE(u.uv_residual, 1e-8);
        EXPECT_LE(u.intertwine_residual, 1e-8);
    }
}

TEST(Stinespring, DifferentFormsAreRejected) {
    CPForm f = random_cp(1, 4, 2, BimoduleSpace::l2_finite(1));
    CPForm g = random_cp(2, 4, 2, BimoduleSpace::l2_finite(1));
    EXPECT_THROW(unitary_equiv(build_stinespring(f), build_stinespring(g)), PreconditionError);
}

TEST(Stinespring, NonCpFormIsRejected) {
    CPForm f = random_cp(3, 4, 2, BimoduleSpace::l1_trace(2));
    double margin = 0;
    CPForm bad = perturb_noncp(f, 10.0, 99, &margin);
    ASSERT_GT(margin, 0.0);
    EXPECT_FALSE(check_cp(bad).ok());
    EXPECT_THROW(build_stinespring(bad), PreconditionError);
}

TEST(RadonNikodym, ScaledPairHasNormSqrtC) {
    CPForm f = random_cp(11, 4, 2, BimoduleSpace::l1_trace(2));
    const double gamma = 2.0;
    for (double c : {0.25, 1.0, gamma}) {
        RNOperator rn = radon_nikodym(f.scaled(c), f, gamma);
        EXPECT_TRUE(rn.passed) << c;
        EXPECT_NEAR(rn.norm_estimate, std::sqrt(c), 1e-8) << c;
        EXPECT_LE(rn_scaling_residual(f, c, rn), 1e-8) << c;
    }
}

TEST(RadonNikodym, CompressedPair) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
        Rng rng(s);
        DominatedPair p = compressed_pair(rng, algebra_for_dim(4), 2, NormSpec::euclidean(2), BimoduleSpace::c_grid(2), 1.5);
        RNOperator rn = radon_nikodym(p.psi, p.phi, p.gamma);
        EXPECT_TRUE(rn.passed);
        EXPECT_LE(rn.norm_estimate, std::sqrt(p.gamma) * (1 + 1e-9));
        EXPECT_LE(rn.tv_residual, 1e-8);
        EXPECT_LE(rn.factorization_residual, 1e-8);
    }
}

TEST(RadonNikodym, UndominatedPairIsRejected) {
    CPForm f = random_cp(12, 4, 2, BimoduleSpace::l1_trace(2));
    EXPECT_THROW(radon_nikodym(f.scaled(4.0), f, 2.0), PreconditionError);
}

TEST(RadonNikodym, PositiveForms) {
    SesquiForm f = random_positive(13, 4, BimoduleSpace::l1_trace(2));
    RNOperator rn = radon_nikodym_positive(f.scaled(0.25), f, 1.0);
    EXPECT_TRUE(rn.passed);
    EXPECT_NEAR(rn.norm_estimate, 0.5, 1e-8);
}

TEST(Lift, ProductAndAdjointTables) {
    // Gamma(T1, T2) = T1 T2*, Psi(Z, X) = X* Z, checked against Eigen products
    SesquiMap g = matrix_product_gamma(2), p = adjoint_product_psi(2);
    Rng rng(4);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    EXPECT_LT((g.apply(flatten(a), flatten(b)) - flatten(CMat(a * b.adjoint()))).norm(), 1e-12);
    EXPECT_LT((p.apply(flatten(a), flatten(b)) - flatten(CMat(b.adjoint() * a))).norm(), 1e-12);
}

// With W = I the psi example lifts to X2* B* A X1. Taking A = I, B = E_12, X1 = E_11,
// X2 = E_22 shows the variant that puts (X1, X2) into both diagonal factors cannot hold,
// while the elementary-tensor bound does.
TEST(Lift, PsiDisplayVariantCounterexample) {
    PsiInstance inst = gen_psi_example(CMat::Identity(2, 2));
    CPForm lifted = psi_lift(inst.phi, inst.psi, inst.out, inst.fiber);
    CVec a = flatten(CMat(CMat::Identity(2, 2))), b = flatten(unit2(1));
    CVec x1 = flatten(unit2(0)), x2 = flatten(unit2(3));
    const BimoduleSpace& y = lifted.target();

    CMat direct = unit2(3).adjoint() * unit2(1).adjoint() * CMat::Identity(2, 2) * unit2(0);
    EXPECT_LT((lifted.eval(a, b, x1, x2) - flatten(direct)).norm(), 1e-14);

    double lhs = norm(y, lifted.eval(a, b, x1, x2)).value;
    double wrong = std::sqrt(norm(y, lifted.eval(a, a, x1, x2)).value * norm(y, lifted.eval(b, b, x1, x2)).value);
    double right = std::sqrt(norm(y, lifted.eval(a, a, x1, x1)).value * norm(y, lifted.eval(b, b, x2, x2)).value);
    EXPECT_NEAR(lhs, 1.0, 1e-14);
    EXPECT_NEAR(wrong, 0.0, 1e-14);
    EXPECT_GT(lhs, wrong);
    EXPECT_LE(lhs, right * (1 + 1e-12));
}

TEST(Lift, PsiExampleVerifies) {
    Rng rng(5);
    PsiInstance inst = gen_psi_example(gaussian_matrix(rng, 2, 2));
    LiftReport r = verify_psi_lift(inst.phi, inst.psi, inst.out, inst.fiber);
    EXPECT_TRUE(r.passed);
    EXPECT_TRUE(r.v_bound_ok);
}

TEST(Lift, GammaVariantsVerify) {
    KernelSpec spec = standard_kernel_spec(7, 2, 17);
    for (GammaVariant v : {GammaVariant::CGrid, GammaVariant::Dual, GammaVariant::L1}) {
        Rng rng(6);
        GammaOptions go;
        go.w_tilde = random_psd_with_norm(rng, 2, spec.w_norm());
        go.g = gaussian_matrix(rng, 2, 2);
        GammaInstance inst = gen_gamma_example(spec, v, go);
        LiftReport r = verify_gamma_lift(inst.phi, inst.gamma, inst.fiber);
        EXPECT_TRUE(r.passed) << to_string(v);
        EXPECT_LE(r.v_norm_sq, r.unit_map_norm * r.map_norm * (1 + 1e-9)) << to_string(v);
    }
}

TEST(Stinespring, GelfandPettisExample) {
    CPForm f = gen_gelfand_pettis(standard_gp_spec());
    EXPECT_TRUE(check_cp(f).ok());
    StinespringTriple tr = build_stinespring(f);
    TripleReport r = verify_stinespring(tr);
    EXPECT_TRUE(r.passed);
    EXPECT_LE(r.well_definedness_residual, 1e-8);
}

TEST(Series, CpSeries) {
    for (Index terms : {1, 10, 50}) {
        Rng rng(terms + 100);
        std::vector<CPForm> fs;
        std::vector<CVec> as, ats, xs, xts;
        for (Index n = 0; n < terms; ++n) {
            fs.push_back(random_cp(rng, algebra_for_dim(4), 2, NormSpec::euclidean(2), BimoduleSpace::l1_trace(2)));
            as.push_back(gaussian_vector(rng, 4));
            ats.push_back(gaussian_vector(rng, 4));
            xs.push_back(gaussian_vector(rng, 2));
            xts.push_back(gaussian_vector(rng, 2));
        }
        EXPECT_TRUE(verify_series_cp_cs(fs, as, ats, xs, xts).passed);
    }
}
