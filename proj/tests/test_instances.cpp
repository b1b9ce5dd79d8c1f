#include "opmod/suite.hpp"

#include <gtest/gtest.h>

using namespace opmod;

namespace {

CMat unit_matrix(Index n, Index i) {
    CMat e = CMat::Zero(n, n);
    e(i / n, i % n) = 1.0;
    return e;
}

KernelSpec spec_with(const CMat& w, KernelFn k, Index grid = 9, double weight = 1.0) {
    KernelSpec s;
    s.w = w;
    s.k = k;
    s.grid = grid;
    s.weight = weight;
    return s;
}

}  // namespace

TEST(Instances, EtaAtIdentity) {
    FunctionalCalculus fc(CMat::Identity(3, 3));
    KernelFn k = KernelFn::gaussian(0.7);
    for (double x : {0.0, 0.3, 1.0}) {
        CMat eta = fc.eta(k, x);
        EXPECT_LT((eta - k(x, 1.0) * CMat::Identity(3, 3)).norm(), 1e-14);
    }
}

// W = I and k(x, t) = x t: Phi(A, B)(x) = x tr(B* A).
TEST(Instances, KernelFormIdentityProductExample) {
    KernelSpec s = spec_with(CMat::Identity(2, 2), KernelFn::product(1.0), 5);
    SesquiForm f = gen_kernel_form(s);
    std::vector<double> pts = s.points();
    Rng rng(1);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    CVec v = f.eval(flatten(a), flatten(b));
    for (size_t g = 0; g < pts.size(); ++g) EXPECT_NEAR(std::abs(v(g) - pts[g] * (b.adjoint() * a).trace()), 0.0, 1e-12);
    EXPECT_EQ(check_positive(f).verdict, Verdict::VerifiedExact);
}

// Product kernel c x t gives eta_x(W) = c x W with no eigendecomposition needed.
TEST(Instances, KernelFormProductKernelGeneralW) {
    Rng rng(2);
    CMat w = random_psd_with_norm(rng, 3, 1.3);
    KernelSpec s = spec_with(w, KernelFn::product(0.8), 7, 2.0);
    SesquiForm f = gen_kernel_form(s);
    std::vector<double> pts = s.points();
    EXPECT_NEAR(pts.back(), 1.3, 1e-12);
    CMat a = gaussian_matrix(rng, 3, 3), b = gaussian_matrix(rng, 3, 3);
    CVec v = f.eval(flatten(a), flatten(b));
    for (size_t g = 0; g < pts.size(); ++g) {
        cplx expect = 2.0 * 0.8 * pts[g] * (b.adjoint() * a * w).trace();
        EXPECT_NEAR(std::abs(v(g) - expect), 0.0, 1e-10);
    }
    EXPECT_TRUE(check_left_invariant(f).passed);
}

TEST(Instances, ComposedForm) {
    Rng rng(3);
    CMat w = random_psd_with_norm(rng, 2, 1.0);
    KernelSpec s = spec_with(w, KernelFn::product(1.0));
    std::vector<double> f{0.0, 0.25, 0.9, 1.0};
    SesquiForm c = gen_composed_form(s, f);
    EXPECT_EQ(c.target().kind(), SpaceKind::L2Finite);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    CVec v = c.eval(flatten(a), flatten(b));
    for (size_t j = 0; j < f.size(); ++j) EXPECT_NEAR(std::abs(v(j) - f[j] * (b.adjoint() * a * w).trace()), 0.0, 1e-10);
    EXPECT_THROW(gen_composed_form(s, {2.0}), PreconditionError);
}

TEST(Instances, MeasureForm) {
    SesquiForm base = gen_kernel_form(spec_with(CMat::Identity(2, 2), KernelFn::constant(1.0), 4));
    RVec mu(4);
    mu << 0.5, 0.0, 2.0, 1.0;
    SesquiForm m = gen_measure_form(base, mu);
    EXPECT_EQ(m.target().kind(), SpaceKind::MeasuresFinite);
    for (Index t = 0; t < 4; ++t) EXPECT_LT((m.coeffs().row(t) - mu(t) * base.coeffs().row(t)).norm(), 1e-14);
    RVec neg = mu;
    neg(1) = -1.0;
    EXPECT_THROW(gen_measure_form(base, neg), PreconditionError);
}

// Product kernel and constant F0: the trapezoid rule is exact and the integral of x over
// [0, L] is L^2 / 2, so Phi(A, B)(X1, X2) = T* tr((A X1)(B X2)* ... ) weighted accordingly.
TEST(Instances, GelfandPettisClosedForm) {
    Rng rng(4);
    GPIntegralSpec gp;
    gp.kernel = spec_with(random_psd_with_norm(rng, 2, 1.5), KernelFn::product(1.0), 11);
    CMat f0 = random_psd(rng, 2);
    gp.f_poly = {f0};
    gp.t = gaussian_matrix(rng, 2, 2);
    CPForm f = gen_gelfand_pettis(gp);
    const double l = 1.5;
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    CMat x1 = gaussian_matrix(rng, 2, 2), x2 = gaussian_matrix(rng, 2, 2);
    cplx scalar = ((b * x2).adjoint() * (a * x1) * gp.kernel.w).trace() * (l * l / 2.0);
    CMat expect = gp.t.adjoint() * (scalar * f0) * gp.t;
    CVec got = f.eval(flatten(a), flatten(b), flatten(x1), flatten(x2));
    EXPECT_LT((got - flatten(expect)).norm(), 1e-9 * std::max(1.0, expect.norm()));
}

TEST(Instances, GelfandPettisGridRefinement) {
    GPIntegralSpec coarse = standard_gp_spec(11, 2, 2, 65);
    GPIntegralSpec fine = standard_gp_spec(11, 2, 2, 129);
    CPForm a = gen_gelfand_pettis(coarse), b = gen_gelfand_pettis(fine);
    double scale = max_abs(b.coeffs());
    EXPECT_LE(max_abs(CMat(a.coeffs() - b.coeffs())) / scale, 1e-4);
}

// Constant kernel c: eta = c I, so the CGrid image of E_pq at every point is c^2 w (B* A)_qp.
TEST(Instances, GammaExampleConstantKernel) {
    const double c = 0.7, wt = 1.5;
    KernelSpec s = spec_with(CMat::Identity(2, 2), KernelFn::constant(c), 3, wt);
    GammaInstance inst = gen_gamma_example(s, GammaVariant::CGrid);
    Rng rng(5);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2);
    CVec phi = inst.phi.eval(flatten(a), flatten(b));
    CMat ba = b.adjoint() * a;
    for (Index p = 0; p < 2; ++p)
        for (Index q = 0; q < 2; ++q) {
            CVec img = apply_map(inst.phi.target(), phi, unit_matrix(2, p * 2 + q));
            for (Index g = 0; g < 3; ++g) EXPECT_NEAR(std::abs(img(g) - c * c * wt * ba(q, p)), 0.0, 1e-12);
        }

    GammaOptions go;
    go.w_tilde = CMat::Identity(2, 2);
    GammaInstance dual = gen_gamma_example(s, GammaVariant::Dual, go);
    CVec d = dual.phi.eval(flatten(a), flatten(b));
    CVec img = apply_map(dual.phi.target(), d, unit_matrix(2, 1));
    EXPECT_LT((unflatten(img, 2, 2) - c * c * wt * ba(1, 0) * CMat::Identity(2, 2)).norm(), 1e-12);
    go.w_tilde = 3.0 * CMat::Identity(2, 2);
    EXPECT_THROW(gen_gamma_example(s, GammaVariant::Dual, go), PreconditionError);
}

TEST(Instances, PsiExampleValues) {
    Rng rng(6);
    CMat w = gaussian_matrix(rng, 2, 2);
    PsiInstance inst = gen_psi_example(w);
    CMat a = gaussian_matrix(rng, 2, 2), b = gaussian_matrix(rng, 2, 2), x = gaussian_matrix(rng, 2, 2);
    CVec img = apply_map(inst.phi.target(), inst.phi.eval(flatten(a), flatten(b)), x);
    EXPECT_LT((img - flatten(CMat(w.adjoint() * b.adjoint() * a * w * x))).norm(), 1e-12);
}

TEST(Instances, SpectralMarginIsSharp) {
    for (std::uint64_t s = 1; s <= 10; ++s) {
        SesquiForm f = random_positive(s, 4, BimoduleSpace::c_grid(2), RandomFormOptions{2, true, false});
        Rng rng(s);
        Index i = static_cast<Index>(rng() % 4);
        CVec c = random_cone_element(f.target(), rng);
        double m = spectral_margin(f, i, c);
        ASSERT_GT(m, 0.0);
        PositivityOptions po;
        po.mode = PositivityMode::Exact;
        EXPECT_TRUE(check_positive(perturb_noncp(f, 0.5 * m, i, c), po).ok());
        EXPECT_FALSE(check_positive(perturb_noncp(f, 10.0 * m, i, c), po).ok());
    }
}

TEST(Instances, PlantedNullAcrossTargets) {
    for (const auto& t : {BimoduleSpace::l2_finite(2), BimoduleSpace::dual_vn(2), BimoduleSpace::bcc(2, 2)})
        for (Index k = 0; k <= 4; ++k) {
            Rng rng(50 + k);
            EXPECT_EQ(null_space(planted_null_form(rng, 4, k, t)).basis.cols(), k) << t.name();
        }
}

TEST(Instances, GeneratorsAreDeterministic) {
    for (const std::string& k : generator_kinds()) {
        json spec = json::object();
        if (k == "perturbed") spec = {{"base", {{"kind", "random-positive"}}}};
        json a = generate_instance(k, spec, 42), b = generate_instance(k, spec, 42);
        EXPECT_EQ(digest(a), digest(b)) << k;
        EXPECT_NO_THROW(instance_from_json(a)) << k;
    }
    EXPECT_THROW(generate_instance("nope", json::object(), 1), FormatError);
}

TEST(Json, RoundTrips) {
    SesquiForm f = random_positive(3, 4, BimoduleSpace::op_map({DomainKind::Matrix, 2}, BimoduleSpace::dual_vn(2)));
    SesquiForm g = form_from_json(json::parse(form_to_json(f).dump()));
    EXPECT_EQ(max_abs(CMat(f.coeffs() - g.coeffs())), 0.0);
    EXPECT_TRUE(g.target() == f.target());
    EXPECT_EQ(g.algebra()->dim, 4);

    CPForm c = random_cp(4, 4, 2, BimoduleSpace::seq_c(2, 2));
    CPForm d = cp_from_json(json::parse(cp_to_json(c).dump()));
    EXPECT_EQ(max_abs(CMat(c.coeffs() - d.coeffs())), 0.0);
    EXPECT_EQ(d.m(), 2);

    LiftInstance l = to_lift(gen_psi_example(CMat::Identity(2, 2)));
    LiftInstance l2 = lift_from_json(json::parse(lift_to_json(l).dump()));
    EXPECT_EQ(l2.kind, "psi");
    EXPECT_EQ(max_abs(CMat(lifted_form(l).coeffs() - lifted_form(l2).coeffs())), 0.0);

    for (const auto& s : {BimoduleSpace::bcc(3, 2), BimoduleSpace::c_grid(3, {0.0, 0.5, 1.0}),
                          BimoduleSpace::op_map({DomainKind::Diagonal, 2}, BimoduleSpace::measures_finite(2))})
        EXPECT_TRUE(space_from_json(space_to_json(s)) == s) << s.name();
}

TEST(Json, MalformedInputs) {
    EXPECT_THROW(require_schema(json{{"type", "sesqui_form"}}), FormatError);
    EXPECT_THROW(space_from_json(json{{"kind", "Nope"}, {"n", 2}}), FormatError);
    json f = form_to_json(trace_form(2));
    f["coeffs"] = mat_to_json(CMat::Zero(1, 3));
    EXPECT_THROW(instance_from_json(with_schema(f)), FormatError);
    EXPECT_THROW(read_json_file("/nonexistent/file.json"), IoError);
}

TEST(Suite, ConfigValidation) {
    json bad{{"schema", kSchema}, {"tolerances", {{"cone_tol", -1.0}}}};
    EXPECT_THROW(config_from_json(bad), FormatError);
    json dup{{"schema", kSchema},
             {"instances", json::array({{{"id", "x"}, {"generate", {{"kind", "trace-form"}}}},
                                        {{"id", "x"}, {"generate", {{"kind", "trace-form"}}}}})}};
    EXPECT_THROW(config_from_json(dup), FormatError);
}

TEST(Suite, EmptyConfigPasses) {
    SuiteConfig cfg = config_from_json(json{{"schema", kSchema}, {"instances", json::array()}});
    SuiteReport r = run_suite(cfg, 1);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_TRUE(r.report.at("records").empty());
}

TEST(Suite, ParallelismDoesNotChangeReport) {
    json cfg{{"schema", kSchema}, {"seed", 9}, {"trials", 50},
             {"instances", json::array({{{"id", "t"}, {"generate", {{"kind", "trace-form"}}}},
                                        {{"id", "cp"}, {"generate", {{"kind", "random-cp"}, {"seed", 3}}}},
                                        {{"id", "pm"}, {"generate", {{"kind", "positive-map"}, {"seed", 4}}}}})}};
    SuiteConfig c = config_from_json(cfg);
    SuiteReport a = run_suite(c, 1), b = run_suite(c, 4);
    EXPECT_EQ(a.report.dump(), b.report.dump());
    EXPECT_EQ(a.exit_code, 0);
}
