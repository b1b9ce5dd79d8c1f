// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include "opmod/opmod.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <thread>

using namespace opmod;

namespace {

// Pinned tolerances.
constexpr double kIneqTol = 1e-9;
constexpr double kResidualTol = 1e-8;
constexpr double kBoundSlack = 1e-9;
constexpr double kRnNormTol = 1e-8;
constexpr double kCsBudgetSeconds = 120.0;
constexpr Index kCsForms = 100;
constexpr Index kCsPairs = 1000;
constexpr Index kPerturbedInstances = 100;
constexpr Index kPerturbedRequired = 95;
constexpr double kPerturbFactor = 10.0;

struct Outcome {
    bool pass = true;
    std::string detail;
};

Index worker_threads() { return std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency())); }

const OpDomain kMat{DomainKind::Matrix, 2};

std::vector<BimoduleSpace> cs_targets() {
    return {BimoduleSpace::l2_finite(3),
            BimoduleSpace::op_map(kMat, BimoduleSpace::l1_trace(2)),
            BimoduleSpace::dual_vn(2),
            BimoduleSpace::measures_finite(3),
            BimoduleSpace::op_map(kMat, BimoduleSpace::measures_finite(2)),
            BimoduleSpace::bcc(3, 2),
            BimoduleSpace::l1_trace(2),
            BimoduleSpace::op_map(kMat, BimoduleSpace::dual_vn(2)),
            BimoduleSpace::seq_c(3, 2)};
}

std::vector<BimoduleSpace> cp_targets() {
    return {BimoduleSpace::l2_finite(2), BimoduleSpace::l1_trace(2), BimoduleSpace::dual_vn(2),
            BimoduleSpace::measures_finite(2), BimoduleSpace::c_grid(3), BimoduleSpace::bcc(2, 2),
            BimoduleSpace::seq_c(2, 2), BimoduleSpace::op_map(kMat, BimoduleSpace::l1_trace(2)),
            BimoduleSpace::op_map(kMat, BimoduleSpace::dual_vn(2))};
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome c1_cauchy_schwarz() {
    auto start = std::chrono::steady_clock::now();
    Index violations = 0, checked = 0;
    double worst = -std::numeric_limits<double>::infinity();
    std::string first;
    for (const auto& t : cs_targets())
        for (Index k = 0; k < kCsForms; ++k) {
            SesquiForm f = random_positive(derive_seed(1001, t.name() + "/" + std::to_string(k)), 4, t);
            CsOptions co;
            co.trials = kCsPairs;
            co.tol = kIneqTol;
            co.seed = static_cast<std::uint64_t>(k + 1);
            co.threads = worker_threads();
            InequalityReport r = verify_cs(f, co);
            ++checked;
            worst = std::max(worst, r.worst_margin);
            if (!r.passed) {
                ++violations;
                if (first.empty()) first = t.name() + " form " + std::to_string(k);
            }
        }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Outcome o;
    o.pass = violations == 0 && secs <= kCsBudgetSeconds;
    o.detail = fmt("%lld forms x %lld pairs over 9 targets, %lld violations, worst margin %.3g, %.1f s (budget %.0f s)",
                   static_cast<long long>(checked), static_cast<long long>(kCsPairs), static_cast<long long>(violations),
                   worst, secs, kCsBudgetSeconds);
    if (!first.empty()) o.detail += ", first: " + first;
    return o;
}

Outcome c2_falsification() {
    std::vector<BimoduleSpace> ts{BimoduleSpace::l2_finite(2), BimoduleSpace::c_grid(3), BimoduleSpace::l1_trace(2),
                                  BimoduleSpace::dual_vn(2), BimoduleSpace::bcc(2, 2), BimoduleSpace::seq_c(2, 2),
                                  BimoduleSpace::measures_finite(3)};
    Index instances = 0, witnessed = 0, degenerate = 0;
    for (std::uint64_t s = 1; instances < kPerturbedInstances && s < 10 * kPerturbedInstances; ++s) {
        const BimoduleSpace& t = ts[s % ts.size()];
        SesquiForm f = random_positive(derive_seed(2002, s), 4, t);
        PerturbedInstance p = perturb_noncp(f, kPerturbFactor, derive_seed(2003, s));
        if (!(p.margin > 0) || std::isinf(p.margin)) {
            ++degenerate;
            continue;
        }
        ++instances;
        PositivityOptions po;
        po.seed = s;
        PositivityReport r = check_positive(p.form, po);
        // the witness must really leave the cone
        if (!r.ok() && r.witness && !cone_contains(t, p.form.eval(*r.witness, *r.witness))) ++witnessed;
    }
    Outcome o;
    o.pass = instances == kPerturbedInstances && witnessed >= kPerturbedRequired;
    o.detail = fmt("%lld of %lld perturbed instances (eps = %.0f x margin) produced a verified witness, need %lld; %lld "
                   "draws skipped with degenerate margin",
                   static_cast<long long>(witnessed), static_cast<long long>(instances), kPerturbFactor,
                   static_cast<long long>(kPerturbedRequired), static_cast<long long>(degenerate));
    return o;
}

Outcome c3_kadison_schwarz() {
    Index failures = 0, maps = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& t : {BimoduleSpace::l1_trace(2), BimoduleSpace::dual_vn(2)})
        for (Index k = 0; k < 100; ++k) {
            Rng rng(derive_seed(3003, t.name() + "/" + std::to_string(k)));
            LinearPositiveMap w;
            w.algebra = make_matrix_algebra(2, MatrixNorm::Operator);
            w.target = t;
            w.images = detail::random_kmat(t, 2, rng, false, true);
            CsOptions co;
            co.trials = 1000;
            co.tol = kIneqTol;
            co.seed = static_cast<std::uint64_t>(k + 1);
            co.threads = worker_threads();
            InequalityReport r = verify_ks(w, co);
            ++maps;
            worst = std::max(worst, r.worst_margin);
            if (!r.passed) ++failures;
        }
    return {failures == 0, fmt("%lld positive maps into L1Trace(2) and DualVN(2), 1000 pairs each, %lld violations, "
                               "worst margin %.3g",
                               static_cast<long long>(maps), static_cast<long long>(failures), worst)};
}

bool gns_ok(const SesquiForm& f, std::uint64_t seed, double& worst, Index& bad_rank) {
    GnsRep g = build_gns(f);
    GnsReport r = verify_gns(g, f, 200, kResidualTol, seed);
    worst = std::max({worst, r.factorization_residual, r.homomorphism_residual, r.adjoint_residual, r.unit_residual,
                      r.well_definedness_residual});
    if (r.cyclic_rank != g.rank()) ++bad_rank;
    return r.passed && r.cyclic_rank == g.rank() && r.factorization_residual <= kResidualTol &&
           r.homomorphism_residual <= kResidualTol && r.adjoint_residual <= kResidualTol;
}

Outcome c4_gns() {
    double worst = 0.0;
    Index failures = 0, bad_rank = 0, total = 0;
    for (Index n : {2, 3}) {
        SesquiForm f = trace_form(n);
        ++total;
        if (!gns_ok(f, static_cast<std::uint64_t>(n), worst, bad_rank) || build_gns(f).rank() != n * n) ++failures;
    }
    std::vector<BimoduleSpace> ts = cp_targets();
    for (Index k = 0; k < 50; ++k) {
        const BimoduleSpace& t = ts[static_cast<size_t>(k) % ts.size()];
        SesquiForm f = random_positive(derive_seed(4004, k), k % 2 ? 4 : 3, t);
        ++total;
        if (!gns_ok(f, static_cast<std::uint64_t>(k + 1), worst, bad_rank)) ++failures;
    }
    return {failures == 0, fmt("%lld forms (trace form on M2, M3 and 50 random), %lld failures, cyclic rank mismatches "
                               "%lld, worst residual %.3g",
                               static_cast<long long>(total), static_cast<long long>(failures),
                               static_cast<long long>(bad_rank), worst)};
}

struct TripleTally {
    Index total = 0, failures = 0;
    double worst = 0.0;
    std::string first;

    void add(const CPForm& f, const std::string& label) {
        ++total;
        StinespringTriple tr = build_stinespring(f);
        TripleReport r = verify_stinespring(tr, kResidualTol);
        worst = std::max(worst, r.factorization_residual);
        bool ok = r.passed && r.factorization_residual <= kResidualTol && tr.span_rank == tr.rank() &&
                  tr.v_norm_sq <= tr.bound_m * tr.unit_norm * tr.unit_norm * (1 + kBoundSlack);
        if (!ok) {
            ++failures;
            if (first.empty()) first = label;
        }
    }
};

Outcome c5_stinespring() {
    TripleTally t;
    std::vector<BimoduleSpace> ts = cp_targets();
    for (Index k = 0; k < 50; ++k) {
        const BimoduleSpace& s = ts[static_cast<size_t>(k) % ts.size()];
        t.add(random_cp(derive_seed(5005, k), 4, 2, s), "random " + s.name());
    }
    t.add(gen_gelfand_pettis(standard_gp_spec()), "gelfand-pettis");
    KernelSpec spec = standard_kernel_spec(7, 2, 17);
    for (GammaVariant v : {GammaVariant::CGrid, GammaVariant::Dual, GammaVariant::L1}) {
        Rng rng(derive_seed(5006, to_string(v)));
        GammaOptions go;
        go.w_tilde = random_psd_with_norm(rng, 2, spec.w_norm());
        go.g = gaussian_matrix(rng, 2, 2);
        GammaInstance g = gen_gamma_example(spec, v, go);
        t.add(gamma_lift(g.phi, g.gamma, g.fiber), std::string("gamma ") + to_string(v));
    }
    Rng rng(5007);
    PsiInstance p = gen_psi_example(gaussian_matrix(rng, 2, 2));
    t.add(psi_lift(p.phi, p.psi, p.out, p.fiber), "psi");
    Outcome o{t.failures == 0, fmt("%lld CP forms (50 random, GP, 3 gamma variants, psi), %lld failures, worst "
                                   "factorization residual %.3g",
                                   static_cast<long long>(t.total), static_cast<long long>(t.failures), t.worst)};
    if (!t.first.empty()) o.detail += ", first: " + t.first;
    return o;
}

Outcome c6_uniqueness() {
    std::vector<BimoduleSpace> ts = cp_targets();
    Index failures = 0;
    double worst = 0.0;
    for (Index k = 0; k < 100; ++k) {
        const BimoduleSpace& s = ts[static_cast<size_t>(k) % ts.size()];
        CPForm f = random_cp(derive_seed(6006, k), 4, 2, s);
        std::vector<Index> perm(static_cast<size_t>(f.algebra()->dim * f.m()));
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(derive_seed(6007, k));
        std::shuffle(perm.begin(), perm.end(), rng);
        StinespringOptions o2;
        o2.quotient.permutation = perm;
        o2.quotient.rotation_seed = derive_seed(6008, k);
        UnitaryEquivalence u = unitary_equiv(build_stinespring(f), build_stinespring(f, o2), kResidualTol);
        worst = std::max({worst, u.uv_residual, u.intertwine_residual});
        if (!u.passed || u.uv_residual > kResidualTol || u.intertwine_residual > kResidualTol) ++failures;
    }
    return {failures == 0, fmt("100 permuted rebuilds, %lld failures, worst unitary-equivalence residual %.3g",
                               static_cast<long long>(failures), worst)};
}

Outcome c7_radon_nikodym() {
    const double gamma = 2.0;
    std::vector<BimoduleSpace> ts = cp_targets();
    Index failures = 0;
    double worst_norm = 0.0;
    for (Index k = 0; k < static_cast<Index>(ts.size()); ++k) {
        CPForm f = random_cp(derive_seed(7007, k), 4, 2, ts[static_cast<size_t>(k)]);
        for (double c : {0.25, 1.0, gamma}) {
            RNOperator rn = radon_nikodym(f.scaled(c), f, gamma);
            double err = std::abs(rn.norm_estimate - std::sqrt(c));
            worst_norm = std::max(worst_norm, err);
            if (!rn.passed || err > kRnNormTol) ++failures;
        }
    }
    Index pair_failures = 0;
    double worst_res = 0.0;
    for (Index k = 0; k < 50; ++k) {
        Rng rng(derive_seed(7008, k));
        const BimoduleSpace& s = ts[static_cast<size_t>(k) % ts.size()];
        DominatedPair p = compressed_pair(rng, algebra_for_dim(4), 2, NormSpec::euclidean(2), s, 1.0 + 0.05 * k);
        RNOperator rn = radon_nikodym(p.psi, p.phi, p.gamma);
        worst_res = std::max({worst_res, rn.tv_residual, rn.factorization_residual, rn.intertwine_residual});
        if (!rn.passed || rn.tv_residual > kResidualTol || rn.factorization_residual > kResidualTol ||
            rn.norm_estimate > std::sqrt(p.gamma) * (1 + kBoundSlack))
            ++pair_failures;
    }
    return {failures == 0 && pair_failures == 0,
            fmt("scaled pairs c in {0.25, 1, %.0f} on %zu forms: %lld failures, worst |norm - sqrt c| %.3g; 50 "
                "compressed pairs: %lld failures, worst residual %.3g",
                gamma, ts.size(), static_cast<long long>(failures), worst_norm, static_cast<long long>(pair_failures),
                worst_res)};
}

Outcome c8_series() {
    Index failures = 0, runs = 0;
    for (Index terms : {1, 10, 50})
        for (Index rep = 0; rep < 10; ++rep) {
            Rng rng(derive_seed(8008, terms * 100 + rep));
            std::vector<SesquiForm> fs;
            std::vector<CPForm> cps;
            std::vector<CVec> xs, xts, as, ats, vs, vts;
            BimoduleSpace t = rep % 2 ? BimoduleSpace::c_grid(3) : BimoduleSpace::l1_trace(2);
            for (Index n = 0; n < terms; ++n) {
                fs.push_back(random_positive(rng, algebra_for_dim(4), t));
                xs.push_back(gaussian_vector(rng, 4));
                xts.push_back(gaussian_vector(rng, 4));
                cps.push_back(random_cp(rng, algebra_for_dim(4), 2, NormSpec::euclidean(2), t));
                as.push_back(gaussian_vector(rng, 4));
                ats.push_back(gaussian_vector(rng, 4));
                vs.push_back(gaussian_vector(rng, 2));
                vts.push_back(gaussian_vector(rng, 2));
            }
            runs += 2;
            if (!verify_series_cs(fs, xs, xts).passed) ++failures;
            if (!verify_series_cp_cs(cps, as, ats, vs, vts).passed) ++failures;
        }
    return {failures == 0, fmt("series N in {1, 10, 50}, %lld runs (forms and CP), %lld violations",
                               static_cast<long long>(runs), static_cast<long long>(failures))};
}

Outcome c9_planted_null() {
    const Index d = 5;
    Index misses = 0, runs = 0;
    double worst = 0.0;
    for (Index k = 0; k <= d; ++k)
        for (Index s = 0; s < 100; ++s) {
            const BimoduleSpace t = s % 2 ? BimoduleSpace::l1_trace(2) : BimoduleSpace::c_grid(3);
            Rng rng(derive_seed(9009, k * 1000 + s));
            Rng replay = rng;
            // the generator draws the unitary first; its last k columns span the planted null space
            CMat u = haar_unitary(replay, d);
            NullSpace ns = null_space(planted_null_form(rng, d, k, t));
            ++runs;
            if (ns.basis.cols() != k) {
                ++misses;
                continue;
            }
            CMat planted = u.rightCols(k);
            double gap = (ns.basis * ns.basis.adjoint() - planted * planted.adjoint()).norm();
            worst = std::max(worst, gap);
            if (gap > kResidualTol) ++misses;
        }
    return {misses == 0, fmt("d = %lld, k = 0..%lld, %lld runs, %lld wrong dimensions or subspaces, worst projector "
                             "gap %.3g",
                             static_cast<long long>(d), static_cast<long long>(d), static_cast<long long>(runs),
                             static_cast<long long>(misses), worst)};
}

Outcome c10_determinism() {
    std::filesystem::path cfg_path = std::filesystem::path(OPMOD_DATA_DIR) / "suite_default.json";
    SuiteConfig cfg = config_from_json(read_json_file(cfg_path.string()), cfg_path.parent_path());
    SuiteReport a = run_suite(cfg, 1), b = run_suite(cfg, 8);
    std::string da = a.report.dump(2), db = b.report.dump(2);
    return {da == db && a.exit_code == b.exit_code,
            fmt("suite_default.json at parallelism 1 and 8: %s reports (%zu bytes), exit codes %d/%d",
                da == db ? "byte-identical" : "differing", da.size(), a.exit_code, b.exit_code)};
}

}  // namespace

int main() {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Cauchy-Schwarz suite", c1_cauchy_schwarz},
        {"falsification", c2_falsification},
        {"Kadison-Schwarz", c3_kadison_schwarz},
        {"GNS", c4_gns},
        {"Stinespring", c5_stinespring},
        {"uniqueness", c6_uniqueness},
        {"Radon-Nikodym", c7_radon_nikodym},
        {"series", c8_series},
        {"planted null", c9_planted_null},
        {"determinism", c10_determinism}};
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
