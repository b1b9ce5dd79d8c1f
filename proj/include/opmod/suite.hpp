#pragma once

#include "opmod/json_io.hpp"
#include "opmod/parallel.hpp"

#include <filesystem>
#include <variant>

namespace opmod {

// ---------------------------------------------------------------- positive linear maps on disk

inline json positive_map_to_json(const LinearPositiveMap& w) {
    return {{"type", "positive_map"}, {"algebra", algebra_to_json(w.algebra)}, {"target", space_to_json(w.target)},
            {"images", mat_to_json(w.images)}};
}

inline LinearPositiveMap positive_map_from_json(const json& j) {
    LinearPositiveMap w;
    w.algebra = algebra_from_json(j.at("algebra"));
    if (!w.algebra) throw FormatError("positive map needs an algebra");
    w.target = space_from_json(j.at("target"));
    w.images = mat_from_json(j.at("images"));
    if (w.images.rows() != w.target.flat_size() || w.images.cols() != w.algebra->dim)
        throw FormatError("positive map images have the wrong shape");
    return w;
}

/// omega(a) = K(a) for a random positive K: M_n -> Y over A = A0 = M_n.
inline LinearPositiveMap random_positive_map(Rng& rng, Index n, const BimoduleSpace& target, bool transpose_term = true) {
    LinearPositiveMap w;
    w.algebra = make_matrix_algebra(n, MatrixNorm::Operator);
    w.target = target;
    w.images = detail::random_kmat(target, n, rng, false, transpose_term);
    return w;
}

// ---------------------------------------------------------------- instances

using InstanceValue = std::variant<SesquiForm, CPForm, LiftInstance, LinearPositiveMap>;

inline json instance_to_json(const InstanceValue& v) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SesquiForm>) return form_to_json(x);
            else if constexpr (std::is_same_v<T, CPForm>) return cp_to_json(x);
            else if constexpr (std::is_same_v<T, LiftInstance>) return lift_to_json(x);
            else return positive_map_to_json(x);
        },
        v);
}

inline InstanceValue instance_from_json(const json& j) {
    if (!j.is_object() || !j.contains("type")) throw FormatError("instance needs a type");
    std::string t = j.at("type").get<std::string>();
    try {
        if (t == "sesqui_form") return form_from_json(j);
        if (t == "cp_form") return cp_from_json(j);
        if (t == "lift") return lift_from_json(j);
        if (t == "positive_map") return positive_map_from_json(j);
    } catch (const json::exception& e) {
        throw FormatError(std::string("instance of type ") + t + ": " + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("instance of type ") + t + ": " + e.what());
    }
    throw FormatError("unknown instance type '" + t + "'");
}

inline const std::vector<std::string>& generator_kinds() {
    static const std::vector<std::string> k{"kernel", "composed", "measure", "gp", "gamma", "psi", "random-cp",
                                            "random-positive", "positive-map", "perturbed", "trace-form"};
    return k;
}

/// Runs one generator; the result carries its meta block (kind, seed, spec digest).
inline json generate_instance(const std::string& kind, const json& spec, std::uint64_t seed) {
    json out;
    Rng rng(seed);
    json meta{{"generator", kind}, {"seed", seed}, {"spec_digest", digest(spec)}};
    if (kind == "kernel") {
        out = form_to_json(gen_kernel_form(kernel_spec_from_json(spec, seed)));
        meta["grid"] = spec.value("grid", Index{65});
    } else if (kind == "composed") {
        KernelSpec ks = kernel_spec_from_json(spec, seed);
        std::vector<double> f;
        if (spec.contains("f")) f = spec.at("f").get<std::vector<double>>();
        else {
            // random monotone map onto [0, ||W||]
            Index l = spec.value("samples", Index{33});
            RVec steps = uniform_vector(rng, l);
            double acc = 0.0, top = ks.w_norm();
            for (Index i = 0; i < l; ++i) acc += steps(i);
            double run = 0.0;
            for (Index i = 0; i < l; ++i) {
                run += steps(i);
                f.push_back(std::min(top, top * run / acc));
            }
        }
        out = form_to_json(gen_composed_form(ks, f));
    } else if (kind == "measure") {
        SesquiForm base = gen_kernel_form(kernel_spec_from_json(spec, seed));
        RVec mu = spec.contains("mu") ? rvec_from_json(spec.at("mu")) : uniform_vector(rng, base.target().flat_size());
        out = form_to_json(gen_measure_form(base, mu));
    } else if (kind == "gp") {
        out = cp_to_json(gen_gelfand_pettis(gp_spec_from_json(spec, seed)));
        meta["quadrature"] = "trapezoid";
        meta["grid"] = spec.value("grid", Index{65});
    } else if (kind == "gamma") {
        KernelSpec ks = kernel_spec_from_json(spec, seed);
        std::string v = spec.value("variant", "cgrid");
        GammaVariant gv = v == "cgrid" ? GammaVariant::CGrid
                          : v == "dual" ? GammaVariant::Dual
                          : v == "l1"   ? GammaVariant::L1
                                        : throw FormatError("gamma variant must be cgrid, dual or l1");
        GammaOptions go;
        Index nt = spec.value("n_tilde", ks.n());
        go.w_tilde = spec.contains("W_tilde") ? mat_from_json(spec.at("W_tilde")) : random_psd_with_norm(rng, nt, ks.w_norm());
        go.g = spec.contains("G") ? mat_from_json(spec.at("G")) : gaussian_matrix(rng, go.w_tilde.rows(), go.w_tilde.rows());
        out = lift_to_json(to_lift(gen_gamma_example(ks, gv, go)));
        meta["variant"] = v;
    } else if (kind == "psi") {
        CMat w = spec.contains("W") ? mat_from_json(spec.at("W")) : gaussian_matrix(rng, spec.value("n", Index{2}), spec.value("n", Index{2}));
        out = lift_to_json(to_lift(gen_psi_example(w)));
    } else if (kind == "random-cp" || kind == "random-positive") {
        BimoduleSpace target = spec.contains("target") ? space_from_json(spec.at("target")) : BimoduleSpace::l1_trace(2);
        Index d = spec.value("d", Index{4});
        AlgebraPtr alg = spec.contains("algebra") ? algebra_from_json(spec.at("algebra")) : algebra_for_dim(d);
        Index q = spec.value("q", Index{0});
        bool faithful = spec.value("faithful", false);
        if (kind == "random-cp") {
            Index m = spec.value("m", Index{2});
            NormSpec fiber = spec.contains("fiber") ? norm_from_json(spec.at("fiber")) : NormSpec::euclidean(m);
            out = cp_to_json(random_cp(rng, alg, m, fiber, target, RandomCpOptions{q, faithful, false}));
        } else {
            out = form_to_json(random_positive(rng, alg, target, RandomFormOptions{q, faithful, spec.value("transpose_term", false)}));
        }
    } else if (kind == "positive-map") {
        BimoduleSpace target = spec.contains("target") ? space_from_json(spec.at("target")) : BimoduleSpace::l1_trace(2);
        out = positive_map_to_json(random_positive_map(rng, spec.value("n", Index{2}), target));
    } else if (kind == "perturbed") {
        if (!spec.contains("base")) throw FormatError("perturbed generator needs a base spec");
        const json& b = spec.at("base");
        json base = generate_instance(b.value("kind", "random-positive"), b.value("spec", json::object()),
                                      b.value("seed", derive_seed(seed, "base")));
        double factor = spec.value("factor", 10.0);
        std::uint64_t ps = derive_seed(seed, "perturb");
        double margin = 0.0;
        if (base.at("type") == "cp_form") {
            out = cp_to_json(perturb_noncp(cp_from_json(base), factor, ps, &margin));
        } else if (base.at("type") == "sesqui_form") {
            PerturbedInstance p = perturb_noncp(form_from_json(base), factor, ps);
            margin = p.margin;
            out = form_to_json(p.form);
        } else {
            throw FormatError("perturbed base must be a form");
        }
        meta["factor"] = factor;
        meta["margin"] = margin;
    } else if (kind == "trace-form") {
        out = form_to_json(trace_form(spec.value("n", Index{2})));
    } else {
        throw FormatError("unknown generator kind '" + kind + "'");
    }
    out["meta"] = meta;
    return with_schema(out);
}

// ---------------------------------------------------------------- configuration

struct Tolerances {
    double cone_tol = 1e-10;
    /// Absent means the library default relative rank threshold.
    std::optional<double> rank_tol;
    double ineq_tol = 1e-9;
    double residual_tol = 1e-8;
};

struct InstanceEntry {
    std::string id;
    json source;
    InstanceValue value;
};

struct SuiteConfig {
    std::uint64_t seed = 1;
    Index trials = 200;
    Tolerances tol;
    Index parallelism = 0;
    std::vector<InstanceEntry> instances;
    json raw;
};

inline SuiteConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    require_schema(j);
    SuiteConfig c;
    c.raw = j;
    try {
        c.seed = j.value("seed", std::uint64_t{1});
        c.trials = j.value("trials", Index{200});
        c.parallelism = j.value("parallelism", Index{0});
        if (j.contains("tolerances")) {
            const json& t = j.at("tolerances");
            c.tol.cone_tol = t.value("cone_tol", c.tol.cone_tol);
            c.tol.ineq_tol = t.value("ineq_tol", c.tol.ineq_tol);
            c.tol.residual_tol = t.value("residual_tol", c.tol.residual_tol);
            if (t.contains("rank_tol")) c.tol.rank_tol = t.at("rank_tol").get<double>();
        }
        if (c.trials < 1) throw FormatError("trials must be positive");
        if (!(c.tol.cone_tol > 0 && c.tol.ineq_tol > 0 && c.tol.residual_tol > 0) || (c.tol.rank_tol && !(*c.tol.rank_tol > 0)))
            throw FormatError("tolerances must be positive");
        std::vector<std::string> seen;
        for (const json& e : j.value("instances", json::array())) {
            InstanceEntry ie;
            ie.id = e.at("id").get<std::string>();
            if (std::find(seen.begin(), seen.end(), ie.id) != seen.end()) throw FormatError("duplicate instance id " + ie.id);
            seen.push_back(ie.id);
            if (e.contains("file")) {
                std::filesystem::path p = e.at("file").get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                ie.source = read_json_file(p.string());
                require_schema(ie.source);
            } else if (e.contains("generate")) {
                const json& g = e.at("generate");
                ie.source = generate_instance(g.at("kind").get<std::string>(), g.value("spec", json::object()),
                                              g.value("seed", derive_seed(c.seed, ie.id)));
            } else if (e.contains("instance")) {
                ie.source = e.at("instance");
            } else {
                throw FormatError("instance " + ie.id + " needs file, generate or instance");
            }
            ie.value = instance_from_json(ie.source);
            c.instances.push_back(std::move(ie));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------- checks

enum class CheckVerdict { Pass, Fail, Skipped, Error };

inline const char* to_string(CheckVerdict v) {
    switch (v) {
        case CheckVerdict::Pass: return "pass";
        case CheckVerdict::Fail: return "fail";
        case CheckVerdict::Skipped: return "skipped";
        case CheckVerdict::Error: return "error";
    }
    return "?";
}

struct CheckRecord {
    std::string instance;
    std::string check;
    std::string claim;
    CheckVerdict verdict = CheckVerdict::Pass;
    std::optional<double> worst_margin;
    json detail = json::object();
    std::optional<json> witness;
    std::string reason;
};

inline json to_json(const CheckRecord& r) {
    json j{{"id", r.instance + "/" + r.check}, {"instance", r.instance}, {"check", r.check}, {"claim", r.claim},
           {"verdict", to_string(r.verdict)}, {"detail", r.detail}};
    j["worst_margin"] = r.worst_margin ? json(*r.worst_margin) : json(nullptr);
    if (!r.reason.empty()) j["reason"] = r.reason;
    if (r.witness) j["witness"] = *r.witness;
    return j;
}

struct SuiteReport {
    json report;
    std::vector<CheckRecord> records;
    int exit_code = 0;

    json witnesses() const {
        json w = json::array();
        for (const auto& r : records)
            if (r.verdict == CheckVerdict::Fail)
                w.push_back({{"id", r.instance + "/" + r.check}, {"claim", r.claim}, {"witness", r.witness ? *r.witness : json(nullptr)},
                             {"detail", r.detail}});
        return w;
    }
};

namespace detail {

struct Ctx {
    const SuiteConfig* cfg;
    const InstanceEntry* inst;
    std::uint64_t seed;
};

inline double rank_tol(const Ctx& c) { return c.cfg->tol.rank_tol ? *c.cfg->tol.rank_tol : -1.0; }

inline PositivityOptions positivity_options(const Ctx& c) {
    PositivityOptions po;
    po.trials = c.cfg->trials;
    po.tol = c.cfg->tol.cone_tol;
    po.seed = c.seed;
    return po;
}

inline CsOptions cs_options(const Ctx& c) {
    CsOptions co;
    co.trials = c.cfg->trials;
    co.tol = c.cfg->tol.ineq_tol;
    co.seed = c.seed;
    co.cone_tol = c.cfg->tol.cone_tol;
    return co;
}

inline StinespringOptions stinespring_options(const Ctx& c) {
    StinespringOptions so;
    so.rank_tol = rank_tol(c);
    so.tol = c.cfg->tol.residual_tol;
    so.bound_tol = c.cfg->tol.ineq_tol;
    so.seed = c.seed;
    so.check_cp = false;
    so.v_samples = 4096;
    return so;
}

inline const QuasiAlgebra* algebra_of(const InstanceValue& v) {
    if (auto f = std::get_if<SesquiForm>(&v)) return f->algebra().get();
    if (auto f = std::get_if<CPForm>(&v)) return f->algebra().get();
    if (auto l = std::get_if<LiftInstance>(&v)) return l->phi.algebra().get();
    if (auto w = std::get_if<LinearPositiveMap>(&v)) return w->algebra.get();
    return nullptr;
}

inline void fill_positivity(CheckRecord& r, const PositivityReport& pr) {
    r.detail = to_json(pr);
    r.worst_margin = -pr.min_value;
    if (!pr.ok()) {
        r.verdict = CheckVerdict::Fail;
        r.witness = json{{"x", pr.witness ? vec_to_json(*pr.witness) : json(nullptr)},
                         {"probe", pr.witness_probe ? vec_to_json(*pr.witness_probe) : json(nullptr)}};
    }
}

inline void fill_inequality(CheckRecord& r, const InequalityReport& ir) {
    r.detail = to_json(ir);
    if (!std::isinf(ir.worst_margin)) r.worst_margin = ir.worst_margin;
    if (!ir.passed) {
        r.verdict = CheckVerdict::Fail;
        if (ir.witness) r.witness = r.detail.at("witness");
    }
}

using CheckFn = std::function<void(const Ctx&, CheckRecord&)>;

struct CheckDef {
    std::string name;
    std::string claim;
    /// Instances whose positivity failed skip this check.
    bool needs_positive = true;
    std::function<bool(const InstanceValue&)> applies;
    CheckFn run;
};

template <class T>
bool is(const InstanceValue& v) { return std::holds_alternative<T>(v); }

inline std::vector<std::vector<CheckDef>> suite_phases() {
    std::vector<std::vector<CheckDef>> phases;
    // axioms
    phases.push_back({{"axioms", "quasi-algebra axioms", false,
                       [](const InstanceValue& v) { return algebra_of(v) != nullptr; },
                       [](const Ctx& c, CheckRecord& r) {
                           AxiomReport a = check_axioms(*algebra_of(c.inst->value), c.cfg->trials, c.cfg->tol.residual_tol, c.seed);
                           r.detail = to_json(a);
                           r.worst_margin = a.worst_residual;
                           if (!a.passed) r.verdict = CheckVerdict::Fail;
                       }}});
    // positivity and complete positivity
    phases.push_back({
        {"positivity", "positivity", false, is<SesquiForm>,
         [](const Ctx& c, CheckRecord& r) { fill_positivity(r, check_positive(std::get<SesquiForm>(c.inst->value), positivity_options(c))); }},
        {"complete-positivity", "complete positivity via the tensor extension", false, is<CPForm>,
         [](const Ctx& c, CheckRecord& r) { fill_positivity(r, check_cp(std::get<CPForm>(c.inst->value), positivity_options(c))); }},
        {"map-positivity", "positivity of the induced form of a positive map", false, is<LinearPositiveMap>,
         [](const Ctx& c, CheckRecord& r) {
             fill_positivity(r, check_positive(std::get<LinearPositiveMap>(c.inst->value).induced_form(), positivity_options(c)));
         }},
        {"relative-positivity", "complete positivity of the lifted table", false, is<LiftInstance>,
         [](const Ctx& c, CheckRecord& r) { fill_positivity(r, check_cp(lifted_form(std::get<LiftInstance>(c.inst->value)), positivity_options(c))); }},
    });
    // inequalities
    phases.push_back({
        {"cauchy-schwarz", "Cauchy-Schwarz for positive forms", true, is<SesquiForm>,
         [](const Ctx& c, CheckRecord& r) { fill_inequality(r, verify_cs(std::get<SesquiForm>(c.inst->value), cs_options(c))); }},
        {"cauchy-schwarz-tensor", "Cauchy-Schwarz for the tensor extension", true, is<CPForm>,
         [](const Ctx& c, CheckRecord& r) { fill_inequality(r, verify_cs(std::get<CPForm>(c.inst->value).tensor_form(), cs_options(c))); }},
        {"kadison-schwarz", "Kadison-Schwarz for positive linear maps", true, is<LinearPositiveMap>,
         [](const Ctx& c, CheckRecord& r) { fill_inequality(r, verify_ks(std::get<LinearPositiveMap>(c.inst->value), cs_options(c))); }},
        {"series", "Cauchy-Schwarz for truncated series", true,
         [](const InstanceValue& v) {
             if (auto f = std::get_if<SesquiForm>(&v)) return f->target().order_preserving();
             if (auto f = std::get_if<CPForm>(&v)) return f->target().order_preserving();
             return false;
         },
         [](const Ctx& c, CheckRecord& r) {
             Rng rng(c.seed);
             const Index terms = 10;
             SeriesReport sr;
             if (auto f = std::get_if<SesquiForm>(&c.inst->value)) {
                 std::vector<SesquiForm> fs;
                 std::vector<CVec> xs, xts;
                 for (Index n = 0; n < terms; ++n) {
                     fs.push_back(f->scaled(uniform01(rng) + 0.1));
                     xs.push_back(gaussian_vector(rng, f->dim()));
                     xts.push_back(gaussian_vector(rng, f->dim()));
                 }
                 sr = verify_series_cs(fs, xs, xts, c.cfg->tol.ineq_tol);
             } else {
                 const CPForm& g = std::get<CPForm>(c.inst->value);
                 std::vector<CPForm> fs;
                 std::vector<CVec> as, ats, xs, xts;
                 for (Index n = 0; n < terms; ++n) {
                     fs.push_back(g.scaled(uniform01(rng) + 0.1));
                     as.push_back(gaussian_vector(rng, g.d()));
                     ats.push_back(gaussian_vector(rng, g.d()));
                     xs.push_back(gaussian_vector(rng, g.m()));
                     xts.push_back(gaussian_vector(rng, g.m()));
                 }
                 sr = verify_series_cp_cs(fs, as, ats, xs, xts, c.cfg->tol.ineq_tol);
             }
             r.detail = to_json(sr);
             r.worst_margin = sr.margin;
             if (!sr.passed) r.verdict = CheckVerdict::Fail;
         }},
    });
    // GNS
    phases.push_back({
        {"gns", "GNS factorization through a cyclic representation", true,
         [](const InstanceValue& v) { auto f = std::get_if<SesquiForm>(&v); return f && f->algebra(); },
         [](const Ctx& c, CheckRecord& r) {
             const SesquiForm& f = std::get<SesquiForm>(c.inst->value);
             GnsOptions go;
             go.rank_tol = rank_tol(c);
             go.invariance_tol = c.cfg->tol.residual_tol;
             GnsRep g = build_gns(f, go);
             GnsReport gr = verify_gns(g, f, c.cfg->trials, c.cfg->tol.residual_tol, c.seed);
             r.detail = to_json(gr);
             r.worst_margin = std::max({gr.adjoint_residual, gr.homomorphism_residual, gr.factorization_residual});
             if (!gr.passed) r.verdict = CheckVerdict::Fail;
         }},
        {"state-gns", "GNS for positive linear maps", true, is<LinearPositiveMap>,
         [](const Ctx& c, CheckRecord& r) {
             GnsOptions go;
             go.rank_tol = rank_tol(c);
             StateGns s = gns_from_state(std::get<LinearPositiveMap>(c.inst->value), go);
             r.detail = {{"rank", s.gns.rank()}, {"triple_residual", s.triple_residual}, {"state_residual", s.state_residual}};
             r.worst_margin = std::max(s.triple_residual, s.state_residual);
             if (*r.worst_margin > c.cfg->tol.residual_tol) r.verdict = CheckVerdict::Fail;
         }},
    });
    // Stinespring
    phases.push_back({{"stinespring", "Stinespring factorization and the bound on V", true, is<CPForm>,
                       [](const Ctx& c, CheckRecord& r) {
                           StinespringTriple t = build_stinespring(std::get<CPForm>(c.inst->value), stinespring_options(c));
                           TripleReport tr = verify_stinespring(t, c.cfg->tol.residual_tol);
                           r.detail = {{"rank", tr.rank}, {"span_rank", tr.span_rank},
                                       {"factorization_residual", tr.factorization_residual},
                                       {"well_definedness_residual", tr.well_definedness_residual}, {"V_norm_sq", t.v_norm_sq},
                                       {"V_method", t.v_method}, {"bound_M", t.bound_m}, {"bound_method", t.bound_method},
                                       {"unit_norm", t.unit_norm}, {"bound_ok", tr.bound_ok}};
                           r.worst_margin = t.bound_m > 0 ? t.v_norm_sq / (t.bound_m * t.unit_norm * t.unit_norm) - 1.0 : 0.0;
                           if (!tr.passed) r.verdict = CheckVerdict::Fail;
                       }}});
    // uniqueness
    phases.push_back({{"uniqueness", "uniqueness up to unitary equivalence", true, is<CPForm>,
                       [](const Ctx& c, CheckRecord& r) {
                           const CPForm& f = std::get<CPForm>(c.inst->value);
                           StinespringOptions s1 = stinespring_options(c);
                           StinespringOptions s2 = s1;
                           Rng rng(c.seed);
                           std::vector<Index> perm(static_cast<size_t>(f.tensor_dim()));
                           std::iota(perm.begin(), perm.end(), Index{0});
                           std::shuffle(perm.begin(), perm.end(), rng);
                           s2.quotient.permutation = perm;
                           s2.quotient.rotation_seed = rng() | 1u;
                           s1.v_samples = s2.v_samples = 64;
                           StinespringTriple t1 = build_stinespring(f, s1), t2 = build_stinespring(f, s2);
                           UnitaryEquivalence u = unitary_equiv(t1, t2, c.cfg->tol.residual_tol, c.cfg->trials, c.seed);
                           r.detail = {{"uv_residual", u.uv_residual}, {"intertwine_residual", u.intertwine_residual},
                                       {"gram_preservation", u.gram_preservation}, {"gram_mismatch", u.gram_mismatch}};
                           r.worst_margin = std::max({u.uv_residual, u.intertwine_residual, u.gram_preservation});
                           if (!u.passed) r.verdict = CheckVerdict::Fail;
                       }}});
    // Radon-Nikodym
    auto rn_fill = [](CheckRecord& r, const RNOperator& rn, double c_scale, double tol) {
        r.detail = to_json(rn);
        r.detail.erase("T");
        double expect = std::sqrt(c_scale);
        r.detail["expected_norm"] = expect;
        r.worst_margin = std::max({rn.tv_residual, rn.intertwine_residual, rn.factorization_residual,
                                   std::abs(rn.norm_estimate - expect)});
        if (!rn.passed || std::abs(rn.norm_estimate - expect) > tol) r.verdict = CheckVerdict::Fail;
    };
    phases.push_back({
        {"radon-nikodym-positive", "Radon-Nikodym intertwiner for positive forms", true,
         [](const InstanceValue& v) { auto f = std::get_if<SesquiForm>(&v); return f && f->algebra() && f->target().order_preserving(); },
         [rn_fill](const Ctx& c, CheckRecord& r) {
             const SesquiForm& f = std::get<SesquiForm>(c.inst->value);
             RnOptions ro;
             ro.tol = c.cfg->tol.residual_tol;
             ro.cone_tol = c.cfg->tol.cone_tol;
             ro.seed = c.seed;
             ro.domination_trials = std::min<Index>(c.cfg->trials, 50);
             rn_fill(r, radon_nikodym_positive(f.scaled(0.5), f, 2.0, ro), 0.5, c.cfg->tol.residual_tol);
         }},
        {"radon-nikodym", "Radon-Nikodym intertwiner for completely positive forms", true, is<CPForm>,
         [rn_fill](const Ctx& c, CheckRecord& r) {
             const CPForm& f = std::get<CPForm>(c.inst->value);
             RnOptions ro;
             ro.tol = c.cfg->tol.residual_tol;
             ro.cone_tol = c.cfg->tol.cone_tol;
             ro.seed = c.seed;
             ro.domination_trials = std::min<Index>(c.cfg->trials, 50);
             ro.build = stinespring_options(c);
             ro.build.v_samples = 64;
             ro.norm_samples = 4096;
             RNOperator rn = radon_nikodym(f.scaled(0.5), f, 2.0, ro);
             rn_fill(r, rn, 0.5, c.cfg->tol.residual_tol);
             if (rn.norm_checked) r.detail["scaling_residual"] = rn_scaling_residual(f, 0.5, rn, ro.build);
         }},
    });
    // relative complete positivity lifts
    phases.push_back({{"lift", "Stinespring for maps completely positive relative to Gamma or Psi", true, is<LiftInstance>,
                       [](const Ctx& c, CheckRecord& r) {
                           LiftOptions lo;
                           lo.trials = c.cfg->trials;
                           lo.tol = c.cfg->tol.ineq_tol;
                           lo.seed = c.seed;
                           lo.build = stinespring_options(c);
                           lo.build.cp = positivity_options(c);
                           LiftReport lr = verify_lift(std::get<LiftInstance>(c.inst->value), lo);
                           r.detail = to_json(lr);
                           r.worst_margin = std::isinf(lr.display_worst_margin) ? 0.0 : lr.display_worst_margin;
                           if (!lr.passed) r.verdict = CheckVerdict::Fail;
                       }}});
    return phases;
}

}  // namespace detail

/// Executes every applicable check, phase by phase. Records come out in (phase, check,
/// instance) order whatever the worker count, and carry no timings.
inline SuiteReport run_suite(const SuiteConfig& cfg, Index parallelism = 0) {
    Index threads = parallelism > 0 ? parallelism : resolve_threads(cfg.parallelism);
    SuiteReport out;
    std::vector<bool> positive(cfg.instances.size(), true);
    bool any_error = false;
    for (const auto& phase : detail::suite_phases()) {
        struct Task { const detail::CheckDef* def; size_t inst; };
        std::vector<Task> tasks;
        for (const auto& def : phase)
            for (size_t i = 0; i < cfg.instances.size(); ++i)
                if (def.applies(cfg.instances[i].value)) tasks.push_back({&def, i});
        std::vector<CheckRecord> recs(tasks.size());
        parallel_for(static_cast<Index>(tasks.size()), threads, [&](Index k) {
            const Task& t = tasks[static_cast<size_t>(k)];
            const InstanceEntry& inst = cfg.instances[t.inst];
            CheckRecord& r = recs[static_cast<size_t>(k)];
            r.instance = inst.id;
            r.check = t.def->name;
            r.claim = t.def->claim;
            if (t.def->needs_positive && !positive[t.inst]) {
                r.verdict = CheckVerdict::Skipped;
                r.reason = "instance failed its positivity check";
                return;
            }
            detail::Ctx ctx{&cfg, &inst, derive_seed(cfg.seed, inst.id + "/" + t.def->name)};
            try {
                t.def->run(ctx, r);
            } catch (const PreconditionError& e) {
                r.verdict = CheckVerdict::Skipped;
                r.reason = e.what();
            } catch (const std::exception& e) {
                r.verdict = CheckVerdict::Error;
                r.reason = e.what();
            }
        });
        for (size_t k = 0; k < tasks.size(); ++k) {
            const CheckRecord& r = recs[k];
            if (r.verdict == CheckVerdict::Error) any_error = true;
            if ((r.check == "positivity" || r.check == "complete-positivity" || r.check == "map-positivity" ||
                 r.check == "relative-positivity") && r.verdict == CheckVerdict::Fail)
                positive[tasks[k].inst] = false;
            out.records.push_back(r);
        }
    }
    json records = json::array();
    Index passed = 0, failed = 0, skipped = 0, errors = 0;
    for (const auto& r : out.records) {
        records.push_back(to_json(r));
        switch (r.verdict) {
            case CheckVerdict::Pass: ++passed; break;
            case CheckVerdict::Fail: ++failed; break;
            case CheckVerdict::Skipped: ++skipped; break;
            case CheckVerdict::Error: ++errors; break;
        }
    }
    json inputs = json::object();
    for (const auto& i : cfg.instances) inputs[i.id] = digest(i.source);
    out.report = with_schema({{"type", "suite_report"}, {"seed", cfg.seed}, {"config_digest", digest(cfg.raw)},
                              {"input_digests", inputs}, {"records", records},
                              {"summary", {{"total", out.records.size()}, {"passed", passed}, {"failed", failed},
                                           {"skipped", skipped}, {"errors", errors}}}});
    out.report["suite_digest"] = digest(records);
    out.exit_code = failed > 0 ? 1 : (any_error ? 2 : 0);
    return out;
}

}  // namespace opmod
