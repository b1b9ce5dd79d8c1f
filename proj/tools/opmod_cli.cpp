#include "opmod/opmod.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace opmod;

namespace {

struct Common {
    std::string in;
    std::string out;
    std::string witness;
    std::uint64_t seed = 1;
    Index trials = 1000;
    double tol = -1.0;
    std::string format = "json";
    bool seed_given = false;
};

void add_common(CLI::App* c, Common& o, bool with_in = true) {
    if (with_in) c->add_option("--in", o.in, "input instance (JSON)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o.out, "output file; stdout when omitted");
    c->add_option("--witness", o.witness, "where to write a violation witness");
    c->add_option("--seed", o.seed, "master seed");
    c->add_option("--trials", o.trials, "sampled trials")->check(CLI::PositiveNumber);
    c->add_option("--tol", o.tol, "tolerance (positive)")->check(CLI::PositiveNumber);
    c->add_option("--format", o.format, "output format")->check(CLI::IsMember({"json"}));
}

void emit(const Common& o, const json& j) {
    if (o.out.empty()) std::cout << j.dump(2) << "\n";
    else write_json_file(o.out, j);
}

void emit_witness(const Common& o, const json& w) {
    std::string path = !o.witness.empty() ? o.witness : !o.out.empty() ? o.out + ".witness.json" : std::string();
    json j = with_schema({{"type", "witness"}, {"witnesses", w}});
    if (path.empty()) std::cerr << j.dump(2) << "\n";
    else write_json_file(path, j);
}

json load(const std::string& path) {
    json j = read_json_file(path);
    require_schema(j);
    return j;
}

int cmd_verify_cs(const Common& o) {
    json src = load(o.in);
    InstanceValue v = instance_from_json(src);
    CsOptions co;
    co.trials = o.trials;
    co.seed = o.seed;
    if (o.tol > 0) co.tol = o.tol;
    InequalityReport r;
    std::string op;
    if (auto f = std::get_if<SesquiForm>(&v)) {
        r = verify_cs(*f, co);
        op = "cauchy-schwarz";
    } else if (auto g = std::get_if<CPForm>(&v)) {
        r = verify_cs(g->tensor_form(), co);
        op = "cauchy-schwarz-tensor";
    } else if (auto w = std::get_if<LinearPositiveMap>(&v)) {
        r = verify_ks(*w, co);
        op = "kadison-schwarz";
    } else {
        r = verify_cs(lifted_form(std::get<LiftInstance>(v)).tensor_form(), co);
        op = "cauchy-schwarz-lifted";
    }
    json out = with_schema({{"type", "inequality_report"}, {"check", op}, {"input_digest", digest(src)}, {"seed", o.seed},
                            {"report", to_json(r)}});
    emit(o, out);
    if (!r.passed) {
        emit_witness(o, json::array({out.at("report").value("witness", json(nullptr))}));
        return 1;
    }
    return 0;
}

int cmd_build_gns(const Common& o) {
    json src = load(o.in);
    SesquiForm f = form_from_json(src);
    GnsOptions go;
    GnsRep g = build_gns(f, go);
    GnsReport r = verify_gns(g, f, o.trials, o.tol > 0 ? o.tol : 1e-8, o.seed);
    emit(o, with_schema({{"type", "gns"}, {"input_digest", digest(src)}, {"seed", o.seed}, {"rep", to_json(g)},
                         {"report", to_json(r)}}));
    if (!r.passed) {
        emit_witness(o, json::array({to_json(r)}));
        return 1;
    }
    return 0;
}

int cmd_build_stinespring(const Common& o) {
    json src = load(o.in);
    InstanceValue v = instance_from_json(src);
    CPForm f = std::holds_alternative<LiftInstance>(v) ? lifted_form(std::get<LiftInstance>(v))
               : std::holds_alternative<CPForm>(v)     ? std::get<CPForm>(v)
                                                       : throw FormatError("build-stinespring needs a cp_form or lift");
    StinespringOptions so;
    so.seed = o.seed;
    so.cp.trials = o.trials;
    so.cp.seed = o.seed;
    if (o.tol > 0) so.tol = o.tol;
    StinespringTriple t = build_stinespring(f, so);
    TripleReport r = verify_stinespring(t, so.tol);
    emit(o, with_schema({{"type", "stinespring"}, {"input_digest", digest(src)}, {"seed", o.seed}, {"triple", to_json(t)},
                         {"passed", r.passed}}));
    if (!r.passed) {
        emit_witness(o, json::array({{{"factorization_residual", r.factorization_residual},
                                      {"well_definedness_residual", r.well_definedness_residual},
                                      {"bound_ok", r.bound_ok}}}));
        return 1;
    }
    return 0;
}

int cmd_radon_nikodym(const Common& o, const std::string& psi_path, const std::string& phi_path, double gamma) {
    json psi_src = load(psi_path), phi_src = load(phi_path);
    InstanceValue psi = instance_from_json(psi_src), phi = instance_from_json(phi_src);
    RnOptions ro;
    ro.seed = o.seed;
    ro.build.seed = o.seed;
    ro.domination_trials = std::min<Index>(o.trials, 200);
    if (o.tol > 0) ro.tol = o.tol;
    RNOperator rn;
    if (std::holds_alternative<CPForm>(psi) && std::holds_alternative<CPForm>(phi))
        rn = radon_nikodym(std::get<CPForm>(psi), std::get<CPForm>(phi), gamma, ro);
    else if (std::holds_alternative<SesquiForm>(psi) && std::holds_alternative<SesquiForm>(phi))
        rn = radon_nikodym_positive(std::get<SesquiForm>(psi), std::get<SesquiForm>(phi), gamma, ro);
    else
        throw FormatError("psi and phi must both be cp_form or both sesqui_form");
    emit(o, with_schema({{"type", "radon_nikodym"}, {"input_digests", {{"psi", digest(psi_src)}, {"phi", digest(phi_src)}}},
                         {"seed", o.seed}, {"operator", to_json(rn)}}));
    if (!rn.passed) {
        json r = to_json(rn);
        r.erase("T");
        emit_witness(o, json::array({r}));
        return 1;
    }
    return 0;
}

int cmd_gen_instance(const Common& o, const std::string& kind, const std::string& spec_path) {
    json spec = json::object();
    if (!spec_path.empty()) spec = read_json_file(spec_path);
    emit(o, generate_instance(kind, spec, o.seed));
    return 0;
}

int cmd_run_suite(const Common& o, const std::string& config, Index threads) {
    json j = read_json_file(config);
    SuiteConfig cfg = config_from_json(j, std::filesystem::path(config).parent_path());
    if (o.seed_given) cfg.seed = o.seed;
    SuiteReport r = run_suite(cfg, threads);
    emit(o, r.report);
    if (r.exit_code == 1) emit_witness(o, r.witnesses());
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"operator-valued form toolkit"};
    app.require_subcommand(1);
    Common o;

    auto* suite = app.add_subcommand("run-suite", "run a suite configuration");
    std::string config;
    Index threads = 0;
    suite->add_option("--config,--in", config, "suite configuration")->required()->check(CLI::ExistingFile);
    suite->add_option("--threads,--parallelism", threads, "worker threads (0: config or hardware)");
    add_common(suite, o, false);

    auto* cs = app.add_subcommand("verify-cs", "sampled Cauchy-Schwarz or Kadison-Schwarz check");
    add_common(cs, o);
    auto* gns = app.add_subcommand("build-gns", "GNS representation of a form");
    add_common(gns, o);
    auto* st = app.add_subcommand("build-stinespring", "Stinespring triple of a completely positive form");
    add_common(st, o);

    auto* rn = app.add_subcommand("radon-nikodym", "intertwiner for a dominated pair");
    std::string psi_path, phi_path;
    double gamma = 1.0;
    rn->add_option("--psi", psi_path, "dominated form")->required()->check(CLI::ExistingFile);
    rn->add_option("--phi", phi_path, "dominating form")->required()->check(CLI::ExistingFile);
    rn->add_option("--gamma", gamma, "domination constant")->required()->check(CLI::PositiveNumber);
    add_common(rn, o, false);

    auto* gen = app.add_subcommand("gen-instance", "write a generated instance");
    std::string kind, spec_path;
    gen->add_option("--kind", kind, "generator")->required()->check(CLI::IsMember(generator_kinds()));
    gen->add_option("--spec", spec_path, "generator spec (JSON)")->check(CLI::ExistingFile);
    add_common(gen, o, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    o.seed_given = suite->count("--seed") > 0;

    try {
        if (*suite) return cmd_run_suite(o, config, threads);
        if (*cs) return cmd_verify_cs(o);
        if (*gns) return cmd_build_gns(o);
        if (*st) return cmd_build_stinespring(o);
        if (*rn) return cmd_radon_nikodym(o, psi_path, phi_path, gamma);
        if (*gen) return cmd_gen_instance(o, kind, spec_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
