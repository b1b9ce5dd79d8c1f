#pragma once

#include "opmod/instances.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace opmod {

using json = nlohmann::json;

inline constexpr const char* kSchema = "opmod-v1";

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format: " + what) {}
};

// ---------------------------------------------------------------- numbers and arrays

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx complex_from_json(const json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw FormatError("complex number must be [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline json vec_to_json(const CVec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
    return a;
}

inline CVec vec_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("vector must be an array");
    CVec v(static_cast<Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = complex_from_json(j[i]);
    return v;
}

inline json rvec_to_json(const RVec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline RVec rvec_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("real vector must be an array");
    RVec v(static_cast<Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError("real vector entries must be numbers");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

/// {"rows", "cols", "data"} with row-major [re, im] entries.
inline json mat_to_json(const CMat& m) {
    json data = json::array();
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back(to_json(m(r, c)));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline CMat mat_from_json(const json& j) {
    if (j.is_array()) {
        // nested rows [[z, z], [z, z]]
        Index rows = static_cast<Index>(j.size());
        Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
        CMat m(rows, cols);
        for (Index r = 0; r < rows; ++r) {
            if (!j[r].is_array() || static_cast<Index>(j[r].size()) != cols) throw FormatError("ragged matrix rows");
            for (Index c = 0; c < cols; ++c) m(r, c) = complex_from_json(j[r][c]);
        }
        return m;
    }
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw FormatError("matrix must have rows, cols and data");
    Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Index>(data.size()) != rows * cols)
        throw FormatError("matrix data length does not match rows x cols");
    CMat m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = complex_from_json(data[r * cols + c]);
    return m;
}

// ---------------------------------------------------------------- descriptors

inline const char* to_string(SpaceKind k) {
    switch (k) {
        case SpaceKind::L2Finite: return "L2Finite";
        case SpaceKind::MeasuresFinite: return "MeasuresFinite";
        case SpaceKind::CGrid: return "CGrid";
        case SpaceKind::L1Trace: return "L1Trace";
        case SpaceKind::DualVN: return "DualVN";
        case SpaceKind::BCC: return "BCC";
        case SpaceKind::SeqC: return "SeqC";
        case SpaceKind::OpMap: return "OpMap";
    }
    return "?";
}

inline json space_to_json(const BimoduleSpace& s) {
    json j{{"kind", to_string(s.kind())}};
    switch (s.kind()) {
        case SpaceKind::BCC: j["m"] = s.size(); j["k"] = s.size2(); break;
        case SpaceKind::SeqC: j["N"] = s.size(); j["m"] = s.size2(); break;
        case SpaceKind::OpMap:
            j["domain"] = {{"kind", s.domain().kind == DomainKind::Matrix ? "matrix" : "diagonal"}, {"dim", s.domain().dim}};
            j["codomain"] = space_to_json(s.codomain());
            break;
        case SpaceKind::CGrid:
            j["n"] = s.size();
            if (!s.points().empty()) j["points"] = s.points();
            break;
        default: j["n"] = s.size();
    }
    return j;
}

inline Index get_size(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) throw FormatError(std::string("space needs integer '") + key + "'");
    return j.at(key).get<Index>();
}

inline BimoduleSpace space_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw FormatError("space descriptor needs a kind");
    std::string k = j.at("kind").get<std::string>();
    if (k == "L2Finite") return BimoduleSpace::l2_finite(get_size(j, "n"));
    if (k == "MeasuresFinite") return BimoduleSpace::measures_finite(get_size(j, "n"));
    if (k == "L1Trace") return BimoduleSpace::l1_trace(get_size(j, "n"));
    if (k == "DualVN") return BimoduleSpace::dual_vn(get_size(j, "n"));
    if (k == "BCC") return BimoduleSpace::bcc(get_size(j, "m"), get_size(j, "k"));
    if (k == "SeqC") return BimoduleSpace::seq_c(get_size(j, "N"), get_size(j, "m"));
    if (k == "CGrid") {
        std::vector<double> pts;
        if (j.contains("points")) pts = j.at("points").get<std::vector<double>>();
        return BimoduleSpace::c_grid(get_size(j, "n"), pts);
    }
    if (k == "OpMap") {
        if (!j.contains("domain") || !j.contains("codomain")) throw FormatError("OpMap needs domain and codomain");
        const json& d = j.at("domain");
        std::string dk = d.value("kind", "matrix");
        if (dk != "matrix" && dk != "diagonal") throw FormatError("OpMap domain kind must be matrix or diagonal");
        OpDomain dom{dk == "matrix" ? DomainKind::Matrix : DomainKind::Diagonal, get_size(d, "dim")};
        BimoduleSpace cod = space_from_json(j.at("codomain"));
        if (cod.kind() == SpaceKind::OpMap) throw FormatError("OpMap codomain cannot be an OpMap");
        return BimoduleSpace::op_map(dom, cod);
    }
    throw FormatError("unknown space kind '" + k + "'");
}

inline const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::Operator: return "operator";
        case NormKind::Frobenius: return "frobenius";
        case NormKind::Lp: return "lp";
        case NormKind::Sup: return "sup";
        case NormKind::Euclidean: return "euclidean";
    }
    return "?";
}

inline json norm_to_json(const NormSpec& n) {
    json j{{"kind", to_string(n.kind)}, {"n", n.n}};
    if (n.kind == NormKind::Lp) j["p"] = n.p;
    return j;
}

inline NormSpec norm_from_json(const json& j) {
    std::string k = j.at("kind").get<std::string>();
    Index n = get_size(j, "n");
    if (k == "operator") return NormSpec::operator_norm(n);
    if (k == "frobenius") return NormSpec::frobenius(n);
    if (k == "lp") return NormSpec::lp(n, j.at("p").get<double>());
    if (k == "sup") return NormSpec::sup(n);
    if (k == "euclidean") return NormSpec::euclidean(n);
    throw FormatError("unknown norm kind '" + k + "'");
}

inline json algebra_to_json(const AlgebraPtr& a) {
    if (!a) return nullptr;
    const AlgebraSpec& s = a->spec;
    switch (s.kind) {
        case AlgebraKind::Matrix:
            return {{"kind", "matrix"}, {"n", s.n}, {"norm", s.frobenius ? "frobenius" : "operator"},
                    {"a0", s.diagonal_a0 ? "diagonal" : "full"}};
        case AlgebraKind::Function: return {{"kind", "function"}, {"n", s.n}, {"p", s.p}};
        case AlgebraKind::Custom: break;
    }
    throw FormatError("custom algebras cannot be serialized");
}

inline AlgebraPtr algebra_from_json(const json& j) {
    if (j.is_null()) return nullptr;
    std::string k = j.at("kind").get<std::string>();
    AlgebraSpec s;
    s.n = get_size(j, "n");
    if (k == "matrix") {
        s.kind = AlgebraKind::Matrix;
        std::string nm = j.value("norm", "frobenius");
        if (nm != "frobenius" && nm != "operator") throw FormatError("matrix algebra norm must be frobenius or operator");
        s.frobenius = nm == "frobenius";
        std::string a0 = j.value("a0", "full");
        if (a0 != "full" && a0 != "diagonal") throw FormatError("A0 kind must be full or diagonal");
        s.diagonal_a0 = a0 == "diagonal";
    } else if (k == "function") {
        s.kind = AlgebraKind::Function;
        s.p = j.value("p", 2.0);
    } else {
        throw FormatError("unknown algebra kind '" + k + "'");
    }
    return make_algebra(s);
}

// ---------------------------------------------------------------- forms and instances

inline json form_to_json(const SesquiForm& f) {
    return {{"type", "sesqui_form"}, {"target", space_to_json(f.target())}, {"dim", f.dim()},
            {"algebra", algebra_to_json(f.algebra())}, {"coeffs", mat_to_json(f.coeffs())}};
}

inline SesquiForm form_from_json(const json& j) {
    return SesquiForm(space_from_json(j.at("target")), j.at("dim").get<Index>(), mat_from_json(j.at("coeffs")),
                      algebra_from_json(j.value("algebra", json(nullptr))));
}

inline json cp_to_json(const CPForm& f) {
    json j{{"type", "cp_form"}, {"algebra", algebra_to_json(f.algebra())}, {"m", f.m()},
           {"fiber", norm_to_json(f.fiber())}, {"target", space_to_json(f.target())},
           {"coeffs", mat_to_json(f.coeffs())}};
    if (f.declared_bound()) j["declared_bound"] = *f.declared_bound();
    return j;
}

inline CPForm cp_from_json(const json& j) {
    AlgebraPtr alg = algebra_from_json(j.at("algebra"));
    if (!alg) throw FormatError("completely positive form needs an algebra");
    std::optional<double> bound;
    if (j.contains("declared_bound")) bound = j.at("declared_bound").get<double>();
    return CPForm(alg, j.at("m").get<Index>(), norm_from_json(j.at("fiber")), space_from_json(j.at("target")),
                  mat_from_json(j.at("coeffs")), bound);
}

inline json sesqui_map_to_json(const SesquiMap& m) {
    json j{{"first_dim", m.first_dim}, {"second_dim", m.second_dim}, {"out_dim", m.out_dim},
           {"coeffs", mat_to_json(m.coeffs)}};
    if (m.declared_norm) j["declared_norm"] = *m.declared_norm;
    return j;
}

inline SesquiMap sesqui_map_from_json(const json& j) {
    SesquiMap m;
    m.first_dim = j.at("first_dim").get<Index>();
    m.second_dim = j.at("second_dim").get<Index>();
    m.out_dim = j.at("out_dim").get<Index>();
    m.coeffs = mat_from_json(j.at("coeffs"));
    if (m.coeffs.rows() != m.out_dim || m.coeffs.cols() != m.first_dim * m.second_dim)
        throw FormatError("sesquilinear map table has the wrong shape");
    if (j.contains("declared_norm")) m.declared_norm = j.at("declared_norm").get<double>();
    return m;
}

/// Operator-valued table with its Gamma (kind "gamma") or Psi (kind "psi").
struct LiftInstance {
    std::string kind = "gamma";
    SesquiForm phi;
    SesquiMap map;
    std::optional<BimoduleSpace> out;
    NormSpec fiber;
    bool unit_ball_property = true;
};

inline json lift_to_json(const LiftInstance& l) {
    json j{{"type", "lift"}, {"kind", l.kind}, {"phi", form_to_json(l.phi)}, {"map", sesqui_map_to_json(l.map)},
           {"fiber", norm_to_json(l.fiber)}, {"unit_ball_property", l.unit_ball_property}};
    if (l.out) j["out"] = space_to_json(*l.out);
    return j;
}

inline LiftInstance lift_from_json(const json& j) {
    LiftInstance l;
    l.kind = j.at("kind").get<std::string>();
    if (l.kind != "gamma" && l.kind != "psi") throw FormatError("lift kind must be gamma or psi");
    l.phi = form_from_json(j.at("phi"));
    l.map = sesqui_map_from_json(j.at("map"));
    l.fiber = norm_from_json(j.at("fiber"));
    l.unit_ball_property = j.value("unit_ball_property", true);
    if (j.contains("out")) l.out = space_from_json(j.at("out"));
    if (l.kind == "psi" && !l.out) throw FormatError("psi lift needs an output space");
    return l;
}

inline LiftInstance to_lift(const GammaInstance& g) { return {"gamma", g.phi, g.gamma, std::nullopt, g.fiber, true}; }
inline LiftInstance to_lift(const PsiInstance& p) { return {"psi", p.phi, p.psi, p.out, p.fiber, p.norming}; }

inline CPForm lifted_form(const LiftInstance& l) {
    return l.kind == "gamma" ? gamma_lift(l.phi, l.map, l.fiber) : psi_lift(l.phi, l.map, *l.out, l.fiber);
}

inline LiftReport verify_lift(const LiftInstance& l, const LiftOptions& opt) {
    LiftOptions o = opt;
    o.unit_ball_property = opt.unit_ball_property && l.unit_ball_property;
    return l.kind == "gamma" ? verify_gamma_lift(l.phi, l.map, l.fiber, o) : verify_psi_lift(l.phi, l.map, *l.out, l.fiber, o);
}

/// Adds the schema tag.
inline json with_schema(json j) {
    j["schema"] = kSchema;
    return j;
}

inline void require_schema(const json& j) {
    if (!j.is_object()) throw FormatError("top level must be an object");
    if (!j.contains("schema") || j.at("schema") != kSchema)
        throw FormatError(std::string("missing or unsupported schema (expected ") + kSchema + ")");
}

// ---------------------------------------------------------------- digests and files

/// Keys are sorted by the json object type, so dump() is canonical.
inline std::string canonical(const json& j) { return j.dump(); }

inline std::string digest(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical(j))));
    return buf;
}

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io: " + what) {}
};

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------- report serializers

inline json to_json(const PositivityReport& r) {
    json j{{"verdict", to_string(r.verdict)}, {"mode", r.mode}, {"trials", r.trials}, {"min_value", r.min_value}};
    if (r.witness) j["witness"] = vec_to_json(*r.witness);
    if (r.witness_probe) j["witness_probe"] = vec_to_json(*r.witness_probe);
    return j;
}

inline json margin_json(double m) {
    if (std::isinf(m)) return nullptr;
    return m;
}

inline json to_json(const InequalityReport& r) {
    json j{{"op", r.op}, {"seed", r.seed}, {"trials", r.trials}, {"passed", r.passed},
           {"worst_margin", margin_json(r.worst_margin)}, {"lhs_method", r.lhs_method},
           {"intermediate_checked", r.intermediate_checked}};
    if (r.intermediate_checked) j["intermediate_worst_margin"] = margin_json(r.intermediate_worst_margin);
    if (r.witness)
        j["witness"] = {{"x1", vec_to_json(r.witness->x1)}, {"x2", vec_to_json(r.witness->x2)},
                        {"lhs", r.witness->lhs}, {"rhs", r.witness->rhs}, {"clause", r.witness->clause}};
    return j;
}

inline json to_json(const SeriesReport& r) {
    return {{"op", r.op}, {"passed", r.passed}, {"terms", r.terms}, {"lhs", r.lhs}, {"rhs", r.rhs},
            {"worst_margin", r.margin}, {"monotone", r.monotone}};
}

inline json to_json(const GnsReport& r) {
    return {{"passed", r.passed}, {"rank", r.rank}, {"cyclic_rank", r.cyclic_rank},
            {"adjoint_residual", r.adjoint_residual}, {"homomorphism_residual", r.homomorphism_residual},
            {"factorization_residual", r.factorization_residual}, {"unit_residual", r.unit_residual},
            {"well_definedness_residual", r.well_definedness_residual}, {"note", r.note}};
}

inline json to_json(const GnsRep& g) {
    json reps = json::array();
    for (const CMat& m : g.rep) reps.push_back(mat_to_json(m));
    return {{"rank", g.rank()}, {"lambda", mat_to_json(g.quotient.lambda)}, {"gram", form_to_json(g.quotient.gram)},
            {"pi", reps}, {"cyclic", vec_to_json(g.cyclic)}, {"invariance_residual", g.invariance_residual},
            {"well_definedness_residual", g.well_definedness_residual}};
}

inline json to_json(const StinespringTriple& t) {
    json reps = json::array();
    for (const CMat& m : t.rep) reps.push_back(mat_to_json(m));
    return {{"rank", t.rank()}, {"m", t.m}, {"lambda", mat_to_json(t.quotient.lambda)},
            {"gram", form_to_json(t.quotient.gram)}, {"pi", reps}, {"V", mat_to_json(t.v)},
            {"bound_M", t.bound_m}, {"bound_method", t.bound_method}, {"unit_norm", t.unit_norm},
            {"V_norm_sq", t.v_norm_sq}, {"V_method", t.v_method}, {"bound_ok", t.bound_ok},
            {"factorization_residual", t.factorization_residual},
            {"well_definedness_residual", t.well_definedness_residual}, {"span_rank", t.span_rank},
            {"invariance_residual", t.invariance_residual}};
}

inline json to_json(const UnitaryEquivalence& u) {
    return {{"passed", u.passed}, {"U", mat_to_json(u.u)}, {"gram_mismatch", u.gram_mismatch},
            {"uv_residual", u.uv_residual}, {"intertwine_residual", u.intertwine_residual},
            {"gram_preservation", u.gram_preservation}};
}

inline json to_json(const RNOperator& r) {
    return {{"passed", r.passed}, {"T", mat_to_json(r.t)}, {"gamma", r.gamma}, {"norm_estimate", r.norm_estimate},
            {"norm_checked", r.norm_checked}, {"tv_residual", r.tv_residual},
            {"intertwine_residual", r.intertwine_residual}, {"factorization_residual", r.factorization_residual},
            {"containment_residual", r.containment_residual}, {"rank_phi", r.rank_phi}, {"rank_psi", r.rank_psi}};
}

inline json to_json(const LiftReport& r) {
    return {{"passed", r.passed}, {"cp_verdict", r.cp_verdict}, {"V_norm_sq", r.v_norm_sq}, {"V_method", r.v_method},
            {"unit_map_norm", r.unit_map_norm}, {"unit_map_method", r.unit_map_method}, {"map_norm", r.map_norm},
            {"map_norm_method", r.map_norm_method}, {"v_bound_ok", r.v_bound_ok},
            {"display_worst_margin", margin_json(r.display_worst_margin)}, {"operator_checked", r.operator_checked},
            {"operator_worst_margin", margin_json(r.operator_worst_margin)},
            {"factorization_residual", r.factorization_residual}};
}

inline json to_json(const AxiomReport& r) {
    json res = json::object();
    for (const auto& [k, v] : r.residuals) res[k] = v;
    return {{"passed", r.passed}, {"worst_residual", r.worst_residual}, {"gamma_declared", r.gamma_declared},
            {"gamma_empirical", r.gamma_empirical}, {"residuals", res}};
}

// ---------------------------------------------------------------- generator specs

inline KernelFn kernel_fn_from_json(const json& j) {
    std::string k = j.value("kind", "gaussian");
    double p = j.value("param", 1.0);
    if (k == "constant") return KernelFn::constant(p);
    if (k == "product") return KernelFn::product(p);
    if (k == "gaussian") return KernelFn::gaussian(p);
    throw FormatError("unknown kernel kind '" + k + "'");
}

inline json to_json(const KernelSpec& s) {
    return {{"W", mat_to_json(s.w)}, {"kernel", {{"kind", to_string(s.k.kind)}, {"param", s.k.param}}},
            {"grid", s.grid}, {"weight", s.weight}};
}

/// Missing W draws the reference spec from the seed (size "n", default 3).
inline KernelSpec kernel_spec_from_json(const json& j, std::uint64_t seed) {
    KernelSpec s = standard_kernel_spec(seed, j.value("n", Index{3}), j.value("grid", Index{65}));
    if (j.contains("W")) s.w = mat_from_json(j.at("W"));
    if (j.contains("kernel")) s.k = kernel_fn_from_json(j.at("kernel"));
    s.weight = j.value("weight", 1.0);
    return s;
}

inline GPIntegralSpec gp_spec_from_json(const json& j, std::uint64_t seed) {
    GPIntegralSpec s = standard_gp_spec(seed, j.value("n", Index{2}), j.value("h", Index{2}), j.value("grid", Index{65}));
    if (j.contains("W") || j.contains("kernel") || j.contains("weight")) {
        KernelSpec k = kernel_spec_from_json(j, derive_seed(seed, "kernel"));
        if (!j.contains("W")) k.w = s.kernel.w;
        s.kernel = k;
    }
    if (j.contains("F")) {
        s.f_poly.clear();
        for (const json& f : j.at("F")) s.f_poly.push_back(mat_from_json(f));
    }
    if (j.contains("T")) s.t = mat_from_json(j.at("T"));
    return s;
}

}  // namespace opmod
