// A form completely positive relative to the matrix product, lifted and factored.
#include "opmod/opmod.hpp"

#include <iostream>

using namespace opmod;

int main() {
    KernelSpec spec = standard_kernel_spec(7, 2, 17);
    Rng rng(3);
    GammaOptions go;
    go.w_tilde = random_psd_with_norm(rng, 2, spec.w_norm());
    go.g = gaussian_matrix(rng, 2, 2);
    GammaInstance inst = gen_gamma_example(spec, GammaVariant::L1, go);

    CPForm lifted = gamma_lift(inst.phi, inst.gamma, inst.fiber);
    StinespringTriple t = build_stinespring(lifted);
    TripleReport tr = verify_stinespring(t);
    std::cout << "stinespring rank " << t.rank() << ", span rank " << t.span_rank << "\n"
              << "  factorization residual " << tr.factorization_residual << "\n"
              << "  |V|^2 = " << t.v_norm_sq << " (" << t.v_method << ") against M |e|^2 = "
              << t.bound_m * t.unit_norm * t.unit_norm << " (" << t.bound_method << ")\n";

    LiftOptions lo;
    LiftReport lr = verify_gamma_lift(inst.phi, inst.gamma, inst.fiber, lo);
    std::cout << "lift checks: " << (lr.passed ? "ok" : "failed") << "\n";
    return tr.passed && lr.passed ? 0 : 1;
}
