// Kernel-weighted form on M_3 sampled on a grid, then its GNS representation.
#include "opmod/opmod.hpp"

#include <iostream>

using namespace opmod;

int main() {
    KernelSpec spec = standard_kernel_spec();
    SesquiForm phi = gen_kernel_form(spec);

    PositivityReport pos = check_positive(phi);
    std::cout << "positivity: " << to_string(pos.verdict) << " (min " << pos.min_value << ")\n";

    CsOptions co;
    co.trials = 200;
    InequalityReport cs = verify_cs(phi, co);
    std::cout << "cauchy-schwarz over " << cs.trials << " pairs: " << (cs.passed ? "ok" : "violated")
              << ", worst margin " << cs.worst_margin << "\n";

    GnsRep g = build_gns(phi);
    GnsReport r = verify_gns(g, phi, 200);
    std::cout << "gns rank " << g.rank() << ", cyclic rank " << r.cyclic_rank << "\n"
              << "  adjoint " << r.adjoint_residual << "  homomorphism " << r.homomorphism_residual
              << "  factorization " << r.factorization_residual << "\n";
    return r.passed && cs.passed ? 0 : 1;
}
