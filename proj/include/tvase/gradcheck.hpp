#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tvase/tensor.hpp"

namespace tvase {
namespace gradcheck {

struct GradReport {
    std::string op;
    double max_rel_err = 0;
    double tolerance = 0;
    bool pass = false;
    int64_t probes = 0;
};

// Analytic partials of the dynamic-kernel FIR (64-bit only).
// x {T, C}, kernel {T, C, M}, upstream {T, C} -> (dL/dx, dL/dkernel).
std::pair<Tensor<double>, Tensor<double>> dkg_apply_grads(const Tensor<double>& x,
                                                          const Tensor<double>& kernel,
                                                          const Tensor<double>& upstream);

// K(t,c,m) = Ks(t,c) * K0(t,m); upstream {T, C, M} -> (dL/dKs, dL/dK0).
std::pair<Tensor<double>, Tensor<double>> separable_kernel_grads(const Tensor<double>& ks,
                                                                 const Tensor<double>& k0,
                                                                 const Tensor<double>& upstream);

// Central finite differences against the analytic gradients on deterministic
// random probes; tolerance 1e-4 at step 1e-6.
std::vector<GradReport> run_gradcheck(uint64_t seed, int64_t probes_per_op);

std::string reports_to_json(const std::vector<GradReport>& reports);
std::vector<GradReport> reports_from_json(const std::string& text);

} // namespace gradcheck
} // namespace tvase
