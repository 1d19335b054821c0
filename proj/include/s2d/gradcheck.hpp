#pragma once

// Finite-difference verification of tape gradients. The builder is called
// repeatedly with perturbed copies of the leaf tensors, so it must be a
// pure function of them (draw any random masks before building).

#include <functional>
#include <string>
#include <vector>

#include "s2d/ops.hpp"

namespace s2d {

struct GradCheckResult {
    i64 checked = 0;       // coordinates compared
    i64 skipped = 0;       // coordinates excluded as kinks
    double max_rel_err = 0;
    std::string worst;     // "leaf L coord I" for the largest error
};

using BuildFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Compares analytic gradients against central differences for every
// coordinate of every leaf. A coordinate whose one-sided slopes disagree
// by more than kink_tol (relative) sits on a non-smooth point and is
// skipped rather than judged. Throws on non-finite values.
GradCheckResult grad_check(const BuildFn& build, const std::vector<Tensor<double>>& leaves,
                           double eps = 1e-5, double kink_tol = 1e-3);

// Named layer-by-layer and end-to-end checks; prints one line per case to
// out and returns whether every case stayed under its tolerance.
bool run_gradcheck_suite(std::ostream& out);

}  // namespace s2d
