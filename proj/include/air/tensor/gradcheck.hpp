#pragma once

#include <functional>
#include <string>
#include <vector>

#include "air/tensor/autograd.hpp"

namespace air {

struct GradCheckResult {
    /// max over inputs of ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2)
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t evaluations = 0;
};

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

/// Compares reverse-mode gradients of scalar `f` against central finite
/// differences. The numeric side only ever evaluates `f` forward.
GradCheckResult gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-5);

}  // namespace air
