#pragma once

#include <random>

#include "air/tensor/ops.hpp"

namespace air::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

/// sum(x * weights): a scalar probe with non-trivial upstream gradient.
inline Var weighted_sum(const Var& x, const Tensor& weights) {
    return sum(mul(x, Var(weights)));
}

}  // namespace air::testing
