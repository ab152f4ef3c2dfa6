#include "air/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace air {

GradCheckResult gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double step) {
    GradCheckResult result;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.emplace_back(t, true);
    backward(f(leaves));
    ++result.evaluations;

    NoGradGuard no_grad;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        const Tensor analytic = leaves[k].has_grad() ? leaves[k].grad() : Tensor(inputs[k].shape());
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
            std::vector<Var> probe;
            probe.reserve(inputs.size());
            for (const Tensor& t : inputs) probe.emplace_back(t, false);
            const double x0 = inputs[k][i];
            probe[k].mutable_value()[i] = x0 + step;
            const double fp = f(probe).value().item();
            probe[k].mutable_value()[i] = x0 - step;
            const double fm = f(probe).value().item();
            result.evaluations += 2;
            const double numeric = (fp - fm) / (2.0 * step);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
        const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
        const double rel = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_input = k;
        }
    }
    return result;
}

}  // namespace air
