#include "s2d/gradcheck.hpp"

#include <cmath>

namespace s2d {

namespace {

double eval_loss(const BuildFn& build, const std::vector<Tensor<double>>& leaves) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(leaves.size());
    for (const auto& t : leaves) vars.push_back(tape.leaf(t));
    Var<double> loss = build(tape, vars);
    const double v = loss.val().data[0];
    check(std::isfinite(v), "grad_check: loss is not finite");
    return v;
}

}  // namespace

GradCheckResult grad_check(const BuildFn& build, const std::vector<Tensor<double>>& leaves,
                           double eps, double kink_tol) {
    // One clean pass for the analytic gradients and the base loss.
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(leaves.size());
    for (const auto& t : leaves) vars.push_back(tape.leaf(t));
    Var<double> loss = build(tape, vars);
    const double f0 = loss.val().data[0];
    check(std::isfinite(f0), "grad_check: loss is not finite");
    Grads<double> grads = tape.backward(loss);

    GradCheckResult res;
    std::vector<Tensor<double>> work = leaves;
    for (size_t l = 0; l < leaves.size(); ++l) {
        const Tensor<double>& analytic = grads.at(vars[l].id);
        for (size_t i = 0; i < work[l].data.size(); ++i) {
            const double x0 = work[l].data[i];
            work[l].data[i] = x0 + eps;
            const double fp = eval_loss(build, work);
            work[l].data[i] = x0 - eps;
            const double fm = eval_loss(build, work);
            work[l].data[i] = x0;

            const double d_plus = (fp - f0) / eps;
            const double d_minus = (f0 - fm) / eps;
            const double disagree = std::abs(d_plus - d_minus);
            const double scale = std::max({1.0, std::abs(d_plus), std::abs(d_minus)});
            if (disagree > kink_tol * scale) {
                ++res.skipped;
                continue;
            }

            const double numeric = (fp - fm) / (2 * eps);
            const double a = analytic.data[i];
            check(std::isfinite(a), "grad_check: analytic gradient not finite at leaf " +
                                        std::to_string(l) + " coord " + std::to_string(i));
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf " + std::to_string(l) + " coord " + std::to_string(i);
            }
        }
    }
    return res;
}

}  // namespace s2d
