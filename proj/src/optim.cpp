#include "s2d/optim.hpp"

namespace s2d {

template <typename T>
void sgd_step(std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
              std::vector<Tensor<T>>& velocity, double lr, double weight_decay,
              double momentum) {
    check(params.size() == grads.size() && params.size() == velocity.size(),
          "sgd_step: parameter, gradient and velocity counts disagree");
    const T lr_t = static_cast<T>(lr);
    const T wd_t = static_cast<T>(weight_decay);
    const T mom_t = static_cast<T>(momentum);
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = grads[i];
        Tensor<T>& v = velocity[i];
        check(p.shape == g.shape && p.shape == v.shape,
              "sgd_step: shape mismatch at parameter " + std::to_string(i));
        for (size_t k = 0; k < p.data.size(); ++k) {
            v.data[k] = mom_t * v.data[k] + (g.data[k] + wd_t * p.data[k]);
            p.data[k] -= lr_t * v.data[k];
        }
    }
}

template void sgd_step<float>(std::vector<Tensor<float>*>&, const std::vector<Tensor<float>>&,
                              std::vector<Tensor<float>>&, double, double, double);
template void sgd_step<double>(std::vector<Tensor<double>*>&, const std::vector<Tensor<double>>&,
                               std::vector<Tensor<double>>&, double, double, double);

}  // namespace s2d
