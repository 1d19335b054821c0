#pragma once

// SGD with classical momentum and decoupled-from-nothing weight decay:
// the decay term joins the gradient before the velocity update,
//   v <- momentum * v + (g + weight_decay * p),  p <- p - lr * v.

#include <vector>

#include "s2d/tensor.hpp"

namespace s2d {

template <typename T>
void sgd_step(std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
              std::vector<Tensor<T>>& velocity, double lr, double weight_decay,
              double momentum);

}  // namespace s2d
