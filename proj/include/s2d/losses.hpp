#pragma once

// Training losses, all masked: the mean runs over pixels where mask is 1
// and masked-out pixels contribute neither value nor gradient.

#include <string>

#include "s2d/ops.hpp"

namespace s2d {

enum class LossKind { L1, L2, berHu };

const char* loss_name(LossKind k);
LossKind parse_loss(const std::string& s);

// Mean squared error over masked pixels.
template <typename T>
Var<T> loss_l2(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask);

// Mean absolute error over masked pixels; subgradient 0 at zero error.
template <typename T>
Var<T> loss_l1(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask);

// Reverse Huber: |e| up to the threshold, (e^2+c^2)/(2c) beyond it, with
// c = 0.2 * max masked |e| over the whole batch. The threshold is treated
// as a constant in backward. A perfect batch (c = 0) gives loss 0.
template <typename T>
Var<T> loss_berhu(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask);

template <typename T>
Var<T> make_loss(LossKind kind, Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask);

// The berHu threshold for the given batch, exposed for tests.
template <typename T>
double berhu_threshold(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask);

}  // namespace s2d
