#pragma once

// Naive serial counterparts of the kernels in kernels.hpp. Written as plain
// nested loops with no shared tricks so the two implementations can only
// agree by both being right. Tests compare against these; the benchmark
// reports the speedup over them.

#include "s2d/kernels.hpp"

namespace s2d::ref {

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, i64 stride,
                     i64 pad);

template <typename T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                           Shape4 in_shape);

template <typename T>
Tensor<T> conv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                            Shape4 w_shape);

template <typename T>
Tensor<T> dwconv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad);

// Direct scatter formulation of the stride-2 transposed convolution,
// independent of the adjoint-of-conv route the production kernel takes.
template <typename T>
Tensor<T> tconv2d_full_fwd(const Tensor<T>& x, const Tensor<T>& w);

template <typename T>
Tensor<T> bilinear_fwd(const Tensor<T>& x, i64 oh, i64 ow);

template <typename T>
kernels::BnForward<T> bn_fwd_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, double eps);

}  // namespace s2d::ref
