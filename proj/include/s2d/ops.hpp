#pragma once

// Differentiable operations over tape variables. Each function computes
// its value with the kernels in kernels.hpp and records a closure that
// applies the matching adjoint. Instantiated for float and double.

#include "s2d/kernels.hpp"
#include "s2d/tape.hpp"

namespace s2d::ops {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

// y = k * x for a fixed scalar k.
template <typename T>
Var<T> scale(Var<T> x, double k);

// Scalar (1,1,1,1) sum of all elements.
template <typename T>
Var<T> sum_all(Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> abs_val(Var<T> x);
template <typename T>
Var<T> square(Var<T> x);

// Elementwise reverse Huber with fixed threshold c: |e| below c, then
// (e^2 + c^2) / (2c). c <= 0 degenerates to plain |e|.
template <typename T>
Var<T> berhu_elem(Var<T> x, double c);

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, const Var<T>* bias, i64 stride, i64 pad);
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, i64 stride, i64 pad);

// Per-channel spatial convolution; weight (C,1,kh,kw).
template <typename T>
Var<T> dwconv2d(Var<T> x, Var<T> w, i64 stride, i64 pad);

// Stride-2 transposed convolution, weight (in_ch,out_ch,k,k), k in {2,3}.
// Output is exactly (2H, 2W); the odd row and column a 3x3 kernel
// produces are cropped off the bottom and right. Bias is optional.
template <typename T>
Var<T> tconv2d(Var<T> x, Var<T> w, const Var<T>* bias);

// Zero-insertion 2x upsampling (value at even coordinates, zero elsewhere).
template <typename T>
Var<T> unpool2x(Var<T> x);

template <typename T>
Var<T> bilinear_upsample(Var<T> x, i64 oh, i64 ow);

// Multiply each (n,c) plane by mask[n,c]; mask is fixed data with shape
// (N,C,1,1) and receives no gradient.
template <typename T>
Var<T> channel_mask(Var<T> x, const Tensor<T>& mask);

template <typename T>
struct BnTrainOut {
    Var<T> y;
    Tensor<T> mean;  // per-channel batch mean, (1,C,1,1)
    Tensor<T> var;   // per-channel biased batch variance, (1,C,1,1)
};

template <typename T>
BnTrainOut<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, double eps);

// Normalization against fixed running statistics; gradients still flow
// into x, gamma and beta.
template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& rmean,
                       const Tensor<T>& rvar, double eps);

}  // namespace s2d::ops
