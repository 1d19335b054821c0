#pragma once

#include "s2d/tensor.hpp"

namespace s2d::kernels {

/// Direct convolution kernels, OpenMP-parallel over output elements.
/// Every element is reduced serially by the thread that owns it, so all
/// results are bit-identical for any thread count.
///
/// Weight layout (out_ch, in_ch, kh, kw); zero padding; cross-correlation.

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                     i64 stride, i64 pad);

template <typename T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                           Shape4 in_shape);

template <typename T>
Tensor<T> conv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                            Shape4 w_shape);

/// Gradient for a per-output-channel bias, returned as (1, C, 1, 1).
template <typename T>
Tensor<T> conv2d_bwd_bias(const Tensor<T>& gy);

/// Per-channel spatial convolution, weight layout (C, 1, kh, kw).
template <typename T>
Tensor<T> dwconv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad);

template <typename T>
Tensor<T> dwconv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                             Shape4 in_shape);

template <typename T>
Tensor<T> dwconv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                              Shape4 w_shape);

/// Transposed convolution with stride 2 and no padding, full output
/// (H-1)*2+k. Weight layout (in_ch, out_ch, k, k); defined as the exact
/// adjoint of conv2d(stride=2, pad=0) with the same weight tensor.
template <typename T>
Tensor<T> tconv2d_full_fwd(const Tensor<T>& x, const Tensor<T>& w);

template <typename T>
Tensor<T> tconv2d_full_bwd_input(const Tensor<T>& gy_full, const Tensor<T>& w);

template <typename T>
Tensor<T> tconv2d_full_bwd_weight(const Tensor<T>& gy_full, const Tensor<T>& x, Shape4 w_shape);

/// 2x zero-fill unpooling: value goes to the top-left of each 2x2 block.
template <typename T>
Tensor<T> unpool2x_fwd(const Tensor<T>& x);

template <typename T>
Tensor<T> unpool2x_bwd(const Tensor<T>& gy);

/// Align-corners bilinear interpolation to (oh, ow).
template <typename T>
Tensor<T> bilinear_fwd(const Tensor<T>& x, i64 oh, i64 ow);

template <typename T>
Tensor<T> bilinear_bwd(const Tensor<T>& gy, i64 in_h, i64 in_w);

/// Batch normalization over (N,H,W) per channel. Channel parameters are
/// shaped (1,C,1,1); variance is the biased batch variance.
template <typename T>
struct BnForward {
    Tensor<T> y;
    Tensor<T> mean;  // (1,C,1,1)
    Tensor<T> var;   // (1,C,1,1)
};

template <typename T>
BnForward<T> bn_fwd_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          double eps);

template <typename T>
struct BnBackward {
    Tensor<T> gx;
    Tensor<T> ggamma;
    Tensor<T> gbeta;
};

template <typename T>
BnBackward<T> bn_bwd_train(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var,
                           const Tensor<T>& gamma, double eps, const Tensor<T>& gy);

template <typename T>
Tensor<T> bn_fwd_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      const Tensor<T>& rmean, const Tensor<T>& rvar, double eps);

template <typename T>
BnBackward<T> bn_bwd_eval(const Tensor<T>& gy, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& rmean, const Tensor<T>& rvar, double eps);

/// Crop to (h, w) keeping the top-left region.
template <typename T>
Tensor<T> crop_br(const Tensor<T>& x, i64 h, i64 w);

/// Zero-pad at the bottom/right up to (h, w).
template <typename T>
Tensor<T> pad_br(const Tensor<T>& x, i64 h, i64 w);

inline i64 conv_out_size(i64 in, i64 k, i64 stride, i64 pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace s2d::kernels
