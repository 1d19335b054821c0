#include "s2d/ref.hpp"

#include <cmath>

namespace s2d::ref {

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, i64 stride,
                     i64 pad) {
    const i64 N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 OC = w.shape.n, KH = w.shape.h, KW = w.shape.w;
    const i64 OH = kernels::conv_out_size(H, KH, stride, pad);
    const i64 OW = kernels::conv_out_size(W, KW, stride, pad);
    Tensor<T> y({N, OC, OH, OW});
    for (i64 b = 0; b < N; ++b)
        for (i64 oc = 0; oc < OC; ++oc)
            for (i64 oh = 0; oh < OH; ++oh)
                for (i64 ow = 0; ow < OW; ++ow) {
                    T acc = bias ? bias->data[static_cast<size_t>(oc)] : T(0);
                    for (i64 ic = 0; ic < IC; ++ic)
                        for (i64 kh = 0; kh < KH; ++kh)
                            for (i64 kw = 0; kw < KW; ++kw) {
                                const i64 ih = oh * stride - pad + kh;
                                const i64 iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(b, ic, ih, iw) * w.at(oc, ic, kh, kw);
                            }
                    y.at(b, oc, oh, ow) = acc;
                }
    return y;
}

template <typename T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                           Shape4 in_shape) {
    const i64 N = in_shape.n, IC = in_shape.c, H = in_shape.h, W = in_shape.w;
    const i64 OC = w.shape.n, KH = w.shape.h, KW = w.shape.w;
    Tensor<T> gx(in_shape);
    for (i64 b = 0; b < N; ++b)
        for (i64 oc = 0; oc < OC; ++oc)
            for (i64 oh = 0; oh < gy.shape.h; ++oh)
                for (i64 ow = 0; ow < gy.shape.w; ++ow)
                    for (i64 ic = 0; ic < IC; ++ic)
                        for (i64 kh = 0; kh < KH; ++kh)
                            for (i64 kw = 0; kw < KW; ++kw) {
                                const i64 ih = oh * stride - pad + kh;
                                const i64 iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                gx.at(b, ic, ih, iw) += gy.at(b, oc, oh, ow) * w.at(oc, ic, kh, kw);
                            }
    return gx;
}

template <typename T>
Tensor<T> conv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                            Shape4 w_shape) {
    const i64 N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 OC = w_shape.n, KH = w_shape.h, KW = w_shape.w;
    Tensor<T> gw(w_shape);
    for (i64 b = 0; b < N; ++b)
        for (i64 oc = 0; oc < OC; ++oc)
            for (i64 oh = 0; oh < gy.shape.h; ++oh)
                for (i64 ow = 0; ow < gy.shape.w; ++ow)
                    for (i64 ic = 0; ic < IC; ++ic)
                        for (i64 kh = 0; kh < KH; ++kh)
                            for (i64 kw = 0; kw < KW; ++kw) {
                                const i64 ih = oh * stride - pad + kh;
                                const i64 iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                gw.at(oc, ic, kh, kw) += gy.at(b, oc, oh, ow) * x.at(b, ic, ih, iw);
                            }
    return gw;
}

template <typename T>
Tensor<T> dwconv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 KH = w.shape.h, KW = w.shape.w;
    const i64 OH = kernels::conv_out_size(H, KH, stride, pad);
    const i64 OW = kernels::conv_out_size(W, KW, stride, pad);
    Tensor<T> y({N, C, OH, OW});
    for (i64 b = 0; b < N; ++b)
        for (i64 c = 0; c < C; ++c)
            for (i64 oh = 0; oh < OH; ++oh)
                for (i64 ow = 0; ow < OW; ++ow) {
                    T acc = 0;
                    for (i64 kh = 0; kh < KH; ++kh)
                        for (i64 kw = 0; kw < KW; ++kw) {
                            const i64 ih = oh * stride - pad + kh;
                            const i64 iw = ow * stride - pad + kw;
                            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                            acc += x.at(b, c, ih, iw) * w.at(c, 0, kh, kw);
                        }
                    y.at(b, c, oh, ow) = acc;
                }
    return y;
}

template <typename T>
Tensor<T> tconv2d_full_fwd(const Tensor<T>& x, const Tensor<T>& w) {
    const i64 N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 OC = w.shape.c, K = w.shape.h;
    Tensor<T> y({N, OC, (H - 1) * 2 + K, (W - 1) * 2 + K});
    for (i64 b = 0; b < N; ++b)
        for (i64 ic = 0; ic < IC; ++ic)
            for (i64 ih = 0; ih < H; ++ih)
                for (i64 iw = 0; iw < W; ++iw)
                    for (i64 oc = 0; oc < OC; ++oc)
                        for (i64 kh = 0; kh < K; ++kh)
                            for (i64 kw = 0; kw < K; ++kw)
                                y.at(b, oc, ih * 2 + kh, iw * 2 + kw) +=
                                    x.at(b, ic, ih, iw) * w.at(ic, oc, kh, kw);
    return y;
}

template <typename T>
Tensor<T> bilinear_fwd(const Tensor<T>& x, i64 oh, i64 ow) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor<T> y({N, C, oh, ow});
    const double sy = oh > 1 ? double(H - 1) / double(oh - 1) : 0.0;
    const double sx = ow > 1 ? double(W - 1) / double(ow - 1) : 0.0;
    for (i64 b = 0; b < N; ++b)
        for (i64 c = 0; c < C; ++c)
            for (i64 o = 0; o < oh; ++o)
                for (i64 p = 0; p < ow; ++p) {
                    const double fy = o * sy, fx = p * sx;
                    i64 y0 = static_cast<i64>(std::floor(fy));
                    i64 x0 = static_cast<i64>(std::floor(fx));
                    if (y0 > H - 1) y0 = H - 1;
                    if (x0 > W - 1) x0 = W - 1;
                    double ty = fy - y0, tx = fx - x0;
                    if (y0 == H - 1) ty = 0;
                    if (x0 == W - 1) tx = 0;
                    const i64 y1 = ty > 0 ? y0 + 1 : y0;
                    const i64 x1 = tx > 0 ? x0 + 1 : x0;
                    y.at(b, c, o, p) = static_cast<T>(
                        (1 - ty) * ((1 - tx) * x.at(b, c, y0, x0) + tx * x.at(b, c, y0, x1)) +
                        ty * ((1 - tx) * x.at(b, c, y1, x0) + tx * x.at(b, c, y1, x1)));
                }
    return y;
}

template <typename T>
kernels::BnForward<T> bn_fwd_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta, double eps) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 M = N * H * W;
    kernels::BnForward<T> out{Tensor<T>(x.shape), Tensor<T>({1, C, 1, 1}), Tensor<T>({1, C, 1, 1})};
    for (i64 c = 0; c < C; ++c) {
        double sum = 0;
        for (i64 b = 0; b < N; ++b)
            for (i64 i = 0; i < H; ++i)
                for (i64 j = 0; j < W; ++j) sum += static_cast<double>(x.at(b, c, i, j));
        const double mean = sum / double(M);
        double sq = 0;
        for (i64 b = 0; b < N; ++b)
            for (i64 i = 0; i < H; ++i)
                for (i64 j = 0; j < W; ++j) {
                    const double d = static_cast<double>(x.at(b, c, i, j)) - mean;
                    sq += d * d;
                }
        const double var = sq / double(M);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (i64 b = 0; b < N; ++b)
            for (i64 i = 0; i < H; ++i)
                for (i64 j = 0; j < W; ++j)
                    out.y.at(b, c, i, j) = static_cast<T>(
                        static_cast<double>(gamma.data[static_cast<size_t>(c)]) *
                            (static_cast<double>(x.at(b, c, i, j)) - mean) * inv +
                        static_cast<double>(beta.data[static_cast<size_t>(c)]));
        out.mean.data[static_cast<size_t>(c)] = static_cast<T>(mean);
        out.var.data[static_cast<size_t>(c)] = static_cast<T>(var);
    }
    return out;
}

#define S2D_REF_INSTANTIATE(T)                                                                    \
    template Tensor<T> conv2d_fwd<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, i64,   \
                                     i64);                                                        \
    template Tensor<T> conv2d_bwd_input<T>(const Tensor<T>&, const Tensor<T>&, i64, i64, Shape4); \
    template Tensor<T> conv2d_bwd_weight<T>(const Tensor<T>&, const Tensor<T>&, i64, i64,         \
                                            Shape4);                                              \
    template Tensor<T> dwconv2d_fwd<T>(const Tensor<T>&, const Tensor<T>&, i64, i64);             \
    template Tensor<T> tconv2d_full_fwd<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> bilinear_fwd<T>(const Tensor<T>&, i64, i64);                               \
    template kernels::BnForward<T> bn_fwd_train<T>(const Tensor<T>&, const Tensor<T>&,            \
                                                   const Tensor<T>&, double);

S2D_REF_INSTANTIATE(float)
S2D_REF_INSTANTIATE(double)
#undef S2D_REF_INSTANTIATE

}  // namespace s2d::ref
