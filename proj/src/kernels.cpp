#include "s2d/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace s2d::kernels {

namespace {

i64 floor_div(i64 a, i64 b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
i64 ceil_div(i64 a, i64 b) { return a >= 0 ? (a + b - 1) / b : -(-a / b); }

void check_conv_args(const Shape4& x, const Shape4& w, i64 stride, i64 pad) {
    check(stride >= 1, "conv: stride must be >= 1");
    check(pad >= 0, "conv: padding must be >= 0");
    check(w.h >= 1 && w.w >= 1, "conv: kernel extents must be >= 1");
    check(x.c == w.c, "conv: input has " + std::to_string(x.c) + " channels, weight expects " +
                          std::to_string(w.c));
    check(conv_out_size(x.h, w.h, stride, pad) >= 1 && conv_out_size(x.w, w.w, stride, pad) >= 1,
          "conv: output spatial size would be < 1 for input " + x.str());
}

}  // namespace

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, i64 stride,
                     i64 pad) {
    check_conv_args(x.shape, w.shape, stride, pad);
    const i64 N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 OC = w.shape.n, KH = w.shape.h, KW = w.shape.w;
    const i64 OH = conv_out_size(H, KH, stride, pad);
    const i64 OW = conv_out_size(W, KW, stride, pad);
    if (bias) check(bias->shape == Shape4{1, OC, 1, 1}, "conv: bias must be (1,out_ch,1,1)");

    Tensor<T> y({N, OC, OH, OW});
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 oc = 0; oc < OC; ++oc) {
            for (i64 oh = 0; oh < OH; ++oh) {
                T* yrow = yp + ((b * OC + oc) * OH + oh) * OW;
                for (i64 ic = 0; ic < IC; ++ic) {
                    for (i64 kh = 0; kh < KH; ++kh) {
                        const i64 ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= H) continue;
                        const T* xrow = xp + ((b * IC + ic) * H + ih) * W;
                        const T* wrow = wp + ((oc * IC + ic) * KH + kh) * KW;
                        for (i64 kw = 0; kw < KW; ++kw) {
                            const T wv = wrow[kw];
                            const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                            const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                            if (stride == 1) {
                                const T* xr = xrow - pad + kw;
                                for (i64 ow = lo; ow <= hi; ++ow) yrow[ow] += wv * xr[ow];
                            } else {
                                for (i64 ow = lo; ow <= hi; ++ow)
                                    yrow[ow] += wv * xrow[ow * stride - pad + kw];
                            }
                        }
                    }
                }
                if (bias) {
                    const T bv = bias->data[static_cast<size_t>(oc)];
                    for (i64 ow = 0; ow < OW; ++ow) yrow[ow] += bv;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                           Shape4 in_shape) {
    const i64 N = in_shape.n, IC = in_shape.c, H = in_shape.h, W = in_shape.w;
    const i64 OC = w.shape.n, KH = w.shape.h, KW = w.shape.w;
    const i64 OH = gy.shape.h, OW = gy.shape.w;
    check(gy.shape.n == N && gy.shape.c == OC && w.shape.c == IC,
          "conv_bwd_input: shape mismatch");

    Tensor<T> gx(in_shape);
    const T* gp = gy.ptr();
    const T* wp = w.ptr();
    T* xp = gx.ptr();

    // Each (b, ic) plane is owned by one thread; scatter within it runs in a
    // fixed serial order, so the result is independent of the thread count.
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 ic = 0; ic < IC; ++ic) {
            T* plane = xp + (b * IC + ic) * H * W;
            for (i64 oc = 0; oc < OC; ++oc) {
                for (i64 kh = 0; kh < KH; ++kh) {
                    const i64 oh_lo = std::max<i64>(0, ceil_div(pad - kh, stride));
                    const i64 oh_hi = std::min(OH - 1, floor_div(H - 1 + pad - kh, stride));
                    const T* wrow = wp + ((oc * IC + ic) * KH + kh) * KW;
                    for (i64 oh = oh_lo; oh <= oh_hi; ++oh) {
                        const i64 ih = oh * stride - pad + kh;
                        const T* grow = gp + ((b * OC + oc) * OH + oh) * OW;
                        T* xrow = plane + ih * W;
                        for (i64 kw = 0; kw < KW; ++kw) {
                            const T wv = wrow[kw];
                            const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                            const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                            if (stride == 1) {
                                T* xr = xrow - pad + kw;
                                for (i64 ow = lo; ow <= hi; ++ow) xr[ow] += wv * grow[ow];
                            } else {
                                for (i64 ow = lo; ow <= hi; ++ow)
                                    xrow[ow * stride - pad + kw] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> conv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                            Shape4 w_shape) {
    const i64 N = x.shape.n, IC = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 OC = w_shape.n, KH = w_shape.h, KW = w_shape.w;
    const i64 OH = gy.shape.h, OW = gy.shape.w;
    check(gy.shape.n == N && gy.shape.c == OC && w_shape.c == IC,
          "conv_bwd_weight: shape mismatch");

    Tensor<T> gw(w_shape);
    const T* gp = gy.ptr();
    const T* xp = x.ptr();

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 oc = 0; oc < OC; ++oc) {
        for (i64 ic = 0; ic < IC; ++ic) {
            T* wtile = gw.ptr() + (oc * IC + ic) * KH * KW;
            for (i64 b = 0; b < N; ++b) {
                for (i64 kh = 0; kh < KH; ++kh) {
                    const i64 oh_lo = std::max<i64>(0, ceil_div(pad - kh, stride));
                    const i64 oh_hi = std::min(OH - 1, floor_div(H - 1 + pad - kh, stride));
                    for (i64 oh = oh_lo; oh <= oh_hi; ++oh) {
                        const i64 ih = oh * stride - pad + kh;
                        const T* grow = gp + ((b * OC + oc) * OH + oh) * OW;
                        const T* xrow = xp + ((b * IC + ic) * H + ih) * W;
                        for (i64 kw = 0; kw < KW; ++kw) {
                            const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                            const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                            T acc = 0;
                            if (stride == 1) {
                                const T* xr = xrow - pad + kw;
                                for (i64 ow = lo; ow <= hi; ++ow) acc += grow[ow] * xr[ow];
                            } else {
                                for (i64 ow = lo; ow <= hi; ++ow)
                                    acc += grow[ow] * xrow[ow * stride - pad + kw];
                            }
                            wtile[kh * KW + kw] += acc;
                        }
                    }
                }
            }
        }
    }
    return gw;
}

template <typename T>
Tensor<T> conv2d_bwd_bias(const Tensor<T>& gy) {
    const i64 N = gy.shape.n, C = gy.shape.c, HW = gy.shape.h * gy.shape.w;
    Tensor<T> gb({1, C, 1, 1});
    const T* gp = gy.ptr();
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        double acc = 0;
        for (i64 b = 0; b < N; ++b) {
            const T* plane = gp + (b * C + c) * HW;
            for (i64 i = 0; i < HW; ++i) acc += static_cast<double>(plane[i]);
        }
        gb.data[static_cast<size_t>(c)] = static_cast<T>(acc);
    }
    return gb;
}

template <typename T>
Tensor<T> dwconv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, i64 stride, i64 pad) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    check(w.shape.n == C && w.shape.c == 1, "dwconv: weight must be (channels,1,kh,kw)");
    const i64 KH = w.shape.h, KW = w.shape.w;
    const i64 OH = conv_out_size(H, KH, stride, pad);
    const i64 OW = conv_out_size(W, KW, stride, pad);
    check(OH >= 1 && OW >= 1, "dwconv: output spatial size would be < 1");

    Tensor<T> y({N, C, OH, OW});
    const T* xp = x.ptr();
    const T* wp = w.ptr();
    T* yp = y.ptr();

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 oh = 0; oh < OH; ++oh) {
                T* yrow = yp + ((b * C + c) * OH + oh) * OW;
                for (i64 kh = 0; kh < KH; ++kh) {
                    const i64 ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) continue;
                    const T* xrow = xp + ((b * C + c) * H + ih) * W;
                    const T* wrow = wp + (c * KH + kh) * KW;
                    for (i64 kw = 0; kw < KW; ++kw) {
                        const T wv = wrow[kw];
                        const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                        const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                        for (i64 ow = lo; ow <= hi; ++ow)
                            yrow[ow] += wv * xrow[ow * stride - pad + kw];
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> dwconv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 pad,
                             Shape4 in_shape) {
    const i64 N = in_shape.n, C = in_shape.c, H = in_shape.h, W = in_shape.w;
    const i64 KH = w.shape.h, KW = w.shape.w;
    const i64 OH = gy.shape.h, OW = gy.shape.w;
    check(gy.shape.c == C && w.shape.n == C, "dwconv_bwd_input: shape mismatch");

    Tensor<T> gx(in_shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            T* plane = gx.ptr() + (b * C + c) * H * W;
            for (i64 kh = 0; kh < KH; ++kh) {
                const i64 oh_lo = std::max<i64>(0, ceil_div(pad - kh, stride));
                const i64 oh_hi = std::min(OH - 1, floor_div(H - 1 + pad - kh, stride));
                const T* wrow = w.ptr() + (c * KH + kh) * KW;
                for (i64 oh = oh_lo; oh <= oh_hi; ++oh) {
                    const i64 ih = oh * stride - pad + kh;
                    const T* grow = gy.ptr() + ((b * C + c) * OH + oh) * OW;
                    T* xrow = plane + ih * W;
                    for (i64 kw = 0; kw < KW; ++kw) {
                        const T wv = wrow[kw];
                        const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                        const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                        for (i64 ow = lo; ow <= hi; ++ow)
                            xrow[ow * stride - pad + kw] += wv * grow[ow];
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> dwconv2d_bwd_weight(const Tensor<T>& gy, const Tensor<T>& x, i64 stride, i64 pad,
                              Shape4 w_shape) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 KH = w_shape.h, KW = w_shape.w;
    const i64 OH = gy.shape.h, OW = gy.shape.w;
    check(w_shape.n == C && w_shape.c == 1 && gy.shape.c == C, "dwconv_bwd_weight: shape mismatch");

    Tensor<T> gw(w_shape);
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        T* wtile = gw.ptr() + c * KH * KW;
        for (i64 b = 0; b < N; ++b) {
            for (i64 kh = 0; kh < KH; ++kh) {
                const i64 oh_lo = std::max<i64>(0, ceil_div(pad - kh, stride));
                const i64 oh_hi = std::min(OH - 1, floor_div(H - 1 + pad - kh, stride));
                for (i64 oh = oh_lo; oh <= oh_hi; ++oh) {
                    const i64 ih = oh * stride - pad + kh;
                    const T* grow = gy.ptr() + ((b * C + c) * OH + oh) * OW;
                    const T* xrow = x.ptr() + ((b * C + c) * H + ih) * W;
                    for (i64 kw = 0; kw < KW; ++kw) {
                        const i64 lo = std::max<i64>(0, ceil_div(pad - kw, stride));
                        const i64 hi = std::min(OW - 1, floor_div(W - 1 + pad - kw, stride));
                        T acc = 0;
                        for (i64 ow = lo; ow <= hi; ++ow)
                            acc += grow[ow] * xrow[ow * stride - pad + kw];
                        wtile[kh * KW + kw] += acc;
                    }
                }
            }
        }
    }
    return gw;
}

template <typename T>
Tensor<T> tconv2d_full_fwd(const Tensor<T>& x, const Tensor<T>& w) {
    // Adjoint of conv2d(stride 2, pad 0): x plays the output-gradient role.
    check(x.shape.c == w.shape.n, "tconv: input channels must match weight dim 0");
    const i64 k = w.shape.h;
    Shape4 out{x.shape.n, w.shape.c, (x.shape.h - 1) * 2 + k, (x.shape.w - 1) * 2 + k};
    return conv2d_bwd_input(x, w, 2, 0, out);
}

template <typename T>
Tensor<T> tconv2d_full_bwd_input(const Tensor<T>& gy_full, const Tensor<T>& w) {
    return conv2d_fwd(gy_full, w, static_cast<const Tensor<T>*>(nullptr), 2, 0);
}

template <typename T>
Tensor<T> tconv2d_full_bwd_weight(const Tensor<T>& gy_full, const Tensor<T>& x, Shape4 w_shape) {
    return conv2d_bwd_weight(x, gy_full, 2, 0, w_shape);
}

template <typename T>
Tensor<T> unpool2x_fwd(const Tensor<T>& x) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor<T> y({N, C, 2 * H, 2 * W});
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 ih = 0; ih < H; ++ih) {
                const T* xrow = x.ptr() + ((b * C + c) * H + ih) * W;
                T* yrow = y.ptr() + ((b * C + c) * 2 * H + 2 * ih) * 2 * W;
                for (i64 iw = 0; iw < W; ++iw) yrow[2 * iw] = xrow[iw];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> unpool2x_bwd(const Tensor<T>& gy) {
    const i64 N = gy.shape.n, C = gy.shape.c, H = gy.shape.h / 2, W = gy.shape.w / 2;
    Tensor<T> gx({N, C, H, W});
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 ih = 0; ih < H; ++ih) {
                const T* grow = gy.ptr() + ((b * C + c) * 2 * H + 2 * ih) * 2 * W;
                T* xrow = gx.ptr() + ((b * C + c) * H + ih) * W;
                for (i64 iw = 0; iw < W; ++iw) xrow[iw] = grow[2 * iw];
            }
        }
    }
    return gx;
}

namespace {

struct AxisMap {
    std::vector<i64> lo;      // source index
    std::vector<double> frac; // weight of lo+1 (0 when on a grid point)
};

AxisMap axis_map(i64 in, i64 out) {
    AxisMap m;
    m.lo.resize(static_cast<size_t>(out));
    m.frac.resize(static_cast<size_t>(out));
    const double scale = out > 1 ? double(in - 1) / double(out - 1) : 0.0;
    for (i64 o = 0; o < out; ++o) {
        double f = o * scale;
        i64 lo = static_cast<i64>(std::floor(f));
        if (lo > in - 1) lo = in - 1;
        double t = f - lo;
        if (lo == in - 1) t = 0.0;
        m.lo[static_cast<size_t>(o)] = lo;
        m.frac[static_cast<size_t>(o)] = t;
    }
    return m;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_fwd(const Tensor<T>& x, i64 oh, i64 ow) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    check(oh >= 1 && ow >= 1, "bilinear: output size must be >= 1");
    const AxisMap my = axis_map(H, oh), mx = axis_map(W, ow);
    Tensor<T> y({N, C, oh, ow});
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            const T* plane = x.ptr() + (b * C + c) * H * W;
            T* out = y.ptr() + (b * C + c) * oh * ow;
            for (i64 o = 0; o < oh; ++o) {
                const i64 y0 = my.lo[static_cast<size_t>(o)];
                const double ty = my.frac[static_cast<size_t>(o)];
                const i64 y1 = ty > 0 ? y0 + 1 : y0;
                for (i64 p = 0; p < ow; ++p) {
                    const i64 x0 = mx.lo[static_cast<size_t>(p)];
                    const double tx = mx.frac[static_cast<size_t>(p)];
                    const i64 x1 = tx > 0 ? x0 + 1 : x0;
                    const double v =
                        (1 - ty) * ((1 - tx) * plane[y0 * W + x0] + tx * plane[y0 * W + x1]) +
                        ty * ((1 - tx) * plane[y1 * W + x0] + tx * plane[y1 * W + x1]);
                    out[o * ow + p] = static_cast<T>(v);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> bilinear_bwd(const Tensor<T>& gy, i64 in_h, i64 in_w) {
    const i64 N = gy.shape.n, C = gy.shape.c, OH = gy.shape.h, OW = gy.shape.w;
    const AxisMap my = axis_map(in_h, OH), mx = axis_map(in_w, OW);

    // Invert the axis maps into per-source contribution lists so the
    // gradient is a gather (deterministic for any thread split).
    std::vector<std::vector<std::pair<i64, double>>> ly(static_cast<size_t>(in_h)),
        lx(static_cast<size_t>(in_w));
    for (i64 o = 0; o < OH; ++o) {
        const i64 y0 = my.lo[static_cast<size_t>(o)];
        const double t = my.frac[static_cast<size_t>(o)];
        ly[static_cast<size_t>(y0)].push_back({o, 1 - t});
        if (t > 0) ly[static_cast<size_t>(y0 + 1)].push_back({o, t});
    }
    for (i64 o = 0; o < OW; ++o) {
        const i64 x0 = mx.lo[static_cast<size_t>(o)];
        const double t = mx.frac[static_cast<size_t>(o)];
        lx[static_cast<size_t>(x0)].push_back({o, 1 - t});
        if (t > 0) lx[static_cast<size_t>(x0 + 1)].push_back({o, t});
    }

    Tensor<T> gx({N, C, in_h, in_w});
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < N; ++b) {
        for (i64 c = 0; c < C; ++c) {
            const T* gplane = gy.ptr() + (b * C + c) * OH * OW;
            T* xplane = gx.ptr() + (b * C + c) * in_h * in_w;
            for (i64 ih = 0; ih < in_h; ++ih) {
                for (i64 iw = 0; iw < in_w; ++iw) {
                    double acc = 0;
                    for (const auto& [oy, wy] : ly[static_cast<size_t>(ih)])
                        for (const auto& [ox, wx] : lx[static_cast<size_t>(iw)])
                            acc += wy * wx * static_cast<double>(gplane[oy * OW + ox]);
                    xplane[ih * in_w + iw] = static_cast<T>(acc);
                }
            }
        }
    }
    return gx;
}

template <typename T>
BnForward<T> bn_fwd_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          double eps) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    check(gamma.shape == Shape4{1, C, 1, 1} && beta.shape == Shape4{1, C, 1, 1},
          "batch_norm: gamma/beta must be (1,C,1,1)");
    const i64 M = N * H * W;
    check(M > 1, "batch_norm: batch variance undefined for a single element per channel");

    BnForward<T> out{Tensor<T>(x.shape), Tensor<T>({1, C, 1, 1}), Tensor<T>({1, C, 1, 1})};
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        double sum = 0;
        for (i64 b = 0; b < N; ++b) {
            const T* plane = x.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) sum += static_cast<double>(plane[i]);
        }
        const double mean = sum / double(M);
        double sq = 0;
        for (i64 b = 0; b < N; ++b) {
            const T* plane = x.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) {
                const double d = static_cast<double>(plane[i]) - mean;
                sq += d * d;
            }
        }
        const double var = sq / double(M);
        const double inv = 1.0 / std::sqrt(var + eps);
        const double g = static_cast<double>(gamma.data[static_cast<size_t>(c)]);
        const double bt = static_cast<double>(beta.data[static_cast<size_t>(c)]);
        for (i64 b = 0; b < N; ++b) {
            const T* plane = x.ptr() + (b * C + c) * H * W;
            T* yplane = out.y.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i)
                yplane[i] = static_cast<T>(g * (static_cast<double>(plane[i]) - mean) * inv + bt);
        }
        out.mean.data[static_cast<size_t>(c)] = static_cast<T>(mean);
        out.var.data[static_cast<size_t>(c)] = static_cast<T>(var);
    }
    return out;
}

template <typename T>
BnBackward<T> bn_bwd_train(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var,
                           const Tensor<T>& gamma, double eps, const Tensor<T>& gy) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const i64 M = N * H * W;
    BnBackward<T> out{Tensor<T>(x.shape), Tensor<T>({1, C, 1, 1}), Tensor<T>({1, C, 1, 1})};
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        const double mu = static_cast<double>(mean.data[static_cast<size_t>(c)]);
        const double inv = 1.0 / std::sqrt(static_cast<double>(var.data[static_cast<size_t>(c)]) + eps);
        const double g = static_cast<double>(gamma.data[static_cast<size_t>(c)]);
        double s1 = 0, s2 = 0;
        for (i64 b = 0; b < N; ++b) {
            const T* xpl = x.ptr() + (b * C + c) * H * W;
            const T* gpl = gy.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) {
                const double gv = static_cast<double>(gpl[i]);
                s1 += gv;
                s2 += gv * (static_cast<double>(xpl[i]) - mu) * inv;
            }
        }
        for (i64 b = 0; b < N; ++b) {
            const T* xpl = x.ptr() + (b * C + c) * H * W;
            const T* gpl = gy.ptr() + (b * C + c) * H * W;
            T* opl = out.gx.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) {
                const double xhat = (static_cast<double>(xpl[i]) - mu) * inv;
                const double gv = static_cast<double>(gpl[i]);
                opl[i] = static_cast<T>(g * inv * (gv - s1 / double(M) - xhat * s2 / double(M)));
            }
        }
        out.ggamma.data[static_cast<size_t>(c)] = static_cast<T>(s2);
        out.gbeta.data[static_cast<size_t>(c)] = static_cast<T>(s1);
    }
    return out;
}

template <typename T>
Tensor<T> bn_fwd_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      const Tensor<T>& rmean, const Tensor<T>& rvar, double eps) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    Tensor<T> y(x.shape);
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        const double mu = static_cast<double>(rmean.data[static_cast<size_t>(c)]);
        const double inv = 1.0 / std::sqrt(static_cast<double>(rvar.data[static_cast<size_t>(c)]) + eps);
        const double g = static_cast<double>(gamma.data[static_cast<size_t>(c)]);
        const double bt = static_cast<double>(beta.data[static_cast<size_t>(c)]);
        for (i64 b = 0; b < N; ++b) {
            const T* xpl = x.ptr() + (b * C + c) * H * W;
            T* ypl = y.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i)
                ypl[i] = static_cast<T>(g * (static_cast<double>(xpl[i]) - mu) * inv + bt);
        }
    }
    return y;
}

template <typename T>
BnBackward<T> bn_bwd_eval(const Tensor<T>& gy, const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& rmean, const Tensor<T>& rvar, double eps) {
    const i64 N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    BnBackward<T> out{Tensor<T>(x.shape), Tensor<T>({1, C, 1, 1}), Tensor<T>({1, C, 1, 1})};
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        const double mu = static_cast<double>(rmean.data[static_cast<size_t>(c)]);
        const double inv = 1.0 / std::sqrt(static_cast<double>(rvar.data[static_cast<size_t>(c)]) + eps);
        const double g = static_cast<double>(gamma.data[static_cast<size_t>(c)]);
        double s1 = 0, s2 = 0;
        for (i64 b = 0; b < N; ++b) {
            const T* xpl = x.ptr() + (b * C + c) * H * W;
            const T* gpl = gy.ptr() + (b * C + c) * H * W;
            T* opl = out.gx.ptr() + (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) {
                const double gv = static_cast<double>(gpl[i]);
                s1 += gv;
                s2 += gv * (static_cast<double>(xpl[i]) - mu) * inv;
                opl[i] = static_cast<T>(gv * g * inv);
            }
        }
        out.ggamma.data[static_cast<size_t>(c)] = static_cast<T>(s2);
        out.gbeta.data[static_cast<size_t>(c)] = static_cast<T>(s1);
    }
    return out;
}

template <typename T>
Tensor<T> crop_br(const Tensor<T>& x, i64 h, i64 w) {
    check(h <= x.shape.h && w <= x.shape.w, "crop_br: target larger than input");
    Tensor<T> y({x.shape.n, x.shape.c, h, w});
    for (i64 b = 0; b < x.shape.n; ++b)
        for (i64 c = 0; c < x.shape.c; ++c)
            for (i64 ih = 0; ih < h; ++ih) {
                const T* src = x.ptr() + ((b * x.shape.c + c) * x.shape.h + ih) * x.shape.w;
                T* dst = y.ptr() + ((b * y.shape.c + c) * h + ih) * w;
                std::copy(src, src + w, dst);
            }
    return y;
}

template <typename T>
Tensor<T> pad_br(const Tensor<T>& x, i64 h, i64 w) {
    check(h >= x.shape.h && w >= x.shape.w, "pad_br: target smaller than input");
    Tensor<T> y({x.shape.n, x.shape.c, h, w});
    for (i64 b = 0; b < x.shape.n; ++b)
        for (i64 c = 0; c < x.shape.c; ++c)
            for (i64 ih = 0; ih < x.shape.h; ++ih) {
                const T* src = x.ptr() + ((b * x.shape.c + c) * x.shape.h + ih) * x.shape.w;
                T* dst = y.ptr() + ((b * y.shape.c + c) * h + ih) * w;
                std::copy(src, src + x.shape.w, dst);
            }
    return y;
}

#define S2D_INSTANTIATE(T)                                                                        \
    template Tensor<T> conv2d_fwd<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, i64,   \
                                     i64);                                                        \
    template Tensor<T> conv2d_bwd_input<T>(const Tensor<T>&, const Tensor<T>&, i64, i64, Shape4); \
    template Tensor<T> conv2d_bwd_weight<T>(const Tensor<T>&, const Tensor<T>&, i64, i64,         \
                                            Shape4);                                              \
    template Tensor<T> conv2d_bwd_bias<T>(const Tensor<T>&);                                      \
    template Tensor<T> dwconv2d_fwd<T>(const Tensor<T>&, const Tensor<T>&, i64, i64);             \
    template Tensor<T> dwconv2d_bwd_input<T>(const Tensor<T>&, const Tensor<T>&, i64, i64,        \
                                             Shape4);                                             \
    template Tensor<T> dwconv2d_bwd_weight<T>(const Tensor<T>&, const Tensor<T>&, i64, i64,       \
                                              Shape4);                                            \
    template Tensor<T> tconv2d_full_fwd<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> tconv2d_full_bwd_input<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> tconv2d_full_bwd_weight<T>(const Tensor<T>&, const Tensor<T>&, Shape4);    \
    template Tensor<T> unpool2x_fwd<T>(const Tensor<T>&);                                         \
    template Tensor<T> unpool2x_bwd<T>(const Tensor<T>&);                                         \
    template Tensor<T> bilinear_fwd<T>(const Tensor<T>&, i64, i64);                               \
    template Tensor<T> bilinear_bwd<T>(const Tensor<T>&, i64, i64);                               \
    template BnForward<T> bn_fwd_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                          double);                                                \
    template BnBackward<T> bn_bwd_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                           const Tensor<T>&, double, const Tensor<T>&);           \
    template Tensor<T> bn_fwd_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                      const Tensor<T>&, const Tensor<T>&, double);                \
    template BnBackward<T> bn_bwd_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                          const Tensor<T>&, const Tensor<T>&, double);            \
    template Tensor<T> crop_br<T>(const Tensor<T>&, i64, i64);                                    \
    template Tensor<T> pad_br<T>(const Tensor<T>&, i64, i64);

S2D_INSTANTIATE(float)
S2D_INSTANTIATE(double)
#undef S2D_INSTANTIATE

}  // namespace s2d::kernels
