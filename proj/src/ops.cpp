#include "s2d/ops.hpp"

#include <cmath>

namespace s2d::ops {

namespace {

template <typename T>
void check_same_tape(Var<T> a, Var<T> b) {
    check(a.tape != nullptr && a.tape == b.tape, "operands must live on the same tape");
}

template <typename T>
void check_same_shape(Var<T> a, Var<T> b, const char* op) {
    check(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "add");
    Tensor<T> y(a.shape());
    const Tensor<T>&av = a.val(), &bv = b.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    const i64 ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi](auto& ctx, i64 out) {
        if (ctx.needs(ai)) ctx.accum(ai, ctx.grad(out));
        if (ctx.needs(bi)) ctx.accum(bi, ctx.grad(out));
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "sub");
    Tensor<T> y(a.shape());
    const Tensor<T>&av = a.val(), &bv = b.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] - bv.data[i];
    const i64 ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi](auto& ctx, i64 out) {
        if (ctx.needs(ai)) ctx.accum(ai, ctx.grad(out));
        if (ctx.needs(bi)) {
            Tensor<T> g(ctx.grad(out).shape);
            const auto& gy = ctx.grad(out);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = -gy.data[i];
            ctx.accum(bi, g);
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "mul");
    Tensor<T> y(a.shape());
    const Tensor<T>&av = a.val(), &bv = b.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
    const i64 ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi](auto& ctx, i64 out) {
        const auto& gy = ctx.grad(out);
        if (ctx.needs(ai)) {
            Tensor<T> g(gy.shape);
            const auto& other = ctx.val(bi);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = gy.data[i] * other.data[i];
            ctx.accum(ai, g);
        }
        if (ctx.needs(bi)) {
            Tensor<T> g(gy.shape);
            const auto& other = ctx.val(ai);
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = gy.data[i] * other.data[i];
            ctx.accum(bi, g);
        }
    });
}

template <typename T>
Var<T> scale(Var<T> x, double k) {
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    const T kt = static_cast<T>(k);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = kt * xv.data[i];
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, kt](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        Tensor<T> g(ctx.grad(out).shape);
        const auto& gy = ctx.grad(out);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = kt * gy.data[i];
        ctx.accum(xi, g);
    });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
    const Tensor<T>& xv = x.val();
    double acc = 0;
    for (T v : xv.data) acc += static_cast<double>(v);
    const i64 xi = x.id;
    return x.tape->record(Tensor<T>::scalar(static_cast<T>(acc)), {xi},
                          [xi](auto& ctx, i64 out) {
                              if (!ctx.needs(xi)) return;
                              const T g = ctx.grad(out).data[0];
                              ctx.accum(xi, Tensor<T>::full(ctx.val(xi).shape, g));
                          });
}

template <typename T>
Var<T> relu(Var<T> x) {
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = xv.data[i] > T(0) ? xv.data[i] : T(0);
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        const auto& gy = ctx.grad(out);
        const auto& xv2 = ctx.val(xi);
        Tensor<T> g(gy.shape);
        for (size_t i = 0; i < g.data.size(); ++i)
            g.data[i] = xv2.data[i] > T(0) ? gy.data[i] : T(0);
        ctx.accum(xi, g);
    });
}

template <typename T>
Var<T> abs_val(Var<T> x) {
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::abs(xv.data[i]);
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        const auto& gy = ctx.grad(out);
        const auto& xv2 = ctx.val(xi);
        Tensor<T> g(gy.shape);
        for (size_t i = 0; i < g.data.size(); ++i) {
            const T s = xv2.data[i] > T(0) ? T(1) : (xv2.data[i] < T(0) ? T(-1) : T(0));
            g.data[i] = s * gy.data[i];
        }
        ctx.accum(xi, g);
    });
}

template <typename T>
Var<T> square(Var<T> x) {
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = xv.data[i] * xv.data[i];
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        const auto& gy = ctx.grad(out);
        const auto& xv2 = ctx.val(xi);
        Tensor<T> g(gy.shape);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = T(2) * xv2.data[i] * gy.data[i];
        ctx.accum(xi, g);
    });
}

template <typename T>
Var<T> berhu_elem(Var<T> x, double c) {
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    const T ct = static_cast<T>(c);
    for (size_t i = 0; i < y.data.size(); ++i) {
        const T e = xv.data[i];
        const T a = std::abs(e);
        y.data[i] = (ct <= T(0) || a <= ct) ? a : (e * e + ct * ct) / (T(2) * ct);
    }
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, ct](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        const auto& gy = ctx.grad(out);
        const auto& xv2 = ctx.val(xi);
        Tensor<T> g(gy.shape);
        for (size_t i = 0; i < g.data.size(); ++i) {
            const T e = xv2.data[i];
            const T a = std::abs(e);
            T d;
            if (ct <= T(0) || a <= ct)
                d = e > T(0) ? T(1) : (e < T(0) ? T(-1) : T(0));
            else
                d = e / ct;
            g.data[i] = d * gy.data[i];
        }
        ctx.accum(xi, g);
    });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, const Var<T>* bias, i64 stride, i64 pad) {
    check_same_tape(x, w);
    if (bias) check_same_tape(x, *bias);
    Tensor<T> y = kernels::conv2d_fwd(x.val(), w.val(), bias ? &bias->val() : nullptr, stride, pad);
    const i64 xi = x.id, wi = w.id, bi = bias ? bias->id : -1;
    std::vector<i64> inputs{xi, wi};
    if (bias) inputs.push_back(bi);
    return x.tape->record(std::move(y), inputs, [xi, wi, bi, stride, pad](auto& ctx, i64 out) {
        const auto& gy = ctx.grad(out);
        if (ctx.needs(xi))
            ctx.accum(xi, kernels::conv2d_bwd_input(gy, ctx.val(wi), stride, pad,
                                                    ctx.val(xi).shape));
        if (ctx.needs(wi))
            ctx.accum(wi, kernels::conv2d_bwd_weight(gy, ctx.val(xi), stride, pad,
                                                     ctx.val(wi).shape));
        if (bi >= 0 && ctx.needs(bi)) ctx.accum(bi, kernels::conv2d_bwd_bias(gy));
    });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, i64 stride, i64 pad) {
    return conv2d(x, w, static_cast<const Var<T>*>(nullptr), stride, pad);
}

template <typename T>
Var<T> dwconv2d(Var<T> x, Var<T> w, i64 stride, i64 pad) {
    check_same_tape(x, w);
    Tensor<T> y = kernels::dwconv2d_fwd(x.val(), w.val(), stride, pad);
    const i64 xi = x.id, wi = w.id;
    return x.tape->record(std::move(y), {xi, wi}, [xi, wi, stride, pad](auto& ctx, i64 out) {
        const auto& gy = ctx.grad(out);
        if (ctx.needs(xi))
            ctx.accum(xi, kernels::dwconv2d_bwd_input(gy, ctx.val(wi), stride, pad,
                                                      ctx.val(xi).shape));
        if (ctx.needs(wi))
            ctx.accum(wi, kernels::dwconv2d_bwd_weight(gy, ctx.val(xi), stride, pad,
                                                       ctx.val(wi).shape));
    });
}

template <typename T>
Var<T> tconv2d(Var<T> x, Var<T> w, const Var<T>* bias) {
    check_same_tape(x, w);
    if (bias) check_same_tape(x, *bias);
    const i64 k = w.shape().h;
    check(k == 2 || k == 3, "tconv2d: kernel size must be 2 or 3, got " + std::to_string(k));
    check(w.shape().w == k, "tconv2d: kernel must be square");
    const i64 oh = 2 * x.shape().h, ow = 2 * x.shape().w;
    const i64 oc = w.shape().c;
    if (bias) check(bias->shape() == Shape4{1, oc, 1, 1}, "tconv2d: bias must be (1,out_ch,1,1)");

    Tensor<T> full = kernels::tconv2d_full_fwd(x.val(), w.val());
    Tensor<T> y = (k == 3) ? kernels::crop_br(full, oh, ow) : std::move(full);
    if (bias) {
        for (i64 b = 0; b < y.shape.n; ++b)
            for (i64 c = 0; c < oc; ++c) {
                T* plane = y.ptr() + (b * oc + c) * oh * ow;
                const T bv = bias->val().data[static_cast<size_t>(c)];
                for (i64 i = 0; i < oh * ow; ++i) plane[i] += bv;
            }
    }

    const i64 xi = x.id, wi = w.id, bi = bias ? bias->id : -1;
    std::vector<i64> inputs{xi, wi};
    if (bias) inputs.push_back(bi);
    return x.tape->record(std::move(y), inputs, [xi, wi, bi, k](auto& ctx, i64 out) {
        const auto& gy = ctx.grad(out);
        if (bi >= 0 && ctx.needs(bi)) ctx.accum(bi, kernels::conv2d_bwd_bias(gy));
        if (!ctx.needs(xi) && !ctx.needs(wi)) return;
        // The crop's adjoint restores the dropped row and column as zeros.
        Tensor<T> gy_full =
            (k == 3) ? kernels::pad_br(gy, gy.shape.h + 1, gy.shape.w + 1) : gy;
        if (ctx.needs(xi)) ctx.accum(xi, kernels::tconv2d_full_bwd_input(gy_full, ctx.val(wi)));
        if (ctx.needs(wi))
            ctx.accum(wi, kernels::tconv2d_full_bwd_weight(gy_full, ctx.val(xi),
                                                           ctx.val(wi).shape));
    });
}

template <typename T>
Var<T> unpool2x(Var<T> x) {
    Tensor<T> y = kernels::unpool2x_fwd(x.val());
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](auto& ctx, i64 out) {
        if (ctx.needs(xi)) ctx.accum(xi, kernels::unpool2x_bwd(ctx.grad(out)));
    });
}

template <typename T>
Var<T> bilinear_upsample(Var<T> x, i64 oh, i64 ow) {
    const i64 ih = x.shape().h, iw = x.shape().w;
    Tensor<T> y = kernels::bilinear_fwd(x.val(), oh, ow);
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, ih, iw](auto& ctx, i64 out) {
        if (ctx.needs(xi)) ctx.accum(xi, kernels::bilinear_bwd(ctx.grad(out), ih, iw));
    });
}

template <typename T>
Var<T> channel_mask(Var<T> x, const Tensor<T>& mask) {
    check(mask.shape == Shape4{x.shape().n, x.shape().c, 1, 1},
          "channel_mask: mask must be (N,C,1,1)");
    const i64 N = x.shape().n, C = x.shape().c, HW = x.shape().h * x.shape().w;
    Tensor<T> y(x.shape());
    const Tensor<T>& xv = x.val();
    for (i64 b = 0; b < N; ++b)
        for (i64 c = 0; c < C; ++c) {
            const T m = mask.data[static_cast<size_t>(b * C + c)];
            const T* src = xv.ptr() + (b * C + c) * HW;
            T* dst = y.ptr() + (b * C + c) * HW;
            for (i64 i = 0; i < HW; ++i) dst[i] = m * src[i];
        }
    const i64 xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, mask, N, C, HW](auto& ctx, i64 out) {
        if (!ctx.needs(xi)) return;
        const auto& gy = ctx.grad(out);
        Tensor<T> g(gy.shape);
        for (i64 b = 0; b < N; ++b)
            for (i64 c = 0; c < C; ++c) {
                const T m = mask.data[static_cast<size_t>(b * C + c)];
                const T* src = gy.ptr() + (b * C + c) * HW;
                T* dst = g.ptr() + (b * C + c) * HW;
                for (i64 i = 0; i < HW; ++i) dst[i] = m * src[i];
            }
        ctx.accum(xi, g);
    });
}

template <typename T>
BnTrainOut<T> batch_norm_train(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
    check_same_tape(x, gamma);
    check_same_tape(x, beta);
    kernels::BnForward<T> fwd = kernels::bn_fwd_train(x.val(), gamma.val(), beta.val(), eps);
    const i64 xi = x.id, gi = gamma.id, bi = beta.id;
    Tensor<T> mean = fwd.mean, var = fwd.var;
    Var<T> y = x.tape->record(
        std::move(fwd.y), {xi, gi, bi}, [xi, gi, bi, mean, var, eps](auto& ctx, i64 out) {
            kernels::BnBackward<T> bwd =
                kernels::bn_bwd_train(ctx.val(xi), mean, var, ctx.val(gi), eps, ctx.grad(out));
            if (ctx.needs(xi)) ctx.accum(xi, bwd.gx);
            if (ctx.needs(gi)) ctx.accum(gi, bwd.ggamma);
            if (ctx.needs(bi)) ctx.accum(bi, bwd.gbeta);
        });
    return {y, std::move(mean), std::move(var)};
}

template <typename T>
Var<T> batch_norm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& rmean,
                       const Tensor<T>& rvar, double eps) {
    check_same_tape(x, gamma);
    check_same_tape(x, beta);
    Tensor<T> y = kernels::bn_fwd_eval(x.val(), gamma.val(), beta.val(), rmean, rvar, eps);
    const i64 xi = x.id, gi = gamma.id, bi = beta.id;
    return x.tape->record(std::move(y), {xi, gi, bi},
                          [xi, gi, bi, rmean, rvar, eps](auto& ctx, i64 out) {
                              kernels::BnBackward<T> bwd = kernels::bn_bwd_eval(
                                  ctx.grad(out), ctx.val(xi), ctx.val(gi), rmean, rvar, eps);
                              if (ctx.needs(xi)) ctx.accum(xi, bwd.gx);
                              if (ctx.needs(gi)) ctx.accum(gi, bwd.ggamma);
                              if (ctx.needs(bi)) ctx.accum(bi, bwd.gbeta);
                          });
}

#define S2D_OPS_INSTANTIATE(T)                                                              \
    template Var<T> add<T>(Var<T>, Var<T>);                                                 \
    template Var<T> sub<T>(Var<T>, Var<T>);                                                 \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                 \
    template Var<T> scale<T>(Var<T>, double);                                               \
    template Var<T> sum_all<T>(Var<T>);                                                     \
    template Var<T> relu<T>(Var<T>);                                                        \
    template Var<T> abs_val<T>(Var<T>);                                                     \
    template Var<T> square<T>(Var<T>);                                                      \
    template Var<T> berhu_elem<T>(Var<T>, double);                                          \
    template Var<T> conv2d<T>(Var<T>, Var<T>, const Var<T>*, i64, i64);                     \
    template Var<T> conv2d<T>(Var<T>, Var<T>, i64, i64);                                    \
    template Var<T> dwconv2d<T>(Var<T>, Var<T>, i64, i64);                                  \
    template Var<T> tconv2d<T>(Var<T>, Var<T>, const Var<T>*);                              \
    template Var<T> unpool2x<T>(Var<T>);                                                    \
    template Var<T> bilinear_upsample<T>(Var<T>, i64, i64);                                 \
    template Var<T> channel_mask<T>(Var<T>, const Tensor<T>&);                              \
    template BnTrainOut<T> batch_norm_train<T>(Var<T>, Var<T>, Var<T>, double);             \
    template Var<T> batch_norm_eval<T>(Var<T>, Var<T>, Var<T>, const Tensor<T>&,            \
                                       const Tensor<T>&, double);

S2D_OPS_INSTANTIATE(float)
S2D_OPS_INSTANTIATE(double)
#undef S2D_OPS_INSTANTIATE

}  // namespace s2d::ops
