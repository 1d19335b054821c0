#include "s2d/layers.hpp"

#include <cmath>

namespace s2d {

const char* first_layer_name(FirstLayerKind k) {
    switch (k) {
        case FirstLayerKind::Conv: return "conv";
        case FirstLayerKind::DepthWise: return "depthwise";
        case FirstLayerKind::ChanDrop: return "chandrop";
    }
    return "conv";
}

FirstLayerKind parse_first_layer(const std::string& s) {
    if (s == "conv") return FirstLayerKind::Conv;
    if (s == "depthwise") return FirstLayerKind::DepthWise;
    if (s == "chandrop") return FirstLayerKind::ChanDrop;
    throw std::invalid_argument("unknown first-layer kind: " + s);
}

const char* decoder_name(DecoderKind k) {
    switch (k) {
        case DecoderKind::DeConv2: return "deconv2";
        case DecoderKind::DeConv3: return "deconv3";
        case DecoderKind::UpConv: return "upconv";
        case DecoderKind::UpProj: return "upproj";
    }
    return "upproj";
}

DecoderKind parse_decoder(const std::string& s) {
    if (s == "deconv2") return DecoderKind::DeConv2;
    if (s == "deconv3") return DecoderKind::DeConv3;
    if (s == "upconv") return DecoderKind::UpConv;
    if (s == "upproj") return DecoderKind::UpProj;
    throw std::invalid_argument("unknown decoder kind: " + s);
}

void validate_config(const ModelConfig& cfg) {
    check(cfg.input_channels == 1 || cfg.input_channels == 3 || cfg.input_channels == 4,
          "input_channels must be 1, 3 or 4");
    check(!cfg.encoder_widths.empty(), "encoder_widths must not be empty");
    for (i64 w : cfg.encoder_widths) check(w >= 1, "encoder widths must be >= 1");
    check(cfg.encoder_block_count >= 1, "encoder_block_count must be >= 1");
    check(cfg.decoder_stages >= 1, "decoder_stages must be >= 1");
    check(cfg.out_h >= 1 && cfg.out_w >= 1, "output size must be >= 1");
    check(cfg.chan_drop_p > 0 && cfg.chan_drop_p <= 1, "chan_drop_p must be in (0,1]");

    i64 h = kernels::conv_out_size(cfg.out_h, 7, 2, 3);
    i64 w = kernels::conv_out_size(cfg.out_w, 7, 2, 3);
    check(h >= 1 && w >= 1, "first layer would reduce spatial size below 1");
    for (size_t s = 0; s < cfg.encoder_widths.size(); ++s) {
        h = kernels::conv_out_size(h, 3, 2, 1);
        w = kernels::conv_out_size(w, 3, 2, 1);
        check(h >= 1 && w >= 1,
              "encoder stage " + std::to_string(s) + " would reduce spatial size below 1");
    }
    i64 c = cfg.encoder_widths.back() / 2;
    check(c >= 1, "bottleneck would reduce channels below 1");
    for (i64 d = 0; d < cfg.decoder_stages; ++d) {
        c /= 2;
        check(c >= 1, "decoder stage " + std::to_string(d) + " would reduce channels below 1");
        h *= 2;
        w *= 2;
    }
    check(h <= cfg.out_h && w <= cfg.out_w,
          "decoder output " + std::to_string(h) + "x" + std::to_string(w) +
              " exceeds the configured output size");
}

namespace {

template <typename T>
i64 add_weight(Model<T>& m, const std::string& name, Shape4 shape, i64 fan_in, Rng& rng) {
    Tensor<T> t(shape);
    const double std = std::sqrt(2.0 / double(fan_in));
    for (auto& v : t.data) v = static_cast<T>(std * rng.normal());
    m.params.push_back({name, std::move(t)});
    return static_cast<i64>(m.params.size()) - 1;
}

template <typename T>
i64 add_param_fill(Model<T>& m, const std::string& name, Shape4 shape, T fill) {
    m.params.push_back({name, Tensor<T>::full(shape, fill)});
    return static_cast<i64>(m.params.size()) - 1;
}

template <typename T>
i64 add_buffer_fill(Model<T>& m, const std::string& name, Shape4 shape, T fill) {
    m.buffers.push_back({name, Tensor<T>::full(shape, fill)});
    return static_cast<i64>(m.buffers.size()) - 1;
}

template <typename T>
BnRef add_bn(Model<T>& m, const std::string& prefix, i64 channels) {
    BnRef bn;
    bn.gamma = add_param_fill(m, prefix + ".gamma", {1, channels, 1, 1}, T(1));
    bn.beta = add_param_fill(m, prefix + ".beta", {1, channels, 1, 1}, T(0));
    bn.mean = add_buffer_fill(m, prefix + ".mean", {1, channels, 1, 1}, T(0));
    bn.var = add_buffer_fill(m, prefix + ".var", {1, channels, 1, 1}, T(1));
    return bn;
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& cfg, Rng& rng) {
    validate_config(cfg);
    Model<T> m;
    m.cfg = cfg;
    m.mode = Mode::Train;

    const i64 w0 = cfg.encoder_widths[0];
    if (cfg.first_layer == FirstLayerKind::DepthWise) {
        m.first_dw.w = add_weight(m, "first.dw.w", {cfg.input_channels, 1, 7, 7}, 49, rng);
        m.first_pw.w = add_weight(m, "first.pw.w", {w0, cfg.input_channels, 1, 1},
                                  cfg.input_channels, rng);
    } else {
        m.first_conv.w =
            add_weight(m, "first.conv.w", {w0, cfg.input_channels, 7, 7},
                       cfg.input_channels * 49, rng);
    }
    m.first_bn = add_bn(m, "first.bn", w0);

    i64 in_ch = w0;
    for (size_t s = 0; s < cfg.encoder_widths.size(); ++s) {
        const i64 out_ch = cfg.encoder_widths[s];
        for (i64 b = 0; b < cfg.encoder_block_count; ++b) {
            const std::string p = "enc" + std::to_string(s) + "." + std::to_string(b);
            BlockRef blk;
            blk.stride = (b == 0) ? 2 : 1;
            blk.project = (b == 0);  // stride 2, and possibly a channel change
            blk.c1.w = add_weight(m, p + ".conv1.w", {out_ch, in_ch, 3, 3}, in_ch * 9, rng);
            blk.bn1 = add_bn(m, p + ".bn1", out_ch);
            blk.c2.w = add_weight(m, p + ".conv2.w", {out_ch, out_ch, 3, 3}, out_ch * 9, rng);
            blk.bn2 = add_bn(m, p + ".bn2", out_ch);
            if (blk.project) {
                blk.proj.w = add_weight(m, p + ".proj.w", {out_ch, in_ch, 1, 1}, in_ch, rng);
                blk.bnp = add_bn(m, p + ".projbn", out_ch);
            }
            m.blocks.push_back(blk);
            in_ch = out_ch;
        }
    }

    const i64 bneck = in_ch / 2;
    m.bottleneck.w = add_weight(m, "bottleneck.w", {bneck, in_ch, 3, 3}, in_ch * 9, rng);
    m.bottleneck.b = add_param_fill(m, "bottleneck.b", {1, bneck, 1, 1}, T(0));

    i64 dc = bneck;
    for (i64 d = 0; d < cfg.decoder_stages; ++d) {
        const std::string p = "dec" + std::to_string(d);
        const i64 oc = dc / 2;
        DecoderRef ref;
        switch (cfg.decoder_kind) {
            case DecoderKind::DeConv2:
                ref.a.w = add_weight(m, p + ".deconv.w", {dc, oc, 2, 2}, dc * 4, rng);
                ref.a.b = add_param_fill(m, p + ".deconv.b", {1, oc, 1, 1}, T(0));
                break;
            case DecoderKind::DeConv3:
                ref.a.w = add_weight(m, p + ".deconv.w", {dc, oc, 3, 3}, dc * 9, rng);
                ref.a.b = add_param_fill(m, p + ".deconv.b", {1, oc, 1, 1}, T(0));
                break;
            case DecoderKind::UpConv:
                ref.a.w = add_weight(m, p + ".conv5.w", {oc, dc, 5, 5}, dc * 25, rng);
                ref.a.b = add_param_fill(m, p + ".conv5.b", {1, oc, 1, 1}, T(0));
                break;
            case DecoderKind::UpProj:
                ref.a.w = add_weight(m, p + ".main5.w", {oc, dc, 5, 5}, dc * 25, rng);
                ref.a.b = add_param_fill(m, p + ".main5.b", {1, oc, 1, 1}, T(0));
                ref.m3.w = add_weight(m, p + ".main3.w", {oc, oc, 3, 3}, oc * 9, rng);
                ref.m3.b = add_param_fill(m, p + ".main3.b", {1, oc, 1, 1}, T(0));
                ref.r.w = add_weight(m, p + ".res5.w", {oc, dc, 5, 5}, dc * 25, rng);
                ref.r.b = add_param_fill(m, p + ".res5.b", {1, oc, 1, 1}, T(0));
                break;
        }
        m.decoders.push_back(ref);
        dc = oc;
    }

    m.head.w = add_weight(m, "head.w", {1, dc, 3, 3}, dc * 9, rng);
    m.head.b = add_param_fill(m, "head.b", {1, 1, 1, 1}, T(0));
    return m;
}

template <typename T>
Var<T> apply_bn(BnUse<T> bn, Var<T> x, Mode mode) {
    if (mode == Mode::Train) {
        ops::BnTrainOut<T> out = ops::batch_norm_train(x, bn.gamma, bn.beta, kBnEps);
        if (bn.running_mean && bn.running_var) {
            auto& rm = *bn.running_mean;
            auto& rv = *bn.running_var;
            for (size_t i = 0; i < rm.data.size(); ++i) {
                rm.data[i] = static_cast<T>((1 - kBnStatMomentum) * rm.data[i] +
                                            kBnStatMomentum * out.mean.data[i]);
                rv.data[i] = static_cast<T>((1 - kBnStatMomentum) * rv.data[i] +
                                            kBnStatMomentum * out.var.data[i]);
            }
        }
        return out.y;
    }
    check(bn.running_mean != nullptr && bn.running_var != nullptr,
          "batch_norm in Eval mode needs running statistics");
    return ops::batch_norm_eval(x, bn.gamma, bn.beta, *bn.running_mean, *bn.running_var, kBnEps);
}

template <typename T>
Var<T> channel_dropout(Var<T> x, double p, Mode mode, Rng* rng) {
    check(p > 0 && p <= 1, "channel dropout probability must be in (0,1]");
    if (mode == Mode::Eval) return x;
    check(rng != nullptr, "channel dropout in Train mode needs an rng");
    const i64 N = x.shape().n, C = x.shape().c;
    Tensor<T> mask({N, C, 1, 1});
    for (i64 n = 0; n < N; ++n)
        for (i64 c = 0; c < C; ++c)
            mask.data[static_cast<size_t>(n * C + c)] = rng->uniform() < p ? T(1) : T(0);
    return ops::channel_mask(x, mask);
}

template <typename T>
Var<T> depthwise_separable(Var<T> x, Var<T> spatial_w, Var<T> pointwise_w, i64 stride, i64 pad) {
    Var<T> y = ops::dwconv2d(x, spatial_w, stride, pad);
    return ops::conv2d(y, pointwise_w, 1, 0);
}

template <typename T>
Var<T> up_conv(Var<T> x, Var<T> w5, Var<T> b5) {
    Var<T> u = ops::unpool2x(x);
    return ops::relu(ops::conv2d(u, w5, &b5, 1, 2));
}

template <typename T>
Var<T> up_proj(Var<T> x, Var<T> main5_w, Var<T> main5_b, Var<T> main3_w, Var<T> main3_b,
               Var<T> res5_w, Var<T> res5_b) {
    Var<T> u = ops::unpool2x(x);
    Var<T> main = ops::relu(ops::conv2d(u, main5_w, &main5_b, 1, 2));
    main = ops::conv2d(main, main3_w, &main3_b, 1, 1);
    Var<T> res = ops::conv2d(u, res5_w, &res5_b, 1, 2);
    return ops::relu(ops::add(main, res));
}

template <typename T>
Var<T> residual_block(Var<T> x, Var<T> w1, BnUse<T> bn1, Var<T> w2, BnUse<T> bn2,
                      const Var<T>* proj_w, BnUse<T>* proj_bn, i64 stride, Mode mode) {
    Var<T> y = ops::conv2d(x, w1, stride, 1);
    y = ops::relu(apply_bn(bn1, y, mode));
    y = ops::conv2d(y, w2, 1, 1);
    y = apply_bn(bn2, y, mode);
    Var<T> skip = x;
    if (proj_w) {
        skip = ops::conv2d(x, *proj_w, stride, 0);
        skip = apply_bn(*proj_bn, skip, mode);
    }
    return ops::relu(ops::add(y, skip));
}

template <typename T>
Forward<T> model_forward(Model<T>& m, Tape<T>& tape, const Tensor<T>& input, Rng* rng) {
    const ModelConfig& cfg = m.cfg;
    check(input.shape.c == cfg.input_channels,
          "model expects " + std::to_string(cfg.input_channels) + " input channels, got " +
              std::to_string(input.shape.c));
    check(input.shape.h == cfg.out_h && input.shape.w == cfg.out_w,
          "model expects " + std::to_string(cfg.out_h) + "x" + std::to_string(cfg.out_w) +
              " input, got " + std::to_string(input.shape.h) + "x" +
              std::to_string(input.shape.w));

    Forward<T> fwd{Var<T>{}, {}};
    fwd.param_vars.reserve(m.params.size());
    for (auto& p : m.params)
        fwd.param_vars.push_back(m.mode == Mode::Train ? tape.leaf(p.value)
                                                       : tape.constant(p.value));
    auto pv = [&](i64 idx) { return fwd.param_vars[static_cast<size_t>(idx)]; };
    auto bn_use = [&](const BnRef& r) {
        return BnUse<T>{pv(r.gamma), pv(r.beta), &m.buffers[static_cast<size_t>(r.mean)].value,
                        &m.buffers[static_cast<size_t>(r.var)].value};
    };

    Var<T> x = tape.constant(input);
    if (cfg.first_layer == FirstLayerKind::ChanDrop)
        x = channel_dropout(x, cfg.chan_drop_p, m.mode, rng);
    if (cfg.first_layer == FirstLayerKind::DepthWise)
        x = depthwise_separable(x, pv(m.first_dw.w), pv(m.first_pw.w), 2, 3);
    else
        x = ops::conv2d(x, pv(m.first_conv.w), 2, 3);
    x = ops::relu(apply_bn(bn_use(m.first_bn), x, m.mode));

    for (const BlockRef& blk : m.blocks) {
        if (blk.project) {
            Var<T> proj_w = pv(blk.proj.w);
            BnUse<T> bnp = bn_use(blk.bnp);
            x = residual_block(x, pv(blk.c1.w), bn_use(blk.bn1), pv(blk.c2.w), bn_use(blk.bn2),
                               &proj_w, &bnp, blk.stride, m.mode);
        } else {
            x = residual_block(x, pv(blk.c1.w), bn_use(blk.bn1), pv(blk.c2.w), bn_use(blk.bn2),
                               static_cast<const Var<T>*>(nullptr), static_cast<BnUse<T>*>(nullptr),
                               blk.stride, m.mode);
        }
    }

    {
        Var<T> b = pv(m.bottleneck.b);
        x = ops::conv2d(x, pv(m.bottleneck.w), &b, 1, 1);
    }

    for (const DecoderRef& dec : m.decoders) {
        switch (cfg.decoder_kind) {
            case DecoderKind::DeConv2:
            case DecoderKind::DeConv3: {
                Var<T> b = pv(dec.a.b);
                x = ops::relu(ops::tconv2d(x, pv(dec.a.w), &b));
                break;
            }
            case DecoderKind::UpConv:
                x = up_conv(x, pv(dec.a.w), pv(dec.a.b));
                break;
            case DecoderKind::UpProj:
                x = up_proj(x, pv(dec.a.w), pv(dec.a.b), pv(dec.m3.w), pv(dec.m3.b), pv(dec.r.w),
                            pv(dec.r.b));
                break;
        }
    }

    {
        Var<T> b = pv(m.head.b);
        x = ops::conv2d(x, pv(m.head.w), &b, 1, 1);
    }
    if (x.shape().h != cfg.out_h || x.shape().w != cfg.out_w)
        x = ops::bilinear_upsample(x, cfg.out_h, cfg.out_w);

    fwd.out = x;
    return fwd;
}

#define S2D_LAYERS_INSTANTIATE(T)                                                               \
    template Model<T> build_model<T>(const ModelConfig&, Rng&);                                 \
    template Var<T> apply_bn<T>(BnUse<T>, Var<T>, Mode);                                        \
    template Var<T> channel_dropout<T>(Var<T>, double, Mode, Rng*);                             \
    template Var<T> depthwise_separable<T>(Var<T>, Var<T>, Var<T>, i64, i64);                   \
    template Var<T> up_conv<T>(Var<T>, Var<T>, Var<T>);                                         \
    template Var<T> up_proj<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);         \
    template Var<T> residual_block<T>(Var<T>, Var<T>, BnUse<T>, Var<T>, BnUse<T>,               \
                                      const Var<T>*, BnUse<T>*, i64, Mode);                     \
    template Forward<T> model_forward<T>(Model<T>&, Tape<T>&, const Tensor<T>&, Rng*);

S2D_LAYERS_INSTANTIATE(float)
S2D_LAYERS_INSTANTIATE(double)
#undef S2D_LAYERS_INSTANTIATE

}  // namespace s2d
