#pragma once

// Network building blocks and the encoder-decoder assembler. A Model owns
// named parameter and buffer tensors; forward passes re-register them on a
// caller-provided tape so gradients come back keyed to parameter order.

#include <string>
#include <vector>

#include "s2d/ops.hpp"
#include "s2d/rng.hpp"

namespace s2d {

enum class FirstLayerKind { Conv, DepthWise, ChanDrop };
enum class DecoderKind { DeConv2, DeConv3, UpConv, UpProj };
enum class Mode { Train, Eval };

const char* first_layer_name(FirstLayerKind k);
FirstLayerKind parse_first_layer(const std::string& s);
const char* decoder_name(DecoderKind k);
DecoderKind parse_decoder(const std::string& s);

struct ModelConfig {
    FirstLayerKind first_layer = FirstLayerKind::Conv;
    i64 input_channels = 4;
    std::vector<i64> encoder_widths = {16, 32, 64, 128};
    i64 encoder_block_count = 1;
    DecoderKind decoder_kind = DecoderKind::UpProj;
    i64 decoder_stages = 4;
    i64 out_h = 64;
    i64 out_w = 64;
    double chan_drop_p = 0.5;

    bool operator==(const ModelConfig&) const = default;
};

// Throws if the config cannot produce the declared output size, naming the
// stage that breaks (spatial collapse, channel exhaustion, decoder overshoot).
void validate_config(const ModelConfig& cfg);

constexpr double kBnEps = 1e-5;
constexpr double kBnStatMomentum = 0.1;

// Indices into a model's parameter / buffer stores.
struct ConvRef {
    i64 w = -1;
    i64 b = -1;  // -1 when the conv has no bias
};
struct BnRef {
    i64 gamma = -1, beta = -1;  // parameters
    i64 mean = -1, var = -1;    // buffers
};
struct BlockRef {
    ConvRef c1, c2, proj;
    BnRef bn1, bn2, bnp;
    bool project = false;
    i64 stride = 1;
};
struct DecoderRef {
    ConvRef a;   // DeConv kernel, UpConv 5x5, or UpProj main 5x5
    ConvRef m3;  // UpProj main 3x3
    ConvRef r;   // UpProj residual 5x5
};

template <typename T>
struct Model {
    struct Entry {
        std::string name;
        Tensor<T> value;
    };

    ModelConfig cfg;
    Mode mode = Mode::Train;
    std::vector<Entry> params;
    std::vector<Entry> buffers;

    ConvRef first_conv;      // Conv / ChanDrop kinds
    ConvRef first_dw, first_pw;  // DepthWise kind
    BnRef first_bn;
    std::vector<BlockRef> blocks;
    ConvRef bottleneck;
    std::vector<DecoderRef> decoders;
    ConvRef head;

    i64 param_count() const {
        i64 n = 0;
        for (const auto& p : params) n += p.value.numel();
        return n;
    }
};

// Deterministic in the rng state: same seed, same bits. Weights are
// fan-in-scaled Gaussians (std = sqrt(2/fan_in)); biases and beta zero,
// gamma one, running stats (0, 1). Returned model is in Train mode.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, Rng& rng);

template <typename T>
struct Forward {
    Var<T> out;
    std::vector<Var<T>> param_vars;  // aligned with Model::params
};

// Runs the network on a batch. Train mode updates batch-norm running stats
// in place and needs rng when the first layer is ChanDrop; Eval mode
// registers parameters as constants so nothing is recorded for backward.
template <typename T>
Forward<T> model_forward(Model<T>& m, Tape<T>& tape, const Tensor<T>& input, Rng* rng = nullptr);

// Standalone layer compositions, shared by the model and the gradient
// checks. Batch-norm in Train mode writes updated running stats back
// through the pointers; Eval mode reads them.
template <typename T>
struct BnUse {
    Var<T> gamma, beta;
    Tensor<T>* running_mean = nullptr;
    Tensor<T>* running_var = nullptr;
};

template <typename T>
Var<T> apply_bn(BnUse<T> bn, Var<T> x, Mode mode);

// Zeroes whole channels independently per batch element with probability
// 1-p, keeping survivors unscaled; identity in Eval mode.
template <typename T>
Var<T> channel_dropout(Var<T> x, double p, Mode mode, Rng* rng);

// Per-channel spatial conv followed by a 1x1 cross-channel conv.
template <typename T>
Var<T> depthwise_separable(Var<T> x, Var<T> spatial_w, Var<T> pointwise_w, i64 stride, i64 pad);

// unpool -> 5x5 conv (pad 2) -> ReLU.
template <typename T>
Var<T> up_conv(Var<T> x, Var<T> w5, Var<T> b5);

// unpool -> [5x5 conv, ReLU, 3x3 conv] + [5x5 conv] -> sum -> ReLU.
template <typename T>
Var<T> up_proj(Var<T> x, Var<T> main5_w, Var<T> main5_b, Var<T> main3_w, Var<T> main3_b,
               Var<T> res5_w, Var<T> res5_b);

// Two 3x3 conv+BN stages with ReLU between, skip connection (projected
// through a 1x1 conv + BN when given), ReLU after the sum.
template <typename T>
Var<T> residual_block(Var<T> x, Var<T> w1, BnUse<T> bn1, Var<T> w2, BnUse<T> bn2,
                      const Var<T>* proj_w, BnUse<T>* proj_bn, i64 stride, Mode mode);

}  // namespace s2d
