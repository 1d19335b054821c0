#include "s2d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace s2d {

namespace {

constexpr char kMagic[8] = {'S', '2', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr u32 kVersion = 1;

void put_u64(std::string& out, u64 v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, u32 v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u8(std::string& out, u8 v) { out.push_back(static_cast<char>(v)); }
void put_i64(std::string& out, i64 v) { put_u64(out, static_cast<u64>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<u64>(v)); }
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<u32>(v)); }

// Sequential reader over the whole file, so "ran out of bytes" surfaces
// as one consistent error wherever it happens.
struct Reader {
    std::string buf;
    size_t at = 0;
    std::string path;
    std::string what = "header";

    void need(size_t n) {
        if (at + n > buf.size())
            throw std::runtime_error("checkpoint " + path + ": truncated " + what +
                                     " (file ends " + std::to_string(at + n - buf.size()) +
                                     " bytes early)");
    }
    u64 get_u64() {
        need(8);
        u64 v = 0;
        for (int i = 0; i < 8; ++i) v |= u64(static_cast<unsigned char>(buf[at + i])) << (8 * i);
        at += 8;
        return v;
    }
    u32 get_u32() {
        need(4);
        u32 v = 0;
        for (int i = 0; i < 4; ++i) v |= u32(static_cast<unsigned char>(buf[at + i])) << (8 * i);
        at += 4;
        return v;
    }
    u8 get_u8() {
        need(1);
        return static_cast<u8>(buf[at++]);
    }
    i64 get_i64() { return static_cast<i64>(get_u64()); }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    float get_f32() { return std::bit_cast<float>(get_u32()); }
    std::string get_bytes(size_t n) {
        need(n);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

u8 enum_byte(i64 v) { return static_cast<u8>(v); }

template <typename E>
E decode_enum(u8 v, u8 max, const char* what) {
    if (v > max)
        throw std::runtime_error(std::string("checkpoint: invalid ") + what + " code " +
                                 std::to_string(v));
    return static_cast<E>(v);
}

void put_config(std::string& out, const TrainConfig& c) {
    put_u8(out, enum_byte(static_cast<i64>(c.problem)));
    put_i64(out, c.samples);
    put_i64(out, c.epochs);
    put_i64(out, c.batch_size);
    put_f64(out, c.lr0);
    put_f64(out, c.lr_decay);
    put_i64(out, c.lr_step);
    put_f64(out, c.weight_decay);
    put_f64(out, c.momentum);
    put_u64(out, c.seed);
    put_u8(out, enum_byte(static_cast<i64>(c.loss)));
    put_u8(out, c.augment ? 1 : 0);
    put_u8(out, enum_byte(static_cast<i64>(c.model.first_layer)));
    put_i64(out, c.model.input_channels);
    put_i64(out, static_cast<i64>(c.model.encoder_widths.size()));
    for (i64 w : c.model.encoder_widths) put_i64(out, w);
    put_i64(out, c.model.encoder_block_count);
    put_u8(out, enum_byte(static_cast<i64>(c.model.decoder_kind)));
    put_i64(out, c.model.decoder_stages);
    put_i64(out, c.model.out_h);
    put_i64(out, c.model.out_w);
    put_f64(out, c.model.chan_drop_p);
    put_u8(out, c.double_precision ? 1 : 0);
    put_u8(out, enum_byte(static_cast<i64>(c.oracle)));
    put_f64(out, c.clamp_min);
    put_f64(out, c.clamp_max);
    for (double v : c.norm_mean) put_f64(out, v);
    for (double v : c.norm_std) put_f64(out, v);
}

TrainConfig get_config(Reader& r) {
    TrainConfig c;
    c.problem = decode_enum<Problem>(r.get_u8(), 2, "problem");
    c.samples = r.get_i64();
    c.epochs = r.get_i64();
    c.batch_size = r.get_i64();
    c.lr0 = r.get_f64();
    c.lr_decay = r.get_f64();
    c.lr_step = r.get_i64();
    c.weight_decay = r.get_f64();
    c.momentum = r.get_f64();
    c.seed = r.get_u64();
    c.loss = decode_enum<LossKind>(r.get_u8(), 2, "loss");
    c.augment = r.get_u8() != 0;
    c.model.first_layer = decode_enum<FirstLayerKind>(r.get_u8(), 2, "first layer");
    c.model.input_channels = r.get_i64();
    const i64 nw = r.get_i64();
    check(nw >= 1 && nw <= 64, "checkpoint: implausible encoder width count");
    c.model.encoder_widths.clear();
    for (i64 i = 0; i < nw; ++i) c.model.encoder_widths.push_back(r.get_i64());
    c.model.encoder_block_count = r.get_i64();
    c.model.decoder_kind = decode_enum<DecoderKind>(r.get_u8(), 3, "decoder");
    c.model.decoder_stages = r.get_i64();
    c.model.out_h = r.get_i64();
    c.model.out_w = r.get_i64();
    c.model.chan_drop_p = r.get_f64();
    c.double_precision = r.get_u8() != 0;
    c.oracle = decode_enum<OracleKind>(r.get_u8(), 1, "oracle");
    c.clamp_min = r.get_f64();
    c.clamp_max = r.get_f64();
    for (double& v : c.norm_mean) v = r.get_f64();
    for (double& v : c.norm_std) v = r.get_f64();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& c) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, kVersion);
    put_config(out, c.cfg);
    put_i64(out, c.epoch_next);
    for (u64 s : c.rng_state) put_u64(out, s);
    put_i64(out, static_cast<i64>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        put_i64(out, static_cast<i64>(t.name.size()));
        out.append(t.name);
        put_u8(out, t.is_double ? 1 : 0);
        const Shape4 s = t.is_double ? t.f64.shape : t.f32.shape;
        put_i64(out, s.n);
        put_i64(out, s.c);
        put_i64(out, s.h);
        put_i64(out, s.w);
    }
    for (const auto& t : c.tensors) {
        if (t.is_double)
            for (double v : t.f64.data) put_f64(out, v);
        else
            for (float v : t.f32.data) put_f32(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    check(bool(f), "failed writing " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    Reader r;
    r.path = path;
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    const std::string magic = r.get_bytes(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0)
        throw std::runtime_error(path + " is not a checkpoint file (bad magic)");
    const u32 version = r.get_u32();
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + " has format version " +
                                 std::to_string(version) + "; this build reads version " +
                                 std::to_string(kVersion));

    CheckpointData c;
    c.cfg = get_config(r);
    c.epoch_next = r.get_i64();
    for (u64& s : c.rng_state) s = r.get_u64();

    const i64 count = r.get_i64();
    check(count >= 0, "checkpoint: negative tensor count");
    c.tensors.resize(static_cast<size_t>(count));
    for (auto& t : c.tensors) {
        const i64 name_len = r.get_i64();
        check(name_len >= 0 && name_len <= 4096, "checkpoint: implausible tensor name length");
        t.name = r.get_bytes(static_cast<size_t>(name_len));
        t.is_double = r.get_u8() != 0;
        Shape4 s{r.get_i64(), r.get_i64(), r.get_i64(), r.get_i64()};
        if (t.is_double)
            t.f64 = Tensor<double>(s);
        else
            t.f32 = Tensor<float>(s);
    }
    r.what = "payload (directory promises more elements than the file holds)";
    for (auto& t : c.tensors) {
        if (t.is_double)
            for (double& v : t.f64.data) v = r.get_f64();
        else
            for (float& v : t.f32.data) v = r.get_f32();
    }
    return c;
}

template <typename T>
CheckpointData snapshot_training(const TrainConfig& cfg, const Model<T>& model,
                                 const std::vector<Tensor<T>>& velocity, i64 epoch_next,
                                 const Rng& rng) {
    check(velocity.size() == model.params.size(),
          "snapshot: velocity count does not match parameter count");
    constexpr bool is_d = std::is_same_v<T, double>;
    CheckpointData c;
    c.cfg = cfg;
    c.epoch_next = epoch_next;
    c.rng_state = rng.state();
    auto push = [&](const std::string& name, const Tensor<T>& t) {
        TensorRecord rec;
        rec.name = name;
        rec.is_double = is_d;
        if constexpr (is_d)
            rec.f64 = t;
        else
            rec.f32 = t;
        c.tensors.push_back(std::move(rec));
    };
    for (const auto& p : model.params) push("param." + p.name, p.value);
    for (const auto& b : model.buffers) push("buffer." + b.name, b.value);
    for (size_t i = 0; i < velocity.size(); ++i) push("opt." + model.params[i].name, velocity[i]);
    return c;
}

template <typename T>
Restored<T> restore_model(const CheckpointData& c) {
    constexpr bool is_d = std::is_same_v<T, double>;
    check(c.cfg.double_precision == is_d,
          "checkpoint precision does not match the requested element type");
    check(c.cfg.oracle == OracleKind::None, "oracle checkpoints hold no model to restore");

    Restored<T> r;
    Rng init_rng(derive_seed(c.cfg.seed, kStreamModelInit, 0));
    r.model = build_model<T>(c.cfg.model, init_rng);
    for (const auto& p : r.model.params) r.velocity.push_back(Tensor<T>::zeros(p.value.shape));

    auto fill = [&](const std::string& name, const TensorRecord& rec) -> bool {
        const Tensor<T>& src = [&]() -> const Tensor<T>& {
            if constexpr (is_d)
                return rec.f64;
            else
                return rec.f32;
        }();
        auto assign = [&](Tensor<T>& dst) {
            check(dst.shape == src.shape, "checkpoint tensor " + rec.name + " has shape " +
                                              src.shape.str() + " but the model expects " +
                                              dst.shape.str());
            dst.data = src.data;
        };
        for (size_t i = 0; i < r.model.params.size(); ++i)
            if (r.model.params[i].name == name && rec.name.rfind("param.", 0) == 0) {
                assign(r.model.params[i].value);
                return true;
            }
        for (auto& b : r.model.buffers)
            if (b.name == name && rec.name.rfind("buffer.", 0) == 0) {
                assign(b.value);
                return true;
            }
        for (size_t i = 0; i < r.model.params.size(); ++i)
            if (r.model.params[i].name == name && rec.name.rfind("opt.", 0) == 0) {
                assign(r.velocity[i]);
                return true;
            }
        return false;
    };

    size_t filled = 0;
    for (const auto& rec : c.tensors) {
        check(rec.is_double == is_d,
              "checkpoint tensor " + rec.name + " has a different precision than the file claims");
        const size_t dot = rec.name.find('.');
        check(dot != std::string::npos, "checkpoint tensor " + rec.name + " lacks a role prefix");
        if (!fill(rec.name.substr(dot + 1), rec))
            throw std::runtime_error("checkpoint tensor " + rec.name +
                                     " has no home in the rebuilt model");
        ++filled;
    }
    const size_t expected = 2 * r.model.params.size() + r.model.buffers.size();
    check(filled == expected, "checkpoint holds " + std::to_string(filled) + " tensors; the model needs " +
                                  std::to_string(expected));
    return r;
}

CheckpointData make_identity_checkpoint(const TrainConfig& cfg) {
    CheckpointData c;
    c.cfg = cfg;
    c.cfg.oracle = OracleKind::Identity;
    c.epoch_next = 0;
    c.rng_state = Rng(derive_seed(cfg.seed, kStreamModelInit, 0)).state();
    return c;
}

template CheckpointData snapshot_training<float>(const TrainConfig&, const Model<float>&,
                                                 const std::vector<Tensor<float>>&, i64,
                                                 const Rng&);
template CheckpointData snapshot_training<double>(const TrainConfig&, const Model<double>&,
                                                  const std::vector<Tensor<double>>&, i64,
                                                  const Rng&);
template Restored<float> restore_model<float>(const CheckpointData&);
template Restored<double> restore_model<double>(const CheckpointData&);

}  // namespace s2d
