#include "s2d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "s2d/augment.hpp"
#include "s2d/checkpoint.hpp"
#include "s2d/optim.hpp"
#include "s2d/sampling.hpp"

namespace s2d {

void validate_train_config(const TrainConfig& cfg) {
    check(cfg.samples >= 0, "sample count must be >= 0");
    check(cfg.epochs >= 1, "epochs must be >= 1");
    check(cfg.batch_size >= 1, "batch size must be >= 1");
    check(cfg.lr0 >= 0, "learning rate must be >= 0");
    check(cfg.lr_decay > 0, "lr decay must be positive");
    check(cfg.lr_step >= 1, "lr step must be >= 1");
    check(cfg.weight_decay >= 0, "weight decay must be >= 0");
    check(cfg.momentum >= 0 && cfg.momentum < 1, "momentum must be in [0,1)");
    check(cfg.clamp_min > 0 && cfg.clamp_min < cfg.clamp_max,
          "evaluation clamp range must satisfy 0 < min < max");
    for (double s : cfg.norm_std) check(s > 0, "normalization std must be positive");
}

TrainConfig desk_preset() {
    TrainConfig cfg;
    cfg.batch_size = 4;
    return cfg;  // the ModelConfig defaults are the desk model
}

TrainConfig paper_preset() {
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.model.encoder_widths = {64, 128, 256, 512};
    cfg.model.encoder_block_count = 2;
    cfg.model.out_h = 228;
    cfg.model.out_w = 304;
    return cfg;
}

double lr_schedule(i64 epoch, const TrainConfig& cfg) {
    check(epoch >= 0, "epoch must be >= 0");
    return cfg.lr0 * std::pow(cfg.lr_decay, double(epoch / cfg.lr_step));
}

void write_log_header(std::ostream& out) {
    out << "epoch,lr,train_loss,rmse,rel,delta1,delta2,delta3\n";
}

void write_log_row(std::ostream& out, const EpochLog& row) {
    const auto old = out.precision(17);
    out << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.metrics.rmse << ','
        << row.metrics.rel << ',' << row.metrics.delta1 << ',' << row.metrics.delta2 << ','
        << row.metrics.delta3 << '\n';
    out.precision(old);
}

template <typename T>
DepthMap predict_dense(Model<T>& model, const RgbImage& rgb, const SparseDepth& sparse,
                       Problem problem, const std::array<double, 3>& mean,
                       const std::array<double, 3>& std) {
    RgbImage norm = rgb;
    if (problem != Problem::sd) {
        for (i64 c = 0; c < 3; ++c) {
            check(std[static_cast<size_t>(c)] > 0, "normalization std must be positive");
            for (i64 y = 0; y < norm.h; ++y)
                for (i64 x = 0; x < norm.w; ++x)
                    norm.at(c, y, x) = (norm.at(c, y, x) - mean[static_cast<size_t>(c)]) /
                                       std[static_cast<size_t>(c)];
        }
    }
    Tensor<T> input = make_input<T>(norm, sparse, problem);
    const Mode saved = model.mode;
    model.mode = Mode::Eval;
    Tape<T> tape;
    Forward<T> fw = model_forward(model, tape, input, nullptr);
    model.mode = saved;
    const Tensor<T>& out = fw.out.val();
    DepthMap pred(out.shape.h, out.shape.w);
    for (i64 y = 0; y < pred.h; ++y)
        for (i64 x = 0; x < pred.w; ++x) pred.at(y, x) = double(out.at(0, 0, y, x));
    return pred;
}

MetricsReport evaluate_with(const PredictFn& predict, const std::vector<Frame>& frames,
                            Problem problem, i64 samples, u64 seed, double clamp_min,
                            double clamp_max) {
    check(!frames.empty(), "evaluation needs at least one frame");
    check(clamp_min > 0 && clamp_min < clamp_max, "evaluation clamp range must satisfy 0 < min < max");
    MetricsAccumulator acc;
    for (size_t fi = 0; fi < frames.size(); ++fi) {
        const Frame& f = frames[fi];
        SparseDepth sparse(f.depth.h, f.depth.w);
        if (problem != Problem::RGB) {
            Rng rng(derive_seed(seed, kStreamEval, fi));
            sparse = bernoulli_sample(f.depth, samples, rng);
        }
        DepthMap pred = predict(f, sparse);
        check(pred.h == f.depth.h && pred.w == f.depth.w,
              "prediction for frame " + f.id + " has the wrong size");
        for (double& v : pred.data) v = std::clamp(v, clamp_min, clamp_max);
        acc.add_image(pred, f.depth, valid_mask(f.depth));
    }
    return acc.report();
}

template <typename T>
MetricsReport evaluate_model(Model<T>& model, const std::vector<Frame>& frames, Problem problem,
                             i64 samples, u64 seed, double clamp_min, double clamp_max,
                             const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    PredictFn fn = [&](const Frame& f, const SparseDepth& sp) {
        return predict_dense(model, f.rgb, sp, problem, mean, std);
    };
    return evaluate_with(fn, frames, problem, samples, seed, clamp_min, clamp_max);
}

namespace {

// The full loop. cfg arrives by value: the model output size snaps to the
// frame size and the normalization constants come from the manifest, and
// that completed config is what checkpoints echo.
template <typename T>
TrainOutcome run_train(TrainConfig cfg, const Manifest& manifest, const std::string& ckpt_path,
                       const std::string& resume_path, std::ostream* log_csv,
                       std::ostream* progress, Model<T>* keep_model) {
    check(cfg.oracle == OracleKind::None, "oracle configurations cannot be trained");
    std::vector<Frame> frames = read_all_frames(manifest);
    check(!frames.empty(), "training manifest lists no frames");
    const i64 h = frames[0].depth.h, w = frames[0].depth.w;
    for (const auto& f : frames)
        check(f.depth.h == h && f.depth.w == w && f.rgb.h == h && f.rgb.w == w,
              "frame " + f.id + " does not match the first frame's size");
    cfg.model.out_h = h;
    cfg.model.out_w = w;
    cfg.norm_mean = manifest.mean;
    cfg.norm_std = manifest.std;
    validate_train_config(cfg);
    validate_config(cfg.model);
    check(cfg.model.input_channels == problem_channels(cfg.problem),
          std::string("model expects ") + std::to_string(cfg.model.input_channels) +
              " input channels but problem " + problem_name(cfg.problem) + " provides " +
              std::to_string(problem_channels(cfg.problem)));

    Model<T> model;
    std::vector<Tensor<T>> velocity;
    Rng run_rng(derive_seed(cfg.seed, kStreamModelInit, 0));
    i64 epoch_start = 0;
    if (!resume_path.empty()) {
        CheckpointData c = load_checkpoint(resume_path);
        check(c.cfg == cfg, "resume checkpoint was written under a different configuration");
        Restored<T> r = restore_model<T>(c);
        model = std::move(r.model);
        velocity = std::move(r.velocity);
        run_rng.set_state(c.rng_state);
        epoch_start = c.epoch_next;
    } else {
        model = build_model<T>(cfg.model, run_rng);
        for (const auto& p : model.params) velocity.push_back(Tensor<T>::zeros(p.value.shape));
    }

    const i64 n_frames = static_cast<i64>(frames.size());
    const i64 channels = problem_channels(cfg.problem);
    TrainOutcome out;
    if (log_csv && epoch_start == 0) write_log_header(*log_csv);

    for (i64 epoch = epoch_start; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle, static_cast<u64>(epoch)));
        const auto batches = epoch_batches(n_frames, cfg.batch_size, shuffle_rng);
        Rng drop_rng(derive_seed(cfg.seed, kStreamChanDrop, static_cast<u64>(epoch)));
        const u64 aug_epoch = derive_seed(cfg.seed, kStreamAugment, static_cast<u64>(epoch));
        const u64 sparse_epoch = derive_seed(cfg.seed, kStreamSparse, static_cast<u64>(epoch));

        double loss_sum = 0;
        i64 seen = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            const i64 bn = static_cast<i64>(batch.size());
            Tensor<T> input({bn, channels, h, w});
            Tensor<T> gt({bn, 1, h, w});
            Tensor<T> mask({bn, 1, h, w});
            for (i64 k = 0; k < bn; ++k) {
                const i64 idx = batch[static_cast<size_t>(k)];
                AugmentParams ap = identity_augment_params(h, w);
                if (cfg.augment) {
                    Rng aug_rng(derive_seed(aug_epoch, static_cast<u64>(idx)));
                    ap = draw_augment_params(h, w, aug_rng);
                }
                const Frame& f = frames[static_cast<size_t>(idx)];
                Augmented aug = augment(f.rgb, f.depth, ap, cfg.norm_mean, cfg.norm_std);
                SparseDepth sparse(h, w);
                if (cfg.problem != Problem::RGB) {
                    Rng sp_rng(derive_seed(sparse_epoch, static_cast<u64>(idx)));
                    sparse = bernoulli_sample(aug.depth, cfg.samples, sp_rng);
                }
                Tensor<T> one = make_input<T>(aug.rgb, sparse, cfg.problem);
                std::copy(one.data.begin(), one.data.end(),
                          input.data.begin() + static_cast<std::ptrdiff_t>(k * channels * h * w));
                for (i64 y = 0; y < h; ++y)
                    for (i64 x = 0; x < w; ++x) {
                        const double d = aug.depth.at(y, x);
                        gt.at(k, 0, y, x) = static_cast<T>(d);
                        mask.at(k, 0, y, x) = d > 0 ? T(1) : T(0);
                    }
            }
            Tape<T> tape;
            Forward<T> fw = model_forward(model, tape, input, &drop_rng);
            Var<T> loss = make_loss(cfg.loss, fw.out, gt, mask);
            const double loss_val = double(loss.val().data[0]);
            if (!std::isfinite(loss_val))
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(bi) + ": loss is not finite");
            Grads<T> grads = tape.backward(loss);
            std::vector<Tensor<T>*> pptr;
            std::vector<Tensor<T>> glist;
            pptr.reserve(model.params.size());
            glist.reserve(model.params.size());
            for (size_t i = 0; i < model.params.size(); ++i) {
                pptr.push_back(&model.params[i].value);
                glist.push_back(grads.at(fw.param_vars[i].id));
            }
            sgd_step(pptr, glist, velocity, lr, cfg.weight_decay, cfg.momentum);
            loss_sum += loss_val * double(bn);
            seen += bn;
        }

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / double(seen);
        row.metrics = evaluate_model(model, frames, cfg.problem, cfg.samples, cfg.seed,
                                     cfg.clamp_min, cfg.clamp_max, cfg.norm_mean, cfg.norm_std);
        out.log.push_back(row);
        if (log_csv) write_log_row(*log_csv, row);
        if (progress)
            *progress << "epoch " << epoch << "  lr " << lr << "  loss " << row.train_loss
                      << "  rmse " << row.metrics.rmse << '\n';
        if (!ckpt_path.empty())
            save_checkpoint(ckpt_path, snapshot_training(cfg, model, velocity, epoch + 1, run_rng));
    }

    if (keep_model) *keep_model = std::move(model);
    return out;
}

}  // namespace

TrainOutcome train(const TrainConfig& cfg, const Manifest& manifest,
                   const std::string& checkpoint_path, const std::string& resume_path,
                   std::ostream* log_csv, std::ostream* progress) {
    if (cfg.double_precision)
        return run_train<double>(cfg, manifest, checkpoint_path, resume_path, log_csv, progress,
                                 nullptr);
    return run_train<float>(cfg, manifest, checkpoint_path, resume_path, log_csv, progress,
                            nullptr);
}

namespace {

template <typename T>
MetricsReport train_then_score(const TrainConfig& cfg, const Manifest& train_manifest,
                               const std::vector<Frame>& test_frames) {
    Model<T> model;
    run_train<T>(cfg, train_manifest, "", "", nullptr, nullptr, &model);
    return evaluate_model(model, test_frames, cfg.problem, cfg.samples, cfg.seed, cfg.clamp_min,
                          cfg.clamp_max, train_manifest.mean, train_manifest.std);
}

}  // namespace

std::vector<SweepRow> sweep(const TrainConfig& base, const std::vector<Problem>& problems,
                            const std::vector<i64>& sample_counts, const std::vector<u64>& seeds,
                            const Manifest& train_manifest, const Manifest& test_manifest,
                            std::ostream* progress) {
    check(!problems.empty(), "sweep needs at least one problem");
    check(!sample_counts.empty(), "sweep needs at least one sample count");
    check(!seeds.empty(), "sweep needs at least one seed");

    const std::vector<Frame> test_frames = read_all_frames(test_manifest);
    check(!test_frames.empty(), "test manifest lists no frames");
    i64 min_valid = test_frames[0].depth.valid_count();
    for (const auto& f : test_frames) min_valid = std::min(min_valid, f.depth.valid_count());
    for (const auto& f : read_all_frames(train_manifest))
        min_valid = std::min(min_valid, f.depth.valid_count());
    for (i64 m : sample_counts)
        check(m >= 0 && m <= min_valid,
              "sample count " + std::to_string(m) + " exceeds the smallest valid-pixel count " +
                  std::to_string(min_valid));

    std::vector<SweepRow> rows;
    for (Problem problem : problems) {
        const std::vector<i64> ms =
            problem == Problem::RGB ? std::vector<i64>{0} : sample_counts;
        for (i64 m : ms) {
            SweepRow row;
            row.problem = problem;
            row.m = m;
            for (u64 seed : seeds) {
                TrainConfig cfg = base;
                cfg.problem = problem;
                cfg.samples = m;
                cfg.seed = seed;
                cfg.model.input_channels = problem_channels(problem);
                if (progress)
                    *progress << "sweep: " << problem_name(problem) << " m=" << m
                              << " seed=" << seed << '\n';
                const MetricsReport r =
                    cfg.double_precision
                        ? train_then_score<double>(cfg, train_manifest, test_frames)
                        : train_then_score<float>(cfg, train_manifest, test_frames);
                row.metrics.rmse += r.rmse;
                row.metrics.rel += r.rel;
                row.metrics.delta1 += r.delta1;
                row.metrics.delta2 += r.delta2;
                row.metrics.delta3 += r.delta3;
                row.metrics.pixel_count += r.pixel_count;
            }
            const double k = double(seeds.size());
            row.metrics.rmse /= k;
            row.metrics.rel /= k;
            row.metrics.delta1 /= k;
            row.metrics.delta2 /= k;
            row.metrics.delta3 /= k;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "problem,m,rmse,rel,delta1,delta2,delta3\n";
    const auto old = out.precision(9);
    for (const auto& r : rows)
        out << problem_name(r.problem) << ',' << r.m << ',' << r.metrics.rmse << ','
            << r.metrics.rel << ',' << r.metrics.delta1 << ',' << r.metrics.delta2 << ','
            << r.metrics.delta3 << '\n';
    out.precision(old);
}

template DepthMap predict_dense<float>(Model<float>&, const RgbImage&, const SparseDepth&,
                                       Problem, const std::array<double, 3>&,
                                       const std::array<double, 3>&);
template DepthMap predict_dense<double>(Model<double>&, const RgbImage&, const SparseDepth&,
                                        Problem, const std::array<double, 3>&,
                                        const std::array<double, 3>&);
template MetricsReport evaluate_model<float>(Model<float>&, const std::vector<Frame>&, Problem,
                                             i64, u64, double, double,
                                             const std::array<double, 3>&,
                                             const std::array<double, 3>&);
template MetricsReport evaluate_model<double>(Model<double>&, const std::vector<Frame>&, Problem,
                                              i64, u64, double, double,
                                              const std::array<double, 3>&,
                                              const std::array<double, 3>&);

}  // namespace s2d
