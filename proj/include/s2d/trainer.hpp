#pragma once

// Training and evaluation loops. Every random choice comes from a stream
// seeded by (run seed, purpose, epoch, frame), never from shared mutable
// rng state, so runs are bit-reproducible and an epoch-boundary resume
// continues exactly where the interrupted run would have gone.

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "s2d/data_synth.hpp"
#include "s2d/layers.hpp"
#include "s2d/losses.hpp"
#include "s2d/metrics.hpp"

namespace s2d {

// Stream ids for derive_seed(seed, stream, index).
constexpr u64 kStreamModelInit = 1;
constexpr u64 kStreamShuffle = 2;
constexpr u64 kStreamAugment = 3;
constexpr u64 kStreamSparse = 4;
constexpr u64 kStreamEval = 5;
constexpr u64 kStreamChanDrop = 6;

// A checkpoint may carry a shortcut instead of real weights: Identity
// answers with the ground truth, which pins down the zero point of every
// metric without training anything.
enum class OracleKind { None, Identity };

struct TrainConfig {
    Problem problem = Problem::RGBd;
    i64 samples = 100;  // target sparse-input count m; ignored for RGB
    i64 epochs = 20;
    i64 batch_size = 16;
    double lr0 = 0.01;
    double lr_decay = 0.2;
    i64 lr_step = 5;  // epochs between decays
    double weight_decay = 1e-4;
    double momentum = 0.9;
    u64 seed = 1;
    LossKind loss = LossKind::L1;
    bool augment = true;  // random scale/rotate/jitter/flip per frame per epoch
    ModelConfig model;
    bool double_precision = false;
    OracleKind oracle = OracleKind::None;
    double clamp_min = 0.1;  // meters; applied to predictions at evaluation
    double clamp_max = 100.0;
    std::array<double, 3> norm_mean{0, 0, 0};  // filled from the manifest by train()
    std::array<double, 3> norm_std{1, 1, 1};

    bool operator==(const TrainConfig&) const = default;
};

// Throws on nonsensical settings. lr0 = 0 is allowed (freezes parameters,
// useful as a control); everything else must be positive where stated.
void validate_train_config(const TrainConfig& cfg);

TrainConfig desk_preset();   // batch 4, the small default model
TrainConfig paper_preset();  // batch 16, wide encoder, 228x304 frames

// lr0 * decay^floor(epoch / lr_step).
double lr_schedule(i64 epoch, const TrainConfig& cfg);

struct EpochLog {
    i64 epoch = 0;
    double lr = 0;
    double train_loss = 0;
    MetricsReport metrics;  // on the training frames, evaluation protocol
};

struct TrainOutcome {
    std::vector<EpochLog> log;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const EpochLog& row);

// Runs the full loop over the manifest's frames. Writes a checkpoint
// after every epoch when checkpoint_path is nonempty; resumes from
// resume_path when nonempty (config must match). log_csv receives one
// header plus one row per epoch; progress gets human-readable lines.
// Aborts with epoch/batch coordinates if the loss goes non-finite.
TrainOutcome train(const TrainConfig& cfg, const Manifest& manifest,
                   const std::string& checkpoint_path, const std::string& resume_path = "",
                   std::ostream* log_csv = nullptr, std::ostream* progress = nullptr);

// One frame through the network in Eval mode: normalize the color
// channels, stack the problem's modalities, forward, read the dense map.
// The model's mode is restored afterwards. No clamping here.
template <typename T>
DepthMap predict_dense(Model<T>& model, const RgbImage& rgb, const SparseDepth& sparse,
                       Problem problem, const std::array<double, 3>& mean,
                       const std::array<double, 3>& std);

// Any dense predictor: frame plus its sampled sparse input to a depth map.
using PredictFn = std::function<DepthMap(const Frame&, const SparseDepth&)>;

// Evaluation protocol: per frame, sample the sparse input from a stream
// keyed by (seed, frame index), predict, clamp to [clamp_min, clamp_max],
// score against valid ground-truth pixels, pool across frames.
MetricsReport evaluate_with(const PredictFn& predict, const std::vector<Frame>& frames,
                            Problem problem, i64 samples, u64 seed, double clamp_min,
                            double clamp_max);

template <typename T>
MetricsReport evaluate_model(Model<T>& model, const std::vector<Frame>& frames, Problem problem,
                             i64 samples, u64 seed, double clamp_min, double clamp_max,
                             const std::array<double, 3>& mean, const std::array<double, 3>& std);

struct SweepRow {
    Problem problem = Problem::RGB;
    i64 m = 0;
    MetricsReport metrics;  // averaged over seeds, pixel_count summed
};

// Trains one model per (problem, sample count, seed) on the train
// manifest and scores it on the test frames; rows average the seeds.
// RGB ignores the sample counts and contributes a single m = 0 row.
std::vector<SweepRow> sweep(const TrainConfig& base, const std::vector<Problem>& problems,
                            const std::vector<i64>& sample_counts, const std::vector<u64>& seeds,
                            const Manifest& train_manifest, const Manifest& test_manifest,
                            std::ostream* progress = nullptr);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace s2d
