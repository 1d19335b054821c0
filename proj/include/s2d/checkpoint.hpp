#pragma once

// Checkpoint file format, little-endian throughout:
//   bytes 0-7   magic "S2DCKPT\0"
//   u32         format version (currently 1)
//   config      every TrainConfig field in declaration order (enums as u8,
//               integers as i64, reals as f64, seed as u64, model widths
//               length-prefixed)
//   i64         next epoch to run
//   u64[4]      trainer rng state
//   i64         tensor count
//   directory   per tensor: i64 name length, name bytes, u8 dtype
//               (0 = f32, 1 = f64), i64 shape[4]
//   payloads    raw element bytes in directory order
// Tensor names carry their role: "param.", "buffer." (batch-norm running
// stats), "opt." (momentum velocities, aligned with the parameter names).

#include <array>
#include <string>
#include <vector>

#include "s2d/trainer.hpp"

namespace s2d {

struct TensorRecord {
    std::string name;
    bool is_double = false;
    Tensor<float> f32;
    Tensor<double> f64;
};

struct CheckpointData {
    TrainConfig cfg;
    i64 epoch_next = 0;
    std::array<u64, 4> rng_state{};
    std::vector<TensorRecord> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointData& c);

// Distinct failures: bad magic, unsupported version, payload shorter than
// the directory promises.
CheckpointData load_checkpoint(const std::string& path);

// Gathers model parameters, buffers and optimizer velocities under their
// prefixed names.
template <typename T>
CheckpointData snapshot_training(const TrainConfig& cfg, const Model<T>& model,
                                 const std::vector<Tensor<T>>& velocity, i64 epoch_next,
                                 const Rng& rng);

template <typename T>
struct Restored {
    Model<T> model;
    std::vector<Tensor<T>> velocity;
};

// Rebuilds the model from the recorded config and overwrites every tensor
// from the checkpoint. Throws when a recorded name has no home, a shape
// disagrees, or the dtype does not match T.
template <typename T>
Restored<T> restore_model(const CheckpointData& c);

// A weightless checkpoint whose evaluation answer is the ground truth.
CheckpointData make_identity_checkpoint(const TrainConfig& cfg);

}  // namespace s2d
