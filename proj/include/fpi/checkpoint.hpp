#pragma once

#include "fpi/config.hpp"
#include "fpi/fusion.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fpi {

/// On-disk model snapshot. Layout:
///   bytes 0..3   magic "FPI1"
///   bytes 4..7   header length, 32-bit little-endian unsigned
///   header       JSON: config snapshot, named parameter manifest with
///                shapes, training step
///   payload      32-bit little-endian floats, concatenated in manifest order
struct CheckpointData {
    RunConfig config;
    long step = 0;
    std::vector<std::string> names;
    std::vector<Shape> shapes;
    std::vector<std::vector<float>> values;
};

void save_checkpoint(const std::string& path, const RunConfig& config, long step,
                     const std::vector<std::pair<std::string, Tensor<float>>>& params);

CheckpointData load_checkpoint(const std::string& path);

/// Build a model from the checkpoint's own config snapshot and restore its
/// parameters bit-exactly.
Model<float> model_from_checkpoint(const CheckpointData& ckpt);

/// Copy checkpoint values into an existing model; names and shapes must
/// match the model's manifest exactly.
void apply_checkpoint(Model<float>& model, const CheckpointData& ckpt);

}  // namespace fpi
