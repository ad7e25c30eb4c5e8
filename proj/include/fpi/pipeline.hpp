#pragma once

#include "fpi/checkpoint.hpp"
#include "fpi/config.hpp"
#include "fpi/fusion.hpp"
#include "fpi/geodata.hpp"
#include "fpi/image.hpp"
#include "fpi/metrics.hpp"
#include "fpi/ops.hpp"

#include <array>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace fpi {

/// Image -> model input: scale to [0,1], resize to `side`, standardize with
/// the configured per-channel statistics.
template <typename T>
Tensor<T> preprocess_image(const ImageU8& img, int side, const std::array<double, 3>& mean,
                           const std::array<double, 3>& stdev) {
    Tensor<T> t = image_to_tensor<T>(img);
    if (img.width != side || img.height != side) t = ops::bilinear_resize(t, side, side);
    auto v = t.value();
    std::size_t plane = static_cast<std::size_t>(side) * side;
    for (int c = 0; c < 3; ++c) {
        T m = static_cast<T>(mean[static_cast<std::size_t>(c)]);
        T s = static_cast<T>(stdev[static_cast<std::size_t>(c)]);
        T* p = v.data() + plane * static_cast<std::size_t>(c);
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) / s;
    }
    return t;
}

/// Per-epoch training log entry.
struct EpochStats {
    int epoch = 0;
    int steps_done = 0;
    double loss_mean = 0.0;
    double rds_mean = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    long total_steps = 0;
    double final_loss = 0.0;
};

/// Full training loop: random-crop augmentation, heatmap forward, balance
/// loss, backward, AdamW, stepped/epoch LR schedule. Writes a checkpoint per
/// epoch (and at the end) to ckpt_path, and appends per-epoch rows to
/// log_csv_path when non-empty. Deterministic for a fixed config.
TrainResult train_model(const RunConfig& cfg, const std::string& data_root,
                        const std::string& ckpt_path, const std::string& log_csv_path,
                        std::ostream* progress);

/// Run the model over every (pair, scale) sample of a test split and score
/// predictions in source-crop coordinates.
std::vector<EvalRecord> evaluate_model(const Model<float>& model, const RunConfig& cfg,
                                       const Dataset& dataset, int threads);

/// Per-pair retrieval-vs-direct comparison row.
struct CompareRow {
    std::string pair_id;
    int scale_bucket = 0;
    double rds_fpi = 0.0;
    double rds_retrieval = 0.0;
    double time_fpi_ms = 0.0;
    double time_retrieval_ms = 0.0;
};

std::vector<CompareRow> compare_retrieval(const Model<float>& model, const RunConfig& cfg,
                                          const Dataset& dataset, int threads);

std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace fpi
