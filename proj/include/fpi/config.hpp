#pragma once

#include "fpi/encoder.hpp"
#include "fpi/geodata.hpp"
#include "fpi/loss.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fpi {

struct OptimConfig {
    double lr = 3e-4;
    double weight_decay = 5e-4;
    int epochs = 16;
    std::vector<int> lr_drop_epochs = {10, 14};
    int batch_size = 16;
    // Step-based schedule: when max_steps > 0 it overrides the epoch budget
    // and drops happen at lr_drop_steps instead.
    int max_steps = 0;
    std::vector<int> lr_drop_steps;

    bool operator==(const OptimConfig&) const = default;
};

/// Full experiment configuration. Serializes to JSON losslessly; partial
/// JSON documents overlay one of the two named presets.
struct RunConfig {
    std::string preset = "desk";

    int patch_size = 8;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    double mlp_ratio = 4.0;
    int query_side = 64;
    int search_side = 160;
    bool share_weights = false;
    bool normalize_logits = true;

    LossConfig loss;
    OptimConfig optim;
    AugmentConfig augment;

    std::array<double, 3> norm_mean = {0.5, 0.5, 0.5};
    std::array<double, 3> norm_std = {0.25, 0.25, 0.25};

    std::uint64_t seed = 0;

    static RunConfig preset_desk();
    static RunConfig preset_paper();
    static RunConfig from_preset(const std::string& name);

    /// Overlay a JSON document (as written by to_json_string, possibly
    /// partial) on top of its preset.
    static RunConfig from_json_string(const std::string& text);
    static RunConfig load_file(const std::string& path);
    std::string to_json_string() const;

    EncoderConfig query_encoder_cfg() const {
        return {patch_size, embed_dim, depth, heads, mlp_ratio, query_side};
    }
    EncoderConfig search_encoder_cfg() const {
        return {patch_size, embed_dim, depth, heads, mlp_ratio, search_side};
    }
    int search_grid() const { return search_side / patch_size; }

    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

}  // namespace fpi
