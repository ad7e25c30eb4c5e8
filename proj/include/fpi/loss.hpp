#pragma once

#include "fpi/ops.hpp"
#include "fpi/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpi {

/// Binary supervision grid: positive cells around the ground-truth token.
struct LabelGrid {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> t;  // 0/1, row-major
    int gt_row = 0;               // cell nearest the ground truth
    int gt_col = 0;
    int region = 1;               // requested positive-region side R

    int positives() const {
        int n = 0;
        for (auto v : t) n += v;
        return n;
    }
};

struct LossConfig {
    double w_neg = 15.0;
    int region = 1;
    double log_eps = 1e-12;
    // Literal pseudocode counts the positive region as R^2 even when border
    // clipping removes cells; set true to count the surviving cells instead.
    bool count_clipped = false;

    bool operator==(const LossConfig&) const = default;
};

/// Map a ground-truth pixel to its positive cell block of side R.
/// Cell centers sit at (i + 0.5) * side / grid. R odd centers the block on
/// the nearest cell; R even uses the 2x2-style block around the point.
/// The region is clipped at the grid border.
inline LabelGrid build_label(double gt_x, double gt_y, int search_side_px, int grid, int region) {
    if (grid <= 0 || search_side_px <= 0) throw ShapeError("build_label: bad grid geometry");
    if (region <= 0) throw ShapeError("build_label: R must be positive");
    if (gt_x < 0 || gt_y < 0 || gt_x >= search_side_px || gt_y >= search_side_px)
        throw std::invalid_argument("build_label: ground truth outside the search map");

    const double cell = static_cast<double>(search_side_px) / grid;
    auto nearest_cell = [&](double v) {
        int i = static_cast<int>(std::floor(v / cell));
        return std::min(grid - 1, std::max(0, i));
    };
    // For even R the block straddles the point: its low corner is the cell
    // whose center lies at or below the coordinate.
    auto low_corner = [&](double v) {
        int i = static_cast<int>(std::floor(v / cell - 0.5));
        return i;
    };

    LabelGrid lg;
    lg.h = lg.w = grid;
    lg.region = region;
    lg.t.assign(static_cast<std::size_t>(grid) * grid, 0);
    lg.gt_row = nearest_cell(gt_y);
    lg.gt_col = nearest_cell(gt_x);

    int r0, c0;
    if (region % 2 == 1) {
        r0 = lg.gt_row - (region - 1) / 2;
        c0 = lg.gt_col - (region - 1) / 2;
    } else {
        r0 = low_corner(gt_y) - (region / 2 - 1);
        c0 = low_corner(gt_x) - (region / 2 - 1);
    }
    for (int r = r0; r < r0 + region; ++r) {
        if (r < 0 || r >= grid) continue;
        for (int c = c0; c < c0 + region; ++c) {
            if (c < 0 || c >= grid) continue;
            lg.t[static_cast<std::size_t>(r) * grid + c] = 1;
        }
    }
    if (lg.positives() == 0)
        throw std::logic_error("build_label: clipping removed every positive cell");
    return lg;
}

/// Per-cell weights of the balance loss, already normalized to sum 1.
/// Positive cells carry 1/N_pos each and negatives (1/N_neg)*w_neg each
/// before normalization, with N_pos = R^2 and N_neg = H*W - R^2 by default.
inline std::vector<double> balance_weights(const LabelGrid& label, const LossConfig& cfg) {
    const int hw = label.h * label.w;
    const int actual_pos = label.positives();
    if (actual_pos == hw) throw std::invalid_argument("balance_weights: label has no negatives");
    double n_pos = cfg.count_clipped ? actual_pos : static_cast<double>(label.region) * label.region;
    double n_neg = cfg.count_clipped ? (hw - actual_pos) : hw - n_pos;
    if (n_neg <= 0) throw std::invalid_argument("balance_weights: no negative mass");
    const double w_pos = 1.0 / n_pos;
    const double w_neg = (1.0 / n_neg) * cfg.w_neg;

    std::vector<double> w(static_cast<std::size_t>(hw));
    double total = 0.0;
    for (int i = 0; i < hw; ++i) {
        w[static_cast<std::size_t>(i)] = label.t[static_cast<std::size_t>(i)] ? w_pos : w_neg;
        total += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= total;
    return w;
}

/// Weighted binary cross-entropy over the heatmap grid. `map` is [H,W] or
/// [1,H,W] of raw scores; sigmoid and the log clamp happen inside, and the
/// result is differentiable with respect to map.
template <typename T>
Tensor<T> balance_loss(const Tensor<T>& map, const LabelGrid& label, const LossConfig& cfg) {
    Tensor<T> flat = map;
    if (map.ndim() == 3 && map.dim(0) == 1) flat = ops::reshape(map, {map.dim(1), map.dim(2)});
    if (flat.ndim() != 2 || flat.dim(0) != label.h || flat.dim(1) != label.w)
        throw ShapeError("balance_loss: map shape " + shape_str(map.shape()) +
                         " does not match label " + std::to_string(label.h) + "x" + std::to_string(label.w));
    if (label.positives() == 0) throw std::invalid_argument("balance_loss: label has no positives");

    std::vector<double> w = balance_weights(label, cfg);
    const std::size_t n = flat.numel();
    std::vector<T> w_pos_side(n), w_neg_side(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool pos = label.t[i] != 0;
        w_pos_side[i] = pos ? static_cast<T>(w[i]) : T(0);
        w_neg_side[i] = pos ? T(0) : static_cast<T>(w[i]);
    }

    Tensor<T> p = ops::sigmoid(flat);
    Tensor<T> q = ops::sigmoid(ops::scale(flat, -1.0));  // 1 - p, computed stably
    Tensor<T> pos_term = ops::cmul(ops::log_clamped(p, cfg.log_eps), std::move(w_pos_side));
    Tensor<T> neg_term = ops::cmul(ops::log_clamped(q, cfg.log_eps), std::move(w_neg_side));
    return ops::scale(ops::sum(ops::add(pos_term, neg_term)), -1.0);
}

}  // namespace fpi
