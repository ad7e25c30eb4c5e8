#pragma once

#include "fpi/encoder.hpp"
#include "fpi/image.hpp"
#include "fpi/ops.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace fpi {

/// Raw correlation scores (pre-sigmoid) over the search grid, plus the
/// geometry needed to map an argmax back to search-map pixels.
template <typename T>
struct Heatmap {
    Tensor<T> grid;                  // [1, Gh, Gw]
    int search_side_px = 0;
    // Even query grids correlate with the query centre on a cell boundary;
    // decode shifts the prediction by this many cells to compensate.
    double center_offset_cells = 0.0;
    Tensor<T> upsampled;             // [1, S, S], filled by decode()
};

struct Prediction {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
};

/// Sliding dot-product of the query feature grid over the search feature
/// grid, summed over channels. padded=true zero-pads so the output keeps the
/// search grid's size (floor((K-1)/2) left/top, ceil right/bottom);
/// padded=false yields (G-K+1) per side.
template <typename T>
Heatmap<T> correlate(const FeatureMap<T>& search, const FeatureMap<T>& query, bool padded,
                     int search_side_px) {
    if (search.channels != query.channels)
        throw ShapeError("correlate: channel mismatch " + std::to_string(search.channels) +
                         " vs " + std::to_string(query.channels));
    int g = search.grid_h, k = query.grid_h;
    if (query.grid_h != query.grid_w || search.grid_h != search.grid_w)
        throw ShapeError("correlate: expects square grids");
    if (k > g) throw ShapeError("correlate: query grid larger than search grid");

    Tensor<T> kernel = ops::reshape(query.values, {1, query.channels, k, k});
    Tensor<T> input = search.values;
    if (padded) {
        int lo = (k - 1) / 2, hi = k / 2;
        input = ops::pad2d(input, lo, hi, lo, hi);
    }
    Heatmap<T> heat;
    heat.grid = ops::conv2d(input, kernel, 1, 0);
    heat.search_side_px = search_side_px;
    heat.center_offset_cells = (k % 2 == 0) ? 0.5 : 0.0;
    return heat;
}

namespace detail {

/// Separable [0.25, 0.5, 0.25] smoothing with edge replication. The 3-tap
/// window keeps a flat map exactly flat, so argmax tie-breaking still sees
/// every cell as equal.
template <typename T>
void smooth3x3_replicate(std::vector<T>& buf, int h, int w) {
    std::vector<T> tmp(buf.size());
    for (int y = 0; y < h; ++y) {
        const T* row = buf.data() + static_cast<std::size_t>(y) * w;
        T* out = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            T l = row[x > 0 ? x - 1 : 0];
            T r = row[x < w - 1 ? x + 1 : w - 1];
            out[x] = static_cast<T>(0.25) * l + static_cast<T>(0.5) * row[x] + static_cast<T>(0.25) * r;
        }
    }
    for (int y = 0; y < h; ++y) {
        const T* up = tmp.data() + static_cast<std::size_t>(y > 0 ? y - 1 : 0) * w;
        const T* mid = tmp.data() + static_cast<std::size_t>(y) * w;
        const T* dn = tmp.data() + static_cast<std::size_t>(y < h - 1 ? y + 1 : h - 1) * w;
        T* out = buf.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x)
            out[x] = static_cast<T>(0.25) * up[x] + static_cast<T>(0.5) * mid[x] + static_cast<T>(0.25) * dn[x];
    }
}

/// Row-major argmax with strict comparison: ties go to the smallest row,
/// then the smallest column.
template <typename T>
std::pair<int, int> argmax_rc(const std::vector<T>& buf, int h, int w) {
    int best = 0;
    for (int i = 1; i < h * w; ++i)
        if (buf[static_cast<std::size_t>(i)] > buf[static_cast<std::size_t>(best)]) best = i;
    return {best / w, best % w};
}

}  // namespace detail

/// Inference-only peak decoding: upsample the score grid to the search-map
/// pixel scale (bilinear, align-corners), smooth with the 3x3 window, take
/// the argmax. Fills heat.upsampled with the smoothed map.
template <typename T>
Prediction decode(Heatmap<T>& heat) {
    if (!heat.grid.defined()) throw std::runtime_error("decode: heatmap grid not populated");
    int s = heat.search_side_px;
    int gh = heat.grid.dim(1), gw = heat.grid.dim(2);
    Tensor<T> up = ops::bilinear_resize(heat.grid.detach(), s, s);
    std::vector<T> buf(up.value().begin(), up.value().end());
    detail::smooth3x3_replicate(buf, s, s);
    auto [r, c] = detail::argmax_rc(buf, s, s);
    T score = buf[static_cast<std::size_t>(r) * s + c];
    heat.upsampled = Tensor<T>::from({1, s, s}, std::move(buf));

    double off_x = heat.center_offset_cells * static_cast<double>(s) / gw;
    double off_y = heat.center_offset_cells * static_cast<double>(s) / gh;
    Prediction p;
    p.x = std::min(static_cast<double>(s) - 1.0, std::max(0.0, c + off_x));
    p.y = std::min(static_cast<double>(s) - 1.0, std::max(0.0, r + off_y));
    p.score = static_cast<double>(score);
    return p;
}

/// Export a heatmap as min-max normalized 8-bit grayscale, resized to the
/// requested output dimensions.
template <typename T>
void write_heatmap_png(Heatmap<T>& heat, const std::string& path, int out_w, int out_h) {
    if (!heat.upsampled.defined()) decode(heat);
    Tensor<T> vis = heat.upsampled;
    if (out_w != heat.search_side_px || out_h != heat.search_side_px)
        vis = ops::bilinear_resize(vis, out_h, out_w);
    write_png(path, grayscale_from_map(vis));
}

/// Query/search siamese model: twin encoders, padded correlation head.
template <typename T>
struct Model {
    EncoderWeights<T> query_enc;
    EncoderWeights<T> search_enc;
    bool shared = false;
    // Constant factor on the raw correlation so initial logits are O(1)
    // regardless of feature dimensionality. 1.0 disables.
    double logit_scale = 1.0;

    static Model init(const EncoderConfig& query_cfg, const EncoderConfig& search_cfg,
                      bool share, bool normalize_logits, std::uint64_t seed) {
        Model m;
        Pcg32 rng(seed);
        auto twin = make_twin<T>(query_cfg, search_cfg, share, rng);
        m.query_enc = std::move(twin.first);
        m.search_enc = std::move(twin.second);
        m.shared = share;
        if (normalize_logits) {
            double fan = static_cast<double>(query_cfg.embed_dim) * query_cfg.tokens();
            m.logit_scale = 1.0 / std::sqrt(fan);
        }
        return m;
    }

    /// Differentiable path: image pair -> scored heatmap grid.
    Heatmap<T> heatmap(const Tensor<T>& query_img, const Tensor<T>& search_img) const {
        FeatureMap<T> qf = encode(query_img, query_enc);
        FeatureMap<T> sf = encode(search_img, search_enc);
        Heatmap<T> heat = correlate(sf, qf, /*padded=*/true, search_enc.cfg.input_side);
        if (logit_scale != 1.0) heat.grid = ops::scale(heat.grid, logit_scale);
        return heat;
    }

    /// Full inference path; decode is outside the gradient graph.
    std::pair<Heatmap<T>, Prediction> forward_pair(const Tensor<T>& query_img,
                                                   const Tensor<T>& search_img) const {
        Heatmap<T> heat = heatmap(query_img, search_img);
        Prediction pred = decode(heat);
        return {std::move(heat), pred};
    }

    /// Fixed-order named parameters; shared tensors are listed once under
    /// "query" with only the search position table added separately.
    std::vector<std::pair<std::string, Tensor<T>>> named_params() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        query_enc.collect("query", out);
        if (shared) {
            out.emplace_back("search.pos", search_enc.pos);
        } else {
            search_enc.collect("search", out);
        }
        return out;
    }

    std::vector<Tensor<T>> params() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (auto& [name, t] : named_params()) n += t.numel();
        return n;
    }
};

}  // namespace fpi
