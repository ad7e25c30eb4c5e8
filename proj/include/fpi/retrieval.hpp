#pragma once

#include "fpi/encoder.hpp"
#include "fpi/fusion.hpp"
#include "fpi/ops.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace fpi {

/// Tile-gallery retrieval pipeline: cut the search map into 5x5 blocks,
/// embed each with the encoder, rank by cosine similarity, answer with the
/// best tile's centre. Localization error is floored by the tile spacing.
inline constexpr int kGalleryGrid = 5;

template <typename T>
struct Gallery {
    std::vector<std::vector<T>> tile_embeddings;        // unit-norm vectors
    std::vector<std::pair<double, double>> tile_centers_px;
};

/// Non-overlapping equal tiles, row-major. The image side must divide by 5;
/// callers resize first otherwise.
template <typename T>
std::vector<Tensor<T>> tile_image(const Tensor<T>& search_img) {
    if (search_img.ndim() != 3) throw ShapeError("tile_image expects [C,S,S]");
    int c = search_img.dim(0), s = search_img.dim(1);
    if (search_img.dim(2) != s) throw ShapeError("tile_image expects a square image");
    if (s % kGalleryGrid != 0)
        throw ShapeError("tile_image: side " + std::to_string(s) + " not divisible by " +
                         std::to_string(kGalleryGrid));
    int ts = s / kGalleryGrid;
    std::vector<Tensor<T>> tiles;
    tiles.reserve(kGalleryGrid * kGalleryGrid);
    auto src = search_img.value();
    for (int ti = 0; ti < kGalleryGrid; ++ti)
        for (int tj = 0; tj < kGalleryGrid; ++tj) {
            std::vector<T> data(static_cast<std::size_t>(c) * ts * ts);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < ts; ++y)
                    for (int x = 0; x < ts; ++x)
                        data[(static_cast<std::size_t>(ch) * ts + y) * ts + x] =
                            src[(static_cast<std::size_t>(ch) * s + ti * ts + y) * s + tj * ts + x];
            tiles.push_back(Tensor<T>::from({c, ts, ts}, std::move(data)));
        }
    return tiles;
}

inline std::vector<std::pair<double, double>> tile_centers(int side) {
    std::vector<std::pair<double, double>> centers;
    double ts = static_cast<double>(side) / kGalleryGrid;
    for (int i = 0; i < kGalleryGrid; ++i)
        for (int j = 0; j < kGalleryGrid; ++j)
            centers.emplace_back((j + 0.5) * ts, (i + 0.5) * ts);
    return centers;
}

/// Mean-pooled encoder tokens, L2-normalized. The input is resized to the
/// encoder's configured side first.
template <typename T>
std::vector<T> embed_image(const Tensor<T>& img, const EncoderWeights<T>& enc) {
    Tensor<T> input = img;
    if (img.dim(1) != enc.cfg.input_side || img.dim(2) != enc.cfg.input_side)
        input = ops::bilinear_resize(img, enc.cfg.input_side, enc.cfg.input_side);
    FeatureMap<T> fm = encode(input, enc);
    int c = fm.channels, n = fm.grid_h * fm.grid_w;
    auto vals = fm.values.value();  // [c, gh, gw]
    std::vector<T> emb(static_cast<std::size_t>(c), T(0));
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = vals.data() + static_cast<std::size_t>(ch) * n;
        T acc = 0;
        for (int i = 0; i < n; ++i) acc += plane[i];
        emb[static_cast<std::size_t>(ch)] = acc / static_cast<T>(n);
    }
    T norm = 0;
    for (T v : emb) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (T& v : emb) v /= norm;
    return emb;
}

template <typename T>
Gallery<T> build_gallery(const Tensor<T>& search_img, const EncoderWeights<T>& enc) {
    Gallery<T> g;
    for (const auto& tile : tile_image(search_img)) g.tile_embeddings.push_back(embed_image(tile, enc));
    g.tile_centers_px = tile_centers(search_img.dim(1));
    return g;
}

template <typename T>
double cosine(const std::vector<T>& a, const std::vector<T>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

/// Best-cosine tile centre; ties go to the lowest tile index.
template <typename T>
Prediction retrieve(const Tensor<T>& query_img, const Gallery<T>& gallery,
                    const EncoderWeights<T>& enc) {
    if (gallery.tile_embeddings.empty()) throw std::invalid_argument("retrieve: empty gallery");
    std::vector<T> q = embed_image(query_img, enc);
    int best = 0;
    double best_cos = cosine(q, gallery.tile_embeddings[0]);
    for (std::size_t i = 1; i < gallery.tile_embeddings.size(); ++i) {
        double c = cosine(q, gallery.tile_embeddings[i]);
        if (c > best_cos) {
            best_cos = c;
            best = static_cast<int>(i);
        }
    }
    Prediction p;
    p.x = gallery.tile_centers_px[static_cast<std::size_t>(best)].first;
    p.y = gallery.tile_centers_px[static_cast<std::size_t>(best)].second;
    p.score = best_cos;
    return p;
}

}  // namespace fpi
