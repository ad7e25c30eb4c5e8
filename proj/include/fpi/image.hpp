#pragma once

#include "fpi/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fpi {

/// 8-bit image, interleaved row-major (HWC). channels is 1 or 3.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int w, int h, int c)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, 0) {}

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return pixels.empty(); }
};

/// Minimal PNG codec (8-bit gray / RGB / RGBA input, gray or RGB output),
/// deflate via zlib. Writes are deterministic byte-for-byte.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// Encode to an in-memory PNG byte stream (same format as write_png).
std::vector<std::uint8_t> encode_png(const ImageU8& img);

/// [C,H,W] float tensor in [0,1] from an 8-bit image (value / 255).
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
    Shape shape{img.channels, img.height, img.width};
    std::vector<T> data(shape_numel(shape));
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                data[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
                    static_cast<T>(img.at(y, x, c)) / T(255);
    return Tensor<T>::from(std::move(shape), std::move(data));
}

/// 8-bit image from a [C,H,W] tensor of values in [0,1]; clamps.
template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
    if (t.ndim() != 3) throw ShapeError("tensor_to_image expects [C,H,W]");
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    ImageU8 img(w, h, c);
    auto tv = t.value();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = tv[(static_cast<std::size_t>(ch) * h + y) * w + x] * 255.0;
                img.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
            }
    return img;
}

/// Min-max normalized single-channel 8-bit rendering of a [1,H,W] or [H,W] map.
template <typename T>
ImageU8 grayscale_from_map(const Tensor<T>& t) {
    int h, w;
    if (t.ndim() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else if (t.ndim() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else {
        throw ShapeError("grayscale_from_map expects [1,H,W] or [H,W]");
    }
    auto tv = t.value();
    T lo = tv[0], hi = tv[0];
    for (T v : tv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double range = static_cast<double>(hi - lo);
    if (range <= 0) range = 1.0;
    ImageU8 img(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = (tv[static_cast<std::size_t>(y) * w + x] - lo) / range;
            img.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(v * 255.0 + 0.5, 0.0, 255.0));
        }
    return img;
}

}  // namespace fpi
