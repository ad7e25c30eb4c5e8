#include "fpi/geodata.hpp"
#include "fpi/ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fpi {

GeoPose geo_from_pixel(const GeoRef& ref, double px, double py) {
    double east_m = (px - ref.side / 2.0) * ref.m_per_px;
    double south_m = (py - ref.side / 2.0) * ref.m_per_px;
    double lat_rad = ref.lat * 3.14159265358979323846 / 180.0;
    GeoPose pose;
    pose.lat = ref.lat - south_m / kMetersPerDegLat;
    pose.lon = ref.lon + east_m / (kMetersPerDegLat * std::cos(lat_rad));
    return pose;
}

void pixel_from_geo(const GeoRef& ref, const GeoPose& pose, double& px, double& py) {
    double lat_rad = ref.lat * 3.14159265358979323846 / 180.0;
    double south_m = (ref.lat - pose.lat) * kMetersPerDegLat;
    double east_m = (pose.lon - ref.lon) * kMetersPerDegLat * std::cos(lat_rad);
    px = ref.side / 2.0 + east_m / ref.m_per_px;
    py = ref.side / 2.0 + south_m / ref.m_per_px;
}

std::vector<int> default_test_scales() {
    std::vector<int> scales;
    for (int s = 700; s <= 1800; s += 100) scales.push_back(s);
    return scales;
}

CropGeometry sample_crop_geometry_at(double gt_x, double gt_y, int side, double coverage,
                                     Pcg32& rng) {
    // Crop centre offset from gt, uniform within +/- coverage*side/2 per axis,
    // so the gt lands uniformly inside the crop's central coverage-square.
    double half = coverage * side / 2.0;
    double off_x = rng.uniform(-half, half);
    double off_y = rng.uniform(-half, half);
    double center_x = gt_x + off_x;
    double center_y = gt_y + off_y;
    CropGeometry geo;
    geo.side = side;
    geo.origin_x = static_cast<int>(std::floor(center_x - side / 2.0));
    geo.origin_y = static_cast<int>(std::floor(center_y - side / 2.0));
    geo.gt_x = gt_x - geo.origin_x;
    geo.gt_y = gt_y - geo.origin_y;
    // Integer flooring of the origin can nudge the gt by <1 px; keep it inside.
    geo.gt_x = std::min(std::max(geo.gt_x, 0.0), side - 1e-6);
    geo.gt_y = std::min(std::max(geo.gt_y, 0.0), side - 1e-6);
    return geo;
}

CropGeometry sample_crop_geometry(double gt_x, double gt_y, const AugmentConfig& cfg, Pcg32& rng) {
    cfg.validate();
    int side = rng.uniform_int(cfg.scale_min, cfg.scale_max);
    return sample_crop_geometry_at(gt_x, gt_y, side, cfg.coverage, rng);
}

CropResult render_crop(const ImageU8& source, const CropGeometry& geo, int out_side,
                       double src_mpp) {
    if (source.channels != 3) throw DataError("render_crop: expected a 3-channel source");
    // Per-channel source mean for out-of-bounds fill.
    double mean[3] = {0, 0, 0};
    std::size_t npx = static_cast<std::size_t>(source.width) * source.height;
    for (std::size_t i = 0; i < npx; ++i)
        for (int c = 0; c < 3; ++c) mean[c] += source.pixels[i * 3 + c];
    std::uint8_t fill[3];
    for (int c = 0; c < 3; ++c)
        fill[c] = static_cast<std::uint8_t>(std::clamp(mean[c] / npx + 0.5, 0.0, 255.0));

    ImageU8 crop(geo.side, geo.side, 3);
    bool filled = false;
    for (int y = 0; y < geo.side; ++y) {
        int sy = geo.origin_y + y;
        for (int x = 0; x < geo.side; ++x) {
            int sx = geo.origin_x + x;
            if (sy >= 0 && sy < source.height && sx >= 0 && sx < source.width) {
                for (int c = 0; c < 3; ++c) crop.at(y, x, c) = source.at(sy, sx, c);
            } else {
                for (int c = 0; c < 3; ++c) crop.at(y, x, c) = fill[c];
                filled = true;
            }
        }
    }

    CropResult res;
    res.scale_bucket = geo.side;
    res.mean_filled = filled;
    if (out_side == geo.side) {
        res.image = std::move(crop);
        res.gt_x = geo.gt_x;
        res.gt_y = geo.gt_y;
        res.meters_per_pixel = src_mpp;
    } else {
        Tensor<float> t = image_to_tensor<float>(crop);
        res.image = tensor_to_image(ops::bilinear_resize(t, out_side, out_side));
        double scale = static_cast<double>(out_side) / geo.side;
        res.gt_x = geo.gt_x * scale;
        res.gt_y = geo.gt_y * scale;
        res.meters_per_pixel = src_mpp * geo.side / out_side;
    }
    return res;
}

CropResult random_crop_augment(const ImageU8& satellite, double gt_x, double gt_y,
                               const AugmentConfig& cfg, int out_side, double src_mpp,
                               Pcg32& rng) {
    return render_crop(satellite, sample_crop_geometry(gt_x, gt_y, cfg, rng), out_side, src_mpp);
}

std::vector<CropResult> build_test_scales(const ImageU8& satellite, double gt_x, double gt_y,
                                          const std::vector<int>& scales, double coverage,
                                          double src_mpp, Pcg32& rng) {
    std::vector<CropResult> out;
    out.reserve(scales.size());
    for (int s : scales) {
        if (s > satellite.width * 2)
            throw DataError("build_test_scales: crop " + std::to_string(s) +
                            " vastly exceeds source extent " + std::to_string(satellite.width));
        CropGeometry geo = sample_crop_geometry_at(gt_x, gt_y, s, coverage, rng);
        out.push_back(render_crop(satellite, geo, s, src_mpp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

namespace {

PairMeta parse_meta(const fs::path& dir, const std::string& pair_id) {
    fs::path meta_path = dir / "meta.json";
    std::ifstream f(meta_path);
    if (!f) throw DataError("missing meta.json in " + dir.string());
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw DataError("malformed meta.json in " + dir.string() + ": " + e.what());
    }

    PairMeta meta;
    meta.pair_id = pair_id;
    meta.dir = dir.string();
    try {
        meta.lat = j.at("lat").get<double>();
        meta.lon = j.at("lon").get<double>();
        meta.altitude_m = j.at("altitude_m").get<double>();
        meta.source = j.at("source").get<std::string>();

        auto parse_entry = [&](const json& e) {
            ScaleEntry se;
            se.scale_bucket = e.at("scale_bucket").get<int>();
            se.gt_x = e.at("gt_pixel_xy").at(0).get<double>();
            se.gt_y = e.at("gt_pixel_xy").at(1).get<double>();
            se.meters_per_pixel = e.at("meters_per_pixel").get<double>();
            se.mean_filled = e.value("mean_filled", false);
            se.file = "search_" + std::to_string(se.scale_bucket) + ".png";
            return se;
        };
        if (j.contains("scales")) {
            for (const auto& e : j.at("scales")) meta.scales.push_back(parse_entry(e));
        } else {
            meta.scales.push_back(parse_entry(j));
        }
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError("meta.json missing/invalid keys in " + dir.string() + ": " + e.what());
    }

    GeoPose pose{meta.lat, meta.lon, meta.altitude_m};
    pose.validate();
    for (const auto& se : meta.scales) {
        if (se.meters_per_pixel <= 0)
            throw DataError("non-positive meters_per_pixel in " + dir.string());
        if (se.gt_x < 0 || se.gt_y < 0 || se.gt_x >= se.scale_bucket || se.gt_y >= se.scale_bucket)
            throw DataError("ground truth outside search image in " + dir.string() + " scale " +
                            std::to_string(se.scale_bucket));
        if (!fs::exists(dir / se.file))
            throw DataError("missing " + se.file + " in " + dir.string());
    }
    if (!fs::exists(dir / "query.png")) throw DataError("missing query.png in " + dir.string());
    return meta;
}

}  // namespace

Dataset Dataset::load(const std::string& root, const std::string& split) {
    fs::path base = fs::path(root) / split;
    if (!fs::is_directory(base)) throw DataError("dataset split directory not found: " + base.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(base))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw DataError("no samples in " + base.string());

    Dataset ds;
    for (const auto& id : ids) ds.pairs_.push_back(parse_meta(base / id, id));
    return ds;
}

ImageU8 Dataset::load_query(std::size_t pair_idx) const {
    const auto& p = pairs_.at(pair_idx);
    return read_png((fs::path(p.dir) / "query.png").string());
}

ImageU8 Dataset::load_search(std::size_t pair_idx, std::size_t scale_idx) const {
    const auto& p = pairs_.at(pair_idx);
    const auto& se = p.scales.at(scale_idx);
    ImageU8 img = read_png((fs::path(p.dir) / se.file).string());
    if (img.width != se.scale_bucket || img.height != se.scale_bucket)
        throw DataError("search image size mismatch in " + p.dir + "/" + se.file);
    return img;
}

std::vector<std::size_t> Dataset::epoch_order(std::uint64_t seed, int epoch) const {
    std::vector<std::size_t> order(pairs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Pcg32 rng(mix_seed(seed, 0x53487546u, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(static_cast<std::uint32_t>(i))]);
    return order;
}

}  // namespace fpi
