#include "fpi/geodata.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fpi {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lattice hash -> [0,1). Purely integer mixing, so the field is a fixed
// function of (coords, seed).
double lattice_value(int ix, int iy, std::uint64_t seed) {
    std::uint64_t h = mix_seed(static_cast<std::uint64_t>(static_cast<std::int64_t>(ix)),
                               static_cast<std::uint64_t>(static_cast<std::int64_t>(iy)), seed);
    return static_cast<double>(h >> 11) * 0x1p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, double cell, std::uint64_t seed) {
    double fx = x / cell, fy = y / cell;
    int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
    double tx = smoothstep(fx - ix), ty = smoothstep(fy - iy);
    double v00 = lattice_value(ix, iy, seed), v10 = lattice_value(ix + 1, iy, seed);
    double v01 = lattice_value(ix, iy + 1, seed), v11 = lattice_value(ix + 1, iy + 1, seed);
    return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

struct Rgb {
    double r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Material -> color. The query palette is hue/gamma shifted against the
// satellite one to mimic imagery from a different sensor.
Rgb shade_material(double terrain, double building, double road, bool query_palette) {
    Rgb c;
    if (road > 0.5) {
        c = query_palette ? Rgb{82, 80, 88} : Rgb{68, 68, 74};
    } else if (building > 0.0) {
        double s = building;
        c = query_palette ? Rgb{205 * s, 192 * s, 178 * s} : Rgb{198 * s, 196 * s, 192 * s};
    } else {
        if (query_palette)
            c = mix(Rgb{58, 96, 52}, Rgb{176, 148, 104}, std::pow(terrain, 0.85));
        else
            c = mix(Rgb{52, 84, 44}, Rgb{158, 138, 96}, terrain);
    }
    return c;
}

float bilinear_field(const std::vector<float>& f, int side, double x, double y) {
    // Field value i,j lives at pixel center (j+0.5, i+0.5).
    double fx = std::clamp(x - 0.5, 0.0, side - 1.0);
    double fy = std::clamp(y - 0.5, 0.0, side - 1.0);
    int ix = std::min(static_cast<int>(fx), side - 2 >= 0 ? side - 2 : 0);
    int iy = std::min(static_cast<int>(fy), side - 2 >= 0 ? side - 2 : 0);
    double tx = fx - ix, ty = fy - iy;
    auto at = [&](int r, int c) { return static_cast<double>(f[static_cast<std::size_t>(r) * side + c]); };
    return static_cast<float>((at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx) * (1 - ty) +
                              (at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx) * ty);
}

}  // namespace

float SynthScene::terrain_at(double x, double y) const { return bilinear_field(terrain, side, x, y); }
float SynthScene::building_at(double x, double y) const { return bilinear_field(building, side, x, y); }
float SynthScene::road_at(double x, double y) const { return bilinear_field(road, side, x, y); }

SynthScene make_scene(int side, std::uint64_t seed, const SynthParams& params) {
    SynthScene scene;
    scene.side = side;
    std::size_t n = static_cast<std::size_t>(side) * side;
    scene.terrain.assign(n, 0.f);
    scene.building.assign(n, 0.f);
    scene.road.assign(n, 0.f);

    // Four octaves of value noise.
    const double base_cell = side / 8.0;
    const std::uint64_t oct_seeds[4] = {mix_seed(seed, 11), mix_seed(seed, 12), mix_seed(seed, 13),
                                        mix_seed(seed, 14)};
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double px = x + 0.5, py = y + 0.5;
            double v = 0.5333 * value_noise(px, py, base_cell, oct_seeds[0]) +
                       0.2667 * value_noise(px, py, base_cell / 2, oct_seeds[1]) +
                       0.1333 * value_noise(px, py, base_cell / 4, oct_seeds[2]) +
                       0.0667 * value_noise(px, py, base_cell / 8, oct_seeds[3]);
            scene.terrain[static_cast<std::size_t>(y) * side + x] = static_cast<float>(v);
        }

    Pcg32 rng(mix_seed(seed, 21));
    // Rectangular building blocks.
    for (int b = 0; b < params.buildings; ++b) {
        int w = rng.uniform_int(side / 48, side / 14);
        int h = rng.uniform_int(side / 48, side / 14);
        int cx = rng.uniform_int(0, side - 1);
        int cy = rng.uniform_int(0, side - 1);
        float shade = static_cast<float>(rng.uniform(0.45, 0.95));
        int x0 = std::max(0, cx - w / 2), x1 = std::min(side, cx + w / 2);
        int y0 = std::max(0, cy - h / 2), y1 = std::min(side, cy + h / 2);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) scene.building[static_cast<std::size_t>(y) * side + x] = shade;
    }
    // Straight roads between random boundary points.
    for (int r = 0; r < params.roads; ++r) {
        double x0 = rng.uniform(0.0, side), y0 = rng.uniform() < 0.5 ? 0.0 : side;
        double x1 = rng.uniform() < 0.5 ? 0.0 : side, y1 = rng.uniform(0.0, side);
        double half_width = rng.uniform(2.0, 4.5);
        double dx = x1 - x0, dy = y1 - y0;
        double len2 = dx * dx + dy * dy;
        if (len2 < 1.0) continue;
        int lo_x = std::max(0, static_cast<int>(std::min(x0, x1) - half_width - 1));
        int hi_x = std::min(side, static_cast<int>(std::max(x0, x1) + half_width + 2));
        for (int y = 0; y < side; ++y)
            for (int x = lo_x; x < hi_x; ++x) {
                double t = ((x - x0) * dx + (y - y0) * dy) / len2;
                t = std::clamp(t, 0.0, 1.0);
                double ddx = x - (x0 + t * dx), ddy = y - (y0 + t * dy);
                if (ddx * ddx + ddy * ddy <= half_width * half_width)
                    scene.road[static_cast<std::size_t>(y) * side + x] = 1.f;
            }
    }
    return scene;
}

ImageU8 render_satellite(const SynthScene& scene) {
    ImageU8 img(scene.side, scene.side, 3);
    for (int y = 0; y < scene.side; ++y)
        for (int x = 0; x < scene.side; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * scene.side + x;
            Rgb c = shade_material(scene.terrain[i], scene.building[i], scene.road[i], false);
            img.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(c.r + 0.5, 0.0, 255.0));
            img.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(c.g + 0.5, 0.0, 255.0));
            img.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(c.b + 0.5, 0.0, 255.0));
        }
    return img;
}

ImageU8 render_query(const SynthScene& scene, double cx, double cy, double window_px,
                     int out_px, double rot_deg, bool palette_shift, bool jitter, Pcg32& rng) {
    double theta = rot_deg * kPi / 180.0;
    double cos_t = std::cos(theta), sin_t = std::sin(theta);
    double brightness = jitter ? rng.uniform(-0.08, 0.08) : 0.0;
    double contrast = jitter ? rng.uniform(0.9, 1.1) : 1.0;

    ImageU8 img(out_px, out_px, 3);
    for (int v = 0; v < out_px; ++v)
        for (int u = 0; u < out_px; ++u) {
            // Normalized window coords in (-0.5, 0.5), rotated into the scene.
            double nx = (u + 0.5) / out_px - 0.5;
            double ny = (v + 0.5) / out_px - 0.5;
            double sx = cx + (nx * cos_t - ny * sin_t) * window_px;
            double sy = cy + (nx * sin_t + ny * cos_t) * window_px;
            double terrain = scene.terrain_at(sx, sy);
            double building = scene.building_at(sx, sy);
            double road = scene.road_at(sx, sy);
            Rgb c = shade_material(terrain, building > 0.2 ? building : 0.0, road, palette_shift);
            double ch[3] = {c.r, c.g, c.b};
            for (int k = 0; k < 3; ++k) {
                double val = ch[k] / 255.0;
                val = (val - 0.5) * contrast + 0.5 + brightness;
                img.at(v, u, k) = static_cast<std::uint8_t>(std::clamp(val * 255.0 + 0.5, 0.0, 255.0));
            }
        }
    return img;
}

void synth_generate(const std::string& root, const std::string& split, int n_pairs,
                    std::uint64_t seed, const SynthParams& params) {
    if (n_pairs < 1) throw DataError("synth_generate: need at least one pair");
    if (split != "train" && split != "test")
        throw DataError("synth_generate: split must be 'train' or 'test'");
    const bool is_test = split == "test";
    fs::path base = fs::path(root) / split;
    std::error_code ec;
    fs::create_directories(base, ec);
    if (ec) throw DataError("synth_generate: cannot create " + base.string() + ": " + ec.message());

    const double native_mpp = ground_resolution();
    const int scene_side = is_test ? params.test_scene_side : params.scene_side;

    for (int i = 0; i < n_pairs; ++i) {
        std::uint64_t pair_seed = mix_seed(seed, is_test ? 0x7e57u : 0x7ea1u, static_cast<std::uint64_t>(i));
        Pcg32 rng(pair_seed);
        SynthScene scene = make_scene(scene_side, rng.fork(1).state(), params);

        double altitude = 80.0 + 10.0 * rng.uniform_int(3u);
        GeoRef ref;
        ref.lat = rng.uniform(22.0, 45.0);
        ref.lon = rng.uniform(100.0, 125.0);
        ref.m_per_px = native_mpp;
        ref.side = scene_side;

        // Query is anchored at the scene centre; crops move it around later.
        double gt_x = scene_side / 2.0, gt_y = scene_side / 2.0;
        GeoPose pose = geo_from_pixel(ref, gt_x, gt_y);
        pose.altitude_m = altitude;

        double window_px = altitude * params.query_window_px_per_alt_m;
        Pcg32 qrng = rng.fork(2);
        double rot = params.max_rotation_deg > 0
                         ? qrng.uniform(-params.max_rotation_deg, params.max_rotation_deg)
                         : 0.0;
        ImageU8 query = render_query(scene, gt_x, gt_y, window_px, params.query_store_px, rot,
                                     params.palette_shift, params.photometric_jitter, qrng);

        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d", i);
        fs::path dir = base / buf;
        fs::create_directories(dir, ec);
        if (ec) throw DataError("synth_generate: cannot create " + dir.string());

        write_png((dir / "query.png").string(), query);

        json meta;
        meta["lat"] = pose.lat;
        meta["lon"] = pose.lon;
        meta["altitude_m"] = altitude;
        meta["source"] = "synthetic";

        if (is_test) {
            Pcg32 crop_rng = rng.fork(3);
            auto crops = build_test_scales(render_satellite(scene), gt_x, gt_y, params.test_scales,
                                           params.test_coverage, native_mpp, crop_rng);
            json scales = json::array();
            for (const auto& c : crops) {
                write_png((dir / ("search_" + std::to_string(c.scale_bucket) + ".png")).string(),
                          c.image);
                json e;
                e["scale_bucket"] = c.scale_bucket;
                e["gt_pixel_xy"] = {c.gt_x, c.gt_y};
                e["meters_per_pixel"] = c.meters_per_pixel;
                e["mean_filled"] = c.mean_filled;
                scales.push_back(e);
            }
            meta["scales"] = scales;
        } else {
            ImageU8 sat = render_satellite(scene);
            write_png((dir / ("search_" + std::to_string(scene_side) + ".png")).string(), sat);
            meta["scale_bucket"] = scene_side;
            meta["gt_pixel_xy"] = {gt_x, gt_y};
            meta["meters_per_pixel"] = native_mpp;
        }

        std::ofstream mf(dir / "meta.json", std::ios::trunc);
        if (!mf) throw DataError("synth_generate: cannot write meta.json in " + dir.string());
        mf << meta.dump(2) << "\n";
    }
}

}  // namespace fpi
