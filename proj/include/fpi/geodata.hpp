#pragma once

#include "fpi/image.hpp"
#include "fpi/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpi {

/// Dataset / input problems (missing files, malformed metadata, bad ranges).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure (NaN/Inf detected where finite values are required).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct GeoPose {
    double lat = 0.0;
    double lon = 0.0;
    double altitude_m = 0.0;

    void validate() const {
        if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0)
            throw DataError("geo pose out of range: lat " + std::to_string(lat) +
                            " lon " + std::to_string(lon));
    }
};

/// Scene georeference: pixel (side/2, side/2) sits at (lat, lon); x grows
/// east, y grows south. Local equirectangular approximation, valid for the
/// sub-kilometre scenes used here.
struct GeoRef {
    double lat = 0.0;
    double lon = 0.0;
    double m_per_px = 1.0;
    int side = 0;
};

inline constexpr double kMetersPerDegLat = 111194.92664455873;  // pi/180 * mean earth radius

GeoPose geo_from_pixel(const GeoRef& ref, double px, double py);
void pixel_from_geo(const GeoRef& ref, const GeoPose& pose, double& px, double& py);

/// Ground resolution of the source imagery: 180 m over 700 px.
inline double ground_resolution() { return 180.0 / 700.0; }

/// Meters per pixel after a crop of crop_side_px source pixels is resized
/// to resized_side_px. Equal sides give the native resolution.
inline double meters_per_pixel(int crop_side_px, int resized_side_px) {
    if (crop_side_px <= 0 || resized_side_px <= 0)
        throw std::invalid_argument("meters_per_pixel: sides must be positive");
    return ground_resolution() * static_cast<double>(crop_side_px) / resized_side_px;
}

// ---------------------------------------------------------------------------
// Cropping / augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
    double coverage = 0.75;  // fraction of the crop side the gt may occupy
    int scale_min = 512;
    int scale_max = 1000;

    void validate() const {
        if (coverage < 0.0 || coverage > 1.0)
            throw std::invalid_argument("augment: coverage must be in [0,1]");
        if (scale_min <= 0 || scale_min > scale_max)
            throw std::invalid_argument("augment: need 0 < scale_min <= scale_max");
    }

    bool operator==(const AugmentConfig&) const = default;
};

/// Geometric part of a random crop: integer window plus the gt position
/// inside it, before any pixel work.
struct CropGeometry {
    int side = 0;      // crop side in source pixels
    int origin_x = 0;  // top-left of the window in source pixels
    int origin_y = 0;
    double gt_x = 0.0;  // gt in crop coordinates
    double gt_y = 0.0;
};

/// Draw a crop window of uniform random side whose central coverage-region
/// contains the query point. The gt lands uniformly in that central square.
CropGeometry sample_crop_geometry(double gt_x, double gt_y, const AugmentConfig& cfg, Pcg32& rng);

/// Same, for a fixed crop side.
CropGeometry sample_crop_geometry_at(double gt_x, double gt_y, int side, double coverage, Pcg32& rng);

/// Rendered crop, resized to out_side. Out-of-bounds source area is filled
/// with the per-channel mean of the source image.
struct CropResult {
    ImageU8 image;
    double gt_x = 0.0;            // in output pixel coordinates
    double gt_y = 0.0;
    int scale_bucket = 0;         // crop side in source pixels
    double meters_per_pixel = 0;  // in output pixel coordinates
    bool mean_filled = false;     // window exceeded the source extent
};

CropResult render_crop(const ImageU8& source, const CropGeometry& geo, int out_side, double src_mpp);

/// sample_crop_geometry + render_crop in one step.
CropResult random_crop_augment(const ImageU8& satellite, double gt_x, double gt_y,
                               const AugmentConfig& cfg, int out_side, double src_mpp, Pcg32& rng);

/// One crop per scale at native resolution (no resize), gt uniform within
/// the central `coverage` square of each crop.
std::vector<CropResult> build_test_scales(const ImageU8& satellite, double gt_x, double gt_y,
                                          const std::vector<int>& scales, double coverage,
                                          double src_mpp, Pcg32& rng);

/// Default test sweep: 700..1800 px at 100 px steps.
std::vector<int> default_test_scales();

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct SynthParams {
    int scene_side = 1280;       // train satellite side (stored fully)
    int test_scene_side = 2048;  // test source extent before cropping
    int query_store_px = 256;    // stored query resolution
    double query_window_px_per_alt_m = 5.0;  // ground footprint per metre of altitude
    bool palette_shift = true;   // render the query with a shifted palette
    bool photometric_jitter = true;
    double max_rotation_deg = 10.0;
    double test_coverage = 0.95;
    std::vector<int> test_scales = default_test_scales();
    int buildings = 24;
    int roads = 6;
};

/// Procedural world the satellite and query views are both rendered from:
/// layered value-noise terrain, rectangular building blocks, line roads.
struct SynthScene {
    int side = 0;
    std::vector<float> terrain;   // [0,1]
    std::vector<float> building;  // 0 = none, else facade shade
    std::vector<float> road;      // 0/1 mask

    float terrain_at(double x, double y) const;
    float building_at(double x, double y) const;
    float road_at(double x, double y) const;
};

SynthScene make_scene(int side, std::uint64_t seed, const SynthParams& params);
ImageU8 render_satellite(const SynthScene& scene);

/// Query view: a window of the scene around (cx, cy), optionally rotated and
/// photometric-jittered, rendered with the query palette and resampled to
/// out_px. window_px is the footprint side in scene pixels.
ImageU8 render_query(const SynthScene& scene, double cx, double cy, double window_px,
                     int out_px, double rot_deg, bool palette_shift, bool jitter, Pcg32& rng);

/// Generate a dataset split on disk (layout documented in the README).
/// Deterministic per (seed, split, n_pairs, params).
void synth_generate(const std::string& root, const std::string& split, int n_pairs,
                    std::uint64_t seed, const SynthParams& params);

// ---------------------------------------------------------------------------
// Dataset on disk
// ---------------------------------------------------------------------------

struct ScaleEntry {
    int scale_bucket = 0;
    double gt_x = 0.0;
    double gt_y = 0.0;
    double meters_per_pixel = 0.0;
    bool mean_filled = false;
    std::string file;  // search image filename within the pair directory
};

struct PairMeta {
    std::string pair_id;
    std::string dir;
    double lat = 0.0;
    double lon = 0.0;
    double altitude_m = 0.0;
    std::string source;
    std::vector<ScaleEntry> scales;
};

/// Loaded manifest for one split. Images are decoded on demand.
class Dataset {
public:
    static Dataset load(const std::string& root, const std::string& split);

    const std::vector<PairMeta>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }

    ImageU8 load_query(std::size_t pair_idx) const;
    ImageU8 load_search(std::size_t pair_idx, std::size_t scale_idx) const;

    /// Deterministic shuffled index order for one epoch.
    std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch) const;

private:
    std::vector<PairMeta> pairs_;
};

}  // namespace fpi
