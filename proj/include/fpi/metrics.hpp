#pragma once

#include <map>
#include <string>
#include <vector>

namespace fpi {

/// Query-position band: normalized radial distance from the search-map
/// centre, in 0.2 steps; values beyond 1.0 (the inscribed circle) are the
/// corner region.
enum class RingBucket : int {
    R00_02 = 0,
    R02_04 = 1,
    R04_06 = 2,
    R06_08 = 3,
    R08_10 = 4,
    Beyond = 5,
};

std::string ring_bucket_name(RingBucket b);

/// Per-sample evaluation result.
struct EvalRecord {
    std::string pair_id;
    double sd_m = 0.0;    // spatial distance, meters
    double rd = 0.0;      // normalized pixel distance
    double rds = 0.0;     // exp(-k * rd)
    int scale_bucket = 0;
    RingBucket ring_bucket = RingBucket::R00_02;
    double altitude_m = 0.0;
};

struct ReportConfig {
    double k = 10.0;
    std::vector<double> ma_thresholds_m = {3, 5, 10, 20, 30, 50};
};

/// Euclidean ground distance in meters between two pixel positions.
double spatial_distance(double pred_x, double pred_y, double gt_x, double gt_y,
                        double meters_per_pixel);

/// Fraction of records with SD strictly below threshold_m.
double ma(const std::vector<EvalRecord>& records, double threshold_m);

/// Normalized relative distance: sqrt(((dx/w)^2 + (dy/h)^2) / 2).
double relative_distance(double pred_x, double pred_y, double gt_x, double gt_y,
                         double w, double h);

/// Relative distance score: exp(-k * RD), in (0, 1].
double rds(double pred_x, double pred_y, double gt_x, double gt_y, double w, double h,
           double k = 10.0);

/// Band of the gt position by distance from the map centre, normalized so an
/// edge midpoint is exactly 1.0.
RingBucket ring_bucket(double gt_x, double gt_y, double search_side);

/// Aggregated evaluation report.
struct Report {
    struct Row {
        std::string key;
        int count = 0;
        double rds_mean = 0.0;
        std::map<double, double> ma;  // threshold (m) -> fraction
    };
    int count = 0;
    double rds_mean = 0.0;
    std::map<double, double> ma;
    std::vector<Row> per_scale;
    std::vector<Row> per_ring;
    std::vector<Row> per_altitude;
};

Report build_report(const std::vector<EvalRecord>& records, const ReportConfig& cfg);

/// Records as CSV (columns: pair_id, scale_bucket, altitude_m, ring_bucket,
/// sd_m, rd, rds) and the summary as JSON. Both byte-deterministic.
std::string records_csv(const std::vector<EvalRecord>& records);
std::string report_json(const Report& report);

void write_report(const std::string& csv_path, const std::string& json_path,
                  const std::vector<EvalRecord>& records, const ReportConfig& cfg);

}  // namespace fpi
