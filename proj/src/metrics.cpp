#include "fpi/metrics.hpp"
#include "fpi/geodata.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

using json = nlohmann::json;

namespace fpi {

std::string ring_bucket_name(RingBucket b) {
    switch (b) {
        case RingBucket::R00_02: return "0-0.2";
        case RingBucket::R02_04: return "0.2-0.4";
        case RingBucket::R04_06: return "0.4-0.6";
        case RingBucket::R06_08: return "0.6-0.8";
        case RingBucket::R08_10: return "0.8-1.0";
        case RingBucket::Beyond: return ">1.0";
    }
    return "?";
}

double spatial_distance(double pred_x, double pred_y, double gt_x, double gt_y,
                        double meters_per_pixel) {
    if (meters_per_pixel <= 0) throw std::invalid_argument("spatial_distance: meters_per_pixel must be > 0");
    double dx = (pred_x - gt_x) * meters_per_pixel;
    double dy = (pred_y - gt_y) * meters_per_pixel;
    return std::sqrt(dx * dx + dy * dy);
}

double ma(const std::vector<EvalRecord>& records, double threshold_m) {
    if (records.empty()) throw std::invalid_argument("ma: empty record set");
    int hits = 0;
    for (const auto& r : records)
        if (r.sd_m < threshold_m) ++hits;  // strictly below
    return static_cast<double>(hits) / records.size();
}

double relative_distance(double pred_x, double pred_y, double gt_x, double gt_y,
                         double w, double h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("relative_distance: w,h must be > 0");
    double dx = std::abs(pred_x - gt_x) / w;
    double dy = std::abs(pred_y - gt_y) / h;
    return std::sqrt((dx * dx + dy * dy) / 2.0);
}

double rds(double pred_x, double pred_y, double gt_x, double gt_y, double w, double h, double k) {
    if (k <= 0) throw std::invalid_argument("rds: k must be > 0");
    return std::exp(-k * relative_distance(pred_x, pred_y, gt_x, gt_y, w, h));
}

RingBucket ring_bucket(double gt_x, double gt_y, double search_side) {
    double cx = search_side / 2.0, cy = search_side / 2.0;
    double d = 2.0 * std::hypot(gt_x - cx, gt_y - cy) / search_side;
    if (d > 1.0) return RingBucket::Beyond;
    int band = std::min(4, static_cast<int>(d / 0.2));
    return static_cast<RingBucket>(band);
}

namespace {

Report::Row make_row(const std::string& key, const std::vector<const EvalRecord*>& recs,
                     const ReportConfig& cfg) {
    Report::Row row;
    row.key = key;
    row.count = static_cast<int>(recs.size());
    double acc = 0;
    for (auto* r : recs) acc += r->rds;
    row.rds_mean = recs.empty() ? 0.0 : acc / recs.size();
    for (double t : cfg.ma_thresholds_m) {
        int hits = 0;
        for (auto* r : recs)
            if (r->sd_m < t) ++hits;
        row.ma[t] = recs.empty() ? 0.0 : static_cast<double>(hits) / recs.size();
    }
    return row;
}

std::string fmt_threshold(double t) {
    char buf[32];
    if (t == static_cast<long>(t))
        std::snprintf(buf, sizeof buf, "%ld", static_cast<long>(t));
    else
        std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

}  // namespace

Report build_report(const std::vector<EvalRecord>& records, const ReportConfig& cfg) {
    if (records.empty()) throw DataError("build_report: no evaluation records");
    Report rep;
    rep.count = static_cast<int>(records.size());
    double acc = 0;
    for (const auto& r : records) acc += r.rds;
    rep.rds_mean = acc / records.size();
    for (double t : cfg.ma_thresholds_m) rep.ma[t] = ma(records, t);

    std::set<int> scales;
    std::set<double> altitudes;
    for (const auto& r : records) {
        scales.insert(r.scale_bucket);
        altitudes.insert(r.altitude_m);
    }
    for (int s : scales) {
        std::vector<const EvalRecord*> group;
        for (const auto& r : records)
            if (r.scale_bucket == s) group.push_back(&r);
        rep.per_scale.push_back(make_row(std::to_string(s), group, cfg));
    }
    for (int b = 0; b <= static_cast<int>(RingBucket::Beyond); ++b) {
        std::vector<const EvalRecord*> group;
        for (const auto& r : records)
            if (static_cast<int>(r.ring_bucket) == b) group.push_back(&r);
        if (!group.empty())
            rep.per_ring.push_back(make_row(ring_bucket_name(static_cast<RingBucket>(b)), group, cfg));
    }
    for (double a : altitudes) {
        std::vector<const EvalRecord*> group;
        for (const auto& r : records)
            if (r.altitude_m == a) group.push_back(&r);
        rep.per_altitude.push_back(make_row(fmt_threshold(a), group, cfg));
    }
    return rep;
}

std::string records_csv(const std::vector<EvalRecord>& records) {
    std::string out = "pair_id,scale_bucket,altitude_m,ring_bucket,sd_m,rd,rds\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.1f,%s,%.6f,%.6f,%.6f\n", r.pair_id.c_str(),
                      r.scale_bucket, r.altitude_m, ring_bucket_name(r.ring_bucket).c_str(),
                      r.sd_m, r.rd, r.rds);
        out += buf;
    }
    return out;
}

namespace {

json row_json(const Report::Row& row) {
    json j;
    j["key"] = row.key;
    j["count"] = row.count;
    j["rds_mean"] = row.rds_mean;
    json ma_obj = json::object();
    for (const auto& [t, v] : row.ma) ma_obj[fmt_threshold(t)] = v;
    j["ma"] = ma_obj;
    return j;
}

}  // namespace

std::string report_json(const Report& report) {
    json j;
    j["count"] = report.count;
    j["rds_mean"] = report.rds_mean;
    json ma_obj = json::object();
    for (const auto& [t, v] : report.ma) ma_obj[fmt_threshold(t)] = v;
    j["ma"] = ma_obj;
    j["per_scale"] = json::array();
    for (const auto& row : report.per_scale) j["per_scale"].push_back(row_json(row));
    j["per_ring"] = json::array();
    for (const auto& row : report.per_ring) j["per_ring"].push_back(row_json(row));
    j["per_altitude"] = json::array();
    for (const auto& row : report.per_altitude) j["per_altitude"].push_back(row_json(row));
    return j.dump(2) + "\n";
}

void write_report(const std::string& csv_path, const std::string& json_path,
                  const std::vector<EvalRecord>& records, const ReportConfig& cfg) {
    Report rep = build_report(records, cfg);
    {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw DataError("write_report: cannot open " + csv_path);
        f << records_csv(records);
    }
    {
        std::ofstream f(json_path, std::ios::trunc);
        if (!f) throw DataError("write_report: cannot open " + json_path);
        f << report_json(rep);
    }
}

}  // namespace fpi
