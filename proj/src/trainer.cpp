#include "fpi/pipeline.hpp"

#include "fpi/loss.hpp"
#include "fpi/optim.hpp"
#include "fpi/parallel.hpp"
#include "fpi/retrieval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fpi {

namespace {

struct PreparedSample {
    Tensor<float> query;
    Tensor<float> search;
    double gt_x = 0.0;
    double gt_y = 0.0;
};

}  // namespace

TrainResult train_model(const RunConfig& cfg, const std::string& data_root,
                        const std::string& ckpt_path, const std::string& log_csv_path,
                        std::ostream* progress) {
    cfg.validate();
    Dataset dataset = Dataset::load(data_root, "train");
    const std::size_t n_pairs = dataset.size();

    // Decode once; training touches every pair each epoch.
    std::vector<ImageU8> satellites(n_pairs);
    std::vector<Tensor<float>> queries(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        satellites[i] = dataset.load_search(i, 0);
        queries[i] = preprocess_image<float>(dataset.load_query(i), cfg.query_side, cfg.norm_mean,
                                             cfg.norm_std);
    }

    Model<float> model = Model<float>::init(cfg.query_encoder_cfg(), cfg.search_encoder_cfg(),
                                            cfg.share_weights, cfg.normalize_logits, cfg.seed);
    AdamW<float> optimizer(model.params(), {cfg.optim.lr, cfg.optim.weight_decay});

    const int batch = cfg.optim.batch_size;
    const int steps_per_epoch = static_cast<int>((n_pairs + batch - 1) / batch);
    const bool step_mode = cfg.optim.max_steps > 0;
    const long total_steps = step_mode
                                 ? cfg.optim.max_steps
                                 : static_cast<long>(cfg.optim.epochs) * steps_per_epoch;

    std::ofstream log;
    if (!log_csv_path.empty()) {
        log.open(log_csv_path, std::ios::trunc);
        if (!log) throw DataError("train: cannot open log " + log_csv_path);
        log << "epoch,steps_done,loss_mean,rds_mean,lr\n";
    }

    TrainResult result;
    long step = 0;
    int epoch = 0;
    double last_loss = 0.0;
    const int grid = cfg.search_grid();

    auto lr_for_step = [&](long s, int ep) {
        double lr = cfg.optim.lr;
        if (step_mode) {
            for (int drop : cfg.optim.lr_drop_steps)
                if (s >= drop) lr /= 10.0;
        } else {
            for (int drop : cfg.optim.lr_drop_epochs)
                if (ep >= drop) lr /= 10.0;
        }
        return lr;
    };

    while (step < total_steps) {
        auto order = dataset.epoch_order(cfg.seed, epoch);
        double epoch_loss = 0.0, epoch_rds = 0.0;
        long epoch_samples = 0;
        int epoch_steps = 0;

        for (int bstart = 0; bstart < static_cast<int>(n_pairs) && step < total_steps;
             bstart += batch) {
            optimizer.set_lr(lr_for_step(step, epoch));
            int bsize = std::min<int>(batch, static_cast<int>(n_pairs) - bstart);

            // Augmentation is pure per (seed, step, slot); batch slots may be
            // prepared by parallel workers.
            std::vector<PreparedSample> prepared(static_cast<std::size_t>(bsize));
            parallel_for(static_cast<std::size_t>(bsize), worker_count(), [&](std::size_t slot) {
                std::size_t idx = order[static_cast<std::size_t>(bstart) + slot];
                const auto& meta = dataset.pairs()[idx];
                const auto& entry = meta.scales.front();
                Pcg32 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step),
                                   static_cast<std::uint64_t>(slot)));
                CropResult crop = random_crop_augment(satellites[idx], entry.gt_x, entry.gt_y,
                                                      cfg.augment, cfg.search_side,
                                                      entry.meters_per_pixel, rng);
                PreparedSample ps;
                ps.query = queries[idx];
                ps.search = preprocess_image<float>(crop.image, cfg.search_side, cfg.norm_mean,
                                                    cfg.norm_std);
                ps.gt_x = crop.gt_x;
                ps.gt_y = crop.gt_y;
                prepared[slot] = std::move(ps);
            });

            std::vector<Tensor<float>> losses;
            losses.reserve(static_cast<std::size_t>(bsize));
            double batch_rds = 0.0;
            for (const auto& ps : prepared) {
                Heatmap<float> heat = model.heatmap(ps.query, ps.search);
                LabelGrid label = build_label(ps.gt_x, ps.gt_y, cfg.search_side, grid, cfg.loss.region);
                losses.push_back(balance_loss(heat.grid, label, cfg.loss));
                Prediction pred = decode(heat);
                batch_rds += rds(pred.x, pred.y, ps.gt_x, ps.gt_y, cfg.search_side, cfg.search_side);
            }
            Tensor<float> loss = ops::scale(ops::add_n(losses), 1.0 / bsize);
            double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss at step " + std::to_string(step));
            loss.backward();
            optimizer.step();
            optimizer.zero_grad();

            last_loss = loss_val;
            epoch_loss += loss_val * bsize;
            epoch_rds += batch_rds;
            epoch_samples += bsize;
            ++epoch_steps;
            ++step;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.steps_done = static_cast<int>(step);
        stats.loss_mean = epoch_samples ? epoch_loss / epoch_samples : 0.0;
        stats.rds_mean = epoch_samples ? epoch_rds / epoch_samples : 0.0;
        stats.lr = optimizer.lr();
        result.epochs.push_back(stats);
        if (log) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.8f\n", stats.epoch, stats.steps_done,
                          stats.loss_mean, stats.rds_mean, stats.lr);
            log << buf;
            log.flush();
        }
        if (progress) {
            (*progress) << "epoch " << stats.epoch << " steps " << stats.steps_done << " loss "
                        << stats.loss_mean << " rds " << stats.rds_mean << "\n";
            progress->flush();
        }
        if (!ckpt_path.empty()) save_checkpoint(ckpt_path, cfg, step, model.named_params());
        ++epoch;
        (void)epoch_steps;
    }

    if (!ckpt_path.empty()) save_checkpoint(ckpt_path, cfg, step, model.named_params());
    result.total_steps = step;
    result.final_loss = last_loss;
    return result;
}

std::vector<EvalRecord> evaluate_model(const Model<float>& model, const RunConfig& cfg,
                                       const Dataset& dataset, int threads) {
    struct Item {
        std::size_t pair_idx;
        std::size_t scale_idx;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        for (std::size_t s = 0; s < dataset.pairs()[i].scales.size(); ++s) items.push_back({i, s});
    if (items.empty()) throw DataError("evaluate: dataset has no samples");

    std::vector<EvalRecord> records(items.size());
    parallel_for(items.size(), threads, [&](std::size_t k) {
        const Item& it = items[k];
        const auto& meta = dataset.pairs()[it.pair_idx];
        const auto& entry = meta.scales[it.scale_idx];

        Tensor<float> query = preprocess_image<float>(dataset.load_query(it.pair_idx),
                                                      cfg.query_side, cfg.norm_mean, cfg.norm_std);
        Tensor<float> search = preprocess_image<float>(dataset.load_search(it.pair_idx, it.scale_idx),
                                                       cfg.search_side, cfg.norm_mean, cfg.norm_std);
        auto [heat, pred] = model.forward_pair(query, search);

        // Map the prediction back to stored-crop coordinates.
        double to_src = static_cast<double>(entry.scale_bucket) / cfg.search_side;
        double px = pred.x * to_src, py = pred.y * to_src;

        EvalRecord rec;
        rec.pair_id = meta.pair_id;
        rec.scale_bucket = entry.scale_bucket;
        rec.altitude_m = meta.altitude_m;
        rec.sd_m = spatial_distance(px, py, entry.gt_x, entry.gt_y, entry.meters_per_pixel);
        rec.rd = relative_distance(px, py, entry.gt_x, entry.gt_y, entry.scale_bucket,
                                   entry.scale_bucket);
        rec.rds = std::exp(-10.0 * rec.rd);
        rec.ring_bucket = ring_bucket(entry.gt_x, entry.gt_y, entry.scale_bucket);
        records[k] = std::move(rec);
    });
    return records;
}

std::vector<CompareRow> compare_retrieval(const Model<float>& model, const RunConfig& cfg,
                                          const Dataset& dataset, int threads) {
    (void)threads;  // timing comparisons run sequentially for stable clocks
    std::vector<CompareRow> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& meta = dataset.pairs()[i];
        Tensor<float> query = preprocess_image<float>(dataset.load_query(i), cfg.query_side,
                                                      cfg.norm_mean, cfg.norm_std);
        for (std::size_t s = 0; s < meta.scales.size(); ++s) {
            const auto& entry = meta.scales[s];
            Tensor<float> search = preprocess_image<float>(dataset.load_search(i, s),
                                                           cfg.search_side, cfg.norm_mean,
                                                           cfg.norm_std);
            double to_src = static_cast<double>(entry.scale_bucket) / cfg.search_side;

            auto t0 = std::chrono::steady_clock::now();
            auto [heat, pred] = model.forward_pair(query, search);
            auto t1 = std::chrono::steady_clock::now();

            // Retrieval cost: 25 tile embeddings + 1 query embedding + 25 dots.
            auto t2 = std::chrono::steady_clock::now();
            Gallery<float> gallery = build_gallery(search, model.query_enc);
            Prediction rpred = retrieve(query, gallery, model.query_enc);
            auto t3 = std::chrono::steady_clock::now();

            CompareRow row;
            row.pair_id = meta.pair_id;
            row.scale_bucket = entry.scale_bucket;
            row.rds_fpi = rds(pred.x * to_src, pred.y * to_src, entry.gt_x, entry.gt_y,
                              entry.scale_bucket, entry.scale_bucket);
            row.rds_retrieval = rds(rpred.x * to_src, rpred.y * to_src, entry.gt_x, entry.gt_y,
                                    entry.scale_bucket, entry.scale_bucket);
            row.time_fpi_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            row.time_retrieval_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) throw DataError("compare_retrieval: dataset has no samples");
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::string out = "rds_fpi,rds_retrieval,time_fpi_ms,time_retrieval_ms\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.3f,%.3f\n", r.rds_fpi, r.rds_retrieval,
                      r.time_fpi_ms, r.time_retrieval_ms);
        out += buf;
    }
    return out;
}

}  // namespace fpi
