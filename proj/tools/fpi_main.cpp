// fpi: point localization of a query image inside a search map.
//
// Subcommands: gen-synth, train, eval, infer, compare-retrieval.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include "fpi/checkpoint.hpp"
#include "fpi/config.hpp"
#include "fpi/geodata.hpp"
#include "fpi/metrics.hpp"
#include "fpi/parallel.hpp"
#include "fpi/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

struct ConfigArgs {
    std::string file;
    std::string preset;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

// Precedence: CLI flag > config file > preset defaults.
fpi::RunConfig resolve_config(const ConfigArgs& args) {
    fpi::RunConfig cfg;
    if (!args.file.empty()) {
        cfg = fpi::RunConfig::load_file(args.file);
        if (!args.preset.empty() && args.preset != cfg.preset)
            throw fpi::DataError("--preset conflicts with the config file's preset; drop one");
    } else {
        cfg = fpi::RunConfig::from_preset(args.preset.empty() ? "desk" : args.preset);
    }
    if (args.seed_set) cfg.seed = args.seed;
    cfg.validate();
    return cfg;
}

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.file, "JSON config file (overlays its preset)");
    cmd->add_option("--preset", args.preset, "Config preset: desk or paper");
    cmd->add_option("--seed", args.seed, "Random seed override")->each([&args](const std::string&) {
        args.seed_set = true;
    });
}

int run_gen_synth(const std::string& out_dir, int pairs, std::uint64_t seed,
                  const std::string& split) {
    fpi::SynthParams params;
    fpi::synth_generate(out_dir, split, pairs, seed, params);
    std::cout << "wrote " << pairs << " " << split << " pairs under " << out_dir << "\n";
    return 0;
}

int run_train(const ConfigArgs& cargs, const std::string& data, const std::string& out_ckpt,
              std::string log_csv) {
    fpi::RunConfig cfg = resolve_config(cargs);
    if (log_csv.empty()) log_csv = out_ckpt + ".log.csv";
    fpi::TrainResult res = fpi::train_model(cfg, data, out_ckpt, log_csv, &std::cout);
    std::cout << "trained " << res.total_steps << " steps, final loss " << res.final_loss
              << ", checkpoint " << out_ckpt << "\n";
    return 0;
}

int run_eval(const ConfigArgs& cargs, const std::string& ckpt_path, const std::string& data,
             const std::string& report_base) {
    fpi::CheckpointData ckpt = fpi::load_checkpoint(ckpt_path);
    if (!cargs.file.empty() || !cargs.preset.empty()) {
        fpi::RunConfig requested = resolve_config(cargs);
        fpi::RunConfig snapshot = ckpt.config;
        snapshot.seed = requested.seed;  // seed is not a model property
        if (!(requested == snapshot))
            throw fpi::DataError("eval: --config/--preset conflicts with the checkpoint's config");
    }
    fpi::Model<float> model = fpi::model_from_checkpoint(ckpt);
    fpi::Dataset dataset = fpi::Dataset::load(data, "test");
    auto records = fpi::evaluate_model(model, ckpt.config, dataset, fpi::worker_count());
    fpi::ReportConfig rcfg;
    fpi::write_report(report_base + ".csv", report_base + ".json", records, rcfg);
    fpi::Report rep = fpi::build_report(records, rcfg);
    std::cout << "evaluated " << records.size() << " samples: rds_mean " << rep.rds_mean << "\n";
    for (const auto& [k, v] : rep.ma) std::cout << "  ma<" << k << "m " << v << "\n";
    std::cout << "report: " << report_base << ".csv / .json\n";
    return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& query_path,
              const std::string& search_path, const std::string& heatmap_path) {
    fpi::CheckpointData ckpt = fpi::load_checkpoint(ckpt_path);
    fpi::Model<float> model = fpi::model_from_checkpoint(ckpt);
    const fpi::RunConfig& cfg = ckpt.config;

    fpi::ImageU8 query_img = fpi::read_png(query_path);
    fpi::ImageU8 search_img = fpi::read_png(search_path);
    if (query_img.width != cfg.query_side || query_img.height != cfg.query_side)
        std::cerr << "warning: resizing query " << query_img.width << "x" << query_img.height
                  << " -> " << cfg.query_side << "x" << cfg.query_side << "\n";
    if (search_img.width != cfg.search_side || search_img.height != cfg.search_side)
        std::cerr << "warning: resizing search map " << search_img.width << "x" << search_img.height
                  << " -> " << cfg.search_side << "x" << cfg.search_side << "\n";

    fpi::Tensor<float> query = fpi::preprocess_image<float>(query_img, cfg.query_side,
                                                            cfg.norm_mean, cfg.norm_std);
    fpi::Tensor<float> search = fpi::preprocess_image<float>(search_img, cfg.search_side,
                                                             cfg.norm_mean, cfg.norm_std);
    auto [heat, pred] = model.forward_pair(query, search);
    if (!std::isfinite(pred.score)) throw fpi::NumericError("infer: non-finite score");

    // Report in the search image's own pixel coordinates.
    double sx = static_cast<double>(search_img.width) / cfg.search_side;
    double sy = static_cast<double>(search_img.height) / cfg.search_side;
    std::printf("x %.2f y %.2f score %.6f\n", pred.x * sx, pred.y * sy, pred.score);

    if (!heatmap_path.empty()) {
        fpi::write_heatmap_png(heat, heatmap_path, search_img.width, search_img.height);
        std::cout << "heatmap: " << heatmap_path << "\n";
    }
    return 0;
}

int run_compare(const std::string& ckpt_path, const std::string& data, const std::string& out_csv) {
    fpi::CheckpointData ckpt = fpi::load_checkpoint(ckpt_path);
    fpi::Model<float> model = fpi::model_from_checkpoint(ckpt);
    fpi::Dataset dataset = fpi::Dataset::load(data, "test");
    auto rows = fpi::compare_retrieval(model, ckpt.config, dataset, 1);

    std::ofstream f(out_csv, std::ios::trunc);
    if (!f) throw fpi::DataError("compare-retrieval: cannot open " + out_csv);
    f << fpi::compare_csv(rows);

    double rds_f = 0, rds_r = 0, t_f = 0, t_r = 0;
    for (const auto& r : rows) {
        rds_f += r.rds_fpi;
        rds_r += r.rds_retrieval;
        t_f += r.time_fpi_ms;
        t_r += r.time_retrieval_ms;
    }
    std::size_t n = rows.size();
    std::printf("pairs %zu\n", n);
    std::printf("rds_fpi_mean %.6f rds_retrieval_mean %.6f\n", rds_f / n, rds_r / n);
    std::printf("time_fpi_ms_mean %.3f time_retrieval_ms_mean %.3f ratio %.2f\n", t_f / n, t_r / n,
                t_r / t_f);
    std::cout << "csv: " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point localization of a query image inside a search map"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset split");
    std::string gen_out, gen_split = "train";
    int gen_pairs = 8;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output dataset root")->required();
    gen->add_option("--pairs", gen_pairs, "Number of pairs")->required();
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--split", gen_split, "train or test")->check(CLI::IsMember({"train", "test"}));

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    ConfigArgs train_cfg;
    std::string train_data, train_out, train_log;
    add_config_flags(train, train_cfg);
    train->add_option("--data", train_data, "Dataset root (expects <data>/train)")->required();
    train->add_option("--out", train_out, "Checkpoint output path")->required();
    train->add_option("--log", train_log, "Training log CSV (default: <out>.log.csv)");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
    ConfigArgs eval_cfg;
    std::string eval_ckpt, eval_data, eval_report;
    add_config_flags(eval, eval_cfg);
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
    eval->add_option("--data", eval_data, "Dataset root (expects <data>/test)")->required();
    eval->add_option("--report", eval_report, "Report basename (writes .csv and .json)")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "Locate one query in one search map");
    std::string infer_ckpt, infer_query, infer_search, infer_heatmap;
    infer->add_option("--ckpt", infer_ckpt, "Checkpoint path")->required();
    infer->add_option("--query", infer_query, "Query PNG")->required();
    infer->add_option("--search", infer_search, "Search map PNG")->required();
    infer->add_option("--heatmap", infer_heatmap, "Optional heatmap PNG output");

    // compare-retrieval
    auto* cmp = app.add_subcommand("compare-retrieval", "Direct localization vs tile retrieval");
    std::string cmp_ckpt, cmp_data, cmp_out;
    cmp->add_option("--ckpt", cmp_ckpt, "Checkpoint path")->required();
    cmp->add_option("--data", cmp_data, "Dataset root (expects <data>/test)")->required();
    cmp->add_option("--out", cmp_out, "Per-pair CSV output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_synth(gen_out, gen_pairs, gen_seed, gen_split);
        if (train->parsed()) return run_train(train_cfg, train_data, train_out, train_log);
        if (eval->parsed()) return run_eval(eval_cfg, eval_ckpt, eval_data, eval_report);
        if (infer->parsed()) return run_infer(infer_ckpt, infer_query, infer_search, infer_heatmap);
        if (cmp->parsed()) return run_compare(cmp_ckpt, cmp_data, cmp_out);
    } catch (const fpi::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const fpi::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
