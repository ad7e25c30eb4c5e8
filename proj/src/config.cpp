#include "fpi/config.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

using json = nlohmann::json;

namespace fpi {

RunConfig RunConfig::preset_desk() {
    RunConfig c;
    c.preset = "desk";
    c.patch_size = 8;
    c.embed_dim = 64;
    c.depth = 4;
    c.heads = 4;
    c.query_side = 64;
    c.search_side = 160;
    c.optim.batch_size = 8;
    c.optim.epochs = 0;
    c.optim.lr_drop_epochs.clear();
    c.optim.max_steps = 300;
    c.optim.lr_drop_steps = {188, 263};
    return c;
}

RunConfig RunConfig::preset_paper() {
    RunConfig c;
    c.preset = "paper";
    c.patch_size = 16;
    c.embed_dim = 384;
    c.depth = 12;
    c.heads = 6;
    c.query_side = 112;
    c.search_side = 400;
    c.optim.batch_size = 16;
    c.optim.epochs = 16;
    c.optim.lr_drop_epochs = {10, 14};
    c.optim.max_steps = 0;
    return c;
}

RunConfig RunConfig::from_preset(const std::string& name) {
    if (name == "desk") return preset_desk();
    if (name == "paper") return preset_paper();
    throw std::invalid_argument("unknown preset '" + name + "' (expected 'desk' or 'paper')");
}

void RunConfig::validate() const {
    query_encoder_cfg().validate();
    search_encoder_cfg().validate();
    augment.validate();
    if (loss.region <= 0) throw std::invalid_argument("config: loss R must be positive");
    if (loss.w_neg < 0) throw std::invalid_argument("config: negative weight must be >= 0");
    if (optim.lr <= 0) throw std::invalid_argument("config: lr must be > 0");
    if (optim.batch_size <= 0) throw std::invalid_argument("config: batch size must be > 0");
    if (optim.max_steps < 0 || optim.epochs < 0)
        throw std::invalid_argument("config: step/epoch budget must be >= 0");
    if (optim.max_steps == 0 && optim.epochs == 0)
        throw std::invalid_argument("config: need max_steps or epochs");
    if (search_side % patch_size != 0 || query_side % patch_size != 0)
        throw std::invalid_argument("config: input sides must divide by the patch size");
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("config: JSON parse error: ") + e.what());
    }
    std::string preset = j.value("preset", std::string("desk"));
    RunConfig c = from_preset(preset);

    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        maybe(e, "patch_size", c.patch_size);
        maybe(e, "embed_dim", c.embed_dim);
        maybe(e, "depth", c.depth);
        maybe(e, "heads", c.heads);
        maybe(e, "mlp_ratio", c.mlp_ratio);
        maybe(e, "query_side", c.query_side);
        maybe(e, "search_side", c.search_side);
        maybe(e, "share_weights", c.share_weights);
        maybe(e, "normalize_logits", c.normalize_logits);
    }
    if (j.contains("loss")) {
        const json& e = j.at("loss");
        maybe(e, "w_neg", c.loss.w_neg);
        maybe(e, "R", c.loss.region);
        maybe(e, "log_eps", c.loss.log_eps);
        maybe(e, "count_clipped", c.loss.count_clipped);
    }
    if (j.contains("optim")) {
        const json& e = j.at("optim");
        maybe(e, "lr", c.optim.lr);
        maybe(e, "weight_decay", c.optim.weight_decay);
        maybe(e, "epochs", c.optim.epochs);
        maybe(e, "lr_drop_epochs", c.optim.lr_drop_epochs);
        maybe(e, "batch_size", c.optim.batch_size);
        maybe(e, "max_steps", c.optim.max_steps);
        maybe(e, "lr_drop_steps", c.optim.lr_drop_steps);
    }
    if (j.contains("augment")) {
        const json& e = j.at("augment");
        maybe(e, "coverage", c.augment.coverage);
        maybe(e, "scale_min", c.augment.scale_min);
        maybe(e, "scale_max", c.augment.scale_max);
    }
    if (j.contains("norm_mean")) c.norm_mean = j.at("norm_mean").get<std::array<double, 3>>();
    if (j.contains("norm_std")) c.norm_std = j.at("norm_std").get<std::array<double, 3>>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

std::string RunConfig::to_json_string() const {
    json j;
    j["preset"] = preset;
    j["encoder"] = {{"patch_size", patch_size},   {"embed_dim", embed_dim},
                    {"depth", depth},             {"heads", heads},
                    {"mlp_ratio", mlp_ratio},     {"query_side", query_side},
                    {"search_side", search_side}, {"share_weights", share_weights},
                    {"normalize_logits", normalize_logits}};
    j["loss"] = {{"w_neg", loss.w_neg},
                 {"R", loss.region},
                 {"log_eps", loss.log_eps},
                 {"count_clipped", loss.count_clipped}};
    j["optim"] = {{"lr", optim.lr},
                  {"weight_decay", optim.weight_decay},
                  {"epochs", optim.epochs},
                  {"lr_drop_epochs", optim.lr_drop_epochs},
                  {"batch_size", optim.batch_size},
                  {"max_steps", optim.max_steps},
                  {"lr_drop_steps", optim.lr_drop_steps}};
    j["augment"] = {{"coverage", augment.coverage},
                    {"scale_min", augment.scale_min},
                    {"scale_max", augment.scale_max}};
    j["norm_mean"] = norm_mean;
    j["norm_std"] = norm_std;
    j["seed"] = seed;
    return j.dump(2);
}

}  // namespace fpi
