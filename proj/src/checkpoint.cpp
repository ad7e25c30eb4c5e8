#include "fpi/checkpoint.hpp"
#include "fpi/geodata.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace fpi {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'I', '1'};

void put_f32_le(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<std::uint8_t>(bits));
    out.push_back(static_cast<std::uint8_t>(bits >> 8));
    out.push_back(static_cast<std::uint8_t>(bits >> 16));
    out.push_back(static_cast<std::uint8_t>(bits >> 24));
}

float get_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& config, long step,
                     const std::vector<std::pair<std::string, Tensor<float>>>& params) {
    json manifest = json::array();
    std::size_t total = 0;
    for (const auto& [name, t] : params) {
        manifest.push_back({{"name", name}, {"shape", t.shape()}});
        total += t.numel();
    }
    json header;
    header["config"] = json::parse(config.to_json_string());
    header["manifest"] = manifest;
    header["step"] = step;
    std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_text.size() + total * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    std::uint32_t hlen = static_cast<std::uint32_t>(header_text.size());
    out.push_back(static_cast<std::uint8_t>(hlen));
    out.push_back(static_cast<std::uint8_t>(hlen >> 8));
    out.push_back(static_cast<std::uint8_t>(hlen >> 16));
    out.push_back(static_cast<std::uint8_t>(hlen >> 24));
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const auto& [name, t] : params)
        for (float v : t.value()) put_f32_le(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("save_checkpoint: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DataError("load_checkpoint: bad magic in " + path);
    std::uint32_t hlen = static_cast<std::uint32_t>(bytes[4]) | (static_cast<std::uint32_t>(bytes[5]) << 8) |
                         (static_cast<std::uint32_t>(bytes[6]) << 16) | (static_cast<std::uint32_t>(bytes[7]) << 24);
    if (bytes.size() < 8 + static_cast<std::size_t>(hlen))
        throw DataError("load_checkpoint: truncated header in " + path);

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    } catch (const std::exception& e) {
        throw DataError("load_checkpoint: malformed header in " + path + ": " + e.what());
    }

    CheckpointData ckpt;
    ckpt.config = RunConfig::from_json_string(header.at("config").dump());
    ckpt.step = header.at("step").get<long>();

    std::size_t total = 0;
    for (const auto& entry : header.at("manifest")) {
        ckpt.names.push_back(entry.at("name").get<std::string>());
        Shape shape = entry.at("shape").get<Shape>();
        total += shape_numel(shape);
        ckpt.shapes.push_back(std::move(shape));
    }
    if (bytes.size() != 8 + hlen + total * 4)
        throw DataError("load_checkpoint: payload length mismatch in " + path);

    const std::uint8_t* p = bytes.data() + 8 + hlen;
    for (const auto& shape : ckpt.shapes) {
        std::size_t n = shape_numel(shape);
        std::vector<float> vals(n);
        for (std::size_t i = 0; i < n; ++i, p += 4) vals[i] = get_f32_le(p);
        ckpt.values.push_back(std::move(vals));
    }
    return ckpt;
}

void apply_checkpoint(Model<float>& model, const CheckpointData& ckpt) {
    auto params = model.named_params();
    if (params.size() != ckpt.names.size())
        throw DataError("checkpoint: parameter count mismatch (model " +
                        std::to_string(params.size()) + ", checkpoint " +
                        std::to_string(ckpt.names.size()) + ")");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = params[i];
        if (name != ckpt.names[i])
            throw DataError("checkpoint: parameter name mismatch at index " + std::to_string(i) +
                            ": model '" + name + "' vs checkpoint '" + ckpt.names[i] + "'");
        if (t.shape() != ckpt.shapes[i])
            throw DataError("checkpoint: shape mismatch for '" + name + "'");
        std::copy(ckpt.values[i].begin(), ckpt.values[i].end(), t.value().begin());
    }
}

Model<float> model_from_checkpoint(const CheckpointData& ckpt) {
    const RunConfig& c = ckpt.config;
    Model<float> model = Model<float>::init(c.query_encoder_cfg(), c.search_encoder_cfg(),
                                            c.share_weights, c.normalize_logits, c.seed);
    apply_checkpoint(model, ckpt);
    return model;
}

}  // namespace fpi
