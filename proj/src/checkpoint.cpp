#include "cmis/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace cmis {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'I', 'S', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::json metrics_to_json(const std::vector<MetricsRow>& rows) {
    auto arr = nlohmann::json::array();
    // NaN is not valid JSON; store the metrics numbers as strings.
    for (const auto& r : rows)
        arr.push_back({r.stage, r.epoch, r.split, format_double(r.loss), format_double(r.mse), format_double(r.lr),
                       format_double(r.wall_clock_s)});
    return arr;
}

std::vector<MetricsRow> metrics_from_json(const nlohmann::json& arr) {
    std::vector<MetricsRow> out;
    for (const auto& r : arr)
        out.push_back({r[0].get<std::string>(), r[1].get<std::size_t>(), r[2].get<std::string>(),
                       std::stod(r[3].get<std::string>()), std::stod(r[4].get<std::string>()),
                       std::stod(r[5].get<std::string>()), std::stod(r[6].get<std::string>())});
    return out;
}

nlohmann::json model_config_to_json(const ModelConfig& m) {
    return {{"input_width", m.input_width}, {"frame_width", m.frame_width}, {"frame_attn_width", m.frame_attn_width},
            {"seq_width", m.seq_width}, {"seq_layers", m.seq_layers}, {"seq_heads", m.seq_heads},
            {"seq_ffn_width", m.seq_ffn_width}, {"positional", m.positional},
            {"translator_hidden", m.translator_hidden}, {"tap_width", m.tap_width},
            {"regressor_hidden", m.regressor_hidden}, {"regressor_layers", m.regressor_layers},
            {"activation", to_string(m.activation)}, {"fltb_scale_scores", m.fltb_scale_scores},
            {"tap_tanh", m.tap_tanh}, {"mirror_neutral_init", m.mirror_neutral_init}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.input_width = j.at("input_width");
    m.frame_width = j.at("frame_width");
    m.frame_attn_width = j.at("frame_attn_width");
    m.seq_width = j.at("seq_width");
    m.seq_layers = j.at("seq_layers");
    m.seq_heads = j.at("seq_heads");
    m.seq_ffn_width = j.at("seq_ffn_width");
    m.positional = j.at("positional");
    m.translator_hidden = j.at("translator_hidden");
    m.tap_width = j.at("tap_width");
    m.regressor_hidden = j.at("regressor_hidden");
    m.regressor_layers = j.at("regressor_layers");
    m.activation = parse_activation(j.at("activation").get<std::string>());
    m.fltb_scale_scores = j.at("fltb_scale_scores");
    m.tap_tanh = j.at("tap_tanh");
    m.mirror_neutral_init = j.at("mirror_neutral_init");
    return m;
}

void write_block(std::ofstream& out, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

}  // namespace

std::uint64_t parameter_digest(const ParamList& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, p] : params) {
        feed(name.data(), name.size());
        feed(p->value.data(), p->value.size() * sizeof(double));
    }
    return h;
}

void save_checkpoint(const std::filesystem::path& path, CmisModel& model, const CheckpointState& state) {
    const ParamList params = model.parameters();
    nlohmann::json header;
    header["config"] = state.config.to_key_values();
    header["config_hash"] = state.config.hash_hex();
    header["model"] = model_config_to_json(state.model_config);
    header["seed"] = state.seed;
    header["stage"] = to_string(state.progress.stage);
    header["epoch"] = state.progress.epoch;
    header["metrics"] = metrics_to_json(state.metrics);
    auto frozen = nlohmann::json::array();
    for (ModuleId m : kAllModules)
        if (model.frozen(m)) frozen.push_back(to_string(m));
    header["frozen"] = frozen;
    header["has_r_hat"] = model.has(ModuleId::r_hat);
    auto blocks = nlohmann::json::array();
    for (const auto& [name, p] : params) blocks.push_back({name, p->value.rows(), p->value.cols()});
    header["blocks"] = blocks;
    const std::string text = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        const std::uint32_t version = kCheckpointVersion;
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [_, p] : params) write_block(out, p->value);
        for (const auto& [_, p] : params) {
            if (p->momentum.same_shape(p->value)) write_block(out, p->momentum);
            else write_block(out, Matrix(p->value.rows(), p->value.cols()));
        }
        if (!out) throw CheckpointError("short write to checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint header in " + path.string());

    LoadedCheckpoint out;
    try {
        const auto header = nlohmann::json::parse(text);
        KeyValues kv = header.at("config").get<KeyValues>();
        out.state.config = ExperimentConfig::from_key_values(kv);
        out.config_hash = header.at("config_hash").get<std::string>();
        out.state.model_config = model_config_from_json(header.at("model"));
        out.state.seed = header.at("seed").get<std::uint64_t>();
        out.state.progress = {parse_stage(header.at("stage").get<std::string>()), header.at("epoch").get<std::size_t>()};
        out.state.metrics = metrics_from_json(header.at("metrics"));

        out.model = std::make_unique<CmisModel>(out.state.model_config, out.state.config.ablation, out.state.seed);
        if (!header.at("has_r_hat").get<bool>()) out.model->drop_pretrain_head();
        for (const auto& name : header.at("frozen")) out.model->set_frozen(parse_module_id(name.get<std::string>()), true);

        const ParamList params = out.model->parameters();
        const auto& blocks = header.at("blocks");
        if (blocks.size() != params.size())
            throw CheckpointError("checkpoint holds " + std::to_string(blocks.size()) + " blocks, model expects " +
                                  std::to_string(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& [name, p] = params[i];
            if (blocks[i][0].get<std::string>() != name || blocks[i][1].get<std::size_t>() != p->value.rows() ||
                blocks[i][2].get<std::size_t>() != p->value.cols())
                throw CheckpointError("checkpoint block " + blocks[i][0].get<std::string>() +
                                      " does not match model block " + name + " " + p->value.shape_str());
        }
        for (const auto& [_, p] : params)
            in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        for (const auto& [_, p] : params) {
            p->momentum = Matrix(p->value.rows(), p->value.cols());
            in.read(reinterpret_cast<char*>(p->momentum.data()),
                    static_cast<std::streamsize>(p->momentum.size() * sizeof(double)));
        }
        if (!in) throw CheckpointError("truncated parameter payload in " + path.string());
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace cmis
