#include "cmis/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace cmis {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string num(double v) { return format_double(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }

struct Entry {
    const char* key;
    const char* help;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

#define CMIS_SIZE(k, field, help)                                                                        \
    Entry{k, help, [](const ExperimentConfig& c) { return num(static_cast<std::uint64_t>(c.field)); }, \
          [](ExperimentConfig& c, const std::string& key, const std::string& v) {                       \
              c.field = static_cast<decltype(c.field)>(to_u64(key, v));                                 \
          }}
#define CMIS_REAL(k, field, help)                                                  \
    Entry{k, help, [](const ExperimentConfig& c) { return num(c.field); },         \
          [](ExperimentConfig& c, const std::string& key, const std::string& v) { \
              c.field = to_double(key, v);                                         \
          }}
#define CMIS_BOOL(k, field, help)                                                  \
    Entry{k, help, [](const ExperimentConfig& c) { return flag(c.field); },        \
          [](ExperimentConfig& c, const std::string& key, const std::string& v) { \
              c.field = to_bool(key, v);                                           \
          }}
#define CMIS_ENUM(k, field, parse, help)                                                  \
    Entry{k, help, [](const ExperimentConfig& c) { return to_string(c.field); },          \
          [](ExperimentConfig& c, const std::string&, const std::string& v) { c.field = parse(v); }}

std::string to_string(DataSource s) { return s == DataSource::manifest ? "manifest" : "synthetic"; }
DataSource parse_source(const std::string& s) {
    if (s == "manifest") return DataSource::manifest;
    if (s == "synthetic") return DataSource::synthetic;
    throw std::invalid_argument("unknown data source '" + s + "'");
}
std::string to_string(WindowOrder o) { return o == WindowOrder::crop_then_diff ? "crop_then_diff" : "diff_then_crop"; }
WindowOrder parse_order(const std::string& s) {
    if (s == "crop_then_diff") return WindowOrder::crop_then_diff;
    if (s == "diff_then_crop") return WindowOrder::diff_then_crop;
    throw std::invalid_argument("unknown window order '" + s + "'");
}
std::string to_string(LossSign s) { return s == LossSign::literal ? "literal" : "minimize"; }
LossSign parse_sign(const std::string& s) {
    if (s == "literal") return LossSign::literal;
    if (s == "minimize") return LossSign::minimize;
    throw std::invalid_argument("unknown loss sign '" + s + "'");
}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        CMIS_ENUM("data.source", data.source, parse_source, "synthetic | manifest"),
        Entry{"data.manifest", "manifest CSV path (data.source = manifest)",
              [](const ExperimentConfig& c) { return c.data.manifest.string(); },
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.manifest = v; }},
        CMIS_SIZE("data.fps", data.fps, "frame rate of landmark files"),
        CMIS_REAL("data.window_secs", data.options.window_secs, "seconds kept at the end of each clip"),
        CMIS_ENUM("data.window_order", data.options.order, parse_order, "crop_then_diff | diff_then_crop"),
        CMIS_BOOL("data.classify_modality", data.options.classify, "tag modalities from score files"),
        CMIS_SIZE("modality.fps", data.options.rule.fps, "score file frame rate"),
        CMIS_REAL("modality.window_secs", data.options.rule.window_secs, "window scanned for speech runs"),
        CMIS_REAL("modality.threshold", data.options.rule.threshold, "score a frame must exceed"),
        CMIS_SIZE("modality.run_len", data.options.rule.run_len, "consecutive frames needed"),

        CMIS_SIZE("synth.n_individuals", synth.n_individuals, "individuals"),
        CMIS_SIZE("synth.samples_per_individual", synth.samples_per_individual, "labeled clips per individual"),
        CMIS_REAL("synth.baseline_scale", synth.baseline_scale, "norm of the planted offsets"),
        CMIS_REAL("synth.signal_scale", synth.signal_scale, "amplitude of the agreement bump"),
        CMIS_REAL("synth.noise_scale", synth.noise_scale, "observation noise std"),
        CMIS_ENUM("synth.label_distribution", synth.label_distribution, parse_label_distribution,
                  "peaked | uniform"),
        CMIS_SIZE("synth.seed", synth.seed, "generator seed"),
        CMIS_SIZE("synth.width", synth.width, "landmark coordinates per frame"),
        CMIS_SIZE("synth.fps", synth.fps, "frame rate"),
        CMIS_REAL("synth.window_secs", synth.window_secs, "clip window"),
        CMIS_REAL("synth.lead_secs", synth.lead_secs, "extra frames before the window"),
        CMIS_REAL("synth.validation_fraction", synth.validation_fraction, "share of clips held out"),
        CMIS_SIZE("synth.negatives_per_individual", synth.negatives_per_individual, "non-backchannel clips"),
        CMIS_REAL("synth.auditive_fraction", synth.auditive_fraction, "share of auditive clips"),
        CMIS_REAL("synth.auditive_noise_scale", synth.auditive_noise_scale, "extra noise on auditive clips"),
        CMIS_REAL("synth.bump_center_secs", synth.bump_center_secs, "bump peak before the window end"),
        CMIS_REAL("synth.bump_width_secs", synth.bump_width_secs, "bump standard deviation"),
        CMIS_REAL("synth.baseline_overlap", synth.baseline_overlap, "share of the offset along the signal pattern"),

        CMIS_SIZE("model.input_width", model.input_width, "0 = take from the data"),
        CMIS_SIZE("model.frame_width", model.frame_width, "frame feature width"),
        CMIS_SIZE("model.frame_attn_width", model.frame_attn_width, "gate projection width"),
        CMIS_SIZE("model.seq_width", model.seq_width, "sequence feature width"),
        CMIS_SIZE("model.seq_layers", model.seq_layers, "Transformer layers"),
        CMIS_SIZE("model.seq_heads", model.seq_heads, "attention heads"),
        CMIS_SIZE("model.seq_ffn_width", model.seq_ffn_width, "feed-forward width"),
        CMIS_BOOL("model.positional", model.positional, "sinusoidal positions"),
        CMIS_SIZE("model.translator_hidden", model.translator_hidden, "recurrent translator state width"),
        CMIS_SIZE("model.tap_width", model.tap_width, "pooling projection width"),
        CMIS_SIZE("model.regressor_hidden", model.regressor_hidden, "regressor hidden width"),
        CMIS_SIZE("model.regressor_layers", model.regressor_layers, "regressor hidden layers"),
        CMIS_ENUM("model.activation", model.activation, parse_activation, "relu | tanh | gelu | identity"),
        CMIS_BOOL("model.fltb_scale_scores", model.fltb_scale_scores, "divide gate scores by sqrt(width)"),
        CMIS_BOOL("model.tap_tanh", model.tap_tanh, "tanh inside pooling scores"),
        CMIS_BOOL("model.mirror_neutral_init", model.mirror_neutral_init,
                  "neutral encoders start from the emotional encoders' weights"),

        Entry{"ablation.components", "components, e.g. FLE+FLT+SLE+SLT",
              [](const ExperimentConfig& c) { return c.ablation.components(); },
              [](ExperimentConfig& c, const std::string&, const std::string& v) {
                  const AblationSpec parsed = AblationSpec::from_components(v);
                  c.ablation.fle = parsed.fle;
                  c.ablation.flt = parsed.flt;
                  c.ablation.sle = parsed.sle;
                  c.ablation.slt = parsed.slt;
              }},
        CMIS_ENUM("ablation.pooling", ablation.pooling, parse_pooling, "tap | global"),
        CMIS_ENUM("ablation.ida", ablation.ida, parse_ida_placement, "none | flee | slee | both"),
        CMIS_ENUM("ablation.translator", ablation.translator, parse_translator_kind, "attention | ed_gru | ed_lstm"),
        CMIS_ENUM("neutral.strategy", ablation.neutral.strategy, parse_neutral_strategy, "peak | non_backchannel"),
        CMIS_REAL("neutral.center", ablation.neutral.center, "peak strategy center"),
        CMIS_REAL("neutral.edge", ablation.neutral.edge, "peak strategy half-width"),

        CMIS_REAL("ida.noise_std", ida.noise_std, "latent noise std"),
        CMIS_REAL("ida.mask_prob", ida.mask_prob, "latent masking probability"),
        CMIS_BOOL("ida.rescale", ida.rescale, "rescale kept elements by 1/(1-p)"),
        CMIS_BOOL("ida.framewise_mask", ida.framewise_mask, "mask whole frames"),

        CMIS_SIZE("train.batch_size", train.batch_size, "samples per step"),
        Entry{"train.epochs", "total epochs, split evenly over the four stages",
              [](const ExperimentConfig& c) { return num(static_cast<std::uint64_t>(c.train.epochs.total())); },
              [](ExperimentConfig& c, const std::string& key, const std::string& v) {
                  const auto total = to_u64(key, v);
                  c.train.epochs.neutral = c.train.epochs.emotional = c.train.epochs.translators = total / 4;
                  c.train.epochs.regressor = total - 3 * (total / 4);
              }},
        CMIS_SIZE("train.epochs.neutral", train.epochs.neutral, "stage 1 epochs"),
        CMIS_SIZE("train.epochs.emotional", train.epochs.emotional, "stage 2 epochs"),
        CMIS_SIZE("train.epochs.translators", train.epochs.translators, "stage 3 epochs"),
        CMIS_SIZE("train.epochs.regressor", train.epochs.regressor, "stage 4 epochs"),
        CMIS_REAL("train.lr", train.lr, "initial learning rate of every stage"),
        CMIS_REAL("train.lr_decay_factor", train.lr_decay_factor, "step decay factor"),
        CMIS_SIZE("train.lr_decay_every", train.lr_decay_every, "epochs between decays"),
        CMIS_REAL("train.momentum", train.momentum, "SGD momentum"),
        CMIS_REAL("train.weight_decay", train.weight_decay, "L2 weight decay"),
        CMIS_SIZE("train.n_neutral", train.n_neutral, "neutral draws per sample"),
        CMIS_SIZE("train.seed", train.seed, "initialization and training seed"),
        CMIS_ENUM("train.loss_sign", train.sign, parse_sign, "minimize | literal (inspection only)"),
        CMIS_BOOL("train.ida_in_translator_stage", train.ida_in_translator_stage, "augment translator inputs"),
        CMIS_SIZE("train.max_batches_per_epoch", train.max_batches_per_epoch, "0 = no cap"),

        CMIS_BOOL("eval.clamp", eval.clamp, "clamp predictions to [-1, 1]"),
        CMIS_REAL("eval.density_bandwidth", eval.density_bandwidth, "Gaussian kernel bandwidth"),
    };
    return table;
}

#undef CMIS_SIZE
#undef CMIS_REAL
#undef CMIS_BOOL
#undef CMIS_ENUM

const Entry* find_entry(const std::string& key) {
    for (const auto& e : entries())
        if (key == e.key) return &e;
    return nullptr;
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        if (kv.contains(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.emplace(std::move(key), std::move(value));
    }
    return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_key_values(in, path.string());
}

ExperimentConfig::ExperimentConfig() {
    model.input_width = 0;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
    ExperimentConfig c;
    // The total epoch key is applied first so per-stage keys can refine it.
    if (auto it = kv.find("train.epochs"); it != kv.end()) find_entry("train.epochs")->set(c, it->first, it->second);
    for (const auto& [key, value] : kv) {
        if (key == "train.epochs") continue;
        const Entry* e = find_entry(key);
        if (!e) throw ConfigError("unknown config key '" + key + "'");
        try {
            e->set(c, key, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ConfigError("config key '" + key + "': " + ex.what());
        }
    }
    c.validate();
    return c;
}

KeyValues ExperimentConfig::to_key_values() const {
    KeyValues kv;
    for (const auto& e : entries()) {
        if (std::string(e.key) == "train.epochs") continue;
        kv.emplace(e.key, e.get(*this));
    }
    return kv;
}

std::string ExperimentConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : to_key_values()) out += k + " = " + v + "\n";
    return out;
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string ExperimentConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

void ExperimentConfig::validate() const {
    try {
        ablation.validate();
        cmis::validate(ida);
        cmis::validate(train);
        cmis::validate(synth);
        ModelConfig m = model;
        if (m.input_width == 0) m.input_width = 1;
        cmis::validate(m);
        if (data.fps <= 0) throw std::invalid_argument("data.fps must be positive");
        if (!(data.options.window_secs > 0.0)) throw std::invalid_argument("data.window_secs must be positive");
        if (data.source == DataSource::manifest && data.manifest.empty())
            throw std::invalid_argument("data.manifest is required when data.source = manifest");
        if (ablation.neutral.edge < 0.0) throw std::invalid_argument("neutral.edge must be non-negative");
        if (!(eval.density_bandwidth > 0.0)) throw std::invalid_argument("eval.density_bandwidth must be positive");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

IdaConfig ExperimentConfig::effective_ida() const {
    IdaConfig out = ida;
    out.enabled_after_flee = ablation.ida == IdaPlacement::flee || ablation.ida == IdaPlacement::both;
    out.enabled_after_slee = ablation.ida == IdaPlacement::slee || ablation.ida == IdaPlacement::both;
    return out;
}

ModelConfig ExperimentConfig::resolved_model(std::size_t data_width) const {
    ModelConfig m = model;
    if (m.input_width == 0) m.input_width = data_width;
    else if (m.input_width != data_width)
        throw ConfigError("model.input_width = " + std::to_string(m.input_width) + " but the data has width " +
                          std::to_string(data_width));
    return m;
}

ExperimentConfig load_config(const std::filesystem::path& path, const KeyValues& overrides) {
    KeyValues kv = load_key_values(path);
    for (const auto& [k, v] : overrides) kv[k] = v;
    ExperimentConfig c = ExperimentConfig::from_key_values(kv);
    if (!c.data.manifest.empty() && c.data.manifest.is_relative())
        c.data.manifest = std::filesystem::weakly_canonical(std::filesystem::absolute(path).parent_path() / c.data.manifest);
    return c;
}

std::string describe_config_keys() {
    const ExperimentConfig defaults;
    std::ostringstream out;
    for (const auto& e : entries()) out << e.key << " = " << e.get(defaults) << "    # " << e.help << '\n';
    return out.str();
}

ExperimentConfig full_scale_config() {
    ExperimentConfig c;
    c.synth.width = 136;
    c.synth.fps = 25;
    c.synth.window_secs = 3.0;
    c.model.input_width = 0;
    c.model.frame_width = c.model.frame_attn_width = c.model.seq_width = 128;
    c.model.seq_layers = 6;
    c.model.seq_heads = 4;
    c.model.seq_ffn_width = 256;
    c.model.translator_hidden = c.model.tap_width = 128;
    c.train.batch_size = 32;
    c.train.epochs = StageBudget{};
    c.train.lr = 0.01;
    c.train.lr_decay_factor = 0.1;
    c.train.lr_decay_every = 20;
    c.train.momentum = 0.9;
    c.train.weight_decay = 1e-4;
    return c;
}

}  // namespace cmis
