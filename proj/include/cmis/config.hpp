#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>

#include "cmis/data.hpp"
#include "cmis/model.hpp"
#include "cmis/synth.hpp"
#include "cmis/trainer.hpp"

namespace cmis {

/// Unknown key, malformed value or failed validation in an experiment config.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment; blank lines ignored.
KeyValues parse_key_values(std::istream& in, const std::string& source);
KeyValues load_key_values(const std::filesystem::path& path);

enum class DataSource { synthetic, manifest };

struct DataConfig {
    DataSource source = DataSource::synthetic;
    /// Manifest path; relative paths resolve against the config file.
    std::filesystem::path manifest;
    int fps = 25;
    DatasetOptions options;
};

struct EvalConfig {
    /// Clamp reported predictions to [−1, 1].
    bool clamp = false;
    double density_bandwidth = 0.05;
};

/// Everything one experiment needs. `model.input_width = 0` means "take it
/// from the data".
struct ExperimentConfig {
    DataConfig data;
    SynthConfig synth;
    ModelConfig model;
    AblationSpec ablation;
    IdaConfig ida;
    TrainConfig train;
    EvalConfig eval;

    ExperimentConfig();

    /// Starts from defaults and applies every pair; throws ConfigError.
    static ExperimentConfig from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;
    /// Sorted `key = value` lines; identical configs give identical text.
    std::string canonical() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;
    void validate() const;

    /// Augmentation settings with the placement taken from the ablation spec.
    IdaConfig effective_ida() const;
    /// Model widths with input_width resolved against the data width.
    ModelConfig resolved_model(std::size_t data_width) const;
};

/// Loads, applies `overrides` on top, validates. Relative manifest paths are
/// resolved against the config file's directory.
ExperimentConfig load_config(const std::filesystem::path& path, const KeyValues& overrides = {});

/// Documented list of accepted keys with their defaults.
std::string describe_config_keys();

/// Full-scale hyperparameters: H=136, 3 s at 25 fps, D=128, six layers of
/// four heads, batch 32, 100 epochs, lr 0.01 decayed 0.1× every 20 epochs.
ExperimentConfig full_scale_config();

}  // namespace cmis
