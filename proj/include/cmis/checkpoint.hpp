#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmis/config.hpp"
#include "cmis/model.hpp"
#include "cmis/trainer.hpp"

namespace cmis {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// File layout: 8-byte magic "CMISCKPT", u32 format version, u64 header
/// length, JSON header (config snapshot and hash, resolved model widths,
/// seed, progress marker, frozen modules, metrics so far, block index), then
/// the parameter and momentum blocks as little-endian doubles.
struct CheckpointState {
    ExperimentConfig config;
    ModelConfig model_config;
    std::uint64_t seed = 0;
    Progress progress;
    std::vector<MetricsRow> metrics;
};

void save_checkpoint(const std::filesystem::path& path, CmisModel& model, const CheckpointState& state);

struct LoadedCheckpoint {
    CheckpointState state;
    std::string config_hash;
    std::unique_ptr<CmisModel> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Order-sensitive FNV-1a digest over parameter values, used to prove that
/// frozen blocks did not move.
std::uint64_t parameter_digest(const ParamList& params);

}  // namespace cmis
