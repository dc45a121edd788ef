#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cmis/losses.hpp"
#include "cmis/model.hpp"

namespace cmis {

enum class Stage { neutral = 1, emotional = 2, translators = 3, regressor = 4, done = 5 };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);
Stage next_stage(Stage s);

/// Epoch budget per stage.
struct StageBudget {
    std::size_t neutral = 25;
    std::size_t emotional = 25;
    std::size_t translators = 25;
    std::size_t regressor = 25;
    std::size_t of(Stage s) const;
    std::size_t total() const { return neutral + emotional + translators + regressor; }
};

struct TrainConfig {
    std::size_t batch_size = 32;
    StageBudget epochs;
    double lr = 0.01;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_every = 20;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t n_neutral = 4;
    std::uint64_t seed = 0;
    LossSign sign = LossSign::minimize;
    /// Apply augmentation to the translators' inputs during stage 3.
    bool ida_in_translator_stage = false;
    /// Caps batches per epoch (0 = no cap); used by dry runs.
    std::size_t max_batches_per_epoch = 0;
};

void validate(const TrainConfig& cfg);

/// Step schedule restarted at the beginning of every stage.
double learning_rate(const TrainConfig& cfg, std::size_t epoch_in_stage);

/// SGD with momentum; weight decay is added to the gradient before the
/// momentum update. Frozen parameters are skipped.
void sgd_step(const ParamList& params, double lr, double momentum, double weight_decay);
void zero_grads(const ParamList& params);
void reset_momentum(const ParamList& params);

/// Position in the protocol: the next epoch to run.
struct Progress {
    Stage stage = Stage::neutral;
    std::size_t epoch = 0;
    friend bool operator==(const Progress&, const Progress&) = default;
};

struct MetricsRow {
    std::string stage;
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    double mse = 0.0;
    double lr = 0.0;
    double wall_clock_s = 0.0;
};

inline constexpr const char* kMetricsHeader = "stage,epoch,split,loss,mse,lr,wall_clock_s";
std::string format_metrics(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct EpochStats {
    double train_loss = 0.0;
    double validation_loss = 0.0;
    std::size_t skipped = 0;
};

/// Runs the four-stage protocol: neutral encoders, emotional encoders with
/// R̂, translators, then pooling + R. Stages whose modules are absent from
/// the ablation spec are skipped.
class Trainer {
public:
    using EpochHook = std::function<void(const Trainer&)>;

    Trainer(CmisModel& model, const Dataset& data, const NeutralBank& bank, const TrainConfig& cfg,
            const IdaConfig& ida);

    /// Runs from the current progress marker to the end.
    void run();
    /// Runs one full stage starting at the current epoch of that stage.
    void run_stage(Stage s);
    EpochStats run_epoch(Stage s, std::size_t epoch);

    /// Stage loss over `samples` in eval mode without updating anything.
    double measure(Stage s, const std::vector<Sample>& samples, std::uint64_t draw_tag) const;

    /// Called after every epoch, once the progress marker has advanced.
    void set_epoch_hook(EpochHook hook) { hook_ = std::move(hook); }
    void restore(const Progress& p, std::vector<MetricsRow> metrics);

    const Progress& progress() const { return progress_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    std::size_t skipped_samples() const { return skipped_; }
    bool stage_active(Stage s) const;
    const TrainConfig& config() const { return cfg_; }
    CmisModel& model() const { return model_; }

private:
    void begin_stage(Stage s);
    void end_stage(Stage s);
    std::set<ModuleId> trainable(Stage s) const;
    std::vector<std::size_t> eligible(Stage s, const std::vector<Sample>& samples) const;

    CmisModel& model_;
    const Dataset& data_;
    const NeutralBank& bank_;
    TrainConfig cfg_;
    IdaConfig ida_;
    Progress progress_;
    std::vector<MetricsRow> metrics_;
    std::size_t skipped_ = 0;
    EpochHook hook_;
    std::chrono::steady_clock::time_point start_;
    double wall_offset_ = 0.0;
};

}  // namespace cmis
