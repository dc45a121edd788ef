#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmis/config.hpp"
#include "cmis/model.hpp"
#include "cmis/trainer.hpp"

namespace cmis {

// ---- data assembly -------------------------------------------------------

/// Synthetic generation or manifest ingestion, as configured.
Dataset load_experiment_data(const ExperimentConfig& cfg);
NeutralBank build_neutral_bank(const Dataset& data, const NeutralSelection& sel);

// ---- regression metrics --------------------------------------------------

struct Evaluation {
    double mse = 0.0;
    std::vector<std::string> sample_ids;
    std::vector<double> labels;
    std::vector<double> predictions;
};

/// Eval-mode predictions through R and their MSE. Throws on an empty split.
Evaluation evaluate_mse(CmisModel& model, const std::vector<Sample>& samples, bool clamp = false);
void write_predictions_csv(const std::filesystem::path& path, const Evaluation& ev);

// ---- densities -----------------------------------------------------------

struct DensityTable {
    std::vector<double> grid;
    std::vector<double> labels;
    std::vector<double> predictions;
};

/// Evenly spaced points on [−1.2, 1.2].
std::vector<double> density_grid(std::size_t points = 481);
/// Gaussian kernel density estimate evaluated on `grid`.
std::vector<double> kernel_density(const std::vector<double>& values, const std::vector<double>& grid,
                                   double bandwidth);
DensityTable export_densities(const std::vector<double>& labels, const std::vector<double>& predictions,
                              double bandwidth = 0.05, std::size_t points = 481);
void write_density_csv(const std::filesystem::path& path, const DensityTable& t);
/// Two polylines (labels, predictions) in a small standalone SVG.
void write_density_svg(const std::filesystem::path& path, const DensityTable& t);
double peak_height(const std::vector<double>& density);
double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

// ---- centroid separation -------------------------------------------------

/// [−1,0), [0,0.25), [0.25,0.5), [0.5,1].
enum class AgreementBin { negative = 0, low = 1, mid = 2, high = 3 };
inline constexpr std::array<AgreementBin, 4> kAllBins{AgreementBin::negative, AgreementBin::low, AgreementBin::mid,
                                                      AgreementBin::high};
AgreementBin bin_of(double label);
std::string to_string(AgreementBin b);

struct CentroidEntry {
    std::string individual;
    AgreementBin bin = AgreementBin::negative;
    /// Distance to the nearest center of the other individual in a different bin.
    double min_distance = 0.0;
    std::optional<AgreementBin> nearest;
    /// Set when the center is missing or has no different-bin partner.
    bool omitted = false;
};

struct CentroidReport {
    std::vector<CentroidEntry> entries;
    double total = 0.0;
    std::size_t included() const;
};

/// `features` holds one 1×D row per sample. Exactly two individuals.
CentroidReport centroid_separation(const std::vector<Matrix>& features, const std::vector<double>& labels,
                                   const std::vector<std::string>& individual_ids);

/// Time-averaged sequence features before and after standardization.
struct FeatureTaps {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};
FeatureTaps tap_features(CmisModel& model, const std::vector<Sample>& samples);

// ---- experiments ---------------------------------------------------------

struct ExperimentResult {
    Evaluation validation;
    std::vector<MetricsRow> metrics;
    std::size_t skipped = 0;
    double wall_s = 0.0;
};

/// Trains `spec` with the config's other settings on `data` and evaluates on
/// the validation split. `model_out` receives the trained model when given.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const AblationSpec& spec, const Dataset& data,
                                std::uint64_t seed, std::unique_ptr<CmisModel>* model_out = nullptr);

struct AblationRow {
    AblationSpec spec;
    std::uint64_t seed = 0;
    double mse = 0.0;
    double wall_s = 0.0;
};

/// Every valid component set, each with global and attention pooling.
std::vector<AblationSpec> component_specs(const AblationSpec& base);
std::vector<AblationSpec> translator_variant_specs(const AblationSpec& base);
std::vector<AblationSpec> ida_placement_specs(const AblationSpec& base);
/// Peak selection at 0.25 ± {0, 0.1, 0.25} plus non-backchannel negatives.
std::vector<AblationSpec> neutral_strategy_specs(const AblationSpec& base);

/// One run per (spec, seed), row order spec-major. All specs are validated
/// before the first run. Runs execute on up to `jobs` threads.
std::vector<AblationRow> run_ablation_matrix(const std::vector<AblationSpec>& specs, const ExperimentConfig& cfg,
                                             const Dataset& data, const std::vector<std::uint64_t>& seeds,
                                             std::size_t jobs = 1);
inline constexpr const char* kAblationHeader =
    "components,pooling,ida,translator,neutral_strategy,neutral_center,neutral_edge,seed,mse,wall_s";
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

// ---- modality split ------------------------------------------------------

enum class ModalityMode { all_to_all, all_to_visual, visual_to_all, visual_to_visual };
inline constexpr std::array<ModalityMode, 4> kAllModalityModes{ModalityMode::all_to_all, ModalityMode::all_to_visual,
                                                              ModalityMode::visual_to_all,
                                                              ModalityMode::visual_to_visual};
std::string to_string(ModalityMode m);
ModalityMode parse_modality_mode(const std::string& s);

/// Train/validation filters of one mode; throws when a filter empties a split.
Dataset filter_modality(const Dataset& data, ModalityMode mode);

struct ModalityRow {
    ModalityMode mode = ModalityMode::all_to_all;
    std::uint64_t seed = 0;
    double mse = 0.0;
    std::size_t train_samples = 0;
    std::size_t eval_samples = 0;
};

std::vector<ModalityRow> modality_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                             const std::vector<ModalityMode>& modes,
                                             const std::vector<std::uint64_t>& seeds);
inline constexpr const char* kModalityHeader = "mode,seed,mse,train_samples,eval_samples";
void write_modality_csv(const std::filesystem::path& path, const std::vector<ModalityRow>& rows);

struct ModalityStats {
    std::string split;
    Modality modality = Modality::unknown;
    std::size_t count = 0;
    double mean_label = 0.0;
    double label_std = 0.0;
};
/// Per split and modality sample counts and label moments.
std::vector<ModalityStats> modality_statistics(const Dataset& data);
inline constexpr const char* kModalityStatsHeader = "split,modality,count,mean_label,label_std";
void write_modality_stats_csv(const std::filesystem::path& path, const std::vector<ModalityStats>& rows);

}  // namespace cmis
