#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cmis/data.hpp"

namespace cmis {

enum class LabelDistribution { peaked, uniform };
LabelDistribution parse_label_distribution(const std::string& s);
std::string to_string(LabelDistribution d);

/// Desk-scale stand-in for a licensed corpus: every individual carries a
/// constant motion offset, and agreement drives a smooth late bump along a
/// shared landmark pattern.
struct SynthConfig {
    std::size_t n_individuals = 20;
    std::size_t samples_per_individual = 10;
    double baseline_scale = 1.0;
    double signal_scale = 1.0;
    double noise_scale = 0.1;
    LabelDistribution label_distribution = LabelDistribution::peaked;
    std::uint64_t seed = 0;

    std::size_t width = 136;
    int fps = 25;
    double window_secs = 3.0;
    /// Extra frames before the window in exported landmark files.
    double lead_secs = 1.0;
    /// Per-individual share of labeled samples assigned to validation.
    double validation_fraction = 0.3;
    /// Non-backchannel clips per individual (label 0, no bump).
    std::size_t negatives_per_individual = 4;
    /// Share of labeled samples carrying an auditive backchannel.
    double auditive_fraction = 0.0;
    /// Extra observation noise on auditive samples.
    double auditive_noise_scale = 0.3;
    /// Bump peak, in seconds before the end of the window.
    double bump_center_secs = 0.5;
    /// Standard deviation of the Gaussian bump in seconds.
    double bump_width_secs = 0.2;
    /// Share of each offset drawn along the signal pattern, in [0, 1]. At 1
    /// the offsets lie on the pattern and mimic agreement shifts.
    double baseline_overlap = 0.0;
};

void validate(const SynthConfig& cfg);

struct SynthDataset {
    Dataset data;
    /// Planted per-individual offsets b_i, 1×H each.
    std::map<std::string, Matrix> baselines;
    /// Shared unit landmark pattern that carries the agreement signal.
    Matrix signal_pattern;
    /// Per-frame speech scores at 25 fps keyed by sample id.
    std::map<std::string, std::vector<double>> scores;
    /// Landmark clips (lead-in + window) whose windowed diffs equal the motion.
    std::map<std::string, LandmarkSequence> landmarks;
};

SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Writes manifest.csv, landmarks/, scores/ and baselines.csv under `dir`.
void export_synthetic(const SynthDataset& ds, const std::filesystem::path& dir);

/// Shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace cmis
