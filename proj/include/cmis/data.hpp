#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmis/matrix.hpp"

namespace cmis {

/// Malformed or inconsistent input data. Messages name the offending sample.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Split { train, validation, negative };
enum class Modality { visual, auditive, unknown };

std::string to_string(Split s);
std::string to_string(Modality m);
Split parse_split(const std::string& s);
Modality parse_modality(const std::string& s);

/// M×H landmark coordinates of one clip.
struct LandmarkSequence {
    Matrix frames;
    int fps = 25;
    std::string individual_id;
    std::string sample_id;
};

/// T×H inter-frame differences; row t = frame[t+1] − frame[t].
struct MotionSequence {
    Matrix diffs;
    int fps = 25;
    std::string individual_id;
    std::string sample_id;

    std::size_t frames() const { return diffs.rows(); }
    std::size_t width() const { return diffs.cols(); }
};

struct Sample {
    MotionSequence motion;
    double label = 0.0;
    Split split = Split::train;
    Modality modality = Modality::unknown;

    const std::string& individual_id() const { return motion.individual_id; }
    const std::string& sample_id() const { return motion.sample_id; }
};

/// One manifest row after its landmark file has been read.
struct ManifestRecord {
    LandmarkSequence sequence;
    double label = 0.0;
    Split split = Split::train;
    std::optional<std::filesystem::path> score_path;
};

/// Reads a manifest CSV (`sample_id,individual_id,label,split,landmark_path[,score_path]`)
/// and every landmark file it references. Relative paths resolve against the
/// manifest's directory. Records come back sorted by sample_id.
std::vector<ManifestRecord> load_landmark_dataset(const std::filesystem::path& manifest, int fps);

/// Reads a headerless numeric CSV into a matrix; all rows must share a width.
Matrix read_numeric_csv(const std::filesystem::path& path, const std::string& context);
/// Single-column per-frame score file.
std::vector<double> read_scores(const std::filesystem::path& path, const std::string& context);

enum class WindowOrder {
    crop_then_diff,  // keep the last ⌈w·fps⌉ frames, then difference: T = ⌈w·fps⌉ − 1
    diff_then_crop,  // difference the whole clip, keep the last ⌈w·fps⌉ diffs: T = ⌈w·fps⌉
};

/// Number of frames covered by a window of `window_secs` at `fps`.
std::size_t window_frames(double window_secs, int fps);

MotionSequence window_and_diff(const LandmarkSequence& seq, double window_secs,
                               WindowOrder order = WindowOrder::crop_then_diff);

enum class NeutralStrategy { peak, non_backchannel };
std::string to_string(NeutralStrategy s);
NeutralStrategy parse_neutral_strategy(const std::string& s);

/// Per-individual pools of neutral samples, used only while training.
struct NeutralBank {
    std::map<std::string, std::vector<Sample>> pools;
    NeutralStrategy strategy = NeutralStrategy::peak;
    double center = 0.0;
    double edge = 0.0;

    bool covers(const std::string& individual_id) const;
    std::size_t total() const;
};

/// Training samples with |label − center| ≤ edge, grouped by individual.
NeutralBank select_neutral_peak(std::span<const Sample> dataset, double center, double edge);
/// Non-backchannel negatives grouped by individual.
NeutralBank select_neutral_nonbackchannel(std::span<const Sample> dataset, std::span<const Sample> negatives);

/// Draws n neutrals of one individual: without replacement when the pool
/// holds at least n samples, with replacement otherwise.
std::vector<Sample> draw_neutrals(const NeutralBank& bank, const std::string& individual_id, std::size_t n,
                                  std::uint64_t seed);

struct ModalityRule {
    int fps = 25;
    double window_secs = 3.0;
    double threshold = 0.2;
    std::size_t run_len = 7;
};

/// Auditive iff the last window holds run_len consecutive scores strictly above threshold.
Modality classify_modality(std::span<const double> frame_scores, const ModalityRule& rule = {});

/// Windowed, differenced samples split by role.
struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> negatives;

    std::size_t width() const;
    std::size_t frames() const;
};

struct DatasetOptions {
    double window_secs = 3.0;
    WindowOrder order = WindowOrder::crop_then_diff;
    /// Tag modalities from score files when present.
    bool classify = true;
    ModalityRule rule;
};

Dataset build_dataset(const std::vector<ManifestRecord>& records, const DatasetOptions& opts);

}  // namespace cmis
