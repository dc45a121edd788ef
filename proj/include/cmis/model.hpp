#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "cmis/data.hpp"
#include "cmis/frame.hpp"
#include "cmis/pooling.hpp"
#include "cmis/sequence.hpp"

namespace cmis {

enum class ModuleId { flne, flee, flt, slne, slee, slt, tap, r_hat, r };
inline constexpr std::array<ModuleId, 9> kAllModules{ModuleId::flne, ModuleId::flee, ModuleId::flt,
                                                     ModuleId::slne, ModuleId::slee, ModuleId::slt,
                                                     ModuleId::tap,  ModuleId::r_hat, ModuleId::r};
std::string to_string(ModuleId m);
ModuleId parse_module_id(const std::string& s);

enum class Pooling { global, tap };
enum class IdaPlacement { none, flee, slee, both };
std::string to_string(Pooling p);
std::string to_string(IdaPlacement p);
Pooling parse_pooling(const std::string& s);
IdaPlacement parse_ida_placement(const std::string& s);

struct NeutralSelection {
    NeutralStrategy strategy = NeutralStrategy::non_backchannel;
    double center = 0.25;
    double edge = 0.1;
    friend bool operator==(const NeutralSelection&, const NeutralSelection&) = default;
};

/// One cell of the ablation matrix.
struct AblationSpec {
    bool fle = true;
    bool flt = true;
    bool sle = true;
    bool slt = true;
    Pooling pooling = Pooling::tap;
    IdaPlacement ida = IdaPlacement::both;
    TranslatorKind translator = TranslatorKind::ed_lstm;
    NeutralSelection neutral;

    /// "FLE+FLT+SLE+SLT" style component list.
    std::string components() const;
    /// Throws std::invalid_argument for FLT without FLE, SLT without SLE, or no encoder.
    void validate() const;
    bool multi_scale() const { return fle && sle; }
    bool any_translator() const { return flt || slt; }
    /// Parses a component list such as "FLE+SLE+SLT" (a trailing "+R" is accepted).
    static AblationSpec from_components(const std::string& list);

    friend bool operator==(const AblationSpec&, const AblationSpec&) = default;
};

struct ModelConfig {
    std::size_t input_width = 136;
    std::size_t frame_width = 128;
    std::size_t frame_attn_width = 128;
    std::size_t seq_width = 128;
    std::size_t seq_layers = 6;
    std::size_t seq_heads = 4;
    std::size_t seq_ffn_width = 256;
    bool positional = true;
    std::size_t translator_hidden = 128;
    std::size_t tap_width = 128;
    std::size_t regressor_hidden = 64;
    std::size_t regressor_layers = 2;
    Activation activation = Activation::relu;
    bool fltb_scale_scores = true;
    bool tap_tanh = true;
    /// Start each neutral encoder from the same weights as its emotional twin.
    bool mirror_neutral_init = true;
};

void validate(const ModelConfig& cfg);

/// Intermediate nodes of one pass through the emotional pipeline.
struct EmotionalTrace {
    std::optional<Var> frame_emotional;
    std::optional<Var> frame_neutral_hat;
    std::optional<Var> seq_emotional;
    std::optional<Var> seq_neutral_hat;
    /// Final T×D features entering pooling (standardized when translators run).
    Var features;
    Var pooled;
    Var prediction;
};

struct NeutralTrace {
    std::optional<Var> frame;
    std::optional<Var> seq;
};

struct ForwardOptions {
    Mode mode = Mode::eval;
    /// Apply translators and standardization (off while pre-training encoders).
    bool translators = true;
    /// Block gradients between the frame-level output and the sequence encoder.
    bool detach_between_scales = false;
    /// Use the temporary head R̂ with global pooling instead of pooling + R.
    bool pretrain_head = false;
    const IdaConfig* ida = nullptr;
    Rng* rng = nullptr;
};

/// The cascaded two-scale standardization network. Which modules exist
/// follows the ablation spec; absent scales are bypassed.
class CmisModel {
public:
    CmisModel(const ModelConfig& cfg, const AblationSpec& spec, std::uint64_t seed);

    EmotionalTrace emotional(Tape& t, const Matrix& motion, const ForwardOptions& opts);
    NeutralTrace neutral(Tape& t, const Matrix& motion);
    /// Eval-mode prediction through R.
    double predict(const Matrix& motion);

    bool has(ModuleId m) const;
    ParamList parameters();
    ParamList parameters(ModuleId m);
    /// Marks every parameter frozen except those of `trainable`.
    void set_trainable(const std::set<ModuleId>& trainable);

    /// Persistent freeze flags (emotional encoders after pre-training).
    bool frozen(ModuleId m) const;
    void set_frozen(ModuleId m, bool on);
    /// Removes R̂ once encoder pre-training ends.
    void drop_pretrain_head();

    const ModelConfig& config() const { return cfg_; }
    const AblationSpec& spec() const { return spec_; }
    /// Width of the features that reach pooling and R.
    std::size_t head_width() const;

    std::optional<FrameEncoder> flne, flee;
    std::optional<FrameTranslator> flt;
    std::optional<SequenceEncoder> slne, slee;
    std::optional<SequenceTranslator> slt;
    std::optional<TemporalAttentionPooling> tap;
    std::optional<Regressor> r_hat;
    Regressor r;

private:
    ModelConfig cfg_;
    AblationSpec spec_;
    std::set<ModuleId> frozen_;
};

}  // namespace cmis
