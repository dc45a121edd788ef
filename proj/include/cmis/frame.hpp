#pragma once

#include <array>

#include "cmis/data.hpp"
#include "cmis/features.hpp"
#include "cmis/layers.hpp"

namespace cmis {

struct FltbOptions {
    /// Divide q·k by sqrt(attention width) before the sigmoid.
    bool scale_scores = true;
    /// Test hook: skip the closing layer normalization.
    bool layer_norm = true;
};

/// Frame-level translator block: a per-frame scalar gate
/// α_t = σ(q_t·k_t) on the value vector, projected back to the input width,
/// added residually and layer-normalized. Frames never exchange information.
struct Fltb {
    Linear query;
    Linear key;
    Linear value;
    Linear project;
    LayerNorm norm;
    FltbOptions opts;

    Fltb() = default;
    Fltb(std::size_t width, std::size_t attn_width, Rng& rng, FltbOptions opts = {});

    std::size_t width() const { return query.in_features(); }
    /// `gate_out`, when given, receives the T×1 gate values.
    Var forward(Tape& t, Var x, Var* gate_out = nullptr);
    void collect(ParamList& out, const std::string& prefix);
};

struct FrameEncoderOptions {
    std::size_t input_width = 136;
    std::size_t width = 128;
    std::size_t attn_width = 128;
    Activation activation = Activation::relu;
    FltbOptions gate;
};

/// Frame-level encoder (neutral or emotional): a two-layer perceptron applied
/// to every frame followed by one FLTB-style gate.
class FrameEncoder {
public:
    FrameEncoder() = default;
    FrameEncoder(const FrameEncoderOptions& opts, Rng& rng);

    Var forward(Tape& t, Var motion);
    /// No-grad convenience for a single motion sequence.
    FrameFeatures encode(const MotionSequence& motion);
    void collect(ParamList& out, const std::string& prefix);

    std::size_t input_width() const { return mlp_.layers.front().in_features(); }
    std::size_t width() const { return mlp_.layers.back().out_features(); }
    Mlp& mlp() { return mlp_; }
    Fltb& gate() { return gate_; }

private:
    Mlp mlp_;
    Fltb gate_;
};

/// Three stacked FLTBs predicting the individual's neutral frame features.
class FrameTranslator {
public:
    static constexpr std::size_t kBlocks = 3;

    FrameTranslator() = default;
    FrameTranslator(std::size_t width, std::size_t attn_width, Rng& rng, FltbOptions opts = {});

    Var forward(Tape& t, Var emotional);
    FrameFeatures translate(const FrameFeatures& emotional);
    void collect(ParamList& out, const std::string& prefix);
    std::array<Fltb, kBlocks>& blocks() { return blocks_; }

private:
    std::array<Fltb, kBlocks> blocks_;
};

}  // namespace cmis
