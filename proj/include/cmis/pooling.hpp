#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cmis/features.hpp"
#include "cmis/layers.hpp"

namespace cmis {

enum class Mode { train, eval };

/// Latent-space augmentation applied after the emotional encoders.
struct IdaConfig {
    double noise_std = 0.05;
    double mask_prob = 0.1;
    bool enabled_after_flee = true;
    bool enabled_after_slee = true;
    /// Scale surviving elements by 1/(1−p).
    bool rescale = false;
    /// Zero whole frames instead of single elements.
    bool framewise_mask = false;
};

void validate(const IdaConfig& cfg);

/// Train mode: x + N(0, noise_std²) elementwise, then zero each element (or
/// frame) with probability mask_prob. Eval mode returns x untouched.
Var ida_apply(Tape& t, Var x, const IdaConfig& cfg, Mode mode, Rng& rng);
Matrix ida_apply(const Matrix& x, const IdaConfig& cfg, Mode mode, std::uint64_t seed);

struct TapOptions {
    bool use_tanh = true;
    /// Test hook: replace every frame weight with this constant.
    std::optional<double> alpha_override;
};

/// Temporal attention pooling: α_t = σ(w·tanh(W v_t)), z = mean_t(α_t v_t).
class TemporalAttentionPooling {
public:
    TemporalAttentionPooling() = default;
    TemporalAttentionPooling(std::size_t width, std::size_t attn_width, Rng& rng, TapOptions opts = {});

    Var forward(Tape& t, Var v, Var* weights_out = nullptr);
    Matrix pool(const SeqFeatures& v);
    void collect(ParamList& out, const std::string& prefix);

    Parameter& projection() { return projection_; }
    Parameter& score() { return score_; }
    TapOptions& options() { return opts_; }

private:
    Parameter projection_;  // width × attn_width
    Parameter score_;       // attn_width × 1
    TapOptions opts_;
};

/// Unweighted mean over frames.
Var global_pool(Var v);
Matrix global_pool(const Matrix& v);

/// Fully connected regression head mapping a pooled 1×D vector to a score.
class Regressor {
public:
    Regressor() = default;
    Regressor(std::size_t input_width, std::size_t hidden, std::size_t hidden_layers, Activation act, Rng& rng);

    /// 1×1 prediction per pooled row vector.
    Var forward(Tape& t, Var z);
    /// One prediction per row of `batch`, order preserved.
    std::vector<double> predict(const Matrix& batch);
    void collect(ParamList& out, const std::string& prefix);

    std::size_t input_width() const { return mlp_.layers.front().in_features(); }
    Mlp& mlp() { return mlp_; }

private:
    Mlp mlp_;
};

}  // namespace cmis
