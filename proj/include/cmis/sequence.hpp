#pragma once

#include <string>
#include <vector>

#include "cmis/features.hpp"
#include "cmis/layers.hpp"

namespace cmis {

/// Multi-head scaled dot-product self-attention over all frames.
struct SelfAttention {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    SelfAttention() = default;
    SelfAttention(std::size_t width, std::size_t heads, Rng& rng);
    Var forward(Tape& t, Var x);
    void collect(ParamList& out, const std::string& prefix);
};

/// Post-norm Transformer encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct TransformerLayer {
    SelfAttention attention;
    LayerNorm norm1;
    Mlp feedforward;
    LayerNorm norm2;

    TransformerLayer() = default;
    TransformerLayer(std::size_t width, std::size_t heads, std::size_t ffn_width, Activation act, Rng& rng);
    Var forward(Tape& t, Var x);
    void collect(ParamList& out, const std::string& prefix);
};

struct SequenceEncoderOptions {
    std::size_t input_width = 128;
    std::size_t width = 128;
    std::size_t layers = 6;
    std::size_t heads = 4;
    std::size_t ffn_width = 256;
    bool positional = true;
    Activation activation = Activation::relu;
};

/// Adds the sinusoidal position table to a T×D input.
Matrix sinusoidal_positions(std::size_t frames, std::size_t width);

/// Sequence-level encoder (neutral or emotional): input map to the model
/// width, optional sinusoidal positions, stacked Transformer layers.
class SequenceEncoder {
public:
    SequenceEncoder() = default;
    SequenceEncoder(const SequenceEncoderOptions& opts, Rng& rng);

    Var forward(Tape& t, Var frames);
    SeqFeatures encode(const Matrix& frames);
    void collect(ParamList& out, const std::string& prefix);

    std::size_t input_width() const { return input_.in_features(); }
    std::size_t width() const { return input_.out_features(); }
    bool positional() const { return positional_; }
    void set_positional(bool on) { positional_ = on; }
    std::vector<TransformerLayer>& layers() { return layers_; }
    Linear& input_map() { return input_; }

private:
    Linear input_;
    std::vector<TransformerLayer> layers_;
    bool positional_ = true;
};

enum class TranslatorKind { attention, ed_gru, ed_lstm };
TranslatorKind parse_translator_kind(const std::string& s);
std::string to_string(TranslatorKind k);

/// Sequence-level translator. The default encoder–decoder LSTM runs an
/// encoder over the emotional sequence; at each decoder step the previous
/// decoder state scores every encoder state by dot product, the softmax
/// weighted context feeds the decoder cell, and a linear head maps decoder
/// states back to the sequence width. The decoder starts from the encoder's
/// final state. ED-GRU swaps both cells; the attention variant is a single
/// self-attention map.
class SequenceTranslator {
public:
    SequenceTranslator() = default;
    SequenceTranslator(TranslatorKind kind, std::size_t width, std::size_t hidden, Rng& rng);

    /// `attention_out`, when given, receives one 1×T weight row per decoder step.
    Var forward(Tape& t, Var emotional, std::vector<Matrix>* attention_out = nullptr);
    SeqFeatures translate(const SeqFeatures& emotional);
    void collect(ParamList& out, const std::string& prefix);

    TranslatorKind kind() const { return kind_; }
    std::size_t width() const { return width_; }
    LstmCell& encoder_lstm() { return enc_lstm_; }
    LstmCell& decoder_lstm() { return dec_lstm_; }
    Linear& head() { return head_; }

private:
    Var forward_recurrent(Tape& t, Var x, std::vector<Matrix>* attention_out);
    Var forward_attention(Tape& t, Var x, std::vector<Matrix>* attention_out);

    TranslatorKind kind_ = TranslatorKind::ed_lstm;
    std::size_t width_ = 0;
    std::size_t hidden_ = 0;
    LstmCell enc_lstm_, dec_lstm_;
    GruCell enc_gru_, dec_gru_;
    SelfAttention attn_;
    Linear head_;
};

}  // namespace cmis
