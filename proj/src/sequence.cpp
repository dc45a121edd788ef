#include "cmis/sequence.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace cmis {

SelfAttention::SelfAttention(std::size_t width, std::size_t h, Rng& rng)
    : query(width, width, rng), key(width, width, rng), value(width, width, rng), output(width, width, rng), heads(h) {
    if (h == 0 || width % h != 0)
        throw std::invalid_argument("attention width " + std::to_string(width) + " not divisible by " +
                                    std::to_string(h) + " heads");
}

Var SelfAttention::forward(Tape& t, Var x) {
    Var q = query.forward(t, x);
    Var k = key.forward(t, x);
    Var v = value.forward(t, x);
    const std::size_t dh = q.cols() / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : ag::slice_cols(q, h * dh, dh);
        Var kh = heads == 1 ? k : ag::slice_cols(k, h * dh, dh);
        Var vh = heads == 1 ? v : ag::slice_cols(v, h * dh, dh);
        Var weights = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv));
        parts.push_back(ag::matmul(weights, vh));
    }
    Var merged = heads == 1 ? parts.front() : ag::concat_cols(parts);
    return output.forward(t, merged);
}

void SelfAttention::collect(ParamList& out, const std::string& prefix) {
    query.collect(out, prefix + ".query");
    key.collect(out, prefix + ".key");
    value.collect(out, prefix + ".value");
    output.collect(out, prefix + ".output");
}

TransformerLayer::TransformerLayer(std::size_t width, std::size_t heads, std::size_t ffn_width, Activation act, Rng& rng)
    : attention(width, heads, rng), norm1(width), feedforward({width, ffn_width, width}, act, rng), norm2(width) {}

Var TransformerLayer::forward(Tape& t, Var x) {
    x = norm1.forward(t, ag::add(x, attention.forward(t, x)));
    return norm2.forward(t, ag::add(x, feedforward.forward(t, x)));
}

void TransformerLayer::collect(ParamList& out, const std::string& prefix) {
    attention.collect(out, prefix + ".attention");
    norm1.collect(out, prefix + ".norm1");
    feedforward.collect(out, prefix + ".ffn");
    norm2.collect(out, prefix + ".norm2");
}

Matrix sinusoidal_positions(std::size_t frames, std::size_t width) {
    Matrix pe(frames, width);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t i = 0; i < width; ++i) {
            const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
            const double angle = static_cast<double>(t) / std::pow(10000.0, expo);
            pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

SequenceEncoder::SequenceEncoder(const SequenceEncoderOptions& o, Rng& rng)
    : input_(o.input_width, o.width, rng), positional_(o.positional) {
    for (std::size_t i = 0; i < o.layers; ++i) layers_.emplace_back(o.width, o.heads, o.ffn_width, o.activation, rng);
}

Var SequenceEncoder::forward(Tape& t, Var frames) {
    if (frames.cols() != input_width())
        throw ShapeError("sequence encoder: input width " + std::to_string(frames.cols()) + ", expected " +
                         std::to_string(input_width()));
    Var x = input_.forward(t, frames);
    if (positional_) x = ag::add(x, t.constant(sinusoidal_positions(x.rows(), x.cols())));
    for (auto& layer : layers_) x = layer.forward(t, x);
    return x;
}

SeqFeatures SequenceEncoder::encode(const Matrix& frames) {
    Tape t(false);
    return {forward(t, t.constant(frames)).value()};
}

void SequenceEncoder::collect(ParamList& out, const std::string& prefix) {
    input_.collect(out, prefix + ".input");
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + ".layers." + std::to_string(i));
}

TranslatorKind parse_translator_kind(const std::string& s) {
    if (s == "attention") return TranslatorKind::attention;
    if (s == "ed_gru" || s == "ed-gru") return TranslatorKind::ed_gru;
    if (s == "ed_lstm" || s == "ed-lstm") return TranslatorKind::ed_lstm;
    throw std::invalid_argument("unknown translator variant '" + s + "'");
}

std::string to_string(TranslatorKind k) {
    switch (k) {
        case TranslatorKind::attention: return "attention";
        case TranslatorKind::ed_gru: return "ed_gru";
        case TranslatorKind::ed_lstm: return "ed_lstm";
    }
    return "?";
}

SequenceTranslator::SequenceTranslator(TranslatorKind kind, std::size_t width, std::size_t hidden, Rng& rng)
    : kind_(kind), width_(width), hidden_(hidden) {
    switch (kind) {
        case TranslatorKind::ed_lstm:
            enc_lstm_ = LstmCell(width, hidden, rng);
            dec_lstm_ = LstmCell(hidden, hidden, rng);
            head_ = Linear(hidden, width, rng);
            break;
        case TranslatorKind::ed_gru:
            enc_gru_ = GruCell(width, hidden, rng);
            dec_gru_ = GruCell(hidden, hidden, rng);
            head_ = Linear(hidden, width, rng);
            break;
        case TranslatorKind::attention:
            attn_ = SelfAttention(width, 1, rng);
            break;
    }
}

Var SequenceTranslator::forward(Tape& t, Var x, std::vector<Matrix>* attention_out) {
    if (x.cols() != width_)
        throw ShapeError("sequence translator: input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(width_));
    return kind_ == TranslatorKind::attention ? forward_attention(t, x, attention_out)
                                              : forward_recurrent(t, x, attention_out);
}

Var SequenceTranslator::forward_recurrent(Tape& t, Var x, std::vector<Matrix>* attention_out) {
    const std::size_t steps = x.rows();
    const bool lstm = kind_ == TranslatorKind::ed_lstm;
    Var h = t.constant(Matrix(1, hidden_));
    Var c = t.constant(Matrix(1, hidden_));
    std::vector<Var> enc_states;
    enc_states.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        Var xt = ag::slice_rows(x, s, 1);
        if (lstm) {
            std::tie(h, c) = enc_lstm_.step(t, xt, h, c);
        } else {
            h = enc_gru_.step(t, xt, h);
        }
        enc_states.push_back(h);
    }
    Var memory = ag::stack_rows(enc_states);  // T × hidden

    std::vector<Var> dec_states;
    dec_states.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        Var weights = ag::softmax_rows(ag::matmul_nt(h, memory));  // 1 × T
        if (attention_out) attention_out->push_back(weights.value());
        Var context = ag::matmul(weights, memory);                 // 1 × hidden
        if (lstm) {
            std::tie(h, c) = dec_lstm_.step(t, context, h, c);
        } else {
            h = dec_gru_.step(t, context, h);
        }
        dec_states.push_back(h);
    }
    return head_.forward(t, ag::stack_rows(dec_states));
}

Var SequenceTranslator::forward_attention(Tape& t, Var x, std::vector<Matrix>* attention_out) {
    if (attention_out) {
        Var q = attn_.query.forward(t, x);
        Var k = attn_.key.forward(t, x);
        const Matrix w = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(double(q.cols())))).value();
        for (std::size_t r = 0; r < w.rows(); ++r) attention_out->push_back(Matrix::row_vector(w.row(r)));
    }
    return attn_.forward(t, x);
}

SeqFeatures SequenceTranslator::translate(const SeqFeatures& emotional) {
    Tape t(false);
    return {forward(t, t.constant(emotional.values)).value()};
}

void SequenceTranslator::collect(ParamList& out, const std::string& prefix) {
    switch (kind_) {
        case TranslatorKind::ed_lstm:
            enc_lstm_.collect(out, prefix + ".encoder");
            dec_lstm_.collect(out, prefix + ".decoder");
            head_.collect(out, prefix + ".head");
            break;
        case TranslatorKind::ed_gru:
            enc_gru_.collect(out, prefix + ".encoder");
            dec_gru_.collect(out, prefix + ".decoder");
            head_.collect(out, prefix + ".head");
            break;
        case TranslatorKind::attention:
            attn_.collect(out, prefix + ".attention");
            break;
    }
}

}  // namespace cmis
