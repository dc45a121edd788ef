#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cmis/autograd.hpp"
#include "cmis/rng.hpp"

namespace cmis {

/// Named parameter blocks collected from a module tree ("slee.layers.2.ffn.0.weight").
using ParamList = std::vector<std::pair<std::string, Parameter*>>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

/// x·W + b with W stored in×out.
struct Linear {
    Parameter weight;
    Parameter bias;
    bool has_bias = true;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

    std::size_t in_features() const { return weight.value.rows(); }
    std::size_t out_features() const { return weight.value.cols(); }
    Var forward(Tape& t, Var x);
    void collect(ParamList& out, const std::string& prefix);
};

/// Learnable per-row layer normalization.
struct LayerNorm {
    Parameter gain;
    Parameter bias;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t width);
    Var forward(Tape& t, Var x);
    void collect(ParamList& out, const std::string& prefix);
};

/// Stack of Linear layers with an activation between (and optionally after) them.
struct Mlp {
    std::vector<Linear> layers;
    Activation act = Activation::relu;
    bool activate_last = false;

    Mlp() = default;
    Mlp(const std::vector<std::size_t>& widths, Activation act, Rng& rng, bool activate_last = false);
    Var forward(Tape& t, Var x);
    void collect(ParamList& out, const std::string& prefix);
};

/// LSTM cell; gate column order is input, forget, cell, output.
struct LstmCell {
    Parameter w_input;   // in × 4h
    Parameter w_hidden;  // h × 4h
    Parameter bias;      // 1 × 4h
    std::size_t hidden = 0;

    LstmCell() = default;
    LstmCell(std::size_t in, std::size_t hidden, Rng& rng);
    /// One step on 1×in input; returns {h, c}.
    std::pair<Var, Var> step(Tape& t, Var x, Var h, Var c);
    void collect(ParamList& out, const std::string& prefix);
};

/// GRU cell; gate column order is reset, update, candidate.
struct GruCell {
    Parameter w_input;   // in × 3h
    Parameter w_hidden;  // h × 3h
    Parameter bias_input;
    Parameter bias_hidden;
    std::size_t hidden = 0;

    GruCell() = default;
    GruCell(std::size_t in, std::size_t hidden, Rng& rng);
    Var step(Tape& t, Var x, Var h);
    void collect(ParamList& out, const std::string& prefix);
};

}  // namespace cmis
