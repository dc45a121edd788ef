#include "cmis/layers.hpp"

#include <cmath>

namespace cmis {

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    return m;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(uniform_init(in, out, in, rng)), has_bias(with_bias) {
    bias = Parameter(with_bias ? uniform_init(1, out, in, rng) : Matrix(1, out));
}

Var Linear::forward(Tape& t, Var x) {
    if (x.cols() != in_features())
        throw ShapeError("linear: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(in_features()));
    Var y = ag::matmul(x, t.param(weight));
    return has_bias ? ag::add_row(y, t.param(bias)) : y;
}

void Linear::collect(ParamList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".weight", &weight);
    if (has_bias) out.emplace_back(prefix + ".bias", &bias);
}

LayerNorm::LayerNorm(std::size_t width) : gain(Matrix(1, width, 1.0)), bias(Matrix(1, width)) {}

Var LayerNorm::forward(Tape& t, Var x) { return ag::layer_norm(x, t.param(gain), t.param(bias)); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Activation a, Rng& rng, bool act_last)
    : act(a), activate_last(act_last) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1], rng);
}

Var Mlp::forward(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(t, x);
        if (i + 1 < layers.size() || activate_last) x = ag::activate(x, act);
    }
    return x;
}

void Mlp::collect(ParamList& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
}

LstmCell::LstmCell(std::size_t in, std::size_t h, Rng& rng)
    : w_input(uniform_init(in, 4 * h, h, rng)),
      w_hidden(uniform_init(h, 4 * h, h, rng)),
      bias(uniform_init(1, 4 * h, h, rng)),
      hidden(h) {}

std::pair<Var, Var> LstmCell::step(Tape& t, Var x, Var h, Var c) {
    Var gates = ag::add_row(ag::add(ag::matmul(x, t.param(w_input)), ag::matmul(h, t.param(w_hidden))), t.param(bias));
    Var i = ag::sigmoid(ag::slice_cols(gates, 0, hidden));
    Var f = ag::sigmoid(ag::slice_cols(gates, hidden, hidden));
    Var g = ag::tanh(ag::slice_cols(gates, 2 * hidden, hidden));
    Var o = ag::sigmoid(ag::slice_cols(gates, 3 * hidden, hidden));
    Var c_next = ag::add(ag::hadamard(f, c), ag::hadamard(i, g));
    Var h_next = ag::hadamard(o, ag::tanh(c_next));
    return {h_next, c_next};
}

void LstmCell::collect(ParamList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w_input", &w_input);
    out.emplace_back(prefix + ".w_hidden", &w_hidden);
    out.emplace_back(prefix + ".bias", &bias);
}

GruCell::GruCell(std::size_t in, std::size_t h, Rng& rng)
    : w_input(uniform_init(in, 3 * h, h, rng)),
      w_hidden(uniform_init(h, 3 * h, h, rng)),
      bias_input(uniform_init(1, 3 * h, h, rng)),
      bias_hidden(uniform_init(1, 3 * h, h, rng)),
      hidden(h) {}

Var GruCell::step(Tape& t, Var x, Var h) {
    Var gi = ag::add_row(ag::matmul(x, t.param(w_input)), t.param(bias_input));
    Var gh = ag::add_row(ag::matmul(h, t.param(w_hidden)), t.param(bias_hidden));
    Var r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, hidden), ag::slice_cols(gh, 0, hidden)));
    Var z = ag::sigmoid(ag::add(ag::slice_cols(gi, hidden, hidden), ag::slice_cols(gh, hidden, hidden)));
    Var n = ag::tanh(ag::add(ag::slice_cols(gi, 2 * hidden, hidden),
                             ag::hadamard(r, ag::slice_cols(gh, 2 * hidden, hidden))));
    // h' = (1 - z) * n + z * h = n + z * (h - n)
    return ag::add(n, ag::hadamard(z, ag::sub(h, n)));
}

void GruCell::collect(ParamList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w_input", &w_input);
    out.emplace_back(prefix + ".w_hidden", &w_hidden);
    out.emplace_back(prefix + ".bias_input", &bias_input);
    out.emplace_back(prefix + ".bias_hidden", &bias_hidden);
}

}  // namespace cmis
