#include "cmis/pooling.hpp"

#include <stdexcept>

#include "cmis/rng.hpp"

namespace cmis {

void validate(const IdaConfig& c) {
    if (c.noise_std < 0) throw std::invalid_argument("ida: noise_std must be >= 0");
    if (c.mask_prob < 0 || c.mask_prob > 1) throw std::invalid_argument("ida: mask_prob must be in [0, 1]");
}

namespace {
// Additive noise and the multiplicative mask, drawn in one pass.
std::pair<Matrix, Matrix> ida_draws(std::size_t rows, std::size_t cols, const IdaConfig& c, Rng& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    std::bernoulli_distribution drop(c.mask_prob);
    const double keep_scale = (c.rescale && c.mask_prob < 1.0) ? 1.0 / (1.0 - c.mask_prob) : 1.0;
    Matrix eps(rows, cols), mask(rows, cols, keep_scale);
    if (c.noise_std > 0)
        for (double& e : eps.values()) e = c.noise_std * noise(rng);
    if (c.framewise_mask) {
        for (std::size_t r = 0; r < rows; ++r)
            if (drop(rng))
                for (double& m : mask.row(r)) m = 0.0;
    } else {
        for (double& m : mask.values())
            if (drop(rng)) m = 0.0;
    }
    return {std::move(eps), std::move(mask)};
}
}  // namespace

Var ida_apply(Tape& t, Var x, const IdaConfig& c, Mode mode, Rng& rng) {
    if (mode == Mode::eval) return x;
    auto [eps, mask] = ida_draws(x.rows(), x.cols(), c, rng);
    return ag::hadamard(ag::add(x, t.constant(std::move(eps))), t.constant(std::move(mask)));
}

Matrix ida_apply(const Matrix& x, const IdaConfig& c, Mode mode, std::uint64_t seed) {
    if (mode == Mode::eval) return x;
    Rng rng(seed);
    auto [eps, mask] = ida_draws(x.rows(), x.cols(), c, rng);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] + eps[i]) * mask[i];
    return out;
}

TemporalAttentionPooling::TemporalAttentionPooling(std::size_t width, std::size_t attn_width, Rng& rng, TapOptions o)
    : projection_(uniform_init(width, attn_width, width, rng)), score_(uniform_init(attn_width, 1, attn_width, rng)),
      opts_(o) {}

Var TemporalAttentionPooling::forward(Tape& t, Var v, Var* weights_out) {
    if (v.cols() != projection_.value.rows())
        throw ShapeError("tap: input width " + std::to_string(v.cols()) + ", expected " +
                         std::to_string(projection_.value.rows()));
    Var alpha;
    if (opts_.alpha_override) {
        alpha = t.constant(Matrix(v.rows(), 1, *opts_.alpha_override));
    } else {
        Var hidden = ag::matmul(v, t.param(projection_));
        if (opts_.use_tanh) hidden = ag::tanh(hidden);
        alpha = ag::sigmoid(ag::matmul(hidden, t.param(score_)));
    }
    if (weights_out) *weights_out = alpha;
    return ag::mean_rows(ag::scale_rows(v, alpha));
}

Matrix TemporalAttentionPooling::pool(const SeqFeatures& v) {
    Tape t(false);
    return forward(t, t.constant(v.values)).value();
}

void TemporalAttentionPooling::collect(ParamList& out, const std::string& prefix) {
    out.emplace_back(prefix + ".projection", &projection_);
    out.emplace_back(prefix + ".score", &score_);
}

Var global_pool(Var v) { return ag::mean_rows(v); }

Matrix global_pool(const Matrix& v) {
    Tape t(false);
    return ag::mean_rows(t.constant(v)).value();
}

Regressor::Regressor(std::size_t input_width, std::size_t hidden, std::size_t hidden_layers, Activation act, Rng& rng) {
    std::vector<std::size_t> widths{input_width};
    for (std::size_t i = 0; i < hidden_layers; ++i) widths.push_back(hidden);
    widths.push_back(1);
    mlp_ = Mlp(widths, act, rng);
}

Var Regressor::forward(Tape& t, Var z) {
    if (z.cols() != input_width())
        throw ShapeError("regressor: input width " + std::to_string(z.cols()) + ", expected " +
                         std::to_string(input_width()));
    return mlp_.forward(t, z);
}

std::vector<double> Regressor::predict(const Matrix& batch) {
    Tape t(false);
    Var y = forward(t, t.constant(batch));
    return {y.value().values().begin(), y.value().values().end()};
}

void Regressor::collect(ParamList& out, const std::string& prefix) { mlp_.collect(out, prefix + ".mlp"); }

}  // namespace cmis
