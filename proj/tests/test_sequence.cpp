#include <doctest.h>

#include <cmath>

#include "cmis/features.hpp"
#include "cmis/sequence.hpp"
#include "support.hpp"

using namespace cmis;
using cmis::test::grad_check;
using cmis::test::random_matrix;

namespace {

using Vec = std::vector<double>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SequenceEncoderOptions small(bool positional) {
    SequenceEncoderOptions o;
    o.input_width = 3;
    o.width = 4;
    o.layers = 2;
    o.heads = 2;
    o.ffn_width = 6;
    o.positional = positional;
    return o;
}

Matrix permute_rows(const Matrix& x, const std::vector<std::size_t>& perm) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < perm.size(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(perm[r], c);
    return out;
}

/// One LSTM step computed with scalar loops.
void lstm_step(const LstmCell& cell, const Vec& x, Vec& h, Vec& c) {
    const std::size_t n = cell.hidden;
    Vec gates(4 * n);
    for (std::size_t j = 0; j < 4 * n; ++j) {
        double s = cell.bias.value(0, j);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * cell.w_input.value(i, j);
        for (std::size_t i = 0; i < n; ++i) s += h[i] * cell.w_hidden.value(i, j);
        gates[j] = s;
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double in = sigmoid(gates[j]), f = sigmoid(gates[n + j]), g = std::tanh(gates[2 * n + j]),
                     o = sigmoid(gates[3 * n + j]);
        c[j] = f * c[j] + in * g;
        h[j] = o * std::tanh(c[j]);
    }
}

/// Encoder–decoder LSTM with a dot-product bridge, unrolled by hand.
Matrix ed_lstm_oracle(SequenceTranslator& tr, const Matrix& x, std::size_t hidden) {
    const std::size_t steps = x.rows();
    Vec h(hidden, 0.0), c(hidden, 0.0);
    std::vector<Vec> memory;
    for (std::size_t s = 0; s < steps; ++s) {
        lstm_step(tr.encoder_lstm(), Vec(x.row(s).begin(), x.row(s).end()), h, c);
        memory.push_back(h);
    }
    Matrix out(steps, x.cols());
    for (std::size_t s = 0; s < steps; ++s) {
        Vec score(steps);
        double mx = -1e300, z = 0.0;
        for (std::size_t k = 0; k < steps; ++k) {
            score[k] = 0.0;
            for (std::size_t j = 0; j < hidden; ++j) score[k] += h[j] * memory[k][j];
            mx = std::max(mx, score[k]);
        }
        for (double& v : score) z += (v = std::exp(v - mx));
        Vec ctx(hidden, 0.0);
        for (std::size_t k = 0; k < steps; ++k)
            for (std::size_t j = 0; j < hidden; ++j) ctx[j] += score[k] / z * memory[k][j];
        lstm_step(tr.decoder_lstm(), ctx, h, c);
        for (std::size_t o = 0; o < x.cols(); ++o) {
            double v = tr.head().bias.value(0, o);
            for (std::size_t j = 0; j < hidden; ++j) v += h[j] * tr.head().weight.value(j, o);
            out(s, o) = v;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("sequence encoder on a single frame reduces to the per-row path") {
    Rng rng(1);
    SequenceEncoder enc(small(true), rng);
    const Matrix x = random_matrix(1, 3, rng);
    Tape t(false);
    // One frame: every attention weight is 1, so attention is value then output.
    Var h = ag::add(enc.input_map().forward(t, t.constant(x)), t.constant(sinusoidal_positions(1, 4)));
    for (auto& layer : enc.layers()) {
        Var a = layer.attention.output.forward(t, layer.attention.value.forward(t, h));
        h = layer.norm1.forward(t, ag::add(h, a));
        h = layer.norm2.forward(t, ag::add(h, layer.feedforward.forward(t, h)));
    }
    const Matrix y = enc.encode(x).values;
    REQUIRE(y.rows() == 1);
    CHECK(max_abs_diff(y, h.value()) < 1e-12);
}

TEST_CASE("duplicated frames give duplicated rows without positions") {
    Rng rng(2);
    SequenceEncoder enc(small(false), rng);
    const Matrix x = random_matrix(4, 3, rng);
    Matrix doubled(8, 3);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 3; ++c) doubled(2 * t, c) = doubled(2 * t + 1, c) = x(t, c);
    const Matrix y = enc.encode(doubled).values;
    REQUIRE(y.rows() == 8);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(y(2 * t, c) - y(2 * t + 1, c)) < 1e-12);
}

TEST_CASE("sequence encoder shape and permutation behaviour") {
    Rng rng(3);
    SequenceEncoderOptions o = small(true);
    o.input_width = 10;
    SequenceEncoder enc(o, rng);
    CHECK(enc.encode(Matrix(74, 10, 0.1)).values.rows() == 74);
    CHECK(enc.encode(Matrix(74, 10, 0.1)).values.cols() == 4);
    CHECK_THROWS_AS(enc.encode(Matrix(5, 3)), ShapeError);

    const Matrix x = random_matrix(5, 10, rng);
    const std::vector<std::size_t> perm{4, 2, 0, 1, 3};
    enc.set_positional(false);
    CHECK(max_abs_diff(enc.encode(permute_rows(x, perm)).values, permute_rows(enc.encode(x).values, perm)) < 1e-12);
    enc.set_positional(true);
    CHECK(max_abs_diff(enc.encode(permute_rows(x, perm)).values, permute_rows(enc.encode(x).values, perm)) > 1e-6);
}

TEST_CASE("every output frame depends on every input frame") {
    Rng rng(4);
    SequenceEncoder enc(small(true), rng);
    const Matrix x = random_matrix(5, 3, rng);
    Matrix xm = x;
    xm(4, 0) += 1.0;
    const Matrix a = enc.encode(x).values, b = enc.encode(xm).values;
    for (std::size_t r = 0; r < 5; ++r) {
        double d = 0.0;
        for (std::size_t c = 0; c < 4; ++c) d += std::abs(a(r, c) - b(r, c));
        CHECK(d > 0.0);
    }
}

TEST_CASE("ED-LSTM translator matches an unrolled scalar recurrence") {
    Rng rng(5);
    SequenceTranslator tr(TranslatorKind::ed_lstm, 4, 3, rng);
    const Matrix x = random_matrix(3, 4, rng);
    CHECK(max_abs_diff(tr.translate({x}).values, ed_lstm_oracle(tr, x, 3)) < 1e-12);
}

TEST_CASE("attention bridge weights form a convex combination") {
    Rng rng(6);
    for (auto kind : {TranslatorKind::ed_lstm, TranslatorKind::ed_gru, TranslatorKind::attention}) {
        SequenceTranslator tr(kind, 4, 5, rng);
        std::vector<Matrix> weights;
        Tape t(false);
        const Matrix x = random_matrix(6, 4, rng, 3.0);
        const Var y = tr.forward(t, t.constant(x), &weights);
        CHECK(y.rows() == 6);
        CHECK(y.cols() == 4);
        REQUIRE(weights.size() == 6);
        for (const Matrix& w : weights) {
            double sum = 0.0;
            for (double v : w.values()) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("identical encoder states make the context equal that state") {
    Rng rng(7);
    SequenceTranslator tr(TranslatorKind::ed_lstm, 3, 4, rng);
    // No recurrence and a closed forget gate: a constant input then yields
    // the same encoder state at every step.
    tr.encoder_lstm().w_hidden.value.fill(0.0);
    for (std::size_t j = 4; j < 8; ++j) tr.encoder_lstm().bias.value(0, j) = -1e3;
    const Matrix x(5, 3, 0.4);
    Tape t(false);
    std::vector<Matrix> weights;
    tr.forward(t, t.constant(x), &weights);
    for (const Matrix& w : weights)
        for (double v : w.values()) CHECK(std::abs(v - 0.2) < 1e-12);
}

TEST_CASE("translator output shape equals input shape") {
    Rng rng(8);
    for (auto kind : {TranslatorKind::ed_lstm, TranslatorKind::ed_gru, TranslatorKind::attention})
        for (std::size_t steps : {1u, 2u, 9u}) {
            SequenceTranslator tr(kind, 4, 3, rng);
            const Matrix y = tr.translate({random_matrix(steps, 4, rng)}).values;
            CHECK(y.rows() == steps);
            CHECK(y.cols() == 4);
        }
    SequenceTranslator tr(TranslatorKind::ed_lstm, 4, 3, rng);
    CHECK_THROWS_AS(tr.translate({Matrix(3, 5)}), ShapeError);
}

TEST_CASE("zero translator output leaves the emotional sequence unchanged") {
    Rng rng(9);
    SequenceTranslator tr(TranslatorKind::ed_lstm, 4, 3, rng);
    tr.head().weight.value.fill(0.0);
    tr.head().bias.value.fill(0.0);
    const SeqFeatures x{random_matrix(5, 4, rng)};
    CHECK(standardize(x, tr.translate(x)).values == x.values);
}

TEST_CASE("sequence-level gradients match central differences") {
    Rng rng(10);
    const Matrix x = random_matrix(3, 4, rng);
    const Matrix target = random_matrix(3, 4, rng);
    SUBCASE("ED-LSTM") {
        SequenceTranslator tr(TranslatorKind::ed_lstm, 4, 4, rng);
        ParamList params;
        tr.collect(params, "slt");
        const auto r = grad_check(params, [&](Tape& t) {
            return ag::mean_square(ag::sub(tr.forward(t, t.constant(x)), t.constant(target)));
        });
        CHECK_MESSAGE(r.worst < 1e-4, r.block);
    }
    SUBCASE("ED-GRU and attention variants") {
        for (auto kind : {TranslatorKind::ed_gru, TranslatorKind::attention}) {
            SequenceTranslator tr(kind, 4, 3, rng);
            ParamList params;
            tr.collect(params, "slt");
            const auto r = grad_check(params, [&](Tape& t) {
                return ag::mean_square(ag::sub(tr.forward(t, t.constant(x)), t.constant(target)));
            });
            CHECK_MESSAGE(r.worst < 1e-4, r.block);
        }
    }
    SUBCASE("Transformer encoder") {
        SequenceEncoderOptions o = small(true);
        o.input_width = 4;
        o.activation = Activation::tanh;
        SequenceEncoder enc(o, rng);
        ParamList params;
        enc.collect(params, "slee");
        const auto r = grad_check(params, [&](Tape& t) {
            return ag::mean_square(ag::sub(enc.forward(t, t.constant(x)), t.constant(target)));
        });
        CHECK_MESSAGE(r.worst < 1e-4, r.block);
    }
}

TEST_CASE("translator names round trip") {
    for (auto k : {TranslatorKind::attention, TranslatorKind::ed_gru, TranslatorKind::ed_lstm})
        CHECK(parse_translator_kind(to_string(k)) == k);
    CHECK_THROWS(parse_translator_kind("transformer"));
}
