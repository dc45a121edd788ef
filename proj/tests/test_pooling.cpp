#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cmis/features.hpp"
#include "cmis/pooling.hpp"
#include "support.hpp"

using namespace cmis;
using cmis::test::grad_check;
using cmis::test::random_matrix;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Matrix row_mean(const Matrix& v) {
    Matrix m(1, v.cols());
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) m(0, c) += v(r, c);
    return m * (1.0 / static_cast<double>(v.rows()));
}

}  // namespace

TEST_CASE("augmentation in eval mode is the identity, bit for bit") {
    Rng rng(1);
    Matrix x = random_matrix(9, 7, rng);
    x(0, 0) = -0.0;
    x(1, 1) = std::numeric_limits<double>::denorm_min();
    IdaConfig c;
    c.noise_std = 3.0;
    c.mask_prob = 0.9;
    CHECK(bitwise_equal(ida_apply(x, c, Mode::eval, 5), x));
    Tape t;
    Var v = t.constant(x);
    Rng r(2);
    CHECK(bitwise_equal(ida_apply(t, v, c, Mode::eval, r).value(), x));
}

TEST_CASE("full masking zeroes everything") {
    Rng rng(2);
    IdaConfig c;
    c.noise_std = 0.0;
    c.mask_prob = 1.0;
    const Matrix a = ida_apply(random_matrix(4, 5, rng), c, Mode::train, 3);
    for (double v : a.values()) CHECK(v == 0.0);
    c.framewise_mask = true;
    const Matrix b = ida_apply(random_matrix(4, 5, rng), c, Mode::train, 3);
    for (double v : b.values()) CHECK(v == 0.0);
}

TEST_CASE("augmentation noise has the configured standard deviation") {
    IdaConfig c;
    c.noise_std = 0.05;
    c.mask_prob = 0.0;
    const Matrix x(1000, 1000, 0.25);
    const Matrix y = ida_apply(x, c, Mode::train, 42);
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - x[i];
        mean += d;
        sq += d * d;
    }
    mean /= static_cast<double>(y.size());
    const double sd = std::sqrt(sq / static_cast<double>(y.size()) - mean * mean);
    CHECK(std::abs(sd - 0.05) / 0.05 < 0.01);
    CHECK(std::abs(mean) < 1e-3);
}

TEST_CASE("masking drops the configured share of elements") {
    IdaConfig c;
    c.noise_std = 0.0;
    c.mask_prob = 0.1;
    const Matrix y = ida_apply(Matrix(500, 200, 1.0), c, Mode::train, 9);
    std::size_t zeros = 0;
    for (double v : y.values()) {
        CHECK((v == 0.0 || v == 1.0));
        zeros += v == 0.0;
    }
    CHECK(std::abs(static_cast<double>(zeros) / 1e5 - 0.1) < 0.005);
    c.rescale = true;
    const Matrix scaled = ida_apply(Matrix(10, 10, 1.0), c, Mode::train, 9);
    for (double v : scaled.values())
        CHECK((v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-15));
}

TEST_CASE("augmentation draws are reproducible from the seed") {
    Rng rng(3);
    const Matrix x = random_matrix(5, 5, rng);
    IdaConfig c;
    CHECK(ida_apply(x, c, Mode::train, 11) == ida_apply(x, c, Mode::train, 11));
    CHECK_FALSE(ida_apply(x, c, Mode::train, 11) == ida_apply(x, c, Mode::train, 12));
}

TEST_CASE("augmentation config validation") {
    IdaConfig c;
    c.noise_std = -0.1;
    CHECK_THROWS(validate(c));
    c.noise_std = 0.1;
    c.mask_prob = 1.5;
    CHECK_THROWS(validate(c));
}

TEST_CASE("temporal attention pooling") {
    Rng rng(4);
    SUBCASE("weights forced to one give the global mean") {
        TapOptions o;
        o.alpha_override = 1.0;
        TemporalAttentionPooling tap(4, 3, rng, o);
        const Matrix v = random_matrix(6, 4, rng);
        CHECK(max_abs_diff(tap.pool({v}), global_pool(v)) < 1e-9);
        CHECK(max_abs_diff(tap.pool({v}), row_mean(v)) < 1e-12);
    }
    SUBCASE("zero projection gives weights of one half") {
        TemporalAttentionPooling tap(4, 3, rng);
        tap.projection().value.fill(0.0);
        const Matrix v = random_matrix(5, 4, rng);
        Tape t(false);
        Var w;
        const Matrix z = tap.forward(t, t.constant(v), &w).value();
        for (double a : w.value().values()) CHECK(a == 0.5);
        CHECK(max_abs_diff(z, row_mean(v) * 0.5) < 1e-9);
    }
    SUBCASE("two frames with hand-set weights") {
        for (bool use_tanh : {true, false}) {
            TapOptions o;
            o.use_tanh = use_tanh;
            TemporalAttentionPooling tap(2, 2, rng, o);
            tap.projection().value = Matrix{{0.5, -1.0}, {2.0, 0.25}};
            tap.score().value = Matrix{{1.5}, {-0.5}};
            const Matrix v{{1.0, -2.0}, {0.3, 0.7}};
            auto act = [&](double x) { return use_tanh ? std::tanh(x) : x; };
            double z0 = 0.0, z1 = 0.0;
            for (std::size_t t = 0; t < 2; ++t) {
                const double h0 = act(v(t, 0) * 0.5 + v(t, 1) * 2.0);
                const double h1 = act(v(t, 0) * -1.0 + v(t, 1) * 0.25);
                const double a = sigmoid(1.5 * h0 - 0.5 * h1);
                z0 += a * v(t, 0) / 2.0;
                z1 += a * v(t, 1) / 2.0;
            }
            const Matrix z = tap.pool({v});
            CHECK(std::abs(z(0, 0) - z0) < 1e-12);
            CHECK(std::abs(z(0, 1) - z1) < 1e-12);
        }
    }
    SUBCASE("weights stay strictly inside (0, 1)") {
        TemporalAttentionPooling tap(4, 3, rng);
        for (double scale : {1e-6, 1.0, 1e3}) {
            Tape t(false);
            Var w;
            tap.forward(t, t.constant(random_matrix(20, 4, rng, scale)), &w);
            for (double a : w.value().values()) {
                CHECK(a > 0.0);
                CHECK(a < 1.0);
            }
        }
    }
    SUBCASE("width mismatch") {
        TemporalAttentionPooling tap(4, 3, rng);
        CHECK_THROWS_AS(tap.pool({Matrix(3, 5)}), ShapeError);
    }
}

TEST_CASE("temporal attention pooling gradients match central differences") {
    Rng rng(5);
    TemporalAttentionPooling tap(4, 3, rng);
    Parameter v(random_matrix(3, 4, rng));
    ParamList params{{"v", &v}};
    tap.collect(params, "tap");
    const Matrix target = random_matrix(1, 4, rng);
    const auto r = grad_check(params, [&](Tape& t) {
        return ag::mean_square(ag::sub(tap.forward(t, t.param(v)), t.constant(target)));
    });
    CHECK_MESSAGE(r.worst < 1e-4, r.block);
}

TEST_CASE("global pooling") {
    CHECK(global_pool(Matrix(4, 3, 0.7)) == Matrix(1, 3, 0.7));
    const Matrix pm{{1.0, -2.0}, {-1.0, 2.0}};
    CHECK(global_pool(pm) == Matrix(1, 2));
    Rng rng(6);
    const Matrix v = random_matrix(5, 3, rng);
    CHECK(max_abs_diff(global_pool(v), row_mean(v)) < 1e-15);
    CHECK_THROWS_AS(global_pool(Matrix(0, 3)), ShapeError);
}

TEST_CASE("regression head") {
    Rng rng(7);
    SUBCASE("zero weights predict zero") {
        Regressor r(4, 5, 2, Activation::relu, rng);
        for (auto& l : r.mlp().layers) {
            l.weight.value.fill(0.0);
            l.bias.value.fill(0.0);
        }
        CHECK(r.predict(random_matrix(3, 4, rng)) == std::vector<double>(3, 0.0));
    }
    SUBCASE("a single linear layer is a dot product") {
        Regressor r(3, 5, 0, Activation::relu, rng);
        r.mlp().layers[0].weight.value = Matrix{{0.5}, {-1.0}, {2.0}};
        r.mlp().layers[0].bias.value = Matrix{{0.25}};
        const auto y = r.predict(Matrix{{1.0, 2.0, 3.0}});
        CHECK(y.size() == 1);
        CHECK(y[0] == doctest::Approx(0.5 - 2.0 + 6.0 + 0.25).epsilon(1e-15));
    }
    SUBCASE("batches keep their order") {
        Regressor r(3, 4, 2, Activation::tanh, rng);
        const Matrix batch = random_matrix(6, 3, rng);
        const auto all = r.predict(batch);
        REQUIRE(all.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            Matrix one(1, 3);
            for (std::size_t c = 0; c < 3; ++c) one(0, c) = batch(i, c);
            CHECK(std::abs(r.predict(one)[0] - all[i]) < 1e-14);
        }
    }
    SUBCASE("width mismatch") {
        Regressor r(3, 4, 1, Activation::relu, rng);
        CHECK_THROWS_AS(r.predict(Matrix(1, 4)), ShapeError);
    }
}
