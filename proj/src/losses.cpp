#include "cmis/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cmis {

Var loss_neutral_approx(const std::vector<Var>& f) {
    if (f.size() < 2) throw std::invalid_argument("neutral approximation loss needs at least 2 neutral samples");
    std::vector<Var> terms;
    terms.reserve(f.size() * (f.size() - 1) / 2);
    for (std::size_t a = 0; a < f.size(); ++a)
        for (std::size_t b = a + 1; b < f.size(); ++b) terms.push_back(ag::mean_abs(ag::sub(f[a], f[b])));
    return ag::average(terms);
}

double loss_neutral_approx(const std::vector<std::vector<Matrix>>& batch) {
    if (batch.empty()) throw std::invalid_argument("neutral approximation loss: empty batch");
    double total = 0.0;
    for (const auto& group : batch) {
        if (group.size() < 2) throw std::invalid_argument("neutral approximation loss needs at least 2 neutral samples");
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < group.size(); ++a)
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                require_same_shape(group[a], group[b], "neutral approximation loss");
                double s = 0.0;
                for (std::size_t i = 0; i < group[a].size(); ++i) s += std::abs(group[a][i] - group[b][i]);
                sum += s / static_cast<double>(group[a].size());
                ++pairs;
            }
        total += sum / static_cast<double>(pairs);
    }
    return total / static_cast<double>(batch.size());
}

Var loss_mse(Var prediction, double target) {
    if (prediction.rows() != 1 || prediction.cols() != 1) throw ShapeError("loss_mse: prediction must be 1x1");
    Tape& t = *prediction.tape;
    Var y = t.constant(Matrix(1, 1, target));
    return ag::mean_square(ag::sub(prediction, y));
}

double loss_mse(std::span<const double> y, std::span<const double> p) {
    if (y.size() != p.size()) throw ShapeError("loss_mse: target/prediction length mismatch");
    if (y.empty()) throw std::invalid_argument("loss_mse: empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - p[i]) * (y[i] - p[i]);
    return s / static_cast<double>(y.size());
}

Var loss_translator(Var benchmark, Var predicted) {
    require_same_shape(benchmark.value(), predicted.value(), "translator loss");
    return ag::mean_abs(ag::sub(benchmark, predicted));
}

double loss_translator(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    if (a.size() != b.size()) throw ShapeError("translator loss: batch size mismatch");
    if (a.empty()) throw std::invalid_argument("translator loss: empty batch");
    double total = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        require_same_shape(a[n], b[n], "translator loss");
        double s = 0.0;
        for (std::size_t i = 0; i < a[n].size(); ++i) s += std::abs(a[n][i] - b[n][i]);
        total += s / static_cast<double>(a[n].size());
    }
    return total / static_cast<double>(a.size());
}

Var signed_loss(Var loss, LossSign sign) { return sign == LossSign::literal ? ag::scale(loss, -1.0) : loss; }

}  // namespace cmis
