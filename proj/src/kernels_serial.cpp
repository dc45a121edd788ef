#include <algorithm>
#include <cmath>

#include "cmis/kernels.hpp"

namespace cmis::kernels::serial {

namespace {
void check_inner(std::size_t ka, std::size_t kb, const char* op, const Matrix& a, const Matrix& b) {
    if (ka != kb) throw ShapeError(std::string(op) + ": inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
            c(i, j) = s;
        }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
            c(i, j) = s;
        }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
            c(i, j) = s;
        }
    return c;
}

void layer_norm_rows(const Matrix& x, double eps, Matrix& normalized, Matrix& inv_std) {
    normalized = Matrix(x.rows(), x.cols());
    inv_std = Matrix(x.rows(), 1);
    const double n = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) mean += x(r, c);
        mean /= n;
        double var = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(r, 0) = is;
        for (std::size_t c = 0; c < x.cols(); ++c) normalized(r, c) = (x(r, c) - mean) * is;
    }
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = x(r, 0);
        for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) = std::exp(x(r, c) - mx);
            z += y(r, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= z;
    }
    return y;
}

Matrix row_dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "row_dot");
    Matrix out(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * b(r, c);
        out(r, 0) = s;
    }
    return out;
}

}  // namespace cmis::kernels::serial
