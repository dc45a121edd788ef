#include <algorithm>
#include <cmath>

#include "cmis/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cmis::kernels {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

void check_inner(std::size_t ka, std::size_t kb, const char* op, const Matrix& a, const Matrix& b) {
    if (ka != kb) throw ShapeError(std::string(op) + ": inner dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    const bool par = n * k * m >= kParallelWork && n > 1;
    // i-p-j order: the inner loop streams rows of b and c.
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double* crow = pc + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix c(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    const bool par = n * k * m >= kParallelWork && n > 1;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            pc[i * m + j] = s;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    Matrix c(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    const bool par = n * k * m >= kParallelWork && n > 1;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double* crow = pc + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double api = pa[p * n + i];
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += api * brow[j];
        }
    }
    return c;
}

void layer_norm_rows(const Matrix& x, double eps, Matrix& normalized, Matrix& inv_std) {
    const std::size_t rows = x.rows(), cols = x.cols();
    normalized = Matrix(rows, cols);
    inv_std = Matrix(rows, 1);
    const double n = static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
        const auto in = x.row(r);
        auto out = normalized.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(r, 0) = is;
        for (std::size_t c = 0; c < cols; ++c) out[c] = (in[c] - mean) * is;
    }
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(x.rows()); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            z += out[c];
        }
        for (double& v : out) v /= z;
    }
    return y;
}

Matrix row_dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "row_dot");
    Matrix out(a.rows(), 1);
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(a.rows()); ++r) {
        const auto x = a.row(r);
        const auto y = b.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += x[c] * y[c];
        out(r, 0) = s;
    }
    return out;
}

}  // namespace cmis::kernels
