#pragma once

#include "cmis/matrix.hpp"

// Dense kernels behind the autodiff tape. The default namespace holds the
// OpenMP versions; `serial` holds straightforward reference loops that the
// tests and the benchmark compare against. Every parallel kernel assigns each
// output element to exactly one thread and sums in the same order as its
// serial twin, so results do not depend on the thread count.

namespace cmis::kernels {

// a: n×k, b: k×m → n×m
Matrix matmul(const Matrix& a, const Matrix& b);
// a: n×k, b: m×k → a·bᵀ (n×m)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a: k×n, b: k×m → aᵀ·b (n×m)
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Row-wise layer normalization without gain/bias. Writes the normalized
/// rows and the per-row inverse standard deviation (n×1).
void layer_norm_rows(const Matrix& x, double eps, Matrix& normalized, Matrix& inv_std);

/// Numerically stable softmax of every row.
Matrix softmax_rows(const Matrix& x);

/// out(t, 0) = a.row(t) · b.row(t)
Matrix row_dot(const Matrix& a, const Matrix& b);

/// Worker count the parallel kernels will use.
int max_threads();

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
void layer_norm_rows(const Matrix& x, double eps, Matrix& normalized, Matrix& inv_std);
Matrix softmax_rows(const Matrix& x);
Matrix row_dot(const Matrix& a, const Matrix& b);
}  // namespace serial

}  // namespace cmis::kernels
