// Times the OpenMP kernels against their serial references on shapes seen at
// full scale (T = 74 frames, D = 128, batch 32).
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "cmis/kernels.hpp"

using namespace cmis;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = n(rng);
    return m;
}

double seconds_per_call(const std::function<void()>& f) {
    f();
    std::size_t reps = 1;
    for (;;) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < reps; ++i) f();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (s > 0.2) return s / static_cast<double>(reps);
        reps *= 2;
    }
}

void row(const std::string& name, const std::function<void()>& parallel, const std::function<void()>& serial) {
    const double p = seconds_per_call(parallel), s = seconds_per_call(serial);
    std::printf("%-28s %12.1f %12.1f %8.2fx\n", name.c_str(), s * 1e6, p * 1e6, s / p);
}

}  // namespace

int main() {
    std::mt19937_64 rng(7);
    std::printf("threads: %d\n", kernels::max_threads());
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial us", "omp us", "speedup");
    for (auto [n, k, m] : {std::tuple{74, 128, 128}, std::tuple{32 * 74, 128, 512}, std::tuple{74, 74, 128}}) {
        const Matrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
        const Matrix bt = random_matrix(m, k, rng), at = random_matrix(k, n, rng), c = random_matrix(k, m, rng);
        const std::string shape = std::to_string(n) + "x" + std::to_string(k) + "x" + std::to_string(m);
        row("matmul " + shape, [&] { kernels::matmul(a, b); }, [&] { kernels::serial::matmul(a, b); });
        row("matmul_nt " + shape, [&] { kernels::matmul_nt(a, bt); }, [&] { kernels::serial::matmul_nt(a, bt); });
        row("matmul_tn " + shape, [&] { kernels::matmul_tn(at, c); }, [&] { kernels::serial::matmul_tn(at, c); });
    }
    const Matrix x = random_matrix(32 * 74, 128, rng), y = random_matrix(32 * 74, 128, rng);
    Matrix norm, inv;
    row("layer_norm 2368x128", [&] { kernels::layer_norm_rows(x, 1e-5, norm, inv); },
        [&] { kernels::serial::layer_norm_rows(x, 1e-5, norm, inv); });
    row("softmax 2368x128", [&] { kernels::softmax_rows(x); }, [&] { kernels::serial::softmax_rows(x); });
    row("row_dot 2368x128", [&] { kernels::row_dot(x, y); }, [&] { kernels::serial::row_dot(x, y); });
}
