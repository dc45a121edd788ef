#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "cmis/autograd.hpp"
#include "cmis/layers.hpp"
#include "cmis/rng.hpp"

namespace cmis::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = n(rng);
    return m;
}

/// Worst per-block relative error ||analytic − numeric|| / (||analytic|| + ||numeric||)
/// between backpropagated gradients and central differences.
struct GradCheck {
    double worst = 0.0;
    std::string block;
};

inline GradCheck grad_check(const ParamList& params, const std::function<Var(Tape&)>& loss, double step = 1e-5) {
    for (const auto& [_, p] : params) {
        p->frozen = false;
        p->zero_grad();
    }
    {
        Tape t;
        t.backward(loss(t));
    }
    auto value = [&] {
        Tape t(false);
        return loss(t).value()(0, 0);
    };
    GradCheck out;
    for (const auto& [name, p] : params) {
        double diff = 0.0, an = 0.0, nu = 0.0;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + step;
            const double up = value();
            p->value[i] = orig - step;
            const double down = value();
            p->value[i] = orig;
            const double numeric = (up - down) / (2 * step);
            diff += (numeric - p->grad[i]) * (numeric - p->grad[i]);
            an += p->grad[i] * p->grad[i];
            nu += numeric * numeric;
        }
        // The floor keeps blocks whose true gradient is zero (an attention
        // key bias, say) from turning rounding noise into a large ratio.
        const double rel = std::sqrt(diff) / std::max(std::sqrt(an) + std::sqrt(nu), 1e-6);
        if (rel > out.worst) out = {rel, name};
    }
    return out;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("cmis_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace cmis::test
