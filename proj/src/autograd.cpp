#include "cmis/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cmis/kernels.hpp"

namespace cmis {

const Matrix& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) return Var{this, it->second};
    Node n;
    n.value = p.value;
    n.requires_grad = grad_enabled_ && !p.frozen;
    n.param = n.requires_grad ? &p : nullptr;
    Var v = push(std::move(n));
    param_leaves_.emplace(&p, v.id);
    return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const Var& p : parents) n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const Var& p : parents) n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape != this) throw std::logic_error("backward: node belongs to another tape");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + lv.shape_str());
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Matrix(1, 1, seed);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) {
            if (n.param->grad.empty()) n.param->zero_grad();
            n.param->grad += n.grad;
        }
    }
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "gelu") return Activation::gelu;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::gelu: return "gelu";
        case Activation::identity: return "identity";
    }
    return "?";
}

namespace ag {

namespace {
template <class F>
Matrix map(const Matrix& m, F f) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = f(m[i]);
    return out;
}
}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    return t.record(kernels::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (a.requires_grad()) t.accumulate(a.id, kernels::matmul_nt(g, b.value()));
        if (b.requires_grad()) t.accumulate(b.id, kernels::matmul_tn(a.value(), g));
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = *a.tape;
    return t.record(kernels::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (a.requires_grad()) t.accumulate(a.id, kernels::matmul(g, b.value()));
        if (b.requires_grad()) t.accumulate(b.id, kernels::matmul_tn(g, a.value()));
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        if (b.requires_grad()) t.accumulate(b.id, g * -1.0);
    });
}

Var hadamard(Var a, Var b) {
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    require_same_shape(x, y, "hadamard");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        const Matrix& x = a.value();
        const Matrix& y = b.value();
        if (a.requires_grad()) {
            Matrix d(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i];
            t.accumulate(a.id, d);
        }
        if (b.requires_grad()) {
            Matrix d(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * x[i];
            t.accumulate(b.id, d);
        }
    });
}

Var scale(Var a, double s) {
    return a.tape->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var add_row(Var a, Var row) {
    const Matrix& x = a.value();
    const Matrix& r = row.value();
    if (r.rows() != 1 || r.cols() != x.cols())
        throw ShapeError("add_row: expected 1x" + std::to_string(x.cols()) + " row, got " + r.shape_str());
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) += r(0, c);
    return a.tape->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a.id, g);
        if (row.requires_grad()) {
            Matrix d(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t c = 0; c < g.cols(); ++c) d(0, c) += g(i, c);
            t.accumulate(row.id, d);
        }
    });
}

Var scale_rows(Var a, Var w) {
    const Matrix& x = a.value();
    const Matrix& wv = w.value();
    if (wv.rows() != x.rows() || wv.cols() != 1)
        throw ShapeError("scale_rows: weights " + wv.shape_str() + " for matrix " + x.shape_str());
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) *= wv(i, 0);
    return a.tape->record(std::move(out), {a, w}, [a, w](Tape& t, const Matrix& g) {
        const Matrix& x = a.value();
        const Matrix& wv = w.value();
        if (a.requires_grad()) {
            Matrix d = g;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t c = 0; c < g.cols(); ++c) d(i, c) *= wv(i, 0);
            t.accumulate(a.id, d);
        }
        if (w.requires_grad()) t.accumulate(w.id, kernels::row_dot(g, x));
    });
}

Var row_dot(Var a, Var b) {
    return a.tape->record(kernels::row_dot(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        auto side = [&](Var self, Var other) {
            if (!self.requires_grad()) return;
            Matrix d = other.value();
            for (std::size_t i = 0; i < d.rows(); ++i)
                for (std::size_t c = 0; c < d.cols(); ++c) d(i, c) *= g(i, 0);
            t.accumulate(self.id, d);
        };
        side(a, b);
        side(b, a);
    });
}

namespace {
// Elementwise op whose derivative is evaluated from the input value.
template <class F, class D>
Var unary(Var a, F f, D df) {
    Matrix y = map(a.value(), f);
    return a.tape->record(std::move(y), {a}, [a, df](Tape& t, const Matrix& g) {
        const Matrix& x = a.value();
        Matrix d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * df(x[i]);
        t.accumulate(a.id, d);
    });
}

double sigmoid_scalar(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}  // namespace

Var tanh(Var a) {
    return unary(a, [](double v) { return std::tanh(v); },
                 [](double v) { const double y = std::tanh(v); return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(a, sigmoid_scalar, [](double v) { const double s = sigmoid_scalar(v); return s * (1.0 - s); });
}

Var relu(Var a) {
    return unary(a, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
    // tanh approximation
    return unary(
        a,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v))); },
        [](double v) {
            const double u = kGeluC * (v + 0.044715 * v * v * v);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        });
}

Var activate(Var a, Activation act) {
    switch (act) {
        case Activation::relu: return relu(a);
        case Activation::tanh: return tanh(a);
        case Activation::gelu: return gelu(a);
        case Activation::identity: return a;
    }
    return a;
}

Var layer_norm(Var x, std::optional<Var> gain, std::optional<Var> bias, double eps) {
    Matrix xhat, inv_std;
    kernels::layer_norm_rows(x.value(), eps, xhat, inv_std);
    const std::size_t d = x.cols();
    Matrix y = xhat;
    if (gain) {
        if (gain->rows() != 1 || gain->cols() != d) throw ShapeError("layer_norm: gain shape " + gain->value().shape_str());
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) y(r, c) *= gain->value()(0, c);
    }
    if (bias) {
        if (bias->rows() != 1 || bias->cols() != d) throw ShapeError("layer_norm: bias shape " + bias->value().shape_str());
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) y(r, c) += bias->value()(0, c);
    }
    std::vector<Var> parents{x};
    if (gain) parents.push_back(*gain);
    if (bias) parents.push_back(*bias);
    return x.tape->record(std::move(y), parents,
                          [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
        const std::size_t rows = g.rows(), d = g.cols();
        if (gain && gain->requires_grad()) {
            Matrix dg(1, d);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c) dg(0, c) += g(r, c) * xhat(r, c);
            t.accumulate(gain->id, dg);
        }
        if (bias && bias->requires_grad()) {
            Matrix db(1, d);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c) db(0, c) += g(r, c);
            t.accumulate(bias->id, db);
        }
        if (!x.requires_grad()) return;
        Matrix dx(rows, d);
        const double n = static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_xh = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double dh = g(r, c) * (gain ? gain->value()(0, c) : 1.0);
                sum_dh += dh;
                sum_dh_xh += dh * xhat(r, c);
            }
            for (std::size_t c = 0; c < d; ++c) {
                const double dh = g(r, c) * (gain ? gain->value()(0, c) : 1.0);
                dx(r, c) = inv_std(r, 0) / n * (n * dh - sum_dh - xhat(r, c) * sum_dh_xh);
            }
        }
        t.accumulate(x.id, dx);
    });
}

Var softmax_rows(Var a) {
    Matrix y = kernels::softmax_rows(a.value());
    Matrix ycopy = y;
    return a.tape->record(std::move(y), {a}, [a, y = std::move(ycopy)](Tape& t, const Matrix& g) {
        Matrix d(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) = y(r, c) * (g(r, c) - dot);
        }
        t.accumulate(a.id, d);
    });
}

Var mean_rows(Var a) {
    const Matrix& x = a.value();
    if (x.rows() == 0) throw ShapeError("mean_rows: empty matrix");
    Matrix m(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) m(0, c) += x(r, c);
    m *= 1.0 / static_cast<double>(x.rows());
    const std::size_t rows = x.rows();
    return a.tape->record(std::move(m), {a}, [a, rows](Tape& t, const Matrix& g) {
        Matrix d(rows, g.cols());
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) = g(0, c) * inv;
        t.accumulate(a.id, d);
    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const Matrix& x = a.value();
    if (start + count > x.cols()) throw ShapeError("slice_cols: range exceeds " + x.shape_str());
    Matrix out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
    const std::size_t cols = x.cols();
    return a.tape->record(std::move(out), {a}, [a, start, count, cols](Tape& t, const Matrix& g) {
        Matrix d(g.rows(), cols);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < count; ++c) d(r, start + c) = g(r, c);
        t.accumulate(a.id, d);
    });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
    const Matrix& x = a.value();
    if (start + count > x.rows()) throw ShapeError("slice_rows: range exceeds " + x.shape_str());
    Matrix out(count, x.cols());
    std::copy(x.data() + start * x.cols(), x.data() + (start + count) * x.cols(), out.data());
    const std::size_t rows = x.rows();
    return a.tape->record(std::move(out), {a}, [a, start, rows](Tape& t, const Matrix& g) {
        Matrix d(rows, g.cols());
        std::copy(g.data(), g.data() + g.size(), d.data() + start * g.cols());
        t.accumulate(a.id, d);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Matrix& v = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
        off += v.cols();
    }
    return parts.front().tape->record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            const std::size_t w = p.cols();
            if (p.requires_grad()) {
                Matrix d(g.rows(), w);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < w; ++c) d(r, c) = g(r, off + c);
                t.accumulate(p.id, d);
            }
            off += w;
        }
    });
}

Var stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("stack_rows: no parts");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.cols() != cols) throw ShapeError("stack_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Matrix& v = p.value();
        std::copy(v.data(), v.data() + v.size(), out.data() + off * cols);
        off += v.rows();
    }
    return parts.front().tape->record(std::move(out), parts, [parts, cols](Tape& t, const Matrix& g) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            const std::size_t h = p.rows();
            if (p.requires_grad()) {
                Matrix d(h, cols);
                std::copy(g.data() + off * cols, g.data() + (off + h) * cols, d.data());
                t.accumulate(p.id, d);
            }
            off += h;
        }
    });
}

Var average(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("average: empty list");
    Matrix acc = parts.front().value();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        require_same_shape(acc, parts[i].value(), "average");
        acc += parts[i].value();
    }
    const double inv = 1.0 / static_cast<double>(parts.size());
    acc *= inv;
    return parts.front().tape->record(std::move(acc), parts, [parts, inv](Tape& t, const Matrix& g) {
        const Matrix d = g * inv;
        for (const Var& p : parts) t.accumulate(p.id, d);
    });
}

Var mean_abs(Var a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (double v : x.values()) s += std::abs(v);
    const double inv = 1.0 / static_cast<double>(x.size());
    return a.tape->record(Matrix(1, 1, s * inv), {a}, [a, inv](Tape& t, const Matrix& g) {
        const Matrix& x = a.value();
        Matrix d(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[0] * inv * (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0));
        t.accumulate(a.id, d);
    });
}

Var mean_square(Var a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    const double inv = 1.0 / static_cast<double>(x.size());
    return a.tape->record(Matrix(1, 1, s * inv), {a}, [a, inv](Tape& t, const Matrix& g) {
        const Matrix& x = a.value();
        Matrix d(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[0] * 2.0 * inv * x[i];
        t.accumulate(a.id, d);
    });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace ag
}  // namespace cmis
