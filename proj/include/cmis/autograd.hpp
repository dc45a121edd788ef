#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmis/matrix.hpp"

namespace cmis {

/// A trainable parameter block. `grad` accumulates across backward passes
/// until the optimizer consumes it; `momentum` is the SGD velocity buffer.
struct Parameter {
    Matrix value;
    Matrix grad;
    Matrix momentum;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(Matrix v) : value(std::move(v)) {}
    void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;
};

/// Dynamic computation graph recorded in creation order. Because nodes are
/// appended only after their parents, reverse creation order is a valid
/// topological order for backpropagation.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Leaf for a parameter; one leaf per parameter per tape. Frozen
    /// parameters and no-grad tapes yield leaves that never receive gradient.
    Var param(Parameter& p);

    Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
    Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

    /// Backpropagates from a 1×1 node, scaling the seed gradient by `seed`,
    /// and adds the resulting leaf gradients into Parameter::grad.
    void backward(Var loss, double seed = 1.0);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    /// Gradient accumulated at a node after backward(); empty if none reached it.
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    void accumulate(std::size_t id, const Matrix& g);
    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Var push(Node n);

    bool grad_enabled_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_leaves_;
};

enum class Activation { relu, tanh, gelu, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Differentiable operations over tape nodes.
namespace ag {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a·bᵀ
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// a (n×d) plus a 1×d row broadcast to every row.
Var add_row(Var a, Var row);
/// Row t of a multiplied by w(t, 0); w is n×1.
Var scale_rows(Var a, Var w);
/// n×1 column of per-row dot products.
Var row_dot(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var gelu(Var a);
Var activate(Var a, Activation act);
/// Per-row normalization over columns; gain and bias are optional 1×d rows.
Var layer_norm(Var x, std::optional<Var> gain, std::optional<Var> bias, double eps = 1e-5);
Var softmax_rows(Var a);
/// 1×d mean over rows.
Var mean_rows(Var a);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var stack_rows(const std::vector<Var>& parts);
/// Elementwise mean of equally shaped nodes.
Var average(const std::vector<Var>& parts);
/// 1×1 mean of |a|.
Var mean_abs(Var a);
/// 1×1 mean of a².
Var mean_square(Var a);
/// Gradient-blocking copy.
Var detach(Var a);

}  // namespace ag
}  // namespace cmis
