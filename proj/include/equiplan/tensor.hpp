#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "equiplan/errors.hpp"
#include "equiplan/rng.hpp"

namespace equiplan {

// Dense row-major matrix of doubles. Column vectors are n x 1, scalars 1 x 1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> d);

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c); }
    static Tensor identity(std::size_t n);
    static Tensor column(std::initializer_list<double> values);
    static Tensor column(const std::vector<double>& values);
    static Tensor row2(double x, double y);

    // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    static Tensor init_uniform(std::size_t r, std::size_t c, std::size_t fan_in, Rng& rng);

    std::size_t numel() const { return rows * cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double scalar() const;

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

bool operator==(const Tensor& a, const Tensor& b);

// Lowest index wins ties; deterministic selection everywhere.
std::size_t argmax(const std::vector<double>& v);
std::size_t argmin(const std::vector<double>& v);

// Handle to a node on a Tape.
struct Var {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

// Record of one forward pass with reverse-mode differentiation. Nodes are
// appended in execution order, which is already a topological order, so the
// backward pass is a single reverse scan. A tape is confined to one thread.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable leaf (parameters).
    Var leaf(Tensor value);
    // Non-differentiable input (scene data, masks).
    Var constant(Tensor value);

    const Tensor& val(Var v) const { return nodes_[check(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Runs reverse-mode accumulation from a scalar loss. Every node is
    // visited exactly once; gradients of earlier backward() calls are cleared.
    void backward(Var loss);

    // Name of the first node holding a non-finite value, or empty string.
    std::string first_non_finite() const;

    // Primitives. All inputs must live on this tape.
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);    // elementwise, same shape
    Var div(Var a, Var b);    // elementwise, same shape
    Var scale(Var a, double s);
    Var scale_by(Var a, Var s);      // multiply by a 1 x 1 scalar node
    Var add_rowvec(Var a, Var v);    // m x n plus 1 x n, broadcast over rows
    Var scale_rows(Var a, Var s);    // rows of m x n scaled by s (m x 1)
    Var rowwise_l2norm(Var a);       // m x 2 -> m x 1; zero rows get zero gradient
    Var rowwise_dot(Var a, Var b);   // m x 2, m x 2 -> m x 1
    Var concat_rows(const std::vector<Var>& parts);  // stack along axis 0
    Var slice_rows(Var a, std::size_t row0, std::size_t nrows);
    Var mean_rows(Var a);    // m x n -> 1 x n
    Var mean_all(Var a);     // -> 1 x 1
    Var sum_all(Var a);      // -> 1 x 1
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var softmax(Var a);      // column vector, max-subtracted
    Var log_softmax(Var a);  // column vector
    Var pick(Var a, std::size_t index);  // flat element -> 1 x 1

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        const char* op = "";
        std::function<void(Tape&)> backprop;  // captures indices, not pointers
    };

    std::int32_t check(Var v) const;
    Var push(Tensor value, const char* op, bool requires_grad,
             std::function<void(Tape&)> backprop);
    Tensor& grad_mut(std::int32_t idx) { return nodes_[idx].grad; }
    bool needs(Var v) const { return nodes_[check(v)].requires_grad; }

    std::vector<Node> nodes_;

    friend struct TapeTestAccess;
};

// Raw (tape-free) helpers shared by forward and backward kernels.
Tensor matmul_values(const Tensor& a, const Tensor& b);

}  // namespace equiplan
