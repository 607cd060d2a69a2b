// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bayesarch/tensor.hpp"

// Minimal reverse-mode automatic differentiation over dense double arrays.
//
// A Tape records every operation in creation order, so a node's parents always
// precede it. backward() walks the tape once in reverse and accumulates
// gradients by addition, which handles fan-out (shared weights) naturally.
//
// Broadcasting is limited to one case: the second operand of a binary op may
// be a scalar or have the shape of the first operand with its leading (batch)
// dimension removed. The first operand is always the larger one.

namespace bayesarch::ad {

// Raised when an op produces NaN or Inf. op() names the offending operation.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(std::string op, const std::string& what) : std::runtime_error(what), op_(std::move(op)) {}
    const std::string& op() const { return op_; }

private:
    std::string op_;
};

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value().item(); }
    std::size_t size() const { return value().size(); }

    Tape& tape() const { return *tape_; }
    std::size_t index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

class Tape {
public:
    // Called with the tape and the index of the node being differentiated.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    Var constant(Tensor value);
    Var constant(double value) { return constant(Tensor::scalar(value)); }

    // Appends an op node. The backward rule only runs if some parent needs a gradient.
    Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward);
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
        return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
    }

    // Reverse sweep from a scalar loss. Clears gradients from any earlier sweep.
    void backward(Var loss);

    // Gradient of the last backward() loss with respect to v (zeros if unreached).
    Tensor grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(std::size_t i) const { return nodes_[i].value; }
    const std::vector<std::size_t>& parents(std::size_t i) const { return nodes_[i].parents; }
    std::string_view op(std::size_t i) const { return nodes_[i].op; }
    bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }

    // For backward rules: incoming gradient of node i, and the accumulator of a parent.
    const Tensor& out_grad(std::size_t i) const { return *nodes_[i].grad; }
    Tensor& grad_accumulator(std::size_t i);

    void set_check_finite(bool on) { check_finite_ = on; }

private:
    struct Node {
        Tensor value;
        std::optional<Tensor> grad;
        bool requires_grad = false;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        std::string_view op;
    };

    std::vector<Node> nodes_;
    bool check_finite_ = true;
};

// Elementwise binary ops (with the restricted broadcast described above).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);

Var matmul(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

// Softmax of a/temperature along the last axis.
Var softmax(Var a, double temperature = 1.0);
Var log_softmax(Var a, double temperature = 1.0);
// log(sum(exp(a))) over all elements.
Var logsumexp(Var a);

Var sum(Var a);
Var mean(Var a);

// out_i = sum_{j >= i} a_j along the last axis.
Var suffix_sum(Var a);
Var clamp(Var a, double lo, double hi);
Var broadcast_to(Var scalar, const Shape& shape);
Var reshape(Var a, const Shape& shape);
// Contiguous range [offset, offset + numel(shape)) of a's flat data, reshaped.
Var slice(Var a, std::size_t offset, const Shape& shape);
// Stacks equally-shaped inputs into a new leading axis.
Var stack(const std::vector<Var>& parts);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t nan_count = 0;  // coordinates where f could not be evaluated
};

// Compares the tape gradient of a scalar function against central differences.
// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const std::function<Var(Var)>& f, const Tensor& point, double h = 1e-5);

}  // namespace bayesarch::ad
