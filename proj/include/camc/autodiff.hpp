#pragma once

// Minimal reverse-mode automatic differentiation.
//
// A Tape records every operation as a node holding its output value, the
// ids of its inputs and a local backward rule. Nodes are appended in
// evaluation order, so the tape is already topologically sorted and
// backward() is a single reverse sweep. Gradients of nodes used more than
// once accumulate, because every rule adds into its input gradients.
//
// Tensors with rank > 2 are viewed as (rows × last-extent) matrices by the
// row-wise ops below; that is the only implicit broadcasting supported.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "camc/tensor.hpp"

namespace camc::ad {

using NodeId = std::uint32_t;

class Tape;

// Lightweight handle to a node on a tape. Does not own anything.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    NodeId id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

// Local derivative of one node. `grad_in[i]` is null when input i needs no
// gradient; otherwise the rule must add (never assign) into it.
using BackwardRule =
    std::function<void(const Tensor& out, const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

class Gradients {
public:
    const Tensor* find(Var v) const;
    const Tensor& at(Var v) const;
    std::size_t size() const { return grads_.size(); }

private:
    friend class Tape;
    std::unordered_map<NodeId, Tensor> grads_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Trainable leaf (parameter or differentiable input).
    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Appends an op node. The rule is dropped when no input needs a gradient
    // or gradient recording is disabled.
    Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

    // d loss / d leaf for every reachable leaf created with requires_grad.
    Gradients backward(Var loss) const;

    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardRule rule;
        bool requires_grad = false;
        bool is_leaf = false;
    };

    std::deque<Node> nodes_;  // deque: references stay valid while recording
    bool grad_enabled_ = true;
};

// RAII switch for inference passes.
class NoGradGuard {
public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.grad_enabled()) { tape.set_grad_enabled(false); }
    ~NoGradGuard() { tape_.set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape& tape_;
    bool prev_;
};

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, real s);
Var add_scalar(Var a, real s);
Var neg(Var a);
Var square(Var a);
Var exp(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var gelu(Var a);
// Clamp with zero gradient outside [lo, hi].
Var clamp(Var a, real lo, real hi);
// max(a, bound); gradient still flows below the bound when it pushes upward.
Var lower_bound(Var a, real bound);
// round() in value, identity in gradient.
Var round_ste(Var a);
Var stop_gradient(Var a);

// ---- reductions / shape ------------------------------------------------------

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

// ---- row-wise (leading extents collapse into rows) --------------------------

Var add_row(Var x, Var row);  // x[r, :] + row
Var mul_row(Var x, Var row);  // x[r, :] * row
Var broadcast_rows(Var row, std::size_t rows);
Var matmul(Var a, Var b);     // (rows × k)·(k × n); keeps leading shape of a
Var slice_cols(Var x, std::size_t begin, std::size_t end);
// out[i, :] = x[index[i], :], or zeros when index[i] < 0. Backward scatters.
Var gather_rows(Var x, std::span<const std::int64_t> index);
Var layer_norm(Var x, Var gamma, Var beta, real eps = 1e-5f);

// ---- convolution over H×W×C maps ----------------------------------------------

// w: k×k×Cin×Cout, b: Cout.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// w: Cin×k×k×Cout, b: Cout. Output extent (H−1)·stride − 2·pad + k + out_pad.
Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad);
// w: k×k×C, b: C; stride 1, "same" zero padding, odd k.
Var depthwise_conv2d(Var x, Var w, Var b);

// ---- entropy -------------------------------------------------------------------

// Per-element −log2 of the unit-bin Gaussian mass around residual v with
// scale sigma: Φ((v+½)/σ) − Φ((v−½)/σ), floored at 1e-9.
Var gaussian_bits(Var residual, Var sigma);

}  // namespace camc::ad
