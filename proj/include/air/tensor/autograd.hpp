#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "air/tensor/tensor.hpp"

namespace air {

struct Node;

/// Propagates `self.grad` into the gradients of `self.inputs`.
using BackwardFn = std::function<void(Node& self)>;

/// One record of the define-by-run graph. Inputs always precede their
/// consumer, so the graph is acyclic by construction.
struct Node {
    std::string op;
    Tensor value;
    Tensor grad;  // empty until backward reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward_fn;

    /// Gradient buffer, zero-initialised on first use.
    Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const;
    /// Mutable access for optimizers and loaders; never use inside a live graph.
    Tensor& mutable_value();
    const Shape& shape() const { return value().shape(); }
    std::size_t dim(int axis) const { return value().dim(axis); }

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    const Tensor& grad() const;
    void zero_grad();
    const std::string& op() const;

    const std::shared_ptr<Node>& node() const noexcept { return node_; }
    bool same_node(const Var& other) const noexcept { return node_ == other.node_; }

private:
    friend Var make_op(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    std::shared_ptr<Node> node_;
};

/// Whether new ops record their inputs (thread-local).
bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Creates a result node. Inputs are retained (and `fn` kept) only when
/// recording is enabled and at least one input requires a gradient.
Var make_op(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

/// Value-identical constant leaf; gradients never flow through it.
Var detach(const Var& x);

/// Nodes reachable from `root` that require a gradient, inputs first.
std::vector<Node*> topological_order(const Var& root);

/// Accumulates d(loss)/d(node) into every reachable node that requires a
/// gradient. `loss` must hold exactly one element.
void backward(const Var& loss);

}  // namespace air
