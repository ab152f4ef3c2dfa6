#include "air/tensor/autograd.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace air {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
    if (grad.empty() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->op = "leaf";
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
    if (!node_) throw std::logic_error("var: access to undefined variable");
    return node_->value;
}

Tensor& Var::mutable_value() {
    if (!node_) throw std::logic_error("var: access to undefined variable");
    return node_->value;
}

const Tensor& Var::grad() const {
    if (!node_) throw std::logic_error("var: access to undefined variable");
    return node_->grad;
}

void Var::zero_grad() {
    if (node_) node_->grad = Tensor();
}

const std::string& Var::op() const {
    if (!node_) throw std::logic_error("var: access to undefined variable");
    return node_->op;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->op = std::move(op);
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const Var& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const Var& in : inputs) node->inputs.push_back(in.node());
            node->backward_fn = std::move(fn);
        }
    }
    return Var(std::move(node));
}

Var detach(const Var& x) { return make_op("detach", x.value(), {}, {}); }

std::vector<Node*> topological_order(const Var& root) {
    std::vector<Node*> order;
    if (!root.requires_grad()) return order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS; (node, next input index).
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void backward(const Var& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.value().numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    const auto order = topological_order(loss);
    // Interior buffers may hold stale values from an earlier pass; leaves accumulate.
    for (Node* node : order) {
        if (node->backward_fn) node->grad = Tensor();
    }
    Node* root = loss.node().get();
    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace air
