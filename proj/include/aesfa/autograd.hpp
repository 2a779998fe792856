#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aesfa/tensor.hpp"

namespace aesfa {

// Reverse-mode tape. Ops return Var values; when grad mode is on and an
// input requires grad, the op records a closure that scatters the output
// gradient back into its parents. Inference runs with grad mode off, in
// which case no graph is retained and intermediates free eagerly.
struct GradMode {
    static bool& flag() {
        thread_local bool f = false;
        return f;
    }
    static bool enabled() { return flag(); }
};

struct GradGuard {
    bool prev;
    explicit GradGuard(bool on) : prev(GradMode::flag()) { GradMode::flag() = on; }
    ~GradGuard() { GradMode::flag() = prev; }
    GradGuard(const GradGuard&) = delete;
    GradGuard& operator=(const GradGuard&) = delete;
};

inline uint64_t next_node_seq() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
struct VarNode {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    uint64_t seq = 0;
    std::vector<std::shared_ptr<VarNode>> parents;
    std::function<void(VarNode&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (grad.shape.empty()) grad = Tensor<T>::zeros(value.shape);
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> v, bool requires_grad = false) : node_(std::make_shared<VarNode<T>>()) {
        node_->value = std::move(v);
        node_->requires_grad = requires_grad;
        node_->seq = next_node_seq();
    }

    static Var leaf(Tensor<T> v, bool requires_grad) { return Var(std::move(v), requires_grad); }

    // Result of an op. Records the tape edge only when it matters.
    static Var from_op(Tensor<T> value, std::vector<Var> parents, std::function<void(VarNode<T>&)> backward_fn) {
        Var out(std::move(value), false);
        if (!GradMode::enabled()) return out;
        bool need = false;
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) need = true;
        if (!need) return out;
        out.node_->requires_grad = true;
        out.node_->backward_fn = std::move(backward_fn);
        out.node_->parents.reserve(parents.size());
        for (auto& p : parents)
            if (p.defined()) out.node_->parents.push_back(p.node_);
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    int64_t numel() const { return node_ ? node_->value.numel() : 0; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    Tensor<T>& grad() { return node_->ensure_grad(); }
    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && !node_->grad.shape.empty(); }
    void zero_grad() {
        if (node_ && !node_->grad.shape.empty()) std::fill(node_->grad.data.begin(), node_->grad.data.end(), T(0));
    }

    std::shared_ptr<VarNode<T>> node() const { return node_; }

private:
    std::shared_ptr<VarNode<T>> node_;
};

// Accumulates d(root)/d(x) into every reachable node that requires grad.
// root must be scalar.
template <typename T>
void backward(const Var<T>& root) {
    if (!root.defined() || root.numel() != 1) throw InvalidArgument("backward: root must be a defined scalar");
    if (!root.requires_grad()) return;

    std::vector<VarNode<T>*> order;
    std::unordered_set<VarNode<T>*> seen;
    std::vector<VarNode<T>*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        VarNode<T>* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const VarNode<T>* a, const VarNode<T>* b) { return a->seq > b->seq; });

    root.node()->ensure_grad();
    root.node()->grad.data[0] = T(1);
    for (VarNode<T>* n : order) {
        if (!n->backward_fn) continue;
        if (n->grad.shape.empty()) continue;  // no gradient ever reached this node
        n->backward_fn(*n);
    }
}

}  // namespace aesfa
