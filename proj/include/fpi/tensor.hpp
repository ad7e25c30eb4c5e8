#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace fpi {

/// Thrown on shape/dimension violations.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily; same length as value when present
    bool requires_grad = false;
    bool is_leaf = true;
    bool backward_done = false;  // set on the root after a backward pass
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

/// Dense n-dimensional array of reals with optional reverse-mode gradient
/// tracking. Value-semantics handle onto a shared graph node: copies alias
/// the same storage, which is what the autodiff graph wants.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T v, bool requires_grad = false) {
        auto node = std::make_shared<TensorNode<T>>();
        std::size_t n = shape_numel(shape);
        node->shape = std::move(shape);
        node->value.assign(n, v);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        auto node = std::make_shared<TensorNode<T>>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    /// Result-of-an-op constructor: non-leaf node wired to its parents.
    static Tensor make_op(Shape shape, std::vector<T> data,
                          std::vector<Tensor> parents,
                          std::function<void(TensorNode<T>&)> backprop) {
        Tensor t = from(std::move(shape), std::move(data));
        t.node_->is_leaf = false;
        bool rg = false;
        for (auto& p : parents) {
            t.node_->parents.push_back(p.node_);
            rg = rg || p.node_->requires_grad;
        }
        t.node_->requires_grad = rg;
        if (rg) t.node_->backprop = std::move(backprop);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    std::size_t numel() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    std::span<T> value() { return node_->value; }
    std::span<const T> value() const { return node_->value; }
    std::vector<T>& value_vec() { return node_->value; }
    const std::vector<T>& value_vec() const { return node_->value; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const {
        if (!has_grad()) throw std::runtime_error("gradient not populated");
        return node_->grad;
    }
    std::vector<T>& grad_vec() { return node_->grad; }

    void zero_grad() { node_->grad.clear(); }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    /// Same values, detached from the graph (no parents, no grad tracking).
    Tensor detach() const {
        return from(node_->shape, node_->value, false);
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    /// Reverse-mode sweep from this scalar. Populates grad on every
    /// reachable requires_grad node. A second call on the same root
    /// without rebuilding the graph is an error.
    void backward() const {
        if (numel() != 1) throw ShapeError("backward() root must be scalar");
        if (!node_->requires_grad)
            throw std::runtime_error("backward() root does not require grad");
        if (node_->backward_done)
            throw std::runtime_error("backward() already ran on this graph root");
        node_->backward_done = true;

        // Iterative post-order topological sort.
        std::vector<TensorNode<T>*> order;
        std::unordered_set<TensorNode<T>*> visited;
        std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                TensorNode<T>* p = n->parents[idx++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        node_->ensure_grad();
        node_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode<T>* n = *it;
            if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
        }
    }

private:
    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace fpi
