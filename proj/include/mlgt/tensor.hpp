#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mlgt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Whether ops executed on this thread record a graph. Inference threads
/// turn it off with NoGradGuard; the flag is thread-local.
bool grad_enabled();

class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

std::uint64_t next_node_id();

/// One value in the computation graph. Leaves have no backward function;
/// interior nodes keep their inputs alive and know how to push their
/// gradient into them.
template <typename T>
struct Node {
    std::uint64_t id = next_node_id();
    const char* op = "leaf";
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient buffer, zero-filled on first use.
    T* grad_buffer() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

/// Dense row-major tensor with reverse-mode autodiff. Copies share the
/// underlying node, so a Tensor is a cheap handle.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> values() const { return node_->value; }
    /// Mutable access for leaves (parameter updates, finite differences).
    std::span<T> values_mut() { return node_->value; }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> grad_mut() { return {node_->grad_buffer(), node_->value.size()}; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    void zero_grad();

    T item() const;
    T at(std::size_t row, std::size_t col) const;

    std::uint64_t id() const { return node_->id; }
    const char* op() const { return node_->op; }
    Node<T>& node() const { return *node_; }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    /// Same values, no graph history, no grad requirement.
    Tensor detach() const;

   private:
    std::shared_ptr<Node<T>> node_;
};

/// Topologically ordered view of the nodes reachable from a root that take
/// part in differentiation.
template <typename T>
class Graph {
   public:
    struct Record {
        std::uint64_t output;
        std::string op;
        std::vector<std::uint64_t> inputs;
    };

    static Graph trace(const Tensor<T>& root);

    std::vector<Record> records() const;
    std::size_t size() const { return order_.size(); }

    /// Reverse-mode sweep. Interior gradients are reset first; leaf gradients
    /// accumulate across calls.
    void backward();

   private:
    std::shared_ptr<Node<T>> root_;
    std::vector<Node<T>*> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace mlgt
