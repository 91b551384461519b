#include "mlgt/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

#include "mlgt/errors.hpp"

namespace mlgt {

namespace {
thread_local bool tls_grad_enabled = true;
std::atomic<std::uint64_t> g_node_counter{1};
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool grad_enabled() { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

std::uint64_t next_node_id() { return g_node_counter.fetch_add(1, std::memory_order_relaxed); }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto node = std::make_shared<Node<T>>();
    node->value.assign(shape_numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return from({}, {value});
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
    node_->grad.clear();
}

template <typename T>
T Tensor<T>::item() const {
    if (node_->value.size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_string(node_->shape));
    }
    return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
    if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_string(shape()));
    return node_->value.at(row * node_->shape[1] + col);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from(node_->shape, node_->value, false);
}

template <typename T>
Graph<T> Graph<T>::trace(const Tensor<T>& root) {
    Graph g;
    g.root_ = root.node_ptr();
    if (!root.requires_grad()) return g;

    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(g.root_.get(), 0);
    visited.insert(g.root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            g.order_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

template <typename T>
std::vector<typename Graph<T>::Record> Graph<T>::records() const {
    std::vector<Record> out;
    out.reserve(order_.size());
    for (const Node<T>* n : order_) {
        Record r{n->id, n->op, {}};
        for (const auto& in : n->inputs) r.inputs.push_back(in->id);
        out.push_back(std::move(r));
    }
    return out;
}

template <typename T>
void Graph<T>::backward() {
    if (!root_) throw ContractError("backward on an empty graph");
    if (root_->value.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_string(root_->shape));
    }
    if (order_.empty()) return;
    // Leaves get this sweep's gradient in a clean buffer, then add what they
    // held before, so repeated sweeps sum whole gradients.
    std::vector<std::pair<Node<T>*, std::vector<T>>> held;
    for (Node<T>* n : order_) {
        if (n->backward) {
            n->grad.assign(n->value.size(), T(0));
        } else if (!n->grad.empty()) {
            held.emplace_back(n, std::move(n->grad));
            n->grad.clear();
        }
    }
    root_->grad_buffer()[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward) n->backward(*n);
    }
    for (auto& [n, old] : held) {
        T* g = n->grad_buffer();
        for (std::size_t i = 0; i < old.size(); ++i) g[i] += old[i];
    }
}

template <typename T>
void backward(const Tensor<T>& loss) {
    Graph<T>::trace(loss).backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace mlgt
