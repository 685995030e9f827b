#include "memformer/numkernel/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace memformer {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

}  // namespace detail

namespace {

void check_extents(const Shape& shape) {
    for (auto extent : shape) {
        if (extent == 0) {
            throw std::invalid_argument("tensor extents must be positive, got " + shape_string(shape));
        }
    }
}

const detail::Node& require(const std::shared_ptr<detail::Node>& node) {
    if (!node) {
        throw std::logic_error("use of an undefined tensor");
    }
    return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_extents(shape);
    auto node = std::make_shared<detail::Node>();
    node->data.assign(shape_size(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_extents(shape);
    if (values.size() != shape_size(shape)) {
        throw std::invalid_argument("tensor of shape " + shape_string(shape) + " needs " +
                                    std::to_string(shape_size(shape)) + " values, got " +
                                    std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    }
    return s[axis];
}

std::size_t Tensor::size() const { return require(node_).data.size(); }

std::span<const double> Tensor::data() const { return require(node_).data; }

std::span<double> Tensor::mutable_data() {
    require(node_);
    return node_->data;
}

double Tensor::item() const {
    if (size() != 1) {
        throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
    }
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) {
        throw std::invalid_argument("index rank does not match " + shape_string(s));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) {
            throw std::out_of_range("index out of range for " + shape_string(s));
        }
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

std::span<const double> Tensor::grad() const { return require(node_).grad; }

bool Tensor::has_grad() const { return !require(node_).grad.empty(); }

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    require(node_);
    if (!is_leaf()) {
        throw std::logic_error("requires_grad can only be changed on leaf tensors");
    }
    node_->requires_grad = flag;
    if (!flag) {
        node_->grad.clear();
    }
}

void Tensor::zero_grad() {
    require(node_);
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return !require(node_).backward; }

const char* Tensor::op_name() const { return require(node_).op; }

Tensor Tensor::detach() const {
    const auto& n = require(node_);
    return from(n.shape, n.data, false);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::initializer_list<Tensor> parents, const char* op,
                           std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    for (const auto& p : parents) {
        if (require(p.node_).requires_grad) {
            node->requires_grad = true;
        }
    }
    if (node->requires_grad) {
        node->parents.reserve(parents.size());
        for (const auto& p : parents) {
            node->parents.push_back(p.node_);
        }
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

std::size_t backward(const Tensor& loss) {
    if (!loss.defined()) {
        throw std::logic_error("backward on an undefined tensor");
    }
    if (loss.size() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return 0;
    }

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    for (auto* node : order) {
        if (node->backward) {
            node->grad.clear();
        }
    }
    loss.node()->grad_buffer()[0] += 1.0;

    std::size_t visited = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (!node->backward) {
            continue;
        }
        node->grad_buffer();
        node->backward(*node);
        ++visited;
    }
    return visited;
}

}  // namespace memformer
