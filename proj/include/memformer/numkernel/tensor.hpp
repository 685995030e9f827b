#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace memformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the compute graph. Results of primitives keep their parents
// alive; leaves (parameters, inputs) have no parents and no backward rule.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor with reverse-mode differentiation.
///
/// A Tensor is a cheap handle: copies share the same storage. Primitives in
/// ops.hpp produce new tensors and record how to propagate adjoints back to
/// their inputs whenever any input requires a gradient.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    std::span<const double> grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    void set_requires_grad(bool flag);
    void zero_grad();

    bool is_leaf() const;
    const char* op_name() const;

    /// Copy of the values with no graph history.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Used by primitives. The result only records its parents and backward
    // rule when at least one parent requires a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::initializer_list<Tensor> parents, const char* op,
                              std::function<void(detail::Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

/// Populates grad on every requires_grad ancestor of a scalar loss.
///
/// Gradients accumulate into leaves across calls; intermediate gradients are
/// reset first so replaying the same graph is consistent. Returns the number
/// of recorded primitives visited, each exactly once.
std::size_t backward(const Tensor& loss);

}  // namespace memformer
