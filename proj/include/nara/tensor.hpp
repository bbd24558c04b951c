#pragma once

// Dense float64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations in ops.hpp
// record their inputs and a gradient rule when any input requires a
// gradient and recording is enabled (see NoGradGuard). backward() walks the
// recorded graph in reverse creation order, which is a valid reverse
// topological order and makes gradient summation order deterministic.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nara {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Misuse of the differentiation machinery (non-scalar loss, double backward, ...).
class AutogradError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient lands
    bool requires_grad = false;
    bool leaf = true;
    bool released = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(std::span<const double> g);
    std::vector<double>& grad_buffer();
};

std::uint64_t next_seq();

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    /// Zero-filled tensor.
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor identity(std::size_t n);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Mutable storage. Writing through this bypasses the graph; intended for
    /// parameter updates and finite-difference perturbation of leaves.
    std::span<double> data_mut();
    double item() const;
    double at(std::size_t i) const { return data()[i]; }
    double at(std::size_t i, std::size_t j) const { return data()[i * cols() + j]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    /// Gradient storage; zeros if no gradient has landed yet.
    std::vector<double> grad() const;
    Tensor grad_tensor() const;
    void zero_grad();

    /// Value copy disconnected from any graph.
    Tensor detach() const;
    const char* op() const;
    const void* id() const { return node_.get(); }

    // Construction hooks for ops.cpp.
    static Tensor from_node(std::shared_ptr<detail::Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; the recorded graph is released afterwards, so a second call on
/// the same loss throws AutogradError.
void backward(const Tensor& loss);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

}  // namespace nara
