#pragma once

#include <functional>
#include <span>
#include <vector>

#include "symploc/autodiff/tensor.hpp"

namespace symploc::ad {

// Records operations in execution order. Every node's parents are recorded
// before it, so a reverse sweep over the node list is a valid topological
// traversal. Single-threaded; use one tape per thread.
class Tape {
public:
    // Accumulates the node's output gradient into its parents' gradients.
    using BackwardFn = std::function<void(std::span<const double> grad_out, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a leaf whose gradient is collected by backward().
    Tensor variable(const Tensor& value);

    // Records the result of a primitive. Used by the op library.
    Tensor record(Shape shape, std::vector<double> data, BackwardFn backward);

    // Runs the reverse sweep from a scalar root. A tape-free root is a
    // constant: all gradients are zero. Gradients from a previous sweep are
    // discarded first.
    void backward(const Tensor& root);

    // Gradient of a tensor recorded on this tape (zeros when untouched).
    std::vector<double> grad(const Tensor& t) const;
    Tensor grad_tensor(const Tensor& t) const;

    // Mutable gradient buffer for a node; allocated on first use.
    std::span<double> grad_buffer(const Tensor& t);

    bool owns(const Tensor& t) const;
    std::size_t size() const { return nodes_.size(); }
    void reset();

private:
    struct Node {
        std::size_t size = 0;
        BackwardFn backward;
        std::vector<double> grad;
    };

    Tensor bind(Shape shape, std::shared_ptr<const std::vector<double>> data);

    std::vector<Node> nodes_;
    std::size_t generation_ = 1;
};

}  // namespace symploc::ad
