#include "symploc/autodiff/tape.hpp"

#include <algorithm>
#include <stdexcept>

namespace symploc::ad {

Tensor Tape::bind(Shape shape, std::shared_ptr<const std::vector<double>> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    t.tape_ = this;
    t.node_ = nodes_.size() - 1;
    t.generation_ = generation_;
    return t;
}

Tensor Tape::variable(const Tensor& value) {
    Node node;
    node.size = value.size();
    nodes_.push_back(std::move(node));
    return bind(value.shape(), value.data_);
}

Tensor Tape::record(Shape shape, std::vector<double> data, BackwardFn backward) {
    Node node;
    node.size = data.size();
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return bind(std::move(shape), std::make_shared<const std::vector<double>>(std::move(data)));
}

bool Tape::owns(const Tensor& t) const {
    return t.tape_ == this && t.generation_ == generation_ && t.node_ < nodes_.size();
}

void Tape::backward(const Tensor& root) {
    for (auto& n : nodes_) n.grad.clear();
    if (!root.requires_grad()) return;
    if (!owns(root)) throw std::logic_error("backward: root is detached from this tape");
    if (root.rank() != 0) throw ShapeError("backward: root must be a scalar, got " + shape_string(root.shape()));

    nodes_[root.node_].grad.assign(1, 1.0);
    for (std::size_t i = root.node_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n.grad, *this);
    }
}

std::span<double> Tape::grad_buffer(const Tensor& t) {
    if (!owns(t)) throw std::logic_error("grad_buffer: tensor not recorded on this tape");
    Node& n = nodes_[t.node_];
    if (n.grad.empty()) n.grad.assign(n.size, 0.0);
    return n.grad;
}

std::vector<double> Tape::grad(const Tensor& t) const {
    if (!owns(t)) throw std::logic_error("grad: tensor not recorded on this tape");
    const Node& n = nodes_[t.node_];
    if (n.grad.empty()) return std::vector<double>(n.size, 0.0);
    return n.grad;
}

Tensor Tape::grad_tensor(const Tensor& t) const { return Tensor(t.shape(), grad(t)); }

void Tape::reset() {
    nodes_.clear();
    ++generation_;
}

}  // namespace symploc::ad
