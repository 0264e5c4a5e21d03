#include "mawsd/tensor.hpp"

#include "mawsd/errors.hpp"

#include <sstream>
#include <unordered_set>

namespace mawsd {

Index shape_size(const Shape& shape)
{
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

Array& Node::grad_buffer()
{
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
}

void Node::accumulate(const Array& g)
{
    if (!requires_grad) return;
    grad_buffer() += g;
}

} // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, Array data, bool requires_grad)
{
    if (shape.size() > kMaxRank)
        throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds 3");
    if (shape_size(shape) != data.size())
        throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node)
{
    if (!node) throw UsageError("use of an undefined tensor");
    return *node;
}

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    const Index n = shape_size(shape);
    return Tensor(make_leaf(std::move(shape), Array::Zero(n), requires_grad));
}

Tensor Tensor::constant(Shape shape, double fill, bool requires_grad)
{
    const Index n = shape_size(shape);
    return Tensor(make_leaf(std::move(shape), Array::Constant(n, fill), requires_grad));
}

Tensor Tensor::from(Shape shape, Array data, bool requires_grad)
{
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> data, bool requires_grad)
{
    Array a(static_cast<Index>(data.size()));
    Index i = 0;
    for (double v : data) a(i++) = v;
    return from(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad)
{
    return from(Shape{}, Array::Constant(1, v), requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

Index Tensor::dim(int axis) const
{
    const Shape& s = shape();
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[static_cast<std::size_t>(axis)];
}

const Array& Tensor::value() const { return checked(node_).value; }

Array& Tensor::mutable_value()
{
    checked(node_);
    return node_->value;
}

double Tensor::item() const
{
    if (size() != 1)
        throw UsageError("item() on non-scalar tensor of shape " + shape_string(shape()));
    return value()(0);
}

double Tensor::at(Index i, Index j) const
{
    return value()(i * dim(-1) + j);
}

double Tensor::at(Index i, Index j, Index k) const
{
    return value()((i * dim(1) + j) * dim(2) + k);
}

ConstMatrixMap Tensor::matrix() const
{
    const Shape& s = shape();
    Index rows = 1;
    Index cols = 1;
    if (s.size() == 1) {
        cols = s[0];
    } else if (s.size() >= 2) {
        cols = s.back();
        rows = shape_size(s) / cols;
    }
    return ConstMatrixMap(value().data(), rows, cols);
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

bool Tensor::has_grad() const { return checked(node_).grad.size() == size(); }

Array Tensor::grad() const
{
    const auto& n = checked(node_);
    if (n.grad.size() != n.value.size()) return Array::Zero(n.value.size());
    return n.grad;
}

Array& Tensor::mutable_grad()
{
    checked(node_);
    return node_->grad_buffer();
}

void Tensor::zero_grad()
{
    checked(node_);
    node_->grad = Array();
}

void Tensor::set_requires_grad(bool flag)
{
    checked(node_);
    if (!node_->is_leaf()) throw UsageError("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = flag;
}

const char* Tensor::op() const { return checked(node_).op; }

Tensor Tensor::detach() const
{
    return from(shape(), value(), false);
}

void Tensor::backward() const
{
    const auto& root = checked(node_);
    if (root.value.size() != 1)
        throw UsageError("backward() requires a scalar loss, got shape " + shape_string(root.shape));
    if (!root.requires_grad) return;

    // Iterative post-order DFS restricted to nodes that carry gradients.
    std::vector<detail::Node*> order;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // Interior gradients are per-sweep; only leaves accumulate across calls.
    for (detail::Node* n : order)
        if (!n->is_leaf()) n->grad = Array::Zero(n->value.size());
    node_->grad_buffer() += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->is_leaf() && n->backward) n->backward(*n);
    }
    for (detail::Node* n : order)
        if (!n->is_leaf()) n->grad = Array();
}

} // namespace mawsd
