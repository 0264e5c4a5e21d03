#ifndef MAWSD_TENSOR_HPP
#define MAWSD_TENSOR_HPP

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace mawsd {

using Index = Eigen::Index;
using Array = Eigen::ArrayXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Token index grid, row-major [rows x cols].
using IndexGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dimensions of a tensor, rank 0 (scalar) to 3 ([batch, seq, feature]).
using Shape = std::vector<Index>;

inline constexpr int kMaxRank = 3;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    Array value;
    Array grad;  // empty until the first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return parents.empty(); }
    void accumulate(const Array& g);
    Array& grad_buffer();
};

} // namespace detail

/// Dense double-precision tensor with an optional reverse-mode graph.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node,
/// which is how parameters are shared between layers (e.g. one encoder GRU
/// consumed by several input streams). Operations in ops.hpp build new
/// nodes; `backward()` on a scalar sweeps the graph in reverse topological
/// order and accumulates into every leaf that requires a gradient.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor constant(Shape shape, double fill, bool requires_grad = false);
    static Tensor from(Shape shape, Array data, bool requires_grad = false);
    static Tensor from(Shape shape, std::initializer_list<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    Index dim(int axis) const;
    Index size() const { return value().size(); }

    const Array& value() const;
    /// Mutable access for leaves (initialisation, optimiser updates, finite differences).
    Array& mutable_value();
    double item() const;
    double at(Index i) const { return value()(i); }
    double at(Index i, Index j) const;
    double at(Index i, Index j, Index k) const;

    /// Rank-2 view (rank-1 tensors are viewed as a single row).
    ConstMatrixMap matrix() const;

    bool requires_grad() const;
    bool has_grad() const;
    /// Gradient; zeros when nothing has accumulated yet.
    Array grad() const;
    /// Writable gradient buffer (allocated as zeros on first use), for clipping and optimisers.
    Array& mutable_grad();
    void zero_grad();
    void set_requires_grad(bool flag);

    /// Reverse sweep from this scalar. Leaf gradients accumulate across calls.
    void backward() const;

    /// Copy of the values without graph history.
    Tensor detach() const;

    const char* op() const;
    const detail::Node* id() const { return node_.get(); }
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    // Used by ops.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

} // namespace mawsd

#endif // MAWSD_TENSOR_HPP
