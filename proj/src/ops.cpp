#include "mawsd/ops.hpp"

#include "mawsd/errors.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace mawsd {

namespace {

using detail::Node;

Tensor make_result(Shape shape, Array value, const char* op, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward)
{
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

int normalize_axis(int axis, std::size_t rank, const char* what)
{
    const int r = static_cast<int>(rank);
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw DimensionError(std::string(what) + ": axis out of range for rank " + std::to_string(rank));
    return axis;
}

// outer x n x inner decomposition around one axis.
struct AxisSplit {
    Index outer = 1;
    Index n = 1;
    Index inner = 1;
    Index at(Index o, Index i, Index in) const { return (o * n + i) * inner + in; }
};

AxisSplit split_at(const Shape& s, int axis)
{
    AxisSplit a;
    for (int d = 0; d < axis; ++d) a.outer *= s[d];
    a.n = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) a.inner *= s[d];
    return a;
}

// --- broadcasting ----------------------------------------------------------

struct Broadcast {
    Shape out;
    std::array<Index, 3> dims{1, 1, 1};
    std::array<Index, 3> sa{0, 0, 0};
    std::array<Index, 3> sb{0, 0, 0};
    bool same = false;
};

std::array<Index, 3> pad3(const Shape& s)
{
    std::array<Index, 3> p{1, 1, 1};
    const std::size_t off = 3 - s.size();
    for (std::size_t i = 0; i < s.size(); ++i) p[off + i] = s[i];
    return p;
}

std::array<Index, 3> strides_for(const std::array<Index, 3>& d, const std::array<Index, 3>& out)
{
    std::array<Index, 3> st{d[1] * d[2], d[2], 1};
    for (int i = 0; i < 3; ++i)
        if (d[i] == 1 && out[i] != 1) st[i] = 0;
    return st;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op)
{
    Broadcast bc;
    if (a == b) {
        bc.out = a;
        bc.same = true;
        return bc;
    }
    const auto pa = pad3(a);
    const auto pb = pad3(b);
    for (int i = 0; i < 3; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
            throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                                 shape_string(b) + " do not broadcast");
        bc.dims[i] = std::max(pa[i], pb[i]);
    }
    const std::size_t rank = std::max(a.size(), b.size());
    bc.out.assign(bc.dims.end() - static_cast<long>(rank), bc.dims.end());
    bc.sa = strides_for(pa, bc.dims);
    bc.sb = strides_for(pb, bc.dims);
    return bc;
}

template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f)
{
    Index o = 0;
    for (Index i = 0; i < bc.dims[0]; ++i)
        for (Index j = 0; j < bc.dims[1]; ++j)
            for (Index k = 0; k < bc.dims[2]; ++k, ++o)
                f(o, i * bc.sa[0] + j * bc.sa[1] + k * bc.sa[2], i * bc.sb[0] + j * bc.sb[1] + k * bc.sb[2]);
}

// Sum an output-shaped gradient back onto a broadcast operand.
Array reduce_to(const Broadcast& bc, const Array& g, Index operand_size, bool first)
{
    if (bc.same) return g;
    Array r = Array::Zero(operand_size);
    for_each_broadcast(bc, [&](Index o, Index ia, Index ib) { r(first ? ia : ib) += g(o); });
    return r;
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp kind, const char* name)
{
    auto bc = broadcast(a.shape(), b.shape(), name);
    const Array& av = a.value();
    const Array& bv = b.value();
    Array out;
    if (bc.same) {
        switch (kind) {
        case BinOp::kAdd: out = av + bv; break;
        case BinOp::kSub: out = av - bv; break;
        case BinOp::kMul: out = av * bv; break;
        }
    } else {
        out.resize(shape_size(bc.out));
        for_each_broadcast(bc, [&](Index o, Index ia, Index ib) {
            switch (kind) {
            case BinOp::kAdd: out(o) = av(ia) + bv(ib); break;
            case BinOp::kSub: out(o) = av(ia) - bv(ib); break;
            case BinOp::kMul: out(o) = av(ia) * bv(ib); break;
            }
        });
    }
    const Index na = a.size();
    const Index nb = b.size();
    return make_result(bc.out, std::move(out), name, {a, b}, [bc, kind, na, nb](Node& self) {
        const Array& g = self.grad;
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (kind == BinOp::kMul) {
            if (pa.requires_grad) {
                Array ga(self.value.size());
                if (bc.same) {
                    ga = g * pb.value;
                } else {
                    for_each_broadcast(bc, [&](Index o, Index, Index ib) { ga(o) = g(o) * pb.value(ib); });
                }
                pa.accumulate(reduce_to(bc, ga, na, true));
            }
            if (pb.requires_grad) {
                Array gb(self.value.size());
                if (bc.same) {
                    gb = g * pa.value;
                } else {
                    for_each_broadcast(bc, [&](Index o, Index ia, Index) { gb(o) = g(o) * pa.value(ia); });
                }
                pb.accumulate(reduce_to(bc, gb, nb, false));
            }
            return;
        }
        if (pa.requires_grad) pa.accumulate(reduce_to(bc, g, na, true));
        if (pb.requires_grad) {
            if (kind == BinOp::kSub)
                pb.accumulate(reduce_to(bc, -g, nb, false));
            else
                pb.accumulate(reduce_to(bc, g, nb, false));
        }
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul, "mul"); }

Tensor affine(const Tensor& x, double a, double b)
{
    return make_result(x.shape(), a * x.value() + b, "affine", {x},
                       [a](Node& self) { self.parents[0]->accumulate(a * self.grad); });
}

Tensor sigmoid(const Tensor& x)
{
    Array y = 1.0 / (1.0 + (-x.value()).exp());
    return make_result(x.shape(), std::move(y), "sigmoid", {x}, [](Node& self) {
        self.parents[0]->accumulate(self.grad * self.value * (1.0 - self.value));
    });
}

Tensor tanh(const Tensor& x)
{
    return make_result(x.shape(), x.value().tanh(), "tanh", {x}, [](Node& self) {
        self.parents[0]->accumulate(self.grad * (1.0 - self.value.square()));
    });
}

Tensor exp(const Tensor& x)
{
    return make_result(x.shape(), x.value().exp(), "exp", {x},
                       [](Node& self) { self.parents[0]->accumulate(self.grad * self.value); });
}

Tensor log(const Tensor& x)
{
    return make_result(x.shape(), x.value().log(), "log", {x}, [](Node& self) {
        self.parents[0]->accumulate(self.grad / self.parents[0]->value);
    });
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                             shape_string(b.shape()));
    const Index m = a.dim(0);
    const Index k = a.dim(1);
    const Index n = b.dim(1);
    Array out(m * n);
    MatrixMap(out.data(), m, n).noalias() = a.matrix() * b.matrix();
    return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
        ConstMatrixMap g(self.grad.data(), m, n);
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            RowMatrix ga = g * ConstMatrixMap(pb.value.data(), k, n).transpose();
            pa.accumulate(Eigen::Map<const Array>(ga.data(), m * k));
        }
        if (pb.requires_grad) {
            RowMatrix gb = ConstMatrixMap(pa.value.data(), m, k).transpose() * g;
            pb.accumulate(Eigen::Map<const Array>(gb.data(), k * n));
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw DimensionError("bmm: cannot multiply " + shape_string(a.shape()) + " by " +
                             shape_string(b.shape()));
    const Index batch = a.dim(0);
    const Index m = a.dim(1);
    const Index k = a.dim(2);
    const Index n = b.dim(2);
    Array out(batch * m * n);
    for (Index i = 0; i < batch; ++i)
        MatrixMap(out.data() + i * m * n, m, n).noalias() =
            ConstMatrixMap(a.value().data() + i * m * k, m, k) *
            ConstMatrixMap(b.value().data() + i * k * n, k, n);
    return make_result({batch, m, n}, std::move(out), "bmm", {a, b}, [batch, m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        Array ga;
        Array gb;
        if (pa.requires_grad) ga = Array::Zero(batch * m * k);
        if (pb.requires_grad) gb = Array::Zero(batch * k * n);
        for (Index i = 0; i < batch; ++i) {
            ConstMatrixMap g(self.grad.data() + i * m * n, m, n);
            if (pa.requires_grad)
                MatrixMap(ga.data() + i * m * k, m, k).noalias() =
                    g * ConstMatrixMap(pb.value.data() + i * k * n, k, n).transpose();
            if (pb.requires_grad)
                MatrixMap(gb.data() + i * k * n, k, n).noalias() =
                    ConstMatrixMap(pa.value.data() + i * m * k, m, k).transpose() * g;
        }
        if (pa.requires_grad) pa.accumulate(ga);
        if (pb.requires_grad) pb.accumulate(gb);
    });
}

Tensor transpose(const Tensor& a)
{
    if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_string(a.shape()));
    const Index m = a.dim(0);
    const Index n = a.dim(1);
    Array out(m * n);
    MatrixMap(out.data(), n, m) = a.matrix().transpose();
    return make_result({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
        Array g(m * n);
        MatrixMap(g.data(), m, n) = ConstMatrixMap(self.grad.data(), n, m).transpose();
        self.parents[0]->accumulate(g);
    });
}

namespace {

Tensor softmax_impl(const Tensor& x, const Tensor* mask, int axis, const char* name)
{
    axis = normalize_axis(axis, x.shape().size(), name);
    if (mask && mask->shape() != x.shape())
        throw DimensionError(std::string(name) + ": mask shape " + shape_string(mask->shape()) +
                             " differs from input " + shape_string(x.shape()));
    const AxisSplit s = split_at(x.shape(), axis);
    const Array& v = x.value();
    Array y = Array::Zero(v.size());
    for (Index o = 0; o < s.outer; ++o) {
        for (Index in = 0; in < s.inner; ++in) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Index i = 0; i < s.n; ++i) {
                const Index at = s.at(o, i, in);
                if (!mask || mask->value()(at) != 0.0) mx = std::max(mx, v(at));
            }
            if (!std::isfinite(mx)) continue;  // fully masked slice stays zero
            double z = 0.0;
            for (Index i = 0; i < s.n; ++i) {
                const Index at = s.at(o, i, in);
                if (!mask || mask->value()(at) != 0.0) {
                    y(at) = std::exp(v(at) - mx);
                    z += y(at);
                }
            }
            for (Index i = 0; i < s.n; ++i) y(s.at(o, i, in)) /= z;
        }
    }
    return make_result(x.shape(), std::move(y), name, {x}, [s](Node& self) {
        const Array& y = self.value;
        const Array& g = self.grad;
        Array gx(y.size());
        for (Index o = 0; o < s.outer; ++o) {
            for (Index in = 0; in < s.inner; ++in) {
                double dot = 0.0;
                for (Index i = 0; i < s.n; ++i) dot += y(s.at(o, i, in)) * g(s.at(o, i, in));
                for (Index i = 0; i < s.n; ++i) {
                    const Index at = s.at(o, i, in);
                    gx(at) = y(at) * (g(at) - dot);
                }
            }
        }
        self.parents[0]->accumulate(gx);
    });
}

} // namespace

Tensor softmax(const Tensor& x, int axis) { return softmax_impl(x, nullptr, axis, "softmax"); }

Tensor masked_softmax(const Tensor& x, const Tensor& mask, int axis)
{
    return softmax_impl(x, &mask, axis, "masked_softmax");
}

Tensor log_softmax(const Tensor& x, int axis)
{
    axis = normalize_axis(axis, x.shape().size(), "log_softmax");
    const AxisSplit s = split_at(x.shape(), axis);
    const Array& v = x.value();
    Array y(v.size());
    for (Index o = 0; o < s.outer; ++o) {
        for (Index in = 0; in < s.inner; ++in) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Index i = 0; i < s.n; ++i) mx = std::max(mx, v(s.at(o, i, in)));
            double z = 0.0;
            for (Index i = 0; i < s.n; ++i) z += std::exp(v(s.at(o, i, in)) - mx);
            const double lse = mx + std::log(z);
            for (Index i = 0; i < s.n; ++i) y(s.at(o, i, in)) = v(s.at(o, i, in)) - lse;
        }
    }
    return make_result(x.shape(), std::move(y), "log_softmax", {x}, [s](Node& self) {
        const Array& y = self.value;
        const Array& g = self.grad;
        Array gx(y.size());
        for (Index o = 0; o < s.outer; ++o) {
            for (Index in = 0; in < s.inner; ++in) {
                double total = 0.0;
                for (Index i = 0; i < s.n; ++i) total += g(s.at(o, i, in));
                for (Index i = 0; i < s.n; ++i) {
                    const Index at = s.at(o, i, in);
                    gx(at) = g(at) - std::exp(y(at)) * total;
                }
            }
        }
        self.parents[0]->accumulate(gx);
    });
}

Tensor sum(const Tensor& x)
{
    const Index n = x.size();
    return make_result(Shape{}, Array::Constant(1, x.value().sum()), "sum", {x},
                       [n](Node& self) { self.parents[0]->accumulate(Array::Constant(n, self.grad(0))); });
}

Tensor sum_axis(const Tensor& x, int axis)
{
    axis = normalize_axis(axis, x.shape().size(), "sum_axis");
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    Array out = Array::Zero(s.outer * s.inner);
    const Array& v = x.value();
    for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.n; ++i)
            for (Index in = 0; in < s.inner; ++in) out(o * s.inner + in) += v(s.at(o, i, in));
    return make_result(std::move(out_shape), std::move(out), "sum_axis", {x}, [s](Node& self) {
        Array gx(s.outer * s.n * s.inner);
        for (Index o = 0; o < s.outer; ++o)
            for (Index i = 0; i < s.n; ++i)
                for (Index in = 0; in < s.inner; ++in) gx(s.at(o, i, in)) = self.grad(o * s.inner + in);
        self.parents[0]->accumulate(gx);
    });
}

Tensor max_axis(const Tensor& x, int axis)
{
    axis = normalize_axis(axis, x.shape().size(), "max_axis");
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    Array out(s.outer * s.inner);
    std::vector<Index> arg(static_cast<std::size_t>(s.outer * s.inner));
    const Array& v = x.value();
    for (Index o = 0; o < s.outer; ++o) {
        for (Index in = 0; in < s.inner; ++in) {
            Index best = 0;
            for (Index i = 1; i < s.n; ++i)
                if (v(s.at(o, i, in)) > v(s.at(o, best, in))) best = i;
            const Index at = o * s.inner + in;
            out(at) = v(s.at(o, best, in));
            arg[static_cast<std::size_t>(at)] = s.at(o, best, in);
        }
    }
    const Index n = x.size();
    return make_result(std::move(out_shape), std::move(out), "max_axis", {x},
                       [arg = std::move(arg), n](Node& self) {
                           Array gx = Array::Zero(n);
                           for (std::size_t i = 0; i < arg.size(); ++i)
                               gx(arg[i]) += self.grad(static_cast<Index>(i));
                           self.parents[0]->accumulate(gx);
                       });
}

Tensor concat(std::span<const Tensor> parts, int axis)
{
    if (parts.empty()) throw UsageError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    axis = normalize_axis(axis, first.size(), "concat");
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<Index> widths;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != first[d]) ok = false;
        if (!ok)
            throw DimensionError("concat: shape " + shape_string(s) + " incompatible with " +
                                 shape_string(first) + " on axis " + std::to_string(axis));
        widths.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const AxisSplit so = split_at(out_shape, axis);
    Array out(shape_size(out_shape));
    Index offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const AxisSplit sp = split_at(parts[p].shape(), axis);
        const Array& v = parts[p].value();
        for (Index o = 0; o < sp.outer; ++o)
            for (Index i = 0; i < sp.n; ++i)
                out.segment(so.at(o, offset + i, 0), sp.inner) = v.segment(sp.at(o, i, 0), sp.inner);
        offset += sp.n;
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_result(out_shape, std::move(out), "concat", std::move(parents),
                       [so, widths](Node& self) {
                           Index offset = 0;
                           for (std::size_t p = 0; p < widths.size(); ++p) {
                               Node& parent = *self.parents[p];
                               const Index w = widths[p];
                               if (parent.requires_grad) {
                                   Array g(so.outer * w * so.inner);
                                   for (Index o = 0; o < so.outer; ++o)
                                       for (Index i = 0; i < w; ++i)
                                           g.segment((o * w + i) * so.inner, so.inner) =
                                               self.grad.segment(so.at(o, offset + i, 0), so.inner);
                                   parent.accumulate(g);
                               }
                               offset += w;
                           }
                       });
}

Tensor stack(std::span<const Tensor> parts, int axis)
{
    if (parts.empty()) throw UsageError("stack of zero tensors");
    const Shape& first = parts[0].shape();
    if (first.size() >= kMaxRank) throw DimensionError("stack: result would exceed rank 3");
    axis = normalize_axis(axis, first.size() + 1, "stack");
    Shape expanded = first;
    expanded.insert(expanded.begin() + axis, 1);
    std::vector<Tensor> reshaped;
    reshaped.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.shape() != first)
            throw DimensionError("stack: shape " + shape_string(p.shape()) + " differs from " +
                                 shape_string(first));
        reshaped.push_back(reshape(p, expanded));
    }
    return concat(reshaped, axis);
}

Tensor slice(const Tensor& x, int axis, Index begin, Index end)
{
    axis = normalize_axis(axis, x.shape().size(), "slice");
    if (begin < 0 || end > x.shape()[axis] || begin >= end)
        throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for axis " + std::to_string(axis) + " of " +
                             shape_string(x.shape()));
    const AxisSplit s = split_at(x.shape(), axis);
    const Index w = end - begin;
    Shape out_shape = x.shape();
    out_shape[axis] = w;
    Array out(s.outer * w * s.inner);
    const Array& v = x.value();
    for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < w; ++i)
            out.segment((o * w + i) * s.inner, s.inner) = v.segment(s.at(o, begin + i, 0), s.inner);
    return make_result(std::move(out_shape), std::move(out), "slice", {x}, [s, begin, w](Node& self) {
        Array g = Array::Zero(s.outer * s.n * s.inner);
        for (Index o = 0; o < s.outer; ++o)
            for (Index i = 0; i < w; ++i)
                g.segment(s.at(o, begin + i, 0), s.inner) = self.grad.segment((o * w + i) * s.inner, s.inner);
        self.parents[0]->accumulate(g);
    });
}

Tensor select(const Tensor& x, int axis, Index index)
{
    axis = normalize_axis(axis, x.shape().size(), "select");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    return reshape(slice(x, axis, index, index + 1), std::move(out_shape));
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape.size() > kMaxRank || shape_size(shape) != x.size())
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    return make_result(std::move(shape), x.value(), "reshape", {x},
                       [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

namespace {

Tensor lookup(const Tensor& table, const int* idx, Index count, Shape out_shape)
{
    if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + shape_string(table.shape()));
    const Index vocab = table.dim(0);
    const Index width = table.dim(1);
    for (Index i = 0; i < count; ++i)
        if (idx[i] < 0 || idx[i] >= vocab)
            throw VocabularyError("embedding: index " + std::to_string(idx[i]) + " at position " +
                                  std::to_string(i) + " outside vocabulary of size " + std::to_string(vocab));
    Array out(count * width);
    const Array& t = table.value();
    for (Index i = 0; i < count; ++i) out.segment(i * width, width) = t.segment(idx[i] * width, width);
    std::vector<int> rows(idx, idx + count);
    return make_result(std::move(out_shape), std::move(out), "embedding", {table},
                       [rows = std::move(rows), width](Node& self) {
                           Node& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           Array& g = p.grad_buffer();
                           for (std::size_t i = 0; i < rows.size(); ++i)
                               g.segment(rows[i] * width, width) +=
                                   self.grad.segment(static_cast<Index>(i) * width, width);
                       });
}

} // namespace

Tensor embedding(const Tensor& table, const IndexGrid& indices)
{
    const Index width = table.rank() == 2 ? table.dim(1) : 0;
    return lookup(table, indices.data(), indices.size(), {indices.rows(), indices.cols(), width});
}

Tensor embedding(const Tensor& table, std::span<const int> indices)
{
    const Index width = table.rank() == 2 ? table.dim(1) : 0;
    const auto n = static_cast<Index>(indices.size());
    return lookup(table, indices.data(), n, {n, width});
}

Tensor gather_last(const Tensor& x, const IndexGrid& indices)
{
    if (x.rank() < 1) throw DimensionError("gather_last: scalar input");
    const Index width = x.dim(-1);
    const Index rows = x.size() / width;
    if (indices.size() != rows)
        throw DimensionError("gather_last: " + std::to_string(indices.size()) + " indices for " +
                             std::to_string(rows) + " rows of " + shape_string(x.shape()));
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    Array out(rows);
    std::vector<Index> flat(static_cast<std::size_t>(rows));
    for (Index r = 0; r < rows; ++r) {
        const int k = indices.data()[r];
        if (k < 0 || k >= width)
            throw VocabularyError("gather_last: index " + std::to_string(k) + " at row " + std::to_string(r) +
                                  " outside width " + std::to_string(width));
        flat[static_cast<std::size_t>(r)] = r * width + k;
        out(r) = x.value()(r * width + k);
    }
    const Index n = x.size();
    return make_result(std::move(out_shape), std::move(out), "gather_last", {x},
                       [flat = std::move(flat), n](Node& self) {
                           Array g = Array::Zero(n);
                           for (std::size_t r = 0; r < flat.size(); ++r)
                               g(flat[r]) += self.grad(static_cast<Index>(r));
                           self.parents[0]->accumulate(g);
                       });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng)
{
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be below 1, got " + std::to_string(rate));
    std::bernoulli_distribution keep(1.0 - rate);
    Array m(x.size());
    const double inv = 1.0 / (1.0 - rate);
    for (Index i = 0; i < m.size(); ++i) m(i) = keep(rng) ? inv : 0.0;
    return mul(x, Tensor::from(x.shape(), std::move(m)));
}

} // namespace mawsd
