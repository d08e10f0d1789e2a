#include "ctxot/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "tensor_detail.hpp"

namespace ctxot {

size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out << ',';
        out << s[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (size_t e : shape_) {
        if (e == 0) throw DimensionError("tensor: zero extent in shape " + shape_str(shape_));
    }
    if (shape_.empty()) throw DimensionError("tensor: rank-0 shapes are not supported");
    data_ = std::make_shared<std::vector<double>>(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_.empty()) throw DimensionError("tensor: rank-0 shapes are not supported");
    if (values.size() != shape_numel(shape_)) {
        throw DimensionError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor::Tensor(Shape shape, std::shared_ptr<std::vector<double>> data) : shape_(std::move(shape)) {
    if (shape_.empty()) throw DimensionError("tensor: rank-0 shapes are not supported");
    if (!data || data->size() != shape_numel(shape_)) {
        throw DimensionError("tensor: shared buffer does not fill shape " + shape_str(shape_));
    }
    data_ = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

size_t Tensor::numel() const { return data_ ? data_->size() : 0; }

size_t Tensor::extent(size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(shape_));
    }
    return shape_[axis];
}

double Tensor::value() const {
    if (numel() != 1) throw ArgumentError("tensor: value() requires a single element, got shape " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

// ---- tape ----

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    return t;
}

Tensor Tape::leaf(const Tensor& values) {
    Tensor t = values.detached();
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    return t;
}

int Tape::begin_node(const std::vector<const Tensor*>& inputs, Tensor& out) {
    Node n;
    n.parents.reserve(inputs.size());
    n.parent_need.reserve(inputs.size());
    for (const Tensor* t : inputs) {
        bool attached = t->on_tape();
        if (attached && t->tape() != this) {
            throw ArgumentError("tape: op input belongs to a different tape");
        }
        n.parents.push_back(attached ? t->node() : -1);
        n.parent_need.push_back(attached);
    }
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    return out.node_;
}

void Tape::set_backward(int node, BackwardFn fn) { nodes_[node].backward = std::move(fn); }

std::vector<Tensor> Tape::gradients(const Tensor& output, const std::vector<Tensor>& wrt,
                                    bool create_graph) {
    if (!output.on_tape() || output.tape() != this) {
        throw ArgumentError("gradients: output is not attached to this tape");
    }
    if (output.numel() != 1) throw ArgumentError("gradients: output must be a scalar");
    std::unique_ptr<NoRecord> pause;
    if (!create_graph) pause = std::make_unique<NoRecord>(*this);

    const int out_id = output.node();
    std::vector<Tensor> grad(static_cast<size_t>(out_id) + 1);
    grad[out_id] = Tensor(output.shape(), 1.0);

    for (int id = out_id; id >= 0; --id) {
        if (!grad[id].defined() || !nodes_[id].backward) continue;
        // Copies: closures may append nodes and reallocate nodes_.
        BackwardFn fn = nodes_[id].backward;
        std::vector<int> parents = nodes_[id].parents;
        std::vector<bool> need = nodes_[id].parent_need;
        GradSink sink(parents.size(), &need);
        fn(grad[id], sink);
        for (size_t s = 0; s < parents.size(); ++s) {
            int pid = parents[s];
            if (pid < 0 || !sink.has(s)) continue;
            grad[pid] = grad[pid].defined() ? add(grad[pid], sink.at(s)) : sink.at(s);
        }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const Tensor& w : wrt) {
        if (!w.on_tape() || w.tape() != this) {
            throw ArgumentError("gradients: wrt tensor is not on this tape");
        }
        if (w.node() <= out_id && grad[w.node()].defined()) {
            result.push_back(grad[w.node()]);
        } else {
            result.push_back(Tensor(w.shape(), 0.0));
        }
    }
    return result;
}

// ---- op recording helpers ----

namespace {

using detail::record;

enum class Bc { Equal, AScalar, BScalar };

Bc broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bc::Equal;
    if (a.numel() == 1) return Bc::AScalar;
    if (b.numel() == 1) return Bc::BScalar;
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are neither equal nor scalar-broadcastable");
}

// Collapses a broadcast gradient back to a scalar operand's shape.
Tensor reduce_like(const Tensor& g, const Tensor& ref) {
    if (ref.numel() != 1 || g.numel() == 1) return g;
    return reshape(sum(g), ref.shape());
}

template <class F>
Tensor binary_forward(const Tensor& a, const Tensor& b, Bc bc, F f) {
    const double* pa = a.data();
    const double* pb = b.data();
    if (bc == Bc::AScalar) {
        Tensor out(b.shape());
        double av = pa[0];
        double* po = out.mutable_data();
        for (size_t i = 0; i < b.numel(); ++i) po[i] = f(av, pb[i]);
        return out;
    }
    if (bc == Bc::BScalar) {
        Tensor out(a.shape());
        double bv = pb[0];
        double* po = out.mutable_data();
        for (size_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], bv);
        return out;
    }
    Tensor out(a.shape());
    double* po = out.mutable_data();
    for (size_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <class F>
Tensor unary_forward(const Tensor& a, F f) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.mutable_data();
    for (size_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i]);
    return out;
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    Bc bc = broadcast_kind(a, b, "add");
    Tensor out = binary_forward(a, b, bc, [](double x, double y) { return x + y; });
    record({&a, &b}, out, [&] {
        Tensor ar = a, br = b;
        return [ar, br](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, reduce_like(g, ar));
            if (s.needs(1)) s.set(1, reduce_like(g, br));
        };
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Bc bc = broadcast_kind(a, b, "sub");
    Tensor out = binary_forward(a, b, bc, [](double x, double y) { return x - y; });
    record({&a, &b}, out, [&] {
        Tensor ar = a, br = b;
        return [ar, br](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, reduce_like(g, ar));
            if (s.needs(1)) s.set(1, reduce_like(neg(g), br));
        };
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Bc bc = broadcast_kind(a, b, "mul");
    Tensor out = binary_forward(a, b, bc, [](double x, double y) { return x * y; });
    record({&a, &b}, out, [&] {
        Tensor ar = a, br = b;
        return [ar, br](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, reduce_like(mul(g, br), ar));
            if (s.needs(1)) s.set(1, reduce_like(mul(g, ar), br));
        };
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = unary_forward(a, [c](double x) { return x * c; });
    record({&a}, out, [&] {
        return [c](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, scale(g, c));
        };
    });
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = unary_forward(a, [c](double x) { return x + c; });
    record({&a}, out, [&] {
        return [](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, g);
        };
    });
    return out;
}

Tensor div_scalar(const Tensor& a, double c) {
    if (c == 0.0) throw ArgumentError("div_scalar: division by zero");
    Tensor out = unary_forward(a, [c](double x) { return x / c; });
    record({&a}, out, [&] {
        return [c](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, div_scalar(g, c));
        };
    });
    return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor leaky_relu(const Tensor& a, double alpha) {
    Tensor out = unary_forward(a, [alpha](double x) { return x >= 0.0 ? x : alpha * x; });
    record({&a}, out, [&] {
        Tensor mask = unary_forward(a, [alpha](double x) { return x >= 0.0 ? 1.0 : alpha; });
        return [mask](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, mask));
        };
    });
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    });
    record({&a}, out, [&] {
        Tensor o = out;
        return [o](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, mul(o, add_scalar(neg(o), 1.0))));
        };
    });
    return out;
}

Tensor tanh(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return std::tanh(x); });
    record({&a}, out, [&] {
        Tensor o = out;
        return [o](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, add_scalar(neg(square(o)), 1.0)));
        };
    });
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return std::exp(x); });
    record({&a}, out, [&] {
        Tensor o = out;
        return [o](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, o));
        };
    });
    return out;
}

Tensor square(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return x * x; });
    record({&a}, out, [&] {
        Tensor ar = a;
        return [ar](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, scale(ar, 2.0)));
        };
    });
    return out;
}

Tensor sqrt_eps(const Tensor& a, double eps) {
    Tensor out = unary_forward(a, [eps](double x) { return std::sqrt(x + eps); });
    record({&a}, out, [&] {
        Tensor o = out;
        return [o](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, scale(recip(o), 0.5)));
        };
    });
    return out;
}

Tensor recip(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return 1.0 / x; });
    record({&a}, out, [&] {
        Tensor o = out;
        return [o](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, neg(mul(g, square(o))));
        };
    });
    return out;
}

Tensor clamp_nonneg(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return x >= 0.0 ? x : 0.0; });
    record({&a}, out, [&] {
        Tensor mask = unary_forward(a, [](double x) { return x >= 0.0 ? 1.0 : 0.0; });
        return [mask](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(g, mask));
        };
    });
    return out;
}

// ---- reductions and shape ----

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    const double* pa = a.data();
    for (size_t i = 0; i < a.numel(); ++i) acc += pa[i];
    Tensor out = Tensor::scalar(acc);
    record({&a}, out, [&] {
        Shape shape = a.shape();
        return [shape](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, spread(g, shape));
        };
    });
    return out;
}

Tensor mean(const Tensor& a) { return div_scalar(sum(a), static_cast<double>(a.numel())); }

namespace {

void axis_extents(const Tensor& a, size_t axis, size_t& outer, size_t& n, size_t& inner) {
    if (axis >= a.rank()) {
        throw DimensionError("reduction: axis " + std::to_string(axis) +
                             " out of range for shape " + shape_str(a.shape()));
    }
    outer = 1;
    inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    n = a.shape()[axis];
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
}

Shape erase_axis(const Shape& s, size_t axis) {
    Shape out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out.push_back(s[i]);
    }
    if (out.empty()) out.push_back(1);
    return out;
}

}  // namespace

Tensor sum_axis(const Tensor& a, size_t axis) {
    size_t outer, n, inner;
    axis_extents(a, axis, outer, n, inner);
    Tensor out(erase_axis(a.shape(), axis));
    const double* pa = a.data();
    double* po = out.mutable_data();
    for (size_t o = 0; o < outer; ++o) {
        for (size_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (size_t k = 0; k < n; ++k) acc += pa[(o * n + k) * inner + i];
            po[o * inner + i] = acc;
        }
    }
    record({&a}, out, [&] {
        return [axis, n](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, expand_axis(g, axis, n));
        };
    });
    return out;
}

Tensor min_axis(const Tensor& a, size_t axis) {
    size_t outer, n, inner;
    axis_extents(a, axis, outer, n, inner);
    Tensor out(erase_axis(a.shape(), axis));
    Tensor mask(a.shape(), 0.0);
    const double* pa = a.data();
    double* po = out.mutable_data();
    double* pm = mask.mutable_data();
    for (size_t o = 0; o < outer; ++o) {
        for (size_t i = 0; i < inner; ++i) {
            size_t best = 0;
            double bv = pa[(o * n) * inner + i];
            for (size_t k = 1; k < n; ++k) {
                double v = pa[(o * n + k) * inner + i];
                if (v < bv) {  // strict: ties keep the lowest index
                    bv = v;
                    best = k;
                }
            }
            po[o * inner + i] = bv;
            pm[(o * n + best) * inner + i] = 1.0;
        }
    }
    record({&a}, out, [&] {
        Tensor m = mask;
        return [m, axis, n](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, mul(m, expand_axis(g, axis, n)));
        };
    });
    return out;
}

Tensor expand_axis(const Tensor& a, size_t axis, size_t extent) {
    if (extent == 0) throw ArgumentError("expand_axis: zero extent");
    Shape out_shape;
    bool scalar_to_vector = (a.rank() == 1 && a.numel() == 1 && axis == 0);
    if (scalar_to_vector) {
        out_shape = {extent};
    } else {
        if (axis > a.rank()) {
            throw DimensionError("expand_axis: axis " + std::to_string(axis) +
                                 " out of range for shape " + shape_str(a.shape()));
        }
        out_shape = a.shape();
        out_shape.insert(out_shape.begin() + static_cast<long>(axis), extent);
    }
    size_t outer = 1, inner = 1;
    if (!scalar_to_vector) {
        for (size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
        for (size_t i = axis; i < a.rank(); ++i) inner *= a.shape()[i];
    }
    Tensor out(out_shape);
    const double* pa = a.data();
    double* po = out.mutable_data();
    if (scalar_to_vector) {
        for (size_t k = 0; k < extent; ++k) po[k] = pa[0];
    } else {
        for (size_t o = 0; o < outer; ++o) {
            for (size_t k = 0; k < extent; ++k) {
                std::memcpy(po + (o * extent + k) * inner, pa + o * inner, inner * sizeof(double));
            }
        }
    }
    record({&a}, out, [&] {
        return [axis](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, sum_axis(g, axis));
        };
    });
    return out;
}

Tensor spread(const Tensor& scalar, Shape shape) {
    if (scalar.numel() != 1) {
        throw ArgumentError("spread: source must be a single element, got shape " +
                            shape_str(scalar.shape()));
    }
    Tensor out(std::move(shape), scalar.at(0));
    record({&scalar}, out, [&] {
        return [](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, sum(g));
        };
    });
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    }
    Tensor out(std::move(shape), a.buffer());
    record({&a}, out, [&] {
        Shape back = a.shape();
        return [back](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, reshape(g, back));
        };
    });
    return out;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError("transpose2d: expected a matrix, got shape " + shape_str(a.shape()));
    }
    size_t m = a.shape()[0], n = a.shape()[1];
    Tensor out(Shape{n, m});
    const double* pa = a.data();
    double* po = out.mutable_data();
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
    }
    record({&a}, out, [&] {
        return [](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, transpose2d(g));
        };
    });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: expected matrices, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    size_t m = a.shape()[0], k = a.shape()[1];
    size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw DimensionError("matmul: inner extents differ (axis 1 of " + shape_str(a.shape()) +
                             " vs axis 0 of " + shape_str(b.shape()) + ")");
    }
    Tensor out(Shape{m, n}, 0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.mutable_data();
    for (size_t i = 0; i < m; ++i) {
        for (size_t p = 0; p < k; ++p) {
            double av = pa[i * k + p];
            const double* prow = pb + p * n;
            double* orow = po + i * n;
            for (size_t j = 0; j < n; ++j) orow[j] += av * prow[j];
        }
    }
    record({&a, &b}, out, [&] {
        Tensor ar = a, br = b;
        return [ar, br](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, matmul(g, transpose2d(br)));
            if (s.needs(1)) s.set(1, matmul(transpose2d(ar), g));
        };
    });
    return out;
}

Tensor matvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1) {
        throw DimensionError("matvec: expected matrix and vector, got " + shape_str(m.shape()) +
                             " and " + shape_str(v.shape()));
    }
    if (m.shape()[1] != v.shape()[0]) {
        throw DimensionError("matvec: matrix axis 1 (" + std::to_string(m.shape()[1]) +
                             ") does not match vector length (" + std::to_string(v.shape()[0]) +
                             ")");
    }
    return reshape(matmul(m, reshape(v, Shape{v.shape()[0], 1})), Shape{m.shape()[0]});
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    if (a.rank() != 2 || row.rank() != 1 || a.shape()[1] != row.shape()[0]) {
        throw DimensionError("add_rowvec: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(row.shape()) + " are incompatible");
    }
    size_t b = a.shape()[0], m = a.shape()[1];
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pr = row.data();
    double* po = out.mutable_data();
    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < m; ++j) po[i * m + j] = pa[i * m + j] + pr[j];
    }
    record({&a, &row}, out, [&] {
        return [](const Tensor& g, GradSink& s) {
            if (s.needs(0)) s.set(0, g);
            if (s.needs(1)) s.set(1, sum_axis(g, 0));
        };
    });
    return out;
}

}  // namespace ctxot
