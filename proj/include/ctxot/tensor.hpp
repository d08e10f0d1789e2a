#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctxot/errors.hpp"

namespace ctxot {

class Tape;

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit real tensor. Values are immutable once an op has consumed
// the tensor; copies share the underlying buffer. A tensor is either
// detached (plain values) or attached to one tape node, in which case it
// participates in reverse-mode differentiation. The tape must outlive
// every tensor attached to it.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);
    // Shares an existing buffer (zero-copy views such as reshape).
    Tensor(Shape shape, std::shared_ptr<std::vector<double>> data);
    static Tensor scalar(double v);

    const Shape& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t numel() const;
    size_t extent(size_t axis) const;
    bool defined() const { return data_ != nullptr; }
    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    const double* data() const { return data_->data(); }
    double* mutable_data() { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }
    std::shared_ptr<std::vector<double>> buffer() const { return data_; }
    double value() const;  // scalar convenience
    double at(size_t i) const { return (*data_)[i]; }

    // Same buffer, no tape participation.
    Tensor detached() const;
    // Deep copy, detached.
    Tensor clone() const;

  private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    friend class Tape;
};

// Receives per-input gradients from a backward closure. Slots whose
// input was detached are never requested.
class GradSink {
  public:
    GradSink(size_t slots, const std::vector<bool>* needed) : grads_(slots), needed_(needed) {}
    bool needs(size_t slot) const { return needed_ == nullptr || (*needed_)[slot]; }
    void set(size_t slot, Tensor g) { grads_[slot] = std::move(g); }
    bool has(size_t slot) const { return grads_[slot].defined(); }
    Tensor& at(size_t slot) { return grads_[slot]; }

  private:
    std::vector<Tensor> grads_;
    const std::vector<bool>* needed_;
};

using BackwardFn = std::function<void(const Tensor& upstream, GradSink& sink)>;

// Ordered record of operations. Backward closures are written in terms of
// the public ops, so running them while recording stays on yields
// tape-connected gradients (create_graph), which is what second-order
// terms like the gradient penalty differentiate through.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Attach a leaf (parameter or input) node.
    Tensor leaf(Shape shape, std::vector<double> values);
    Tensor leaf(const Tensor& values);

    bool recording() const { return pause_depth_ == 0; }
    size_t size() const { return nodes_.size(); }

    // Attaches `out` to a new node whose inputs are `inputs`; the backward
    // closure is supplied afterwards so it can capture the attached output.
    int begin_node(const std::vector<const Tensor*>& inputs, Tensor& out);
    void set_backward(int node, BackwardFn fn);

    // Gradients of a scalar `output` w.r.t. each tensor in `wrt`. Visits
    // every reachable record exactly once, in reverse order. With
    // create_graph the returned gradients are themselves differentiable.
    std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt,
                                  bool create_graph = false);

    // RAII recording pause: ops run but record nothing.
    struct NoRecord {
        explicit NoRecord(Tape& t) : tape(t) { ++tape.pause_depth_; }
        ~NoRecord() { --tape.pause_depth_; }
        Tape& tape;
    };

  private:
    struct Node {
        std::vector<int> parents;       // node ids; -1 slots were detached inputs
        std::vector<bool> parent_need;  // whether the slot wants a gradient
        BackwardFn backward;            // empty for leaves
    };
    std::vector<Node> nodes_;
    int pause_depth_ = 0;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor div_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double alpha = 0.2);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_eps(const Tensor& a, double eps);
Tensor recip(const Tensor& a);
Tensor clamp_nonneg(const Tensor& a);  // max(a, 0); slope 1 at a >= 0

// ---- reductions and shape ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, size_t axis);
Tensor min_axis(const Tensor& a, size_t axis);  // ties go to the lowest index
Tensor expand_axis(const Tensor& a, size_t axis, size_t extent);
Tensor spread(const Tensor& scalar, Shape shape);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& m, const Tensor& v);
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // [B,M] + [M]

// ---- convolution and spatial ----
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
Tensor conv2d_grad_input(const Tensor& kernel, const Tensor& grad_out, int stride, int padding,
                         size_t in_h, size_t in_w);
Tensor conv2d_grad_weight(const Tensor& input, const Tensor& grad_out, int stride, int padding,
                          size_t kh, size_t kw);
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);  // [B,C,H,W] + [C]
Tensor upsample_nearest(const Tensor& a, int factor);
Tensor downsample_sum(const Tensor& a, int factor);
Tensor concat_axis(const std::vector<Tensor>& parts, size_t axis);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_axis(const Tensor& a, size_t axis, size_t begin, size_t end);
Tensor global_average_pool(const Tensor& a);           // [B,C,H,W] -> [B,C]
Tensor broadcast_hw(const Tensor& a, size_t h, size_t w);  // [B,C] -> [B,C,H,W]

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace ctxot
