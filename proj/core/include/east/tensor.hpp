#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace east {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Autodiff node. Holds the value buffer, an optional gradient buffer and,
/// while a tape is recording, the backward closure plus keep-alive references
/// to the parent nodes.
template <class Real>
struct TensorNodeT {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until touched by a backward pass
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorNodeT>> parents;
    std::function<void(TensorNodeT&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }

    /// Allocates (zeroed) the gradient buffer if absent.
    std::vector<Real>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
        return grad;
    }
};

/// Value-semantics handle to a TensorNode. Copies alias the same storage;
/// ops produce fresh nodes. Gradients of a scalar loss are obtained by
/// recording the forward pass on a Tape and calling Tape::backward.
template <class Real>
class TensorT {
public:
    using Node = TensorNodeT<Real>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    /// Zero-filled tensor of the given shape.
    explicit TensorT(Shape shape, bool requires_grad = false);
    TensorT(Shape shape, std::vector<Real> values, bool requires_grad = false);

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return TensorT(std::move(shape), requires_grad);
    }
    static TensorT full(Shape shape, Real fill, bool requires_grad = false);
    static TensorT scalar(Real v, bool requires_grad = false) {
        return TensorT(Shape{1}, std::vector<Real>{v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(size_t i) const { return node_->shape[i]; }

    std::span<Real> data() { return node_->value; }
    std::span<const Real> data() const { return node_->value; }
    std::span<Real> grad() { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }

    Real item() const { return node_->value.at(0); }

    bool requires_grad() const { return node_->requires_grad; }
    TensorT& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
    }

    std::shared_ptr<Node> node() const { return node_; }
    Node* raw() const { return node_.get(); }

private:
    std::shared_ptr<Node> node_;
};

/// Ordered record of the primitive ops of one forward pass. Constructing a
/// Tape makes it the active recorder for the current thread (RAII, stack
/// discipline); ops append their output nodes while any input requires a
/// gradient. Replaying the records in reverse order is a valid topological
/// order of the graph, so repeated backward passes are bit-identical.
template <class Real>
class TapeT {
public:
    TapeT();
    ~TapeT();
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    void record(std::shared_ptr<TensorNodeT<Real>> node);

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    /// reachable requires_grad tensor. `loss` must be a scalar recorded on
    /// this tape.
    void backward(const TensorT<Real>& loss);

    size_t size() const { return entries_.size(); }

    /// Drops all records (and the keep-alive references into the graph).
    void clear() { entries_.clear(); }

    static TapeT* active();

private:
    std::vector<std::shared_ptr<TensorNodeT<Real>>> entries_;
    TapeT* previous_ = nullptr;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;
using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace east
