#include "east/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace east {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template <class Real>
TensorT<Real>::TensorT(Shape shape, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->value.assign(static_cast<size_t>(shape_numel(shape)), Real(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

template <class Real>
TensorT<Real>::TensorT(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                    " values do not fill shape " + shape_str(shape));
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <class Real>
TensorT<Real> TensorT<Real>::full(Shape shape, Real fill, bool requires_grad) {
    TensorT t(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), fill);
    return t;
}

namespace {
template <class Real>
thread_local TapeT<Real>* g_active_tape = nullptr;
}

template <class Real>
TapeT<Real>::TapeT() {
    previous_ = g_active_tape<Real>;
    g_active_tape<Real> = this;
}

template <class Real>
TapeT<Real>::~TapeT() {
    g_active_tape<Real> = previous_;
}

template <class Real>
TapeT<Real>* TapeT<Real>::active() {
    return g_active_tape<Real>;
}

template <class Real>
void TapeT<Real>::record(std::shared_ptr<TensorNodeT<Real>> node) {
    entries_.push_back(std::move(node));
}

template <class Real>
void TapeT<Real>::backward(const TensorT<Real>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    loss.node()->ensure_grad()[0] = Real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        TensorNodeT<Real>& n = **it;
        if (n.grad.empty() || !n.backward_fn) continue;  // not reached from the loss
        n.backward_fn(n);
    }
}

template class TensorT<float>;
template class TensorT<double>;
template class TapeT<float>;
template class TapeT<double>;

}  // namespace east
