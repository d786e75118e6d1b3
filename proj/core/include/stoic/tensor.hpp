#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stoic/rng.hpp"

namespace stoic {

using Shape = std::vector<int64_t>;

enum class DType { f32, f64 };

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }
inline int64_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    DType dtype = DType::f32;
    std::vector<float> data_f;
    std::vector<double> data_d;
    bool requires_grad = false;
    std::vector<float> grad_f;
    std::vector<double> grad_d;
    std::shared_ptr<Node> node;  // autograd edge; null for leaves and constants

    int64_t numel() const { return shape_numel(shape); }
    bool has_grad() const { return !grad_f.empty() || !grad_d.empty(); }
    void zero_grad();

    template <typename T> T* data();
    template <typename T> const T* data() const;
    /// Grad buffer, allocated zero-filled on first use.
    template <typename T> T* grad();
};

struct Node {
    std::vector<Tensor> inputs;
    // Reads out.grad and accumulates into the grads of tracked inputs.
    std::function<void(TensorImpl&)> backward;
};

}  // namespace detail

/// Dense n-dimensional array of f32 or f64 scalars with optional reverse-mode
/// gradient tracking.
///
/// Copying a Tensor shares the underlying buffer (shared_ptr semantics); data
/// is immutable after construction except for gradient accumulation. Ops
/// never silently produce NaN/Inf from finite inputs; callers guard lossy
/// spots with check_finite().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt = DType::f32, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dt = DType::f32);
    static Tensor randn(Shape shape, Rng& rng, DType dt = DType::f32);
    static Tensor from_vector(Shape shape, const std::vector<double>& values, DType dt = DType::f32);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t size(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return impl_->numel(); }
    DType dtype() const { return impl_->dtype; }

    template <typename T> std::span<const T> data() const {
        return {impl_->data<T>(), static_cast<size_t>(numel())};
    }
    template <typename T> std::span<T> mutable_data() {
        return {impl_->data<T>(), static_cast<size_t>(numel())};
    }

    /// dtype-agnostic element access by flat index (test/convenience path).
    double value(int64_t flat) const;
    void set_value(int64_t flat, double v);
    std::vector<double> to_vector() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        impl_->requires_grad = b;
        return *this;
    }
    /// True when backward() will reach this tensor (leaf param or op output).
    bool tracks_grad() const { return impl_ && (impl_->requires_grad || impl_->node != nullptr); }

    bool has_grad() const { return impl_->has_grad(); }
    double grad_value(int64_t flat) const;
    template <typename T> std::span<const T> grad() const {
        return {impl_->grad<T>(), static_cast<size_t>(numel())};
    }
    void zero_grad() { impl_->zero_grad(); }

    /// Same buffer, no autograd history.
    Tensor detach() const;
    /// Deep copy of the data (no history, no grad).
    Tensor clone() const;
    Tensor astype(DType dt) const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Thread-local autograd switch; disabled regions build no graph nodes.
bool grad_enabled();
void set_grad_enabled(bool enabled);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Reverse-mode sweep from a scalar loss.
///
/// Populates grad on every reachable tensor with d(loss)/d(tensor). Leaf
/// gradients accumulate across repeated calls; non-leaf gradients are
/// transient per sweep. Throws ValueError for a non-scalar loss.
void backward(const Tensor& loss);

/// Exact dtype + shape + payload-bit equality (determinism checks).
bool bit_equal(const Tensor& a, const Tensor& b);

/// Throws ValueError naming `what` if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* what);

namespace detail {

// Zero-filled buffers served from a recycling pool (see tensor.cpp).
std::vector<float> acquire_buffer_f(size_t n);
std::vector<double> acquire_buffer_d(size_t n);

template <typename T> struct VecOf;
template <> struct VecOf<float> {
    static std::vector<float>& data(TensorImpl& i) { return i.data_f; }
    static std::vector<float>& grad(TensorImpl& i) { return i.grad_f; }
    static std::vector<float> acquire(size_t n) { return acquire_buffer_f(n); }
    static constexpr DType dtype = DType::f32;
};
template <> struct VecOf<double> {
    static std::vector<double>& data(TensorImpl& i) { return i.data_d; }
    static std::vector<double>& grad(TensorImpl& i) { return i.grad_d; }
    static std::vector<double> acquire(size_t n) { return acquire_buffer_d(n); }
    static constexpr DType dtype = DType::f64;
};

template <typename T> T* TensorImpl::data() {
    if (dtype != VecOf<T>::dtype) throw ValueError("tensor dtype mismatch");
    return VecOf<T>::data(*this).data();
}
template <typename T> const T* TensorImpl::data() const {
    return const_cast<TensorImpl*>(this)->data<T>();
}
template <typename T> T* TensorImpl::grad() {
    if (dtype != VecOf<T>::dtype) throw ValueError("tensor dtype mismatch");
    auto& g = VecOf<T>::grad(*this);
    if (g.empty()) g = VecOf<T>::acquire(static_cast<size_t>(numel()));
    return g.data();
}

}  // namespace detail

/// Invokes f with a type tag for the tensor's scalar type.
template <typename F> decltype(auto) dispatch(DType dt, F&& f) {
    if (dt == DType::f32) return f(float{});
    return f(double{});
}

}  // namespace stoic
