#include "stoic/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace stoic {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

void TensorImpl::zero_grad() {
    std::fill(grad_f.begin(), grad_f.end(), 0.0f);
    std::fill(grad_d.begin(), grad_d.end(), 0.0);
}

namespace {

// Recycles large tensor buffers. Transient activations in a forward/backward
// sweep are MB-scale and short-lived; without pooling, glibc serves them via
// mmap/munmap and the page-fault churn dominates small-model training steps.
// Intentionally leaked singleton so tensor destruction is safe at any point
// of thread/program teardown.
template <typename T>
class BufferPool {
public:
    static constexpr size_t kMinElems = (64 << 10) / sizeof(T);
    static constexpr size_t kMaxPerBucket = 8;
    static constexpr size_t kMaxHeldBytes = 256 << 20;

    std::vector<T> acquire(size_t n) {
        auto it = buckets_.find(n);
        if (it != buckets_.end() && !it->second.empty()) {
            std::vector<T> v = std::move(it->second.back());
            it->second.pop_back();
            held_bytes_ -= n * sizeof(T);
            std::fill(v.begin(), v.end(), T(0));
            return v;
        }
        return std::vector<T>(n, T(0));
    }
    void release(std::vector<T>&& v) {
        size_t n = v.size();
        if (n < kMinElems || held_bytes_ + n * sizeof(T) > kMaxHeldBytes) return;
        auto& bucket = buckets_[n];
        if (bucket.size() >= kMaxPerBucket) return;
        held_bytes_ += n * sizeof(T);
        bucket.push_back(std::move(v));
    }

    static BufferPool& instance() {
        thread_local BufferPool* pool = new BufferPool;
        return *pool;
    }

private:
    std::unordered_map<size_t, std::vector<std::vector<T>>> buckets_;
    size_t held_bytes_ = 0;
};

}  // namespace

std::vector<float> acquire_buffer_f(size_t n) { return BufferPool<float>::instance().acquire(n); }
std::vector<double> acquire_buffer_d(size_t n) { return BufferPool<double>::instance().acquire(n); }

std::shared_ptr<TensorImpl> new_impl() {
    return std::shared_ptr<TensorImpl>(new TensorImpl, [](TensorImpl* p) {
        BufferPool<float>::instance().release(std::move(p->data_f));
        BufferPool<float>::instance().release(std::move(p->grad_f));
        BufferPool<double>::instance().release(std::move(p->data_d));
        BufferPool<double>::instance().release(std::move(p->grad_d));
        delete p;
    });
}

}  // namespace detail

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, DType dt) {
    auto impl = detail::new_impl();
    impl->shape = std::move(shape);
    impl->dtype = dt;
    int64_t n = impl->numel();
    if (dt == DType::f32)
        impl->data_f = detail::acquire_buffer_f(static_cast<size_t>(n));
    else
        impl->data_d = detail::acquire_buffer_d(static_cast<size_t>(n));
    return impl;
}

thread_local bool g_grad_enabled = true;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

Tensor Tensor::zeros(Shape shape, DType dt, bool requires_grad) {
    auto impl = make_impl(std::move(shape), dt);
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    auto impl = make_impl(std::move(shape), dt);
    if (dt == DType::f32)
        std::fill(impl->data_f.begin(), impl->data_f.end(), static_cast<float>(value));
    else
        std::fill(impl->data_d.begin(), impl->data_d.end(), value);
    return wrap(std::move(impl));
}

Tensor Tensor::randn(Shape shape, Rng& rng, DType dt) {
    auto impl = make_impl(std::move(shape), dt);
    int64_t n = impl->numel();
    if (dt == DType::f32) {
        for (int64_t i = 0; i < n; ++i) impl->data_f[static_cast<size_t>(i)] = static_cast<float>(rng.normal());
    } else {
        for (int64_t i = 0; i < n; ++i) impl->data_d[static_cast<size_t>(i)] = rng.normal();
    }
    return wrap(std::move(impl));
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dt) {
    auto impl = make_impl(std::move(shape), dt);
    if (impl->numel() != static_cast<int64_t>(values.size()))
        throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(impl->shape));
    if (dt == DType::f32) {
        for (size_t i = 0; i < values.size(); ++i) impl->data_f[i] = static_cast<float>(values[i]);
    } else {
        impl->data_d = values;
    }
    return wrap(std::move(impl));
}

double Tensor::value(int64_t flat) const {
    return dtype() == DType::f32 ? static_cast<double>(impl_->data_f[static_cast<size_t>(flat)])
                                 : impl_->data_d[static_cast<size_t>(flat)];
}

void Tensor::set_value(int64_t flat, double v) {
    if (dtype() == DType::f32)
        impl_->data_f[static_cast<size_t>(flat)] = static_cast<float>(v);
    else
        impl_->data_d[static_cast<size_t>(flat)] = v;
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel()));
    for (int64_t i = 0; i < numel(); ++i) out[static_cast<size_t>(i)] = value(i);
    return out;
}

double Tensor::grad_value(int64_t flat) const {
    if (dtype() == DType::f32) return static_cast<double>(impl_->grad<float>()[flat]);
    return impl_->grad<double>()[flat];
}

Tensor Tensor::detach() const {
    auto impl = make_impl(impl_->shape, impl_->dtype);
    if (impl_->dtype == DType::f32)
        std::copy(impl_->data_f.begin(), impl_->data_f.end(), impl->data_f.begin());
    else
        std::copy(impl_->data_d.begin(), impl_->data_d.end(), impl->data_d.begin());
    return wrap(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype()) return detach();
    auto impl = make_impl(impl_->shape, dt);
    int64_t n = numel();
    for (int64_t i = 0; i < n; ++i) {
        double v = value(i);
        if (dt == DType::f32)
            impl->data_f[static_cast<size_t>(i)] = static_cast<float>(v);
        else
            impl->data_d[static_cast<size_t>(i)] = v;
    }
    return wrap(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ValueError("backward: loss must be a scalar tensor");

    // Post-order DFS; the resulting order is fully determined by the graph.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    struct Frame {
        detail::TensorImpl* impl;
        size_t next_input;
    };
    std::vector<Frame> stack;
    if (loss.impl()->node || loss.requires_grad()) stack.push_back({loss.impl(), 0});
    seen.insert(loss.impl());
    while (!stack.empty()) {
        Frame& fr = stack.back();
        detail::Node* node = fr.impl->node.get();
        size_t arity = node ? node->inputs.size() : 0;
        if (fr.next_input < arity) {
            detail::TensorImpl* child = node->inputs[fr.next_input++].impl();
            if (child && !seen.count(child) && (child->node || child->requires_grad)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(fr.impl);
            stack.pop_back();
        }
    }

    // Non-leaf grads are transient per sweep; leaf grads accumulate.
    for (detail::TensorImpl* impl : order)
        if (impl->node) impl->zero_grad();

    if (loss.dtype() == DType::f32)
        loss.impl()->grad<float>()[0] += 1.0f;
    else
        loss.impl()->grad<double>()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* impl = *it;
        if (impl->node && impl->node->backward) impl->node->backward(*impl);
    }
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) return a.defined() == b.defined();
    if (a.dtype() != b.dtype() || a.shape() != b.shape()) return false;
    size_t bytes = static_cast<size_t>(a.numel() * dtype_size(a.dtype()));
    if (bytes == 0) return true;
    const void* pa = a.dtype() == DType::f32 ? static_cast<const void*>(a.data<float>().data())
                                             : static_cast<const void*>(a.data<double>().data());
    const void* pb = b.dtype() == DType::f32 ? static_cast<const void*>(b.data<float>().data())
                                             : static_cast<const void*>(b.data<double>().data());
    return std::memcmp(pa, pb, bytes) == 0;
}

void check_finite(const Tensor& t, const char* what) {
    int64_t n = t.numel();
    bool ok = true;
    if (t.dtype() == DType::f32) {
        auto d = t.data<float>();
        for (int64_t i = 0; i < n && ok; ++i) ok = std::isfinite(d[static_cast<size_t>(i)]);
    } else {
        auto d = t.data<double>();
        for (int64_t i = 0; i < n && ok; ++i) ok = std::isfinite(d[static_cast<size_t>(i)]);
    }
    if (!ok) throw ValueError(std::string("non-finite values in ") + what);
}

}  // namespace stoic
