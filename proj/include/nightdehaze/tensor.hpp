#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nightdehaze::tensor {

/// N×C×H×W extent.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Cache-line aligned storage. Vectorized kernels peel a data-dependent number
/// of leading elements off unaligned buffers, which would make sums depend on
/// heap addresses; a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

/// Dense tensor with an optional same-shape gradient buffer. Training runs
/// in float; the double instantiation backs the gradient checks.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
    T at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

    bool has_grad() const noexcept { return !grad_.empty(); }
    /// Allocates (zeroed) the gradient buffer if absent.
    std::span<T> grad();
    std::span<const T> grad() const noexcept { return grad_; }
    void zero_grad();
    void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

    bool all_finite() const noexcept;

    std::size_t offset(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

private:
    Shape shape_;
    std::vector<T, AlignedAllocator<T>> data_;
    std::vector<T, AlignedAllocator<T>> grad_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Element-type conversion; the gradient buffer is not carried over.
template <class U, class T>
BasicTensor<U> tensor_cast(const BasicTensor<T>& t) {
    std::vector<U> values(t.data().begin(), t.data().end());
    return BasicTensor<U>(t.shape(), std::move(values));
}

/// Square-kernel convolution parameters. Weights are (out, in, k, k) stored
/// as a Tensor with n=out, c=in; bias is (1, out, 1, 1).
template <class T>
struct BasicConvParams {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
    int dilation = 1;

    BasicConvParams() = default;
    BasicConvParams(int in_channels, int out_channels, int kernel = 3, int dilation = 1);

    int out_channels() const noexcept { return weight.shape().n; }
    int in_channels() const noexcept { return weight.shape().c; }
    int kernel() const noexcept { return weight.shape().h; }
};

using ConvParams = BasicConvParams<float>;

template <class T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

/// Same-size dilated convolution with zero padding of dilation*(k-1)/2:
///   out[n,o,y,x] = b[o] + sum_{i,ky,kx} w[o,i,ky,kx] * in[n,i,y+(ky-r)*d,x+(kx-r)*d]
template <class T>
BasicTensor<T> dilated_conv2d(const BasicTensor<T>& input, const BasicConvParams<T>& params);

/// Adjoint of dilated_conv2d for cotangent `grad_out`.
template <class T>
ConvGrads<T> dilated_conv2d_backward(const BasicTensor<T>& input, const BasicConvParams<T>& params,
                                     const BasicTensor<T>& grad_out);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts);
template <class T>
BasicTensor<T> concat_channels(std::initializer_list<const BasicTensor<T>*> parts) {
    return concat_channels(std::span<const BasicTensor<T>* const>(parts.begin(), parts.size()));
}
template <class T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& t, std::span<const int> channels);

inline constexpr float kNarrowInitStd = 1.0e-4f;

/// i.i.d. N(0, stddev^2) tensor.
Tensor gaussian_init(Shape shape, std::mt19937_64& rng, float stddev = kNarrowInitStd);

/// Spatial extent of `num_layers` stacked 3×3 convolutions at constant dilation.
int receptive_field_extent(int num_layers, int dilation);

/// Trainable tensor plus its role for weight decay.
template <class T>
struct BasicParamRef {
    std::string name;
    BasicTensor<T>* tensor = nullptr;
    bool decay = true;
};

using ParamRef = BasicParamRef<float>;

struct OptimizerState {
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    float weight_decay = 0.001f;
    std::vector<std::vector<float>> velocity;
};

/// Heavy-ball SGD on the gradient buffers of `params`:
///   v <- momentum * v + (g + weight_decay * p)    (decay only where ParamRef::decay)
///   p <- p - lr * v
/// Velocity buffers are created on the first call.
void sgd_step(std::span<const ParamRef> params, OptimizerState& state);

}  // namespace nightdehaze::tensor
