#include "nightdehaze/tensor.hpp"

#include "nightdehaze/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nightdehaze::tensor {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRow = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMapRow = Eigen::Map<const RowMatrix<T>>;

void check_shape(Shape s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw DimensionError("tensor shape must be positive, got " + s.str());
    }
}

template <class T>
void check_conv(const BasicTensor<T>& input, const BasicConvParams<T>& p) {
    if (input.shape().c != p.in_channels()) {
        throw DimensionError("conv expects " + std::to_string(p.in_channels()) +
                             " input channels, got " + input.shape().str());
    }
    if (p.dilation < 1) throw ParameterError("dilation must be >= 1");
}

// Unfolds one sample (C×H×W) into a (C·k·k) × (H·W) column matrix.
template <class T>
void im2col(const T* src, int channels, int h, int w, int k, int dil, T* col) {
    const int r = (k - 1) / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        const T* plane = src + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            const int dy = (ky - r) * dil;
            for (int kx = 0; kx < k; ++kx) {
                const int dx = (kx - r) * dil;
                T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
                const int x_lo = std::max(0, -dx);
                const int x_hi = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    T* out = row + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h || x_lo >= x_hi) {
                        std::fill(out, out + w, T(0));
                        continue;
                    }
                    const T* in = plane + static_cast<std::size_t>(sy) * w;
                    std::fill(out, out + x_lo, T(0));
                    std::copy(in + x_lo + dx, in + x_hi + dx, out + x_lo);
                    std::fill(out + x_hi, out + w, T(0));
                }
            }
        }
    }
}

// Scatter-adds a column matrix back onto a C×H×W sample.
template <class T>
void col2im(const T* col, int channels, int h, int w, int k, int dil, T* dst) {
    const int r = (k - 1) / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        T* plane = dst + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            const int dy = (ky - r) * dil;
            for (int kx = 0; kx < k; ++kx) {
                const int dx = (kx - r) * dil;
                const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
                const int x_lo = std::max(0, -dx);
                const int x_hi = std::min(w, w - dx);
                if (x_lo >= x_hi) continue;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* in = row + static_cast<std::size_t>(y) * w;
                    T* out = plane + static_cast<std::size_t>(sy) * w;
                    for (int x = x_lo; x < x_hi; ++x) out[x + dx] += in[x];
                }
            }
        }
    }
}

}  // namespace

std::string Shape::str() const {
    std::ostringstream ss;
    ss << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return ss.str();
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.count(), fill);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(values.begin(), values.end()) {
    check_shape(shape);
    if (data_.size() != shape.count()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape.str());
    }
}

template <class T>
std::span<T> BasicTensor<T>::grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
    return grad_;
}

template <class T>
void BasicTensor<T>::zero_grad() {
    grad_.assign(data_.size(), T(0));
}

template <class T>
bool BasicTensor<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
BasicConvParams<T>::BasicConvParams(int in_channels, int out_channels, int kernel, int dil)
    : weight(Shape{out_channels, in_channels, kernel, kernel}),
      bias(Shape{1, out_channels, 1, 1}),
      dilation(dil) {
    if (kernel < 1 || kernel % 2 == 0) throw ParameterError("kernel size must be odd");
    if (dil < 1) throw ParameterError("dilation must be >= 1");
}

template <class T>
BasicTensor<T> dilated_conv2d(const BasicTensor<T>& input, const BasicConvParams<T>& p) {
    check_conv(input, p);
    const Shape in = input.shape();
    const int k = p.kernel();
    const int cout = p.out_channels();
    const int rows = in.c * k * k;
    const auto hw = static_cast<Eigen::Index>(in.plane());

    BasicTensor<T> out(Shape{in.n, cout, in.h, in.w});
    RowMatrix<T> col(rows, hw);
    ConstMapRow<T> weight(p.weight.data().data(), cout, rows);
    for (int n = 0; n < in.n; ++n) {
        im2col(input.data().data() + n * in.c * in.plane(), in.c, in.h, in.w, k, p.dilation,
               col.data());
        MapRow<T> dst(out.data().data() + n * cout * in.plane(), cout, hw);
        dst.noalias() = weight * col;
        for (int o = 0; o < cout; ++o) dst.row(o).array() += p.bias[o];
    }
    return out;
}

template <class T>
ConvGrads<T> dilated_conv2d_backward(const BasicTensor<T>& input, const BasicConvParams<T>& p,
                                     const BasicTensor<T>& grad_out) {
    check_conv(input, p);
    const Shape in = input.shape();
    const int k = p.kernel();
    const int cout = p.out_channels();
    const Shape expected{in.n, cout, in.h, in.w};
    if (grad_out.shape() != expected) {
        throw DimensionError("conv backward: grad_out " + grad_out.shape().str() +
                             " does not match output " + expected.str());
    }
    const int rows = in.c * k * k;
    const auto hw = static_cast<Eigen::Index>(in.plane());

    ConvGrads<T> g{BasicTensor<T>(in), BasicTensor<T>(p.weight.shape()),
                   BasicTensor<T>(p.bias.shape())};
    RowMatrix<T> col(rows, hw);
    RowMatrix<T> dcol(rows, hw);
    ConstMapRow<T> weight(p.weight.data().data(), cout, rows);
    MapRow<T> dweight(g.weight.data().data(), cout, rows);
    for (int n = 0; n < in.n; ++n) {
        ConstMapRow<T> gout(grad_out.data().data() + n * cout * in.plane(), cout, hw);
        im2col(input.data().data() + n * in.c * in.plane(), in.c, in.h, in.w, k, p.dilation,
               col.data());
        dweight.noalias() += gout * col.transpose();
        for (int o = 0; o < cout; ++o) {
            const T* row = gout.row(o).data();
            T acc = T(0);
            for (Eigen::Index i = 0; i < hw; ++i) acc += row[i];
            g.bias[o] += acc;
        }
        dcol.noalias() = weight.transpose() * gout;
        col2im(dcol.data(), in.c, in.h, in.w, k, p.dilation,
               g.input.data().data() + n * in.c * in.plane());
    }
    return g;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    auto src = input.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    return out;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
    if (input.shape() != grad_out.shape()) throw DimensionError("relu backward: shape mismatch");
    BasicTensor<T> out(input.shape());
    auto src = input.data();
    auto g = grad_out.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? g[i] : T(0);
    return out;
}

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts) {
    if (parts.empty()) throw DimensionError("concat_channels needs at least one tensor");
    const Shape first = parts.front()->shape();
    int channels = 0;
    for (const BasicTensor<T>* t : parts) {
        const Shape s = t->shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw DimensionError("concat_channels: " + s.str() + " incompatible with " +
                                 first.str());
        }
        channels += s.c;
    }
    BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
    const std::size_t plane = first.plane();
    T* dst = out.data().data();
    for (int n = 0; n < first.n; ++n) {
        for (const BasicTensor<T>* t : parts) {
            const std::size_t len = t->shape().c * plane;
            const T* src = t->data().data() + n * len;
            dst = std::copy(src, src + len, dst);
        }
    }
    return out;
}

template <class T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& t, std::span<const int> channels) {
    const Shape s = t.shape();
    int total = 0;
    for (int c : channels) {
        if (c < 1) throw DimensionError("split_channels: channel counts must be positive");
        total += c;
    }
    if (total != s.c) {
        throw DimensionError("split_channels: counts sum to " + std::to_string(total) +
                             " but tensor has " + std::to_string(s.c) + " channels");
    }
    std::vector<BasicTensor<T>> out;
    out.reserve(channels.size());
    for (int c : channels) out.emplace_back(Shape{s.n, c, s.h, s.w});
    const std::size_t plane = s.plane();
    const T* src = t.data().data();
    for (int n = 0; n < s.n; ++n) {
        for (auto& part : out) {
            const std::size_t len = part.shape().c * plane;
            std::copy(src, src + len, part.data().data() + n * len);
            src += len;
        }
    }
    return out;
}

Tensor gaussian_init(Shape shape, std::mt19937_64& rng, float stddev) {
    if (!(stddev >= 0.0f)) throw ParameterError("stddev must be >= 0");
    Tensor t(shape);
    std::normal_distribution<float> dist(0.0f, stddev);
    for (float& v : t.data()) v = dist(rng);
    return t;
}

int receptive_field_extent(int num_layers, int dilation) {
    if (num_layers < 1 || dilation < 1) {
        throw ParameterError("receptive_field_extent needs num_layers >= 1 and dilation >= 1");
    }
    return 1 + num_layers * 2 * dilation;
}

void sgd_step(std::span<const ParamRef> params, OptimizerState& state) {
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.emplace_back(p.tensor->size(), 0.0f);
    }
    if (state.velocity.size() != params.size()) {
        throw DimensionError("optimizer state tracks " + std::to_string(state.velocity.size()) +
                             " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].tensor;
        auto& v = state.velocity[i];
        if (v.size() != t.size()) {
            throw DimensionError("velocity shape mismatch for parameter " + params[i].name);
        }
        auto value = t.data();
        auto grad = t.grad();
        const float decay = params[i].decay ? state.weight_decay : 0.0f;
        for (std::size_t j = 0; j < value.size(); ++j) {
            v[j] = state.momentum * v[j] + (grad[j] + decay * value[j]);
            value[j] -= state.learning_rate * v[j];
        }
    }
}

#define NIGHTDEHAZE_INSTANTIATE(T)                                                             \
    template class BasicTensor<T>;                                                             \
    template struct BasicConvParams<T>;                                                        \
    template BasicTensor<T> dilated_conv2d(const BasicTensor<T>&, const BasicConvParams<T>&);  \
    template ConvGrads<T> dilated_conv2d_backward(const BasicTensor<T>&,                       \
                                                  const BasicConvParams<T>&,                   \
                                                  const BasicTensor<T>&);                      \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                       \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);       \
    template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);           \
    template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&, std::span<const int>);

NIGHTDEHAZE_INSTANTIATE(float)
NIGHTDEHAZE_INSTANTIATE(double)

#undef NIGHTDEHAZE_INSTANTIATE

}  // namespace nightdehaze::tensor
