#include "nightdehaze/graph.hpp"

#include "nightdehaze/error.hpp"

#include <cmath>

namespace nightdehaze::tensor {

namespace {

template <class T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": " + a.shape().str() + " vs " + b.shape().str());
    }
}

template <class T>
BasicTensor<T> scalar_tensor(double v) {
    return BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(v));
}

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

}  // namespace

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

template <class T>
std::vector<T>& BasicGraph<T>::grad_of(Id id) {
    auto& g = nodes_[id].grad;
    if (g.size() != nodes_[id].value.size()) g.assign(nodes_[id].value.size(), T(0));
    return g;
}

template <class T>
void BasicGraph<T>::accumulate(Id id, std::span<const T> g) {
    if (!nodes_[id].requires_grad) return;
    auto& dst = grad_of(id);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::constant(TensorT value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::param(TensorT& t) {
    Node n;
    n.value = t;
    n.value.drop_grad();
    n.requires_grad = true;
    n.bound = &t;
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::conv(Id x, ConvT& params) {
    Node n;
    n.value = dilated_conv2d(value(x), params);
    n.requires_grad = true;
    ConvT* p = &params;
    const Id self = static_cast<Id>(nodes_.size());
    n.backward = [x, p, self](BasicGraph& g, const std::vector<T>& gout_raw) {
        TensorT gout(g.value(self).shape(), gout_raw);
        ConvGrads<T> grads = dilated_conv2d_backward(g.value(x), *p, gout);
        auto wg = p->weight.grad();
        for (std::size_t i = 0; i < wg.size(); ++i) wg[i] += grads.weight[i];
        auto bg = p->bias.grad();
        for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += grads.bias[i];
        g.accumulate(x, grads.input.data());
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::relu(Id x) {
    Node n;
    n.value = tensor::relu(value(x));
    n.requires_grad = requires_grad(x);
    n.is_relu = true;
    n.relu_input = x;
    n.backward = [x](BasicGraph& g, const std::vector<T>& gout) {
        const auto in = g.value(x).data();
        std::vector<T> gin(gout.size());
        for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = in[i] > T(0) ? gout[i] : T(0);
        g.accumulate(x, gin);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::sigmoid(Id x) {
    Node n;
    n.value = TensorT(value(x).shape());
    const auto in = value(x).data();
    auto out = n.value.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
    n.requires_grad = requires_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    n.backward = [x, self](BasicGraph& g, const std::vector<T>& gout) {
        const auto y = g.value(self).data();
        std::vector<T> gin(gout.size());
        for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = gout[i] * y[i] * (T(1) - y[i]);
        g.accumulate(x, gin);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::add(Id a, Id b) {
    require_same(value(a), value(b), "add");
    Node n;
    n.value = value(a);
    auto out = n.value.data();
    const auto rhs = value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rhs[i];
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.backward = [a, b](BasicGraph& g, const std::vector<T>& gout) {
        g.accumulate(a, gout);
        g.accumulate(b, gout);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::sub(Id a, Id b) {
    require_same(value(a), value(b), "sub");
    Node n;
    n.value = value(a);
    auto out = n.value.data();
    const auto rhs = value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= rhs[i];
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.backward = [a, b](BasicGraph& g, const std::vector<T>& gout) {
        g.accumulate(a, gout);
        std::vector<T> neg(gout.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -gout[i];
        g.accumulate(b, neg);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::mul_mask(Id mask, Id x) {
    const Shape ms = value(mask).shape();
    const Shape xs = value(x).shape();
    if (ms.c != 1 || ms.n != xs.n || ms.h != xs.h || ms.w != xs.w) {
        throw DimensionError("mul_mask: mask " + ms.str() + " incompatible with " + xs.str());
    }
    Node n;
    n.value = TensorT(xs);
    const std::size_t plane = xs.plane();
    {
        const auto m = value(mask).data();
        const auto in = value(x).data();
        auto out = n.value.data();
        for (int b = 0; b < xs.n; ++b)
            for (int c = 0; c < xs.c; ++c)
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t o = (static_cast<std::size_t>(b) * xs.c + c) * plane + i;
                    out[o] = m[b * plane + i] * in[o];
                }
    }
    n.requires_grad = requires_grad(mask) || requires_grad(x);
    n.backward = [mask, x, xs, plane](BasicGraph& g, const std::vector<T>& gout) {
        const auto m = g.value(mask).data();
        const auto in = g.value(x).data();
        std::vector<T> gm(m.size(), T(0));
        std::vector<T> gx(in.size());
        for (int b = 0; b < xs.n; ++b)
            for (int c = 0; c < xs.c; ++c)
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t o = (static_cast<std::size_t>(b) * xs.c + c) * plane + i;
                    gx[o] = m[b * plane + i] * gout[o];
                    gm[b * plane + i] += in[o] * gout[o];
                }
        g.accumulate(mask, gm);
        g.accumulate(x, gx);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::concat(std::vector<Id> parts) {
    std::vector<const TensorT*> tensors;
    bool any = false;
    for (Id p : parts) {
        tensors.push_back(&value(p));
        any = any || requires_grad(p);
    }
    Node n;
    n.value = concat_channels(std::span<const TensorT* const>(tensors));
    n.requires_grad = any;
    n.backward = [parts](BasicGraph& g, const std::vector<T>& gout) {
        std::vector<int> channels;
        for (Id p : parts) channels.push_back(g.value(p).shape().c);
        const Shape s = g.value(parts.front()).shape();
        int total = 0;
        for (int c : channels) total += c;
        TensorT whole(Shape{s.n, total, s.h, s.w}, gout);
        auto pieces = split_channels(whole, channels);
        for (std::size_t i = 0; i < parts.size(); ++i) g.accumulate(parts[i], pieces[i].data());
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::softmax2_first(Id logits) {
    const Shape s = value(logits).shape();
    if (s.c != 2) throw DimensionError("softmax2_first expects 2 channels, got " + s.str());
    Node n;
    n.value = TensorT(Shape{s.n, 1, s.h, s.w});
    const std::size_t plane = s.plane();
    const auto in = value(logits).data();
    auto out = n.value.data();
    for (int b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const T z = in[(2 * b) * plane + i] - in[(2 * b + 1) * plane + i];
            out[b * plane + i] = T(1) / (T(1) + std::exp(-z));
        }
    n.requires_grad = requires_grad(logits);
    const Id self = static_cast<Id>(nodes_.size());
    n.backward = [logits, self, s, plane](BasicGraph& g, const std::vector<T>& gout) {
        const auto p = g.value(self).data();
        std::vector<T> gin(2 * s.n * plane);
        for (int b = 0; b < s.n; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
                const T d = gout[b * plane + i] * p[b * plane + i] * (T(1) - p[b * plane + i]);
                gin[(2 * b) * plane + i] = d;
                gin[(2 * b + 1) * plane + i] = -d;
            }
        g.accumulate(logits, gin);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::harden(Id x) {
    Node n;
    n.value = TensorT(value(x).shape());
    const auto in = value(x).data();
    auto out = n.value.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0.5) ? T(1) : T(0);
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::mse(Id a, Id b) {
    require_same(value(a), value(b), "mse");
    const auto va = value(a).data();
    const auto vb = value(b).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = static_cast<double>(va[i]) - vb[i];
        acc += d * d;
    }
    const double count = static_cast<double>(va.size());
    Node n;
    n.scalar = acc / count;
    n.value = scalar_tensor<T>(n.scalar);
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.backward = [a, b, count](BasicGraph& g, const std::vector<T>& gout) {
        const auto va = g.value(a).data();
        const auto vb = g.value(b).data();
        std::vector<T> ga(va.size());
        std::vector<T> gb(va.size());
        for (std::size_t i = 0; i < va.size(); ++i) {
            const T d = static_cast<T>(2.0 * (static_cast<double>(va[i]) - vb[i]) / count) * gout[0];
            ga[i] = d;
            gb[i] = -d;
        }
        g.accumulate(a, ga);
        g.accumulate(b, gb);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::softmax2_cross_entropy(Id logits, const TensorT& target) {
    const Shape s = value(logits).shape();
    const Shape ts = target.shape();
    if (s.c != 2 || ts.c != 1 || ts.n != s.n || ts.h != s.h || ts.w != s.w) {
        throw DimensionError("softmax2_cross_entropy: logits " + s.str() + " vs target " + ts.str());
    }
    for (T v : target.data()) {
        if (v != T(0) && v != T(1)) throw DataError("glow target must be binary");
    }
    const std::size_t plane = s.plane();
    const auto in = value(logits).data();
    const auto tg = target.data();
    double acc = 0.0;
    for (int b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const double z = static_cast<double>(in[(2 * b) * plane + i]) - in[(2 * b + 1) * plane + i];
            const double y = tg[b * plane + i];
            acc -= y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z);
        }
    const double count = static_cast<double>(s.n) * plane;
    Node n;
    n.scalar = acc / count;
    n.value = scalar_tensor<T>(n.scalar);
    n.requires_grad = requires_grad(logits);
    n.backward = [logits, target, s, plane, count](BasicGraph& g, const std::vector<T>& gout) {
        const auto in = g.value(logits).data();
        const auto tg = target.data();
        std::vector<T> gin(in.size());
        for (int b = 0; b < s.n; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
                const double z = static_cast<double>(in[(2 * b) * plane + i]) - in[(2 * b + 1) * plane + i];
                const double p = 1.0 / (1.0 + std::exp(-z));
                const auto d = static_cast<T>((p - tg[b * plane + i]) / count) * gout[0];
                gin[(2 * b) * plane + i] = d;
                gin[(2 * b + 1) * plane + i] = -d;
            }
        g.accumulate(logits, gin);
    };
    return push(std::move(n));
}

template <class T>
typename BasicGraph<T>::Id BasicGraph<T>::weighted_sum(const std::vector<std::pair<Id, double>>& terms) {
    Node n;
    double acc = 0.0;
    for (const auto& [id, w] : terms) {
        acc += w * scalar(id);
        n.requires_grad = n.requires_grad || requires_grad(id);
    }
    n.scalar = acc;
    n.value = scalar_tensor<T>(acc);
    n.backward = [terms](BasicGraph& g, const std::vector<T>& gout) {
        for (const auto& [id, w] : terms) {
            const T gi = static_cast<T>(w) * gout[0];
            g.accumulate(id, std::span<const T>(&gi, 1));
        }
    };
    return push(std::move(n));
}

template <class T>
void BasicGraph<T>::backward(Id root) {
    if (value(root).size() != 1) throw DimensionError("backward root must be a scalar");
    for (auto& n : nodes_) n.grad.clear();
    grad_of(root)[0] = T(1);
    for (Id id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) {
            n.backward(*this, n.grad);
        } else if (n.bound != nullptr) {
            auto dst = n.bound->grad();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
        }
    }
}

template <class T>
std::vector<std::uint8_t> BasicGraph<T>::relu_signature() const {
    std::vector<std::uint8_t> sig;
    for (const auto& n : nodes_) {
        if (!n.is_relu) continue;
        for (T v : value(n.relu_input).data()) sig.push_back(v > T(0) ? 1 : 0);
    }
    return sig;
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace nightdehaze::tensor
