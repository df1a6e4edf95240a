#pragma once

// Reverse-mode tape over the tensor kernels. A Graph is built fresh for every
// forward pass; values are kept for the backward sweep.

#include "nightdehaze/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace nightdehaze::tensor {

template <class T>
class BasicGraph {
public:
    using Id = int;
    using TensorT = BasicTensor<T>;
    using ConvT = BasicConvParams<T>;

    /// Constant input; receives no gradient.
    Id constant(TensorT value);
    /// Trainable leaf bound to `t`; backward accumulates into t.grad().
    Id param(TensorT& t);

    Id conv(Id x, ConvT& params);
    Id relu(Id x);
    Id sigmoid(Id x);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    /// Channel-broadcast product: `mask` has one channel, `x` any number.
    Id mul_mask(Id mask, Id x);
    Id concat(std::vector<Id> parts);
    /// Probability of channel 0 under a two-channel softmax.
    Id softmax2_first(Id logits);
    /// Thresholds at 0.5; gradient is not propagated.
    Id harden(Id x);

    /// mean((a - b)^2) over all elements.
    Id mse(Id a, Id b);
    /// Mean binary cross-entropy of the channel-0 softmax probability of
    /// two-channel `logits` against a binary target with one channel.
    Id softmax2_cross_entropy(Id logits, const TensorT& target);
    /// sum_i weight_i * scalar_i.
    Id weighted_sum(const std::vector<std::pair<Id, double>>& terms);

    const TensorT& value(Id id) const { return nodes_[id].value; }
    /// Double-precision value of a scalar node.
    double scalar(Id id) const { return nodes_[id].scalar; }
    bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
    /// Gradient of the last backward() root with respect to node `id`.
    const std::vector<T>& grad(Id id) const { return nodes_[id].grad; }

    void backward(Id root);

    /// Sign pattern of every ReLU pre-activation; used to reject
    /// finite-difference probes that cross a kink.
    std::vector<std::uint8_t> relu_signature() const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        TensorT value;
        double scalar = 0.0;
        bool requires_grad = false;
        std::vector<T> grad;
        std::function<void(BasicGraph&, const std::vector<T>&)> backward;
        TensorT* bound = nullptr;
        bool is_relu = false;
        Id relu_input = -1;
    };

    Id push(Node node);
    std::vector<T>& grad_of(Id id);
    void accumulate(Id id, std::span<const T> g);

    std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;
using Graph64 = BasicGraph<double>;

}  // namespace nightdehaze::tensor
