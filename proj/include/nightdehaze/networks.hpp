#pragma once

// Contextual dilated block, the recurrent DeGlow model with its three heads,
// the single-recurrence DeHaze transmission estimator, and their losses.

#include "nightdehaze/checkpoint.hpp"
#include "nightdehaze/graph.hpp"
#include "nightdehaze/tensor.hpp"

#include <array>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

namespace nightdehaze::nets {

using tensor::BasicConvParams;
using tensor::BasicGraph;
using tensor::BasicParamRef;
using tensor::BasicTensor;
using tensor::ConvParams;
using tensor::Graph;
using tensor::ParamRef;
using tensor::Tensor;

/// Node handle shared by every graph instantiation.
using NodeId = int;

inline constexpr int kDefaultFeatures = 16;
inline constexpr int kDefaultRecurrences = 3;
inline constexpr std::array<int, 3> kPathDilations{1, 2, 3};

enum class InitScheme {
    /// N(0, 1e-4^2) weights, zero bias.
    Narrow,
    /// N(0, 2/fan_in) weights, zero bias.
    Scaled,
};

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

/// Entry convs (in -> F -> F), three dilated paths of three convs each,
/// summed and fused by one more 3×3 conv. With `feedback`, a 1×1 gate adds
/// the previous recurrence's features to the entry output.
template <class T>
class BasicContextualDilatedBlock {
public:
    BasicContextualDilatedBlock() = default;
    BasicContextualDilatedBlock(int in_channels, int features, bool feedback);

    NodeId forward(BasicGraph<T>& g, NodeId input, std::optional<NodeId> previous);

    void collect(std::vector<BasicParamRef<T>>& out, const std::string& prefix);
    void initialize(std::mt19937_64& rng, InitScheme scheme);

    int features() const noexcept { return features_; }
    bool has_feedback() const noexcept { return feedback_; }

    BasicConvParams<T> entry1;
    BasicConvParams<T> entry2;
    std::array<std::array<BasicConvParams<T>, 3>, 3> paths;
    BasicConvParams<T> fusion;
    BasicConvParams<T> gate;

private:
    int features_ = 0;
    bool feedback_ = false;
};

using ContextualDilatedBlock = BasicContextualDilatedBlock<float>;

struct DeGlowConfig {
    int features = kDefaultFeatures;
    int recurrences = kDefaultRecurrences;
    /// One parameter set reused at every recurrence; false gives one per step.
    bool tied = true;
    /// Feed a thresholded glow mask (instead of the probability) to the streak head.
    bool harden_mask = false;

    void validate() const;
};

template <class T>
struct DeGlowStage {
    BasicContextualDilatedBlock<T> block;
    BasicConvParams<T> head_glow;
    BasicConvParams<T> head_streak1;
    BasicConvParams<T> head_streak2;
    BasicConvParams<T> head_residual;
};

/// Graph ids produced by one recurrence.
struct StepNodes {
    NodeId features;
    NodeId glow_logits;
    NodeId glow;
    NodeId streak;
    NodeId residual;
    NodeId output;  // J_t = I_t - residual
};

struct UnrollNodes {
    NodeId input;
    std::vector<StepNodes> steps;
    NodeId output() const { return steps.back().output; }
};

template <class T>
class BasicDeGlowModel {
public:
    explicit BasicDeGlowModel(DeGlowConfig config = {});

    const DeGlowConfig& config() const noexcept { return config_; }

    /// One application of f to I_t at recurrence `t`.
    StepNodes step(BasicGraph<T>& g, NodeId input, std::optional<NodeId> previous, int t);
    /// tau recurrences of J_t = I_t - eps_t, I_{t+1} = J_t.
    UnrollNodes unroll(BasicGraph<T>& g, NodeId input, int tau);
    UnrollNodes unroll(BasicGraph<T>& g, NodeId input) {
        return unroll(g, input, config_.recurrences);
    }

    std::vector<BasicParamRef<T>> parameters();
    void initialize(std::uint64_t seed, InitScheme scheme = InitScheme::Narrow);

    checkpoint::Checkpoint to_checkpoint() const;
    static BasicDeGlowModel from_checkpoint(const checkpoint::Checkpoint& ckpt);

    /// Same architecture and weights at another precision.
    template <class U>
    BasicDeGlowModel<U> cast() const;

    std::vector<DeGlowStage<T>>& stages() noexcept { return stages_; }

private:
    DeGlowStage<T>& stage(int t) { return stages_[config_.tied ? 0 : t]; }

    DeGlowConfig config_;
    std::vector<DeGlowStage<T>> stages_;
};

using DeGlowModel = BasicDeGlowModel<float>;

struct DeGlowStepResult {
    Tensor residual;  // eps_t, N×3×H×W
    Tensor glow;      // G_t, N×1×H×W
    Tensor streak;    // S_t, N×3×H×W
};

struct DeGlowTrace {
    Tensor output;  // J_tau
    std::vector<DeGlowStepResult> steps;
    std::vector<Tensor> glow_logits;
    std::vector<Tensor> outputs;  // J_t per step
};

DeGlowStepResult deglow_step(const Tensor& input, DeGlowModel& model);
DeGlowTrace deglow_unroll(const Tensor& input, DeGlowModel& model, int tau);

struct LossConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.05;

    void validate() const;
};

struct DeGlowTargets {
    Tensor clean;   // J*, N×3×H×W
    Tensor streak;  // S*, N×3×H×W
    Tensor glow;    // G*, N×1×H×W binary
};

/// Sum over recurrences of
///   mse(J_t, J*) + lambda1 (mse(S_t, S*) + mse(J_t, J*)) + lambda2 BCE(G_t, G*).
template <class T>
NodeId deglow_loss(BasicGraph<T>& g, const UnrollNodes& trace, const DeGlowTargets& targets,
                   const LossConfig& config);
/// Same loss evaluated from a recorded trace without building a graph.
double deglow_loss(const DeGlowTrace& trace, const DeGlowTargets& targets,
                   const LossConfig& config);

struct DeHazeConfig {
    int features = kDefaultFeatures;
};

template <class T>
class BasicDeHazeModel {
public:
    explicit BasicDeHazeModel(DeHazeConfig config = {});

    const DeHazeConfig& config() const noexcept { return config_; }

    /// Sigmoid transmission estimate (no floor), N×1×H×W.
    NodeId forward(BasicGraph<T>& g, NodeId input);

    std::vector<BasicParamRef<T>> parameters();
    void initialize(std::uint64_t seed, InitScheme scheme = InitScheme::Narrow);

    checkpoint::Checkpoint to_checkpoint() const;
    static BasicDeHazeModel from_checkpoint(const checkpoint::Checkpoint& ckpt);

    template <class U>
    BasicDeHazeModel<U> cast() const;

    BasicContextualDilatedBlock<T> block;
    BasicConvParams<T> head;

private:
    DeHazeConfig config_;
};

using DeHazeModel = BasicDeHazeModel<float>;

/// Copies parameters in declaration order between two models of one architecture.
template <class Dst, class Src>
void copy_parameters(Dst& dst, Src& src) {
    auto to = dst.parameters();
    auto from = src.parameters();
    for (std::size_t i = 0; i < to.size(); ++i) {
        using U = typename std::remove_reference_t<decltype(*to[i].tensor)>::value_type;
        *to[i].tensor = tensor::tensor_cast<U>(*from[i].tensor);
    }
}

template <class T>
template <class U>
BasicDeGlowModel<U> BasicDeGlowModel<T>::cast() const {
    BasicDeGlowModel<U> out(config_);
    copy_parameters(out, const_cast<BasicDeGlowModel&>(*this));
    return out;
}

template <class T>
template <class U>
BasicDeHazeModel<U> BasicDeHazeModel<T>::cast() const {
    BasicDeHazeModel<U> out(config_);
    copy_parameters(out, const_cast<BasicDeHazeModel&>(*this));
    return out;
}

/// Transmission estimate; with `t_min`, values are floored at it.
Tensor dehaze_forward(const Tensor& input, DeHazeModel& model,
                      std::optional<float> t_min = std::nullopt);

template <class T>
NodeId dehaze_loss(BasicGraph<T>& g, NodeId predicted, NodeId truth) {
    return g.mse(predicted, truth);
}
double dehaze_loss(const Tensor& predicted, const Tensor& truth);

/// Kind tag ("deglow" or "dehaze") of a checkpoint descriptor.
std::string checkpoint_kind(const std::string& descriptor);

}  // namespace nightdehaze::nets
