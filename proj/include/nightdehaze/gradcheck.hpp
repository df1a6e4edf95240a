#pragma once

// Central finite-difference verification of the analytic gradients produced
// by the tape. Checks run on the double instantiation so that float rounding
// in the forward pass does not swamp the difference quotient.

#include "nightdehaze/graph.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace nightdehaze::gradcheck {

using Graph = tensor::Graph64;
using Tensor = tensor::Tensor64;

struct Options {
    double step = 1e-3;
    /// Accepted probes per tensor; up to four times as many candidates are tried
    /// (every element when the tensor is smaller).
    std::size_t max_probes = 48;
    std::uint64_t seed = 7;
};

struct Result {
    std::string name;
    /// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf), worst tensor.
    double max_rel_error = 0.0;
    std::size_t probes = 0;
    /// Probes rejected because the perturbation flipped a ReLU sign.
    std::size_t skipped = 0;

    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Builds a scalar loss from the current contents of the probed tensors.
using LossBuilder = std::function<Graph::Id(Graph&)>;

Result check(std::string name, const LossBuilder& build, const std::vector<Tensor*>& wrt,
             const Options& options = {});

inline constexpr double kTolerance = 1e-3;

/// Dilated conv (DF 1/2/3), ReLU, concatenation, sigmoid, both losses and full
/// DeGlow / DeHaze forward passes on 1×3×8×8 inputs.
std::vector<Result> run_suite(std::uint64_t seed = 7);

}  // namespace nightdehaze::gradcheck
