#pragma once

// Mini-batch SGD training loops for the DeGlow and DeHaze models, with a
// divide-by-ten learning-rate schedule driven by validation loss.

#include "nightdehaze/networks.hpp"
#include "nightdehaze/synthesis.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nightdehaze::training {

using tensor::Tensor;

/// One synthesized example as 1×C×H×W tensors.
struct TrainingSample {
    Tensor hazy;          // I
    Tensor haze;          // J (DeGlow target, DeHaze input)
    Tensor streak;        // summed streak layers
    Tensor glow;          // binary mask
    Tensor transmission;  // t
};

Tensor to_tensor(const RadianceImage& img);
Tensor to_tensor(const Plane& plane);
RadianceImage to_image(const Tensor& t, int batch_index = 0);
Plane to_plane(const Tensor& t, int batch_index = 0);

TrainingSample make_sample(const RadianceImage& hazy, const RadianceImage& haze,
                           const RadianceImage& streak, const Plane& glow, const Plane& t);
std::vector<TrainingSample> samples_from(std::span<const synthesis::SynthesizedRecord> records);
std::vector<TrainingSample> samples_from(std::span<const synthesis::LoadedRecord> records);

struct TrainSchedule {
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    float weight_decay = 0.001f;
    int batch_size = 128;
    int max_iterations = 1200;
    /// Iterations without a > min_improvement relative gain before lr /= 10.
    int patience = 50;
    double min_improvement = 0.001;
    int validation_interval = 10;
    int log_interval = 10;
    /// Every K iterations a checkpoint is written to checkpoint_dir (0 = never).
    int checkpoint_interval = 0;
    std::filesystem::path checkpoint_dir;
    std::string checkpoint_prefix = "model";
    /// Square random crop size; 0 trains on full frames.
    int patch_size = 0;
    /// Global gradient-norm clip; 0 disables.
    float clip_norm = 0.0f;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Tracks the best validation loss and signals when the learning rate should
/// drop because nothing improved by more than `min_improvement` (relative)
/// within `patience` iterations.
class PlateauScheduler {
public:
    PlateauScheduler(int patience, double min_improvement);

    /// Returns true when the learning rate must be divided by ten.
    bool observe(int iteration, double validation_loss);
    double best() const noexcept { return best_; }

private:
    int patience_;
    double min_improvement_;
    double best_;
    int best_iteration_ = 0;
    bool seen_ = false;
};

struct LogEntry {
    int iteration = 0;
    double loss = 0.0;
    double validation = 0.0;
    float learning_rate = 0.0f;
};

struct TrainResult {
    /// Training loss of every iteration.
    std::vector<double> losses;
    std::vector<LogEntry> log;
    std::vector<std::filesystem::path> checkpoints;
    int lr_drops = 0;
    float final_learning_rate = 0.0f;
};

/// Mean of the first / last `window` entries.
double smoothed_head(std::span<const double> values, std::size_t window);
double smoothed_tail(std::span<const double> values, std::size_t window);

TrainResult train_deglow(nets::DeGlowModel& model, std::span<const TrainingSample> train,
                         std::span<const TrainingSample> validation, const TrainSchedule& schedule,
                         const nets::LossConfig& loss = {});

TrainResult train_dehaze(nets::DeHazeModel& model, std::span<const TrainingSample> train,
                         std::span<const TrainingSample> validation, const TrainSchedule& schedule);

}  // namespace nightdehaze::training
