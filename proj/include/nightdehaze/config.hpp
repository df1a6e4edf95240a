#pragma once

// Flat INI-style configuration ("key = value" under [section] headers).
//
//   [pipeline]  deglow_checkpoint dehaze_checkpoint tau t_min tile_size
//   [synthesis] pairs clean_dir depth_dir width height beta_min beta_max
//               beta_samples q_min q_max q_samples light_min light_max taylor
//               sources_min sources_max radius_min radius_max mask_threshold seed
//   [train]     manifest validation_fraction learning_rate momentum weight_decay
//               batch_size max_iterations patience min_improvement
//               validation_interval log_interval checkpoint_interval patch_size
//               clip_norm seed init
//   [deglow]    features tau tied harden lambda1 lambda2
//   [dehaze]    features
//
// Relative paths resolve against the config file's directory.

#include "nightdehaze/networks.hpp"
#include "nightdehaze/synthesis.hpp"
#include "nightdehaze/training.hpp"

#include <filesystem>
#include <string>

namespace nightdehaze::config {

struct PipelineConfig {
    std::filesystem::path deglow_checkpoint;
    std::filesystem::path dehaze_checkpoint;
    /// 0 uses the recurrence count stored in the DeGlow checkpoint.
    int tau = 0;
    float t_min = atmospherics::kDefaultTransmissionFloor;
    /// 0 disables tiling.
    int tile_size = 0;

    synthesis::SynthesisConfig synthesis;
    int procedural_pairs = 10;
    std::filesystem::path clean_dir;
    std::filesystem::path depth_dir;

    std::filesystem::path manifest;
    double validation_fraction = 0.1;
    training::TrainSchedule schedule;
    nets::InitScheme init = nets::InitScheme::Narrow;
    nets::DeGlowConfig deglow;
    nets::LossConfig loss;
    nets::DeHazeConfig dehaze;

    void validate() const;
};

PipelineConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace nightdehaze::config
