#pragma once

// DeGlow -> DeHaze -> atmospheric light -> radiance recovery.

#include "nightdehaze/atmospherics.hpp"
#include "nightdehaze/networks.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nightdehaze::pipeline {

using atmospherics::AtmosphericLight;

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunArtifacts {
    RadianceImage output;
    RadianceImage deglowed;
    TransmissionMap transmission;
    AtmosphericLight light;
    std::vector<StageTiming> timings;
};

struct RunOptions {
    /// 0 uses the model's own recurrence count.
    int tau = 0;
    float t_min = atmospherics::kDefaultTransmissionFloor;
    /// Tiles of this core size with receptive-field margins; 0 runs whole frames.
    int tile_size = 0;
    /// Snap J to 8 bits and t to 16 bits before the next stage, so dumped
    /// intermediates reproduce the output exactly.
    bool quantize_intermediates = true;

    /// Test hooks bypassing the DeHaze network / light estimation.
    std::optional<TransmissionMap> transmission_override;
    std::optional<AtmosphericLight> light_override;
};

inline constexpr const char* kStageDeGlow = "deglow";
inline constexpr const char* kStageDeHaze = "dehaze";
inline constexpr const char* kStageLight = "atmospheric_light";
inline constexpr const char* kStageRecovery = "recovery";

/// Receptive radius (pixels) of `tau` DeGlow recurrences and of DeHaze.
int deglow_receptive_radius(int tau);
int dehaze_receptive_radius();

class Pipeline {
public:
    Pipeline(nets::DeGlowModel deglow, nets::DeHazeModel dehaze);

    /// Loads both checkpoints; each file's kind is read from its header.
    static Pipeline load(const std::filesystem::path& deglow_checkpoint,
                         const std::filesystem::path& dehaze_checkpoint);

    RunArtifacts run(const RadianceImage& input, const RunOptions& options = {});

    RadianceImage deglow(const RadianceImage& input, int tau, int tile_size);
    TransmissionMap dehaze(const RadianceImage& deglowed, int tile_size);

    nets::DeGlowModel& deglow_model() noexcept { return deglow_; }
    nets::DeHazeModel& dehaze_model() noexcept { return dehaze_; }

private:
    nets::DeGlowModel deglow_;
    nets::DeHazeModel dehaze_;
};

RunArtifacts run_pipeline(const RadianceImage& input, Pipeline& pipeline,
                          const RunOptions& options = {});

/// Final stage only: light is re-used, not re-estimated.
RadianceImage recover_from_intermediates(const RadianceImage& deglowed,
                                         const TransmissionMap& transmission,
                                         const AtmosphericLight& light, float t_min);

/// "r g b" with round-trip precision.
std::string format_light(const AtmosphericLight& light);
AtmosphericLight parse_light(const std::string& text);

}  // namespace nightdehaze::pipeline
