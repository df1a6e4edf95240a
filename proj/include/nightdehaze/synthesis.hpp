#pragma once

// Training-data synthesis: clean image + depth -> (I, J, t, glow mask, streaks)
// with sampled scattering parameters, procedural scene generation for desk-scale
// runs, and the on-disk dataset manifest.

#include "nightdehaze/atmospherics.hpp"
#include "nightdehaze/image.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nightdehaze::synthesis {

using atmospherics::AtmosphericLight;
using atmospherics::GlowField;
using atmospherics::GlowSource;

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

struct IntRange {
    int lo = 0;
    int hi = 0;
};

struct SynthesisConfig {
    Range beta{0.5, 1.5};
    int beta_samples = 3;
    Range q{0.2, 0.9};
    int q_samples = 3;
    Range light{0.5, 1.0};
    int width = 320;
    int height = 240;
    bool use_taylor_glow = false;
    IntRange sources{1, 5};
    Range glow_radius{4.0, 16.0};
    float mask_threshold = 0.02f;
    std::uint64_t seed = 0;
    /// Worker threads for build_dataset; output does not depend on it.
    int threads = 1;

    void validate() const;
};

struct SceneParams {
    float beta = 1.0f;
    float q = 0.5f;
    AtmosphericLight light;
};

SceneParams sample_scene_params(std::mt19937_64& rng, const SynthesisConfig& config);

/// exp(-q d), or its first-order expansion max(0, 1 - q d).
float glow_attenuation(float q, float d, bool use_taylor);

/// Radial falloff per source: streak_k(x) = peak_k * attenuation(q_k, |x - p_k| / radius_k);
/// mask = 1 where the channel-mean of the summed streaks exceeds the threshold.
GlowField render_glow_field(int height, int width, std::span<const GlowSource> sources,
                            const SynthesisConfig& config);

/// Random light sources (count, position, warm/white-biased colour, radius).
std::vector<GlowSource> sample_glow_sources(std::mt19937_64& rng, int height, int width, float q,
                                            const SynthesisConfig& config);

struct Example {
    RadianceImage hazy;  // I
    RadianceImage haze;  // J
    TransmissionMap transmission;
    GlowField glow;
};

Example synthesize_example(const RadianceImage& clean, const DepthMap& depth,
                           const SceneParams& params, std::span<const GlowSource> sources,
                           const SynthesisConfig& config);

struct ScenePair {
    std::string id;
    RadianceImage clean;
    DepthMap depth;
};

/// Layered procedural scene: textured objects over a sky/ground backdrop, with a
/// depth map that follows object boundaries.
ScenePair procedural_scene(std::mt19937_64& rng, int height, int width, std::string id);
std::vector<ScenePair> procedural_pairs(int count, int height, int width, std::uint64_t seed);

/// Pairs `<stem>.ppm` in `clean_dir` with `<stem>.pgm` in `depth_dir`.
std::vector<ScenePair> load_pairs(const std::filesystem::path& clean_dir,
                                  const std::filesystem::path& depth_dir);

struct DatasetRecord {
    std::string id;
    std::string clean;   // R (resized)
    std::string hazy;    // I
    std::string haze;    // J
    std::string transmission;
    std::string mask;
    std::string streak;  // sum of streak layers
    float beta = 0.0f;
    float q = 0.0f;
    AtmosphericLight light;
    std::vector<GlowSource> sources;
};

std::string format_record(const DatasetRecord& r);
DatasetRecord parse_record(const std::string& line);

inline constexpr const char* kManifestName = "manifest.txt";

/// Splitmix-derived seed for an independent stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// Synthesizes |pairs| × beta_samples × q_samples records into `out_dir`
/// and writes `out_dir/manifest.txt`. Returns the records in manifest order.
std::vector<DatasetRecord> build_dataset(std::span<const ScenePair> pairs,
                                         const SynthesisConfig& config,
                                         const std::filesystem::path& out_dir);

/// In-memory variant: records plus synthesized layers, no files written.
struct SynthesizedRecord {
    DatasetRecord record;
    RadianceImage clean;
    Example example;
};
std::vector<SynthesizedRecord> synthesize_dataset(std::span<const ScenePair> pairs,
                                                  const SynthesisConfig& config);

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& manifest);

struct LoadedRecord {
    DatasetRecord record;
    RadianceImage clean;
    RadianceImage hazy;
    RadianceImage haze;
    TransmissionMap transmission;
    GlowMask mask;
    RadianceImage streak;
};
LoadedRecord load_record(const std::filesystem::path& dataset_dir, const DatasetRecord& record);

}  // namespace nightdehaze::synthesis
