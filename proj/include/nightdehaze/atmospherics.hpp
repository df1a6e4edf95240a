#pragma once

// Glow-aware scattering model:
//   J(x) = R(x) t(x) + L (1 - t(x))
//   I(x) = J(x) + G(x) * sum_k S_k(x)
// and its inversion for the scene radiance R.

#include "nightdehaze/image.hpp"

#include <array>
#include <vector>

namespace nightdehaze::atmospherics {

/// Global atmospheric light, one value per RGB channel in [0,1].
struct AtmosphericLight {
    std::array<float, 3> rgb{0.0f, 0.0f, 0.0f};

    AtmosphericLight() = default;
    AtmosphericLight(float r, float g, float b);
    static AtmosphericLight gray(float v) { return {v, v, v}; }

    float operator[](int c) const { return rgb[c]; }
    friend bool operator==(const AtmosphericLight&, const AtmosphericLight&) = default;
};

struct ScatteringParams {
    float beta = 1.0f;
    float q = 0.5f;
    float t_min = 0.05f;

    void validate() const;
};

inline constexpr float kDefaultTransmissionFloor = 0.05f;

struct GlowSource {
    int x = 0;
    int y = 0;
    std::array<float, 3> peak{1.0f, 1.0f, 1.0f};
    float q = 0.5f;
    float radius = 1.0f;
};

/// Per-source streak layers plus the binary region mask they are gated by.
struct GlowField {
    std::vector<GlowSource> sources;
    std::vector<RadianceImage> streaks;
    GlowMask mask;

    std::size_t source_count() const noexcept { return sources.size(); }
    /// Sum of all streak layers (zero image when there are no sources).
    RadianceImage streak_sum() const;
    /// Empty field over an H×W frame: no sources, all-zero mask.
    static GlowField empty(int height, int width);
};

TransmissionMap transmission_from_depth(const DepthMap& depth, float beta);

RadianceImage compose_haze(const RadianceImage& reflection, const TransmissionMap& t,
                           const AtmosphericLight& light);

RadianceImage compose_glow(const RadianceImage& haze, const GlowField& glow);

/// Number of darkest-transmission pixels considered: max(1, floor(0.001 * pixels)).
std::size_t light_candidate_count(std::size_t pixels);

/// Among the darkest 0.1% of `t`, returns the RGB of the brightest pixel of
/// `haze` (brightness = channel mean, ties to the lowest linear index).
AtmosphericLight estimate_atmospheric_light(const TransmissionMap& t, const RadianceImage& haze);

RadianceImage recover_radiance(const RadianceImage& haze, const TransmissionMap& t,
                               const AtmosphericLight& light,
                               float t_min = kDefaultTransmissionFloor);

}  // namespace nightdehaze::atmospherics
