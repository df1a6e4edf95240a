#include "nightdehaze/atmospherics.hpp"

#include "nightdehaze/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nightdehaze::atmospherics {

namespace {

void require_same_size(const RadianceImage& img, const Plane& p, const char* what) {
    if (!img.same_size(p)) {
        throw DimensionError(std::string(what) + ": image is " + std::to_string(img.height()) +
                             "x" + std::to_string(img.width()) + " but map is " +
                             std::to_string(p.height()) + "x" + std::to_string(p.width()));
    }
}

float in_unit(float v, const char* what) {
    if (!(v >= 0.0f && v <= 1.0f)) {
        throw ParameterError(std::string(what) + " must lie in [0,1], got " + std::to_string(v));
    }
    return v;
}

}  // namespace

AtmosphericLight::AtmosphericLight(float r, float g, float b)
    : rgb{in_unit(r, "atmospheric light"), in_unit(g, "atmospheric light"),
          in_unit(b, "atmospheric light")} {}

void ScatteringParams::validate() const {
    if (!(beta > 0.0f)) throw ParameterError("beta must be > 0");
    if (!(q > 0.0f && q < 1.0f)) throw ParameterError("q must lie in (0,1)");
    if (!(t_min > 0.0f && t_min < 1.0f)) throw ParameterError("t_min must lie in (0,1)");
}

RadianceImage GlowField::streak_sum() const {
    RadianceImage sum(mask.height(), mask.width());
    for (const auto& layer : streaks) {
        auto dst = sum.values();
        auto src = layer.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    return sum;
}

GlowField GlowField::empty(int height, int width) {
    GlowField f;
    f.mask = GlowMask(height, width);
    return f;
}

TransmissionMap transmission_from_depth(const DepthMap& depth, float beta) {
    if (!(beta > 0.0f) || !std::isfinite(beta)) {
        throw ParameterError("beta must be a finite positive number, got " + std::to_string(beta));
    }
    TransmissionMap t(depth.height(), depth.width());
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const float d = depth[i];
        if (!std::isfinite(d)) {
            throw DataError("depth value at index " + std::to_string(i) + " is not finite");
        }
        t[i] = std::exp(-beta * d);
    }
    return t;
}

RadianceImage compose_haze(const RadianceImage& reflection, const TransmissionMap& t,
                           const AtmosphericLight& light) {
    require_same_size(reflection, t, "compose_haze");
    RadianceImage out(reflection.height(), reflection.width());
    for (int c = 0; c < 3; ++c) {
        auto src = reflection.channel(c);
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            const double tt = t[i];
            dst[i] = static_cast<float>(src[i] * tt + light[c] * (1.0 - tt));
        }
    }
    out.clamp01();
    return out;
}

RadianceImage compose_glow(const RadianceImage& haze, const GlowField& glow) {
    if (glow.streaks.size() != glow.sources.size()) {
        throw DimensionError("glow field has " + std::to_string(glow.sources.size()) +
                             " sources but " + std::to_string(glow.streaks.size()) + " layers");
    }
    RadianceImage out = haze;
    if (glow.sources.empty()) return out;
    require_same_size(haze, glow.mask, "compose_glow");
    for (const auto& layer : glow.streaks) {
        if (!layer.same_size(haze)) throw DimensionError("compose_glow: streak layer size mismatch");
    }
    for (int c = 0; c < 3; ++c) {
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (glow.mask[i] == 0.0f) continue;
            float s = 0.0f;
            for (const auto& layer : glow.streaks) s += layer.channel(c)[i];
            dst[i] += glow.mask[i] * s;
        }
    }
    out.clamp01();
    return out;
}

std::size_t light_candidate_count(std::size_t pixels) {
    return std::max<std::size_t>(1, pixels / 1000);
}

AtmosphericLight estimate_atmospheric_light(const TransmissionMap& t, const RadianceImage& haze) {
    if (t.empty() || haze.empty()) throw DimensionError("estimate_atmospheric_light: empty image");
    require_same_size(haze, t, "estimate_atmospheric_light");

    const std::size_t n = t.size();
    const std::size_t k = light_candidate_count(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Stable ordering by (t, index) makes the candidate set unique under ties.
    auto darker = [&](std::size_t a, std::size_t b) {
        return t[a] < t[b] || (t[a] == t[b] && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      darker);

    std::size_t best = order[0];
    float best_intensity = -1.0f;
    for (std::size_t j = 0; j < k; ++j) {
        const auto px = haze.pixel(order[j]);
        const float intensity = (px[0] + px[1] + px[2]) / 3.0f;
        if (intensity > best_intensity || (intensity == best_intensity && order[j] < best)) {
            best_intensity = intensity;
            best = order[j];
        }
    }
    const auto px = haze.pixel(best);
    AtmosphericLight light;
    for (int c = 0; c < 3; ++c) light.rgb[c] = std::clamp(px[c], 0.0f, 1.0f);
    return light;
}

RadianceImage recover_radiance(const RadianceImage& haze, const TransmissionMap& t,
                               const AtmosphericLight& light, float t_min) {
    if (!(t_min > 0.0f && t_min < 1.0f)) {
        throw ParameterError("t_min must lie in (0,1), got " + std::to_string(t_min));
    }
    require_same_size(haze, t, "recover_radiance");
    RadianceImage out(haze.height(), haze.width());
    for (int c = 0; c < 3; ++c) {
        auto src = haze.channel(c);
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            // Double intermediates keep the compose/recover round trip under 1e-6 at t = t_min.
            const double tt = std::max(t[i], t_min);
            dst[i] = static_cast<float>((src[i] - light[c] * (1.0 - tt)) / tt);
        }
    }
    out.clamp01();
    return out;
}

}  // namespace nightdehaze::atmospherics
