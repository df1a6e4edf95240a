#include "nightdehaze/pipeline.hpp"

#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"
#include "nightdehaze/training.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

namespace nightdehaze::pipeline {

using tensor::Shape;
using tensor::Tensor;

namespace {

// Entry (2) + widest dilated path (3 layers at DF 3) + fusion (1).
constexpr int kBlockRadius = 2 + 3 * 3 + 1;

using TensorFn = std::function<Tensor(const Tensor&)>;

// Runs `fn` over tile cores of `tile` pixels, each padded by `margin` pixels of
// real context (clipped at the frame), and stitches the cores back together.
Tensor tiled(const Tensor& in, int out_channels, int tile, int margin, const TensorFn& fn) {
    const Shape s = in.shape();
    if (tile <= 0 || (s.h <= tile && s.w <= tile)) return fn(in);
    Tensor out(Shape{s.n, out_channels, s.h, s.w});
    for (int y0 = 0; y0 < s.h; y0 += tile) {
        for (int x0 = 0; x0 < s.w; x0 += tile) {
            const int y1 = std::min(s.h, y0 + tile), x1 = std::min(s.w, x0 + tile);
            const int ey0 = std::max(0, y0 - margin), ex0 = std::max(0, x0 - margin);
            const int ey1 = std::min(s.h, y1 + margin), ex1 = std::min(s.w, x1 + margin);
            Tensor crop(Shape{s.n, s.c, ey1 - ey0, ex1 - ex0});
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c)
                    for (int y = ey0; y < ey1; ++y)
                        for (int x = ex0; x < ex1; ++x) crop.at(n, c, y - ey0, x - ex0) = in.at(n, c, y, x);
            const Tensor res = fn(crop);
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < out_channels; ++c)
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) out.at(n, c, y, x) = res.at(n, c, y - ey0, x - ex0);
        }
    }
    return out;
}

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

int deglow_receptive_radius(int tau) {
    // Per recurrence: block, glow head, two streak convs, residual conv.
    return tau * (kBlockRadius + 1 + 2 + 1);
}

int dehaze_receptive_radius() { return kBlockRadius + 1; }

Pipeline::Pipeline(nets::DeGlowModel deglow, nets::DeHazeModel dehaze)
    : deglow_(std::move(deglow)), dehaze_(std::move(dehaze)) {}

Pipeline Pipeline::load(const std::filesystem::path& deglow_checkpoint,
                        const std::filesystem::path& dehaze_checkpoint) {
    return Pipeline(nets::DeGlowModel::from_checkpoint(checkpoint::load(deglow_checkpoint)),
                    nets::DeHazeModel::from_checkpoint(checkpoint::load(dehaze_checkpoint)));
}

RadianceImage Pipeline::deglow(const RadianceImage& input, int tau, int tile_size) {
    if (tau <= 0) tau = deglow_.config().recurrences;
    const Tensor out = tiled(training::to_tensor(input), 3, tile_size, deglow_receptive_radius(tau),
                             [&](const Tensor& t) { return nets::deglow_unroll(t, deglow_, tau).output; });
    RadianceImage img = training::to_image(out);
    img.clamp01();
    return img;
}

TransmissionMap Pipeline::dehaze(const RadianceImage& deglowed, int tile_size) {
    const Tensor out = tiled(training::to_tensor(deglowed), 1, tile_size, dehaze_receptive_radius(),
                             [&](const Tensor& t) { return nets::dehaze_forward(t, dehaze_); });
    return TransmissionMap(training::to_plane(out));
}

RunArtifacts Pipeline::run(const RadianceImage& input, const RunOptions& options) {
    if (!(options.t_min > 0.0f && options.t_min < 1.0f)) throw ParameterError("t_min must lie in (0,1)");
    RunArtifacts a;
    Stopwatch clock;

    a.deglowed = deglow(input, options.tau, options.tile_size);
    if (options.quantize_intermediates) a.deglowed = netpbm::quantize8(a.deglowed);
    a.timings.push_back({kStageDeGlow, clock.lap()});

    if (options.transmission_override) {
        if (!input.same_size(*options.transmission_override)) {
            throw DimensionError("transmission override does not match the input size");
        }
        a.transmission = *options.transmission_override;
    } else {
        a.transmission = dehaze(a.deglowed, options.tile_size);
        for (float& v : a.transmission.values()) v = std::max(v, options.t_min);
        if (options.quantize_intermediates) a.transmission = TransmissionMap(netpbm::quantize16(a.transmission));
    }
    a.timings.push_back({kStageDeHaze, clock.lap()});

    a.light = options.light_override ? *options.light_override
                                     : atmospherics::estimate_atmospheric_light(a.transmission, a.deglowed);
    a.timings.push_back({kStageLight, clock.lap()});

    a.output = recover_from_intermediates(a.deglowed, a.transmission, a.light, options.t_min);
    a.timings.push_back({kStageRecovery, clock.lap()});
    return a;
}

RunArtifacts run_pipeline(const RadianceImage& input, Pipeline& pipeline, const RunOptions& options) {
    return pipeline.run(input, options);
}

RadianceImage recover_from_intermediates(const RadianceImage& deglowed,
                                         const TransmissionMap& transmission,
                                         const AtmosphericLight& light, float t_min) {
    return atmospherics::recover_radiance(deglowed, transmission, light, t_min);
}

std::string format_light(const AtmosphericLight& light) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", static_cast<double>(light[0]),
                  static_cast<double>(light[1]), static_cast<double>(light[2]));
    return buf;
}

AtmosphericLight parse_light(const std::string& text) {
    std::istringstream ss(text);
    float r, g, b;
    if (!(ss >> r >> g >> b)) throw DataError("cannot parse atmospheric light from '" + text + "'");
    return AtmosphericLight(r, g, b);
}

}  // namespace nightdehaze::pipeline
