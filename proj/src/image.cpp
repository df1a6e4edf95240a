#include "nightdehaze/image.hpp"

#include "nightdehaze/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nightdehaze {

namespace {

void check_dims(int height, int width) {
    if (height < 1 || width < 1) {
        throw DimensionError("raster dimensions must be >= 1, got " + std::to_string(height) +
                             "x" + std::to_string(width));
    }
}

// Samples one channel laid out as a contiguous H×W block.
void resample(std::span<const float> src, int sh, int sw, std::span<float> dst, int dh, int dw) {
    const float sy = static_cast<float>(sh) / dh;
    const float sx = static_cast<float>(sw) / dw;
    for (int y = 0; y < dh; ++y) {
        const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(sh - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, sh - 1);
        const float wy = fy - y0;
        for (int x = 0; x < dw; ++x) {
            const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(sw - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, sw - 1);
            const float wx = fx - x0;
            const float top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
            const float bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
            dst[y * dw + x] = top * (1 - wy) + bot * wy;
        }
    }
}

}  // namespace

Plane::Plane(int height, int width, float fill) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width, fill);
}

RadianceImage::RadianceImage(int height, int width, float fill) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(kChannels) * height * width, fill);
}

void RadianceImage::clamp01() {
    for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

Plane resize_bilinear(const Plane& src, int height, int width) {
    Plane out(height, width);
    if (src.same_size(out)) return src;
    resample(src.values(), src.height(), src.width(), out.values(), height, width);
    return out;
}

RadianceImage resize_bilinear(const RadianceImage& src, int height, int width) {
    RadianceImage out(height, width);
    if (src.same_size(out)) return src;
    for (int c = 0; c < RadianceImage::kChannels; ++c) {
        resample(src.channel(c), src.height(), src.width(), out.channel(c), height, width);
    }
    return out;
}

}  // namespace nightdehaze
