#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace nightdehaze {

/// Single-channel H×W float raster, row-major.
class Plane {
public:
    Plane() = default;
    Plane(int height, int width, float fill = 0.0f);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int y, int x) { return data_[index(y, x)]; }
    float at(int y, int x) const { return data_[index(y, x)]; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    bool same_size(const Plane& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    std::size_t index(int y, int x) const noexcept {
        return static_cast<std::size_t>(y) * width_ + x;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Normalized scene distance d(x) in [0,1].
struct DepthMap : Plane {
    using Plane::Plane;
    DepthMap() = default;
    explicit DepthMap(Plane p) : Plane(std::move(p)) {}
};

/// Fraction of unscattered light t(x) in (0,1].
struct TransmissionMap : Plane {
    using Plane::Plane;
    TransmissionMap() = default;
    explicit TransmissionMap(Plane p) : Plane(std::move(p)) {}
};

/// Binary glow-region indicator (1 = glow).
struct GlowMask : Plane {
    using Plane::Plane;
    GlowMask() = default;
    explicit GlowMask(Plane p) : Plane(std::move(p)) {}
};

/// Planar RGB raster (channel-major), values nominally in [0,1].
class RadianceImage {
public:
    static constexpr int kChannels = 3;

    RadianceImage() = default;
    RadianceImage(int height, int width, float fill = 0.0f);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<float> channel(int c) noexcept {
        return std::span<float>(data_).subspan(c * pixels(), pixels());
    }
    std::span<const float> channel(int c) const noexcept {
        return std::span<const float>(data_).subspan(c * pixels(), pixels());
    }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    std::array<float, 3> pixel(std::size_t linear) const {
        return {data_[linear], data_[pixels() + linear], data_[2 * pixels() + linear]};
    }

    bool same_size(const Plane& p) const noexcept {
        return height_ == p.height() && width_ == p.width();
    }
    bool same_size(const RadianceImage& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    void clamp01();

    friend bool operator==(const RadianceImage&, const RadianceImage&) = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Bilinear resampling with half-pixel centers and edge clamping.
Plane resize_bilinear(const Plane& src, int height, int width);
RadianceImage resize_bilinear(const RadianceImage& src, int height, int width);

}  // namespace nightdehaze
