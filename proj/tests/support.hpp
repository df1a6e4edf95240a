#pragma once

#include "nightdehaze/image.hpp"
#include "nightdehaze/tensor.hpp"

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

inline nightdehaze::RadianceImage random_image(std::mt19937_64& rng, int h, int w, float lo = 0.0f,
                                               float hi = 1.0f) {
    nightdehaze::RadianceImage img(h, w);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : img.values()) v = d(rng);
    return img;
}

inline nightdehaze::Plane random_plane(std::mt19937_64& rng, int h, int w, float lo = 0.0f,
                                       float hi = 1.0f) {
    nightdehaze::Plane p(h, w);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : p.values()) v = d(rng);
    return p;
}

inline nightdehaze::tensor::Tensor random_tensor(std::mt19937_64& rng, nightdehaze::tensor::Shape s,
                                                 float lo = -1.0f, float hi = 1.0f) {
    nightdehaze::tensor::Tensor t(s);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : t.data()) v = d(rng);
    return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("nightdehaze_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
