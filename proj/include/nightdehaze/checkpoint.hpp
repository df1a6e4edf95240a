#pragma once

// Checkpoint container, all integers little-endian u32:
//   "NCKP" | version | descriptor length | descriptor bytes | parameter count
//   then per parameter: name length | name | rank | dims[rank] | float32 data

#include "nightdehaze/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace nightdehaze::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
    std::string name;
    tensor::Tensor value;
};

struct Checkpoint {
    /// Free-form architecture descriptor ("key=value" tokens separated by spaces).
    std::string descriptor;
    std::vector<NamedTensor> params;
};

std::string encode(const Checkpoint& ckpt);
Checkpoint decode(const std::string& bytes);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Reads only the header descriptor.
std::string peek_descriptor(const std::filesystem::path& path);

}  // namespace nightdehaze::checkpoint
