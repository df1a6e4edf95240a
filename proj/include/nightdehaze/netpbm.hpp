#pragma once

// Binary PPM (P6, maxval 255) and PGM (P5, maxval 65535) codecs.
// Encoding quantizes [0,1] floats with round-to-nearest; decoding divides by
// maxval, so decode(encode(x)) is the nearest representable level and
// encode(decode(bytes)) == bytes for files written here.

#include "nightdehaze/image.hpp"

#include <filesystem>
#include <string>

namespace nightdehaze::netpbm {

std::string encode_ppm(const RadianceImage& img);
std::string encode_pgm16(const Plane& plane);

RadianceImage decode_ppm(const std::string& bytes);
/// Accepts 8-bit and 16-bit PGM.
Plane decode_pgm(const std::string& bytes);

void write_ppm(const std::filesystem::path& path, const RadianceImage& img);
void write_pgm16(const std::filesystem::path& path, const Plane& plane);
RadianceImage read_ppm(const std::filesystem::path& path);
Plane read_pgm(const std::filesystem::path& path);

/// Snap values onto the 8-bit / 16-bit grids used on disk.
RadianceImage quantize8(const RadianceImage& img);
Plane quantize16(const Plane& plane);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace nightdehaze::netpbm
