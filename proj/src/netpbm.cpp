#include "nightdehaze/netpbm.hpp"

#include "nightdehaze/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nightdehaze::netpbm {

namespace {

struct Header {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t offset = 0;
};

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const unsigned char ch = bytes[pos];
        if (ch == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(ch)) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        tok.push_back(bytes[pos++]);
    }
    return tok;
}

int parse_int(const std::string& tok, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(std::string("netpbm: bad ") + what + " '" + tok + "'");
    }
}

Header parse_header(const std::string& bytes, const char* expected_magic) {
    Header h;
    std::size_t pos = 0;
    h.magic = next_token(bytes, pos);
    if (h.magic != expected_magic) {
        throw DataError(std::string("netpbm: expected ") + expected_magic + " but found '" +
                        h.magic + "'");
    }
    h.width = parse_int(next_token(bytes, pos), "width");
    h.height = parse_int(next_token(bytes, pos), "height");
    h.maxval = parse_int(next_token(bytes, pos), "maxval");
    if (h.maxval > 65535) throw DataError("netpbm: maxval above 65535");
    if (pos >= bytes.size()) throw DataError("netpbm: missing raster");
    h.offset = pos + 1;  // exactly one whitespace byte after maxval
    return h;
}

std::uint8_t to8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::uint16_t to16(float v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
}

float sample(const std::string& bytes, std::size_t& pos, int maxval) {
    unsigned v;
    if (maxval < 256) {
        v = static_cast<unsigned char>(bytes[pos++]);
    } else {
        v = (static_cast<unsigned>(static_cast<unsigned char>(bytes[pos])) << 8) |
            static_cast<unsigned char>(bytes[pos + 1]);
        pos += 2;
    }
    if (static_cast<int>(v) > maxval) throw DataError("netpbm: sample exceeds maxval");
    return static_cast<float>(v) / static_cast<float>(maxval);
}

}  // namespace

std::string encode_ppm(const RadianceImage& img) {
    std::ostringstream head;
    head << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    std::string out = head.str();
    out.reserve(out.size() + img.size());
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        const auto px = img.pixel(i);
        for (float v : px) out.push_back(static_cast<char>(to8(v)));
    }
    return out;
}

std::string encode_pgm16(const Plane& plane) {
    std::ostringstream head;
    head << "P5\n" << plane.width() << ' ' << plane.height() << "\n65535\n";
    std::string out = head.str();
    out.reserve(out.size() + 2 * plane.size());
    for (float v : plane.values()) {
        const std::uint16_t s = to16(v);
        out.push_back(static_cast<char>(s >> 8));
        out.push_back(static_cast<char>(s & 0xff));
    }
    return out;
}

RadianceImage decode_ppm(const std::string& bytes) {
    const Header h = parse_header(bytes, "P6");
    const std::size_t bps = h.maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3 * bps;
    if (bytes.size() < h.offset + need) throw DataError("netpbm: truncated PPM raster");
    RadianceImage img(h.height, h.width);
    std::size_t pos = h.offset;
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        for (int c = 0; c < 3; ++c) img.channel(c)[i] = sample(bytes, pos, h.maxval);
    }
    return img;
}

Plane decode_pgm(const std::string& bytes) {
    const Header h = parse_header(bytes, "P5");
    const std::size_t bps = h.maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * bps;
    if (bytes.size() < h.offset + need) throw DataError("netpbm: truncated PGM raster");
    Plane p(h.height, h.width);
    std::size_t pos = h.offset;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sample(bytes, pos, h.maxval);
    return p;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

void write_ppm(const std::filesystem::path& path, const RadianceImage& img) {
    write_file(path, encode_ppm(img));
}

void write_pgm16(const std::filesystem::path& path, const Plane& plane) {
    write_file(path, encode_pgm16(plane));
}

RadianceImage read_ppm(const std::filesystem::path& path) {
    try {
        return decode_ppm(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Plane read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

RadianceImage quantize8(const RadianceImage& img) {
    RadianceImage out = img;
    for (float& v : out.values()) v = static_cast<float>(to8(v)) / 255.0f;
    return out;
}

Plane quantize16(const Plane& plane) {
    Plane out = plane;
    for (float& v : out.values()) v = static_cast<float>(to16(v)) / 65535.0f;
    return out;
}

}  // namespace nightdehaze::netpbm
