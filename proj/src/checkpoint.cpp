#include "nightdehaze/checkpoint.hpp"

#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"

#include <bit>

namespace nightdehaze::checkpoint {

namespace {

constexpr char kMagic[4] = {'N', 'C', 'K', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t len) {
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw LoadError("checkpoint truncated at byte " + std::to_string(pos_));
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void decode_header(Reader& r, std::string& descriptor) {
    if (r.str(4) != std::string(kMagic, 4)) throw LoadError("not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version));
    }
    descriptor = r.str(r.u32());
}

}  // namespace

std::string encode(const Checkpoint& ckpt) {
    std::string out(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.descriptor.size()));
    out += ckpt.descriptor;
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        const auto s = p.value.shape();
        put_u32(out, 4);
        for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : p.value.data()) put_f32(out, v);
    }
    return out;
}

Checkpoint decode(const std::string& bytes) {
    Reader r(bytes);
    Checkpoint ckpt;
    decode_header(r, ckpt.descriptor);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor nt;
        nt.name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > 4) throw LoadError("parameter " + nt.name + " has rank " + std::to_string(rank));
        int dims[4] = {1, 1, 1, 1};
        for (std::uint32_t d = 0; d < rank; ++d) dims[4 - rank + d] = static_cast<int>(r.u32());
        const tensor::Shape shape{dims[0], dims[1], dims[2], dims[3]};
        std::vector<float> values(shape.count());
        for (float& v : values) v = r.f32();
        nt.value = tensor::Tensor(shape, std::move(values));
        ckpt.params.push_back(std::move(nt));
    }
    if (!r.at_end()) throw LoadError("trailing bytes after checkpoint payload");
    return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
    netpbm::write_file(path, encode(ckpt));
}

Checkpoint load(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = netpbm::read_file(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    try {
        return decode(bytes);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    } catch (const DimensionError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::string peek_descriptor(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = netpbm::read_file(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    Reader r(bytes);
    std::string descriptor;
    decode_header(r, descriptor);
    return descriptor;
}

}  // namespace nightdehaze::checkpoint
