#include "memvae/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "memvae/errors.hpp"

namespace memvae {

namespace {

constexpr char kMagic[] = "MEMVAE01";
constexpr std::size_t kMagicLen = 8;

void put_u32(std::ostream& f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(f, bits);
}

bool get_u32(std::istream& f, std::uint32_t& v) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

bool get_u64(std::istream& f, std::uint64_t& v) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    f.write(kMagic, kMagicLen);
    for (const auto& [name, t] : params) {
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.shape().size()));
        for (std::size_t d : t.shape()) put_u64(f, d);
        for (double v : t.values()) put_f64(f, v);
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

std::map<std::string, CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[kMagicLen];
    if (!f.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw ParseError("checkpoint: bad magic, expected MEMVAE01", 0);

    std::map<std::string, CheckpointEntry> out;
    while (true) {
        std::uint32_t name_len;
        if (!get_u32(f, name_len)) break;  // clean EOF
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len))
            throw ParseError("checkpoint: truncated name",
                             static_cast<std::size_t>(f.tellg()));
        std::uint32_t rank;
        if (!get_u32(f, rank))
            throw ParseError("checkpoint: truncated rank",
                             static_cast<std::size_t>(f.tellg()));
        CheckpointEntry entry;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint64_t dim;
            if (!get_u64(f, dim))
                throw ParseError("checkpoint: truncated dims",
                                 static_cast<std::size_t>(f.tellg()));
            entry.shape.push_back(dim);
            numel *= dim;
        }
        entry.values.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            std::uint64_t bits;
            if (!get_u64(f, bits))
                throw ParseError("checkpoint: truncated payload for " + name,
                                 static_cast<std::size_t>(f.tellg()));
            std::memcpy(&entry.values[i], &bits, 8);
        }
        if (out.count(name))
            throw ParseError("checkpoint: duplicate parameter " + name, 0);
        out[name] = std::move(entry);
    }
    return out;
}

void load_checkpoint_into(const std::filesystem::path& path, ParamList& params) {
    auto stored = load_checkpoint(path);
    for (auto& [name, t] : params) {
        auto it = stored.find(name);
        if (it == stored.end())
            throw std::runtime_error("checkpoint: missing parameter " + name);
        if (it->second.shape != t.shape())
            throw ShapeError("checkpoint: shape mismatch for " + name + ", stored " +
                             shape_str(it->second.shape) + " vs model " +
                             shape_str(t.shape()));
        std::copy(it->second.values.begin(), it->second.values.end(), t.data());
    }
}

}  // namespace memvae
