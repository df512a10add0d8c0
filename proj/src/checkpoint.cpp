#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tvrd/model.hpp"

namespace tvrd::model {

namespace {

constexpr char kMagic[8] = {'T', 'V', 'R', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
    uint8_t b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& is) {
    const uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& manifest_json,
                     const std::vector<CheckpointTensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u64(os, manifest_json.size());
    os.write(manifest_json.data(), std::streamsize(manifest_json.size()));
    put_u32(os, uint32_t(tensors.size()));
    for (const auto& t : tensors) {
        put_string(os, t.name);
        put_string(os, "f32");
        put_u32(os, uint32_t(t.value.rows()));
        put_u32(os, uint32_t(t.value.cols()));
        os.write(reinterpret_cast<const char*>(t.value.data()),
                 std::streamsize(sizeof(float) * size_t(t.value.size())));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed " + path);
}

std::pair<std::string, std::vector<CheckpointTensor>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    const uint64_t mlen = get_u64(is);
    std::string manifest(mlen, '\0');
    is.read(manifest.data(), std::streamsize(mlen));
    const uint32_t count = get_u32(is);
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = get_string(is);
        const std::string dtype = get_string(is);
        if (dtype != "f32") throw std::runtime_error("checkpoint: unsupported dtype " + dtype);
        const uint32_t rows = get_u32(is);
        const uint32_t cols = get_u32(is);
        t.value.resize(rows, cols);
        is.read(reinterpret_cast<char*>(t.value.data()),
                std::streamsize(sizeof(float) * size_t(t.value.size())));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
        tensors.push_back(std::move(t));
    }
    return {std::move(manifest), std::move(tensors)};
}

}  // namespace tvrd::model
