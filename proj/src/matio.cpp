#include "tvrd/matio.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace tvrd {

namespace {
constexpr char kMagic[8] = {'T', 'V', 'R', 'D', 'M', 'A', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}
}  // namespace

void write_matrix(const std::string& path, const MatrixF& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("matio: cannot open for write: " + path);
    os.write(kMagic, 8);
    put_u32(os, uint32_t(m.rows()));
    put_u32(os, uint32_t(m.cols()));
    // float payload is written verbatim; this project only targets
    // little-endian hosts
    os.write(reinterpret_cast<const char*>(m.data()),
             std::streamsize(sizeof(float) * size_t(m.size())));
    if (!os) throw std::runtime_error("matio: write failed: " + path);
}

MatrixF read_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("matio: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("matio: bad magic in " + path);
    const uint32_t rows = get_u32(is);
    const uint32_t cols = get_u32(is);
    MatrixF m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(float) * size_t(m.size())));
    if (!is) throw std::runtime_error("matio: truncated payload in " + path);
    return m;
}

}  // namespace tvrd
