#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace tvrd {

// Minimal SHA-256 (FIPS 180-4), enough for content hashes in file headers.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::string hex_digest();  // finalizes; call once

    static std::string hex(std::string_view data) {
        Sha256 h;
        h.update(data);
        return h.hex_digest();
    }

private:
    void process_block(const uint8_t* p);

    uint32_t h_[8];
    uint64_t total_len_ = 0;
    uint8_t buf_[64];
    size_t buf_len_ = 0;
};

}  // namespace tvrd
