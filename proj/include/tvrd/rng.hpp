#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tvrd::rng {

// All randomness in the project flows through this header so that outputs are
// bit-identical across standard libraries and platforms. std::shuffle and the
// std distributions are implementation-defined; these are not.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Mix a seed with a string tag to derive an independent stream key.
inline uint64_t mix(uint64_t seed, std::string_view tag) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + fnv1a64(tag));
    splitmix64(s);
    return splitmix64(s);
}

inline uint64_t mix(uint64_t seed, uint64_t salt) {
    uint64_t s = seed ^ (salt * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull);
    splitmix64(s);
    return splitmix64(s);
}

// xoshiro256++ with a splitmix64-expanded seed.
class Stream {
public:
    explicit Stream(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        spare_valid_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // [0, n)
    uint64_t uniform_int(uint64_t n) { return n ? next_u64() % n : 0; }

    // standard normal via Box-Muller; second value of each pair is cached
    double normal() {
        if (spare_valid_) {
            spare_valid_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        spare_valid_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    Stream fork(std::string_view tag) { return Stream(mix(next_u64(), tag)); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool spare_valid_ = false;
};

}  // namespace tvrd::rng
