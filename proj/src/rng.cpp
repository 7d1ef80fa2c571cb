#include "quasar/rng.hpp"

#include <cmath>

namespace quasar {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

}  // namespace

std::array<uint32_t, 4> PhiloxRng::block(const std::array<uint32_t, 4>& counter,
                                         const std::array<uint32_t, 2>& key) {
    uint32_t x0 = counter[0], x1 = counter[1], x2 = counter[2], x3 = counter[3];
    uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, x0, hi0, lo0);
        mulhilo(kPhiloxM1, x2, hi1, lo1);
        uint32_t y0 = hi1 ^ x1 ^ k0;
        uint32_t y1 = lo1;
        uint32_t y2 = hi0 ^ x3 ^ k1;
        uint32_t y3 = lo0;
        x0 = y0;
        x1 = y1;
        x2 = y2;
        x3 = y3;
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return {x0, x1, x2, x3};
}

PhiloxRng::PhiloxRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

void PhiloxRng::refill() {
    std::array<uint32_t, 4> counter = {
        static_cast<uint32_t>(block_index_),
        static_cast<uint32_t>(block_index_ >> 32),
        static_cast<uint32_t>(stream_),
        static_cast<uint32_t>(stream_ >> 32),
    };
    std::array<uint32_t, 2> key = {
        static_cast<uint32_t>(seed_),
        static_cast<uint32_t>(seed_ >> 32),
    };
    buffer_ = block(counter, key);
    buffer_pos_ = 0;
    ++block_index_;
}

uint32_t PhiloxRng::next_u32() {
    if (buffer_pos_ >= 4) refill();
    return buffer_[buffer_pos_++];
}

uint64_t PhiloxRng::next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double PhiloxRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double PhiloxRng::next_gaussian() {
    if (have_spare_gaussian_) {
        have_spare_gaussian_ = false;
        return spare_gaussian_;
    }
    // u1 in (0, 1] so the log is finite
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_gaussian_ = radius * std::sin(angle);
    have_spare_gaussian_ = true;
    return radius * std::cos(angle);
}

PhiloxRng PhiloxRng::split(uint64_t substream) const {
    // mix so that nested splits of nearby ids stay far apart (splitmix64)
    uint64_t z = stream_ + 0x9E3779B97F4A7C15ull * (substream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z = z ^ (z >> 31);
    return PhiloxRng(seed_, z);
}

}  // namespace quasar
