#pragma once

#include <array>
#include <cstdint>

namespace quasar {

// Counter-based generator (philox4x32-10). Every random draw in the engine
// goes through this so runs are reproducible across platforms and build
// flags, and independent streams can be split off for parallel work without
// coordination.
class PhiloxRng {
  public:
    explicit PhiloxRng(uint64_t seed, uint64_t stream = 0);

    uint32_t next_u32();
    uint64_t next_u64();

    // uniform in [0, 1) with 53 random bits
    double next_double();

    // standard normal via box-muller (second value cached)
    double next_gaussian();

    // generator over the same key but a disjoint counter subspace;
    // streams never overlap regardless of how much either side draws
    PhiloxRng split(uint64_t substream) const;

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    // raw block function, exposed for known-answer tests
    static std::array<uint32_t, 4> block(const std::array<uint32_t, 4>& counter,
                                         const std::array<uint32_t, 2>& key);

  private:
    void refill();

    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    uint64_t block_index_ = 0;
    std::array<uint32_t, 4> buffer_{};
    int buffer_pos_ = 4;  // empty
    bool have_spare_gaussian_ = false;
    double spare_gaussian_ = 0.0;
};

}  // namespace quasar
