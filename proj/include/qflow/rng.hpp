#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace qflow {

// Philox4x32 with 10 rounds (Salmon et al. counter-based family).
// Pure function of (counter, key); no state.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

inline constexpr const char* kRngName = "philox4x32-10";
inline constexpr int kRngVersion = 1;

// A stream is (seed, stream id); the block counter walks the low 64 bits.
// Satisfies UniformRandomBitGenerator so it can feed <random> distributions.
class RandomStream {
public:
    using result_type = std::uint32_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream_id);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // Uniform on the open interval (0,1), 53-bit resolution.
    double uniform();
    // Box-Muller; the second variate of each pair is cached.
    double normal();

    // Independent child stream: same seed, derived stream id.
    RandomStream split(std::uint64_t child) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace qflow
