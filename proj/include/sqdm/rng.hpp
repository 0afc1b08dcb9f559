#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace sqdm {

// Counter-based random stream (Philox4x32-10). A stream is identified by
// (seed, stream id); streams with distinct ids never overlap, and the
// position within a stream can be saved and restored in O(1), which is what
// makes mid-training checkpoint resume bit-exact.
//
// Draw accounting (the unit is one 64-bit output):
//   next_u64        -> 1
//   uniform         -> 1
//   uniform_below   -> 1
//   normal          -> 2   (Box-Muller, no caching)
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), pos_(0) {}

    std::uint64_t next_u64() {
        const std::uint64_t block = pos_ >> 1;
        const unsigned lane = static_cast<unsigned>(pos_ & 1);
        ++pos_;
        if (block != cached_block_ || !cache_valid_) {
            generate_block(block);
        }
        return out_[lane];
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Multiply-shift map; bias is O(n / 2^64).
    std::uint64_t uniform_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (cosine branch). Consumes exactly two
    // 64-bit outputs; the sine mate is discarded so the draw count per
    // normal is fixed.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    void fill_normal(std::span<double> out) {
        for (double& x : out) x = normal();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t position() const { return pos_; }
    void set_position(std::uint64_t pos) {
        pos_ = pos;
        cache_valid_ = false;
    }

private:
    void generate_block(std::uint64_t block) {
        std::uint32_t c0 = static_cast<std::uint32_t>(block);
        std::uint32_t c1 = static_cast<std::uint32_t>(block >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
        std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
        std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
        std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = 0xD2511F53ULL * c0;
            const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            c0 = n0;
            c1 = lo1;
            c2 = n2;
            c3 = lo0;
            k0 += 0x9E3779B9U;
            k1 += 0xBB67AE85U;
        }
        out_[0] = (static_cast<std::uint64_t>(c0) << 32) | c1;
        out_[1] = (static_cast<std::uint64_t>(c2) << 32) | c3;
        cached_block_ = block;
        cache_valid_ = true;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t pos_;
    std::uint64_t cached_block_ = 0;
    std::array<std::uint64_t, 2> out_{};
    bool cache_valid_ = false;
};

// Stream-id allocation used across the artifact. Chains own one stream per
// sample starting at chain_base, so seeds can be shared between training
// and sampling without draw collisions.
namespace streams {
inline constexpr std::uint64_t train_loop = 0;
inline constexpr std::uint64_t weight_init = 1;
inline constexpr std::uint64_t metrics = 2;
inline constexpr std::uint64_t data_gen = 3;
inline constexpr std::uint64_t chain_base = std::uint64_t{1} << 32;
}  // namespace streams

}  // namespace sqdm
