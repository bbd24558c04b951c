#pragma once

// Named, counter-based random streams.
//
// Each stream is a (key, counter) pair; the n-th draw is a SplitMix64
// finalization of key + n·γ. Streams are derived from one root seed and a
// purpose name ("init.lora", "mask", ...) so a component's randomness does
// not depend on how much any other component consumed. Distributions are
// implemented here rather than via <random> so draws are identical across
// standard libraries.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace nara {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

class RngStream {
public:
    RngStream() : RngStream(0, "default") {}
    RngStream(std::uint64_t root_seed, std::string_view purpose);

    /// Child stream, independent of the parent's counter.
    RngStream substream(std::string_view purpose) const;
    RngStream substream(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box–Muller (one draw per call, two uniforms consumed).
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace nara
