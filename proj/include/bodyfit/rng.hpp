#pragma once

#include <array>
#include <cstdint>

namespace bodyfit {

// Philox-4x32-10 block function (Salmon et al., Random123).
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> counter, std::array<uint32_t, 2> key);

// Purposes used to split the counter space into independent streams.
enum class StreamTag : uint16_t {
    Generic = 0,
    PoseSample = 1,
    ShapeSample = 2,
    Viewpoint = 3,
    Noise = 4,
    Model = 5,
    Init = 6,
    Dropout = 7,
    Batch = 8,
    Augment = 9,
    Problem = 10,
};

// Stream id layout: bits 63..48 hold the tag, bits 47..0 the index.
constexpr uint64_t streamId(StreamTag tag, uint64_t index) {
    return (static_cast<uint64_t>(tag) << 48) | (index & 0xFFFFFFFFFFFFull);
}

/// Counter-based generator. The 64-bit seed is the Philox key; the counter
/// words are (block low, block high, stream low, stream high). Every
/// (seed, stream) pair is an independent sequence, so record i of a dataset
/// can be generated without touching records 0..i-1.
class CounterRng {
public:
    CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}
    CounterRng(uint64_t seed, StreamTag tag, uint64_t index) : CounterRng(seed, streamId(tag, index)) {}

    uint64_t nextU64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1].
    double uniformPositive() { return 1.0 - uniform(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Box-Muller; one normal per pair of uniforms.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Normal restricted to [lo, hi] by rejection. Falls back to uniform
    // on the interval if the acceptance rate is hopeless.
    double truncatedNormal(double mean, double stddev, double lo, double hi);
    bool bernoulli(double p) { return uniform() < p; }
    // Uniform integer in [0, n).
    uint64_t below(uint64_t n);

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

private:
    void refill();

    uint64_t seed_;
    uint64_t stream_;
    uint64_t block_ = 0;
    std::array<uint32_t, 4> buffer_{};
    int used_ = 4;
};

}  // namespace bodyfit
