#include "bodyfit/rng.hpp"

#include <cmath>
#include <numbers>

namespace bodyfit {

namespace {

constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

}  // namespace

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

void CounterRng::refill() {
    const std::array<uint32_t, 4> ctr{static_cast<uint32_t>(block_), static_cast<uint32_t>(block_ >> 32),
                                      static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
    const std::array<uint32_t, 2> key{static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)};
    buffer_ = philox4x32(ctr, key);
    ++block_;
    used_ = 0;
}

uint64_t CounterRng::nextU64() {
    if (used_ > 2) refill();
    const uint64_t v = (static_cast<uint64_t>(buffer_[used_ + 1]) << 32) | buffer_[used_];
    used_ += 2;
    return v;
}

double CounterRng::uniform() { return static_cast<double>(nextU64() >> 11) * 0x1.0p-53; }

double CounterRng::normal() {
    const double u1 = uniformPositive();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::truncatedNormal(double mean, double stddev, double lo, double hi) {
    if (!(hi > lo)) return lo;
    if (stddev <= 0.0) return std::min(std::max(mean, lo), hi);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double x = normal(mean, stddev);
        if (x >= lo && x <= hi) return x;
    }
    return uniform(lo, hi);
}

uint64_t CounterRng::below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = nextU64();
    } while (v >= limit);
    return v % n;
}

}  // namespace bodyfit
