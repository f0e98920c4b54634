#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bodyfit/rng.hpp"

using namespace bodyfit;

TEST(Philox, KnownAnswerZero) {
    const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPiDigits) {
    const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(CounterRng, SameSeedAndStreamReplays) {
    CounterRng a(7, StreamTag::PoseSample, 3), b(7, StreamTag::PoseSample, 3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.nextU64(), b.nextU64());
}

TEST(CounterRng, StreamsAndSeedsDiffer) {
    CounterRng a(7, StreamTag::PoseSample, 3), b(7, StreamTag::PoseSample, 4), c(8, StreamTag::PoseSample, 3),
        d(7, StreamTag::ShapeSample, 3);
    const uint64_t x = a.nextU64();
    EXPECT_NE(x, b.nextU64());
    EXPECT_NE(x, c.nextU64());
    EXPECT_NE(x, d.nextU64());
}

TEST(CounterRng, StreamIdLayout) {
    EXPECT_EQ(streamId(StreamTag::Noise, 5), (uint64_t{4} << 48) | 5u);
}

TEST(CounterRng, UniformRangeAndMoments) {
    CounterRng rng(11, 0);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sum2 += u * u;
    }
    EXPECT_NEAR(sum / n, 0.5, 5e-3);
    EXPECT_NEAR(sum2 / n - (sum / n) * (sum / n), 1.0 / 12.0, 2e-3);
}

TEST(CounterRng, NormalMoments) {
    CounterRng rng(12, 0);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-2);
    EXPECT_NEAR(sum2 / n, 1.0, 1e-2);
}

TEST(CounterRng, TruncatedNormalStaysInBounds) {
    CounterRng rng(13, 0);
    for (int i = 0; i < 10000; ++i) {
        const double z = rng.truncatedNormal(0.0, 1.0, -0.5, 2.0);
        ASSERT_GE(z, -0.5);
        ASSERT_LE(z, 2.0);
    }
    for (int i = 0; i < 100; ++i) {
        const double z = rng.truncatedNormal(0.0, 1.0, 30.0, 31.0);
        ASSERT_GE(z, 30.0);
        ASSERT_LE(z, 31.0);
    }
}

TEST(CounterRng, BelowIsUnbiasedAndInRange) {
    CounterRng rng(14, 0);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const uint64_t k = rng.below(7);
        ASSERT_LT(k, 7u);
        ++counts[k];
    }
    for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}
