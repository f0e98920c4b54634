#include <gtest/gtest.h>

#include "bodyfit/errors.hpp"
#include "bodyfit/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bodyfit;

namespace {

RowMatX3 randomPoints(CounterRng& rng, int n) {
    RowMatX3 p(n, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal();
    return p;
}

Mask randomMask(CounterRng& rng, double p) {
    Mask m(kImageSize, kImageSize);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(p);
    return m;
}

RowMatX3 similarity(const RowMatX3& p, double s, const Mat3& r, const Vec3& t) {
    return (s * p * r.transpose()).rowwise() + t.transpose();
}

}  // namespace

TEST(MeanPerVertexError, ClosedForms) {
    CounterRng rng(61, 0);
    const RowMatX3 v = randomPoints(rng, 50);
    EXPECT_EQ(meanPerVertexError(v, v), 0.0);
    const RowMatX3 shifted = v.rowwise() + Eigen::RowVector3d(3, 4, 0);
    EXPECT_NEAR(meanPerVertexError(shifted, v), 5.0, 1e-12);
    EXPECT_THROW(meanPerVertexError(v, randomPoints(rng, 4)), ValidationError);
}

TEST(MeanPerVertexError, MatchesBruteForceAndIsNotAligned) {
    CounterRng rng(62, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const RowMatX3 a = randomPoints(rng, 30), b = randomPoints(rng, 30);
        double ref = 0;
        for (int i = 0; i < 30; ++i) ref += std::sqrt(oracle::sumSquaredDistances(a.row(i), b.row(i)));
        EXPECT_NEAR(meanPerVertexError(a, b), ref / 30, 1e-12);
        const RowMatX3 rotated = a * rodrigues(Vec3(0.0, 0.4, 0.0)).transpose();
        EXPECT_GT(std::abs(meanPerVertexError(rotated, a)), 1e-3);
    }
}

TEST(ReconstructionError, RemovesSimilarityTransforms) {
    CounterRng rng(63, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const RowMatX3 j = randomPoints(rng, 16);
        EXPECT_LT(reconstructionError(j, j), 1e-12);
        const RowMatX3 moved = similarity(j, rng.uniform(0.2, 5.0), rodrigues(test::randomVector(rng, 3)), test::randomVector(rng, 3, 10));
        EXPECT_LT(reconstructionError(moved, j), 1e-9);
    }
}

TEST(ReconstructionError, MatchesSvdOracle) {
    CounterRng rng(64, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const RowMatX3 a = randomPoints(rng, 16), b = randomPoints(rng, 16);
        const double ref = oracle::procrustesMeanError(a, b);
        EXPECT_NEAR(reconstructionError(a, b), ref, 1e-9 * ref);
    }
}

TEST(ReconstructionError, InvariantUnderSimilarityOfEitherArgument) {
    CounterRng rng(65, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const RowMatX3 a = randomPoints(rng, 16), b = randomPoints(rng, 16);
        const double base = reconstructionError(a, b);
        const RowMatX3 a2 = similarity(a, rng.uniform(0.3, 3.0), rodrigues(test::randomVector(rng, 3)), test::randomVector(rng, 3));
        EXPECT_NEAR(reconstructionError(a2, b), base, 1e-9 * base);
        // Rigid motion of the reference leaves the error unchanged; scaling it scales the error.
        const RowMatX3 b2 = similarity(b, 1.0, rodrigues(test::randomVector(rng, 3)), test::randomVector(rng, 3));
        EXPECT_NEAR(reconstructionError(a, b2), base, 1e-9 * base);
    }
}

TEST(ReconstructionError, RejectsDegenerateSets) {
    RowMatX3 line(5, 3);
    for (int i = 0; i < 5; ++i) line.row(i) << i, 2 * i, -i;
    CounterRng rng(66, 0);
    EXPECT_THROW(reconstructionError(line, randomPoints(rng, 5)), ValidationError);
    EXPECT_THROW(reconstructionError(randomPoints(rng, 2), randomPoints(rng, 2)), ValidationError);
}

TEST(SegmentationScores, ClosedForms) {
    CounterRng rng(67, 0);
    const Mask m = randomMask(rng, 0.3);
    const SegmentationScores same = segmentationScores(m, m);
    EXPECT_EQ(same.accuracy, 1.0);
    EXPECT_EQ(same.f1, 1.0);
    Mask half = Mask::Zero(kImageSize, kImageSize);
    half.leftCols(kImageSize / 2).setOnes();
    const Mask complement = (1 - half.array()).matrix();
    const SegmentationScores opposite = segmentationScores(half, complement);
    EXPECT_EQ(opposite.accuracy, 0.0);
    EXPECT_EQ(opposite.f1, 0.0);
    const Mask empty = Mask::Zero(kImageSize, kImageSize);
    EXPECT_EQ(segmentationScores(empty, empty).f1, 1.0);
    EXPECT_THROW(segmentationScores(m, Mask::Zero(3, 3)), ValidationError);
}

TEST(SegmentationScores, MatchesConfusionOracle) {
    CounterRng rng(68, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const Mask a = randomMask(rng, rng.uniform()), b = randomMask(rng, rng.uniform());
        const SegmentationScores s = segmentationScores(a, b);
        const oracle::Confusion ref = oracle::confusion(a, b);
        EXPECT_NEAR(s.accuracy, ref.accuracy, 1e-12);
        EXPECT_NEAR(s.f1, ref.f1, 1e-12);
        EXPECT_EQ(s.accuracy, segmentationScores(b, a).accuracy);
    }
}

TEST(SegmentationScores, F1SymmetryHoldsOnlyWhereDefined) {
    Mask a = Mask::Zero(kImageSize, kImageSize), b = Mask::Zero(kImageSize, kImageSize);
    a(0, 0) = 1;
    EXPECT_EQ(segmentationScores(a, b).f1, 0.0);
    EXPECT_EQ(segmentationScores(b, a).f1, 0.0);
    b(0, 0) = 1;
    b(0, 1) = 1;
    EXPECT_NEAR(segmentationScores(a, b).f1, 2.0 / 3.0, 1e-15);
}

TEST(EvalReport, SerializesToJsonAndCsv) {
    EvalReport r{0.25, 0.125, 0.9, 0.8, 12};
    const nlohmann::json j = r.toJson();
    EXPECT_EQ(j.at("count"), 12);
    EXPECT_EQ(j.at("mean_per_vertex_error"), 0.25);
    EXPECT_EQ(r.csvRow(), "0.25,0.125,0.9,0.8,12");
    EXPECT_EQ(EvalReport::csvHeader().find("mean_per_vertex_error"), 0u);
}
