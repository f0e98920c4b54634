#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <vector>

#include "bodyfit/errors.hpp"
#include "bodyfit/renderer.hpp"
#include "bodyfit/toy_model.hpp"
#include "test_util.hpp"

using namespace bodyfit;

namespace {

struct TriMesh {
    RowMatX3 vertices;
    Faces faces;
};

TriMesh square(double lo, double hi) {
    TriMesh m;
    m.vertices.resize(4, 3);
    m.vertices << lo, lo, 0, hi, lo, 0, hi, hi, 0, lo, hi, 0;
    m.faces.resize(2, 3);
    m.faces << 0, 1, 2, 0, 2, 3;
    return m;
}

// Square split into a fan around an interior vertex, plus one triangle
// poking out of the right side and overlapping the fan.
TriMesh fanWithOverlap() {
    TriMesh m;
    m.vertices.resize(8, 3);
    m.vertices << 20, 20, 0, 44, 20, 0, 44, 44, 0, 20, 44, 0, 31.3, 32.6, 0, 38.2, 27.1, 0.5, 55.4, 33.9, -1, 39.1, 40.3, 2;
    m.faces.resize(5, 3);
    m.faces << 0, 1, 4, 1, 2, 4, 2, 3, 4, 3, 0, 4, 5, 6, 7;
    return m;
}

Camera pixelCamera() { return Camera{1.0, Vec2::Zero(), kImageSize}; }

// Camera framing the mesh so it takes 80% of the image height, centered.
Camera framing(const RowMatX3& v) {
    const double y0 = v.col(1).minCoeff(), y1 = v.col(1).maxCoeff();
    const double x0 = v.col(0).minCoeff(), x1 = v.col(0).maxCoeff();
    Camera c;
    c.scale = 0.8 * kImageSize / (y1 - y0);
    c.translation = Vec2(0.5 * kImageSize - c.scale * 0.5 * (x0 + x1), 0.5 * kImageSize - c.scale * 0.5 * (y0 + y1));
    return c;
}

// Scanline count of pixel centers covered by the union of projected triangles.
int scanlineArea(const RowMatX2& p, const Faces& faces, int size) {
    int total = 0;
    for (int j = 0; j < size; ++j) {
        const double y = j + 0.5;
        std::vector<std::pair<double, double>> spans;
        for (Eigen::Index f = 0; f < faces.rows(); ++f) {
            double lo = 1e300, hi = -1e300;
            int hits = 0;
            for (int e = 0; e < 3; ++e) {
                const Vec2 a = p.row(faces(f, e)), b = p.row(faces(f, (e + 1) % 3));
                if ((a.y() < y && b.y() > y) || (a.y() > y && b.y() < y)) {
                    const double x = a.x() + (y - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
                    lo = std::min(lo, x);
                    hi = std::max(hi, x);
                    ++hits;
                }
            }
            if (hits == 2 && hi > lo) spans.emplace_back(lo, hi);
        }
        for (int i = 0; i < size; ++i) {
            const double x = i + 0.5;
            for (const auto& s : spans)
                if (x > s.first && x < s.second) {
                    ++total;
                    break;
                }
        }
    }
    return total;
}

double silhouetteDot(const RowMatX3& v, const Faces& f, const Camera& c, double t, const Image& up) {
    return (renderSilhouette(v, f, c, t).pixels.array() * up.array()).sum();
}

Image randomImage(CounterRng& rng) {
    Image up(kImageSize, kImageSize);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1, 1);
    return up;
}

}  // namespace

TEST(ProjectPoints, IdentityCamera) {
    RowMatX3 p(1, 3);
    p << 1, 2, 5;
    const RowMatX2 q = projectPoints(p, pixelCamera());
    EXPECT_EQ(q(0, 0), 1);
    EXPECT_EQ(q(0, 1), 2);
}

TEST(ProjectPoints, DepthInvariant) {
    RowMatX3 p(3, 3);
    p << 0, 0, -4, 0, 0, 0, 0, 0, 17;
    const RowMatX2 q = projectPoints(p, Camera{2.0, Vec2(32, 32), kImageSize});
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(q(i, 0), 32);
        EXPECT_EQ(q(i, 1), 32);
    }
}

TEST(ProjectPoints, AffineInOffsets) {
    CounterRng rng(41, 0);
    const Camera cam{1.7, Vec2(3.0, -2.0), kImageSize};
    for (int i = 0; i < 20; ++i) {
        RowMatX3 a(1, 3), b(1, 3);
        a << rng.normal(), rng.normal(), rng.normal();
        b << rng.normal(), rng.normal(), rng.normal();
        const RowMatX2 lhs = projectPoints(a + b, cam);
        const RowMatX2 rhs = projectPoints(a, cam) + cam.scale * b.leftCols<2>();
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(RenderSilhouette, SquareHardLimit) {
    const TriMesh m = square(16, 48);
    const Silhouette s = renderSilhouette(m.vertices, m.faces, pixelCamera(), 1e-3);
    const Mask mask = s.binarized();
    for (int j = 0; j < kImageSize; ++j)
        for (int i = 0; i < kImageSize; ++i) {
            const bool expected = i >= 16 && i < 48 && j >= 16 && j < 48;
            EXPECT_EQ(mask(j, i) != 0, expected) << i << "," << j;
            EXPECT_NEAR(s.pixels(j, i), expected ? 1.0 : 0.0, 1e-12);
        }
    EXPECT_FALSE(s.degenerate);
}

TEST(RenderSilhouette, EmptyAndDegenerateMeshes) {
    const Silhouette empty = renderSilhouette(RowMatX3(0, 3), Faces(0, 3), pixelCamera(), 1.0);
    EXPECT_EQ(empty.pixels.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(empty.degenerate);
    RowMatX3 line(3, 3);
    line << 1, 1, 0, 10, 10, 0, 20, 20, 0;
    Faces f(1, 3);
    f << 0, 1, 2;
    const Silhouette flat = renderSilhouette(line, f, pixelCamera(), 1.0);
    EXPECT_TRUE(flat.degenerate);
    EXPECT_EQ(flat.pixels.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RenderSilhouette, ToyHumanoidAreaMatchesScanline) {
    const BodyModel model = buildToyModel({});
    const Camera cam = framing(model.templateVertices);
    const Mask mask = renderSilhouette(model.templateVertices, model.faces, cam, 1.0).binarized();
    const int oracle = scanlineArea(projectPoints(model.templateVertices, cam), model.faces, kImageSize);
    const int area = mask.cast<int>().sum();
    ASSERT_GT(oracle, 100);
    EXPECT_LE(std::abs(area - oracle), 0.02 * oracle) << area << " vs " << oracle;
}

TEST(RenderSilhouette, BinarizedEqualsRasterizedMask) {
    const BodyModel model = buildToyModel({});
    CounterRng rng(42, 0);
    for (int trial = 0; trial < 5; ++trial) {
        const RowMatX3 v = forward(model, ShapeParams::zero(model), PoseParams{test::randomVector(rng, model.poseDim(), 0.4)})
                               .mesh.vertices;
        const Camera cam = framing(v);
        for (double t : {0.25, 1.0, 3.0}) {
            EXPECT_EQ(renderSilhouette(v, model.faces, cam, t).binarized(), rasterizeMask(v, model.faces, cam));
        }
    }
}

TEST(RenderSilhouette, BoundsAndTemperatureMonotonicity) {
    const BodyModel model = buildToyModel({});
    const Camera cam = framing(model.templateVertices);
    const Mask inside = rasterizeMask(model.templateVertices, model.faces, cam);
    Image previous;
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        const Image cur = renderSilhouette(model.templateVertices, model.faces, cam, t).pixels;
        EXPECT_GE(cur.minCoeff(), 0.0);
        EXPECT_LE(cur.maxCoeff(), 1.0);
        if (previous.size()) {
            for (int j = 0; j < kImageSize; ++j)
                for (int i = 0; i < kImageSize; ++i) {
                    if (inside(j, i))
                        EXPECT_LE(cur(j, i), previous(j, i));
                    else
                        EXPECT_GE(cur(j, i), previous(j, i));
                }
        }
        previous = cur;
    }
}

TEST(RenderSilhouette, IntegerTranslationShiftsMask) {
    const BodyModel model = buildToyModel({});
    const Camera cam = framing(model.templateVertices);
    const Mask base = rasterizeMask(model.templateVertices, model.faces, cam);
    for (const auto& [dx, dy] : {std::pair{3, -2}, std::pair{-5, 4}, std::pair{7, 7}}) {
        Camera moved = cam;
        moved.translation += Vec2(dx, dy);
        const Mask shifted = rasterizeMask(model.templateVertices, model.faces, moved);
        for (int j = 0; j < kImageSize; ++j)
            for (int i = 0; i < kImageSize; ++i) {
                const int si = i - dx, sj = j - dy;
                if (si < 0 || sj < 0 || si >= kImageSize || sj >= kImageSize) continue;
                EXPECT_EQ(shifted(j, i), base(sj, si));
            }
    }
}

TEST(RenderSilhouette, RejectsBadArguments) {
    const TriMesh m = square(16, 48);
    EXPECT_THROW(renderSilhouette(m.vertices, m.faces, pixelCamera(), 0.0), ValidationError);
    EXPECT_THROW(renderSilhouette(m.vertices, m.faces, Camera{-1.0, Vec2::Zero(), kImageSize}, 1.0), ValidationError);
}

TEST(RenderSilhouetteGrad, ZeroUpstreamGivesZero) {
    const TriMesh m = fanWithOverlap();
    const SilhouetteGradient g = renderSilhouetteGrad(m.vertices, m.faces, pixelCamera(), 1.0, Image::Zero(kImageSize, kImageSize));
    EXPECT_EQ(g.vertices.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.camera.scale, 0.0);
}

TEST(RenderSilhouetteGrad, SingleTriangleMatchesFiniteDifferences) {
    CounterRng rng(43, 0);
    for (int trial = 0; trial < 10; ++trial) {
        RowMatX3 v(3, 3);
        for (int i = 0; i < 3; ++i) v.row(i) << rng.uniform(8, 56), rng.uniform(8, 56), rng.normal();
        Faces f(1, 3);
        f << 0, 1, 2;
        const Image up = randomImage(rng);
        const double temperature = rng.uniform(0.5, 2.0);
        const SilhouetteGradient g = renderSilhouetteGrad(v, f, pixelCamera(), temperature, up);
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c) {
                const double fd = test::numericDerivative(
                    [&](double x) {
                        RowMatX3 w = v;
                        w(i, c) = x;
                        return silhouetteDot(w, f, pixelCamera(), temperature, up);
                    },
                    v(i, c), 1e-6);
                EXPECT_LT(std::abs(g.vertices(i, c) - fd), 1e-3 * std::max(1.0, std::abs(fd))) << trial << " " << i << " " << c;
            }
    }
}

TEST(RenderSilhouetteGrad, OverlappingTrianglesMatchFiniteDifferences) {
    const TriMesh m = fanWithOverlap();
    CounterRng rng(44, 0);
    const Image up = randomImage(rng);
    const Camera cam{1.1, Vec2(-2.0, 1.5), kImageSize};
    const SilhouetteGradient g = renderSilhouetteGrad(m.vertices, m.faces, cam, 0.7, up);
    for (int i = 0; i < m.vertices.rows(); ++i)
        for (int c = 0; c < 2; ++c) {
            const double fd = test::numericDerivative(
                [&](double x) {
                    RowMatX3 w = m.vertices;
                    w(i, c) = x;
                    return silhouetteDot(w, m.faces, cam, 0.7, up);
                },
                m.vertices(i, c), 1e-6);
            EXPECT_LT(std::abs(g.vertices(i, c) - fd), 1e-3 * std::max(1.0, std::abs(fd))) << i << " " << c;
        }
    const double fdScale = test::numericDerivative(
        [&](double s) { return silhouetteDot(m.vertices, m.faces, Camera{s, cam.translation, kImageSize}, 0.7, up); },
        cam.scale, 1e-7);
    EXPECT_LT(std::abs(g.camera.scale - fdScale), 1e-3 * std::max(1.0, std::abs(fdScale)));
    for (int c = 0; c < 2; ++c) {
        const double fdT = test::numericDerivative(
            [&](double t) {
                Camera moved = cam;
                moved.translation[c] = t;
                return silhouetteDot(m.vertices, m.faces, moved, 0.7, up);
            },
            cam.translation[c], 1e-6);
        EXPECT_LT(std::abs(g.camera.translation[c] - fdT), 1e-3 * std::max(1.0, std::abs(fdT)));
    }
}

TEST(RenderSilhouetteGrad, DeepInteriorVertexHasNoGradient) {
    const TriMesh m = fanWithOverlap();
    CounterRng rng(45, 0);
    const SilhouetteGradient g = renderSilhouetteGrad(m.vertices, m.faces, pixelCamera(), 0.1, randomImage(rng));
    EXPECT_LT(g.vertices.row(4).norm(), 1e-6);
    EXPECT_GT(g.vertices.row(6).norm(), 1e-6);
}

TEST(MaskIo, PackRoundTripMsbFirst) {
    Mask m = Mask::Zero(kImageSize, kImageSize);
    m(0, 0) = 1;
    m(0, 9) = 1;
    m(63, 63) = 1;
    const std::vector<uint8_t> bytes = packMask(m);
    ASSERT_EQ(bytes.size(), 512u);
    EXPECT_EQ(bytes[0], 0x80);
    EXPECT_EQ(bytes[1], 0x40);
    EXPECT_EQ(bytes[511], 0x01);
    EXPECT_EQ(unpackMask(bytes, kImageSize), m);
}

TEST(MaskIo, PgmHeaderAndPayload) {
    Image img = Image::Zero(kImageSize, kImageSize);
    img(0, 1) = 1.0;
    const std::string path = ::testing::TempDir() + "/sil.pgm";
    writePgm(img, path);
    std::ifstream in(path, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string header = "P5\n64 64\n255\n";
    ASSERT_EQ(contents.size(), header.size() + 4096);
    EXPECT_EQ(contents.substr(0, header.size()), header);
    EXPECT_EQ(static_cast<uint8_t>(contents[header.size() + 1]), 255);
    std::remove(path.c_str());
}
