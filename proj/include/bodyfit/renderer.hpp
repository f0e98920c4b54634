#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "bodyfit/body_model.hpp"

namespace bodyfit {

inline constexpr int kImageSize = 64;

using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weak perspective camera: p = scale * (x, y) + translation, z dropped.
/// Image origin top-left, x right, y down, pixel (i, j) centered at
/// (i + 0.5, j + 0.5).
struct Camera {
    double scale = 1.0;
    Vec2 translation = Vec2::Zero();
    int imageSize = kImageSize;
};

void validateCamera(const Camera& camera);

struct Keypoints2D {
    RowMatX2 points;
    Eigen::VectorXd confidences;

    int size() const { return static_cast<int>(points.rows()); }
};

struct Silhouette {
    Image pixels;             // row = y, col = x, values in [0, 1]
    bool degenerate = false;  // set when no triangle has nonzero projected area

    Mask binarized(double threshold = 0.5) const;
};

RowMatX2 projectPoints(const RowMatX3& points, const Camera& camera);

struct CameraGradient {
    double scale = 0.0;
    Vec2 translation = Vec2::Zero();
};

// Pulls dL/dp (M x 2) back through projectPoints.
RowMatX3 projectPointsGrad(const Camera& camera, const RowMatX2& dPoints, int numPoints);
CameraGradient projectCameraGrad(const RowMatX3& points, const RowMatX2& dPoints);

/// Soft silhouette of the union of projected triangles:
/// occupancy = sigmoid(-signedDistance / temperature), signed distance to
/// the union boundary, negative inside.
Silhouette renderSilhouette(const RowMatX3& vertices, const Faces& faces, const Camera& camera,
                            double temperature = 1.0);

struct SilhouetteGradient {
    RowMatX3 vertices;
    CameraGradient camera;
};

// Gradient of sum(upstream .* silhouette).
SilhouetteGradient renderSilhouetteGrad(const RowMatX3& vertices, const Faces& faces, const Camera& camera,
                                        double temperature, const Image& upstream);

// Pixels whose centers are covered by some projected triangle and do not lie
// on the union boundary. Equals the binarized soft silhouette.
Mask rasterizeMask(const RowMatX3& vertices, const Faces& faces, const Camera& camera);

/// 2D building blocks shared by the mesh-level functions above.
class UnionBoundary {
public:
    UnionBoundary(const RowMatX2& points, const Faces& faces, int imageSize);

    struct Endpoint {
        // vertex >= 0: the endpoint is that projected vertex. Otherwise it is
        // the crossing of the piece's edge with edge (clipA, clipB).
        int vertex = -1;
        int clipA = -1;
        int clipB = -1;
        double t = 0.0;
    };
    struct Piece {
        int a, b;  // supporting edge, endpoints at a + t (b - a)
        Endpoint start, end;
        double outsideSign;  // sign of cross(b - a, q - a) for q just outside the union
    };

    bool degenerate() const { return triangles_.empty(); }
    int numPieces() const { return static_cast<int>(pieces_.size()); }
    const std::vector<Piece>& pieces() const { return pieces_; }
    const Mask& insideMask() const { return inside_; }

    // Nearest boundary piece to q: index and distance. Ties go to the lower
    // index. Returns -1 when there are no pieces.
    int nearest(const Vec2& q, double* distance) const;
    // Adds h * d(distance(q, piece))/d(points) into grad.
    void distanceGrad(const Vec2& q, int piece, double h, RowMatX2& grad) const;

    Vec2 endpointPosition(const Piece& p, const Endpoint& e) const;

private:
    struct Triangle {
        int v[3];
        double orientation;  // +1 or -1
        double minX, minY, maxX, maxY;
    };

    void buildTriangles(const Faces& faces);
    void buildPieces();
    void buildGrid(int imageSize);
    void buildInside(int imageSize);
    double pieceDistance(int piece, const Vec2& q) const;

    // Endpoint positions and supporting line of each piece.
    struct Segment {
        Vec2 s, e, pa, pb;
        double len2 = 0.0;
        double lineLength = 0.0;
    };

    const RowMatX2& points_;
    std::vector<Triangle> triangles_;
    std::vector<Piece> pieces_;
    std::vector<Segment> segments_;
    Mask inside_;
    // Uniform grid over the pieces' bounding box.
    double gridX0_ = 0, gridY0_ = 0, cell_ = 4.0;
    int gridW_ = 0, gridH_ = 0;
    std::vector<std::vector<int>> cells_;
};

// Binary PGM (P5, maxval 255) of a [0,1] image.
void writePgm(const Image& image, const std::string& path);
std::vector<uint8_t> packMask(const Mask& mask);
Mask unpackMask(const std::vector<uint8_t>& bytes, int size);

}  // namespace bodyfit
