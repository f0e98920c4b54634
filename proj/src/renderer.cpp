#include "bodyfit/renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "bodyfit/errors.hpp"

namespace bodyfit {

namespace {

inline double cross2(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

constexpr double kMinArea2 = 1e-12;
constexpr double kMinPieceLength = 1e-12;

}  // namespace

void validateCamera(const Camera& camera) {
    if (!(camera.scale > 0) || !std::isfinite(camera.scale)) throw ValidationError("camera scale must be positive and finite");
    if (!camera.translation.allFinite()) throw ValidationError("camera translation must be finite");
    if (camera.imageSize <= 0) throw ValidationError("camera image size must be positive");
}

Mask Silhouette::binarized(double threshold) const {
    return (pixels.array() > threshold).cast<uint8_t>();
}

RowMatX2 projectPoints(const RowMatX3& points, const Camera& camera) {
    RowMatX2 out(points.rows(), 2);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        out(i, 0) = camera.scale * points(i, 0) + camera.translation.x();
        out(i, 1) = camera.scale * points(i, 1) + camera.translation.y();
    }
    return out;
}

RowMatX3 projectPointsGrad(const Camera& camera, const RowMatX2& dPoints, int numPoints) {
    RowMatX3 out = RowMatX3::Zero(numPoints, 3);
    out.leftCols<2>() = camera.scale * dPoints;
    return out;
}

CameraGradient projectCameraGrad(const RowMatX3& points, const RowMatX2& dPoints) {
    CameraGradient g;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        g.scale += dPoints(i, 0) * points(i, 0) + dPoints(i, 1) * points(i, 1);
        g.translation += dPoints.row(i).transpose();
    }
    return g;
}

// ---------------------------------------------------------------------------

UnionBoundary::UnionBoundary(const RowMatX2& points, const Faces& faces, int imageSize) : points_(points) {
    buildTriangles(faces);
    buildPieces();
    segments_.reserve(pieces_.size());
    for (const Piece& p : pieces_) {
        Segment g;
        g.s = endpointPosition(p, p.start);
        g.e = endpointPosition(p, p.end);
        g.pa = points_.row(p.a);
        g.pb = points_.row(p.b);
        g.len2 = (g.e - g.s).squaredNorm();
        g.lineLength = (g.pb - g.pa).norm();
        segments_.push_back(g);
    }
    buildGrid(imageSize);
    buildInside(imageSize);
}

void UnionBoundary::buildTriangles(const Faces& faces) {
    const int n = static_cast<int>(points_.rows());
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        Triangle t;
        for (int c = 0; c < 3; ++c) {
            t.v[c] = faces(f, c);
            if (t.v[c] < 0 || t.v[c] >= n) throw ValidationError("face references a missing vertex");
        }
        const Vec2 p0 = points_.row(t.v[0]), p1 = points_.row(t.v[1]), p2 = points_.row(t.v[2]);
        const double area2 = cross2(p1 - p0, p2 - p0);
        if (!(std::abs(area2) > kMinArea2)) continue;
        t.orientation = area2 > 0 ? 1.0 : -1.0;
        t.minX = std::min({p0.x(), p1.x(), p2.x()});
        t.maxX = std::max({p0.x(), p1.x(), p2.x()});
        t.minY = std::min({p0.y(), p1.y(), p2.y()});
        t.maxY = std::max({p0.y(), p1.y(), p2.y()});
        triangles_.push_back(t);
    }
}

void UnionBoundary::buildPieces() {
    if (triangles_.empty()) return;

    struct EdgeUse {
        int lo, hi, third;
    };
    std::vector<EdgeUse> uses;
    uses.reserve(3 * triangles_.size());
    for (const Triangle& t : triangles_)
        for (int c = 0; c < 3; ++c) {
            const int a = t.v[c], b = t.v[(c + 1) % 3];
            if (a == b) continue;
            uses.push_back({std::min(a, b), std::max(a, b), t.v[(c + 2) % 3]});
        }
    std::sort(uses.begin(), uses.end(), [](const EdgeUse& x, const EdgeUse& y) {
        return std::tie(x.lo, x.hi, x.third) < std::tie(y.lo, y.hi, y.third);
    });

    struct Candidate {
        int a, b;
        double outsideSign;
    };
    std::vector<Candidate> candidates;
    for (size_t i = 0; i < uses.size();) {
        size_t j = i;
        while (j < uses.size() && uses[j].lo == uses[i].lo && uses[j].hi == uses[i].hi) ++j;
        const int a = uses[i].lo, b = uses[i].hi;
        const Vec2 pa = points_.row(a), pb = points_.row(b);
        const double s0 = cross2(pb - pa, Vec2(points_.row(uses[i].third)) - pa);
        bool internal = false;
        if (j - i == 2) {
            const double s1 = cross2(pb - pa, Vec2(points_.row(uses[i + 1].third)) - pa);
            internal = (s0 > 0 && s1 < 0) || (s0 < 0 && s1 > 0);
        }
        if (!internal) candidates.push_back({a, b, s0 > 0 ? -1.0 : 1.0});
        i = j;
    }

    // Coarse triangle bins for the clipping queries.
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (const Triangle& t : triangles_) {
        x0 = std::min(x0, t.minX);
        y0 = std::min(y0, t.minY);
        x1 = std::max(x1, t.maxX);
        y1 = std::max(y1, t.maxY);
    }
    const double binSize = std::max({(x1 - x0) / 32.0, (y1 - y0) / 32.0, 1e-9});
    const int bw = std::max(1, static_cast<int>(std::floor((x1 - x0) / binSize)) + 1);
    const int bh = std::max(1, static_cast<int>(std::floor((y1 - y0) / binSize)) + 1);
    auto binOf = [&](double v, double origin, int count) {
        return std::clamp(static_cast<int>(std::floor((v - origin) / binSize)), 0, count - 1);
    };
    std::vector<std::vector<int>> bins(static_cast<size_t>(bw) * bh);
    for (int ti = 0; ti < static_cast<int>(triangles_.size()); ++ti) {
        const Triangle& t = triangles_[ti];
        for (int by = binOf(t.minY, y0, bh); by <= binOf(t.maxY, y0, bh); ++by)
            for (int bx = binOf(t.minX, x0, bw); bx <= binOf(t.maxX, x0, bw); ++bx)
                bins[static_cast<size_t>(by) * bw + bx].push_back(ti);
    }

    struct Interval {
        double tIn, tOut;
        Endpoint in, out;
    };
    std::vector<int> stamp(triangles_.size(), -1);
    std::vector<Interval> intervals;
    for (int ci = 0; ci < static_cast<int>(candidates.size()); ++ci) {
        const int a = candidates[ci].a, b = candidates[ci].b;
        const double outside = candidates[ci].outsideSign;
        const Vec2 pa = points_.row(a), pb = points_.row(b);
        intervals.clear();
        const int bx0 = binOf(std::min(pa.x(), pb.x()), x0, bw), bx1 = binOf(std::max(pa.x(), pb.x()), x0, bw);
        const int by0 = binOf(std::min(pa.y(), pb.y()), y0, bh), by1 = binOf(std::max(pa.y(), pb.y()), y0, bh);
        for (int by = by0; by <= by1; ++by)
            for (int bx = bx0; bx <= bx1; ++bx)
                for (int ti : bins[static_cast<size_t>(by) * bw + bx]) {
                    if (stamp[ti] == ci) continue;
                    stamp[ti] = ci;
                    const Triangle& t = triangles_[ti];
                    const bool hasA = t.v[0] == a || t.v[1] == a || t.v[2] == a;
                    const bool hasB = t.v[0] == b || t.v[1] == b || t.v[2] == b;
                    if (hasA && hasB) continue;
                    if (std::max(pa.x(), pb.x()) < t.minX || std::min(pa.x(), pb.x()) > t.maxX ||
                        std::max(pa.y(), pb.y()) < t.minY || std::min(pa.y(), pb.y()) > t.maxY)
                        continue;
                    // Cyrus-Beck against the open triangle.
                    Interval iv{0.0, 1.0, Endpoint{a, -1, -1, 0.0}, Endpoint{b, -1, -1, 1.0}};
                    bool empty = false;
                    for (int k = 0; k < 3 && !empty; ++k) {
                        const int c = t.v[k], d = t.v[(k + 1) % 3];
                        const Vec2 pc = points_.row(c), pd = points_.row(d);
                        const double f0 = t.orientation * cross2(pd - pc, pa - pc);
                        const double f1 = t.orientation * cross2(pd - pc, pb - pc);
                        if (f0 <= 0 && f1 <= 0) {
                            empty = true;
                        } else if (f0 == f1) {
                            // parallel and strictly inside this half-plane
                        } else {
                            const double ts = f0 / (f0 - f1);
                            if (f0 > f1) {
                                if (ts < iv.tOut) iv = {iv.tIn, ts, iv.in, Endpoint{-1, c, d, ts}};
                            } else {
                                if (ts > iv.tIn) iv = {ts, iv.tOut, Endpoint{-1, c, d, ts}, iv.out};
                            }
                        }
                    }
                    if (!empty && iv.tIn < iv.tOut) intervals.push_back(iv);
                }

        std::sort(intervals.begin(), intervals.end(), [](const Interval& x, const Interval& y) {
            if (x.tIn != y.tIn) return x.tIn < y.tIn;
            return x.tOut < y.tOut;
        });
        double cover = 0.0;
        Endpoint coverEnd{a, -1, -1, 0.0};
        for (const Interval& iv : intervals) {
            if (iv.tIn - cover >= kMinPieceLength) pieces_.push_back({a, b, coverEnd, iv.in, outside});
            if (iv.tOut > cover) {
                cover = iv.tOut;
                coverEnd = iv.out;
            }
        }
        if (1.0 - cover >= kMinPieceLength) pieces_.push_back({a, b, coverEnd, Endpoint{b, -1, -1, 1.0}, outside});
    }
}

Vec2 UnionBoundary::endpointPosition(const Piece& p, const Endpoint& e) const {
    if (e.vertex >= 0) return points_.row(e.vertex);
    const Vec2 pa = points_.row(p.a), pb = points_.row(p.b);
    const Vec2 pc = points_.row(e.clipA), pd = points_.row(e.clipB);
    const double f0 = cross2(pd - pc, pa - pc), f1 = cross2(pd - pc, pb - pc);
    const double t = f0 / (f0 - f1);
    return pa + t * (pb - pa);
}

void UnionBoundary::buildGrid(int imageSize) {
    if (pieces_.empty()) return;
    double x0 = 0, y0 = 0, x1 = imageSize, y1 = imageSize;
    std::vector<std::array<double, 4>> boxes(pieces_.size());
    for (size_t i = 0; i < pieces_.size(); ++i) {
        const Vec2& s = segments_[i].s;
        const Vec2& e = segments_[i].e;
        boxes[i] = {std::min(s.x(), e.x()), std::min(s.y(), e.y()), std::max(s.x(), e.x()), std::max(s.y(), e.y())};
        x0 = std::min(x0, boxes[i][0]);
        y0 = std::min(y0, boxes[i][1]);
        x1 = std::max(x1, boxes[i][2]);
        y1 = std::max(y1, boxes[i][3]);
    }
    gridX0_ = x0;
    gridY0_ = y0;
    gridW_ = static_cast<int>(std::floor((x1 - x0) / cell_)) + 1;
    gridH_ = static_cast<int>(std::floor((y1 - y0) / cell_)) + 1;
    cells_.assign(static_cast<size_t>(gridW_) * gridH_, {});
    for (size_t i = 0; i < pieces_.size(); ++i) {
        const int cx0 = std::clamp(static_cast<int>(std::floor((boxes[i][0] - x0) / cell_)), 0, gridW_ - 1);
        const int cy0 = std::clamp(static_cast<int>(std::floor((boxes[i][1] - y0) / cell_)), 0, gridH_ - 1);
        const int cx1 = std::clamp(static_cast<int>(std::floor((boxes[i][2] - x0) / cell_)), 0, gridW_ - 1);
        const int cy1 = std::clamp(static_cast<int>(std::floor((boxes[i][3] - y0) / cell_)), 0, gridH_ - 1);
        for (int cy = cy0; cy <= cy1; ++cy)
            for (int cx = cx0; cx <= cx1; ++cx) cells_[static_cast<size_t>(cy) * gridW_ + cx].push_back(static_cast<int>(i));
    }
}

void UnionBoundary::buildInside(int imageSize) {
    inside_ = Mask::Zero(imageSize, imageSize);
    for (const Triangle& t : triangles_) {
        const int i0 = std::max(0, static_cast<int>(std::floor(t.minX - 0.5)));
        const int i1 = std::min(imageSize - 1, static_cast<int>(std::ceil(t.maxX - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::floor(t.minY - 0.5)));
        const int j1 = std::min(imageSize - 1, static_cast<int>(std::ceil(t.maxY - 0.5)));
        const Vec2 p0 = points_.row(t.v[0]), p1 = points_.row(t.v[1]), p2 = points_.row(t.v[2]);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                if (inside_(j, i)) continue;
                const Vec2 q(i + 0.5, j + 0.5);
                if (t.orientation * cross2(p1 - p0, q - p0) >= 0 && t.orientation * cross2(p2 - p1, q - p1) >= 0 &&
                    t.orientation * cross2(p0 - p2, q - p2) >= 0)
                    inside_(j, i) = 1;
            }
    }
    // Covered points lying on the union boundary count as outside.
    for (int j = 0; j < imageSize; ++j)
        for (int i = 0; i < imageSize; ++i) {
            if (!inside_(j, i)) continue;
            double d = 0;
            nearest(Vec2(i + 0.5, j + 0.5), &d);
            if (!(d > 0)) inside_(j, i) = 0;
        }
}

double UnionBoundary::pieceDistance(int index, const Vec2& q) const {
    const Segment& g = segments_[static_cast<size_t>(index)];
    const double u = g.len2 > 0 ? (q - g.s).dot(g.e - g.s) / g.len2 : 0.0;
    if (u <= 0) return (q - g.s).norm();
    if (u >= 1) return (q - g.e).norm();
    return std::abs(cross2(g.pb - g.pa, q - g.pa)) / g.lineLength;
}

int UnionBoundary::nearest(const Vec2& q, double* distance) const {
    if (pieces_.empty()) {
        *distance = std::numeric_limits<double>::infinity();
        return -1;
    }
    const int cx = std::clamp(static_cast<int>(std::floor((q.x() - gridX0_) / cell_)), 0, gridW_ - 1);
    const int cy = std::clamp(static_cast<int>(std::floor((q.y() - gridY0_) / cell_)), 0, gridH_ - 1);
    double best = std::numeric_limits<double>::infinity();
    int bestIndex = -1;
    const int maxRing = std::max(gridW_, gridH_);
    auto visit = [&](int x, int y) {
        if (x < 0 || y < 0 || x >= gridW_ || y >= gridH_) return;
        for (int idx : cells_[static_cast<size_t>(y) * gridW_ + x]) {
            const double d = pieceDistance(idx, q);
            if (d < best || (d == best && idx < bestIndex)) {
                best = d;
                bestIndex = idx;
            }
        }
    };
    for (int r = 0; r <= maxRing; ++r) {
        if (r == 0) {
            visit(cx, cy);
        } else {
            for (int x = cx - r; x <= cx + r; ++x) {
                visit(x, cy - r);
                visit(x, cy + r);
            }
            for (int y = cy - r + 1; y <= cy + r - 1; ++y) {
                visit(cx - r, y);
                visit(cx + r, y);
            }
        }
        if (bestIndex >= 0 && best < r * cell_) break;
    }
    *distance = best;
    return bestIndex;
}

void UnionBoundary::distanceGrad(const Vec2& q, int index, double h, RowMatX2& grad) const {
    const Piece& p = pieces_[index];
    const Vec2 s = endpointPosition(p, p.start), e = endpointPosition(p, p.end);
    const Vec2 dir = e - s;
    const double len2 = dir.squaredNorm();
    const double u = len2 > 0 ? (q - s).dot(dir) / len2 : 0.0;
    const Vec2 pa = points_.row(p.a), pb = points_.row(p.b);

    if (u > 0 && u < 1) {
        const Vec2 ev = pb - pa, w = q - pa;
        const double c = cross2(ev, w), len = ev.norm();
        // On the boundary itself the pixel counts as outside.
        const double sgn = c > 0 ? 1.0 : (c < 0 ? -1.0 : p.outsideSign);
        const Vec2 dDe = sgn * Vec2(w.y(), -w.x()) / len - std::abs(c) * ev / (len * len * len);
        const Vec2 dDw = sgn * Vec2(-ev.y(), ev.x()) / len;
        grad.row(p.a) += h * (-dDe - dDw).transpose();
        grad.row(p.b) += h * dDe.transpose();
        return;
    }

    const Endpoint& end = u <= 0 ? p.start : p.end;
    const Vec2 x = u <= 0 ? s : e;
    const double d = (x - q).norm();
    if (d == 0) return;
    const Vec2 hx = h * (x - q) / d;
    if (end.vertex >= 0) {
        grad.row(end.vertex) += hx.transpose();
        return;
    }
    // x = a + t (b - a), t = f0 / (f0 - f1), f(y) = cross(d - c, y - c)
    const Vec2 pc = points_.row(end.clipA), pd = points_.row(end.clipB);
    const Vec2 g = pd - pc, w0 = pa - pc, w1 = pb - pc, ev = pb - pa;
    const double f0 = cross2(g, w0), f1 = cross2(g, w1);
    const double t = f0 / (f0 - f1);
    const double den = (f0 - f1) * (f0 - f1);
    const double he = hx.dot(ev);
    const Vec2 dfdw(-g.y(), g.x());
    const Vec2 df0dg(w0.y(), -w0.x()), df1dg(w1.y(), -w1.x());
    // dt/dz = (-f1 df0/dz + f0 df1/dz) / (f0 - f1)^2
    const Vec2 dtda = -f1 * dfdw / den;
    const Vec2 dtdb = f0 * dfdw / den;
    const Vec2 dtdd = (-f1 * df0dg + f0 * df1dg) / den;
    const Vec2 dtdc = (-f1 * (-df0dg - dfdw) + f0 * (-df1dg - dfdw)) / den;
    grad.row(p.a) += ((1 - t) * hx + he * dtda).transpose();
    grad.row(p.b) += (t * hx + he * dtdb).transpose();
    grad.row(end.clipA) += (he * dtdc).transpose();
    grad.row(end.clipB) += (he * dtdd).transpose();
}

// ---------------------------------------------------------------------------

namespace {

void checkTemperature(double temperature) {
    if (!(temperature > 0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive and finite");
}

}  // namespace

Silhouette renderSilhouette(const RowMatX3& vertices, const Faces& faces, const Camera& camera, double temperature) {
    validateCamera(camera);
    checkTemperature(temperature);
    const int size = camera.imageSize;
    Silhouette sil;
    sil.pixels = Image::Zero(size, size);
    const RowMatX2 projected = projectPoints(vertices, camera);
    const UnionBoundary boundary(projected, faces, size);
    if (boundary.degenerate()) {
        sil.degenerate = true;
        return sil;
    }
    const Mask& inside = boundary.insideMask();
    for (int j = 0; j < size; ++j)
        for (int i = 0; i < size; ++i) {
            double d = 0;
            boundary.nearest(Vec2(i + 0.5, j + 0.5), &d);
            const double sd = inside(j, i) ? -d : d;
            sil.pixels(j, i) = sigmoid(-sd / temperature);
        }
    return sil;
}

SilhouetteGradient renderSilhouetteGrad(const RowMatX3& vertices, const Faces& faces, const Camera& camera,
                                        double temperature, const Image& upstream) {
    validateCamera(camera);
    checkTemperature(temperature);
    const int size = camera.imageSize;
    if (upstream.rows() != size || upstream.cols() != size) throw ValidationError("upstream image size mismatch");
    const RowMatX2 projected = projectPoints(vertices, camera);
    RowMatX2 grad2 = RowMatX2::Zero(vertices.rows(), 2);
    const UnionBoundary boundary(projected, faces, size);
    if (!boundary.degenerate()) {
        const Mask& inside = boundary.insideMask();
        for (int j = 0; j < size; ++j)
            for (int i = 0; i < size; ++i) {
                const double up = upstream(j, i);
                if (up == 0) continue;
                const Vec2 q(i + 0.5, j + 0.5);
                double d = 0;
                const int piece = boundary.nearest(q, &d);
                if (piece < 0) continue;
                const bool in = inside(j, i) != 0;
                const double occ = sigmoid((in ? d : -d) / temperature);
                const double h = up * occ * (1 - occ) * (in ? 1.0 : -1.0) / temperature;
                if (h != 0) boundary.distanceGrad(q, piece, h, grad2);
            }
    }
    SilhouetteGradient out;
    out.vertices = projectPointsGrad(camera, grad2, static_cast<int>(vertices.rows()));
    out.camera = projectCameraGrad(vertices, grad2);
    return out;
}

Mask rasterizeMask(const RowMatX3& vertices, const Faces& faces, const Camera& camera) {
    validateCamera(camera);
    const RowMatX2 projected = projectPoints(vertices, camera);
    const UnionBoundary boundary(projected, faces, camera.imageSize);
    return boundary.insideMask();
}

void writePgm(const Image& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (Eigen::Index j = 0; j < image.rows(); ++j)
        for (Eigen::Index i = 0; i < image.cols(); ++i) {
            const double v = std::clamp(image(j, i), 0.0, 1.0);
            out.put(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0))));
        }
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<uint8_t> packMask(const Mask& mask) {
    const size_t bits = static_cast<size_t>(mask.size());
    std::vector<uint8_t> out((bits + 7) / 8, 0);
    for (size_t k = 0; k < bits; ++k)
        if (mask.data()[k]) out[k / 8] |= static_cast<uint8_t>(0x80u >> (k % 8));
    return out;
}

Mask unpackMask(const std::vector<uint8_t>& bytes, int size) {
    const size_t bits = static_cast<size_t>(size) * size;
    if (bytes.size() < (bits + 7) / 8) throw IoError("packed mask is truncated");
    Mask mask(size, size);
    for (size_t k = 0; k < bits; ++k) mask.data()[k] = (bytes[k / 8] >> (7 - k % 8)) & 1u;
    return mask;
}

}  // namespace bodyfit
