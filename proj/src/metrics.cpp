#include "bodyfit/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "bodyfit/errors.hpp"
#include "bodyfit/model_io.hpp"

namespace bodyfit {

double meanPerVertexError(const RowMatX3& verticesHat, const RowMatX3& vertices) {
    if (verticesHat.rows() != vertices.rows()) throw ValidationError("meanPerVertexError: vertex count mismatch");
    if (vertices.rows() == 0) throw ValidationError("meanPerVertexError: empty mesh");
    return (verticesHat - vertices).rowwise().norm().mean();
}

namespace {

void requireSpread(const RowMatX3& centered, const char* which) {
    const Mat3 cov = centered.transpose() * centered;
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[2] > 0) || ev[1] <= 1e-12 * ev[2])
        throw ValidationError(std::string("reconstructionError: degenerate ") + which + " joint configuration");
}

}  // namespace

SimilarityTransform procrustesAlign(const RowMatX3& from, const RowMatX3& to) {
    if (from.rows() != to.rows()) throw ValidationError("procrustesAlign: point count mismatch");
    if (from.rows() < 3) throw ValidationError("procrustesAlign: need at least 3 points");
    if (!from.allFinite() || !to.allFinite()) throw ValidationError("procrustesAlign: non-finite input");
    const Eigen::RowVector3d ca = from.colwise().mean(), cb = to.colwise().mean();
    const RowMatX3 a = from.rowwise() - ca;
    const RowMatX3 b = to.rowwise() - cb;
    requireSpread(a, "predicted");
    requireSpread(b, "reference");

    const Mat3 s = a.transpose() * b;  // s(i, j) = sum a_i b_j
    const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
    const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
    const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
    Eigen::Matrix4d n;
    n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
         syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
         szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
         sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(n);
    const Eigen::Vector4d q = eig.eigenvectors().col(3);
    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);

    SimilarityTransform t;
    t.rotation = quat.normalized().toRotationMatrix();
    const RowMatX3 rotated = a * t.rotation.transpose();
    t.scale = (rotated.array() * b.array()).sum() / a.squaredNorm();
    t.translation = cb.transpose() - t.scale * t.rotation * ca.transpose();
    return t;
}

double reconstructionError(const RowMatX3& jointsHat, const RowMatX3& joints) {
    const SimilarityTransform t = procrustesAlign(jointsHat, joints);
    RowMatX3 aligned = (t.scale * jointsHat * t.rotation.transpose()).rowwise() + t.translation.transpose();
    return (aligned - joints).rowwise().norm().mean();
}

SegmentationScores segmentationScores(const Mask& maskHat, const Mask& mask) {
    if (maskHat.rows() != mask.rows() || maskHat.cols() != mask.cols())
        throw ValidationError("segmentationScores: mask size mismatch");
    if (mask.size() == 0) throw ValidationError("segmentationScores: empty mask");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        const bool p = maskHat.data()[i] != 0, g = mask.data()[i] != 0;
        if (p && g) ++tp;
        else if (p) ++fp;
        else if (g) ++fn;
        else ++tn;
    }
    SegmentationScores out;
    out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(mask.size());
    if (tp + fp + fn == 0) {
        out.f1 = 1.0;
    } else {
        out.f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return out;
}

nlohmann::json EvalReport::toJson() const {
    return {{"mean_per_vertex_error", meanPerVertexError},
            {"reconstruction_error", reconstructionError},
            {"seg_accuracy", segAccuracy},
            {"seg_f1", segF1},
            {"count", count}};
}

std::string EvalReport::csvHeader() { return "mean_per_vertex_error,reconstruction_error,seg_accuracy,seg_f1,count"; }

std::string EvalReport::csvRow() const {
    std::ostringstream os;
    os << formatExact(meanPerVertexError) << ',' << formatExact(reconstructionError) << ',' << formatExact(segAccuracy)
       << ',' << formatExact(segF1) << ',' << count;
    return os.str();
}

}  // namespace bodyfit
