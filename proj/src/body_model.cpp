#include "bodyfit/body_model.hpp"

#include <cmath>
#include <sstream>

#include "bodyfit/errors.hpp"

namespace bodyfit {

namespace {

constexpr double kStochasticTol = 1e-9;
constexpr int kMaxRegressorNonzeros = 16;

void requireDims(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta) {
    if (beta.beta.size() != model.numShape()) {
        std::ostringstream os;
        os << "forward: beta has " << beta.beta.size() << " entries, model expects " << model.numShape();
        throw ValidationError(os.str());
    }
    if (theta.theta.size() != model.poseDim()) {
        std::ostringstream os;
        os << "forward: theta has " << theta.theta.size() << " entries, model expects " << model.poseDim();
        throw ValidationError(os.str());
    }
    if (!beta.beta.allFinite() || !theta.theta.allFinite())
        throw ValidationError("forward: non-finite parameters");
}

Eigen::Map<const RowMatX3> asPoints(const Eigen::VectorXd& flat) {
    return Eigen::Map<const RowMatX3>(flat.data(), flat.size() / 3, 3);
}

}  // namespace

std::vector<std::string> modelInvariantViolations(const BodyModel& m) {
    std::vector<std::string> out;
    const int n = m.numVertices();
    const int joints = m.numJoints();
    if (n == 0) out.emplace_back("model has no vertices");
    if (joints == 0) {
        out.emplace_back("model has no joints");
        return out;
    }
    if (m.parents[0] != -1) out.emplace_back("root parent must be -1");
    for (int j = 1; j < joints; ++j)
        if (m.parents[j] < 0 || m.parents[j] >= j)
            out.emplace_back("parent of joint " + std::to_string(j) + " must precede it");
    for (int f = 0; f < m.faces.rows(); ++f)
        for (int c = 0; c < 3; ++c)
            if (m.faces(f, c) < 0 || m.faces(f, c) >= n) {
                out.emplace_back("face " + std::to_string(f) + " references a missing vertex");
                c = 3;
            }
    if (m.shapeBlendshapes.rows() != 3 * n) out.emplace_back("shape blendshapes must have 3N rows");
    if (m.hasPoseBlendshapes() &&
        (m.poseBlendshapes.rows() != 3 * n || m.poseBlendshapes.cols() != 9 * (joints - 1)))
        out.emplace_back("pose blendshapes must be 3N x 9K");
    if (m.jointRegressor.rows() != joints || m.jointRegressor.cols() != n) {
        out.emplace_back("joint regressor must be (K+1) x N");
    } else {
        for (int r = 0; r < joints; ++r) {
            double sum = 0.0;
            int nnz = 0;
            bool negative = false;
            for (SparseRowMat::InnerIterator it(m.jointRegressor, r); it; ++it) {
                sum += it.value();
                if (it.value() != 0.0) ++nnz;
                if (it.value() < 0.0) negative = true;
            }
            if (std::abs(sum - 1.0) > kStochasticTol)
                out.emplace_back("joint regressor row " + std::to_string(r) + " does not sum to 1");
            if (nnz > kMaxRegressorNonzeros)
                out.emplace_back("joint regressor row " + std::to_string(r) + " has more than 16 nonzeros");
            if (negative) out.emplace_back("joint regressor row " + std::to_string(r) + " has negative entries");
        }
    }
    if (m.skinningWeights.rows() != n || m.skinningWeights.cols() != joints) {
        out.emplace_back("skinning weights must be N x (K+1)");
    } else {
        for (int i = 0; i < n; ++i) {
            if ((m.skinningWeights.row(i).array() < 0.0).any()) {
                out.emplace_back("skinning weights of vertex " + std::to_string(i) + " are negative");
                break;
            }
            if (std::abs(m.skinningWeights.row(i).sum() - 1.0) > kStochasticTol) {
                out.emplace_back("skinning weights of vertex " + std::to_string(i) + " do not sum to 1");
                break;
            }
        }
    }
    if (!m.templateVertices.allFinite() || !m.shapeBlendshapes.allFinite() ||
        (m.hasPoseBlendshapes() && !m.poseBlendshapes.allFinite()))
        out.emplace_back("model contains non-finite values");
    return out;
}

void validateModel(const BodyModel& model) {
    const auto violations = modelInvariantViolations(model);
    if (!violations.empty()) throw ValidationError("invalid body model: " + violations.front());
}

PosedBody::PosedBody(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta)
    : model_(model) {
    requireDims(model, beta, theta);
    const int n = model.numVertices();
    const int joints = model.numJoints();

    const Eigen::VectorXd shapeOffsets = model.shapeBlendshapes * beta.beta;
    restShaped_ = model.templateVertices + asPoints(shapeOffsets);
    restJoints_ = model.jointRegressor * restShaped_;

    localRot_.resize(joints);
    localJac_.resize(joints);
    globalRot_.resize(joints);
    globalPos_.resize(joints);
    axes_.resize(3 * joints);
    // Posed minus rest joint position, kept separately so the rest pose is reproduced exactly.
    std::vector<Vec3> jointShift(joints);
    for (int j = 0; j < joints; ++j) {
        const Vec3 w = theta.joint(j);
        localRot_[j] = rodrigues(w);
        localJac_[j] = rodriguesJacobian(w);
        const int p = model.parents[j];
        const Vec3 jointRest = restJoints_.row(j).transpose();
        if (p < 0) {
            globalRot_[j] = localRot_[j];
            jointShift[j].setZero();
        } else {
            globalRot_[j] = globalRot_[p] * localRot_[j];
            jointShift[j] = jointShift[p] + (globalRot_[p] - Mat3::Identity()) * (jointRest - restJoints_.row(p).transpose());
        }
        globalPos_[j] = jointRest + jointShift[j];
        const Mat3 parentRot = p < 0 ? Mat3::Identity() : globalRot_[p];
        for (int c = 0; c < 3; ++c) {
            Mat3 d;
            for (int r = 0; r < 3; ++r)
                for (int col = 0; col < 3; ++col) d(r, col) = localJac_[j](3 * r + col, c);
            axes_[3 * j + c] = parentRot * vee(d * localRot_[j].transpose());
        }
    }

    restPosed_ = restShaped_;
    if (model.hasPoseBlendshapes()) {
        Eigen::VectorXd features(9 * (joints - 1));
        for (int j = 1; j < joints; ++j) {
            const Mat3 d = localRot_[j] - Mat3::Identity();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) features[9 * (j - 1) + 3 * r + c] = d(r, c);
        }
        const Eigen::VectorXd poseOffsets = model.poseBlendshapes * features;
        restPosed_ += asPoints(poseOffsets);
    }

    influenceStart_.assign(n + 1, 0);
    influences_.clear();
    influences_.reserve(static_cast<size_t>(n) * 3);
    mesh_.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        influenceStart_[i] = static_cast<int>(influences_.size());
        const Vec3 v = restPosed_.row(i).transpose();
        Vec3 posed = v;
        for (int k = 0; k < joints; ++k) {
            const double w = model.skinningWeights(i, k);
            if (w == 0.0) continue;
            const Vec3 offset = (globalRot_[k] - Mat3::Identity()) * (v - restJoints_.row(k).transpose()) + jointShift[k];
            influences_.push_back({k, w, v + offset});
            posed += w * offset;
        }
        mesh_.vertices.row(i) = posed.transpose();
    }
    influenceStart_[n] = static_cast<int>(influences_.size());
    joints_.joints = model.jointRegressor * mesh_.vertices;
}

ForwardJacobians PosedBody::jacobians() const {
    const BodyModel& m = model_;
    const int n = m.numVertices();
    const int joints = m.numJoints();
    const int shapeDim = m.numShape();
    ForwardJacobians out;
    out.verticesTheta = Eigen::MatrixXd::Zero(3 * n, 3 * joints);
    out.verticesBeta = Eigen::MatrixXd::Zero(3 * n, shapeDim);

    // Blend of the global rotations acting on each rest vertex.
    std::vector<Mat3> blendRot(n, Mat3::Zero());
    std::vector<Vec3> subtreePoint(joints);
    std::vector<double> subtreeWeight(joints);
    for (int i = 0; i < n; ++i) {
        std::fill(subtreePoint.begin(), subtreePoint.end(), Vec3::Zero());
        std::fill(subtreeWeight.begin(), subtreeWeight.end(), 0.0);
        for (int q = influenceStart_[i]; q < influenceStart_[i + 1]; ++q) {
            const Influence& inf = influences_[q];
            blendRot[i] += inf.weight * globalRot_[inf.joint];
            for (int j = inf.joint; j >= 0; j = m.parents[j]) {
                subtreePoint[j] += inf.weight * inf.point;
                subtreeWeight[j] += inf.weight;
            }
        }
        for (int j = 0; j < joints; ++j) {
            if (subtreeWeight[j] == 0.0) continue;
            const Vec3 lever = subtreePoint[j] - subtreeWeight[j] * globalPos_[j];
            for (int c = 0; c < 3; ++c)
                out.verticesTheta.block<3, 1>(3 * i, 3 * j + c) = axes_[3 * j + c].cross(lever);
        }
    }

    if (m.hasPoseBlendshapes()) {
        // d restPosed / d theta for body joints, then rotate by the blend.
        Eigen::MatrixXd restTheta = Eigen::MatrixXd::Zero(3 * n, 3 * joints);
        for (int j = 1; j < joints; ++j)
            restTheta.middleCols<3>(3 * j) = m.poseBlendshapes.middleCols<9>(9 * (j - 1)) * localJac_[j];
        for (int i = 0; i < n; ++i)
            out.verticesTheta.middleRows<3>(3 * i) += blendRot[i] * restTheta.middleRows<3>(3 * i);
    }

    for (int b = 0; b < shapeDim; ++b) {
        const Eigen::VectorXd col = m.shapeBlendshapes.col(b);
        const auto restDelta = asPoints(col);
        const RowMatX3 jointDelta = m.jointRegressor * restDelta;
        std::vector<Vec3> posDelta(joints);
        std::vector<Vec3> offset(joints);
        for (int k = 0; k < joints; ++k) {
            const int p = m.parents[k];
            const Vec3 dj = jointDelta.row(k).transpose();
            posDelta[k] = p < 0 ? dj : Vec3(posDelta[p] + globalRot_[p] * (dj - jointDelta.row(p).transpose()));
            offset[k] = posDelta[k] - globalRot_[k] * dj;
        }
        for (int i = 0; i < n; ++i) {
            Vec3 d = blendRot[i] * restDelta.row(i).transpose();
            for (int q = influenceStart_[i]; q < influenceStart_[i + 1]; ++q)
                d += influences_[q].weight * offset[influences_[q].joint];
            out.verticesBeta.block<3, 1>(3 * i, b) = d;
        }
    }

    out.jointsTheta = Eigen::MatrixXd::Zero(3 * joints, 3 * joints);
    out.jointsBeta = Eigen::MatrixXd::Zero(3 * joints, shapeDim);
    for (int r = 0; r < joints; ++r)
        for (SparseRowMat::InnerIterator it(m.jointRegressor, r); it; ++it) {
            out.jointsTheta.middleRows<3>(3 * r) += it.value() * out.verticesTheta.middleRows<3>(3 * it.col());
            out.jointsBeta.middleRows<3>(3 * r) += it.value() * out.verticesBeta.middleRows<3>(3 * it.col());
        }
    return out;
}

ParamGradient PosedBody::vjp(const RowMatX3& dVertices, const RowMatX3* dJoints) const {
    const BodyModel& m = model_;
    const int n = m.numVertices();
    const int joints = m.numJoints();
    if (dVertices.rows() != n) throw ValidationError("vjp: vertex gradient has wrong row count");
    RowMatX3 g = dVertices;
    if (dJoints != nullptr) {
        if (dJoints->rows() != joints) throw ValidationError("vjp: joint gradient has wrong row count");
        g.noalias() += m.jointRegressor.transpose() * (*dJoints);
    }

    std::vector<Vec3> moment(joints, Vec3::Zero());
    std::vector<Vec3> force(joints, Vec3::Zero());
    RowMatX3 dRest = RowMatX3::Zero(n, 3);
    for (int i = 0; i < n; ++i) {
        const Vec3 gi = g.row(i).transpose();
        Vec3 h = Vec3::Zero();
        for (int q = influenceStart_[i]; q < influenceStart_[i + 1]; ++q) {
            const Influence& inf = influences_[q];
            moment[inf.joint] += inf.weight * inf.point.cross(gi);
            force[inf.joint] += inf.weight * gi;
            h += inf.weight * (globalRot_[inf.joint].transpose() * gi);
        }
        dRest.row(i) = h.transpose();
    }

    ParamGradient out;
    out.theta = Eigen::VectorXd::Zero(3 * joints);
    std::vector<Vec3> subMoment = moment;
    std::vector<Vec3> subForce = force;
    for (int j = joints - 1; j >= 0; --j) {
        const Vec3 torque = subMoment[j] - globalPos_[j].cross(subForce[j]);
        for (int c = 0; c < 3; ++c) out.theta[3 * j + c] = axes_[3 * j + c].dot(torque);
        const int p = m.parents[j];
        if (p >= 0) {
            subMoment[p] += subMoment[j];
            subForce[p] += subForce[j];
        }
    }

    if (m.hasPoseBlendshapes()) {
        const Eigen::Map<const Eigen::VectorXd> flat(dRest.data(), 3 * n);
        const Eigen::VectorXd dFeatures = m.poseBlendshapes.transpose() * flat;
        for (int j = 1; j < joints; ++j)
            out.theta.segment<3>(3 * j) += localJac_[j].transpose() * dFeatures.segment<9>(9 * (j - 1));
    }

    // Rest joints enter through the skinning offsets and the joint chain.
    RowMatX3 dRestJoints = RowMatX3::Zero(joints, 3);
    for (int k = 0; k < joints; ++k)
        dRestJoints.row(k) -= (globalRot_[k].transpose() * force[k]).transpose();
    std::vector<Vec3> dPos = force;
    for (int k = joints - 1; k >= 0; --k) {
        const int p = m.parents[k];
        if (p < 0) {
            dRestJoints.row(k) += dPos[k].transpose();
            continue;
        }
        const Vec3 pulled = globalRot_[p].transpose() * dPos[k];
        dRestJoints.row(k) += pulled.transpose();
        dRestJoints.row(p) -= pulled.transpose();
        dPos[p] += dPos[k];
    }
    dRest.noalias() += m.jointRegressor.transpose() * dRestJoints;
    const Eigen::Map<const Eigen::VectorXd> flatRest(dRest.data(), 3 * n);
    out.beta = m.shapeBlendshapes.transpose() * flatRest;
    return out;
}

ForwardResult forward(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta) {
    return PosedBody(model, beta, theta).result();
}

ForwardJacobians forwardJacobians(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta) {
    return PosedBody(model, beta, theta).jacobians();
}

double meshHeight(const RowMatX3& vertices) {
    if (vertices.rows() == 0) return 0.0;
    return vertices.col(1).maxCoeff() - vertices.col(1).minCoeff();
}

}  // namespace bodyfit
