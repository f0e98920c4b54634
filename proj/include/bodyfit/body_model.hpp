#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "bodyfit/rotation.hpp"

namespace bodyfit {

using RowMatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowMatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using SparseRowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Fixed parameters of an articulated body model.
///
/// Joint 0 is the root; joints 1..K are body joints. Pose blendshapes, when
/// present, are driven by vec(R_j - I) of the K body joints in row-major
/// order, so their column count is 9K.
struct BodyModel {
    RowMatX3 templateVertices;       // N x 3
    Faces faces;                     // F x 3
    Eigen::MatrixXd shapeBlendshapes;  // 3N x B; column b is blendshape b flattened row-major
    Eigen::MatrixXd poseBlendshapes;   // 3N x 9K, or 0 x 0 when absent
    std::vector<int> parents;        // K+1, parents[0] == -1
    SparseRowMat jointRegressor;     // (K+1) x N
    Eigen::MatrixXd skinningWeights;  // N x (K+1)
    std::vector<std::string> jointNames;  // optional

    int numVertices() const { return static_cast<int>(templateVertices.rows()); }
    int numJoints() const { return static_cast<int>(parents.size()); }
    int numShape() const { return static_cast<int>(shapeBlendshapes.cols()); }
    int poseDim() const { return 3 * numJoints(); }
    bool hasPoseBlendshapes() const { return poseBlendshapes.size() > 0; }
};

struct ShapeParams {
    Eigen::VectorXd beta;

    static ShapeParams zero(const BodyModel& m) { return {Eigen::VectorXd::Zero(m.numShape())}; }
};

struct PoseParams {
    Eigen::VectorXd theta;

    static PoseParams zero(const BodyModel& m) { return {Eigen::VectorXd::Zero(m.poseDim())}; }
    Vec3 joint(int j) const { return theta.segment<3>(3 * j); }
    void setJoint(int j, const Vec3& w) { theta.segment<3>(3 * j) = w; }
    int numJoints() const { return static_cast<int>(theta.size() / 3); }
};

struct Mesh {
    RowMatX3 vertices;
};

struct JointSet {
    RowMatX3 joints;
};

struct ForwardResult {
    Mesh mesh;
    JointSet joints;
};

struct ForwardJacobians {
    Eigen::MatrixXd verticesTheta;  // 3N x 3(K+1)
    Eigen::MatrixXd verticesBeta;   // 3N x B
    Eigen::MatrixXd jointsTheta;    // 3(K+1) x 3(K+1)
    Eigen::MatrixXd jointsBeta;     // 3(K+1) x B
};

struct ParamGradient {
    Eigen::VectorXd theta;
    Eigen::VectorXd beta;
};

// Throws ValidationError describing the first violated invariant.
void validateModel(const BodyModel& model);
// All violated invariants, empty when the model is valid.
std::vector<std::string> modelInvariantViolations(const BodyModel& model);

/// One evaluation of the forward function with everything the Jacobians
/// and the vector-Jacobian product need kept around. Holds a reference to
/// the model, which must outlive it.
class PosedBody {
public:
    PosedBody(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta);

    const Mesh& mesh() const { return mesh_; }
    const JointSet& joints() const { return joints_; }
    const RowMatX3& restJoints() const { return restJoints_; }
    const RowMatX3& restVertices() const { return restShaped_; }
    const std::vector<Mat3>& globalRotations() const { return globalRot_; }
    const std::vector<Vec3>& globalJointPositions() const { return globalPos_; }
    ForwardResult result() const { return {mesh_, joints_}; }

    ForwardJacobians jacobians() const;

    // Pulls gradients on the posed vertices (and optionally the posed
    // joints) back to theta and beta.
    ParamGradient vjp(const RowMatX3& dVertices, const RowMatX3* dJoints = nullptr) const;

private:
    struct Influence {
        int joint;
        double weight;
        Vec3 point;  // G_k (v_hat - J_k) + t_k
    };

    const BodyModel& model_;
    RowMatX3 restShaped_;
    RowMatX3 restJoints_;
    RowMatX3 restPosed_;
    std::vector<Mat3> localRot_;
    std::vector<RotationJacobian> localJac_;
    std::vector<Mat3> globalRot_;
    std::vector<Vec3> globalPos_;
    // axes_[3j + c]: world-frame rotation axis of d/d theta_{j,c}
    std::vector<Vec3> axes_;
    std::vector<int> influenceStart_;
    std::vector<Influence> influences_;
    Mesh mesh_;
    JointSet joints_;
};

ForwardResult forward(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta);
ForwardJacobians forwardJacobians(const BodyModel& model, const ShapeParams& beta, const PoseParams& theta);

// Tallest extent along y of a vertex set.
double meshHeight(const RowMatX3& vertices);

}  // namespace bodyfit
