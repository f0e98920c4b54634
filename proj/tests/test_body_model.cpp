#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bodyfit/errors.hpp"
#include "bodyfit/model_io.hpp"
#include "bodyfit/toy_model.hpp"
#include "test_util.hpp"

using namespace bodyfit;

namespace {

Eigen::VectorXd flatten(const RowMatX3& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

PoseParams randomPose(const BodyModel& m, CounterRng& rng, double sd = 0.5) {
    return {test::randomVector(rng, m.poseDim(), sd)};
}

ShapeParams randomShape(const BodyModel& m, CounterRng& rng) { return {test::randomVector(rng, m.numShape())}; }

// Largest per-entry relative error over entries whose reference magnitude exceeds 1e-6.
double entrywiseError(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
    double worst = 0;
    for (Eigen::Index i = 0; i < numeric.rows(); ++i)
        for (Eigen::Index j = 0; j < numeric.cols(); ++j)
            if (std::abs(numeric(i, j)) > 1e-6)
                worst = std::max(worst, test::relativeError(analytic(i, j), numeric(i, j)));
    return worst;
}

const BodyModel& smallModel() {
    static const BodyModel m = buildToyModel({200, 15, 6, 3, 0.0});
    return m;
}

const BodyModel& blendModel() {
    static const BodyModel m = buildToyModel({200, 15, 6, 4, 0.05});
    return m;
}

}  // namespace

TEST(ToyModel, DefaultsSatisfyInvariants) {
    const BodyModel m = buildToyModel({});
    EXPECT_EQ(m.numVertices(), 600);
    EXPECT_EQ(m.numJoints(), 16);
    EXPECT_EQ(m.numShape(), 10);
    EXPECT_TRUE(modelInvariantViolations(m).empty());
    EXPECT_TRUE(isClosedOrientable(m.faces, m.numVertices()));
    EXPECT_FALSE(m.hasPoseBlendshapes());
}

TEST(ToyModel, DeterministicPerSeed) {
    const std::string a = modelToJson(buildToyModel({})).dump();
    const std::string b = modelToJson(buildToyModel({})).dump();
    const std::string c = modelToJson(buildToyModel({600, 15, 10, 2, 0.0})).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(ToyModel, FullSkeletonHas72PoseParameters) {
    const BodyModel m = buildToyModel({600, 23, 10, 1, 0.0});
    EXPECT_EQ(PoseParams::zero(m).theta.size(), 72);
    EXPECT_EQ(ShapeParams::zero(m).beta.size(), 10);
    EXPECT_TRUE(modelInvariantViolations(m).empty());
}

TEST(ToyModel, VariousSpecsAreValid) {
    for (int k : {3, 5, 9, 15, 19, 23})
        for (int n : {50, 137, 600, 1500}) {
            const BodyModel m = buildToyModel({n, k, 3, static_cast<uint64_t>(k + n), 0.01});
            EXPECT_EQ(m.numVertices(), n);
            EXPECT_EQ(m.numJoints(), k + 1);
            EXPECT_TRUE(modelInvariantViolations(m).empty()) << k << " " << n;
            EXPECT_TRUE(isClosedOrientable(m.faces, n)) << k << " " << n;
        }
}

TEST(ToyModel, ShapeBlendshapesAreOrthonormal) {
    const BodyModel m = buildToyModel({});
    const Eigen::MatrixXd gram = m.shapeBlendshapes.transpose() * m.shapeBlendshapes;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ToyModel, RejectsInfeasibleSpecs) {
    EXPECT_THROW(buildToyModel({49, 15, 10, 1, 0.0}), ValidationError);
    EXPECT_THROW(buildToyModel({600, 2, 10, 1, 0.0}), ValidationError);
    EXPECT_THROW(buildToyModel({600, 24, 10, 1, 0.0}), ValidationError);
    EXPECT_THROW(buildToyModel({600, 15, 0, 1, 0.0}), ValidationError);
}

TEST(BodyModelInvariants, DetectViolations) {
    BodyModel m = buildToyModel({});
    m.parents[3] = 5;
    EXPECT_FALSE(modelInvariantViolations(m).empty());
    m = buildToyModel({});
    m.skinningWeights(0, 0) += 0.1;
    EXPECT_FALSE(modelInvariantViolations(m).empty());
    m = buildToyModel({});
    m.faces(0, 0) = m.numVertices();
    EXPECT_THROW(validateModel(m), ValidationError);
    m = buildToyModel({});
    m.jointRegressor.coeffRef(1, 0) += 0.5;
    EXPECT_FALSE(modelInvariantViolations(m).empty());
}

TEST(Forward, RestPoseReturnsTemplate) {
    const BodyModel m = buildToyModel({});
    const ForwardResult r = forward(m, ShapeParams::zero(m), PoseParams::zero(m));
    EXPECT_TRUE((r.mesh.vertices.array() == m.templateVertices.array()).all());
}

TEST(Forward, GlobalRotationIsRigidAboutRoot) {
    const BodyModel m = buildToyModel({});
    CounterRng rng(31, 0);
    for (int i = 0; i < 10; ++i) {
        const ShapeParams beta = randomShape(m, rng);
        const Vec3 w = test::randomVector(rng, 3);
        PoseParams theta = PoseParams::zero(m);
        theta.setJoint(0, w);
        const ForwardResult rest = forward(m, beta, PoseParams::zero(m));
        const ForwardResult posed = forward(m, beta, theta);
        const Vec3 root = rest.joints.joints.row(0).transpose();
        const Mat3 r = rodrigues(w);
        for (int v = 0; v < m.numVertices(); ++v) {
            const Vec3 expected = r * (rest.mesh.vertices.row(v).transpose() - root) + root;
            EXPECT_LT((posed.mesh.vertices.row(v).transpose() - expected).norm(), 1e-12);
        }
    }
}

TEST(Forward, RigidEquivarianceOfGlobalJoint) {
    const BodyModel m = buildToyModel({});
    CounterRng rng(32, 0);
    for (int i = 0; i < 10; ++i) {
        const ShapeParams beta = randomShape(m, rng);
        const PoseParams theta = randomPose(m, rng);
        const Vec3 extra = test::randomVector(rng, 3);
        PoseParams rotated = theta;
        rotated.setJoint(0, axisAngleFromRotation(rodrigues(extra) * rodrigues(theta.joint(0))));
        const ForwardResult a = forward(m, beta, theta);
        const ForwardResult b = forward(m, beta, rotated);
        const Vec3 root = a.joints.joints.row(0).transpose();
        const Mat3 r = rodrigues(extra);
        const double height = meshHeight(a.mesh.vertices);
        for (int v = 0; v < m.numVertices(); ++v) {
            const Vec3 expected = r * (a.mesh.vertices.row(v).transpose() - root) + root;
            EXPECT_LT((b.mesh.vertices.row(v).transpose() - expected).norm(), 1e-9 * height);
        }
        for (int j = 0; j < m.numJoints(); ++j) {
            const Vec3 expected = r * (a.joints.joints.row(j).transpose() - root) + root;
            EXPECT_LT((b.joints.joints.row(j).transpose() - expected).norm(), 1e-9 * height);
        }
    }
}

TEST(Forward, JointsAreRegressedFromPosedVertices) {
    const BodyModel m = blendModel();
    CounterRng rng(33, 0);
    for (int i = 0; i < 20; ++i) {
        const ForwardResult r = forward(m, randomShape(m, rng), randomPose(m, rng));
        const RowMatX3 replay = m.jointRegressor * r.mesh.vertices;
        EXPECT_LT((replay - r.joints.joints).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, IsBitDeterministic) {
    const BodyModel m = blendModel();
    CounterRng rng(34, 0);
    const ShapeParams beta = randomShape(m, rng);
    const PoseParams theta = randomPose(m, rng);
    const ForwardResult a = forward(m, beta, theta), b = forward(m, beta, theta);
    EXPECT_TRUE((a.mesh.vertices.array() == b.mesh.vertices.array()).all());
    EXPECT_TRUE((a.joints.joints.array() == b.joints.joints.array()).all());
}

TEST(Forward, RejectsDimensionMismatch) {
    const BodyModel m = smallModel();
    EXPECT_THROW(forward(m, ShapeParams{Eigen::VectorXd::Zero(2)}, PoseParams::zero(m)), ValidationError);
    EXPECT_THROW(forward(m, ShapeParams::zero(m), PoseParams{Eigen::VectorXd::Zero(5)}), ValidationError);
}

TEST(ForwardJacobians, BetaColumnsAtRestEqualBlendshapes) {
    const BodyModel m = smallModel();
    CounterRng rng(35, 0);
    const ForwardJacobians jac = forwardJacobians(m, randomShape(m, rng), PoseParams::zero(m));
    EXPECT_LT((jac.verticesBeta - m.shapeBlendshapes).cwiseAbs().maxCoeff(), 1e-12);
}

class ForwardJacobianFd : public ::testing::TestWithParam<bool> {};

TEST_P(ForwardJacobianFd, MatchesCentralDifferences) {
    const BodyModel& m = GetParam() ? blendModel() : smallModel();
    CounterRng rng(GetParam() ? 36 : 37, 0);
    for (int trial = 0; trial < 4; ++trial) {
        const ShapeParams beta = randomShape(m, rng);
        const PoseParams theta = randomPose(m, rng, 0.6);
        const ForwardJacobians jac = forwardJacobians(m, beta, theta);
        const auto vertsOfTheta = [&](const Eigen::VectorXd& t) {
            return flatten(forward(m, beta, PoseParams{t}).mesh.vertices);
        };
        const auto vertsOfBeta = [&](const Eigen::VectorXd& b) {
            return flatten(forward(m, ShapeParams{b}, theta).mesh.vertices);
        };
        const auto jointsOfTheta = [&](const Eigen::VectorXd& t) {
            return flatten(forward(m, beta, PoseParams{t}).joints.joints);
        };
        const auto jointsOfBeta = [&](const Eigen::VectorXd& b) {
            return flatten(forward(m, ShapeParams{b}, theta).joints.joints);
        };
        EXPECT_LT(entrywiseError(jac.verticesTheta, test::numericJacobian(vertsOfTheta, theta.theta, 1e-5)), 1e-4);
        EXPECT_LT(entrywiseError(jac.verticesBeta, test::numericJacobian(vertsOfBeta, beta.beta, 1e-5)), 1e-4);
        EXPECT_LT(entrywiseError(jac.jointsTheta, test::numericJacobian(jointsOfTheta, theta.theta, 1e-5)), 1e-4);
        EXPECT_LT(entrywiseError(jac.jointsBeta, test::numericJacobian(jointsOfBeta, beta.beta, 1e-5)), 1e-4);
    }
}

INSTANTIATE_TEST_SUITE_P(PoseBlendshapes, ForwardJacobianFd, ::testing::Values(false, true));

TEST(ForwardJacobians, LeafJointOnlyMovesItsVertices) {
    const BodyModel m = smallModel();
    std::vector<bool> isParent(m.numJoints(), false);
    for (int j = 1; j < m.numJoints(); ++j) isParent[m.parents[j]] = true;
    CounterRng rng(38, 0);
    const ShapeParams beta = randomShape(m, rng);
    const PoseParams theta = randomPose(m, rng);
    const ForwardResult base = forward(m, beta, theta);
    for (int j = 1; j < m.numJoints(); ++j) {
        if (isParent[j]) continue;
        PoseParams moved = theta;
        moved.setJoint(j, theta.joint(j) + Vec3(0.3, -0.2, 0.1));
        const ForwardResult r = forward(m, beta, moved);
        for (int v = 0; v < m.numVertices(); ++v)
            if (m.skinningWeights(v, j) == 0.0) {
                EXPECT_EQ(r.mesh.vertices.row(v), base.mesh.vertices.row(v)) << "joint " << j << " vertex " << v;
            }
    }
}

TEST(PosedBodyVjp, MatchesTransposedJacobian) {
    for (const BodyModel* m : {&smallModel(), &blendModel()}) {
        CounterRng rng(39, 0);
        const ShapeParams beta = randomShape(*m, rng);
        const PoseParams theta = randomPose(*m, rng);
        const PosedBody body(*m, beta, theta);
        const ForwardJacobians jac = body.jacobians();
        RowMatX3 dv(m->numVertices(), 3), dj(m->numJoints(), 3);
        for (Eigen::Index i = 0; i < dv.size(); ++i) dv.data()[i] = rng.normal();
        for (Eigen::Index i = 0; i < dj.size(); ++i) dj.data()[i] = rng.normal();
        const ParamGradient g = body.vjp(dv, &dj);
        const Eigen::VectorXd theta2 = jac.verticesTheta.transpose() * flatten(dv) + jac.jointsTheta.transpose() * flatten(dj);
        const Eigen::VectorXd beta2 = jac.verticesBeta.transpose() * flatten(dv) + jac.jointsBeta.transpose() * flatten(dj);
        EXPECT_LT((g.theta - theta2).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, theta2.cwiseAbs().maxCoeff()));
        EXPECT_LT((g.beta - beta2).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, beta2.cwiseAbs().maxCoeff()));
        const ParamGradient gv = body.vjp(dv);
        const Eigen::VectorXd theta3 = jac.verticesTheta.transpose() * flatten(dv);
        EXPECT_LT((gv.theta - theta3).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, theta3.cwiseAbs().maxCoeff()));
    }
}

TEST(ModelIo, JsonRoundTripIsExact) {
    const BodyModel m = blendModel();
    const BodyModel back = modelFromJson(nlohmann::json::parse(modelToJson(m).dump()));
    EXPECT_TRUE((back.templateVertices.array() == m.templateVertices.array()).all());
    EXPECT_TRUE((back.shapeBlendshapes.array() == m.shapeBlendshapes.array()).all());
    EXPECT_TRUE((back.poseBlendshapes.array() == m.poseBlendshapes.array()).all());
    EXPECT_TRUE((back.skinningWeights.array() == m.skinningWeights.array()).all());
    EXPECT_TRUE((back.faces.array() == m.faces.array()).all());
    EXPECT_EQ(back.parents, m.parents);
    EXPECT_EQ(Eigen::MatrixXd(back.jointRegressor), Eigen::MatrixXd(m.jointRegressor));
    EXPECT_EQ(modelToJson(back).dump(), modelToJson(m).dump());
}

TEST(ModelIo, ExactDecimalStrings) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) EXPECT_EQ(parseExact(formatExact(v)), v);
    EXPECT_THROW(parseExact("1.5x"), IoError);
}

TEST(ModelIo, RejectsGarbledDocuments) {
    nlohmann::json doc = modelToJson(smallModel());
    doc.erase("faces");
    EXPECT_THROW(modelFromJson(doc), IoError);
    doc = modelToJson(smallModel());
    doc["template"].erase(0);
    EXPECT_THROW(modelFromJson(doc), IoError);
    EXPECT_THROW(loadModel("/nonexistent/model.json"), IoError);
}
