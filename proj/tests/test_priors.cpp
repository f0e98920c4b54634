#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "bodyfit/errors.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/toy_model.hpp"
#include "test_util.hpp"

using namespace bodyfit;

namespace {

const BodyModel& toy() {
    static const BodyModel m = buildToyModel({300, 15, 6, 2, 0.0});
    return m;
}

Dataset toyData(int count, uint64_t seed, NoiseSpec noise = NoiseSpec::none()) {
    GenConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.noise = noise;
    return generateDataset(toy(), PoseSampler::procedural(toy(), seed), ShapeSampler(toy().numShape(), 1.0, seed), cfg);
}

PosePrior smallPose(uint64_t seed = 1, double dropout = 0.5) {
    return PosePrior(toy().numJoints(), toy().poseDim(), {32, 1, dropout}, seed);
}

ShapePrior smallShape(uint64_t seed = 1, double dropout = 0.5) {
    return ShapePrior(toy().numShape(), {{2, 4, 4, 4, 4}, 16, dropout}, seed);
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("bodyfit_priors_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::vector<Eigen::VectorXd> snapshot(const LayerGraph& g) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& p : g.parameters()) out.push_back(p.value);
    return out;
}

}  // namespace

TEST(LossVariant, NamesRoundTrip) {
    for (LossVariant v : {LossVariant::AxisAngle, LossVariant::RotMat, LossVariant::RotMatVertex, LossVariant::RotMatJoint})
        EXPECT_EQ(parseVariant(variantName(v)), v);
    EXPECT_THROW(parseVariant("quaternion"), ValidationError);
}

TEST(PosePrior, ZeroHeadReturnsBias) {
    PosePrior p = smallPose();
    auto& params = p.net().parameters();
    CounterRng rng(3, 0);
    params[params.size() - 2].value.setZero();
    params.back().value = test::randomVector(rng, toy().poseDim());
    const Dataset d = toyData(3, 5);
    for (const auto& r : d.records) EXPECT_EQ(p.predict(r.keypoints).theta, params.back().value);
}

TEST(PosePrior, RejectsMismatchedKeypointCount) {
    const PosePrior p = smallPose();
    Keypoints2D kp{RowMatX2::Zero(toy().numJoints() - 1, 2), Eigen::VectorXd::Ones(toy().numJoints() - 1)};
    EXPECT_THROW(p.predict(kp), ValidationError);
    EXPECT_THROW(PosePrior(0, 3, {}, 1), ValidationError);
    EXPECT_THROW(PosePrior(4, 12, {16, 1, 1.0}, 1), ValidationError);
}

TEST(ShapePrior, AllZeroSilhouetteGivesFiniteOutput) {
    const ShapePrior s = smallShape();
    const Mask empty = Mask::Zero(kImageSize, kImageSize);
    const ShapeParams b = s.predict(empty);
    EXPECT_EQ(b.beta.size(), toy().numShape());
    EXPECT_TRUE(b.beta.allFinite());
    EXPECT_THROW(s.predict(Mask::Zero(32, 32)), ValidationError);
}

TEST(ShapePrior, FlipMirrorsInput) {
    const ShapePrior s = smallShape();
    Mask m = Mask::Zero(kImageSize, kImageSize);
    m(10, 3) = 1;
    const Tensor x = s.encode({&m}, {true});
    EXPECT_EQ(x.data()[10 * kImageSize + kImageSize - 1 - 3], 1.0);
    EXPECT_EQ(x.data()[10 * kImageSize + 3], 0.0);
}

TEST(Priors, PoseAndShapeAreDisentangled) {
    const PosePrior p = smallPose();
    const ShapePrior s = smallShape();
    const Dataset a = toyData(4, 21);
    Dataset keypointsSwapped = a, masksSwapped = a;
    const Dataset b = toyData(4, 22);
    for (size_t i = 0; i < a.size(); ++i) {
        keypointsSwapped.records[i].keypoints = b.records[i].keypoints;
        masksSwapped.records[i].silhouette = b.records[i].silhouette;
    }
    const auto base = predictDataset(p, s, a);
    const auto kpOnly = predictDataset(p, s, keypointsSwapped);
    const auto maskOnly = predictDataset(p, s, masksSwapped);
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(base[i].beta.beta, kpOnly[i].beta.beta);
        EXPECT_NE(base[i].theta.theta, kpOnly[i].theta.theta);
        EXPECT_EQ(base[i].theta.theta, maskOnly[i].theta.theta);
    }
}

TEST(PoseSampleLoss, GradientMatchesFiniteDifferences) {
    CounterRng rng(8, 0);
    const Eigen::VectorXd theta = test::randomVector(rng, toy().poseDim(), 0.4);
    const Eigen::VectorXd beta = test::randomVector(rng, toy().numShape());
    const Eigen::VectorXd hat = theta + test::randomVector(rng, toy().poseDim(), 0.3);
    for (LossVariant v : {LossVariant::AxisAngle, LossVariant::RotMat, LossVariant::RotMatVertex, LossVariant::RotMatJoint}) {
        const SampleLoss sl = poseSampleLoss(toy(), hat, theta, beta, v, true, 0.7);
        auto f = [&](const Eigen::VectorXd& x) {
            const SampleLoss s = poseSampleLoss(toy(), x, theta, beta, v, true, 0.7);
            return Eigen::VectorXd::Constant(1, s.param + 0.7 * s.point);
        };
        const Eigen::VectorXd fd = test::numericJacobian(f, hat, 1e-6).row(0).transpose();
        for (Eigen::Index i = 0; i < fd.size(); ++i)
            EXPECT_NEAR(sl.dOutput[i], fd[i], 1e-5 * std::max(1.0, std::abs(fd[i]))) << variantName(v) << " " << i;
    }
}

TEST(ShapeSampleLoss, GradientMatchesFiniteDifferences) {
    CounterRng rng(9, 0);
    const Eigen::VectorXd theta = test::randomVector(rng, toy().poseDim(), 0.4);
    const Eigen::VectorXd beta = test::randomVector(rng, toy().numShape());
    const Eigen::VectorXd hat = test::randomVector(rng, toy().numShape());
    const SampleLoss sl = shapeSampleLoss(toy(), hat, beta, theta, LossVariant::RotMatVertex, true, 1.0);
    auto f = [&](const Eigen::VectorXd& x) {
        const SampleLoss s = shapeSampleLoss(toy(), x, beta, theta, LossVariant::RotMatVertex, true, 1.0);
        return Eigen::VectorXd::Constant(1, s.param + s.point);
    };
    const Eigen::VectorXd fd = test::numericJacobian(f, hat, 1e-6).row(0).transpose();
    for (Eigen::Index i = 0; i < fd.size(); ++i) EXPECT_NEAR(sl.dOutput[i], fd[i], 1e-5 * std::max(1.0, std::abs(fd[i])));
}

TEST(PosePrior, EndToEndVertexGradientThroughForward) {
    PosePrior p(toy().numJoints(), toy().poseDim(), {6, 1, 0.0}, 4);
    CounterRng rng(10, 0);
    for (auto& par : p.net().parameters())
        for (Eigen::Index i = 0; i < par.value.size(); ++i) par.value[i] = rng.normal(0.0, 0.3);
    const Dataset d = toyData(1, 30);
    const auto& rec = d.records[0];
    const ForwardResult ref = forward(toy(), {rec.beta}, {rec.theta});
    const Tensor x = p.encode({&rec.keypoints});
    auto loss = [&] {
        const Tensor y = p.net().predict(x);
        return perVertexLoss(forward(toy(), {rec.beta}, {y.matrix().row(0).transpose()}).mesh, ref.mesh).value;
    };
    const Tensor y = p.net().forward(x, false);
    const PosedBody body(toy(), {rec.beta}, {y.matrix().row(0).transpose()});
    const ParamGradient g = body.vjp(perVertexLoss(body.mesh(), ref.mesh).dHat);
    Tensor up({1, toy().poseDim()});
    up.matrix().row(0) = g.theta.transpose();
    p.net().zeroGrad();
    p.net().backward(up);
    const double h = 1e-6;
    double worst = 0;
    for (auto& par : p.net().parameters()) {
        for (Eigen::Index i = 0; i < par.value.size(); i += 3) {
            const double orig = par.value[i];
            par.value[i] = orig + h;
            const double lp = loss();
            par.value[i] = orig - h;
            const double lm = loss();
            par.value[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            if (std::abs(fd) < 1e-6 && std::abs(par.grad[i]) < 1e-6) continue;
            worst = std::max(worst, test::relativeError(par.grad[i], fd));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(TrainPriors, OneSampleOverfit) {
    const Dataset d = toyData(1, 40);
    TrainPlan plan;
    plan.phase1Steps = 600;
    plan.phase2Steps = 1400;
    plan.batchSize = 1;
    plan.learningRate = 1e-3;
    const auto& rec = d.records[0];
    const ForwardResult ref = forward(toy(), {rec.beta}, {rec.theta});

    PosePrior p = smallPose(2);
    trainPosePrior(p, d, toy(), plan);
    const PoseParams th = p.predict(rec.keypoints);
    EXPECT_LT(meanPerVertexError(forward(toy(), {rec.beta}, th).mesh.vertices, ref.mesh.vertices), 1e-2);

    ShapePrior s = smallShape(2);
    plan.flipAugment = false;
    trainShapePrior(s, d, toy(), plan);
    const ShapeParams b = s.predict(rec.silhouette);
    EXPECT_LT(meanPerVertexError(forward(toy(), b, {rec.theta}).mesh.vertices, ref.mesh.vertices), 1e-2);
}

TEST(TrainPriors, LogsAreBitIdenticalAcrossRuns) {
    const Dataset d = toyData(40, 41);
    TrainPlan plan;
    plan.phase1Steps = 20;
    plan.phase2Steps = 20;
    plan.batchSize = 8;
    auto run = [&] {
        TrainedPriors t = trainPriors(d, toy(), plan, plan, {32, 1, 0.5}, {{2, 4, 4, 4, 4}, 16, 0.5});
        return t.poseLog.csv() + t.shapeLog.csv();
    };
    const std::string a = run();
    EXPECT_EQ(a, run());
    EXPECT_NE(a.find("step,phase,total,param,point"), std::string::npos);
}

TEST(TrainPriors, SmoothedLossDecreases) {
    const Dataset d = toyData(400, 42, NoiseSpec{});
    TrainPlan plan;
    plan.phase1Steps = 1000;
    plan.phase2Steps = 0;
    plan.batchSize = 32;
    plan.variant = LossVariant::RotMat;
    PosePrior p(toy().numJoints(), toy().poseDim(), {64, 1, 0.5}, 3);
    const TrainLog log = trainPosePrior(p, d, toy(), plan);
    EXPECT_GE(log.emaDecreaseFraction(100, 100), 0.95);
    EXPECT_LT(log.entries.back().param, log.entries.front().param);
}

TEST(TrainPriors, RejectsBadInputs) {
    PosePrior p = smallPose();
    TrainPlan plan;
    EXPECT_THROW(trainPosePrior(p, Dataset{}, toy(), plan), ValidationError);
    plan.phase1Steps = plan.phase2Steps = 0;
    EXPECT_THROW(trainPosePrior(p, toyData(2, 1), toy(), plan), ValidationError);
    const BodyModel other = buildToyModel({300, 12, 6, 2, 0.0});
    plan.phase1Steps = 1;
    EXPECT_THROW(trainPosePrior(p, toyData(2, 1), other, plan), ValidationError);
}

TEST(PosePrior, CheckpointRoundTrip) {
    const Dataset d = toyData(6, 50);
    PosePrior p = smallPose(5);
    ShapePrior s = smallShape(5);
    TrainPlan plan;
    plan.phase1Steps = 5;
    plan.phase2Steps = 5;
    plan.batchSize = 4;
    trainPosePrior(p, d, toy(), plan);
    trainShapePrior(s, d, toy(), plan);
    const auto pd = scratch("pose"), sd = scratch("shape");
    p.save(pd.string());
    s.save(sd.string());
    const PosePrior p2 = PosePrior::load(pd.string());
    const ShapePrior s2 = ShapePrior::load(sd.string());
    for (const auto& r : d.records) {
        EXPECT_EQ(p.predict(r.keypoints).theta, p2.predict(r.keypoints).theta);
        EXPECT_EQ(s.predict(r.silhouette).beta, s2.predict(r.silhouette).beta);
    }
    EXPECT_THROW(PosePrior::load(sd.string()), IoError);
    EXPECT_THROW(ShapePrior::load((pd / "missing").string()), IoError);
}

TEST(Finetune, ZeroStepsLeaveNetsUnchanged) {
    const Dataset d = toyData(8, 60);
    PosePrior p = smallPose(6);
    ShapePrior s = smallShape(6);
    const auto pBefore = snapshot(p.net()), sBefore = snapshot(s.net());
    FinetuneConfig cfg;
    cfg.steps = 0;
    const FinetuneLog log = finetuneReprojection(p, s, d, d, toy(), cfg);
    EXPECT_TRUE(log.reprojection.empty());
    EXPECT_EQ(snapshot(p.net()), pBefore);
    EXPECT_EQ(snapshot(s.net()), sBefore);
}

TEST(Finetune, RequiresCameras) {
    Dataset d = toyData(4, 61);
    d.records[2].camera.scale = 0.0;
    PosePrior p = smallPose();
    ShapePrior s = smallShape();
    FinetuneConfig cfg;
    cfg.steps = 1;
    EXPECT_THROW(finetuneReprojection(p, s, d, d, toy(), cfg), ValidationError);
}

TEST(Finetune, ReducesReprojectionLossOnFixedData) {
    const Dataset d = toyData(2, 62);
    PosePrior p = smallPose(7, 0.0);
    ShapePrior s = smallShape(7, 0.0);
    TrainPlan plan;
    plan.phase1Steps = 50;
    plan.phase2Steps = 0;
    plan.batchSize = 2;
    trainPosePrior(p, d, toy(), plan);
    trainShapePrior(s, d, toy(), plan);
    FinetuneConfig cfg;
    cfg.steps = 150;
    cfg.batchSize = 2;
    cfg.learningRate = 3e-4;
    cfg.alternate = false;
    cfg.useSilhouette = false;
    const FinetuneLog log = finetuneReprojection(p, s, d, Dataset{}, toy(), cfg);
    ASSERT_EQ(log.reprojection.size(), 150u);
    EXPECT_LT(log.reprojection.back(), 0.5 * log.reprojection.front());
}

TEST(Evaluate, PerfectPredictionsScorePerfectly) {
    const Dataset d = toyData(3, 70);
    std::vector<Prediction> preds;
    for (const auto& r : d.records) preds.push_back({{r.theta}, {r.beta}});
    const EvalReport rep = evaluatePredictions(toy(), d, preds);
    EXPECT_EQ(rep.count, 3);
    EXPECT_NEAR(rep.meanPerVertexError, 0.0, 1e-12);
    EXPECT_NEAR(rep.reconstructionError, 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(rep.segAccuracy, 1.0);
    EXPECT_DOUBLE_EQ(rep.segF1, 1.0);
    preds.pop_back();
    EXPECT_THROW(evaluatePredictions(toy(), d, preds), ValidationError);
}
