#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/datagen.hpp"
#include "bodyfit/losses.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/nnet.hpp"

namespace bodyfit {

enum class LossVariant { AxisAngle, RotMat, RotMatVertex, RotMatJoint };

std::string variantName(LossVariant v);
LossVariant parseVariant(const std::string& name);

struct PosePriorConfig {
    int width = 256;
    int units = 2;  // bilinear units
    double dropout = 0.5;
};

struct ShapePriorConfig {
    std::vector<int> channels{8, 16, 32, 64, 128};
    int width = 256;
    double dropout = 0.5;
};

void validatePosePriorConfig(const PosePriorConfig& cfg);
void validateShapePriorConfig(const ShapePriorConfig& cfg);

/// Keypoints (x, y, confidence) -> axis-angle pose. Coordinates enter
/// normalized to [-1, 1] by the image size, confidences raw.
class PosePrior {
public:
    PosePrior() = default;
    PosePrior(int numKeypoints, int poseDim, const PosePriorConfig& cfg, uint64_t seed);

    static Eigen::VectorXd features(const Keypoints2D& keypoints, int imageSize);
    Tensor encode(const std::vector<const Keypoints2D*>& batch) const;
    PoseParams predict(const Keypoints2D& keypoints) const;
    std::vector<PoseParams> predictBatch(const std::vector<const Keypoints2D*>& batch) const;

    LayerGraph& net() { return net_; }
    const LayerGraph& net() const { return net_; }
    int numKeypoints() const { return numKeypoints_; }
    int poseDim() const { return poseDim_; }
    int imageSize() const { return imageSize_; }

    void save(const std::string& directory) const;
    static PosePrior load(const std::string& directory);

private:
    LayerGraph net_;
    int numKeypoints_ = 0;
    int poseDim_ = 0;
    int imageSize_ = kImageSize;
};

/// 64x64 silhouette -> shape coefficients: five conv3x3 + relu + maxpool
/// blocks, a dense layer and one bilinear unit.
class ShapePrior {
public:
    ShapePrior() = default;
    ShapePrior(int shapeDim, const ShapePriorConfig& cfg, uint64_t seed);

    // flip mirrors the image horizontally.
    Tensor encode(const std::vector<const Mask*>& batch, const std::vector<bool>& flip = {}) const;
    ShapeParams predict(const Mask& silhouette) const;
    ShapeParams predict(const Silhouette& silhouette) const { return predict(silhouette.binarized()); }
    std::vector<ShapeParams> predictBatch(const std::vector<const Mask*>& batch) const;

    LayerGraph& net() { return net_; }
    const LayerGraph& net() const { return net_; }
    int shapeDim() const { return shapeDim_; }

    void save(const std::string& directory) const;
    static ShapePrior load(const std::string& directory);

private:
    LayerGraph net_;
    int shapeDim_ = 0;
};

struct TrainPlan {
    int phase1Steps = 4000;
    int phase2Steps = 6000;
    int batchSize = 64;
    LossVariant variant = LossVariant::RotMatVertex;
    double mix = 1.0;  // weight of the vertex/joint term in phase 2
    double learningRate = 3e-4;
    uint64_t seed = 1;
    bool flipAugment = true;  // ShapePrior only
};

void validateTrainPlan(const TrainPlan& plan);

struct LossLogEntry {
    int step = 0;
    int phase = 1;
    double total = 0.0;
    double param = 0.0;
    double point = 0.0;  // vertex or joint term, before mixing
};

struct TrainLog {
    std::vector<LossLogEntry> entries;

    std::string csv() const;
    // Fraction of consecutive checkpoints (every `every` steps) where the
    // exponential moving average of the total loss does not increase.
    double emaDecreaseFraction(int span, int every) const;
};

/// Loss of one predicted pose and its gradient. The point term (phase 2)
/// compares meshes or joints posed with the ground-truth shape.
struct SampleLoss {
    double param = 0.0;
    double point = 0.0;
    Eigen::VectorXd dOutput;
};

SampleLoss poseSampleLoss(const BodyModel& model, const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& beta, LossVariant variant, bool withPoint, double mix);
// Shape counterpart: parameter loss plus the vertex term posed with the
// ground-truth pose for the vertex/joint variants.
SampleLoss shapeSampleLoss(const BodyModel& model, const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta,
                           const Eigen::VectorXd& theta, LossVariant variant, bool withPoint, double mix);

TrainLog trainPosePrior(PosePrior& prior, const Dataset& data, const BodyModel& model, const TrainPlan& plan);
TrainLog trainShapePrior(ShapePrior& prior, const Dataset& data, const BodyModel& model, const TrainPlan& plan);

struct TrainedPriors {
    PosePrior pose;
    ShapePrior shape;
    TrainLog poseLog;
    TrainLog shapeLog;
};

TrainedPriors trainPriors(const Dataset& data, const BodyModel& model, const TrainPlan& posePlan,
                          const TrainPlan& shapePlan, const PosePriorConfig& poseCfg = {},
                          const ShapePriorConfig& shapeCfg = {});

struct FinetuneConfig {
    int steps = 500;
    int batchSize = 4;
    double learningRate = 8e-5;
    // Interleave one step on the 3D-annotated data after every reprojection step.
    bool alternate = true;
    int individualBatch = 16;
    LossVariant variant = LossVariant::RotMatVertex;
    // Confidence weighting masks dropped keypoints.
    LossConfig loss = LossConfig{.confidenceWeighted = true};
    bool useSilhouette = true;
    double temperature = 1.0;
    bool updateShape = true;
    uint64_t seed = 1;
};

void validateFinetuneConfig(const FinetuneConfig& cfg);

struct FinetuneLog {
    std::vector<double> reprojection;  // per step, batch mean
};

// End-to-end refinement through forward() and the renderer using only the 2D
// annotations of data2D and its per-record cameras. data3D feeds the
// interleaved individual updates and may be empty when alternate is off.
FinetuneLog finetuneReprojection(PosePrior& pose, ShapePrior& shape, const Dataset& data2D, const Dataset& data3D,
                                 const BodyModel& model, const FinetuneConfig& cfg);

struct Prediction {
    PoseParams theta;
    ShapeParams beta;
};

std::vector<Prediction> predictDataset(const PosePrior& pose, const ShapePrior& shape, const Dataset& data);
// Mean per-vertex error over the dataset, reconstruction error on joints and
// segmentation scores of the re-rendered prediction against the record masks.
EvalReport evaluatePredictions(const BodyModel& model, const Dataset& data, const std::vector<Prediction>& preds);

}  // namespace bodyfit
