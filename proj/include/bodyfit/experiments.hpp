#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "bodyfit/fitter.hpp"
#include "bodyfit/priors.hpp"

namespace bodyfit {

double median(std::vector<double> values);

// {"predictions": [{"theta": [...], "beta": [...]}, ...]} with exact reals.
nlohmann::json predictionsToJson(const std::vector<Prediction>& predictions);
std::vector<Prediction> predictionsFromJson(const nlohmann::json& doc);

// Mean per-vertex error of the predicted poses, each posed with the record's
// ground-truth shape.
double poseVertexError(const BodyModel& model, const PosePrior& prior, const Dataset& data);

/// Loss-variant sweep: one pose prior per (variant, seed) on a fixed dataset,
/// scored on held-out records.
struct AblationConfig {
    int records = 5000;
    int heldOut = 500;
    uint64_t dataSeed = 7;
    std::vector<uint64_t> seeds{1, 2, 3};
    std::vector<LossVariant> variants{LossVariant::AxisAngle, LossVariant::RotMat, LossVariant::RotMatVertex};
    PosePriorConfig net;
    TrainPlan plan{.phase1Steps = 1500, .phase2Steps = 1500};
};

struct AblationRow {
    LossVariant variant;
    std::vector<double> errors;  // per seed
    double median = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;

    const AblationRow& row(LossVariant v) const;
    nlohmann::json toJson() const;
    std::string table() const;
};

void validateAblationConfig(const AblationConfig& cfg);
AblationReport runAblation(const BodyModel& model, const AblationConfig& cfg);

/// Reprojection finetuning on 2D annotations from a shifted pose family
/// against finetuning on fresh in-distribution 2D annotations.
struct DomainShiftConfig {
    std::vector<uint64_t> seeds{1, 2, 3};
    int trainRecords = 4000;
    int finetuneRecords = 1000;
    int heldOut = 200;
    PosePriorConfig net;
    TrainPlan plan{.phase1Steps = 3000, .phase2Steps = 4000};
    TrainPlan shapePlan{.phase1Steps = 200, .phase2Steps = 0, .batchSize = 16};
    FinetuneConfig finetune{.steps = 2000, .useSilhouette = false, .updateShape = false};
};

struct DomainShiftSeed {
    uint64_t seed = 0;
    double shiftedBefore = 0.0;
    double shiftedAfter = 0.0;
    double inDistBefore = 0.0;
    double inDistAfter = 0.0;

    double shiftedChange() const { return (shiftedAfter - shiftedBefore) / shiftedBefore; }
    double inDistChange() const { return (inDistAfter - inDistBefore) / inDistBefore; }
};

struct DomainShiftReport {
    std::vector<DomainShiftSeed> seeds;

    double medianShiftedChange() const;
    double medianInDistChange() const;
    nlohmann::json toJson() const;
};

void validateDomainShiftConfig(const DomainShiftConfig& cfg);
DomainShiftReport runDomainShift(const BodyModel& model, const DomainShiftConfig& cfg);

/// Per problem: a fit from the mean pose, a fit from the predicted pose and an
/// anchored fit from the predicted pose, all on the same keypoints.
struct InitComparison {
    int meanIterations = 0;
    // Iterations until the predicted-init objective is at or below the final
    // mean-init objective; -1 when never reached.
    int predictedToThreshold = -1;
    int predictedIterations = 0;
    double meanData = 0.0;      // unanchored, mean init
    double anchoredData = 0.0;  // anchored, predicted init
    double meanObjective = 0.0;
    double predictedObjective = 0.0;
    double anchoredObjective = 0.0;
};

struct InitComparisonReport {
    std::vector<InitComparison> problems;
    int cap = 0;

    // Median iterations to threshold (unreached counts as cap + 1) over the
    // median mean-init iterations.
    double iterationRatio() const;
    double anchoredWinFraction() const;  // anchored data <= mean-init data
    nlohmann::json toJson() const;
};

// base supplies weights, sigmas and limits; keypoints, initialization and
// anchor are filled per problem. Camera initialized from the keypoints.
InitComparisonReport compareInitializations(const BodyModel& model, const Dataset& problems,
                                            const std::vector<PoseParams>& predictions, const FitProblem& base);

struct AnchorExperimentConfig {
    int problems = 50;
    uint64_t problemSeed = 99;
    int trainRecords = 4500;
    uint64_t trainSeed = 7;
    PosePriorConfig net;
    TrainPlan plan{.phase1Steps = 1500, .phase2Steps = 1500};
    int maxIterations = 2000;
};

void validateAnchorExperimentConfig(const AnchorExperimentConfig& cfg);
InitComparisonReport runAnchorExperiment(const BodyModel& model, const AnchorExperimentConfig& cfg);

/// Fits to noiseless observations of known parameters from a perturbed
/// ground-truth initialization.
struct RecoveryConfig {
    int problems = 100;
    uint64_t seed = 5;
    double thetaSigma = 0.05;
    double betaSigma = 0.1;
    FitWeights weights{.betaPrior = 0.0};
    bool useSilhouette = false;
    int maxIterations = 1000;
    double threshold = 0.05;  // fraction of body height
};

struct RecoveryReport {
    std::vector<double> errors;  // mean per-vertex error over body height
    double threshold = 0.0;

    double fractionBelow() const;
    nlohmann::json toJson() const;
};

void validateRecoveryConfig(const RecoveryConfig& cfg);
RecoveryReport runRecovery(const BodyModel& model, const RecoveryConfig& cfg);

}  // namespace bodyfit
