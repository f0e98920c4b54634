#include "bodyfit/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "bodyfit/errors.hpp"
#include "bodyfit/model_io.hpp"

namespace bodyfit {

namespace {

Dataset standardData(const BodyModel& model, int count, uint64_t seed, PoseFamily family = PoseFamily::Standard,
                     NoiseSpec noise = {}) {
    GenConfig g;
    g.count = count;
    g.seed = seed;
    g.noise = noise;
    return generateDataset(model, PoseSampler::procedural(model, seed, family),
                           ShapeSampler(model.numShape(), 1.0, seed), g);
}

nlohmann::json exactVector(const std::vector<double>& v) { return exactArray(v.data(), v.size()); }

void requireSeeds(const std::vector<uint64_t>& seeds, const char* what) {
    if (seeds.empty()) throw ValidationError(std::string(what) + ": at least one seed is required");
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    const size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<long>(mid));
    return 0.5 * (lo + hi);
}

nlohmann::json predictionsToJson(const std::vector<Prediction>& predictions) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : predictions)
        rows.push_back({{"theta", exactArray(p.theta.theta.data(), static_cast<size_t>(p.theta.theta.size()))},
                        {"beta", exactArray(p.beta.beta.data(), static_cast<size_t>(p.beta.beta.size()))}});
    return {{"predictions", rows}};
}

std::vector<Prediction> predictionsFromJson(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("predictions") || !doc["predictions"].is_array())
        throw IoError("predictions document needs a 'predictions' array");
    std::vector<Prediction> out;
    for (const auto& row : doc["predictions"]) {
        if (!row.is_object() || !row.contains("theta") || !row.contains("beta"))
            throw IoError("prediction entries need 'theta' and 'beta'");
        const auto theta = readExactArray(row["theta"], "theta");
        const auto beta = readExactArray(row["beta"], "beta");
        out.push_back({PoseParams{Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()))},
                       ShapeParams{Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()))}});
    }
    return out;
}

double poseVertexError(const BodyModel& model, const PosePrior& prior, const Dataset& data) {
    if (data.size() == 0) throw ValidationError("pose error: empty dataset");
    double total = 0.0;
    for (const auto& r : data.records) {
        const ShapeParams beta{r.beta};
        total += meanPerVertexError(forward(model, beta, prior.predict(r.keypoints)).mesh.vertices,
                                    forward(model, beta, PoseParams{r.theta}).mesh.vertices);
    }
    return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------

void validateAblationConfig(const AblationConfig& cfg) {
    if (cfg.records <= 0 || cfg.heldOut <= 0 || cfg.heldOut >= cfg.records)
        throw ValidationError("ablation: need 0 < heldOut < records");
    requireSeeds(cfg.seeds, "ablation");
    if (cfg.variants.empty()) throw ValidationError("ablation: no loss variants");
    validatePosePriorConfig(cfg.net);
    validateTrainPlan(cfg.plan);
}

const AblationRow& AblationReport::row(LossVariant v) const {
    for (const auto& r : rows)
        if (r.variant == v) return r;
    throw ValidationError("ablation report has no row for " + variantName(v));
}

AblationReport runAblation(const BodyModel& model, const AblationConfig& cfg) {
    validateAblationConfig(cfg);
    const Dataset all = standardData(model, cfg.records, cfg.dataSeed);
    const size_t split = static_cast<size_t>(cfg.records - cfg.heldOut);
    const Dataset train = all.slice(0, split), test = all.slice(split, all.size());
    AblationReport report;
    for (LossVariant v : cfg.variants) {
        AblationRow row{v, {}, 0.0};
        for (uint64_t seed : cfg.seeds) {
            PosePrior prior(model.numJoints(), model.poseDim(), cfg.net, seed);
            TrainPlan plan = cfg.plan;
            plan.variant = v;
            plan.seed = seed;
            trainPosePrior(prior, train, model, plan);
            row.errors.push_back(poseVertexError(model, prior, test));
        }
        row.median = median(row.errors);
        report.rows.push_back(std::move(row));
    }
    return report;
}

nlohmann::json AblationReport::toJson() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"variant", variantName(r.variant)},
                       {"errors", exactVector(r.errors)},
                       {"median", formatExact(r.median)}});
    return {{"rows", out}};
}

std::string AblationReport::table() const {
    std::ostringstream os;
    os << "variant,median_mpve,per_seed\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.median);
        os << variantName(r.variant) << ',' << buf << ',';
        for (size_t i = 0; i < r.errors.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f", r.errors[i]);
            os << (i ? ";" : "") << buf;
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------

void validateDomainShiftConfig(const DomainShiftConfig& cfg) {
    requireSeeds(cfg.seeds, "domain shift");
    if (cfg.trainRecords <= 0 || cfg.finetuneRecords <= 0 || cfg.heldOut <= 0)
        throw ValidationError("domain shift: record counts must be positive");
    validatePosePriorConfig(cfg.net);
    validateTrainPlan(cfg.plan);
    validateTrainPlan(cfg.shapePlan);
    validateFinetuneConfig(cfg.finetune);
}

DomainShiftReport runDomainShift(const BodyModel& model, const DomainShiftConfig& cfg) {
    validateDomainShiftConfig(cfg);
    DomainShiftReport report;
    const size_t ft = static_cast<size_t>(cfg.finetuneRecords);
    const int n2 = cfg.finetuneRecords + cfg.heldOut;
    for (uint64_t seed : cfg.seeds) {
        const Dataset train3D = standardData(model, cfg.trainRecords, 7 + seed);
        const Dataset shifted = standardData(model, n2, 100 + seed, PoseFamily::Raised);
        const Dataset fresh = standardData(model, n2, 200 + seed);

        PosePrior pose(model.numJoints(), model.poseDim(), cfg.net, seed);
        TrainPlan plan = cfg.plan;
        plan.seed = seed;
        trainPosePrior(pose, train3D, model, plan);
        ShapePrior shape(model.numShape(), {}, seed);
        TrainPlan shapePlan = cfg.shapePlan;
        shapePlan.seed = seed;
        trainShapePrior(shape, train3D, model, shapePlan);

        FinetuneConfig fc = cfg.finetune;
        fc.seed = seed;
        DomainShiftSeed row;
        row.seed = seed;
        for (int which = 0; which < 2; ++which) {
            const Dataset& source = which == 0 ? shifted : fresh;
            const Dataset tune = source.slice(0, ft), test = source.slice(ft, source.size());
            PosePrior p = pose;
            ShapePrior s = shape;
            const double before = poseVertexError(model, p, test);
            finetuneReprojection(p, s, tune, train3D, model, fc);
            const double after = poseVertexError(model, p, test);
            (which == 0 ? row.shiftedBefore : row.inDistBefore) = before;
            (which == 0 ? row.shiftedAfter : row.inDistAfter) = after;
        }
        report.seeds.push_back(row);
    }
    return report;
}

double DomainShiftReport::medianShiftedChange() const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s.shiftedChange());
    return median(v);
}

double DomainShiftReport::medianInDistChange() const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s.inDistChange());
    return median(v);
}

nlohmann::json DomainShiftReport::toJson() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : seeds)
        rows.push_back({{"seed", s.seed},
                        {"shifted_before", formatExact(s.shiftedBefore)},
                        {"shifted_after", formatExact(s.shiftedAfter)},
                        {"in_dist_before", formatExact(s.inDistBefore)},
                        {"in_dist_after", formatExact(s.inDistAfter)}});
    return {{"seeds", rows},
            {"median_shifted_change", formatExact(medianShiftedChange())},
            {"median_in_dist_change", formatExact(medianInDistChange())}};
}

// ---------------------------------------------------------------------------

InitComparisonReport compareInitializations(const BodyModel& model, const Dataset& problems,
                                            const std::vector<PoseParams>& predictions, const FitProblem& base) {
    if (predictions.size() != problems.size())
        throw ValidationError("init comparison: one prediction per problem is required");
    InitComparisonReport report;
    report.cap = base.maxIterations;
    for (size_t i = 0; i < problems.size(); ++i) {
        FitProblem p = base;
        p.keypoints = problems.records[i].keypoints;
        p.beta = ShapeParams::zero(model);
        p.anchor.reset();

        FitProblem fromMean = p;
        fromMean.theta = meanPose(model);
        fromMean.camera = initCameraFromKeypoints(model, fromMean.theta, fromMean.beta, p.keypoints);
        FitProblem fromPred = p;
        fromPred.theta = predictions[i];
        fromPred.camera = initCameraFromKeypoints(model, fromPred.theta, fromPred.beta, p.keypoints);
        FitProblem anchored = fromPred;
        anchored.anchor = predictions[i].theta;

        const FitResult m = fit(model, fromMean), q = fit(model, fromPred), a = fit(model, anchored);
        InitComparison c;
        c.meanIterations = m.iterations;
        c.predictedIterations = q.iterations;
        const double threshold = m.objective.back();
        for (size_t k = 0; k < q.objective.size(); ++k)
            if (q.objective[k] <= threshold) {
                c.predictedToThreshold = static_cast<int>(k);
                break;
            }
        c.meanData = m.dataObjective.back();
        c.anchoredData = a.dataObjective.back();
        c.meanObjective = m.objective.back();
        c.predictedObjective = q.objective.back();
        c.anchoredObjective = a.objective.back();
        report.problems.push_back(c);
    }
    return report;
}

double InitComparisonReport::iterationRatio() const {
    std::vector<double> mean, pred;
    for (const auto& c : problems) {
        mean.push_back(c.meanIterations);
        pred.push_back(c.predictedToThreshold < 0 ? cap + 1 : c.predictedToThreshold);
    }
    return median(pred) / std::max(median(mean), 1.0);
}

double InitComparisonReport::anchoredWinFraction() const {
    if (problems.empty()) throw ValidationError("init comparison: no problems");
    int wins = 0;
    for (const auto& c : problems) wins += c.anchoredData <= c.meanData;
    return static_cast<double>(wins) / static_cast<double>(problems.size());
}

nlohmann::json InitComparisonReport::toJson() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : problems)
        rows.push_back({{"mean_iterations", c.meanIterations},
                        {"predicted_to_threshold", c.predictedToThreshold},
                        {"predicted_iterations", c.predictedIterations},
                        {"mean_data", formatExact(c.meanData)},
                        {"anchored_data", formatExact(c.anchoredData)},
                        {"mean_objective", formatExact(c.meanObjective)},
                        {"predicted_objective", formatExact(c.predictedObjective)},
                        {"anchored_objective", formatExact(c.anchoredObjective)}});
    return {{"problems", rows},
            {"cap", cap},
            {"iteration_ratio", formatExact(iterationRatio())},
            {"anchored_win_fraction", formatExact(anchoredWinFraction())}};
}

void validateAnchorExperimentConfig(const AnchorExperimentConfig& cfg) {
    if (cfg.problems <= 0 || cfg.trainRecords <= 0) throw ValidationError("anchor experiment: counts must be positive");
    if (cfg.maxIterations <= 0) throw ValidationError("anchor experiment: iteration cap must be positive");
    validatePosePriorConfig(cfg.net);
    validateTrainPlan(cfg.plan);
}

InitComparisonReport runAnchorExperiment(const BodyModel& model, const AnchorExperimentConfig& cfg) {
    validateAnchorExperimentConfig(cfg);
    const Dataset train = standardData(model, cfg.trainRecords, cfg.trainSeed);
    PosePrior prior(model.numJoints(), model.poseDim(), cfg.net, cfg.plan.seed);
    trainPosePrior(prior, train, model, cfg.plan);
    const Dataset problems = standardData(model, cfg.problems, cfg.problemSeed);
    std::vector<PoseParams> predictions;
    for (const auto& r : problems.records) predictions.push_back(prior.predict(r.keypoints));
    FitProblem base;
    base.maxIterations = cfg.maxIterations;
    return compareInitializations(model, problems, predictions, base);
}

// ---------------------------------------------------------------------------

void validateRecoveryConfig(const RecoveryConfig& cfg) {
    if (cfg.problems <= 0 || cfg.maxIterations <= 0) throw ValidationError("recovery: counts must be positive");
    if (!(cfg.thetaSigma >= 0) || !(cfg.betaSigma >= 0)) throw ValidationError("recovery: perturbations must be >= 0");
    if (!(cfg.threshold > 0)) throw ValidationError("recovery: threshold must be positive");
}

RecoveryReport runRecovery(const BodyModel& model, const RecoveryConfig& cfg) {
    validateRecoveryConfig(cfg);
    const Dataset data = standardData(model, cfg.problems, cfg.seed, PoseFamily::Standard, NoiseSpec::none());
    RecoveryReport report;
    report.threshold = cfg.threshold;
    for (size_t i = 0; i < data.size(); ++i) {
        const DatasetRecord& r = data.records[i];
        CounterRng rng(cfg.seed, StreamTag::Problem, i);
        FitProblem p;
        p.keypoints = r.keypoints;
        if (cfg.useSilhouette) p.silhouette = r.silhouette;
        p.theta.theta = r.theta;
        p.beta.beta = r.beta;
        for (Eigen::Index j = 0; j < p.theta.theta.size(); ++j) p.theta.theta[j] += cfg.thetaSigma * rng.normal();
        for (Eigen::Index j = 0; j < p.beta.beta.size(); ++j) p.beta.beta[j] += cfg.betaSigma * rng.normal();
        p.camera = initCameraFromKeypoints(model, p.theta, p.beta, p.keypoints);
        p.weights = cfg.weights;
        p.maxIterations = cfg.maxIterations;
        const FitResult res = fit(model, p);
        const RowMatX3 truth = forward(model, ShapeParams{r.beta}, PoseParams{r.theta}).mesh.vertices;
        report.errors.push_back(meanPerVertexError(forward(model, res.beta, res.theta).mesh.vertices, truth) /
                                meshHeight(truth));
    }
    return report;
}

double RecoveryReport::fractionBelow() const {
    if (errors.empty()) throw ValidationError("recovery: no problems");
    const auto n = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < threshold; });
    return static_cast<double>(n) / static_cast<double>(errors.size());
}

nlohmann::json RecoveryReport::toJson() const {
    return {{"errors", exactVector(errors)},
            {"threshold", formatExact(threshold)},
            {"fraction_below", formatExact(fractionBelow())},
            {"median", formatExact(median(errors))}};
}

}  // namespace bodyfit
