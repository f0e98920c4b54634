#include "bodyfit/priors.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "bodyfit/errors.hpp"
#include "bodyfit/model_io.hpp"
#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {

// Batch streams of finetuning live above the training steps.
constexpr uint64_t kFinetuneStream = 1ull << 40;
constexpr uint64_t kIndividualStream = 1ull << 41;

int addBilinearUnit(LayerGraph& g, int width, double dropout, int from) {
    g.addDense(width);
    g.addRelu();
    g.addDropout(dropout);
    g.addDense(width);
    g.addRelu();
    g.addDropout(dropout);
    return g.addResidual(from);
}

std::vector<size_t> sampleBatch(uint64_t seed, uint64_t stream, size_t n, int batch) {
    CounterRng rng(seed, StreamTag::Batch, stream);
    std::vector<size_t> idx(static_cast<size_t>(batch));
    for (auto& i : idx) i = static_cast<size_t>(rng.below(n));
    return idx;
}

// Zero head weights and the target mean as bias: training starts from the
// mean prediction.
void initHead(LayerGraph& net, const Eigen::VectorXd& bias) {
    auto& params = net.parameters();
    auto& b = params.back();
    if (b.value.size() != bias.size()) throw ValidationError("output bias size mismatch");
    b.value = bias;
    params[params.size() - 2].value.setZero();
}

nlohmann::json readMeta(const std::string& directory, const std::string& kind) {
    const auto meta = readJsonFile((std::filesystem::path(directory) / "prior.json").string());
    if (!meta.contains("kind") || meta["kind"] != kind)
        throw IoError("'" + directory + "' does not hold a " + kind + " prior");
    return meta;
}

void checkDataset(const Dataset& data, const BodyModel& model) {
    if (data.size() == 0) throw ValidationError("dataset is empty");
    if (data.poseDim != model.poseDim() || data.shapeDim != model.numShape() || data.numKeypoints != model.numJoints())
        throw ValidationError("dataset dimensions do not match the model");
}

struct PoseStepResult {
    double param = 0.0;
    double point = 0.0;
};

PoseStepResult poseStep(PosePrior& prior, Rmsprop& opt, const Dataset& data, const BodyModel& model,
                        const std::vector<size_t>& idx, LossVariant variant, bool withPoint, double mix) {
    std::vector<const Keypoints2D*> kps;
    for (size_t i : idx) kps.push_back(&data.records[i].keypoints);
    const Tensor y = prior.net().forward(prior.encode(kps), true);
    const int b = static_cast<int>(idx.size()), d = prior.poseDim();
    Tensor up({b, d});
    PoseStepResult r;
    for (int s = 0; s < b; ++s) {
        const auto& rec = data.records[idx[static_cast<size_t>(s)]];
        const Eigen::VectorXd thetaHat = y.matrix().row(s).transpose();
        const SampleLoss sl = poseSampleLoss(model, thetaHat, rec.theta, rec.beta, variant, withPoint, mix);
        up.matrix().row(s) = sl.dOutput.transpose() / b;
        r.param += sl.param / b;
        r.point += sl.point / b;
    }
    prior.net().zeroGrad();
    prior.net().backward(up);
    opt.step(prior.net());
    return r;
}

PoseStepResult shapeStep(ShapePrior& prior, Rmsprop& opt, const Dataset& data, const BodyModel& model,
                         const std::vector<size_t>& idx, const std::vector<bool>& flips, LossVariant variant,
                         bool withPoint, double mix) {
    std::vector<const Mask*> masks;
    for (size_t i : idx) masks.push_back(&data.records[i].silhouette);
    const Tensor y = prior.net().forward(prior.encode(masks, flips), true);
    const int b = static_cast<int>(idx.size()), d = prior.shapeDim();
    Tensor up({b, d});
    PoseStepResult r;
    for (int s = 0; s < b; ++s) {
        const auto& rec = data.records[idx[static_cast<size_t>(s)]];
        const Eigen::VectorXd betaHat = y.matrix().row(s).transpose();
        const SampleLoss sl = shapeSampleLoss(model, betaHat, rec.beta, rec.theta, variant, withPoint, mix);
        up.matrix().row(s) = sl.dOutput.transpose() / b;
        r.param += sl.param / b;
        r.point += sl.point / b;
    }
    prior.net().zeroGrad();
    prior.net().backward(up);
    opt.step(prior.net());
    return r;
}

}  // namespace

std::string variantName(LossVariant v) {
    switch (v) {
        case LossVariant::AxisAngle: return "axis-angle";
        case LossVariant::RotMat: return "rot-matrix";
        case LossVariant::RotMatVertex: return "rot-matrix+vertex";
        case LossVariant::RotMatJoint: return "rot-matrix+joint";
    }
    return "?";
}

LossVariant parseVariant(const std::string& name) {
    for (LossVariant v : {LossVariant::AxisAngle, LossVariant::RotMat, LossVariant::RotMatVertex, LossVariant::RotMatJoint})
        if (name == variantName(v)) return v;
    throw ValidationError("unknown loss variant '" + name +
                          "' (expected axis-angle, rot-matrix, rot-matrix+vertex or rot-matrix+joint)");
}

void validatePosePriorConfig(const PosePriorConfig& cfg) {
    if (cfg.width <= 0 || cfg.units < 0) throw ValidationError("pose prior width must be positive and units >= 0");
    if (!(cfg.dropout >= 0 && cfg.dropout < 1)) throw ValidationError("dropout must be in [0, 1)");
}

void validateShapePriorConfig(const ShapePriorConfig& cfg) {
    if (cfg.channels.empty() || cfg.channels.size() > 6) throw ValidationError("shape prior needs 1..6 conv blocks");
    for (int c : cfg.channels)
        if (c <= 0) throw ValidationError("conv channels must be positive");
    if (cfg.width <= 0) throw ValidationError("shape prior width must be positive");
    if (!(cfg.dropout >= 0 && cfg.dropout < 1)) throw ValidationError("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------

PosePrior::PosePrior(int numKeypoints, int poseDim, const PosePriorConfig& cfg, uint64_t seed)
    : numKeypoints_(numKeypoints), poseDim_(poseDim) {
    validatePosePriorConfig(cfg);
    if (numKeypoints <= 0 || poseDim <= 0) throw ValidationError("pose prior dimensions must be positive");
    net_ = LayerGraph({3 * numKeypoints}, seed);
    net_.addDense(cfg.width);
    int prev = net_.addRelu();
    for (int u = 0; u < cfg.units; ++u) prev = addBilinearUnit(net_, cfg.width, cfg.dropout, prev);
    net_.addDense(poseDim);
}

Eigen::VectorXd PosePrior::features(const Keypoints2D& kp, int imageSize) {
    Eigen::VectorXd f(3 * kp.size());
    for (int i = 0; i < kp.size(); ++i) {
        f[3 * i] = 2.0 * kp.points(i, 0) / imageSize - 1.0;
        f[3 * i + 1] = 2.0 * kp.points(i, 1) / imageSize - 1.0;
        f[3 * i + 2] = kp.confidences[i];
    }
    return f;
}

Tensor PosePrior::encode(const std::vector<const Keypoints2D*>& batch) const {
    Tensor x({static_cast<int>(batch.size()), 3 * numKeypoints_});
    for (size_t s = 0; s < batch.size(); ++s) {
        const Keypoints2D& kp = *batch[s];
        if (kp.size() != numKeypoints_ || kp.confidences.size() != numKeypoints_)
            throw ValidationError("pose prior expects " + std::to_string(numKeypoints_) + " keypoints, got " +
                                  std::to_string(kp.size()));
        x.matrix().row(static_cast<Eigen::Index>(s)) = features(kp, imageSize_).transpose();
    }
    return x;
}

std::vector<PoseParams> PosePrior::predictBatch(const std::vector<const Keypoints2D*>& batch) const {
    const Tensor y = net_.predict(encode(batch));
    std::vector<PoseParams> out;
    for (size_t s = 0; s < batch.size(); ++s) out.push_back({y.matrix().row(static_cast<Eigen::Index>(s)).transpose()});
    return out;
}

PoseParams PosePrior::predict(const Keypoints2D& kp) const { return predictBatch({&kp}).front(); }

void PosePrior::save(const std::string& directory) const {
    net_.save(directory);
    const nlohmann::json meta{{"kind", "pose"},
                              {"keypoints", numKeypoints_},
                              {"pose_dim", poseDim_},
                              {"image_size", imageSize_}};
    writeTextFile((std::filesystem::path(directory) / "prior.json").string(), meta.dump(2) + "\n");
}

PosePrior PosePrior::load(const std::string& directory) {
    const auto meta = readMeta(directory, "pose");
    PosePrior p;
    try {
        p.numKeypoints_ = meta.at("keypoints").get<int>();
        p.poseDim_ = meta.at("pose_dim").get<int>();
        p.imageSize_ = meta.at("image_size").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed prior.json in '" + directory + "': " + e.what());
    }
    p.net_ = LayerGraph::load(directory);
    if (p.net_.inputShape() != std::vector<int>{3 * p.numKeypoints_} || p.net_.outputShape() != std::vector<int>{p.poseDim_})
        throw IoError("pose prior checkpoint shapes disagree with prior.json");
    return p;
}

// ---------------------------------------------------------------------------

ShapePrior::ShapePrior(int shapeDim, const ShapePriorConfig& cfg, uint64_t seed) : shapeDim_(shapeDim) {
    validateShapePriorConfig(cfg);
    if (shapeDim <= 0) throw ValidationError("shape prior output must be positive");
    net_ = LayerGraph({1, kImageSize, kImageSize}, seed);
    for (int c : cfg.channels) {
        net_.addConv3x3(c);
        net_.addRelu();
        net_.addMaxPool2();
    }
    net_.addDense(cfg.width);
    const int prev = net_.addRelu();
    addBilinearUnit(net_, cfg.width, cfg.dropout, prev);
    net_.addDense(shapeDim);
}

Tensor ShapePrior::encode(const std::vector<const Mask*>& batch, const std::vector<bool>& flip) const {
    const int n = kImageSize;
    Tensor x({static_cast<int>(batch.size()), 1, n, n});
    for (size_t s = 0; s < batch.size(); ++s) {
        const Mask& m = *batch[s];
        if (m.rows() != n || m.cols() != n) throw ValidationError("shape prior expects a 64x64 silhouette");
        const bool f = s < flip.size() && flip[s];
        double* dst = x.data() + s * n * n;
        for (int y = 0; y < n; ++y)
            for (int xx = 0; xx < n; ++xx) dst[y * n + xx] = m(y, f ? n - 1 - xx : xx) ? 1.0 : 0.0;
    }
    return x;
}

std::vector<ShapeParams> ShapePrior::predictBatch(const std::vector<const Mask*>& batch) const {
    const Tensor y = net_.predict(encode(batch));
    std::vector<ShapeParams> out;
    for (size_t s = 0; s < batch.size(); ++s) out.push_back({y.matrix().row(static_cast<Eigen::Index>(s)).transpose()});
    return out;
}

ShapeParams ShapePrior::predict(const Mask& sil) const { return predictBatch({&sil}).front(); }

void ShapePrior::save(const std::string& directory) const {
    net_.save(directory);
    const nlohmann::json meta{{"kind", "shape"}, {"shape_dim", shapeDim_}};
    writeTextFile((std::filesystem::path(directory) / "prior.json").string(), meta.dump(2) + "\n");
}

ShapePrior ShapePrior::load(const std::string& directory) {
    const auto meta = readMeta(directory, "shape");
    ShapePrior p;
    try {
        p.shapeDim_ = meta.at("shape_dim").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed prior.json in '" + directory + "': " + e.what());
    }
    p.net_ = LayerGraph::load(directory);
    if (p.net_.inputShape() != std::vector<int>{1, kImageSize, kImageSize} ||
        p.net_.outputShape() != std::vector<int>{p.shapeDim_})
        throw IoError("shape prior checkpoint shapes disagree with prior.json");
    return p;
}

// ---------------------------------------------------------------------------

void validateTrainPlan(const TrainPlan& plan) {
    if (plan.phase1Steps < 0 || plan.phase2Steps < 0 || plan.phase1Steps + plan.phase2Steps <= 0)
        throw ValidationError("training needs a positive number of steps");
    if (plan.batchSize <= 0) throw ValidationError("batch size must be positive");
    if (!(plan.mix >= 0) || !std::isfinite(plan.mix)) throw ValidationError("mix weight must be finite and >= 0");
    if (!(plan.learningRate > 0) || !std::isfinite(plan.learningRate))
        throw ValidationError("learning rate must be positive");
}

std::string TrainLog::csv() const {
    std::ostringstream out;
    out << "step,phase,total,param,point\n";
    for (const auto& e : entries)
        out << e.step << ',' << e.phase << ',' << formatExact(e.total) << ',' << formatExact(e.param) << ','
            << formatExact(e.point) << '\n';
    return out.str();
}

double TrainLog::emaDecreaseFraction(int span, int every) const {
    if (entries.empty() || span <= 0 || every <= 0) return 1.0;
    const double alpha = 2.0 / (span + 1);
    double ema = entries.front().total, last = ema;
    int checks = 0, ok = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
        // Restart at the phase boundary, where a loss term is added.
        if (i > 0 && entries[i].phase != entries[i - 1].phase) ema = last = entries[i].total;
        ema = alpha * entries[i].total + (1 - alpha) * ema;
        if ((i + 1) % static_cast<size_t>(every) == 0) {
            if (i + 1 > static_cast<size_t>(every)) {
                ++checks;
                if (ema <= last) ++ok;
            }
            last = ema;
        }
    }
    return checks ? static_cast<double>(ok) / checks : 1.0;
}

SampleLoss poseSampleLoss(const BodyModel& model, const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& beta, LossVariant variant, bool withPoint, double mix) {
    const Eigen::VectorXd none;
    const ParamLoss pl = variant == LossVariant::AxisAngle ? paramLossAxisAngle(thetaHat, theta, none, none)
                                                           : paramLossRotMat(thetaHat, theta, none, none);
    SampleLoss out{pl.value, 0.0, pl.dThetaHat};
    if (!withPoint || (variant != LossVariant::RotMatVertex && variant != LossVariant::RotMatJoint)) return out;
    const PosedBody hat(model, {beta}, {thetaHat});
    const ForwardResult ref = forward(model, {beta}, {theta});
    ParamGradient g;
    if (variant == LossVariant::RotMatVertex) {
        const PointLoss v = perVertexLoss(hat.mesh(), ref.mesh);
        out.point = v.value;
        g = hat.vjp(v.dHat);
    } else {
        const PointLoss j = jointLoss(hat.joints(), ref.joints);
        out.point = j.value;
        g = hat.vjp(RowMatX3::Zero(model.numVertices(), 3), &j.dHat);
    }
    out.dOutput += mix * g.theta;
    return out;
}

SampleLoss shapeSampleLoss(const BodyModel& model, const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta,
                           const Eigen::VectorXd& theta, LossVariant variant, bool withPoint, double mix) {
    if (betaHat.size() != beta.size()) throw ValidationError("shape loss: dimension mismatch");
    SampleLoss out{(betaHat - beta).squaredNorm(), 0.0, 2.0 * (betaHat - beta)};
    if (!withPoint || (variant != LossVariant::RotMatVertex && variant != LossVariant::RotMatJoint)) return out;
    const PosedBody hat(model, {betaHat}, {theta});
    const ForwardResult ref = forward(model, {beta}, {theta});
    ParamGradient g;
    if (variant == LossVariant::RotMatVertex) {
        const PointLoss v = perVertexLoss(hat.mesh(), ref.mesh);
        out.point = v.value;
        g = hat.vjp(v.dHat);
    } else {
        const PointLoss j = jointLoss(hat.joints(), ref.joints);
        out.point = j.value;
        g = hat.vjp(RowMatX3::Zero(model.numVertices(), 3), &j.dHat);
    }
    out.dOutput += mix * g.beta;
    return out;
}

TrainLog trainPosePrior(PosePrior& prior, const Dataset& data, const BodyModel& model, const TrainPlan& plan) {
    validateTrainPlan(plan);
    checkDataset(data, model);
    if (prior.poseDim() != model.poseDim() || prior.numKeypoints() != data.numKeypoints)
        throw ValidationError("pose prior dimensions do not match the dataset");
    if (prior.net().step() == 0) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.poseDim);
        for (const auto& r : data.records) mean += r.theta;
        initHead(prior.net(), mean / static_cast<double>(data.size()));
    }
    Rmsprop opt({plan.learningRate, 0.99, 1e-8});
    TrainLog log;
    const int total = plan.phase1Steps + plan.phase2Steps;
    for (int step = 0; step < total; ++step) {
        const int phase = step < plan.phase1Steps ? 1 : 2;
        const auto idx = sampleBatch(plan.seed, static_cast<uint64_t>(step), data.size(), plan.batchSize);
        const auto r = poseStep(prior, opt, data, model, idx, plan.variant, phase == 2, plan.mix);
        log.entries.push_back({step, phase, r.param + (phase == 2 ? plan.mix * r.point : 0.0), r.param, r.point});
        if (!std::isfinite(log.entries.back().total))
            throw NumericalError("pose prior training diverged at step " + std::to_string(step));
    }
    return log;
}

TrainLog trainShapePrior(ShapePrior& prior, const Dataset& data, const BodyModel& model, const TrainPlan& plan) {
    validateTrainPlan(plan);
    checkDataset(data, model);
    if (prior.shapeDim() != model.numShape()) throw ValidationError("shape prior dimension does not match the model");
    if (prior.net().step() == 0) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.shapeDim);
        for (const auto& r : data.records) mean += r.beta;
        initHead(prior.net(), mean / static_cast<double>(data.size()));
    }
    Rmsprop opt({plan.learningRate, 0.99, 1e-8});
    TrainLog log;
    const int total = plan.phase1Steps + plan.phase2Steps;
    for (int step = 0; step < total; ++step) {
        const int phase = step < plan.phase1Steps ? 1 : 2;
        const auto idx = sampleBatch(plan.seed, static_cast<uint64_t>(step), data.size(), plan.batchSize);
        std::vector<bool> flips(idx.size(), false);
        if (plan.flipAugment) {
            CounterRng rng(plan.seed, StreamTag::Augment, static_cast<uint64_t>(step));
            for (size_t s = 0; s < flips.size(); ++s) flips[s] = rng.bernoulli(0.5);
        }
        const auto r = shapeStep(prior, opt, data, model, idx, flips, plan.variant, phase == 2, plan.mix);
        log.entries.push_back({step, phase, r.param + (phase == 2 ? plan.mix * r.point : 0.0), r.param, r.point});
        if (!std::isfinite(log.entries.back().total))
            throw NumericalError("shape prior training diverged at step " + std::to_string(step));
    }
    return log;
}

TrainedPriors trainPriors(const Dataset& data, const BodyModel& model, const TrainPlan& posePlan,
                          const TrainPlan& shapePlan, const PosePriorConfig& poseCfg, const ShapePriorConfig& shapeCfg) {
    checkDataset(data, model);
    TrainedPriors out;
    out.pose = PosePrior(data.numKeypoints, data.poseDim, poseCfg, posePlan.seed);
    out.shape = ShapePrior(data.shapeDim, shapeCfg, shapePlan.seed);
    out.poseLog = trainPosePrior(out.pose, data, model, posePlan);
    out.shapeLog = trainShapePrior(out.shape, data, model, shapePlan);
    return out;
}

// ---------------------------------------------------------------------------

void validateFinetuneConfig(const FinetuneConfig& cfg) {
    if (cfg.steps < 0) throw ValidationError("finetune steps must be >= 0");
    if (cfg.batchSize <= 0 || cfg.individualBatch <= 0) throw ValidationError("finetune batch sizes must be positive");
    if (!(cfg.learningRate > 0)) throw ValidationError("finetune learning rate must be positive");
    if (!(cfg.temperature > 0)) throw ValidationError("renderer temperature must be positive");
    validateLossConfig(cfg.loss);
}

FinetuneLog finetuneReprojection(PosePrior& pose, ShapePrior& shape, const Dataset& data2D, const Dataset& data3D,
                                 const BodyModel& model, const FinetuneConfig& cfg) {
    validateFinetuneConfig(cfg);
    checkDataset(data2D, model);
    for (size_t i = 0; i < data2D.size(); ++i) {
        try {
            validateCamera(data2D.records[i].camera);
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(i) + " lacks a usable camera initialization: " + e.what());
        }
    }
    const bool individual = cfg.alternate && data3D.size() > 0;
    if (individual) checkDataset(data3D, model);

    Rmsprop poseOpt({cfg.learningRate, 0.99, 1e-8}), shapeOpt({cfg.learningRate, 0.99, 1e-8});
    Rmsprop pose3D({cfg.learningRate, 0.99, 1e-8}), shape3D({cfg.learningRate, 0.99, 1e-8});
    FinetuneLog log;
    const int n = kImageSize;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto idx = sampleBatch(cfg.seed, kFinetuneStream | static_cast<uint64_t>(step), data2D.size(), cfg.batchSize);
        std::vector<const Keypoints2D*> kps;
        std::vector<const Mask*> masks;
        for (size_t i : idx) {
            kps.push_back(&data2D.records[i].keypoints);
            masks.push_back(&data2D.records[i].silhouette);
        }
        const Tensor thetaHat = pose.net().forward(pose.encode(kps), true);
        const Tensor betaHat = cfg.updateShape ? shape.net().forward(shape.encode(masks), true)
                                               : shape.net().predict(shape.encode(masks));
        const int b = cfg.batchSize;
        Tensor dTheta(thetaHat.shape()), dBeta(betaHat.shape());
        double total = 0;
        for (int s = 0; s < b; ++s) {
            const auto& rec = data2D.records[idx[static_cast<size_t>(s)]];
            const PosedBody body(model, {betaHat.matrix().row(s).transpose()}, {thetaHat.matrix().row(s).transpose()});
            const Keypoints2D kpHat{projectPoints(body.joints().joints, rec.camera),
                                    Eigen::VectorXd::Ones(model.numJoints())};
            Image silHat = Image::Zero(n, n), silRef = Image::Zero(n, n);
            if (cfg.useSilhouette) {
                silHat = renderSilhouette(body.mesh().vertices, model.faces, rec.camera, cfg.temperature).pixels;
                silRef = rec.silhouette.cast<double>();
            }
            const ReprojectionLoss rl = reprojectionLoss(kpHat, rec.keypoints, silHat, silRef, cfg.loss);
            total += rl.value / b;
            const RowMatX3 dJ = projectPointsGrad(rec.camera, rl.dKeypoints, model.numJoints());
            const RowMatX3 dV =
                cfg.useSilhouette
                    ? renderSilhouetteGrad(body.mesh().vertices, model.faces, rec.camera, cfg.temperature, rl.dSilhouette)
                          .vertices
                    : RowMatX3::Zero(model.numVertices(), 3);
            const ParamGradient g = body.vjp(dV, &dJ);
            dTheta.matrix().row(s) = g.theta.transpose() / b;
            dBeta.matrix().row(s) = g.beta.transpose() / b;
        }
        if (!std::isfinite(total)) throw NumericalError("reprojection loss is not finite at finetune step " + std::to_string(step));
        log.reprojection.push_back(total);
        pose.net().zeroGrad();
        pose.net().backward(dTheta);
        poseOpt.step(pose.net());
        if (cfg.updateShape) {
            shape.net().zeroGrad();
            shape.net().backward(dBeta);
            shapeOpt.step(shape.net());
        }
        if (individual) {
            const auto idx3 =
                sampleBatch(cfg.seed, kIndividualStream | static_cast<uint64_t>(step), data3D.size(), cfg.individualBatch);
            poseStep(pose, pose3D, data3D, model, idx3, cfg.variant, true, 1.0);
            if (cfg.updateShape) shapeStep(shape, shape3D, data3D, model, idx3, {}, cfg.variant, true, 1.0);
        }
    }
    return log;
}

// ---------------------------------------------------------------------------

std::vector<Prediction> predictDataset(const PosePrior& pose, const ShapePrior& shape, const Dataset& data) {
    std::vector<Prediction> out;
    out.reserve(data.size());
    const size_t chunk = 256;
    for (size_t begin = 0; begin < data.size(); begin += chunk) {
        const size_t end = std::min(data.size(), begin + chunk);
        std::vector<const Keypoints2D*> kps;
        std::vector<const Mask*> masks;
        for (size_t i = begin; i < end; ++i) {
            kps.push_back(&data.records[i].keypoints);
            masks.push_back(&data.records[i].silhouette);
        }
        const auto thetas = pose.predictBatch(kps);
        const auto betas = shape.predictBatch(masks);
        for (size_t k = 0; k < thetas.size(); ++k) out.push_back({thetas[k], betas[k]});
    }
    return out;
}

EvalReport evaluatePredictions(const BodyModel& model, const Dataset& data, const std::vector<Prediction>& preds) {
    checkDataset(data, model);
    if (preds.size() != data.size()) throw ValidationError("prediction count does not match the dataset");
    EvalReport rep;
    for (size_t i = 0; i < data.size(); ++i) {
        const auto& rec = data.records[i];
        const ForwardResult hat = forward(model, preds[i].beta, preds[i].theta);
        const ForwardResult ref = forward(model, {rec.beta}, {rec.theta});
        rep.meanPerVertexError += meanPerVertexError(hat.mesh.vertices, ref.mesh.vertices);
        rep.reconstructionError += reconstructionError(hat.joints.joints, ref.joints.joints);
        const auto seg = segmentationScores(rasterizeMask(hat.mesh.vertices, model.faces, rec.camera), rec.silhouette);
        rep.segAccuracy += seg.accuracy;
        rep.segF1 += seg.f1;
    }
    const double n = static_cast<double>(data.size());
    rep.meanPerVertexError /= n;
    rep.reconstructionError /= n;
    rep.segAccuracy /= n;
    rep.segF1 /= n;
    rep.count = static_cast<int>(data.size());
    return rep;
}

}  // namespace bodyfit
