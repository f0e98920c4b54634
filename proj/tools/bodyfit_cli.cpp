#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "bodyfit/datagen.hpp"
#include "bodyfit/errors.hpp"
#include "bodyfit/experiments.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/model_io.hpp"
#include "bodyfit/priors.hpp"
#include "bodyfit/toy_model.hpp"

using namespace bodyfit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Options of one subcommand, resolvable from flags, a JSON config file and
/// built-in defaults, in that order of precedence.
class Settings {
public:
    explicit Settings(CLI::App* app) : app_(app) {
        app_->add_option("--config", configPath_, "JSON file with settings keyed by option name");
    }

    template <class T>
    void add(const std::string& key, T& var, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + key, var, help)->capture_default_str();
        entries_[key] = {opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }};
    }

    void flag(const std::string& key, bool& var, const std::string& help) {
        CLI::Option* opt = app_->add_flag("--" + key + ",!--no-" + key, var, help);
        entries_[key] = {opt, [&var](const json& j) { var = j.get<bool>(); }, [&var] { return json(var); }};
    }

    // Applies config values to options not given on the command line.
    void resolve() {
        if (configPath_.empty()) return;
        const json cfg = readJsonFile(configPath_);
        if (!cfg.is_object()) throw ValidationError("config file must hold a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            const auto it = entries_.find(key);
            if (it == entries_.end()) throw ValidationError("unknown config key '" + key + "'");
            if (it->second.option->count() > 0) continue;
            try {
                it->second.fromJson(value);
            } catch (const json::exception&) {
                throw ValidationError("config key '" + key + "' has the wrong type");
            }
        }
    }

    json effective() const {
        json out = json::object();
        for (const auto& [key, e] : entries_) out[key] = e.toJson();
        return out;
    }

    // Echoes the effective settings next to an output artifact.
    void writeSidecar(const std::string& command, const std::string& outputPath) const {
        writeTextFile(outputPath + ".config.json", json{{"command", command}, {"settings", effective()}}.dump(2) + "\n");
    }

private:
    struct Entry {
        CLI::Option* option = nullptr;
        std::function<void(const json&)> fromJson;
        std::function<json()> toJson;
    };
    CLI::App* app_;
    std::string configPath_;
    std::map<std::string, Entry> entries_;
};


PoseFamily parseFamily(const std::string& name) {
    if (name == "standard") return PoseFamily::Standard;
    if (name == "raised") return PoseFamily::Raised;
    throw ValidationError("unknown pose family '" + name + "' (standard, raised)");
}

void ensureDirectory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string objText(const RowMatX3& vertices, const Faces& faces) {
    std::ostringstream os;
    char buf[96];
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", vertices(i, 0), vertices(i, 1), vertices(i, 2));
        os << buf;
    }
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
        os << "f " << faces(f, 0) + 1 << ' ' << faces(f, 1) + 1 << ' ' << faces(f, 2) + 1 << '\n';
    return os.str();
}

Image maskImage(const Mask& mask) { return mask.cast<double>(); }

// ---------------------------------------------------------------------------

struct MakeModelArgs {
    int seed = 1;
    int joints = 15;
    int shapeDims = 10;
    int vertices = 600;
    double poseBlendshapes = 0.0;
    std::string out = "model.json";
};

void runMakeModel(const MakeModelArgs& a, const Settings& s) {
    if (a.seed < 0) throw ValidationError("seed must be >= 0");
    ToyModelSpec spec;
    spec.seed = static_cast<uint64_t>(a.seed);
    spec.joints = a.joints;
    spec.shapeDims = a.shapeDims;
    spec.vertices = a.vertices;
    spec.poseBlendshapeScale = a.poseBlendshapes;
    const BodyModel m = buildToyModel(spec);
    validateModel(m);
    saveModel(m, a.out);
    s.writeSidecar("make-model", a.out);
    std::cout << "vertices " << m.numVertices() << "\nfaces " << m.faces.rows() << "\njoints " << m.numJoints()
              << " (including the root)\npose parameters " << m.poseDim() << "\nshape dims " << m.numShape()
              << "\nclosed orientable " << (isClosedOrientable(m.faces, m.numVertices()) ? "yes" : "no")
              << "\nmodel checks passed\n";
}

struct GenArgs {
    std::string model = "model.json";
    std::string out = "data.bfd";
    int count = 1000;
    int seed = 7;
    std::string family = "standard";
    std::string poseFile;
    double shapeSigma = 1.0;
    double keypointSigma = 1.5;
    double keypointDropout = 0.05;
    int silhouetteRadius = 0;
    double fill = 0.8;
    bool json = false;
};

void runGen(const GenArgs& a, const Settings& s) {
    if (a.seed < 0) throw ValidationError("seed must be >= 0");
    const BodyModel m = loadModel(a.model);
    GenConfig cfg;
    cfg.count = a.count;
    cfg.seed = static_cast<uint64_t>(a.seed);
    cfg.noise = {a.keypointSigma, a.keypointDropout, a.silhouetteRadius};
    cfg.fill = a.fill;
    const PoseSampler poses = a.poseFile.empty() ? PoseSampler::procedural(m, cfg.seed, parseFamily(a.family))
                                                 : PoseSampler::fromFile(a.poseFile, m.poseDim());
    const Dataset d = generateDataset(m, poses, ShapeSampler(m.numShape(), a.shapeSigma, cfg.seed), cfg);
    saveDataset(d, a.out);
    if (a.json) writeTextFile(a.out + ".json", datasetToJson(d).dump() + "\n");
    s.writeSidecar("gen", a.out);
    std::cout << "wrote " << d.size() << " records to " << a.out << "\n";
}

struct TrainArgs {
    std::string model = "model.json";
    std::string data = "data.bfd";
    std::string out = "priors";
    int seed = 1;
    int poseSteps1 = 4000;
    int poseSteps2 = 6000;
    int shapeSteps1 = 1000;
    int shapeSteps2 = 1000;
    int batch = 64;
    std::string variant = "rot-matrix+vertex";
    double lr = 3e-4;
    int width = 256;
    int units = 2;
    double dropout = 0.5;
    std::string finetuneData;
    int finetuneSteps = 500;
    double finetuneLr = 8e-5;
    bool finetuneSilhouette = true;
};

void runTrain(const TrainArgs& a, const Settings& s) {
    if (a.seed < 0) throw ValidationError("seed must be >= 0");
    const LossVariant variant = parseVariant(a.variant);
    const BodyModel m = loadModel(a.model);
    const Dataset d = loadDataset(a.data);
    TrainPlan pose;
    pose.phase1Steps = a.poseSteps1;
    pose.phase2Steps = a.poseSteps2;
    pose.batchSize = a.batch;
    pose.variant = variant;
    pose.learningRate = a.lr;
    pose.seed = static_cast<uint64_t>(a.seed);
    TrainPlan shape = pose;
    shape.phase1Steps = a.shapeSteps1;
    shape.phase2Steps = a.shapeSteps2;
    TrainedPriors t = trainPriors(d, m, pose, shape, {a.width, a.units, a.dropout});
    ensureDirectory(a.out);
    if (!a.finetuneData.empty()) {
        FinetuneConfig fc;
        fc.steps = a.finetuneSteps;
        fc.learningRate = a.finetuneLr;
        fc.useSilhouette = a.finetuneSilhouette;
        fc.variant = pose.variant;
        fc.seed = pose.seed;
        const FinetuneLog log = finetuneReprojection(t.pose, t.shape, loadDataset(a.finetuneData), d, m, fc);
        std::ostringstream os;
        os << "step,reprojection\n";
        for (size_t i = 0; i < log.reprojection.size(); ++i) os << i << ',' << formatExact(log.reprojection[i]) << '\n';
        writeTextFile(a.out + "/finetune_loss.csv", os.str());
    }
    t.pose.save(a.out + "/pose");
    t.shape.save(a.out + "/shape");
    writeTextFile(a.out + "/pose_loss.csv", t.poseLog.csv());
    writeTextFile(a.out + "/shape_loss.csv", t.shapeLog.csv());
    s.writeSidecar("train", a.out + "/train");
    std::cout << "final pose loss " << formatExact(t.poseLog.entries.back().total) << "\nfinal shape loss "
              << formatExact(t.shapeLog.entries.back().total) << "\n";
}

struct PredictArgs {
    std::string priors = "priors";
    std::string data = "data.bfd";
    std::string out = "predictions.json";
};

void runPredict(const PredictArgs& a, const Settings& s) {
    const PosePrior pose = PosePrior::load(a.priors + "/pose");
    const ShapePrior shape = ShapePrior::load(a.priors + "/shape");
    const std::vector<Prediction> preds = predictDataset(pose, shape, loadDataset(a.data));
    writeTextFile(a.out, predictionsToJson(preds).dump() + "\n");
    s.writeSidecar("predict", a.out);
    std::cout << "wrote " << preds.size() << " predictions to " << a.out << "\n";
}

struct FitArgs {
    std::string model = "model.json";
    std::string problem;
    std::string data;
    std::string anchor;
    std::string out = "fit.json";
    int count = 0;  // 0: all records
    bool compare = false;
    bool silhouette = false;
    int maxIterations = 500;
    double tolerance = 1e-7;
    double wKeypoint = 1.0;
    double wSilhouette = 1e-2;
    double wAnchor = 0.1;
    double wBeta = 1e-3;
    double sigmaKeypoint = 5.0;
    double sigmaAnchor = 0.5;
};

void runFit(const FitArgs& a, const Settings& s) {
    const BodyModel m = loadModel(a.model);
    if (!a.problem.empty()) {
        const FitResult res = fit(m, fitProblemFromJson(readJsonFile(a.problem)));
        writeTextFile(a.out, toJson(res).dump() + "\n");
        s.writeSidecar("fit", a.out);
        std::cout << "iterations " << res.iterations << " objective " << formatExact(res.objective.back()) << "\n";
        return;
    }
    if (a.data.empty()) throw ValidationError("fit needs --problem or --data");
    Dataset d = loadDataset(a.data);
    if (a.count < 0) throw ValidationError("count must be >= 0");
    if (a.count > 0 && static_cast<size_t>(a.count) < d.size()) d = d.slice(0, static_cast<size_t>(a.count));
    std::vector<PoseParams> predictions;
    if (!a.anchor.empty()) {
        const auto preds = predictionsFromJson(readJsonFile(a.anchor));
        if (preds.size() < d.size()) throw ValidationError("fewer anchor predictions than problems");
        for (size_t i = 0; i < d.size(); ++i) predictions.push_back(preds[i].theta);
    }
    FitProblem base;
    base.weights = {a.wKeypoint, a.wSilhouette, a.wAnchor, a.wBeta};
    base.gmSigmaKeypoint = a.sigmaKeypoint;
    base.gmSigmaAnchor = a.sigmaAnchor;
    base.maxIterations = a.maxIterations;
    base.tolerance = a.tolerance;
    if (a.compare) {
        if (predictions.empty()) throw ValidationError("--compare needs --anchor predictions");
        const InitComparisonReport report = compareInitializations(m, d, predictions, base);
        writeTextFile(a.out, report.toJson().dump(2) + "\n");
        s.writeSidecar("fit", a.out);
        std::cout << "median iteration ratio (predicted / mean init) " << formatExact(report.iterationRatio())
                  << "\nanchored data objective <= mean-init on " << formatExact(report.anchoredWinFraction())
                  << " of problems\n";
        return;
    }
    json results = json::array();
    for (size_t i = 0; i < d.size(); ++i) {
        FitProblem p = base;
        p.keypoints = d.records[i].keypoints;
        if (a.silhouette) p.silhouette = d.records[i].silhouette;
        p.beta = ShapeParams::zero(m);
        p.theta = predictions.empty() ? meanPose(m) : predictions[i];
        if (!predictions.empty()) p.anchor = predictions[i].theta;
        p.camera = initCameraFromKeypoints(m, p.theta, p.beta, p.keypoints);
        results.push_back(toJson(fit(m, p)));
    }
    writeTextFile(a.out, json{{"results", results}}.dump() + "\n");
    s.writeSidecar("fit", a.out);
    std::cout << "fitted " << d.size() << " problems\n";
}

struct EvalArgs {
    std::string model = "model.json";
    std::string data = "data.bfd";
    std::string predictions = "predictions.json";
    std::string out = "report.json";
};

void runEval(const EvalArgs& a, const Settings& s) {
    const BodyModel m = loadModel(a.model);
    const Dataset d = loadDataset(a.data);
    const auto preds = predictionsFromJson(readJsonFile(a.predictions));
    const EvalReport r = evaluatePredictions(m, d, preds);
    writeTextFile(a.out, r.toJson().dump(2) + "\n");
    s.writeSidecar("eval", a.out);
    std::cout << EvalReport::csvHeader() << "\n" << r.csvRow() << "\n";
}

struct RenderArgs {
    std::string model = "model.json";
    std::string data;
    int index = 0;
    std::string params;
    std::string pgm = "render.pgm";
    std::string mask;
    std::string obj;
    double temperature = 1.0;
};

void runRender(const RenderArgs& a, const Settings& s) {
    const BodyModel m = loadModel(a.model);
    PoseParams theta;
    ShapeParams beta;
    Camera cam;
    std::optional<Mask> recordMask;
    if (!a.data.empty()) {
        const Dataset d = loadDataset(a.data);
        if (a.index < 0 || static_cast<size_t>(a.index) >= d.size())
            throw ValidationError("record index out of range");
        const DatasetRecord& r = d.records[static_cast<size_t>(a.index)];
        theta.theta = r.theta;
        beta.beta = r.beta;
        cam = r.camera;
        recordMask = r.silhouette;
    } else if (!a.params.empty()) {
        const json doc = readJsonFile(a.params);
        for (const char* k : {"theta", "beta", "camera"})
            if (!doc.contains(k)) throw IoError(std::string("render parameters need '") + k + "'");
        const auto th = readExactArray(doc["theta"], "theta"), be = readExactArray(doc["beta"], "beta");
        theta.theta = Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
        beta.beta = Eigen::Map<const Eigen::VectorXd>(be.data(), static_cast<Eigen::Index>(be.size()));
        cam = cameraFromJson(doc["camera"]);
    } else {
        throw ValidationError("render needs --data or --params");
    }
    const RowMatX3 v = forward(m, beta, theta).mesh.vertices;
    const Silhouette sil = renderSilhouette(v, m.faces, cam, a.temperature);
    writePgm(sil.pixels, a.pgm);
    const Mask bin = sil.binarized();
    if (!a.mask.empty()) writePgm(maskImage(bin), a.mask);
    if (!a.obj.empty()) writeTextFile(a.obj, objText(v, m.faces));
    s.writeSidecar("render", a.pgm);
    if (recordMask)
        std::cout << "binarized silhouette matches the record: " << (bin == *recordMask ? "yes" : "no") << "\n";
}

struct AblateArgs {
    std::string model = "model.json";
    std::string out = "ablation.json";
    int records = 5000;
    int heldOut = 500;
    int dataSeed = 7;
    std::vector<int> seeds{1, 2, 3};
    int steps1 = 1500;
    int steps2 = 1500;
    int batch = 64;
    double lr = 3e-4;
};

void runAblate(const AblateArgs& a, const Settings& s) {
    const BodyModel m = loadModel(a.model);
    AblationConfig cfg;
    cfg.records = a.records;
    cfg.heldOut = a.heldOut;
    if (a.dataSeed < 0) throw ValidationError("seeds must be >= 0");
    cfg.dataSeed = static_cast<uint64_t>(a.dataSeed);
    cfg.seeds.clear();
    for (int seed : a.seeds) {
        if (seed < 0) throw ValidationError("seeds must be >= 0");
        cfg.seeds.push_back(static_cast<uint64_t>(seed));
    }
    cfg.plan.phase1Steps = a.steps1;
    cfg.plan.phase2Steps = a.steps2;
    cfg.plan.batchSize = a.batch;
    cfg.plan.learningRate = a.lr;
    const AblationReport r = runAblation(m, cfg);
    writeTextFile(a.out, r.toJson().dump(2) + "\n");
    writeTextFile(a.out + ".csv", r.table());
    s.writeSidecar("ablate", a.out);
    std::cout << r.table();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic body-model pipeline: model, data, priors, fitting and evaluation"};
    app.require_subcommand(1);

    MakeModelArgs mk;
    auto* cMk = app.add_subcommand("make-model", "Build a toy body model");
    Settings sMk(cMk);
    sMk.add("seed", mk.seed, "Model seed");
    sMk.add("joints", mk.joints, "Body joints, excluding the root");
    sMk.add("shape-dims", mk.shapeDims, "Shape coefficients");
    sMk.add("vertices", mk.vertices, "Approximate vertex count");
    sMk.add("pose-blendshapes", mk.poseBlendshapes, "Pose blendshape scale, 0 disables");
    sMk.add("out", mk.out, "Output model JSON");

    GenArgs gen;
    auto* cGen = app.add_subcommand("gen", "Generate a synthetic dataset");
    Settings sGen(cGen);
    sGen.add("model", gen.model, "Model JSON");
    sGen.add("out", gen.out, "Output dataset file");
    sGen.add("count", gen.count, "Records");
    sGen.add("seed", gen.seed, "Dataset seed");
    sGen.add("family", gen.family, "Pose family: standard or raised");
    sGen.add("pose-file", gen.poseFile, "Replay poses from a text file");
    sGen.add("shape-sigma", gen.shapeSigma, "Shape coefficient standard deviation");
    sGen.add("keypoint-sigma", gen.keypointSigma, "Keypoint noise, pixels");
    sGen.add("keypoint-dropout", gen.keypointDropout, "Keypoint dropout probability");
    sGen.add("silhouette-radius", gen.silhouetteRadius, "Silhouette erosion (<0) or dilation (>0) radius");
    sGen.add("fill", gen.fill, "Projected body height over image height");
    sGen.flag("json", gen.json, "Also write a JSON dump");

    TrainArgs tr;
    auto* cTr = app.add_subcommand("train", "Train the pose and shape priors");
    Settings sTr(cTr);
    sTr.add("model", tr.model, "Model JSON");
    sTr.add("data", tr.data, "Training dataset");
    sTr.add("out", tr.out, "Checkpoint directory");
    sTr.add("seed", tr.seed, "Training seed");
    sTr.add("pose-steps1", tr.poseSteps1, "Pose prior phase-1 steps");
    sTr.add("pose-steps2", tr.poseSteps2, "Pose prior phase-2 steps");
    sTr.add("shape-steps1", tr.shapeSteps1, "Shape prior phase-1 steps");
    sTr.add("shape-steps2", tr.shapeSteps2, "Shape prior phase-2 steps");
    sTr.add("batch", tr.batch, "Batch size");
    sTr.add("variant", tr.variant, "Loss variant: axis-angle, rot-matrix, rot-matrix+vertex, rot-matrix+joint");
    sTr.add("lr", tr.lr, "RMSprop learning rate");
    sTr.add("width", tr.width, "Pose prior width");
    sTr.add("units", tr.units, "Pose prior bilinear units");
    sTr.add("dropout", tr.dropout, "Pose prior dropout");
    sTr.add("finetune-data", tr.finetuneData, "2D-annotated dataset for reprojection finetuning");
    sTr.add("finetune-steps", tr.finetuneSteps, "Finetuning steps");
    sTr.add("finetune-lr", tr.finetuneLr, "Finetuning learning rate");
    sTr.flag("finetune-silhouette", tr.finetuneSilhouette, "Use the silhouette term when finetuning");

    PredictArgs pr;
    auto* cPr = app.add_subcommand("predict", "Predict pose and shape for a dataset's 2D inputs");
    Settings sPr(cPr);
    sPr.add("priors", pr.priors, "Checkpoint directory");
    sPr.add("data", pr.data, "Dataset");
    sPr.add("out", pr.out, "Output predictions JSON");

    FitArgs ft;
    auto* cFit = app.add_subcommand("fit", "Fit the model to 2D evidence");
    Settings sFit(cFit);
    sFit.add("model", ft.model, "Model JSON");
    sFit.add("problem", ft.problem, "Single fit problem JSON");
    sFit.add("data", ft.data, "Dataset whose records become fit problems");
    sFit.add("anchor", ft.anchor, "Predictions JSON used as initialization and anchor");
    sFit.add("out", ft.out, "Output JSON");
    sFit.add("count", ft.count, "Fit only the first records (0: all)");
    sFit.flag("compare", ft.compare, "Compare mean-pose and predicted initializations");
    sFit.flag("silhouette", ft.silhouette, "Include the record silhouettes");
    sFit.add("max-iterations", ft.maxIterations, "Iteration cap");
    sFit.add("tolerance", ft.tolerance, "Relative objective decrease to stop at");
    sFit.add("w-keypoint", ft.wKeypoint, "Keypoint term weight");
    sFit.add("w-silhouette", ft.wSilhouette, "Silhouette term weight");
    sFit.add("w-anchor", ft.wAnchor, "Anchor term weight");
    sFit.add("w-beta", ft.wBeta, "Shape regularizer weight");
    sFit.add("sigma-keypoint", ft.sigmaKeypoint, "Keypoint Geman-McClure sigma, pixels");
    sFit.add("sigma-anchor", ft.sigmaAnchor, "Anchor Geman-McClure sigma, radians");

    EvalArgs ev;
    auto* cEv = app.add_subcommand("eval", "Score predictions against a dataset");
    Settings sEv(cEv);
    sEv.add("model", ev.model, "Model JSON");
    sEv.add("data", ev.data, "Dataset");
    sEv.add("predictions", ev.predictions, "Predictions JSON");
    sEv.add("out", ev.out, "Output report JSON");

    RenderArgs rn;
    auto* cRn = app.add_subcommand("render", "Render a silhouette and export the mesh");
    Settings sRn(cRn);
    sRn.add("model", rn.model, "Model JSON");
    sRn.add("data", rn.data, "Dataset holding the record to render");
    sRn.add("index", rn.index, "Record index");
    sRn.add("params", rn.params, "JSON with theta, beta and camera");
    sRn.add("pgm", rn.pgm, "Soft silhouette PGM");
    sRn.add("mask", rn.mask, "Binarized silhouette PGM");
    sRn.add("obj", rn.obj, "Mesh OBJ");
    sRn.add("temperature", rn.temperature, "Soft silhouette temperature, pixels");

    AblateArgs ab;
    auto* cAb = app.add_subcommand("ablate", "Loss-variant sweep for the pose prior");
    Settings sAb(cAb);
    sAb.add("model", ab.model, "Model JSON");
    sAb.add("out", ab.out, "Output report JSON (a CSV table is written next to it)");
    sAb.add("records", ab.records, "Dataset size");
    sAb.add("held-out", ab.heldOut, "Held-out records");
    sAb.add("data-seed", ab.dataSeed, "Dataset seed");
    sAb.add("seeds", ab.seeds, "Training seeds");
    sAb.add("steps1", ab.steps1, "Phase-1 steps");
    sAb.add("steps2", ab.steps2, "Phase-2 steps");
    sAb.add("batch", ab.batch, "Batch size");
    sAb.add("lr", ab.lr, "Learning rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const std::vector<std::pair<CLI::App*, std::function<void()>>> commands{
            {cMk, [&] { sMk.resolve(); runMakeModel(mk, sMk); }},
            {cGen, [&] { sGen.resolve(); runGen(gen, sGen); }},
            {cTr, [&] { sTr.resolve(); runTrain(tr, sTr); }},
            {cPr, [&] { sPr.resolve(); runPredict(pr, sPr); }},
            {cFit, [&] { sFit.resolve(); runFit(ft, sFit); }},
            {cEv, [&] { sEv.resolve(); runEval(ev, sEv); }},
            {cRn, [&] { sRn.resolve(); runRender(rn, sRn); }},
            {cAb, [&] { sAb.resolve(); runAblate(ab, sAb); }},
        };
        for (const auto& [cmd, run] : commands)
            if (cmd->parsed()) run();
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const EndOfDataError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
