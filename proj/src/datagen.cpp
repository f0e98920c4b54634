#include "bodyfit/datagen.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bodyfit/errors.hpp"
#include "bodyfit/model_io.hpp"

namespace bodyfit {

namespace {

constexpr double kPi = std::numbers::pi;

bool contains(const std::string& s, const char* part) { return s.find(part) != std::string::npos; }

JointLimit symmetric(double r) { return {Vec3::Constant(-r), Vec3::Constant(r)}; }

// Morphological dilation (grow) or erosion with a disk of the given radius.
Mask morph(const Mask& in, int radius, bool grow) {
    Mask out = in;
    const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool hit = !grow;
            for (int dy = -radius; dy <= radius && hit != grow; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dx * dx + dy * dy > radius * radius) continue;
                    const int sy = y + dy, sx = x + dx;
                    const bool v = sy >= 0 && sy < h && sx >= 0 && sx < w && in(sy, sx);
                    if (grow && v) {
                        hit = true;
                        break;
                    }
                    if (!grow && !v) {
                        hit = false;
                        break;
                    }
                }
            out(y, x) = hit ? 1 : 0;
        }
    return out;
}

class ByteWriter {
public:
    void u32(uint32_t v) {
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<uint8_t>(v >> (8 * k)));
    }
    void f64(double v) {
        const uint64_t bits = std::bit_cast<uint64_t>(v);
        for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<uint8_t>(bits >> (8 * k)));
    }
    std::vector<uint8_t> bytes;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<uint8_t>& b) : bytes_(b) {}
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw IoError("dataset file is truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(bytes_[pos_++]) << (8 * k);
        return v;
    }
    double f64() {
        need(8);
        uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<uint64_t>(bytes_[pos_++]) << (8 * k);
        return std::bit_cast<double>(v);
    }
    std::vector<uint8_t> raw(size_t n) {
        need(n);
        std::vector<uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<uint8_t>& bytes_;
    size_t pos_ = 0;
};

constexpr size_t kMaskBytes = kImageSize * kImageSize / 8;

}  // namespace

// ---------------------------------------------------------------------------

std::vector<JointLimit> defaultJointLimits(const BodyModel& model, PoseFamily family) {
    std::vector<JointLimit> limits(static_cast<size_t>(model.numJoints()));
    for (int j = 1; j < model.numJoints(); ++j) {
        const std::string name = j < static_cast<int>(model.jointNames.size()) ? model.jointNames[j] : "";
        const bool left = name.rfind("l_", 0) == 0;
        JointLimit lim = symmetric(0.3);
        if (contains(name, "shoulder") || contains(name, "hip")) lim = symmetric(1.2);
        if (contains(name, "knee")) lim = {Vec3::Zero(), Vec3(2.3, 0, 0)};
        if (contains(name, "elbow"))
            lim = left ? JointLimit{Vec3(0, -2.3, 0), Vec3::Zero()} : JointLimit{Vec3::Zero(), Vec3(0, 2.3, 0)};
        if (family == PoseFamily::Raised && contains(name, "shoulder")) {
            // Abduction about z beyond the standard range lifts the arm overhead.
            lim = symmetric(0.3);
            lim.lo.z() = left ? 1.4 : -2.1;
            lim.hi.z() = left ? 2.1 : -1.4;
        }
        limits[j] = lim;
    }
    return limits;
}

PoseSampler PoseSampler::procedural(const BodyModel& model, uint64_t seed, PoseFamily family) {
    PoseSampler s;
    s.poseDim_ = model.poseDim();
    s.seed_ = seed;
    s.limits_ = defaultJointLimits(model, family);
    return s;
}

PoseSampler PoseSampler::fromLibrary(std::vector<Eigen::VectorXd> thetas) {
    if (thetas.empty()) throw ValidationError("pose library is empty");
    PoseSampler s;
    s.poseDim_ = static_cast<int>(thetas.front().size());
    if (s.poseDim_ == 0 || s.poseDim_ % 3 != 0) throw ValidationError("pose library entries must have length 3(K+1)");
    for (const auto& t : thetas) {
        if (t.size() != s.poseDim_) throw ValidationError("pose library entries differ in length");
        if (!t.allFinite()) throw ValidationError("pose library entry is not finite");
    }
    s.library_ = std::move(thetas);
    return s;
}

PoseSampler PoseSampler::fromFile(const std::string& path, int poseDim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pose library '" + path + "'");
    std::vector<Eigen::VectorXd> thetas;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        std::istringstream ls(line);
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) {
            try {
                vals.push_back(parseExact(tok));
            } catch (const IoError&) {
                throw IoError(path + ":" + std::to_string(lineNo) + ": not a number: " + tok);
            }
        }
        if (vals.empty()) continue;
        if (static_cast<int>(vals.size()) != poseDim)
            throw IoError(path + ":" + std::to_string(lineNo) + ": expected " + std::to_string(poseDim) + " values");
        thetas.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), poseDim));
    }
    if (thetas.empty()) throw IoError("pose library '" + path + "' has no entries");
    return fromLibrary(std::move(thetas));
}

PoseParams PoseSampler::sample(uint64_t index) const {
    if (!library_.empty()) {
        if (index >= library_.size())
            throw EndOfDataError("pose library exhausted at entry " + std::to_string(index) + " of " +
                                 std::to_string(library_.size()));
        PoseParams p{library_[index]};
        p.setJoint(0, Vec3::Zero());
        return p;
    }
    CounterRng rng(seed_, StreamTag::PoseSample, index);
    PoseParams p{Eigen::VectorXd::Zero(poseDim_)};
    for (size_t j = 1; j < limits_.size(); ++j) {
        Vec3 w;
        for (int c = 0; c < 3; ++c) {
            const double lo = limits_[j].lo[c], hi = limits_[j].hi[c];
            w[c] = hi > lo ? rng.truncatedNormal(0.5 * (lo + hi), 0.25 * (hi - lo), lo, hi) : lo;
        }
        p.setJoint(static_cast<int>(j), w);
    }
    return p;
}

bool PoseSampler::withinLimits(const PoseParams& theta, double slack) const {
    if (limits_.empty()) return true;
    for (size_t j = 1; j < limits_.size(); ++j) {
        const Vec3 w = theta.joint(static_cast<int>(j));
        for (int c = 0; c < 3; ++c)
            if (w[c] < limits_[j].lo[c] - slack || w[c] > limits_[j].hi[c] + slack) return false;
    }
    return true;
}

ShapeParams ShapeSampler::sample(uint64_t index) const {
    CounterRng rng(seed_, StreamTag::ShapeSample, index);
    ShapeParams b{Eigen::VectorXd::Zero(sigma_.size())};
    for (Eigen::Index i = 0; i < sigma_.size(); ++i)
        b.beta[i] = sigma_[i] > 0 ? rng.truncatedNormal(0.0, sigma_[i], -3 * sigma_[i], 3 * sigma_[i]) : 0.0;
    return b;
}

// ---------------------------------------------------------------------------

void validateNoiseSpec(const NoiseSpec& spec) {
    if (!(spec.keypointSigma >= 0) || !std::isfinite(spec.keypointSigma))
        throw ValidationError("keypoint noise sigma must be finite and >= 0");
    if (!(spec.keypointDropout >= 0 && spec.keypointDropout <= 1))
        throw ValidationError("keypoint dropout must be in [0, 1]");
    if (spec.silhouetteRadius < 0 || spec.silhouetteRadius > 8) throw ValidationError("silhouette radius must be in [0, 8]");
}

void validateGenConfig(const GenConfig& cfg) {
    if (cfg.count <= 0) throw ValidationError("record count must be positive");
    if (cfg.viewpointsDeg.empty()) throw ValidationError("at least one viewpoint is required");
    for (double v : cfg.viewpointsDeg)
        if (!std::isfinite(v)) throw ValidationError("viewpoints must be finite");
    if (!(cfg.fill > 0 && cfg.fill <= 1)) throw ValidationError("fill must be in (0, 1]");
    validateNoiseSpec(cfg.noise);
}

Vec3 globalRotation(double yawRad, const Vec3& lean) {
    const Mat3 flip = rodrigues(Vec3(kPi, 0, 0));
    const Mat3 yaw = rodrigues(Vec3(0, yawRad, 0));
    return axisAngleFromRotation(flip * yaw * rodrigues(lean));
}

Camera fitCamera(const RowMatX3& vertices, double fill, int imageSize) {
    if (vertices.rows() == 0) throw ValidationError("cannot fit a camera to an empty mesh");
    const double minX = vertices.col(0).minCoeff(), maxX = vertices.col(0).maxCoeff();
    const double minY = vertices.col(1).minCoeff(), maxY = vertices.col(1).maxCoeff();
    const double height = maxY - minY;
    if (!(height > 0)) throw ValidationError("mesh has no vertical extent");
    Camera cam;
    cam.imageSize = imageSize;
    cam.scale = fill * imageSize / height;
    cam.translation = Vec2(0.5 * imageSize - cam.scale * 0.5 * (minX + maxX),
                           0.5 * imageSize - cam.scale * 0.5 * (minY + maxY));
    return cam;
}

DatasetRecord makeRecord(const BodyModel& model, const PoseSampler& poses, const ShapeSampler& shapes,
                         const GenConfig& cfg, uint64_t index) {
    const uint64_t views = cfg.viewpointsDeg.size();
    const uint64_t base = index / views;
    const double yaw = cfg.viewpointsDeg[index % views] * kPi / 180.0;

    PoseParams theta = poses.sample(base);
    if (theta.theta.size() != model.poseDim()) throw ValidationError("pose sampler dimension does not match the model");
    CounterRng leanRng(cfg.seed, StreamTag::Viewpoint, base);
    Vec3 lean;
    for (int c = 0; c < 3; ++c) lean[c] = leanRng.normal(0.0, poses.leanSigma());
    theta.setJoint(0, globalRotation(yaw, lean));
    const ShapeParams beta = shapes.sample(base);
    if (beta.beta.size() != model.numShape()) throw ValidationError("shape sampler dimension does not match the model");

    const ForwardResult fr = forward(model, beta, theta);
    DatasetRecord rec;
    rec.theta = theta.theta;
    rec.beta = beta.beta;
    rec.camera = fitCamera(fr.mesh.vertices, cfg.fill, kImageSize);
    rec.keypoints.points = projectPoints(fr.joints.joints, rec.camera);
    rec.keypoints.confidences = Eigen::VectorXd::Ones(fr.joints.joints.rows());
    rec.silhouette = rasterizeMask(fr.mesh.vertices, model.faces, rec.camera);
    return rec;
}

DatasetRecord applyNoise(const DatasetRecord& record, const NoiseSpec& spec, CounterRng& rng) {
    validateNoiseSpec(spec);
    DatasetRecord out = record;
    const double center = 0.5 * record.camera.imageSize;
    for (int i = 0; i < out.keypoints.size(); ++i) {
        if (spec.keypointDropout > 0 && rng.bernoulli(spec.keypointDropout)) {
            out.keypoints.points.row(i) = Vec2(center, center).transpose();
            out.keypoints.confidences[i] = 0.0;
            continue;
        }
        if (spec.keypointSigma > 0) {
            const Vec2 offset(rng.normal(0.0, spec.keypointSigma), rng.normal(0.0, spec.keypointSigma));
            out.keypoints.points.row(i) += offset.transpose();
            out.keypoints.confidences[i] =
                std::exp(-offset.squaredNorm() / (2 * spec.keypointSigma * spec.keypointSigma));
        }
    }
    if (spec.silhouetteRadius > 0) out.silhouette = morph(out.silhouette, spec.silhouetteRadius, rng.bernoulli(0.5));
    return out;
}

Dataset generateDataset(const BodyModel& model, const PoseSampler& poses, const ShapeSampler& shapes,
                        const GenConfig& cfg) {
    validateGenConfig(cfg);
    validateModel(model);
    Dataset ds;
    ds.poseDim = model.poseDim();
    ds.shapeDim = model.numShape();
    ds.numKeypoints = model.numJoints();
    ds.records.reserve(static_cast<size_t>(cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
        DatasetRecord rec = makeRecord(model, poses, shapes, cfg, static_cast<uint64_t>(i));
        CounterRng noiseRng(cfg.seed, StreamTag::Noise, static_cast<uint64_t>(i));
        ds.records.push_back(applyNoise(rec, cfg.noise, noiseRng));
    }
    return ds;
}

// ---------------------------------------------------------------------------

void Dataset::validate() const {
    if (poseDim <= 0 || poseDim % 3 != 0 || shapeDim <= 0 || numKeypoints <= 0)
        throw ValidationError("dataset dimensions are invalid");
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string at = " in record " + std::to_string(i);
        if (r.theta.size() != poseDim || r.beta.size() != shapeDim) throw ValidationError("parameter length mismatch" + at);
        if (r.keypoints.size() != numKeypoints || r.keypoints.confidences.size() != numKeypoints)
            throw ValidationError("keypoint count mismatch" + at);
        if (r.silhouette.rows() != kImageSize || r.silhouette.cols() != kImageSize)
            throw ValidationError("silhouette must be 64x64" + at);
        if (!r.theta.allFinite() || !r.beta.allFinite() || !r.keypoints.points.allFinite())
            throw ValidationError("non-finite values" + at);
    }
}

Dataset Dataset::slice(size_t begin, size_t end) const {
    if (begin > end || end > records.size()) throw ValidationError("dataset slice out of range");
    Dataset out{poseDim, shapeDim, numKeypoints, {}};
    out.records.assign(records.begin() + static_cast<std::ptrdiff_t>(begin),
                       records.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

std::vector<uint8_t> encodeDataset(const Dataset& ds) {
    ds.validate();
    ByteWriter w;
    for (char c : std::string("BFD1")) w.bytes.push_back(static_cast<uint8_t>(c));
    w.u32(static_cast<uint32_t>(ds.records.size()));
    w.u32(static_cast<uint32_t>(ds.poseDim));
    w.u32(static_cast<uint32_t>(ds.shapeDim));
    w.u32(static_cast<uint32_t>(ds.numKeypoints));
    for (const auto& r : ds.records) {
        for (double v : r.theta) w.f64(v);
        for (double v : r.beta) w.f64(v);
        w.f64(r.camera.scale);
        w.f64(r.camera.translation.x());
        w.f64(r.camera.translation.y());
        for (int i = 0; i < ds.numKeypoints; ++i) {
            w.f64(r.keypoints.points(i, 0));
            w.f64(r.keypoints.points(i, 1));
            w.f64(r.keypoints.confidences[i]);
        }
        const auto packed = packMask(r.silhouette);
        w.bytes.insert(w.bytes.end(), packed.begin(), packed.end());
    }
    return std::move(w.bytes);
}

Dataset decodeDataset(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    const auto magic = r.raw(4);
    if (std::string(magic.begin(), magic.end()) != "BFD1") throw IoError("not a BFD1 dataset (bad magic)");
    const uint32_t count = r.u32();
    Dataset ds;
    ds.poseDim = static_cast<int>(r.u32());
    ds.shapeDim = static_cast<int>(r.u32());
    ds.numKeypoints = static_cast<int>(r.u32());
    if (ds.poseDim <= 0 || ds.poseDim % 3 != 0 || ds.poseDim > 3 * 1024 || ds.shapeDim <= 0 || ds.shapeDim > 1024 ||
        ds.numKeypoints <= 0 || ds.numKeypoints > 1024)
        throw IoError("dataset header has invalid dimensions");
    const size_t recordSize = 8 * static_cast<size_t>(ds.poseDim + ds.shapeDim + 3 + 3 * ds.numKeypoints) + kMaskBytes;
    if (r.remaining() != recordSize * count) throw IoError("dataset size does not match its header");
    ds.records.resize(count);
    for (auto& rec : ds.records) {
        rec.theta.resize(ds.poseDim);
        rec.beta.resize(ds.shapeDim);
        for (auto& v : rec.theta) v = r.f64();
        for (auto& v : rec.beta) v = r.f64();
        rec.camera.scale = r.f64();
        rec.camera.translation.x() = r.f64();
        rec.camera.translation.y() = r.f64();
        rec.keypoints.points.resize(ds.numKeypoints, 2);
        rec.keypoints.confidences.resize(ds.numKeypoints);
        for (int i = 0; i < ds.numKeypoints; ++i) {
            rec.keypoints.points(i, 0) = r.f64();
            rec.keypoints.points(i, 1) = r.f64();
            rec.keypoints.confidences[i] = r.f64();
        }
        rec.silhouette = unpackMask(r.raw(kMaskBytes), kImageSize);
    }
    try {
        ds.validate();
    } catch (const ValidationError& e) {
        throw IoError(std::string("garbled dataset: ") + e.what());
    }
    return ds;
}

void saveDataset(const Dataset& ds, const std::string& path) {
    const auto bytes = encodeDataset(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset loadDataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decodeDataset(bytes);
}

nlohmann::json datasetToJson(const Dataset& ds) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : ds.records) {
        nlohmann::json kp = nlohmann::json::array();
        for (int i = 0; i < r.keypoints.size(); ++i)
            kp.push_back({formatExact(r.keypoints.points(i, 0)), formatExact(r.keypoints.points(i, 1)),
                          formatExact(r.keypoints.confidences[i])});
        nlohmann::json sil = nlohmann::json::array();
        for (Eigen::Index y = 0; y < r.silhouette.rows(); ++y) {
            std::string row;
            for (Eigen::Index x = 0; x < r.silhouette.cols(); ++x) row += r.silhouette(y, x) ? '1' : '0';
            sil.push_back(row);
        }
        records.push_back({{"theta", exactArray(r.theta.data(), static_cast<size_t>(r.theta.size()))},
                           {"beta", exactArray(r.beta.data(), static_cast<size_t>(r.beta.size()))},
                           {"camera",
                            {{"scale", formatExact(r.camera.scale)},
                             {"tx", formatExact(r.camera.translation.x())},
                             {"ty", formatExact(r.camera.translation.y())}}},
                           {"keypoints", kp},
                           {"silhouette", sil}});
    }
    return {{"format", "BFD1"},
            {"pose_dim", ds.poseDim},
            {"shape_dim", ds.shapeDim},
            {"keypoints", ds.numKeypoints},
            {"records", records}};
}

}  // namespace bodyfit
