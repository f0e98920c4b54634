#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/renderer.hpp"
#include "bodyfit/rng.hpp"

namespace bodyfit {

/// Per-joint box limits on the axis-angle components, in radians.
struct JointLimit {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

enum class PoseFamily {
    Standard,
    // Arms raised above the shoulder limits of the standard family; disjoint
    // from its support.
    Raised,
};

/// Draws body poses (global rotation left at zero). Procedural mode samples
/// each limited coordinate from a truncated Gaussian; file mode replays a
/// theta library in order.
class PoseSampler {
public:
    static PoseSampler procedural(const BodyModel& model, uint64_t seed, PoseFamily family = PoseFamily::Standard);
    static PoseSampler fromLibrary(std::vector<Eigen::VectorXd> thetas);
    // Plain text, one theta per line, whitespace separated.
    static PoseSampler fromFile(const std::string& path, int poseDim);

    // Pose number `index`. File mode throws EndOfDataError past the end.
    PoseParams sample(uint64_t index) const;
    // Standard deviation of the global lean, radians.
    double leanSigma() const { return leanSigma_; }
    uint64_t seed() const { return seed_; }
    bool isFileMode() const { return !library_.empty(); }
    int poseDim() const { return poseDim_; }
    const std::vector<JointLimit>& limits() const { return limits_; }
    // Checks body joints (1..K) against the limits.
    bool withinLimits(const PoseParams& theta, double slack = 1e-12) const;

private:
    int poseDim_ = 0;
    uint64_t seed_ = 0;
    double leanSigma_ = 0.1;
    std::vector<JointLimit> limits_;  // per joint, entry 0 unused
    std::vector<Eigen::VectorXd> library_;
};

// Standard-family limits from the joint names: spine, neck and head +-0.3,
// shoulders and hips +-1.2, elbows and knees one-sided hinges [0, 2.3],
// everything else +-0.3.
std::vector<JointLimit> defaultJointLimits(const BodyModel& model, PoseFamily family = PoseFamily::Standard);

class ShapeSampler {
public:
    ShapeSampler(Eigen::VectorXd sigma, uint64_t seed) : sigma_(std::move(sigma)), seed_(seed) {}
    ShapeSampler(int dims, double sigma, uint64_t seed) : ShapeSampler(Eigen::VectorXd::Constant(dims, sigma), seed) {}

    // beta_i ~ N(0, sigma_i) truncated to +-3 sigma_i.
    ShapeParams sample(uint64_t index) const;
    const Eigen::VectorXd& sigma() const { return sigma_; }

private:
    Eigen::VectorXd sigma_;
    uint64_t seed_;
};

struct NoiseSpec {
    double keypointSigma = 1.5;     // pixels
    double keypointDropout = 0.05;  // probability
    int silhouetteRadius = 0;       // erosion or dilation radius in pixels

    static NoiseSpec none() { return {0.0, 0.0, 0}; }
};

void validateNoiseSpec(const NoiseSpec& spec);

struct DatasetRecord {
    Eigen::VectorXd theta;
    Eigen::VectorXd beta;
    Camera camera;
    Keypoints2D keypoints;
    Mask silhouette;
};

struct Dataset {
    int poseDim = 0;
    int shapeDim = 0;
    int numKeypoints = 0;
    std::vector<DatasetRecord> records;

    size_t size() const { return records.size(); }
    void validate() const;
    // Records [begin, end) as a new dataset.
    Dataset slice(size_t begin, size_t end) const;
};

struct GenConfig {
    int count = 1000;
    std::vector<double> viewpointsDeg{0, 45, 90, 135, 180, 225, 270, 315};
    NoiseSpec noise;
    uint64_t seed = 7;
    double fill = 0.8;  // projected height over image height
};

void validateGenConfig(const GenConfig& cfg);

// R_x(pi) R_y(yaw) exp(lean): upright in the y-down image, turned by yaw.
Vec3 globalRotation(double yawRad, const Vec3& lean);

// Scale and translation placing the projected vertices' bounding box at the
// image center with height fill * imageSize.
Camera fitCamera(const RowMatX3& vertices, double fill, int imageSize);

// Record `index` without noise: base pose index / views, viewpoint index % views.
DatasetRecord makeRecord(const BodyModel& model, const PoseSampler& poses, const ShapeSampler& shapes,
                         const GenConfig& cfg, uint64_t index);

DatasetRecord applyNoise(const DatasetRecord& record, const NoiseSpec& spec, CounterRng& rng);

Dataset generateDataset(const BodyModel& model, const PoseSampler& poses, const ShapeSampler& shapes,
                        const GenConfig& cfg);

/// Binary layout, little-endian: "BFD1", u32 count, u32 poseDim, u32 shapeDim,
/// u32 keypoints, then per record theta, beta, camera (scale, tx, ty),
/// keypoints (x, y, confidence) as float64 and the 64x64 silhouette as 512
/// packed bytes.
std::vector<uint8_t> encodeDataset(const Dataset& dataset);
Dataset decodeDataset(const std::vector<uint8_t>& bytes);
void saveDataset(const Dataset& dataset, const std::string& path);
Dataset loadDataset(const std::string& path);

nlohmann::json datasetToJson(const Dataset& dataset);

}  // namespace bodyfit
