#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "bodyfit/body_model.hpp"
#include "bodyfit/renderer.hpp"

namespace bodyfit {

// (1/N) sum_i |hat_i - ref_i|, no alignment.
double meanPerVertexError(const RowMatX3& verticesHat, const RowMatX3& vertices);

struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
};

// Similarity (scale, rotation, translation) minimizing sum |s R a_i + t - b_i|^2,
// via Horn's unit-quaternion method. Throws ValidationError on rank-deficient sets.
SimilarityTransform procrustesAlign(const RowMatX3& from, const RowMatX3& to);

// Mean joint distance after similarity Procrustes alignment of jointsHat onto joints.
double reconstructionError(const RowMatX3& jointsHat, const RowMatX3& joints);

struct SegmentationScores {
    double accuracy = 0.0;
    double f1 = 0.0;
};

SegmentationScores segmentationScores(const Mask& maskHat, const Mask& mask);

struct EvalReport {
    double meanPerVertexError = 0.0;
    double reconstructionError = 0.0;
    double segAccuracy = 0.0;
    double segF1 = 0.0;
    int count = 0;

    nlohmann::json toJson() const;
    static std::string csvHeader();
    std::string csvRow() const;
};

}  // namespace bodyfit
