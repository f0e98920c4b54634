#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "bodyfit/body_model.hpp"

namespace bodyfit {

// Shortest decimal string that parses back to exactly `value`.
std::string formatExact(double value);
// Parses a decimal string produced by formatExact (or any decimal real).
double parseExact(const std::string& text);

/// Model document layout (all reals are decimal strings):
///   n_vertices, n_joints (including the root), n_shape,
///   template: N*3 row-major, faces: F*3 integers,
///   shape_blendshapes: B*N*3 (blendshape-major), pose_blendshapes: Q*N*3 (optional),
///   parents: n_joints integers, joint_regressor: [[row, col, value], ...],
///   skinning_weights: N*n_joints row-major, joint_names (optional).
nlohmann::json modelToJson(const BodyModel& model);
BodyModel modelFromJson(const nlohmann::json& doc);

void saveModel(const BodyModel& model, const std::string& path);
BodyModel loadModel(const std::string& path);

// Shared helpers for JSON documents holding exact reals.
nlohmann::json exactArray(const double* data, size_t count);
std::vector<double> readExactArray(const nlohmann::json& array, const std::string& field);
nlohmann::json readJsonFile(const std::string& path);
void writeTextFile(const std::string& path, const std::string& text);

}  // namespace bodyfit
