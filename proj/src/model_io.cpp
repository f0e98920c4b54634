#include "bodyfit/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bodyfit/errors.hpp"

namespace bodyfit {

using nlohmann::json;

std::string formatExact(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parseExact(const std::string& text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw IoError("malformed real '" + text + "'");
    return value;
}

json exactArray(const double* data, size_t count) {
    json arr = json::array();
    for (size_t i = 0; i < count; ++i) arr.push_back(formatExact(data[i]));
    return arr;
}

std::vector<double> readExactArray(const json& array, const std::string& field) {
    if (!array.is_array()) throw IoError("field '" + field + "' must be an array");
    std::vector<double> out;
    out.reserve(array.size());
    for (const auto& v : array) {
        if (v.is_string())
            out.push_back(parseExact(v.get<std::string>()));
        else if (v.is_number())
            out.push_back(v.get<double>());
        else
            throw IoError("field '" + field + "' holds a non-numeric entry");
    }
    return out;
}

namespace {

const json& require(const json& doc, const char* field) {
    if (!doc.is_object() || !doc.contains(field)) throw IoError(std::string("model file is missing '") + field + "'");
    return doc.at(field);
}

int requireInt(const json& doc, const char* field) {
    const json& v = require(doc, field);
    if (!v.is_number_integer()) throw IoError(std::string("model field '") + field + "' must be an integer");
    return v.get<int>();
}

void checkSize(const std::vector<double>& v, size_t expected, const char* field) {
    if (v.size() != expected) {
        std::ostringstream os;
        os << "model field '" << field << "' has " << v.size() << " entries, expected " << expected;
        throw IoError(os.str());
    }
}

}  // namespace

json modelToJson(const BodyModel& m) {
    const int n = m.numVertices();
    const int joints = m.numJoints();
    json doc;
    doc["n_vertices"] = n;
    doc["n_joints"] = joints;
    doc["n_shape"] = m.numShape();
    doc["template"] = exactArray(m.templateVertices.data(), m.templateVertices.size());
    json faces = json::array();
    for (int f = 0; f < m.faces.rows(); ++f)
        for (int c = 0; c < 3; ++c) faces.push_back(m.faces(f, c));
    doc["faces"] = faces;
    // 3N x B columns are already blendshape-major when read column by column.
    doc["shape_blendshapes"] = exactArray(m.shapeBlendshapes.data(), m.shapeBlendshapes.size());
    if (m.hasPoseBlendshapes()) doc["pose_blendshapes"] = exactArray(m.poseBlendshapes.data(), m.poseBlendshapes.size());
    doc["parents"] = m.parents;
    json coo = json::array();
    for (int r = 0; r < m.jointRegressor.outerSize(); ++r)
        for (SparseRowMat::InnerIterator it(m.jointRegressor, r); it; ++it)
            coo.push_back(json::array({r, static_cast<int>(it.col()), formatExact(it.value())}));
    doc["joint_regressor"] = coo;
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights = m.skinningWeights;
    doc["skinning_weights"] = exactArray(weights.data(), weights.size());
    if (!m.jointNames.empty()) doc["joint_names"] = m.jointNames;
    return doc;
}

BodyModel modelFromJson(const json& doc) {
    BodyModel m;
    const int n = requireInt(doc, "n_vertices");
    const int joints = requireInt(doc, "n_joints");
    const int shape = requireInt(doc, "n_shape");
    if (n <= 0 || joints <= 0 || shape < 0) throw IoError("model dimensions must be positive");

    const auto tmpl = readExactArray(require(doc, "template"), "template");
    checkSize(tmpl, 3 * static_cast<size_t>(n), "template");
    m.templateVertices = Eigen::Map<const RowMatX3>(tmpl.data(), n, 3);

    const json& faces = require(doc, "faces");
    if (!faces.is_array() || faces.size() % 3 != 0) throw IoError("model field 'faces' must hold index triples");
    m.faces.resize(static_cast<Eigen::Index>(faces.size() / 3), 3);
    for (size_t i = 0; i < faces.size(); ++i) {
        if (!faces[i].is_number_integer()) throw IoError("model field 'faces' must hold integers");
        m.faces(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = faces[i].get<int>();
    }

    const auto sb = readExactArray(require(doc, "shape_blendshapes"), "shape_blendshapes");
    checkSize(sb, 3 * static_cast<size_t>(n) * shape, "shape_blendshapes");
    m.shapeBlendshapes = Eigen::Map<const Eigen::MatrixXd>(sb.data(), 3 * n, shape);

    if (doc.contains("pose_blendshapes") && !doc.at("pose_blendshapes").is_null()) {
        const auto pb = readExactArray(doc.at("pose_blendshapes"), "pose_blendshapes");
        const size_t q = 9 * static_cast<size_t>(joints - 1);
        checkSize(pb, 3 * static_cast<size_t>(n) * q, "pose_blendshapes");
        if (!pb.empty()) m.poseBlendshapes = Eigen::Map<const Eigen::MatrixXd>(pb.data(), 3 * n, static_cast<Eigen::Index>(q));
    }

    const json& parents = require(doc, "parents");
    if (!parents.is_array() || static_cast<int>(parents.size()) != joints)
        throw IoError("model field 'parents' must have n_joints entries");
    for (const auto& p : parents) {
        if (!p.is_number_integer()) throw IoError("model field 'parents' must hold integers");
        m.parents.push_back(p.get<int>());
    }

    const json& coo = require(doc, "joint_regressor");
    if (!coo.is_array()) throw IoError("model field 'joint_regressor' must be an array of triplets");
    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& t : coo) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer())
            throw IoError("joint_regressor entries must be [row, col, value]");
        const int r = t[0].get<int>(), c = t[1].get<int>();
        if (r < 0 || r >= joints || c < 0 || c >= n) throw IoError("joint_regressor entry out of range");
        const double v = t[2].is_string() ? parseExact(t[2].get<std::string>()) : t[2].get<double>();
        triplets.emplace_back(r, c, v);
    }
    m.jointRegressor.resize(joints, n);
    m.jointRegressor.setFromTriplets(triplets.begin(), triplets.end());

    const auto sw = readExactArray(require(doc, "skinning_weights"), "skinning_weights");
    checkSize(sw, static_cast<size_t>(n) * joints, "skinning_weights");
    m.skinningWeights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        sw.data(), n, joints);

    if (doc.contains("joint_names")) m.jointNames = doc.at("joint_names").get<std::vector<std::string>>();
    validateModel(m);
    return m;
}

json readJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void writeTextFile(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

void saveModel(const BodyModel& model, const std::string& path) { writeTextFile(path, modelToJson(model).dump()); }

BodyModel loadModel(const std::string& path) {
    try {
        return modelFromJson(readJsonFile(path));
    } catch (const json::exception& e) {
        throw IoError("'" + path + "' is not a valid model: " + e.what());
    }
}

}  // namespace bodyfit
