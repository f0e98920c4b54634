#include "bodyfit/toy_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "bodyfit/errors.hpp"
#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {

constexpr double kPi = std::numbers::pi;

// SMPL-ordered skeleton; rank decides which joints survive when K < 23.
struct CanonicalJoint {
    const char* name;
    int parent;
    int rank;
};

constexpr std::array<CanonicalJoint, 24> kSkeleton{{
    {"pelvis", -1, 0},       {"l_hip", 0, 6},          {"r_hip", 0, 7},         {"spine1", 0, 1},
    {"l_knee", 1, 10},       {"r_knee", 2, 11},        {"spine2", 3, 16},       {"l_ankle", 4, 14},
    {"r_ankle", 5, 15},      {"spine3", 6, 17},        {"l_foot", 7, 18},       {"r_foot", 8, 19},
    {"neck", 9, 2},          {"l_collar", 9, 20},      {"r_collar", 9, 21},     {"head", 12, 3},
    {"l_shoulder", 13, 4},   {"r_shoulder", 14, 5},    {"l_elbow", 16, 8},      {"r_elbow", 17, 9},
    {"l_wrist", 18, 12},     {"r_wrist", 19, 13},      {"l_hand", 20, 22},      {"r_hand", 21, 23},
}};

enum Canon {
    Pelvis = 0, LHip, RHip, Spine1, LKnee, RKnee, Spine2, LAnkle, RAnkle, Spine3, LFoot, RFoot,
    Neck, LCollar, RCollar, Head, LShoulder, RShoulder, LElbow, RElbow, LWrist, RWrist, LHand, RHand
};

struct ChainEntry {
    int joint;
    double t;  // axial coordinate along the capsule
};

struct CapsuleSpec {
    Vec3 a;
    Vec3 b;
    double r1;      // radius along e1
    double r2;      // radius along e2
    double capR;    // axial extent of each cap
    Vec3 e1Hint;
    int baseJoint;
    std::vector<ChainEntry> chain;
    // Regressor anchors: canonical joint and its axial coordinate.
    std::vector<ChainEntry> anchors;
    bool selfSymmetric;
    int mirrorOf;  // -1, or index of the left capsule this one mirrors
    int part;      // 0 torso, 1 head, 2 upper arm, 3 forearm, 4 thigh, 5 shin
};

std::vector<CapsuleSpec> capsuleLayout(CounterRng& rng) {
    // Radii jitter by up to 5% per seed, identically on both sides.
    auto jitter = [&rng](double r) { return r * (1.0 + rng.uniform(-0.05, 0.05)); };
    const double torsoR1 = jitter(0.15), torsoR2 = jitter(0.10);
    const double headR = jitter(0.095);
    const double upperArmR = jitter(0.05), foreArmR = jitter(0.04);
    const double thighR = jitter(0.07), shinR = jitter(0.05);

    std::vector<CapsuleSpec> caps;
    const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY();
    caps.push_back({Vec3(0, 0.80, 0), Vec3(0, 1.45, 0), torsoR1, torsoR2, 0.08, ex, Pelvis,
                    {{Spine1, 0.25}, {Spine2, 0.38}, {Spine3, 0.50}},
                    {{Pelvis, 0.12}, {Spine1, 0.25}, {Spine2, 0.38}, {Spine3, 0.50}}, true, -1, 0});
    caps.push_back({Vec3(0, 1.42, 0), Vec3(0, 1.70, 0), headR, headR * 1.08, headR, ex, Spine3,
                    {{Neck, 0.03}, {Head, 0.14}}, {{Neck, 0.03}, {Head, 0.14}}, true, -1, 1});
    caps.push_back({Vec3(0.15, 1.38, 0), Vec3(0.44, 1.38, 0), upperArmR, upperArmR, upperArmR, ey, Spine3,
                    {{LCollar, -0.08}, {LShoulder, 0.02}, {LElbow, 0.29}},
                    {{LCollar, -0.08}, {LShoulder, 0.02}}, false, -1, 2});
    caps.push_back({Vec3(0.44, 1.38, 0), Vec3(0.78, 1.38, 0), foreArmR, foreArmR, foreArmR, ey, LShoulder,
                    {{LElbow, 0.0}, {LWrist, 0.24}, {LHand, 0.31}},
                    {{LElbow, 0.0}, {LWrist, 0.24}, {LHand, 0.31}}, false, -1, 3});
    caps.push_back({Vec3(0.09, 0.90, 0), Vec3(0.09, 0.49, 0), thighR, thighR, thighR, ex, Pelvis,
                    {{LHip, 0.04}, {LKnee, 0.41}}, {{LHip, 0.04}}, false, -1, 4});
    caps.push_back({Vec3(0.09, 0.49, 0), Vec3(0.09, 0.04, 0), shinR, shinR, shinR, ex, LHip,
                    {{LKnee, 0.0}, {LAnkle, 0.40}, {LFoot, 0.45}},
                    {{LKnee, 0.0}, {LAnkle, 0.40}, {LFoot, 0.45}}, false, -1, 5});
    const int leftCount = static_cast<int>(caps.size());
    const std::map<int, int> leftToRight{{LCollar, RCollar}, {LShoulder, RShoulder}, {LElbow, RElbow},
                                         {LWrist, RWrist},   {LHand, RHand},         {LHip, RHip},
                                         {LKnee, RKnee},     {LAnkle, RAnkle},       {LFoot, RFoot}};
    auto mirrorJoint = [&](int j) {
        const auto it = leftToRight.find(j);
        return it == leftToRight.end() ? j : it->second;
    };
    for (int c = 2; c < leftCount; ++c) {
        CapsuleSpec r = caps[c];
        r.a.x() = -r.a.x();
        r.b.x() = -r.b.x();
        r.baseJoint = mirrorJoint(r.baseJoint);
        for (auto& e : r.chain) e.joint = mirrorJoint(e.joint);
        for (auto& e : r.anchors) e.joint = mirrorJoint(e.joint);
        r.mirrorOf = c;
        caps.push_back(r);
    }
    return caps;
}

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

struct Ring {
    double t;
    double rho;  // fraction of the cross-section radius
    int first;   // vertex index of the first ring vertex
    int size;
    double offset;
};

struct CapsuleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<double> axial;  // t per vertex
    std::vector<Ring> rings;    // including the two poles as size-1 rings
};

// Joins two rings into a band of triangles with outward orientation when
// `low` precedes `high` along the capsule axis.
void zipRings(const Ring& low, const Ring& high, std::vector<std::array<int, 3>>& faces) {
    auto angle = [](const Ring& r, int i) {
        const int wraps = i / r.size;
        return 2.0 * kPi * ((i % r.size) + r.offset) / r.size + 2.0 * kPi * wraps;
    };
    int i = 0, j = 0;
    while (i < low.size || j < high.size) {
        const bool advanceLow = (j == high.size) || (i < low.size && angle(low, i + 1) < angle(high, j + 1));
        std::array<int, 3> tri;
        if (advanceLow) {
            tri = {low.first + i % low.size, low.first + (i + 1) % low.size, high.first + j % high.size};
            ++i;
        } else {
            tri = {low.first + i % low.size, high.first + (j + 1) % high.size, high.first + j % high.size};
            ++j;
        }
        if (tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2]) faces.push_back(tri);
    }
}

CapsuleMesh meshCapsule(const CapsuleSpec& cap, int budget) {
    const Vec3 axis = cap.b - cap.a;
    const double len = axis.norm();
    const Vec3 d = axis / len;
    const Vec3 e1 = (cap.e1Hint - cap.e1Hint.dot(d) * d).normalized();
    const Vec3 e2 = d.cross(e1);

    const int ringVerts = budget - 2;
    const double circumference = kPi * (cap.r1 + cap.r2);
    const double meridian = kPi * cap.capR + len;
    int ringCount = static_cast<int>(std::lround(std::sqrt(ringVerts * meridian / circumference)));
    ringCount = std::clamp(ringCount, 1, std::max(1, ringVerts / 3));

    std::vector<double> ts(ringCount), rhos(ringCount);
    for (int k = 0; k < ringCount; ++k) {
        const double s = meridian * (k + 1) / (ringCount + 1);
        const double quarter = 0.5 * kPi * cap.capR;
        if (s < quarter) {
            const double phi = s / cap.capR;
            ts[k] = -cap.capR * std::cos(phi);
            rhos[k] = std::sin(phi);
        } else if (s <= quarter + len) {
            ts[k] = s - quarter;
            rhos[k] = 1.0;
        } else {
            const double phi = (s - quarter - len) / cap.capR;
            ts[k] = len + cap.capR * std::sin(phi);
            rhos[k] = std::cos(phi);
        }
    }

    // Ring sizes proportional to the ring radius, at least 3, summing exactly.
    std::vector<int> sizes(ringCount, 3);
    int remaining = ringVerts - 3 * ringCount;
    {
        double total = 0.0;
        for (double r : rhos) total += std::max(r, 0.3);
        std::vector<std::pair<double, int>> remainders;
        int assigned = 0;
        for (int k = 0; k < ringCount; ++k) {
            const double share = remaining * std::max(rhos[k], 0.3) / total;
            const int whole = static_cast<int>(std::floor(share));
            sizes[k] += whole;
            assigned += whole;
            remainders.emplace_back(-(share - whole), k);
        }
        std::sort(remainders.begin(), remainders.end());
        for (int q = 0; q < remaining - assigned; ++q) sizes[remainders[q % ringCount].second] += 1;
    }

    CapsuleMesh out;
    auto addVertex = [&](double t, double rho, double alpha) {
        const Vec3 p = cap.a + t * d + rho * (cap.r1 * std::cos(alpha) * e1 + cap.r2 * std::sin(alpha) * e2);
        out.vertices.push_back(p);
        out.axial.push_back(t);
    };
    out.rings.push_back({-cap.capR, 0.0, 0, 1, 0.0});
    addVertex(-cap.capR, 0.0, 0.0);
    for (int k = 0; k < ringCount; ++k) {
        double offset;
        if (cap.selfSymmetric)
            offset = (sizes[k] % 2 == 1) ? 0.25 : 0.0;
        else
            offset = 0.137 + 0.5 * (k % 2);
        Ring ring{ts[k], rhos[k], static_cast<int>(out.vertices.size()), sizes[k], offset};
        for (int q = 0; q < sizes[k]; ++q) addVertex(ts[k], rhos[k], 2.0 * kPi * (q + offset) / sizes[k]);
        out.rings.push_back(ring);
    }
    out.rings.push_back({len + cap.capR, 0.0, static_cast<int>(out.vertices.size()), 1, 0.0});
    addVertex(len + cap.capR, 0.0, 0.0);
    for (size_t k = 0; k + 1 < out.rings.size(); ++k) zipRings(out.rings[k], out.rings[k + 1], out.faces);
    return out;
}

}  // namespace

bool isClosedOrientable(const Faces& faces, int numVertices) {
    std::map<std::pair<int, int>, int> directed;
    for (int f = 0; f < faces.rows(); ++f)
        for (int c = 0; c < 3; ++c) {
            const int a = faces(f, c), b = faces(f, (c + 1) % 3);
            if (a < 0 || b < 0 || a >= numVertices || b >= numVertices || a == b) return false;
            if (++directed[{a, b}] > 1) return false;
        }
    for (const auto& [edge, count] : directed)
        if (directed.find({edge.second, edge.first}) == directed.end()) return false;
    return true;
}

BodyModel buildToyModel(const ToyModelSpec& spec) {
    if (spec.joints < 3 || spec.joints > kToyMaxJoints)
        throw ValidationError("toy model: joints must be in [3, " + std::to_string(kToyMaxJoints) + "]");
    if (spec.shapeDims < 1) throw ValidationError("toy model: shape dims must be >= 1");
    if (spec.vertices < kToyMinVertices)
        throw ValidationError("toy model: at least " + std::to_string(kToyMinVertices) +
                              " vertices are needed for ten capsule parts");
    if (spec.shapeDims > 3 * spec.vertices) throw ValidationError("toy model: more shape dims than vertex coordinates");

    CounterRng layoutRng(spec.seed, StreamTag::Model, 0);
    const std::vector<CapsuleSpec> caps = capsuleLayout(layoutRng);

    // Vertex budgets: left/right pairs get identical counts.
    std::vector<int> groups;  // capsule indices owning a budget (torso, head, left limbs)
    std::vector<double> groupWeights;
    for (size_t c = 0; c < caps.size(); ++c) {
        if (caps[c].mirrorOf >= 0) continue;
        const double len = (caps[c].b - caps[c].a).norm();
        const double area = kPi * (caps[c].r1 + caps[c].r2) * (len + caps[c].capR);
        groups.push_back(static_cast<int>(c));
        groupWeights.push_back(caps[c].selfSymmetric ? area : 2.0 * area);
    }
    // Paired groups take two vertices per unit of share; leftovers go to the torso.
    std::vector<int> budgets(caps.size(), 0);
    {
        constexpr int minimum = 5;
        const int free = spec.vertices - kToyMinVertices;
        double weightSum = 0.0;
        for (double w : groupWeights) weightSum += w;
        int used = 0;
        for (size_t g = 0; g < groups.size(); ++g) {
            const int c = groups[g];
            const double share = free * groupWeights[g] / weightSum;
            if (caps[c].selfSymmetric) {
                budgets[c] = minimum + static_cast<int>(std::floor(share));
                used += budgets[c];
            } else {
                const int each = minimum + static_cast<int>(std::floor(share / 2.0));
                budgets[c] = each;
                for (size_t m = 0; m < caps.size(); ++m)
                    if (caps[m].mirrorOf == c) budgets[m] = each;
                used += 2 * each;
            }
        }
        budgets[0] += spec.vertices - used;
    }

    // Which canonical joints survive, and their nearest surviving ancestor.
    std::vector<bool> selected(kSkeleton.size(), false);
    for (size_t j = 0; j < kSkeleton.size(); ++j) selected[j] = kSkeleton[j].rank <= spec.joints;
    std::vector<int> canonToModel(kSkeleton.size(), -1);
    std::vector<int> modelToCanon;
    for (size_t j = 0; j < kSkeleton.size(); ++j)
        if (selected[j]) {
            canonToModel[j] = static_cast<int>(modelToCanon.size());
            modelToCanon.push_back(static_cast<int>(j));
        }
    auto resolve = [&](int canon) {
        while (canon >= 0 && !selected[canon]) canon = kSkeleton[canon].parent;
        return canon < 0 ? 0 : canonToModel[canon];
    };

    BodyModel model;
    const int jointCount = static_cast<int>(modelToCanon.size());
    model.parents.resize(jointCount);
    model.jointNames.resize(jointCount);
    for (int j = 0; j < jointCount; ++j) {
        const int canon = modelToCanon[j];
        model.parents[j] = kSkeleton[canon].parent < 0 ? -1 : resolve(kSkeleton[canon].parent);
        model.jointNames[j] = kSkeleton[canon].name;
    }

    // Mesh every capsule; mirrored capsules reuse their left twin's mesh.
    std::vector<CapsuleMesh> meshes(caps.size());
    for (size_t c = 0; c < caps.size(); ++c) {
        if (caps[c].mirrorOf >= 0) continue;
        meshes[c] = meshCapsule(caps[c], budgets[c]);
    }
    for (size_t c = 0; c < caps.size(); ++c) {
        if (caps[c].mirrorOf < 0) continue;
        meshes[c] = meshes[caps[c].mirrorOf];
        for (auto& v : meshes[c].vertices) v.x() = -v.x();
        for (auto& f : meshes[c].faces) std::swap(f[1], f[2]);
    }

    std::vector<int> vertexStart(caps.size());
    int n = 0;
    int faceCount = 0;
    for (size_t c = 0; c < caps.size(); ++c) {
        vertexStart[c] = n;
        n += static_cast<int>(meshes[c].vertices.size());
        faceCount += static_cast<int>(meshes[c].faces.size());
    }
    if (n != spec.vertices) throw ValidationError("toy model: internal vertex budget mismatch");

    model.templateVertices.resize(n, 3);
    model.faces.resize(faceCount, 3);
    model.skinningWeights = Eigen::MatrixXd::Zero(n, jointCount);
    std::vector<int> vertexCapsule(n);
    std::vector<double> vertexAxial(n);
    int f = 0;
    for (size_t c = 0; c < caps.size(); ++c) {
        const CapsuleMesh& cm = meshes[c];
        for (size_t v = 0; v < cm.vertices.size(); ++v) {
            const int idx = vertexStart[c] + static_cast<int>(v);
            model.templateVertices.row(idx) = cm.vertices[v].transpose();
            vertexCapsule[idx] = static_cast<int>(c);
            vertexAxial[idx] = cm.axial[v];
        }
        for (const auto& tri : cm.faces) {
            for (int k = 0; k < 3; ++k) model.faces(f, k) = vertexStart[c] + tri[k];
            ++f;
        }
    }

    // Skinning: smoothstep hand-over between consecutive surviving joints
    // along each capsule's chain.
    for (size_t c = 0; c < caps.size(); ++c) {
        const CapsuleSpec& cap = caps[c];
        std::vector<ChainEntry> bounds;
        for (const auto& e : cap.chain)
            if (selected[e.joint]) bounds.push_back({canonToModel[e.joint], e.t});
        const int base = resolve(cap.baseJoint);
        std::vector<double> halfWidth(bounds.size());
        for (size_t m = 0; m < bounds.size(); ++m) {
            double gap = 0.08;
            if (m > 0) gap = std::min(gap, bounds[m].t - bounds[m - 1].t);
            if (m + 1 < bounds.size()) gap = std::min(gap, bounds[m + 1].t - bounds[m].t);
            halfWidth[m] = 0.45 * gap;
        }
        for (int i = vertexStart[c]; i < vertexStart[c] + static_cast<int>(meshes[c].vertices.size()); ++i) {
            const double t = vertexAxial[i];
            std::vector<double> progress(bounds.size() + 2, 0.0);
            progress[0] = 1.0;
            for (size_t m = 0; m < bounds.size(); ++m)
                progress[m + 1] = smoothstep((t - (bounds[m].t - halfWidth[m])) / (2.0 * halfWidth[m]));
            for (size_t m = 0; m <= bounds.size(); ++m) {
                const double w = progress[m] - progress[m + 1];
                if (w <= 0.0) continue;
                const int joint = m == 0 ? base : bounds[m - 1].joint;
                model.skinningWeights(i, joint) += w;
            }
            // Exact unit row sums.
            model.skinningWeights.row(i) /= model.skinningWeights.row(i).sum();
        }
    }

    // Regressor: average the ring nearest each joint's anchor.
    std::vector<Eigen::Triplet<double>> triplets;
    for (int j = 0; j < jointCount; ++j) {
        const int canon = modelToCanon[j];
        int capIdx = -1;
        double anchorT = 0.0;
        for (size_t c = 0; c < caps.size() && capIdx < 0; ++c)
            for (const auto& a : caps[c].anchors)
                if (a.joint == canon) {
                    capIdx = static_cast<int>(c);
                    anchorT = a.t;
                }
        if (capIdx < 0) throw ValidationError("toy model: joint without anchor");
        const CapsuleMesh& cm = meshes[capIdx];
        const Ring* best = nullptr;
        for (const auto& ring : cm.rings)
            if (ring.size >= 3 && (best == nullptr || std::abs(ring.t - anchorT) < std::abs(best->t - anchorT)))
                best = &ring;
        std::vector<int> members;
        const int take = std::min(best->size, 16);
        for (int q = 0; q < take; ++q) members.push_back(best->first + (q * best->size) / take);
        for (int v : members)
            triplets.emplace_back(j, vertexStart[capIdx] + v, 1.0 / static_cast<double>(members.size()));
    }
    model.jointRegressor.resize(jointCount, n);
    model.jointRegressor.setFromTriplets(triplets.begin(), triplets.end());

    // Shape space: smooth per-part fields, then orthonormalized.
    const int shapeDims = spec.shapeDims;
    Eigen::MatrixXd fields = Eigen::MatrixXd::Zero(3 * n, shapeDims);
    auto radial = [&](int i) {
        const CapsuleSpec& cap = caps[vertexCapsule[i]];
        const Vec3 d = (cap.b - cap.a).normalized();
        const Vec3 p = model.templateVertices.row(i).transpose();
        const Vec3 rel = p - cap.a;
        return Vec3(rel - rel.dot(d) * d);
    };
    auto partOf = [&](int i) { return caps[vertexCapsule[i]].part; };
    auto field = [&](int b, int i) -> Vec3 {
        const Vec3 p = model.templateVertices.row(i).transpose();
        const int part = partOf(i);
        const double side = p.x() >= 0.0 ? 1.0 : -1.0;
        switch (b) {
            case 0: return Vec3(0.0, p.y(), 0.0);                                                 // stature
            case 1: return part == 0 ? radial(i) : Vec3::Zero();                                   // torso girth
            case 2: return (part == 2 || part == 3) ? Vec3(side * (std::abs(p.x()) - 0.15), 0, 0) : Vec3::Zero();
            case 3: return (part == 4 || part == 5) ? Vec3(0.0, p.y() - 0.90, 0.0) : Vec3::Zero();  // leg length
            case 4: return (part == 2 || part == 3) ? radial(i) : Vec3::Zero();                    // arm girth
            case 5: return (part == 4 || part == 5) ? radial(i) : Vec3::Zero();                    // leg girth
            case 6: return part == 1 ? Vec3(p - Vec3(0, 1.56, 0)) : Vec3::Zero();                 // head size
            case 7: return (part == 2 || part == 3) ? Vec3(side, 0, 0) : Vec3::Zero();             // shoulder width
            case 8: {
                if (part == 4 || part == 5) return Vec3(side, 0, 0);
                if (part == 0) {
                    const double lower = 1.0 - smoothstep((p.y() - 0.80) / 0.45);
                    return Vec3(radial(i).x() * lower, 0, 0);
                }
                return Vec3::Zero();
            }
            case 9: {
                if (part != 0 || p.z() <= 0.0) return Vec3::Zero();
                const double bump = std::exp(-std::pow((p.y() - 1.0) / 0.15, 2));
                return Vec3(0, 0, p.z() * bump);
            }
            default: return Vec3::Zero();
        }
    };
    for (int b = 0; b < shapeDims; ++b) {
        if (b < 10) {
            for (int i = 0; i < n; ++i) fields.block<3, 1>(3 * i, b) = field(b, i);
            continue;
        }
        // Extra dimensions: random smooth radial/axial waves, mirror-symmetric.
        CounterRng rng(spec.seed, StreamTag::Model, 1000 + b);
        std::array<double, 6> amp, freq, phase, axialAmp;
        for (int part = 0; part < 6; ++part) {
            amp[part] = rng.normal();
            freq[part] = rng.uniform(2.0, 12.0);
            phase[part] = rng.uniform(0.0, 2.0 * kPi);
            axialAmp[part] = 0.3 * rng.normal();
        }
        for (int i = 0; i < n; ++i) {
            const int part = partOf(i);
            const CapsuleSpec& cap = caps[vertexCapsule[i]];
            const Vec3 d = (cap.b - cap.a).normalized();
            const double wave = std::sin(freq[part] * vertexAxial[i] + phase[part]);
            fields.block<3, 1>(3 * i, b) = amp[part] * wave * radial(i) + axialAmp[part] * wave * 0.05 * d;
        }
    }
    // Modified Gram-Schmidt; dependent columns are replaced by noise.
    for (int b = 0; b < shapeDims; ++b) {
        for (int attempt = 0; attempt < 4; ++attempt) {
            for (int q = 0; q < b; ++q) fields.col(b) -= fields.col(q).dot(fields.col(b)) * fields.col(q);
            const double norm = fields.col(b).norm();
            if (norm > 1e-8) {
                fields.col(b) /= norm;
                break;
            }
            CounterRng rng(spec.seed, StreamTag::Model, 5000 + b * 8 + attempt);
            for (int r = 0; r < 3 * n; ++r) fields(r, b) = rng.normal();
        }
    }
    model.shapeBlendshapes = fields;

    if (spec.poseBlendshapeScale > 0.0) {
        const int bodyJoints = jointCount - 1;
        model.poseBlendshapes = Eigen::MatrixXd::Zero(3 * n, 9 * bodyJoints);
        for (int j = 1; j < jointCount; ++j) {
            CounterRng rng(spec.seed, StreamTag::Model, 9000 + j);
            for (int q = 0; q < 9; ++q) {
                const double amp = spec.poseBlendshapeScale * rng.normal();
                for (int i = 0; i < n; ++i) {
                    const double w = model.skinningWeights(i, j);
                    if (w == 0.0) continue;
                    model.poseBlendshapes.block<3, 1>(3 * i, 9 * (j - 1) + q) = amp * w * radial(i);
                }
            }
        }
    }

    validateModel(model);
    return model;
}

}  // namespace bodyfit
