#pragma once

#include <cstdint>

#include "bodyfit/body_model.hpp"

namespace bodyfit {

struct ToyModelSpec {
    int vertices = 600;
    int joints = 15;  // body joints K, excluding the root
    int shapeDims = 10;
    uint64_t seed = 1;
    // 0 leaves the model without pose blendshapes.
    double poseBlendshapeScale = 0.0;
};

// Largest K the toy skeleton can realize (the SMPL body joint count).
inline constexpr int kToyMaxJoints = 23;
// Ten capsules, each at least a triangular bipyramid.
inline constexpr int kToyMinVertices = 50;

/// Procedural capsule-limb humanoid standing in a T-pose with y up and the
/// person's left along +x: torso, head, and two-segment arms and legs.
/// Deterministic for a given spec.
BodyModel buildToyModel(const ToyModelSpec& spec);

// Checks that every undirected edge is shared by exactly two faces with
// opposite orientation.
bool isClosedOrientable(const Faces& faces, int numVertices);

}  // namespace bodyfit
