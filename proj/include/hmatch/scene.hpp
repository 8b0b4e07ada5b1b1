#pragma once

#include <cstdint>

#include "hmatch/mat.hpp"
#include "hmatch/matching.hpp"

namespace hmatch {

// A synthetic "image": a short sequence of feature tokens standing in for
// encoder output. The first truth.size() tokens encode one object each (box
// coordinates and a class pattern, plus noise); the rest are pure noise.
struct SyntheticScene {
    Mat tokens;           // (truth.size() + distractors) x dim
    GroundTruthSet truth;
    std::uint64_t seed = 0;
};

struct SceneSpec {
    int m_min = 1;
    int m_max = 8;
    int num_classes = 5;
    int dim = 32;
    int distractor_count = 4;
};

// Deterministic for a fixed seed. Boxes are non-degenerate and lie fully
// inside the unit frame. Requires dim >= 4 + num_classes so a token can carry
// the box and a class indicator.
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, int count, const SceneSpec& spec);

}  // namespace hmatch
