#pragma once

#include <string>
#include <vector>

#include "hmatch/matching.hpp"
#include "hmatch/rng.hpp"

namespace hmatch {

struct SuiteResult {
    std::string name;
    int passed = 0;
    int failed = 0;
};

// Runs one oracle suite (assignment, losses, isolation, equivalence) or all
// of them. Throws ConfigError for an unknown suite name.
std::vector<SuiteResult> run_verify(const std::string& suite);

// Random-instance generators shared by the verify suites and the test
// binaries. Scores land strictly inside the focal clamp range; boxes are
// valid center-size boxes inside the unit frame.
LayerPredictions random_layer_predictions(Rng& rng, int queries, int classes, int layer_index = 0);
GroundTruthSet random_ground_truth(Rng& rng, int count, int classes);

}  // namespace hmatch
