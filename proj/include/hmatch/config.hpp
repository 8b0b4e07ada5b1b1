#pragma once

#include <cstdint>
#include <string>

#include "hmatch/decoder.hpp"
#include "hmatch/matching.hpp"
#include "hmatch/scene.hpp"
#include "hmatch/trainer.hpp"

namespace hmatch {

// Everything an experiment run needs. Loaded from a flat TOML or JSON file;
// every key is optional except `scheme`, and unknown keys are rejected.
struct ExperimentConfig {
    Scheme scheme = Scheme::kBaseline;
    std::uint64_t seed = 1;
    std::uint64_t data_seed = 1;
    std::string out_dir = "out";
    int epochs = 30;
    int train_scenes = 200;
    int val_scenes = 50;

    HybridConfig hybrid;
    DecoderConfig decoder;
    SceneSpec scene;
    MatchWeights weights;
    OptimizerParams opt;

    double nms_iou = 0.5;
    double score_cut = 0.5;

    void validate() const;
};

ExperimentConfig default_experiment_config();

// Format chosen by extension: .json parses as JSON, anything else as the
// flat TOML subset (key = value lines, no sections).
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace hmatch
