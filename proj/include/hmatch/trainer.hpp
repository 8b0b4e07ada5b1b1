#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmatch/decoder.hpp"
#include "hmatch/losses.hpp"
#include "hmatch/scene.hpp"

namespace hmatch {

// The default rate is the largest that keeps every scheme stable on the
// default benchmark; the L1 box term produces constant-magnitude gradients,
// so momentum SGD diverges well before 1e-2.
struct OptimizerParams {
    double learning_rate = 5e-4;
    double momentum = 0.9;
    double lr_decay = 1.0;  // per-epoch multiplicative factor, (0, 1]
};

struct TrainLogRow {
    int epoch = 0;
    Scheme scheme = Scheme::kBaseline;
    double train_total = 0.0;        // mean per-scene loss this epoch
    double val_one2one_total = 0.0;  // mean one-to-one-branch loss on validation
    double val_ap50 = 0.0;
    std::int64_t positive_count = 0;  // positives per object this epoch
};

struct TrainResult {
    DecoderConfig decoder_cfg;
    DecoderParams params;
    std::vector<TrainLogRow> log;
    std::vector<double> step_losses;  // per optimizer step, in order
};

// Positives per ground-truth object contributed by one epoch. Summed over
// epochs this reproduces positive_supervision_count.
std::int64_t epoch_positive_count(const HybridConfig& cfg, int epoch_index, int total_epochs);

// Query layout per scheme: the branch scheme carries both groups, the
// baseline only the one-to-one group, the epoch and layer schemes one flat
// group of single_group_queries().
DecoderConfig scheme_decoder_config(const DecoderConfig& base, const HybridConfig& hybrid);

// SGD with momentum over the full parameter set. Deterministic for a fixed
// seed: the seed drives parameter init and the per-epoch shuffle only, so
// runs differing only in scheme see identical data order.
TrainResult train(const HybridConfig& hybrid, const DecoderConfig& base_decoder,
                  const MatchWeights& weights, const OptimizerParams& opt,
                  const std::vector<SyntheticScene>& train_scenes,
                  const std::vector<SyntheticScene>& val_scenes, int epochs, std::uint64_t seed);

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);

// Text format with a version header; values are hex floats, so a round trip
// is bit-exact.
void save_model(const std::string& path, const DecoderConfig& cfg, const DecoderParams& params);

struct LoadedModel {
    DecoderConfig cfg;
    DecoderParams params;
};
LoadedModel load_model(const std::string& path);

}  // namespace hmatch
