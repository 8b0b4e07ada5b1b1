#pragma once

#include <vector>

#include "hmatch/assignment.hpp"
#include "hmatch/matching.hpp"

namespace hmatch {

// Per-term loss values. `total` is the weighted combination
// w_cls*cls + w_l1*l1 + w_giou*giou.
struct LossTerms {
    double cls = 0.0;
    double l1 = 0.0;
    double giou = 0.0;
    double total = 0.0;
};

LossTerms add(const LossTerms& a, const LossTerms& b);
LossTerms scale(const LossTerms& a, double s);

// Gradients of the weighted total with respect to class scores
// (num_queries x num_classes) and boxes (num_queries x 4, center-size).
struct LossGradients {
    Mat d_scores;
    Mat d_boxes;
};

struct SetLossResult {
    LossTerms terms;
    LossGradients grads;
};

// Set loss over one layer: matched pairs receive focal classification toward
// their target class plus L1 and (1 - giou) box terms; every other
// (query, class) cell receives the focal background term. Box terms and the
// classification sum are normalized by the number of matched pairs (1 when
// none). The assignment is treated as a constant: no gradient flows through
// the argmin.
SetLossResult set_loss(const LayerPredictions& p, const FlatTargets& targets,
                       const Assignment& a, const MatchWeights& w);

struct LayerLoss {
    LossTerms terms;
    LossGradients grads;
    Assignment assignment;
};

// Loss summed over decoder layers, each matched independently.
struct BranchLoss {
    LossTerms total;
    std::vector<LayerLoss> layers;
};

// Per-layer one-to-one matching against the plain ground truth, summed.
BranchLoss one2one_loss(const std::vector<LayerPredictions>& layers, const GroundTruthSet& g,
                        const MatchWeights& w);

// Per-layer one-to-many matching against K-repeated ground truth, summed.
BranchLoss one2many_loss(const std::vector<LayerPredictions>& layers,
                         const RepeatedTargets& targets, const MatchWeights& w);

// Combined branch-scheme loss: one2one + weight * one2many. The one2many
// field holds unscaled values; `combined` applies the weight. A repeat or
// query count of zero disables the one-to-many branch entirely.
struct HybridLossResult {
    LossTerms combined;
    BranchLoss one2one;
    BranchLoss one2many;
    double one2many_weight = 1.0;
};

// Two independent matching + loss passes (reference path).
HybridLossResult naive_hybrid_loss(const std::vector<LayerPredictions>& one2one_layers,
                                   const std::vector<LayerPredictions>& one2many_layers,
                                   const GroundTruthSet& g, const HybridConfig& cfg,
                                   const MatchWeights& w);

// Merged path: one cost computation over the concatenated predictions and
// targets, sliced into the two diagonal blocks, one loss evaluation over the
// concatenation. Value, gradients, and selected pairs match the naive path
// exactly.
HybridLossResult optimized_hybrid_loss(const std::vector<LayerPredictions>& one2one_layers,
                                       const std::vector<LayerPredictions>& one2many_layers,
                                       const GroundTruthSet& g, const HybridConfig& cfg,
                                       const MatchWeights& w);

// Production entry point for the branch scheme (merged path).
HybridLossResult hybrid_branch_loss(const std::vector<LayerPredictions>& one2one_layers,
                                    const std::vector<LayerPredictions>& one2many_layers,
                                    const GroundTruthSet& g, const HybridConfig& cfg,
                                    const MatchWeights& w);

// Epoch scheme: one-to-many matching for the leading epochs, one-to-one for
// the rest.
struct EpochSchemeLoss {
    BranchLoss loss;
    bool used_one2many = false;
};
EpochSchemeLoss hybrid_epoch_loss(const std::vector<LayerPredictions>& layers,
                                  const GroundTruthSet& g, const HybridConfig& cfg,
                                  int epoch_index, int total_epochs, const MatchWeights& w);

// Layer scheme: the first layers_one2many layers are supervised against
// repeated targets, the trailing layers_one2one against the plain ground
// truth. Throws ConfigError when the prediction count does not equal the
// configured split.
BranchLoss hybrid_layer_loss(const std::vector<LayerPredictions>& layers,
                             const GroundTruthSet& g, const HybridConfig& cfg,
                             const MatchWeights& w);

}  // namespace hmatch
