#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmatch/assignment.hpp"
#include "hmatch/geometry.hpp"
#include "hmatch/mat.hpp"

namespace hmatch {

// Target set for one image: boxes plus class labels in [0, num_classes).
struct GroundTruthSet {
    std::vector<Box> boxes;
    std::vector<int> labels;

    int size() const { return static_cast<int>(boxes.size()); }
};

// Throws on mismatched sizes, out-of-range labels, non-finite or
// non-positive-extent boxes.
void validate_ground_truth(const GroundTruthSet& g, int num_classes);

// Flattened target sequence consumed by cost construction and losses.
// Covers plain ground truth (repeat 1), K-repeated ground truth, and the
// concatenation used by the merged hybrid loss.
struct FlatTargets {
    std::vector<Box> boxes;
    std::vector<int> labels;

    int size() const { return static_cast<int>(boxes.size()); }
    bool empty() const { return boxes.empty(); }
};

// K copies of the ground truth laid out group after group: flattened item
// k*m + j carries the same box and label as base item j.
struct RepeatedTargets {
    GroundTruthSet base;
    int repeat = 0;

    int size() const { return repeat * base.size(); }
    FlatTargets flatten() const;
};

RepeatedTargets repeat_targets(const GroundTruthSet& g, int repeat);

FlatTargets flatten(const GroundTruthSet& g);
FlatTargets concat(const FlatTargets& a, const FlatTargets& b);

// Per-decoder-layer outputs for one query group: sigmoid class probabilities
// (num_queries x num_classes) and one box per query.
struct LayerPredictions {
    Mat class_scores;
    std::vector<Box> boxes;
    int layer_index = 0;

    int num_queries() const { return class_scores.rows; }
    int num_classes() const { return class_scores.cols; }
};

// Weights of the classification/L1/giou terms shared by matching cost and
// loss, plus the focal parameters.
struct MatchWeights {
    double w_cls = 2.0;
    double w_l1 = 5.0;
    double w_giou = 2.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
};

enum class Scheme {
    kBaseline,
    kHybridBranch,
    kHybridEpoch,
    kHybridLayer,
};

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

// Scheme selector plus every matching hyper-parameter. `queries_single` is
// the size of the single query group used by the epoch and layer schemes
// (0 means "use num_one2one + num_one2many").
struct HybridConfig {
    Scheme scheme = Scheme::kBaseline;
    int num_one2one = 300;        // one-to-one query count
    int num_one2many = 1500;      // one-to-many query count
    int repeat_branch = 6;        // ground-truth repeats, branch scheme
    double one2many_weight = 1.0; // loss weight on the one-to-many branch
    double epoch_fraction = 2.0 / 3.0;  // share of epochs trained one-to-many
    int repeat_epoch = 10;        // ground-truth repeats, epoch scheme
    int repeat_layer = 10;        // ground-truth repeats, layer scheme
    int layers = 6;               // decoder layers
    int layers_one2many = 4;      // leading layers matched one-to-many
    int layers_one2one = 2;       // trailing layers matched one-to-one
    int queries_single = 0;

    void validate() const;  // throws ConfigError
    int single_group_queries() const {
        return queries_single > 0 ? queries_single : num_one2one + num_one2many;
    }
};

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log,
// in costs and losses alike.
inline constexpr double kProbClamp = 1e-8;

// Focal-style classification cost: pos - neg with
// pos = alpha*(1-p)^gamma*(-log p) and neg = (1-alpha)*p^gamma*(-log(1-p)).
double focal_cls_cost(double p, double alpha, double gamma);

// entry[i][j] = w_cls*cls_cost + w_l1*l1 + w_giou*(1 - giou). Empty targets
// yield a zero-column sentinel.
CostMatrix build_cost_matrix(const LayerPredictions& p, const FlatTargets& targets,
                             const MatchWeights& w);

// Hungarian matching against an already-flattened target list. Empty targets
// yield an empty assignment; throws CapacityError when num_queries < size.
// match_one2one and match_one2many are thin wrappers over this.
Assignment match_flat(const LayerPredictions& p, const FlatTargets& targets,
                      const MatchWeights& w);

// Hungarian matching against the plain ground truth; exactly m pairs.
// Throws CapacityError when num_queries < m.
Assignment match_one2one(const LayerPredictions& p, const GroundTruthSet& g,
                         const MatchWeights& w);

// Hungarian matching against K-repeated ground truth; every object receives
// exactly `repeat` distinct queries. Throws CapacityError when
// num_queries < K*m.
Assignment match_one2many(const LayerPredictions& p, const RepeatedTargets& targets,
                          const MatchWeights& w);

// Positive supervision per ground-truth object aggregated over training
// epochs and decoder layers. The epoch scheme counts whole epochs on each
// side of the switch (see one2many_epoch_count), so the result is an exact
// integer for any fraction.
std::int64_t positive_supervision_count(const HybridConfig& cfg, int epochs);

// Number of leading epochs trained with one-to-many matching under the
// epoch scheme: |{e in [0, epochs) : e < epoch_fraction * epochs}|.
int one2many_epoch_count(double epoch_fraction, int epochs);

}  // namespace hmatch
