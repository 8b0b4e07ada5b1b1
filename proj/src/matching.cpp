#include "hmatch/matching.hpp"

#include <algorithm>
#include <cmath>

#include "hmatch/errors.hpp"

namespace hmatch {

void validate_ground_truth(const GroundTruthSet& g, int num_classes) {
    if (g.boxes.size() != g.labels.size())
        throw ConfigError("ground truth boxes/labels size mismatch");
    for (const Box& b : g.boxes) {
        check_finite(b);
        if (b.w <= 0.0 || b.h <= 0.0)
            throw InvalidGeometryError("ground-truth box with non-positive extent");
        if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0)
            throw InvalidGeometryError("ground-truth center outside the frame");
    }
    for (int label : g.labels)
        if (label < 0 || label >= num_classes) throw ConfigError("ground-truth label out of range");
}

FlatTargets flatten(const GroundTruthSet& g) {
    return {g.boxes, g.labels};
}

FlatTargets RepeatedTargets::flatten() const {
    FlatTargets out;
    out.boxes.reserve(static_cast<std::size_t>(size()));
    out.labels.reserve(static_cast<std::size_t>(size()));
    for (int k = 0; k < repeat; ++k) {
        out.boxes.insert(out.boxes.end(), base.boxes.begin(), base.boxes.end());
        out.labels.insert(out.labels.end(), base.labels.begin(), base.labels.end());
    }
    return out;
}

RepeatedTargets repeat_targets(const GroundTruthSet& g, int repeat) {
    if (repeat < 0) throw ConfigError("negative repeat count");
    return {g, repeat};
}

FlatTargets concat(const FlatTargets& a, const FlatTargets& b) {
    FlatTargets out = a;
    out.boxes.insert(out.boxes.end(), b.boxes.begin(), b.boxes.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::kBaseline: return "baseline";
        case Scheme::kHybridBranch: return "hybrid_branch";
        case Scheme::kHybridEpoch: return "hybrid_epoch";
        case Scheme::kHybridLayer: return "hybrid_layer";
    }
    throw ConfigError("unknown scheme");
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "baseline") return Scheme::kBaseline;
    if (name == "hybrid_branch") return Scheme::kHybridBranch;
    if (name == "hybrid_epoch") return Scheme::kHybridEpoch;
    if (name == "hybrid_layer") return Scheme::kHybridLayer;
    throw ConfigError("unknown scheme name: " + name);
}

void HybridConfig::validate() const {
    if (num_one2one < 1) throw ConfigError("num_one2one must be >= 1");
    if (num_one2many < 0) throw ConfigError("num_one2many must be >= 0");
    if (repeat_branch < 0 || repeat_epoch < 0 || repeat_layer < 0)
        throw ConfigError("repeat counts must be >= 0");
    if (one2many_weight < 0.0) throw ConfigError("one2many_weight must be >= 0");
    if (epoch_fraction < 0.0 || epoch_fraction > 1.0)
        throw ConfigError("epoch_fraction must lie in [0, 1]");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (scheme == Scheme::kHybridLayer && layers != layers_one2many + layers_one2one)
        throw ConfigError("layer scheme requires layers == layers_one2many + layers_one2one");
    if (layers_one2many < 0 || layers_one2one < 0)
        throw ConfigError("layer split counts must be >= 0");
    if (queries_single < 0) throw ConfigError("queries_single must be >= 0");
}

namespace {
double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}
}  // namespace

double focal_cls_cost(double p, double alpha, double gamma) {
    p = clamp_prob(p);
    const double pos = alpha * std::pow(1.0 - p, gamma) * (-std::log(p));
    const double neg = (1.0 - alpha) * std::pow(p, gamma) * (-std::log(1.0 - p));
    return pos - neg;
}

CostMatrix build_cost_matrix(const LayerPredictions& p, const FlatTargets& targets,
                             const MatchWeights& w) {
    if (p.num_queries() < 1) throw InvalidCostError("cost matrix needs at least one query");
    const int rows = p.num_queries();
    const int cols = targets.size();
    CostMatrix c(rows, cols);
    if (cols == 0) return c;

    const PairwiseGeometry geom = pairwise_geometry(p.boxes, targets.boxes);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const int label = targets.labels[static_cast<std::size_t>(j)];
            const double cls = focal_cls_cost(p.class_scores(i, label), w.focal_alpha, w.focal_gamma);
            c(i, j) = w.w_cls * cls + w.w_l1 * geom.l1(i, j) + w.w_giou * (1.0 - geom.giou(i, j));
        }
    }
    return c;
}

Assignment match_flat(const LayerPredictions& p, const FlatTargets& targets,
                      const MatchWeights& w) {
    if (targets.empty()) return {};
    if (p.num_queries() < targets.size())
        throw CapacityError("fewer queries than targets to match");
    return hungarian(build_cost_matrix(p, targets, w));
}

Assignment match_one2one(const LayerPredictions& p, const GroundTruthSet& g,
                         const MatchWeights& w) {
    return match_flat(p, flatten(g), w);
}

Assignment match_one2many(const LayerPredictions& p, const RepeatedTargets& targets,
                          const MatchWeights& w) {
    return match_flat(p, targets.flatten(), w);
}

int one2many_epoch_count(double epoch_fraction, int epochs) {
    const double boundary = epoch_fraction * epochs;
    const int count = static_cast<int>(std::ceil(boundary));
    return std::clamp(count, 0, epochs);
}

std::int64_t positive_supervision_count(const HybridConfig& cfg, int epochs) {
    const std::int64_t e = epochs;
    const std::int64_t layers = cfg.layers;
    switch (cfg.scheme) {
        case Scheme::kBaseline:
            return e * layers;
        case Scheme::kHybridBranch:
            return (1 + static_cast<std::int64_t>(cfg.repeat_branch)) * e * layers;
        case Scheme::kHybridEpoch: {
            const std::int64_t many = one2many_epoch_count(cfg.epoch_fraction, epochs);
            return static_cast<std::int64_t>(cfg.repeat_epoch) * many * layers +
                   (e - many) * layers;
        }
        case Scheme::kHybridLayer:
            return static_cast<std::int64_t>(cfg.repeat_layer) * e * cfg.layers_one2many +
                   e * cfg.layers_one2one;
    }
    throw ConfigError("unknown scheme");
}

}  // namespace hmatch
