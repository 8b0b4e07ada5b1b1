#include "hmatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "hmatch/errors.hpp"
#include "hmatch/geometry.hpp"

namespace hmatch {
namespace {

struct FocalTerm {
    double value;
    double d_score;  // derivative with respect to the raw score
};

// Focal term for one (query, class) cell. Scores outside the clamp range get
// a zero derivative (flat region of the clamped function).
FocalTerm focal_term(double score, bool positive, double alpha, double gamma) {
    const bool clamped = score < kProbClamp || score > 1.0 - kProbClamp;
    const double p = std::clamp(score, kProbClamp, 1.0 - kProbClamp);
    FocalTerm t{};
    if (positive) {
        const double u = 1.0 - p;
        t.value = alpha * std::pow(u, gamma) * (-std::log(p));
        if (!clamped) {
            t.d_score = alpha * (gamma * std::pow(u, gamma - 1.0) * std::log(p) - std::pow(u, gamma) / p);
        }
    } else {
        t.value = (1.0 - alpha) * std::pow(p, gamma) * (-std::log(1.0 - p));
        if (!clamped) {
            t.d_score = (1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * (-std::log(1.0 - p)) +
                                         std::pow(p, gamma) / (1.0 - p));
        }
    }
    return t;
}

// Shared kernel for the plain and merged paths. Reads queries
// [row_offset, row_offset + num_queries) of `scores` / `boxes`, pairs carry
// indices local to that block, gradients are written into the same rows of
// the (possibly larger) output tensors. Keeping one kernel is what makes the
// merged hybrid path bit-identical to two separate passes.
LossTerms set_loss_block(const Mat& scores, const std::vector<Box>& boxes, int row_offset,
                         int num_queries, const FlatTargets& targets, const Assignment& a,
                         const MatchWeights& w, Mat& d_scores, Mat& d_boxes) {
    const int num_classes = scores.cols;
    std::vector<int> matched_label(static_cast<std::size_t>(num_queries), -1);
    for (const auto& [row, col] : a.pairs) {
        if (row < 0 || row >= num_queries) throw IndexError("set_loss: pair row out of range");
        if (col < 0 || col >= static_cast<int>(targets.labels.size()))
            throw IndexError("set_loss: pair column out of range");
        matched_label[static_cast<std::size_t>(row)] = targets.labels[static_cast<std::size_t>(col)];
    }

    const double norm = static_cast<double>(std::max<std::size_t>(1, a.pairs.size()));

    double cls_sum = 0.0;
    for (int i = 0; i < num_queries; ++i) {
        const int label = matched_label[static_cast<std::size_t>(i)];
        for (int j = 0; j < num_classes; ++j) {
            const FocalTerm t =
                focal_term(scores(row_offset + i, j), j == label, w.focal_alpha, w.focal_gamma);
            cls_sum += t.value;
            d_scores(row_offset + i, j) = w.w_cls * t.d_score / norm;
        }
    }

    double l1_sum = 0.0;
    double giou_sum = 0.0;
    for (const auto& [row, col] : a.pairs) {
        const Box& pred = boxes[static_cast<std::size_t>(row_offset + row)];
        const Box& target = targets.boxes[static_cast<std::size_t>(col)];
        l1_sum += l1_distance(pred, target);
        const double pp[4] = {pred.cx, pred.cy, pred.w, pred.h};
        const double tt[4] = {target.cx, target.cy, target.w, target.h};
        for (int k = 0; k < 4; ++k) {
            double s = 0.0;
            if (pp[k] > tt[k]) s = 1.0;
            if (pp[k] < tt[k]) s = -1.0;
            d_boxes(row_offset + row, k) += w.w_l1 * s / norm;
        }
        const GiouWithGrad gg = giou_grad(pred, target);
        giou_sum += 1.0 - gg.value;
        for (int k = 0; k < 4; ++k) {
            d_boxes(row_offset + row, k) -= w.w_giou * gg.d_first[k] / norm;
        }
    }

    LossTerms terms;
    terms.cls = cls_sum / norm;
    terms.l1 = l1_sum / norm;
    terms.giou = giou_sum / norm;
    terms.total = w.w_cls * terms.cls + w.w_l1 * terms.l1 + w.w_giou * terms.giou;
    return terms;
}

Assignment match_block(const CostMatrix& full, int row_begin, int row_count, int col_begin,
                       int col_count) {
    if (col_count == 0) return Assignment{};
    if (row_count < col_count) {
        throw CapacityError("hybrid matching: fewer queries than targets in block");
    }
    CostMatrix block(row_count, col_count);
    for (int r = 0; r < row_count; ++r) {
        for (int c = 0; c < col_count; ++c) {
            block(r, c) = full(row_begin + r, col_begin + c);
        }
    }
    return hungarian(block);
}

BranchLoss branch_loss(const std::vector<LayerPredictions>& layers, const FlatTargets& targets,
                       const MatchWeights& w) {
    BranchLoss out;
    out.layers.reserve(layers.size());
    for (const auto& p : layers) {
        LayerLoss ll;
        ll.assignment = match_flat(p, targets, w);
        ll.grads.d_scores = Mat(p.num_queries(), p.num_classes());
        ll.grads.d_boxes = Mat(p.num_queries(), 4);
        ll.terms = set_loss_block(p.class_scores, p.boxes, 0, p.num_queries(), targets,
                                  ll.assignment, w, ll.grads.d_scores, ll.grads.d_boxes);
        out.total = add(out.total, ll.terms);
        out.layers.push_back(std::move(ll));
    }
    return out;
}

bool one2many_branch_enabled(const std::vector<LayerPredictions>& one2many_layers,
                             const HybridConfig& cfg) {
    if (cfg.repeat_branch == 0) return false;
    if (one2many_layers.empty()) return false;
    for (const auto& p : one2many_layers) {
        if (p.num_queries() == 0) return false;
    }
    return true;
}

LossTerms combine_branches(const BranchLoss& one, const BranchLoss& many, double weight) {
    return add(one.total, scale(many.total, weight));
}

}  // namespace

LossTerms add(const LossTerms& a, const LossTerms& b) {
    return LossTerms{a.cls + b.cls, a.l1 + b.l1, a.giou + b.giou, a.total + b.total};
}

LossTerms scale(const LossTerms& a, double s) {
    return LossTerms{a.cls * s, a.l1 * s, a.giou * s, a.total * s};
}

SetLossResult set_loss(const LayerPredictions& p, const FlatTargets& targets, const Assignment& a,
                       const MatchWeights& w) {
    SetLossResult r;
    r.grads.d_scores = Mat(p.num_queries(), p.num_classes());
    r.grads.d_boxes = Mat(p.num_queries(), 4);
    r.terms = set_loss_block(p.class_scores, p.boxes, 0, p.num_queries(), targets, a, w,
                             r.grads.d_scores, r.grads.d_boxes);
    return r;
}

BranchLoss one2one_loss(const std::vector<LayerPredictions>& layers, const GroundTruthSet& g,
                        const MatchWeights& w) {
    validate_ground_truth(g, layers.empty() ? 0 : layers.front().num_classes());
    return branch_loss(layers, flatten(g), w);
}

BranchLoss one2many_loss(const std::vector<LayerPredictions>& layers,
                         const RepeatedTargets& targets, const MatchWeights& w) {
    return branch_loss(layers, targets.flatten(), w);
}

HybridLossResult naive_hybrid_loss(const std::vector<LayerPredictions>& one2one_layers,
                                   const std::vector<LayerPredictions>& one2many_layers,
                                   const GroundTruthSet& g, const HybridConfig& cfg,
                                   const MatchWeights& w) {
    cfg.validate();
    HybridLossResult r;
    r.one2many_weight = cfg.one2many_weight;
    r.one2one = one2one_loss(one2one_layers, g, w);
    if (one2many_branch_enabled(one2many_layers, cfg)) {
        r.one2many = one2many_loss(one2many_layers, repeat_targets(g, cfg.repeat_branch), w);
    }
    r.combined = combine_branches(r.one2one, r.one2many, r.one2many_weight);
    return r;
}

HybridLossResult optimized_hybrid_loss(const std::vector<LayerPredictions>& one2one_layers,
                                       const std::vector<LayerPredictions>& one2many_layers,
                                       const GroundTruthSet& g, const HybridConfig& cfg,
                                       const MatchWeights& w) {
    cfg.validate();
    const bool many_enabled = one2many_branch_enabled(one2many_layers, cfg);
    if (!many_enabled) {
        // Nothing to merge; the merged path degenerates to the plain branch.
        HybridLossResult r;
        r.one2many_weight = cfg.one2many_weight;
        r.one2one = one2one_loss(one2one_layers, g, w);
        r.combined = combine_branches(r.one2one, r.one2many, r.one2many_weight);
        return r;
    }
    if (one2many_layers.size() != one2one_layers.size()) {
        throw ConfigError("optimized_hybrid_loss: branch layer counts differ");
    }
    validate_ground_truth(g, one2one_layers.empty() ? 0 : one2one_layers.front().num_classes());

    const FlatTargets plain = flatten(g);
    const FlatTargets repeated = repeat_targets(g, cfg.repeat_branch).flatten();
    const FlatTargets cat = concat(plain, repeated);
    const int m = static_cast<int>(plain.boxes.size());
    const int km = static_cast<int>(repeated.boxes.size());

    HybridLossResult r;
    r.one2many_weight = cfg.one2many_weight;
    for (std::size_t li = 0; li < one2one_layers.size(); ++li) {
        const LayerPredictions& p1 = one2one_layers[li];
        const LayerPredictions& p2 = one2many_layers[li];
        if (p1.num_classes() != p2.num_classes()) {
            throw ConfigError("optimized_hybrid_loss: branch class counts differ");
        }
        const int n = p1.num_queries();
        const int t = p2.num_queries();

        // One concatenated prediction set, one cost computation.
        LayerPredictions merged;
        merged.layer_index = p1.layer_index;
        merged.class_scores = Mat(n + t, p1.num_classes());
        std::copy(p1.class_scores.a.begin(), p1.class_scores.a.end(), merged.class_scores.a.begin());
        std::copy(p2.class_scores.a.begin(), p2.class_scores.a.end(),
                  merged.class_scores.a.begin() + static_cast<std::ptrdiff_t>(p1.class_scores.a.size()));
        merged.boxes = p1.boxes;
        merged.boxes.insert(merged.boxes.end(), p2.boxes.begin(), p2.boxes.end());

        LayerLoss l1;
        LayerLoss l2;
        if (!cat.boxes.empty()) {
            const CostMatrix full = build_cost_matrix(merged, cat, w);
            // Diagonal blocks: one2one queries vs plain targets, one2many
            // queries vs repeated targets. Off-diagonal blocks are discarded.
            l1.assignment = match_block(full, 0, n, 0, m);
            l2.assignment = match_block(full, n, t, m, km);
        }

        // One loss evaluation over the concatenation, sliced afterwards.
        Mat d_scores(n + t, p1.num_classes());
        Mat d_boxes(n + t, 4);
        l1.terms = set_loss_block(merged.class_scores, merged.boxes, 0, n, plain, l1.assignment, w,
                                  d_scores, d_boxes);
        l2.terms = set_loss_block(merged.class_scores, merged.boxes, n, t, repeated, l2.assignment,
                                  w, d_scores, d_boxes);

        l1.grads.d_scores = Mat(n, p1.num_classes());
        l1.grads.d_boxes = Mat(n, 4);
        l2.grads.d_scores = Mat(t, p1.num_classes());
        l2.grads.d_boxes = Mat(t, 4);
        std::copy_n(d_scores.a.begin(), l1.grads.d_scores.a.size(), l1.grads.d_scores.a.begin());
        std::copy_n(d_scores.a.begin() + static_cast<std::ptrdiff_t>(l1.grads.d_scores.a.size()),
                    l2.grads.d_scores.a.size(), l2.grads.d_scores.a.begin());
        std::copy_n(d_boxes.a.begin(), l1.grads.d_boxes.a.size(), l1.grads.d_boxes.a.begin());
        std::copy_n(d_boxes.a.begin() + static_cast<std::ptrdiff_t>(l1.grads.d_boxes.a.size()),
                    l2.grads.d_boxes.a.size(), l2.grads.d_boxes.a.begin());

        r.one2one.total = add(r.one2one.total, l1.terms);
        r.one2many.total = add(r.one2many.total, l2.terms);
        r.one2one.layers.push_back(std::move(l1));
        r.one2many.layers.push_back(std::move(l2));
    }
    r.combined = combine_branches(r.one2one, r.one2many, r.one2many_weight);
    return r;
}

HybridLossResult hybrid_branch_loss(const std::vector<LayerPredictions>& one2one_layers,
                                    const std::vector<LayerPredictions>& one2many_layers,
                                    const GroundTruthSet& g, const HybridConfig& cfg,
                                    const MatchWeights& w) {
    return optimized_hybrid_loss(one2one_layers, one2many_layers, g, cfg, w);
}

EpochSchemeLoss hybrid_epoch_loss(const std::vector<LayerPredictions>& layers,
                                  const GroundTruthSet& g, const HybridConfig& cfg,
                                  int epoch_index, int total_epochs, const MatchWeights& w) {
    cfg.validate();
    if (epoch_index < 0 || total_epochs <= 0 || epoch_index >= total_epochs) {
        throw ConfigError("hybrid_epoch_loss: epoch index outside schedule");
    }
    EpochSchemeLoss r;
    r.used_one2many = epoch_index < one2many_epoch_count(cfg.epoch_fraction, total_epochs) &&
                      cfg.repeat_epoch > 0;
    if (r.used_one2many) {
        r.loss = one2many_loss(layers, repeat_targets(g, cfg.repeat_epoch), w);
    } else {
        r.loss = one2one_loss(layers, g, w);
    }
    return r;
}

BranchLoss hybrid_layer_loss(const std::vector<LayerPredictions>& layers, const GroundTruthSet& g,
                             const HybridConfig& cfg, const MatchWeights& w) {
    cfg.validate();
    const int expected = cfg.layers_one2many + cfg.layers_one2one;
    if (static_cast<int>(layers.size()) != expected) {
        throw ConfigError("hybrid_layer_loss: layer count does not match configured split");
    }
    validate_ground_truth(g, layers.empty() ? 0 : layers.front().num_classes());
    const FlatTargets plain = flatten(g);
    const FlatTargets repeated =
        cfg.repeat_layer > 0 ? repeat_targets(g, cfg.repeat_layer).flatten() : FlatTargets{};

    BranchLoss out;
    out.layers.reserve(layers.size());
    for (int li = 0; li < expected; ++li) {
        const bool many = li < cfg.layers_one2many && !repeated.boxes.empty();
        const FlatTargets& targets = many ? repeated : plain;
        const LayerPredictions& p = layers[static_cast<std::size_t>(li)];
        LayerLoss ll;
        ll.assignment = match_flat(p, targets, w);
        ll.grads.d_scores = Mat(p.num_queries(), p.num_classes());
        ll.grads.d_boxes = Mat(p.num_queries(), 4);
        ll.terms = set_loss_block(p.class_scores, p.boxes, 0, p.num_queries(), targets,
                                  ll.assignment, w, ll.grads.d_scores, ll.grads.d_boxes);
        out.total = add(out.total, ll.terms);
        out.layers.push_back(std::move(ll));
    }
    return out;
}

}  // namespace hmatch
