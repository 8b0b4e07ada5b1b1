#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hmatch/geometry.hpp"
#include "hmatch/matching.hpp"

namespace hmatch {

struct Detection {
    Box box;
    int label = 0;
    double score = 0.0;
};

// Returned where a metric has no defined value (e.g. AP with no truths and
// no detections).
constexpr double kUndefinedMetric = -1.0;

// Flattens per-layer predictions into one detection per (query, class) cell.
std::vector<Detection> predictions_to_detections(const LayerPredictions& p);

// Greedy per-class suppression: within a class, detections are visited in
// descending score order (ties by index) and dropped when they overlap an
// already kept detection with IoU strictly above the threshold. Returns kept
// indices in ascending order.
std::vector<int> nms(const std::vector<Detection>& dets, double iou_threshold);

// Ranked precision/recall points over the pooled detection list
// (class-aware, per-image greedy matching, each truth used at most once).
std::vector<std::pair<double, double>> pr_curve(const std::vector<std::vector<Detection>>& dets,
                                                const std::vector<GroundTruthSet>& truths,
                                                double iou_threshold);

// 101-point interpolated AP over the emitted PR curve.
double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const std::vector<GroundTruthSet>& truths, double iou_threshold);

struct OlrpResult {
    double total = kUndefinedMetric;
    double loc = kUndefinedMetric;   // mean (1 - IoU) over TPs at the optimal cutoff
    double fp = kUndefinedMetric;    // 1 - precision at the optimal cutoff
    double fn = kUndefinedMetric;    // 1 - recall at the optimal cutoff
    double cutoff = kUndefinedMetric;
};

// Exact sweep over the distinct score set; the score cutoff minimizing
//   [sum_TP (1-IoU)/(1-tau) + |FP| + |FN|] / (|TP|+|FP|+|FN|)
// defines the reported value and components. Undefined when there are no
// truths.
OlrpResult olrp(const std::vector<std::vector<Detection>>& dets,
                const std::vector<GroundTruthSet>& truths, double iou_threshold);

// Fraction of detections with score >= score_cut that nms would suppress.
double duplicate_rate(const std::vector<Detection>& dets, double score_cut, double iou_threshold);

struct EvalReport {
    double ap50 = kUndefinedMetric;
    double ap75 = kUndefinedMetric;
    double olrp = kUndefinedMetric;
    double olrp_loc = kUndefinedMetric;
    double olrp_fp = kUndefinedMetric;
    double olrp_fn = kUndefinedMetric;
    double duplicate_rate = kUndefinedMetric;
    std::vector<std::pair<double, double>> pr_curve;  // at IoU 0.5
};

// Full report over a validation set; optionally runs nms per image first.
EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<GroundTruthSet>& truths, bool apply_nms, double nms_iou,
                    double score_cut);

std::string report_to_json(const EvalReport& r);

}  // namespace hmatch
