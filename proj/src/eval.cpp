#include "hmatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "hmatch/errors.hpp"

namespace hmatch {
namespace {

struct RankedDet {
    int image = 0;
    int index = 0;
    double score = 0.0;
    bool tp = false;
    double iou_value = 0.0;
};

void check_threshold(double t) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("iou threshold must lie in (0,1)");
}

// A box whose extent underflowed to zero area cannot overlap anything; the
// strict iou contract would reject it, but evaluation has to stay total even
// on degenerate predictions.
double safe_iou(const CornerBox& a, const CornerBox& b) {
    const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
    const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
    if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
    return iou(a, b);
}

// Pools detections across images, ranks by descending score (ties by image
// then index), and greedily matches each detection to the best still-free
// same-class truth of its image at IoU >= threshold.
std::vector<RankedDet> rank_and_match(const std::vector<std::vector<Detection>>& dets,
                                      const std::vector<GroundTruthSet>& truths,
                                      double iou_threshold) {
    if (dets.size() != truths.size()) {
        throw ConfigError("evaluation: detection and truth image counts differ");
    }
    std::vector<RankedDet> ranked;
    for (std::size_t img = 0; img < dets.size(); ++img) {
        for (std::size_t i = 0; i < dets[img].size(); ++i) {
            ranked.push_back(RankedDet{static_cast<int>(img), static_cast<int>(i),
                                       dets[img][i].score, false, 0.0});
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedDet& a, const RankedDet& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.index < b.index;
    });

    std::vector<std::vector<bool>> used(truths.size());
    for (std::size_t img = 0; img < truths.size(); ++img) {
        used[img].assign(truths[img].size(), false);
    }
    for (RankedDet& r : ranked) {
        const Detection& d = dets[static_cast<std::size_t>(r.image)][static_cast<std::size_t>(r.index)];
        const GroundTruthSet& g = truths[static_cast<std::size_t>(r.image)];
        int best = -1;
        double best_iou = -1.0;
        const CornerBox dc = to_corners(d.box);
        for (int j = 0; j < g.size(); ++j) {
            const std::size_t ju = static_cast<std::size_t>(j);
            if (used[static_cast<std::size_t>(r.image)][ju] || g.labels[ju] != d.label) continue;
            const double v = safe_iou(dc, to_corners(g.boxes[ju]));
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0) {
            used[static_cast<std::size_t>(r.image)][static_cast<std::size_t>(best)] = true;
            r.tp = true;
            r.iou_value = best_iou;
        }
    }
    return ranked;
}

std::size_t total_truths(const std::vector<GroundTruthSet>& truths) {
    std::size_t n = 0;
    for (const auto& g : truths) n += g.size();
    return n;
}

double interpolate_ap(const std::vector<std::pair<double, double>>& curve) {
    double sum = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = static_cast<double>(i) / 100.0;
        double best = 0.0;
        for (const auto& [rec, prec] : curve) {
            if (rec >= r) best = std::max(best, prec);
        }
        sum += best;
    }
    return sum / 101.0;
}

}  // namespace

std::vector<Detection> predictions_to_detections(const LayerPredictions& p) {
    std::vector<Detection> out;
    out.reserve(static_cast<std::size_t>(p.num_queries()) * p.num_classes());
    for (int i = 0; i < p.num_queries(); ++i) {
        for (int c = 0; c < p.num_classes(); ++c) {
            out.push_back(Detection{p.boxes[static_cast<std::size_t>(i)], c, p.class_scores(i, c)});
        }
    }
    return out;
}

std::vector<int> nms(const std::vector<Detection>& dets, double iou_threshold) {
    check_threshold(iou_threshold);
    std::vector<int> order(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dets[static_cast<std::size_t>(a)].score != dets[static_cast<std::size_t>(b)].score)
            return dets[static_cast<std::size_t>(a)].score > dets[static_cast<std::size_t>(b)].score;
        return a < b;
    });
    std::vector<bool> suppressed(dets.size(), false);
    std::vector<int> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const int i = order[oi];
        if (suppressed[static_cast<std::size_t>(i)]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const int j = order[oj];
            if (suppressed[static_cast<std::size_t>(j)]) continue;
            if (dets[static_cast<std::size_t>(j)].label != dets[static_cast<std::size_t>(i)].label)
                continue;
            if (safe_iou(to_corners(dets[static_cast<std::size_t>(i)].box),
                    to_corners(dets[static_cast<std::size_t>(j)].box)) > iou_threshold) {
                suppressed[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<std::pair<double, double>> pr_curve(const std::vector<std::vector<Detection>>& dets,
                                                const std::vector<GroundTruthSet>& truths,
                                                double iou_threshold) {
    check_threshold(iou_threshold);
    const std::size_t nt = total_truths(truths);
    std::vector<std::pair<double, double>> curve;
    if (nt == 0) return curve;
    const std::vector<RankedDet> ranked = rank_and_match(dets, truths, iou_threshold);
    double tp = 0.0;
    double fp = 0.0;
    curve.reserve(ranked.size());
    for (const RankedDet& r : ranked) {
        if (r.tp) {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        curve.emplace_back(tp / static_cast<double>(nt), tp / (tp + fp));
    }
    return curve;
}

double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const std::vector<GroundTruthSet>& truths, double iou_threshold) {
    check_threshold(iou_threshold);
    const std::size_t nt = total_truths(truths);
    std::size_t nd = 0;
    for (const auto& v : dets) nd += v.size();
    if (nt == 0 && nd == 0) return kUndefinedMetric;
    if (nt == 0) return 0.0;
    return interpolate_ap(pr_curve(dets, truths, iou_threshold));
}

OlrpResult olrp(const std::vector<std::vector<Detection>>& dets,
                const std::vector<GroundTruthSet>& truths, double iou_threshold) {
    check_threshold(iou_threshold);
    const double nt = static_cast<double>(total_truths(truths));
    OlrpResult best;
    if (nt == 0.0) return best;

    const std::vector<RankedDet> ranked = rank_and_match(dets, truths, iou_threshold);

    // Greedy matching is prefix-stable, so every score cutoff corresponds to
    // a prefix of the ranked list; sweep all of them plus the empty prefix.
    double tp = 0.0;
    double fp = 0.0;
    double loc_sum = 0.0;  // sum of (1 - IoU) over TPs
    bool have_best = false;
    auto consider = [&](double cutoff) {
        const double fn = nt - tp;
        const double lrp =
            (loc_sum / (1.0 - iou_threshold) + fp + fn) / (tp + fp + fn);
        if (!have_best || lrp < best.total) {
            have_best = true;
            best.total = lrp;
            best.loc = tp > 0.0 ? loc_sum / tp : 0.0;
            best.fp = tp + fp > 0.0 ? fp / (tp + fp) : 0.0;
            best.fn = fn / nt;
            best.cutoff = cutoff;
        }
    };
    consider(std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].tp) {
            tp += 1.0;
            loc_sum += 1.0 - ranked[i].iou_value;
        } else {
            fp += 1.0;
        }
        const bool boundary = i + 1 == ranked.size() || ranked[i + 1].score != ranked[i].score;
        if (boundary) consider(ranked[i].score);
    }
    return best;
}

double duplicate_rate(const std::vector<Detection>& dets, double score_cut, double iou_threshold) {
    std::vector<Detection> above;
    for (const Detection& d : dets) {
        if (d.score >= score_cut) above.push_back(d);
    }
    if (above.empty()) return 0.0;
    const std::size_t kept = nms(above, iou_threshold).size();
    return 1.0 - static_cast<double>(kept) / static_cast<double>(above.size());
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<GroundTruthSet>& truths, bool apply_nms, double nms_iou,
                    double score_cut) {
    std::vector<std::vector<Detection>> use;
    use.reserve(dets.size());
    if (apply_nms) {
        for (const auto& img : dets) {
            std::vector<Detection> filtered;
            for (int idx : nms(img, nms_iou)) filtered.push_back(img[static_cast<std::size_t>(idx)]);
            use.push_back(std::move(filtered));
        }
    } else {
        use = dets;
    }

    EvalReport r;
    r.ap50 = average_precision(use, truths, 0.5);
    r.ap75 = average_precision(use, truths, 0.75);
    const OlrpResult o = olrp(use, truths, 0.5);
    r.olrp = o.total;
    r.olrp_loc = o.loc;
    r.olrp_fp = o.fp;
    r.olrp_fn = o.fn;
    r.pr_curve = pr_curve(use, truths, 0.5);

    std::size_t above = 0;
    std::size_t kept = 0;
    for (const auto& img : use) {
        std::vector<Detection> cut;
        for (const Detection& d : img) {
            if (d.score >= score_cut) cut.push_back(d);
        }
        above += cut.size();
        if (!cut.empty()) kept += nms(cut, nms_iou).size();
    }
    r.duplicate_rate = above == 0 ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(above);
    return r;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["ap50"] = r.ap50;
    j["ap75"] = r.ap75;
    j["olrp"] = r.olrp;
    j["olrp_loc"] = r.olrp_loc;
    j["olrp_fp"] = r.olrp_fp;
    j["olrp_fn"] = r.olrp_fn;
    j["duplicate_rate"] = r.duplicate_rate;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [rec, prec] : r.pr_curve) {
        curve.push_back(nlohmann::json::array({rec, prec}));
    }
    j["pr_curve"] = curve;
    return j.dump(2) + "\n";
}

}  // namespace hmatch
