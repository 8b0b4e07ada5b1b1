#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "hmatch/errors.hpp"
#include "hmatch/eval.hpp"
#include "hmatch/rng.hpp"

using namespace hmatch;

namespace {

Box random_box(Rng& rng) {
    Box b;
    b.w = rng.uniform(0.1, 0.6);
    b.h = rng.uniform(0.1, 0.6);
    b.cx = rng.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
    b.cy = rng.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
    return b;
}

std::vector<Detection> random_detections(Rng& rng, int count, int classes) {
    std::vector<Detection> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(Detection{random_box(rng), rng.uniform_int(0, classes - 1), rng.uniform()});
    }
    return out;
}

double det_iou(const Detection& a, const Detection& b) {
    return iou(to_corners(a.box), to_corners(b.box));
}

// Independent greedy suppression used as the oracle for nms.
std::vector<int> reference_nms(const std::vector<Detection>& dets, double thr) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<int> kept;
    for (const int i : order) {
        bool keep = true;
        for (const int j : kept) {
            if (dets[j].label == dets[i].label && det_iou(dets[j], dets[i]) > thr) keep = false;
        }
        if (keep) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

// Exhaustive oLRP oracle: re-rank and re-match the above-cutoff subset for
// every candidate cutoff instead of relying on prefix stability.
double reference_olrp(const std::vector<std::vector<Detection>>& dets,
                      const std::vector<GroundTruthSet>& truths, double thr) {
    std::vector<double> cutoffs{std::numeric_limits<double>::infinity()};
    for (const auto& img : dets)
        for (const Detection& d : img) cutoffs.push_back(d.score);

    double nt = 0.0;
    for (const auto& g : truths) nt += static_cast<double>(g.size());

    double best = std::numeric_limits<double>::infinity();
    for (const double cut : cutoffs) {
        struct Entry {
            int image;
            int index;
            double score;
        };
        std::vector<Entry> pool;
        for (std::size_t img = 0; img < dets.size(); ++img) {
            for (std::size_t i = 0; i < dets[img].size(); ++i) {
                if (dets[img][i].score >= cut) {
                    pool.push_back({static_cast<int>(img), static_cast<int>(i),
                                    dets[img][i].score});
                }
            }
        }
        std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.image != b.image) return a.image < b.image;
            return a.index < b.index;
        });

        std::vector<std::vector<bool>> used(truths.size());
        for (std::size_t img = 0; img < truths.size(); ++img) used[img].assign(truths[img].size(), false);
        double tp = 0.0;
        double fp = 0.0;
        double loc = 0.0;
        for (const Entry& e : pool) {
            const Detection& d = dets[e.image][e.index];
            const GroundTruthSet& g = truths[e.image];
            int pick = -1;
            double pick_iou = -1.0;
            for (int j = 0; j < g.size(); ++j) {
                if (used[e.image][j] || g.labels[j] != d.label) continue;
                const double v = iou(to_corners(d.box), to_corners(g.boxes[j]));
                if (v >= thr && v > pick_iou) {
                    pick_iou = v;
                    pick = j;
                }
            }
            if (pick >= 0) {
                used[e.image][pick] = true;
                tp += 1.0;
                loc += 1.0 - pick_iou;
            } else {
                fp += 1.0;
            }
        }
        const double fn = nt - tp;
        if (tp + fp + fn > 0.0) {
            best = std::min(best, (loc / (1.0 - thr) + fp + fn) / (tp + fp + fn));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("nms keeps the best of overlapping same-class detections") {
    const Box b{0.5, 0.5, 0.4, 0.4};
    CHECK(nms({Detection{b, 0, 0.7}}, 0.5) == std::vector<int>{0});

    // Identical boxes, same class: only the higher score survives, whichever
    // position it occupies.
    CHECK(nms({Detection{b, 0, 0.9}, Detection{b, 0, 0.8}}, 0.5) == std::vector<int>{0});
    CHECK(nms({Detection{b, 0, 0.8}, Detection{b, 0, 0.9}}, 0.5) == std::vector<int>{1});

    // A different class never suppresses.
    CHECK(nms({Detection{b, 0, 0.9}, Detection{b, 1, 0.8}}, 0.5) == std::vector<int>{0, 1});
}

TEST_CASE("nms suppresses only strictly above the threshold") {
    // Corner boxes (0,0,0.5,0.5) and (0.25,0,0.75,0.5): IoU exactly 1/3.
    const Detection a{Box{0.25, 0.25, 0.5, 0.5}, 0, 0.9};
    const Detection b{Box{0.5, 0.25, 0.5, 0.5}, 0, 0.8};
    const double exact = 0.125 / 0.375;
    CHECK(det_iou(a, b) == exact);
    CHECK(nms({a, b}, exact) == std::vector<int>{0, 1});
    CHECK(nms({a, b}, 0.33) == std::vector<int>{0});
}

TEST_CASE("nms matches an exhaustive suppression oracle") {
    Rng rng(501);
    for (int trial = 0; trial < 50; ++trial) {
        const auto dets = random_detections(rng, rng.uniform_int(0, 12), 3);
        const double thr = rng.uniform(0.2, 0.8);
        const std::vector<int> kept = nms(dets, thr);
        CHECK(kept == reference_nms(dets, thr));
        CHECK(std::is_sorted(kept.begin(), kept.end()));

        // Idempotence: a second pass keeps everything.
        std::vector<Detection> filtered;
        for (const int i : kept) filtered.push_back(dets[i]);
        std::vector<int> all(filtered.size());
        std::iota(all.begin(), all.end(), 0);
        CHECK(nms(filtered, thr) == all);
    }
    CHECK_THROWS_AS(nms({}, 0.0), ConfigError);
    CHECK_THROWS_AS(nms({}, 1.0), ConfigError);
}

TEST_CASE("average precision trivial cases") {
    Rng rng(503);
    GroundTruthSet g;
    g.boxes = {random_box(rng), random_box(rng)};
    g.labels = {0, 1};

    std::vector<Detection> perfect{Detection{g.boxes[0], 0, 1.0}, Detection{g.boxes[1], 1, 1.0}};
    CHECK(average_precision({perfect}, {g}, 0.5) == 1.0);

    CHECK(average_precision({{}}, {g}, 0.5) == 0.0);
    CHECK(average_precision({{}}, {GroundTruthSet{}}, 0.5) == kUndefinedMetric);
    CHECK(average_precision({perfect}, {GroundTruthSet{}}, 0.5) == 0.0);
}

TEST_CASE("average precision three-detection hand case") {
    GroundTruthSet g;
    g.boxes = {Box{0.2, 0.2, 0.2, 0.2}, Box{0.7, 0.7, 0.2, 0.2}};
    g.labels = {0, 0};

    // Ranked TP, FP (duplicate of the first truth), TP.
    const std::vector<Detection> dets{
        Detection{g.boxes[0], 0, 0.9},
        Detection{g.boxes[0], 0, 0.8},
        Detection{g.boxes[1], 0, 0.7},
    };
    // 101-point interpolation: precision 1 for recall <= 0.5 (51 points),
    // 2/3 beyond (50 points).
    const double expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
    CHECK(std::abs(average_precision({dets}, {g}, 0.5) - expected) <= 1e-12);

    const auto curve = pr_curve({dets}, {g}, 0.5);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0] == std::pair<double, double>{0.5, 1.0});
    CHECK(curve[1] == std::pair<double, double>{0.5, 0.5});
    CHECK(curve[2] == std::pair<double, double>{1.0, 2.0 / 3.0});
}

TEST_CASE("pr curve recall never decreases and AP integrates the curve") {
    Rng rng(509);
    for (int trial = 0; trial < 30; ++trial) {
        const int images = rng.uniform_int(1, 3);
        std::vector<std::vector<Detection>> dets;
        std::vector<GroundTruthSet> truths;
        for (int i = 0; i < images; ++i) {
            GroundTruthSet g;
            const int m = rng.uniform_int(1, 4);
            for (int j = 0; j < m; ++j) {
                g.boxes.push_back(random_box(rng));
                g.labels.push_back(rng.uniform_int(0, 2));
            }
            truths.push_back(g);
            dets.push_back(random_detections(rng, rng.uniform_int(0, 10), 3));
        }

        const auto curve = pr_curve(dets, truths, 0.5);
        for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].first >= curve[i - 1].first);

        double sum = 0.0;
        for (int i = 0; i <= 100; ++i) {
            const double r = static_cast<double>(i) / 100.0;
            double best = 0.0;
            for (const auto& [rec, prec] : curve)
                if (rec >= r) best = std::max(best, prec);
            sum += best;
        }
        CHECK(std::abs(average_precision(dets, truths, 0.5) - sum / 101.0) <= 1e-9);
    }
}

TEST_CASE("a new perfect top detection never lowers AP") {
    Rng rng(521);
    for (int trial = 0; trial < 20; ++trial) {
        GroundTruthSet g;
        for (int j = 0; j < 3; ++j) {
            g.boxes.push_back(random_box(rng));
            g.labels.push_back(rng.uniform_int(0, 1));
        }
        auto dets = random_detections(rng, 5, 2);
        for (Detection& d : dets) d.score *= 0.9;  // keep headroom for the new top score

        const double before = average_precision({dets}, {g}, 0.5);
        dets.push_back(Detection{g.boxes[0], g.labels[0], 1.0});
        const double after = average_precision({dets}, {g}, 0.5);
        CHECK(after >= before - 1e-12);
    }
}

TEST_CASE("olrp trivial cases") {
    GroundTruthSet g;
    g.boxes = {Box{0.3, 0.3, 0.2, 0.2}, Box{0.7, 0.7, 0.2, 0.2}};
    g.labels = {0, 1};

    const std::vector<Detection> perfect{Detection{g.boxes[0], 0, 0.9},
                                         Detection{g.boxes[1], 1, 0.8}};
    const OlrpResult p = olrp({perfect}, {g}, 0.5);
    CHECK(p.total == 0.0);
    CHECK(p.loc == 0.0);
    CHECK(p.fp == 0.0);
    CHECK(p.fn == 0.0);

    const OlrpResult none = olrp({{}}, {g}, 0.5);
    CHECK(none.total == 1.0);
    CHECK(none.fn == 1.0);

    const OlrpResult undefined = olrp({{}}, {GroundTruthSet{}}, 0.5);
    CHECK(undefined.total == kUndefinedMetric);
    CHECK(undefined.loc == kUndefinedMetric);
    CHECK(undefined.fp == kUndefinedMetric);
    CHECK(undefined.fn == kUndefinedMetric);
}

TEST_CASE("olrp hand case picks the cutoff below the false positive") {
    GroundTruthSet g;
    g.boxes = {Box{0.2, 0.2, 0.2, 0.2}, Box{0.7, 0.7, 0.2, 0.2}};
    g.labels = {0, 0};

    const std::vector<Detection> dets{
        Detection{g.boxes[0], 0, 0.9},
        Detection{Box{0.5, 0.2, 0.1, 0.1}, 0, 0.8},  // matches nothing
        Detection{g.boxes[1], 0, 0.7},
    };
    // Sweep: cutoff inf -> 1, 0.9 -> 1/2, 0.8 -> 2/3, 0.7 -> 1/3.
    const OlrpResult r = olrp({dets}, {g}, 0.5);
    CHECK(r.total == 1.0 / 3.0);
    CHECK(r.loc == 0.0);
    CHECK(r.fp == 1.0 / 3.0);
    CHECK(r.fn == 0.0);
    CHECK(r.cutoff == 0.7);
}

TEST_CASE("olrp localization component scales the IoU shortfall") {
    GroundTruthSet g;
    g.boxes = {Box{0.25, 0.25, 0.5, 0.5}};
    g.labels = {0};

    // Detection with IoU exactly 0.8 against the truth.
    const std::vector<Detection> dets{Detection{Box{0.25, 0.2, 0.5, 0.4}, 0, 0.9}};
    CHECK(det_iou(dets[0], Detection{g.boxes[0], 0, 1.0}) == 0.8);

    const OlrpResult r = olrp({dets}, {g}, 0.5);
    CHECK(std::abs(r.total - 0.4) <= 1e-12);  // (1 - 0.8) / (1 - 0.5)
    CHECK(std::abs(r.loc - 0.2) <= 1e-12);
    CHECK(r.fp == 0.0);
    CHECK(r.fn == 0.0);
}

TEST_CASE("olrp equals an exhaustive cutoff sweep on random instances") {
    Rng rng(523);
    for (int trial = 0; trial < 30; ++trial) {
        const int images = rng.uniform_int(1, 3);
        std::vector<std::vector<Detection>> dets;
        std::vector<GroundTruthSet> truths;
        for (int i = 0; i < images; ++i) {
            GroundTruthSet g;
            const int m = rng.uniform_int(1, 3);
            for (int j = 0; j < m; ++j) {
                g.boxes.push_back(random_box(rng));
                g.labels.push_back(rng.uniform_int(0, 1));
            }
            truths.push_back(g);
            dets.push_back(random_detections(rng, rng.uniform_int(0, 6), 2));
        }
        const OlrpResult got = olrp(dets, truths, 0.5);
        CHECK(std::abs(got.total - reference_olrp(dets, truths, 0.5)) <= 1e-12);
    }
}

TEST_CASE("duplicate rate counts suppressed above-cut detections") {
    const Box a{0.2, 0.2, 0.2, 0.2};
    const Box b{0.8, 0.8, 0.2, 0.2};
    CHECK(duplicate_rate({Detection{a, 0, 0.9}, Detection{b, 0, 0.8}}, 0.5, 0.5) == 0.0);
    CHECK(duplicate_rate({Detection{a, 0, 0.9}, Detection{a, 0, 0.8}}, 0.5, 0.5) == 0.5);
    // Below-cut duplicates are ignored.
    CHECK(duplicate_rate({Detection{a, 0, 0.9}, Detection{a, 0, 0.3}}, 0.5, 0.5) == 0.0);
    CHECK(duplicate_rate({}, 0.5, 0.5) == 0.0);

    Rng rng(541);
    for (int trial = 0; trial < 20; ++trial) {
        const auto dets = random_detections(rng, rng.uniform_int(1, 10), 2);
        std::vector<Detection> above;
        for (const Detection& d : dets)
            if (d.score >= 0.4) above.push_back(d);
        const double expected =
            above.empty()
                ? 0.0
                : 1.0 - static_cast<double>(nms(above, 0.5).size()) / static_cast<double>(above.size());
        CHECK(duplicate_rate(dets, 0.4, 0.5) == expected);
    }
}

TEST_CASE("predictions_to_detections flattens query-class cells") {
    LayerPredictions p;
    p.class_scores = Mat(2, 3);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c) p.class_scores(i, c) = 0.1 * (1 + i) + 0.01 * c;
    p.boxes = {Box{0.3, 0.3, 0.2, 0.2}, Box{0.6, 0.6, 0.2, 0.2}};

    const auto dets = predictions_to_detections(p);
    REQUIRE(dets.size() == 6);
    CHECK(dets[0].label == 0);
    CHECK(dets[0].score == p.class_scores(0, 0));
    CHECK(dets[5].label == 2);
    CHECK(dets[5].score == p.class_scores(1, 2));
    CHECK(dets[3].box.cx == 0.6);
}

TEST_CASE("evaluate reports perfect predictions as perfect") {
    Rng rng(547);
    std::vector<std::vector<Detection>> dets;
    std::vector<GroundTruthSet> truths;
    for (int i = 0; i < 4; ++i) {
        GroundTruthSet g;
        const int m = rng.uniform_int(1, 4);
        for (int j = 0; j < m; ++j) {
            g.boxes.push_back(random_box(rng));
            g.labels.push_back(rng.uniform_int(0, 2));
        }
        std::vector<Detection> d;
        for (int j = 0; j < m; ++j) d.push_back(Detection{g.boxes[j], g.labels[j], 1.0});
        truths.push_back(g);
        dets.push_back(d);
    }
    const EvalReport r = evaluate(dets, truths, false, 0.5, 0.5);
    CHECK(r.ap50 == 1.0);
    CHECK(r.ap75 == 1.0);
    CHECK(r.olrp == 0.0);
    CHECK(r.duplicate_rate == 0.0);
    CHECK(!r.pr_curve.empty());
    CHECK(r.pr_curve.back() == std::pair<double, double>{1.0, 1.0});
}

TEST_CASE("evaluate with nms removes duplicates before scoring") {
    GroundTruthSet g;
    g.boxes = {Box{0.4, 0.4, 0.3, 0.3}};
    g.labels = {0};
    const std::vector<Detection> dets{Detection{g.boxes[0], 0, 0.9},
                                      Detection{g.boxes[0], 0, 0.8}};

    const EvalReport raw = evaluate({dets}, {g}, false, 0.5, 0.5);
    CHECK(raw.duplicate_rate == 0.5);

    const EvalReport clean = evaluate({dets}, {g}, true, 0.5, 0.5);
    CHECK(clean.duplicate_rate == 0.0);
    CHECK(clean.ap50 == 1.0);
}

TEST_CASE("eval report serializes with the documented keys") {
    EvalReport r;
    r.ap50 = 0.5;
    r.ap75 = 0.25;
    r.olrp = 0.75;
    r.olrp_loc = 0.1;
    r.olrp_fp = 0.2;
    r.olrp_fn = 0.3;
    r.duplicate_rate = 0.0;
    r.pr_curve = {{0.5, 1.0}, {1.0, 0.5}};

    const nlohmann::json j = nlohmann::json::parse(report_to_json(r));
    CHECK(j.at("ap50").get<double>() == 0.5);
    CHECK(j.at("ap75").get<double>() == 0.25);
    CHECK(j.at("olrp").get<double>() == 0.75);
    CHECK(j.at("olrp_loc").get<double>() == 0.1);
    CHECK(j.at("olrp_fp").get<double>() == 0.2);
    CHECK(j.at("olrp_fn").get<double>() == 0.3);
    CHECK(j.at("duplicate_rate").get<double>() == 0.0);
    REQUIRE(j.at("pr_curve").size() == 2);
    CHECK(j.at("pr_curve")[0][0].get<double>() == 0.5);
    CHECK(j.at("pr_curve")[1][1].get<double>() == 0.5);
}
