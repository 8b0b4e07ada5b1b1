#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "hmatch/errors.hpp"
#include "hmatch/geometry.hpp"
#include "hmatch/rng.hpp"

using namespace hmatch;

namespace {

Box random_box(Rng& rng) {
    Box b;
    b.w = rng.uniform(0.05, 0.9);
    b.h = rng.uniform(0.05, 0.9);
    b.cx = rng.uniform(b.w / 2.0, 1.0 - b.w / 2.0);
    b.cy = rng.uniform(b.h / 2.0, 1.0 - b.h / 2.0);
    return b;
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TEST_CASE("to_corners maps center-size to corner form") {
    const CornerBox full = to_corners(Box{0.5, 0.5, 1.0, 1.0});
    CHECK(full.x0 == 0.0);
    CHECK(full.y0 == 0.0);
    CHECK(full.x1 == 1.0);
    CHECK(full.y1 == 1.0);

    const CornerBox half = to_corners(Box{0.25, 0.25, 0.5, 0.5});
    CHECK(half.x0 == 0.0);
    CHECK(half.y0 == 0.0);
    CHECK(half.x1 == 0.5);
    CHECK(half.y1 == 0.5);
}

TEST_CASE("corner round trip is identity up to one rounding step") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Box b = random_box(rng);
        const Box r = from_corners(to_corners(b));
        CHECK(std::abs(r.cx - b.cx) <= 1e-15);
        CHECK(std::abs(r.cy - b.cy) <= 1e-15);
        CHECK(std::abs(r.w - b.w) <= 1e-15);
        CHECK(std::abs(r.h - b.h) <= 1e-15);

        const CornerBox c = to_corners(random_box(rng));
        const CornerBox rc = to_corners(from_corners(c));
        CHECK(std::abs(rc.x0 - c.x0) <= 1e-15);
        CHECK(std::abs(rc.y0 - c.y0) <= 1e-15);
        CHECK(std::abs(rc.x1 - c.x1) <= 1e-15);
        CHECK(std::abs(rc.y1 - c.y1) <= 1e-15);
    }
}

TEST_CASE("non-finite coordinates are rejected") {
    CHECK_THROWS_AS(to_corners(Box{kNan, 0.5, 0.2, 0.2}), InvalidGeometryError);
    CHECK_THROWS_AS(to_corners(Box{0.5, 0.5, kInf, 0.2}), InvalidGeometryError);
    CHECK_THROWS_AS(from_corners(CornerBox{0.0, 0.0, kNan, 1.0}), InvalidGeometryError);
    CHECK_THROWS_AS(iou(CornerBox{0, 0, kInf, 1}, CornerBox{0, 0, 1, 1}), InvalidGeometryError);
    CHECK_THROWS_AS(giou(CornerBox{0, 0, 1, 1}, CornerBox{0, kNan, 1, 1}), InvalidGeometryError);
}

TEST_CASE("iou hand cases") {
    const CornerBox a{0.0, 0.0, 0.5, 0.5};
    CHECK(iou(a, a) == 1.0);

    const CornerBox apart{0.6, 0.6, 0.9, 0.9};
    CHECK(iou(a, apart) == 0.0);

    // Quarter overlap: intersection 0.25^2, union 2*0.25 - 0.0625.
    const CornerBox b{0.25, 0.25, 0.75, 0.75};
    CHECK(iou(a, b) == 0.0625 / 0.4375);
}

TEST_CASE("iou rejects a zero-area union") {
    const CornerBox point{0.3, 0.3, 0.3, 0.3};
    CHECK_THROWS_AS(iou(point, point), DegenerateGeometryError);
    CHECK_THROWS_AS(giou(point, point), DegenerateGeometryError);
}

TEST_CASE("giou hand cases") {
    const CornerBox a{0.0, 0.0, 0.5, 0.5};
    CHECK(giou(a, a) == 1.0);

    // Corner-touching boxes: iou 0, enclosing box the unit square, union 0.5.
    const CornerBox b{0.5, 0.5, 1.0, 1.0};
    CHECK(giou(a, b) == -0.5);
}

TEST_CASE("giou is symmetric and bounded by iou") {
    Rng rng(23);
    for (int i = 0; i < 1000; ++i) {
        const CornerBox a = to_corners(random_box(rng));
        const CornerBox b = to_corners(random_box(rng));
        const double g = giou(a, b);
        const double v = iou(a, b);
        CHECK(giou(b, a) == g);
        CHECK(g >= -1.0);
        CHECK(g <= v);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("iou and giou are translation invariant") {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const CornerBox a = to_corners(random_box(rng));
        const CornerBox b = to_corners(random_box(rng));
        const double dx = rng.uniform(-3.0, 3.0);
        const double dy = rng.uniform(-3.0, 3.0);
        const CornerBox as{a.x0 + dx, a.y0 + dy, a.x1 + dx, a.y1 + dy};
        const CornerBox bs{b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy};
        CHECK(std::abs(iou(as, bs) - iou(a, b)) <= 1e-12);
        CHECK(std::abs(giou(as, bs) - giou(a, b)) <= 1e-12);
    }
}

TEST_CASE("l1_distance sums center-size coordinate deltas") {
    const Box a{0.25, 0.25, 0.5, 0.5};
    const Box b{0.75, 0.75, 0.5, 0.5};
    CHECK(l1_distance(a, b) == 1.0);
    CHECK(l1_distance(b, a) == 1.0);
    CHECK(l1_distance(a, a) == 0.0);
}

TEST_CASE("pairwise_geometry matches scalar calls entrywise") {
    Rng rng(47);
    std::vector<Box> preds;
    std::vector<Box> targets;
    for (int i = 0; i < 10; ++i) preds.push_back(random_box(rng));
    for (int j = 0; j < 10; ++j) targets.push_back(random_box(rng));

    const PairwiseGeometry g = pairwise_geometry(preds, targets);
    REQUIRE(g.l1.rows == 10);
    REQUIRE(g.l1.cols == 10);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            CHECK(g.l1(i, j) == l1_distance(preds[i], targets[j]));
            CHECK(g.giou(i, j) == giou(to_corners(preds[i]), to_corners(targets[j])));
        }
    }
}

TEST_CASE("pairwise_geometry diagonal is zero for identical lists") {
    Rng rng(53);
    std::vector<Box> boxes;
    for (int i = 0; i < 6; ++i) boxes.push_back(random_box(rng));
    const PairwiseGeometry g = pairwise_geometry(boxes, boxes);
    for (int i = 0; i < 6; ++i) {
        CHECK(g.l1(i, i) == 0.0);
        CHECK(g.giou(i, i) == 1.0);
    }
}

TEST_CASE("pairwise_geometry single-pair hand case") {
    const std::vector<Box> preds{Box{0.25, 0.25, 0.5, 0.5}};
    const std::vector<Box> targets{Box{0.75, 0.75, 0.5, 0.5}};
    const PairwiseGeometry g = pairwise_geometry(preds, targets);
    REQUIRE(g.l1.rows == 1);
    REQUIRE(g.l1.cols == 1);
    CHECK(g.l1(0, 0) == 1.0);
    CHECK(g.giou(0, 0) == -0.5);
}

TEST_CASE("pairwise_geometry rejects empty predictions but not empty targets") {
    CHECK_THROWS_AS(pairwise_geometry({}, {Box{0.5, 0.5, 0.2, 0.2}}), InvalidGeometryError);

    const PairwiseGeometry g = pairwise_geometry({Box{0.5, 0.5, 0.2, 0.2}}, {});
    CHECK(g.l1.rows == 1);
    CHECK(g.l1.cols == 0);
    CHECK(g.giou.cols == 0);
}

TEST_CASE("giou_grad matches central finite differences") {
    Rng rng(61);
    const double h = 1e-6;
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
        const Box pred = random_box(rng);
        const Box target = random_box(rng);
        const GiouWithGrad g = giou_grad(pred, target);
        CHECK(g.value == giou(to_corners(pred), to_corners(target)));

        for (int k = 0; k < 4; ++k) {
            auto eval = [&](double delta) {
                Box p = pred;
                double* coord = k == 0 ? &p.cx : k == 1 ? &p.cy : k == 2 ? &p.w : &p.h;
                *coord += delta;
                return giou(to_corners(p), to_corners(target));
            };
            const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
            const double analytic = g.d_first[k];
            const double diff = std::abs(numeric - analytic);
            const bool ok = diff <= 1e-6 || diff <= 1e-4 * std::max(std::abs(numeric), std::abs(analytic));
            CHECK(ok);
            ++checked;
        }
    }
    CHECK(checked == 400);
}
