#include "hmatch/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "hmatch/errors.hpp"

namespace hmatch {

void check_finite(const Box& b) {
    if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) || !std::isfinite(b.h))
        throw InvalidGeometryError("box has non-finite coordinates");
}

void check_finite(const CornerBox& c) {
    if (!std::isfinite(c.x0) || !std::isfinite(c.y0) || !std::isfinite(c.x1) || !std::isfinite(c.y1))
        throw InvalidGeometryError("corner box has non-finite coordinates");
}

CornerBox to_corners(const Box& b) {
    check_finite(b);
    return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

Box from_corners(const CornerBox& c) {
    check_finite(c);
    return {(c.x0 + c.x1) / 2.0, (c.y0 + c.y1) / 2.0, c.x1 - c.x0, c.y1 - c.y0};
}

namespace {

double area(const CornerBox& b) {
    return (b.x1 - b.x0) * (b.y1 - b.y0);
}

double intersection_area(const CornerBox& a, const CornerBox& b) {
    const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return iw * ih;
}

}  // namespace

double iou(const CornerBox& a, const CornerBox& b) {
    check_finite(a);
    check_finite(b);
    const double inter = intersection_area(a, b);
    const double uni = area(a) + area(b) - inter;
    if (uni <= 0.0) throw DegenerateGeometryError("zero-area union in iou");
    return inter / uni;
}

double giou(const CornerBox& a, const CornerBox& b) {
    check_finite(a);
    check_finite(b);
    const double inter = intersection_area(a, b);
    const double uni = area(a) + area(b) - inter;
    if (uni <= 0.0) throw DegenerateGeometryError("zero-area union in giou");
    const double ew = std::max(a.x1, b.x1) - std::min(a.x0, b.x0);
    const double eh = std::max(a.y1, b.y1) - std::min(a.y0, b.y0);
    const double encl = ew * eh;
    if (encl <= 0.0) throw DegenerateGeometryError("zero-area enclosing box in giou");
    // encl >= uni mathematically; the clamp keeps giou <= iou exact when
    // containment makes the difference round negative.
    return inter / uni - std::max(0.0, encl - uni) / encl;
}

double l1_distance(const Box& a, const Box& b) {
    return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
           std::abs(a.h - b.h);
}

GiouWithGrad giou_grad(const Box& pred, const Box& target) {
    const CornerBox p = to_corners(pred);
    const CornerBox t = to_corners(target);

    const double pw = p.x1 - p.x0, ph = p.y1 - p.y0;
    const double area_p = pw * ph;
    const double area_t = (t.x1 - t.x0) * (t.y1 - t.y0);

    const double ix0 = std::max(p.x0, t.x0), iy0 = std::max(p.y0, t.y0);
    const double ix1 = std::min(p.x1, t.x1), iy1 = std::min(p.y1, t.y1);
    const double iw = ix1 - ix0, ih = iy1 - iy0;
    const bool overlap = iw > 0.0 && ih > 0.0;
    const double inter = overlap ? iw * ih : 0.0;

    const double uni = area_p + area_t - inter;
    const double ex0 = std::min(p.x0, t.x0), ey0 = std::min(p.y0, t.y0);
    const double ex1 = std::max(p.x1, t.x1), ey1 = std::max(p.y1, t.y1);
    const double ew = ex1 - ex0, eh = ey1 - ey0;
    const double encl = ew * eh;
    if (uni <= 0.0 || encl <= 0.0)
        throw DegenerateGeometryError("degenerate boxes in giou_grad");

    // Derivatives of intersection / union / enclosing area with respect to
    // the pred corners (x0, y0, x1, y1).
    std::array<double, 4> d_inter{}, d_union{}, d_encl{};
    if (overlap) {
        if (p.x0 > t.x0) d_inter[0] = -ih;
        if (p.y0 > t.y0) d_inter[1] = -iw;
        if (p.x1 < t.x1) d_inter[2] = ih;
        if (p.y1 < t.y1) d_inter[3] = iw;
    }
    const std::array<double, 4> d_area_p = {-ph, -pw, ph, pw};
    for (int k = 0; k < 4; ++k) d_union[k] = d_area_p[k] - d_inter[k];
    if (p.x0 < t.x0) d_encl[0] = -eh;
    if (p.y0 < t.y0) d_encl[1] = -ew;
    if (p.x1 > t.x1) d_encl[2] = eh;
    if (p.y1 > t.y1) d_encl[3] = ew;

    GiouWithGrad out;
    out.value = inter / uni - std::max(0.0, encl - uni) / encl;

    // d(giou) = d(inter/uni) + d(uni/encl), in corner coordinates first.
    std::array<double, 4> d_corner{};
    for (int k = 0; k < 4; ++k) {
        const double d_iou = (d_inter[k] * uni - inter * d_union[k]) / (uni * uni);
        const double d_ratio = (d_union[k] * encl - uni * d_encl[k]) / (encl * encl);
        d_corner[k] = d_iou + d_ratio;
    }

    // Chain through x0 = cx - w/2, x1 = cx + w/2 (same for y).
    out.d_first[0] = d_corner[0] + d_corner[2];
    out.d_first[1] = d_corner[1] + d_corner[3];
    out.d_first[2] = 0.5 * (d_corner[2] - d_corner[0]);
    out.d_first[3] = 0.5 * (d_corner[3] - d_corner[1]);
    return out;
}

PairwiseGeometry pairwise_geometry(const std::vector<Box>& preds,
                                   const std::vector<Box>& targets) {
    if (preds.empty()) throw InvalidGeometryError("pairwise_geometry: empty prediction list");
    const int rows = static_cast<int>(preds.size());
    const int cols = static_cast<int>(targets.size());
    PairwiseGeometry out;
    out.l1 = Mat(rows, cols);
    out.giou = Mat(rows, cols);
    if (cols == 0) return out;

    std::vector<CornerBox> target_corners(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) target_corners[j] = to_corners(targets[j]);

    for (int i = 0; i < rows; ++i) {
        const CornerBox pc = to_corners(preds[i]);
        for (int j = 0; j < cols; ++j) {
            out.l1(i, j) = l1_distance(preds[i], targets[static_cast<std::size_t>(j)]);
            out.giou(i, j) = giou(pc, target_corners[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

}  // namespace hmatch
