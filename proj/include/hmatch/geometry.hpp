#pragma once

#include <array>
#include <vector>

#include "hmatch/mat.hpp"

namespace hmatch {

// Normalized center-size rectangle. Ground truth lives in [0,1]^2 with
// positive extent; predicted boxes may drift outside the frame during
// training but must stay finite.
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

// Corner form used for all IoU arithmetic.
struct CornerBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
};

CornerBox to_corners(const Box& b);
Box from_corners(const CornerBox& c);

// Throws InvalidGeometryError on non-finite coordinates.
void check_finite(const Box& b);
void check_finite(const CornerBox& c);

// Intersection over union in [0,1]. Throws DegenerateGeometryError when the
// union has zero area.
double iou(const CornerBox& a, const CornerBox& b);

// Generalized IoU in [-1,1]: iou minus the empty fraction of the smallest
// enclosing box. Throws DegenerateGeometryError when the enclosing box has
// zero area.
double giou(const CornerBox& a, const CornerBox& b);

// Sum of |delta| over the four center-size coordinates.
double l1_distance(const Box& a, const Box& b);

// giou plus its derivative with respect to the first box's center-size
// coordinates (cx, cy, w, h). Min/max kinks take the one-sided derivative.
struct GiouWithGrad {
    double value = 0.0;
    std::array<double, 4> d_first{};
};
GiouWithGrad giou_grad(const Box& pred, const Box& target);

// Pairwise |preds| x |targets| matrices of center-size L1 distance and giou.
// An empty target list yields matrices with zero columns.
struct PairwiseGeometry {
    Mat l1;
    Mat giou;
};
PairwiseGeometry pairwise_geometry(const std::vector<Box>& preds, const std::vector<Box>& targets);

}  // namespace hmatch
