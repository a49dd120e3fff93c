#pragma once

#include <vector>

#include "cpdewarp/types.hpp"

namespace cpd::losses {

/// Prediction or ground truth; shapes must match when compared.
using PointSet = ControlGrid;

struct IntervalPair {
    double v = 0.0;
    double h = 0.0;
};

struct LossWeights {
    double alpha = 0.1;  // correlation term
    double beta = 0.01;  // interval term
};

enum class Neighborhood { Vertical, Horizontal, Full };

/// Default correlation reach: 4 vertices per direction (k = 17 with centre).
inline constexpr int kWideRadius = 4;

/// Mean over vertices of the per-vertex smooth-L1 sum over x and y.
double smooth_l1(const PointSet& pred, const PointSet& gt);

/// Sum of offsets from vertex `index` to its lattice neighbours within
/// `radius` steps along the selected axes. Neighbours past the border are
/// omitted.
Point2 differential_coords(const PointSet& grid, GridIndex index, Neighborhood mode, int radius);

/// Mean over vertices of |delta_i - delta_hat_i|^2, deltas in Full mode.
double correlation_loss(const PointSet& pred, const PointSet& gt, int radius = kWideRadius);

/// (|v - v_hat| + |h - h_hat|) / 2
double interval_loss(IntervalPair pred, IntervalPair gt);

struct LossBreakdown {
    double smooth_l1 = 0.0;
    double correlation = 0.0;
    double interval = 0.0;
    double total = 0.0;
};

LossBreakdown total_loss(const PointSet& pred_pts, const PointSet& gt_pts, IntervalPair pred_int,
                         IntervalPair gt_int, LossWeights weights = {}, int radius = kWideRadius);

struct LossGradient {
    std::vector<Point2> points;  // d total / d predicted point, row-major
    IntervalPair intervals;      // d total / d predicted (v, h)
};

/// Analytic gradient of total_loss with respect to the predictions.
/// At |d| == 1 the smooth-L1 slope is sign(d); at a zero interval residual
/// the L1 slope is 0.
LossGradient total_loss_gradient(const PointSet& pred_pts, const PointSet& gt_pts,
                                 IntervalPair pred_int, IntervalPair gt_int,
                                 LossWeights weights = {}, int radius = kWideRadius);

}  // namespace cpd::losses
