#include "cpdewarp/losses.hpp"

#include <cmath>
#include <string>

namespace cpd::losses {

namespace {

void check_shapes(const PointSet& a, const PointSet& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "point sets differ in shape: " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
    }
}

void check_radius(int radius) {
    if (radius < 1) throw Error(ErrorCode::InvalidArgument, "correlation radius must be >= 1");
}

double smooth_l1_term(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_slope(double d) {
    if (std::abs(d) < 1.0) return d;
    return d > 0.0 ? 1.0 : -1.0;
}

double sign(double d) { return (d > 0.0) - (d < 0.0); }

// Invokes fn(r, c) for every neighbour of (row, col) within `radius` steps
// along the axes selected by `mode`.
template <typename Fn>
void for_each_neighbour(const PointSet& grid, int row, int col, Neighborhood mode, int radius,
                        Fn&& fn) {
    for (int k = 1; k <= radius; ++k) {
        if (mode != Neighborhood::Horizontal) {
            if (row - k >= 0) fn(row - k, col);
            if (row + k < grid.rows()) fn(row + k, col);
        }
        if (mode != Neighborhood::Vertical) {
            if (col - k >= 0) fn(row, col - k);
            if (col + k < grid.cols()) fn(row, col + k);
        }
    }
}

std::vector<Point2> all_deltas(const PointSet& grid, int radius) {
    std::vector<Point2> out;
    out.reserve(grid.size());
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            out.push_back(differential_coords(grid, {r, c}, Neighborhood::Full, radius));
        }
    }
    return out;
}

}  // namespace

double smooth_l1(const PointSet& pred, const PointSet& gt) {
    check_shapes(pred, gt);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Point2 d = pred.points()[i] - gt.points()[i];
        sum += smooth_l1_term(d.x) + smooth_l1_term(d.y);
    }
    return sum / static_cast<double>(pred.size());
}

Point2 differential_coords(const PointSet& grid, GridIndex index, Neighborhood mode, int radius) {
    check_radius(radius);
    if (!grid.contains(index)) {
        throw Error(ErrorCode::IndexOutOfRange, "vertex index outside the grid");
    }
    const Point2 centre = grid.at(index.row, index.col);
    Point2 delta;
    for_each_neighbour(grid, index.row, index.col, mode, radius, [&](int r, int c) {
        delta = delta + (grid.at(r, c) - centre);
    });
    return delta;
}

double correlation_loss(const PointSet& pred, const PointSet& gt, int radius) {
    check_shapes(pred, gt);
    check_radius(radius);
    const auto dp = all_deltas(pred, radius);
    const auto dg = all_deltas(gt, radius);
    double sum = 0.0;
    for (std::size_t i = 0; i < dp.size(); ++i) {
        const Point2 e = dp[i] - dg[i];
        sum += e.x * e.x + e.y * e.y;
    }
    return sum / static_cast<double>(dp.size());
}

double interval_loss(IntervalPair pred, IntervalPair gt) {
    return (std::abs(gt.v - pred.v) + std::abs(gt.h - pred.h)) / 2.0;
}

LossBreakdown total_loss(const PointSet& pred_pts, const PointSet& gt_pts, IntervalPair pred_int,
                         IntervalPair gt_int, LossWeights weights, int radius) {
    LossBreakdown b;
    b.smooth_l1 = smooth_l1(pred_pts, gt_pts);
    b.correlation = correlation_loss(pred_pts, gt_pts, radius);
    b.interval = interval_loss(pred_int, gt_int);
    b.total = b.smooth_l1 + weights.alpha * b.correlation + weights.beta * b.interval;
    return b;
}

LossGradient total_loss_gradient(const PointSet& pred_pts, const PointSet& gt_pts,
                                 IntervalPair pred_int, IntervalPair gt_int, LossWeights weights,
                                 int radius) {
    check_shapes(pred_pts, gt_pts);
    check_radius(radius);
    const double n = static_cast<double>(pred_pts.size());
    LossGradient g;
    g.points.resize(pred_pts.size());

    for (std::size_t i = 0; i < pred_pts.size(); ++i) {
        const Point2 d = pred_pts.points()[i] - gt_pts.points()[i];
        g.points[i] = Point2{smooth_l1_slope(d.x), smooth_l1_slope(d.y)} * (1.0 / n);
    }

    // delta_hat_i = sum_{j in N(i)} (p_j - p_i) and N is symmetric, so
    // dL_c/dp_m = 2/N * (sum_{i in N(m)} e_i - |N(m)| e_m).
    const auto dp = all_deltas(pred_pts, radius);
    const auto dg = all_deltas(gt_pts, radius);
    std::vector<Point2> err(dp.size());
    for (std::size_t i = 0; i < dp.size(); ++i) err[i] = dp[i] - dg[i];

    const double scale = weights.alpha * 2.0 / n;
    for (int r = 0; r < pred_pts.rows(); ++r) {
        for (int c = 0; c < pred_pts.cols(); ++c) {
            const std::size_t m = pred_pts.index(r, c);
            Point2 acc;
            int count = 0;
            for_each_neighbour(pred_pts, r, c, Neighborhood::Full, radius, [&](int nr, int nc) {
                acc = acc + err[pred_pts.index(nr, nc)];
                ++count;
            });
            acc = acc - err[m] * static_cast<double>(count);
            g.points[m] = g.points[m] + acc * scale;
        }
    }

    g.intervals.v = weights.beta * sign(pred_int.v - gt_int.v) / 2.0;
    g.intervals.h = weights.beta * sign(pred_int.h - gt_int.h) / 2.0;
    return g;
}

}  // namespace cpd::losses
