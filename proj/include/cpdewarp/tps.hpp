#pragma once

#include <array>
#include <span>
#include <vector>

#include "cpdewarp/parallel.hpp"
#include "cpdewarp/types.hpp"

namespace cpd {

/// Radial basis r^2 ln r of the 2-D thin-plate spline, U(0) = 0.
double tps_kernel(double r);

/// Fitted thin-plate spline mapping site coordinates to target coordinates.
///
/// The solve runs in a normalized frame (sites and targets mapped to a unit
/// box); weights() and affine() are reported in that frame. evaluate()
/// accepts and returns plain pixel coordinates.
class TpsModel {
public:
    Point2 evaluate(Point2 p) const;

    std::span<const Point2> sites() const noexcept { return sites_; }
    std::span<const Point2> weights() const noexcept { return weights_; }
    /// Rows are output x and y; columns multiply (1, x, y).
    const std::array<std::array<double, 3>, 2>& affine() const noexcept { return affine_; }
    double regularization() const noexcept { return lambda_; }

    /// Largest |sum w|, |sum w*x|, |sum w*y| over both outputs.
    double side_condition_residual() const;

    struct Frame {
        Point2 offset;
        double scale = 1.0;
        Point2 to_unit(Point2 p) const { return (p - offset) * (1.0 / scale); }
        Point2 from_unit(Point2 p) const { return p * scale + offset; }
    };
    const Frame& site_frame() const noexcept { return site_frame_; }
    const Frame& target_frame() const noexcept { return target_frame_; }
    std::span<const Point2> unit_sites() const noexcept { return unit_sites_; }

private:
    friend TpsModel tps_fit(std::span<const Point2>, std::span<const Point2>, double);

    std::vector<Point2> sites_;
    std::vector<Point2> unit_sites_;
    std::vector<Point2> weights_;
    std::array<std::array<double, 3>, 2> affine_{};
    Frame site_frame_;
    Frame target_frame_;
    double lambda_ = 0.0;
};

/// Fit f with f(sites[i]) ~= targets[i]; lambda = 0 interpolates exactly.
/// Throws DegenerateConfiguration for fewer than 3 sites, duplicate or
/// collinear sites, or an ill-conditioned system.
TpsModel tps_fit(std::span<const Point2> sites, std::span<const Point2> targets,
                 double lambda = 0.0);

/// Dense evaluation at every integer pixel (x = column, y = row).
BackwardMap tps_evaluate(const TpsModel& model, int width, int height,
                         Execution exec = Execution::Parallel);

}  // namespace cpd
