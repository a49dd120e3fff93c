#include "cpdewarp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

namespace cpd {

namespace {

std::string steps_text(const std::vector<int>& steps) {
    std::string s = "{";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(steps[i]);
    }
    return s + "}";
}

void check_step(const ControlGrid& grid, int row_step, int col_step) {
    const bool row_bad = row_step < 1 || (grid.rows() - 1) % row_step != 0;
    const bool col_bad = col_step < 1 || (grid.cols() - 1) % col_step != 0;
    if (!row_bad && !col_bad) return;
    // With independent steps, report the admissible steps of the failing axis.
    auto steps = row_step == col_step ? valid_steps(grid.rows(), grid.cols())
                 : row_bad            ? valid_steps(grid.rows())
                                      : valid_steps(grid.cols());
    throw Error(ErrorCode::InvalidStep,
                "step " + std::to_string(row_step) +
                    (row_step == col_step ? "" : "x" + std::to_string(col_step)) + " is not valid for a " +
                    std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()) +
                    " grid; valid steps: " + steps_text(steps),
                std::move(steps));
}

void check_resolution(Size s) {
    if (s.width <= 0 || s.height <= 0) {
        throw Error(ErrorCode::InvalidResolution, "resolution must be positive, got " +
                                                      std::to_string(s.width) + "x" +
                                                      std::to_string(s.height));
    }
}

}  // namespace

ControlGrid build_reference_grid(const ReferenceSpec& spec) {
    spec.validate();
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(spec.rows) * static_cast<std::size_t>(spec.cols));
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            pts.push_back({spec.origin.x + c * spec.h_interval, spec.origin.y + r * spec.v_interval});
        }
    }
    return ControlGrid(spec.rows, spec.cols, std::move(pts));
}

std::vector<int> valid_steps(int side) { return valid_steps(side, side); }

std::vector<int> valid_steps(int rows, int cols) {
    std::vector<int> steps;
    if (rows < 2 || cols < 2) return steps;
    const int g = std::gcd(rows - 1, cols - 1);
    for (int s = 1; s <= g; ++s) {
        if (g % s == 0) steps.push_back(s);
    }
    return steps;
}

ControlGrid subsample_grid(const ControlGrid& grid, int step) {
    return subsample_grid(grid, step, step);
}

ControlGrid subsample_grid(const ControlGrid& grid, int row_step, int col_step) {
    check_step(grid, row_step, col_step);
    const int rows = (grid.rows() - 1) / row_step + 1;
    const int cols = (grid.cols() - 1) / col_step + 1;
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) pts.push_back(grid.at(r * row_step, c * col_step));
    }
    return ControlGrid(rows, cols, std::move(pts));
}

ReferenceSpec subsample_reference(const ReferenceSpec& spec, int step) {
    return subsample_reference(spec, step, step);
}

ReferenceSpec subsample_reference(const ReferenceSpec& spec, int row_step, int col_step) {
    spec.validate();
    if (row_step < 1 || col_step < 1 || (spec.rows - 1) % row_step || (spec.cols - 1) % col_step) {
        auto steps = valid_steps(spec.rows, spec.cols);
        throw Error(ErrorCode::InvalidStep,
                    "step is not valid for the reference lattice; valid steps: " + steps_text(steps),
                    std::move(steps));
    }
    ReferenceSpec out = spec;
    out.rows = (spec.rows - 1) / row_step + 1;
    out.cols = (spec.cols - 1) / col_step + 1;
    out.v_interval = spec.v_interval * row_step;
    out.h_interval = spec.h_interval * col_step;
    return out;
}

BoundaryRing boundary_only(const ControlGrid& grid) {
    BoundaryRing ring;
    const int R = grid.rows();
    const int C = grid.cols();
    for (int c = 0; c < C; ++c) ring.indices.push_back({0, c});
    for (int r = 1; r < R; ++r) ring.indices.push_back({r, C - 1});
    for (int c = C - 2; c >= 0; --c) ring.indices.push_back({R - 1, c});
    for (int r = R - 2; r >= 1; --r) ring.indices.push_back({r, 0});

    const int n = static_cast<int>(ring.indices.size());
    ring.points.reserve(ring.indices.size());
    for (const auto& idx : ring.indices) ring.points.push_back(grid.at(idx.row, idx.col));
    for (int i = 0; i < n; ++i) ring.edges.emplace_back(i, (i + 1) % n);
    return ring;
}

ControlGrid rescale_points(const ControlGrid& grid, Size old_res, Size new_res) {
    check_resolution(old_res);
    check_resolution(new_res);
    const double sx = static_cast<double>(new_res.width) / old_res.width;
    const double sy = static_cast<double>(new_res.height) / old_res.height;
    std::vector<Point2> pts(grid.points().begin(), grid.points().end());
    for (auto& p : pts) p = {p.x * sx, p.y * sy};
    return ControlGrid(grid.rows(), grid.cols(), std::move(pts));
}

ReferenceSpec rescale_reference(const ReferenceSpec& spec, Size old_res, Size new_res) {
    check_resolution(old_res);
    check_resolution(new_res);
    const double sx = static_cast<double>(new_res.width) / old_res.width;
    const double sy = static_cast<double>(new_res.height) / old_res.height;
    ReferenceSpec out = spec;
    out.origin = {spec.origin.x * sx, spec.origin.y * sy};
    out.h_interval = spec.h_interval * sx;
    out.v_interval = spec.v_interval * sy;
    return out;
}

ControlGrid propagate_drag(const ControlGrid& grid, GridIndex index, Point2 new_pos,
                           double falloff_radius) {
    if (!grid.contains(index)) {
        throw Error(ErrorCode::IndexOutOfRange, "vertex (" + std::to_string(index.row) + "," +
                                                    std::to_string(index.col) +
                                                    ") is outside the grid");
    }
    if (!new_pos.finite()) throw Error(ErrorCode::InvalidArgument, "drag target is not finite");
    if (!(falloff_radius >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "falloff radius must be >= 0");
    }
    ControlGrid out = grid;
    const Point2 delta = new_pos - grid.at(index.row, index.col);
    out.at(index.row, index.col) = new_pos;
    if (falloff_radius == 0.0) return out;

    const double sigma = falloff_radius / 2.0;
    const int reach = static_cast<int>(std::floor(falloff_radius));
    for (int r = index.row - reach; r <= index.row + reach; ++r) {
        for (int c = index.col - reach; c <= index.col + reach; ++c) {
            if (!grid.contains({r, c}) || (r == index.row && c == index.col)) continue;
            const int d = std::max(std::abs(r - index.row), std::abs(c - index.col));
            const double w = std::exp(-(d * d) / (2.0 * sigma * sigma));
            out.at(r, c) = grid.at(r, c) + delta * w;
        }
    }
    return out;
}

}  // namespace cpd
