#pragma once

#include <utility>
#include <vector>

#include "cpdewarp/types.hpp"

namespace cpd {

ControlGrid build_reference_grid(const ReferenceSpec& spec);

/// Steps that evenly divide a side of `side` vertices, ascending.
std::vector<int> valid_steps(int side);

/// Steps usable on both axes of a rows x cols lattice.
std::vector<int> valid_steps(int rows, int cols);

/// Keep every step-th row and column, boundaries included.
/// Throws InvalidStep (carrying the valid steps) when step does not divide
/// rows-1 and cols-1.
ControlGrid subsample_grid(const ControlGrid& grid, int step);
ControlGrid subsample_grid(const ControlGrid& grid, int row_step, int col_step);

/// Reference lattice matching subsample_grid with the same steps.
ReferenceSpec subsample_reference(const ReferenceSpec& spec, int step);
ReferenceSpec subsample_reference(const ReferenceSpec& spec, int row_step, int col_step);

struct BoundaryRing {
    std::vector<GridIndex> indices;  // clockwise from the top-left corner
    std::vector<Point2> points;
    std::vector<std::pair<int, int>> edges;  // consecutive ring positions, closed
};

BoundaryRing boundary_only(const ControlGrid& grid);

/// Scale every coordinate by new/old per axis.
ControlGrid rescale_points(const ControlGrid& grid, Size old_res, Size new_res);
ReferenceSpec rescale_reference(const ReferenceSpec& spec, Size old_res, Size new_res);

/// Move one vertex to `new_pos` and drag its lattice neighbours along with a
/// Gaussian falloff over Chebyshev index distance. Radius 0 moves only the
/// selected vertex.
ControlGrid propagate_drag(const ControlGrid& grid, GridIndex index, Point2 new_pos,
                           double falloff_radius);

}  // namespace cpd
