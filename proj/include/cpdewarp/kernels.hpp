#pragma once

#include <array>
#include <span>

#include "cpdewarp/tps.hpp"
#include "cpdewarp/types.hpp"

// Dense per-pixel kernels. Each lives twice: a plain serial loop kept as the
// reference, and an OpenMP row-parallel version. Both write every output
// element independently, so results match bit for bit.
namespace cpd::kernels {

namespace serial {
void tps_evaluate(const TpsModel& model, BackwardMap& out);
void mesh_map(const ReferenceSpec& reference, const ControlGrid& control, BackwardMap& out);
void remap(const ImageBuffer& src, const BackwardMap& map, std::array<std::uint8_t, 3> fill,
           ImageBuffer& out);
}  // namespace serial

namespace omp {
void tps_evaluate(const TpsModel& model, BackwardMap& out);
void mesh_map(const ReferenceSpec& reference, const ControlGrid& control, BackwardMap& out);
void remap(const ImageBuffer& src, const BackwardMap& map, std::array<std::uint8_t, 3> fill,
           ImageBuffer& out);
}  // namespace omp

// Per-element and per-row helpers shared by both variants.
Point2 tps_at(const TpsModel& model, double x, double y);
Point2 mesh_at(const ReferenceSpec& reference, const ControlGrid& control, double x, double y);

/// Output row `i` of the dense TPS map. Site-major loop over a row buffer so
/// the kernel logarithm vectorizes; agrees with tps_at up to libm rounding.
void tps_row(const TpsModel& model, int i, std::span<Point2> row);
void mesh_row(const ReferenceSpec& reference, const ControlGrid& control, int i,
              std::span<Point2> row);
void sample_bilinear(const ImageBuffer& src, double x, double y, std::array<std::uint8_t, 3> fill,
                     std::uint8_t* out);

}  // namespace cpd::kernels
