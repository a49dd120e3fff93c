#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "cpdewarp/parallel.hpp"
#include "cpdewarp/tps.hpp"
#include "cpdewarp/types.hpp"

namespace cpd {

/// Piecewise-bilinear backward map. Output pixel (j, i) is located in the
/// reference lattice (cell index clamped to the border cells) and the four
/// corner control points are blended with its bilinear weights.
BackwardMap bilinear_mesh_map(const ReferenceSpec& reference, const ControlGrid& control,
                              int width, int height, Execution exec = Execution::Parallel);

using Color = std::array<std::uint8_t, 3>;
inline constexpr Color kWhite{255, 255, 255};

/// Bilinear sampling of `image` through `map`. Samples outside
/// [0, w-1] x [0, h-1] take `fill`. Output dims equal map dims.
ImageBuffer remap(const ImageBuffer& image, const BackwardMap& map, Color fill = kWhite,
                  Execution exec = Execution::Parallel);

enum class Method { Tps, Linear };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct DewarpOptions {
    Method method = Method::Linear;
    int step = 1;
    std::optional<Size> out_size;
    Color fill = kWhite;
    double lambda = 0.0;
    Execution exec = Execution::Parallel;
};

struct DewarpTiming {
    double fit_ms = 0.0;
    double eval_ms = 0.0;
    double remap_ms = 0.0;
    double total_ms = 0.0;
};

/// Default rectified size: the reference lattice span, rounded.
Size default_output_size(const ReferenceSpec& reference);

/// Backward map from rectified output pixels to the distorted image.
/// The output frame places reference vertex (r, c) at
/// (c * h' * sx, r * v' * sy), sx and sy being out_size / span.
BackwardMap dewarp_map(const ControlGrid& control, const ReferenceSpec& reference,
                       const DewarpOptions& options, DewarpTiming* timing = nullptr);

ImageBuffer dewarp(const ImageBuffer& image, const ControlGrid& control,
                   const ReferenceSpec& reference, const DewarpOptions& options,
                   DewarpTiming* timing = nullptr);

}  // namespace cpd
