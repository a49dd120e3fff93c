#pragma once

#include <vector>

#include "cpdewarp/types.hpp"

namespace cpd::metrics {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
    std::vector<double> scale_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    void validate() const;
};

/// Mean local SSIM over the valid (fully windowed) region. Colour input is
/// converted to BT.601 luma first.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

/// Multi-scale SSIM: contrast-structure terms at every scale but the last,
/// full SSIM at the coarsest, each clamped at zero and raised to its weight.
/// Images must be at least 2^(scales-1) * window on each side.
double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params = {});

/// Same measures on luma planes (row-major, width*height doubles).
double ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
            const SsimParams& params = {});
double ms_ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
               const SsimParams& params = {});

struct EndpointError {
    double mean_px = 0.0;
    double max_px = 0.0;
};

EndpointError map_endpoint_error(const BackwardMap& pred, const BackwardMap& gt);

}  // namespace cpd::metrics
