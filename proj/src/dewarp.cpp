#include "cpdewarp/dewarp.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "cpdewarp/grid.hpp"
#include "cpdewarp/kernels.hpp"

namespace cpd {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_pairing(const ControlGrid& control, const ReferenceSpec& reference) {
    if (control.rows() != reference.rows || control.cols() != reference.cols) {
        throw Error(ErrorCode::ShapeMismatch,
                    "control grid is " + std::to_string(control.rows()) + "x" +
                        std::to_string(control.cols()) + " but reference lattice is " +
                        std::to_string(reference.rows) + "x" + std::to_string(reference.cols));
    }
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::Tps ? "tps" : "linear"; }

Method parse_method(std::string_view s) {
    if (s == "tps") return Method::Tps;
    if (s == "linear") return Method::Linear;
    throw Error(ErrorCode::InvalidArgument,
                "unknown interpolation method '" + std::string(s) + "' (expected tps or linear)");
}

BackwardMap bilinear_mesh_map(const ReferenceSpec& reference, const ControlGrid& control,
                              int width, int height, Execution exec) {
    reference.validate();
    check_pairing(control, reference);
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "output size must be at least 1x1");
    }
    BackwardMap out(width, height);
    if (exec == Execution::Serial) {
        kernels::serial::mesh_map(reference, control, out);
    } else {
        kernels::omp::mesh_map(reference, control, out);
    }
    return out;
}

ImageBuffer remap(const ImageBuffer& image, const BackwardMap& map, Color fill, Execution exec) {
    if (image.empty()) throw Error(ErrorCode::InvalidArgument, "cannot remap an empty image");
    for (const auto& p : map.data()) {
        if (!p.finite()) throw Error(ErrorCode::InvalidArgument, "backward map has non-finite entries");
    }
    ImageBuffer out(map.width(), map.height(), image.channels());
    if (exec == Execution::Serial) {
        kernels::serial::remap(image, map, fill, out);
    } else {
        kernels::omp::remap(image, map, fill, out);
    }
    return out;
}

Size default_output_size(const ReferenceSpec& reference) {
    reference.validate();
    return {static_cast<int>(std::lround(reference.span_width())),
            static_cast<int>(std::lround(reference.span_height()))};
}

BackwardMap dewarp_map(const ControlGrid& control, const ReferenceSpec& reference,
                       const DewarpOptions& options, DewarpTiming* timing) {
    const auto t0 = Clock::now();
    reference.validate();
    check_pairing(control, reference);

    const Size natural = default_output_size(reference);
    if (natural.width < 1 || natural.height < 1) {
        throw Error(ErrorCode::InvalidSpec, "reference lattice span is smaller than one pixel");
    }
    const Size out = options.out_size.value_or(natural);
    if (out.width < 1 || out.height < 1) {
        throw Error(ErrorCode::InvalidResolution, "output size must be positive");
    }

    const ControlGrid sparse = subsample_grid(control, options.step);
    ReferenceSpec frame = subsample_reference(reference, options.step);
    frame.origin = {0.0, 0.0};
    if (out != natural) frame = rescale_reference(frame, natural, out);

    DewarpTiming t;
    BackwardMap map;
    if (options.method == Method::Linear) {
        const auto te = Clock::now();
        map = bilinear_mesh_map(frame, sparse, out.width, out.height, options.exec);
        t.eval_ms = ms_since(te);
    } else {
        const auto tf = Clock::now();
        const ControlGrid sites = build_reference_grid(frame);
        const TpsModel model = tps_fit(sites.points(), sparse.points(), options.lambda);
        t.fit_ms = ms_since(tf);
        const auto te = Clock::now();
        map = tps_evaluate(model, out.width, out.height, options.exec);
        t.eval_ms = ms_since(te);
    }
    t.total_ms = ms_since(t0);
    if (timing) *timing = t;
    return map;
}

ImageBuffer dewarp(const ImageBuffer& image, const ControlGrid& control,
                   const ReferenceSpec& reference, const DewarpOptions& options,
                   DewarpTiming* timing) {
    const auto t0 = Clock::now();
    DewarpTiming t;
    const BackwardMap map = dewarp_map(control, reference, options, &t);
    const auto tr = Clock::now();
    ImageBuffer out = remap(image, map, options.fill, options.exec);
    t.remap_ms = ms_since(tr);
    t.total_ms = ms_since(t0);
    if (timing) *timing = t;
    return out;
}

}  // namespace cpd
