#include "cpdewarp/types.hpp"

#include <string>

namespace cpd {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::InvalidStep: return "InvalidStep";
        case ErrorCode::InvalidResolution: return "InvalidResolution";
        case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
        case ErrorCode::RetryableDegenerate: return "RetryableDegenerate";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Format: return "Format";
    }
    return "Unknown";
}

ControlGrid::ControlGrid(int rows, int cols, std::vector<Point2> points)
    : rows_(rows), cols_(cols), points_(std::move(points)) {
    if (rows < 2 || cols < 2) {
        throw Error(ErrorCode::InvalidArgument,
                    "control grid needs rows >= 2 and cols >= 2, got " + std::to_string(rows) +
                        "x" + std::to_string(cols));
    }
    if (points_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw Error(ErrorCode::ShapeMismatch, "control grid expects " +
                                                  std::to_string(rows * cols) + " points, got " +
                                                  std::to_string(points_.size()));
    }
    for (const auto& p : points_) {
        if (!p.finite()) throw Error(ErrorCode::InvalidArgument, "control point is not finite");
    }
}

void ReferenceSpec::validate() const {
    if (!(v_interval > 0.0) || !(h_interval > 0.0) || !std::isfinite(v_interval) ||
        !std::isfinite(h_interval)) {
        throw Error(ErrorCode::InvalidSpec, "reference intervals must be positive and finite");
    }
    if (rows < 2 || cols < 2) {
        throw Error(ErrorCode::InvalidSpec, "reference lattice needs rows >= 2 and cols >= 2");
    }
    if (!origin.finite()) throw Error(ErrorCode::InvalidSpec, "reference origin is not finite");
}

BackwardMap::BackwardMap(int width, int height)
    : BackwardMap(width, height,
                  std::vector<Point2>(static_cast<std::size_t>(width > 0 ? width : 0) *
                                      static_cast<std::size_t>(height > 0 ? height : 0))) {}

BackwardMap::BackwardMap(int width, int height, std::vector<Point2> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "backward map dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error(ErrorCode::ShapeMismatch, "backward map data size does not match dimensions");
    }
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::uint8_t fill)
    : ImageBuffer(width, height, channels,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(width > 0 ? width : 0) *
                                                static_cast<std::size_t>(height > 0 ? height : 0) *
                                                static_cast<std::size_t>(channels > 0 ? channels : 0),
                                            fill)) {}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw Error(ErrorCode::InvalidArgument, "images have 1 or 3 channels");
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                            static_cast<std::size_t>(channels)) {
        throw Error(ErrorCode::ShapeMismatch, "image data size does not match dimensions");
    }
}

}  // namespace cpd
