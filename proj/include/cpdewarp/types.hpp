#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cpdewarp/error.hpp"

namespace cpd {

/// Image-space coordinate: x is the column, y the row, origin top-left.
/// Pixel centres sit on integer coordinates.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
    Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double norm(const Point2& p) { return std::hypot(p.x, p.y); }

struct GridIndex {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Row-major lattice of vertices, at least 2x2.
class ControlGrid {
public:
    ControlGrid() = default;
    ControlGrid(int rows, int cols, std::vector<Point2> points);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return points_.size(); }

    const Point2& at(int r, int c) const { return points_[index(r, c)]; }
    Point2& at(int r, int c) { return points_[index(r, c)]; }
    std::span<const Point2> points() const noexcept { return points_; }
    std::span<Point2> points() noexcept { return points_; }

    bool contains(GridIndex idx) const {
        return idx.row >= 0 && idx.row < rows_ && idx.col >= 0 && idx.col < cols_;
    }
    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
               static_cast<std::size_t>(c);
    }

    friend bool operator==(const ControlGrid&, const ControlGrid&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Point2> points_;
};

/// Regular lattice described by its spacing and top-left origin.
struct ReferenceSpec {
    double v_interval = 0.0;  // vertical spacing (between rows)
    double h_interval = 0.0;  // horizontal spacing (between columns)
    Point2 origin;
    int rows = 0;
    int cols = 0;

    double span_width() const { return (cols - 1) * h_interval; }
    double span_height() const { return (rows - 1) * v_interval; }

    /// Throws InvalidSpec when intervals are not strictly positive or the
    /// lattice is smaller than 2x2.
    void validate() const;

    friend bool operator==(const ReferenceSpec&, const ReferenceSpec&) = default;
};

struct Size {
    int width = 0;
    int height = 0;
    friend bool operator==(const Size&, const Size&) = default;
};

/// For every output pixel, the source coordinate in the distorted image.
class BackwardMap {
public:
    BackwardMap() = default;
    BackwardMap(int width, int height);
    BackwardMap(int width, int height, std::vector<Point2> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Size size() const noexcept { return {width_, height_}; }

    const Point2& at(int row, int col) const { return data_[offset(row, col)]; }
    Point2& at(int row, int col) { return data_[offset(row, col)]; }
    std::span<const Point2> data() const noexcept { return data_; }
    std::span<Point2> data() noexcept { return data_; }
    std::span<Point2> row(int r) {
        return std::span<Point2>(data_).subspan(offset(r, 0), static_cast<std::size_t>(width_));
    }

    friend bool operator==(const BackwardMap&, const BackwardMap&) = default;

private:
    std::size_t offset(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<Point2> data_;
};

/// 8-bit interleaved image with 1 or 3 channels.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);
    ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    Size size() const noexcept { return {width_, height_}; }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t* pixel(int row, int col) { return data_.data() + offset(row, col); }
    const std::uint8_t* pixel(int row, int col) const { return data_.data() + offset(row, col); }
    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t offset(int r, int c) const {
        return (static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(c)) *
               static_cast<std::size_t>(channels_);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

}  // namespace cpd
