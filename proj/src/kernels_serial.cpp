#include <algorithm>
#include <cmath>

#include <vector>

#include "cpdewarp/kernels.hpp"

// Vector variants of log come from glibc's libmvec; this TU is built with
// -fno-math-errno so the site loop below can call them.
extern "C" {
#pragma omp declare simd notinbranch
double log(double);
}

namespace cpd::kernels {

namespace {

__attribute__((target_clones("avx512f", "avx2", "default")))
void accumulate_sites(const double* ux, int n, const Point2* sites, const Point2* weights,
                      std::size_t count, double uy, double* fx, double* fy) {
    for (std::size_t k = 0; k < count; ++k) {
        const double sx = sites[k].x;
        const double dy = uy - sites[k].y;
        const double dy2 = dy * dy;
        const double wx = weights[k].x;
        const double wy = weights[k].y;
#pragma omp simd
        for (int j = 0; j < n; ++j) {
            const double dx = ux[j] - sx;
            const double r2 = dx * dx + dy2;
            // r^2 ln r == 0.5 r^2 ln r^2, and 0 at the site itself
            const double u = 0.5 * r2 * log(r2 > 0.0 ? r2 : 1.0);
            fx[j] += wx * u;
            fy[j] += wy * u;
        }
    }
}

}  // namespace

Point2 tps_at(const TpsModel& model, double x, double y) {
    const auto& frame = model.site_frame();
    const double inv = 1.0 / frame.scale;
    const double ux = (x - frame.offset.x) * inv;
    const double uy = (y - frame.offset.y) * inv;
    const auto& a = model.affine();
    double fx = a[0][0] + a[0][1] * ux + a[0][2] * uy;
    double fy = a[1][0] + a[1][1] * ux + a[1][2] * uy;
    const auto sites = model.unit_sites();
    const auto weights = model.weights();
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const double dx = ux - sites[k].x;
        const double dy = uy - sites[k].y;
        const double r2 = dx * dx + dy * dy;
        if (r2 > 0.0) {
            // r^2 ln r == 0.5 r^2 ln r^2
            const double u = 0.5 * r2 * std::log(r2);
            fx += weights[k].x * u;
            fy += weights[k].y * u;
        }
    }
    return model.target_frame().from_unit({fx, fy});
}

Point2 mesh_at(const ReferenceSpec& reference, const ControlGrid& control, double x, double y) {
    const double gx = (x - reference.origin.x) / reference.h_interval;
    const double gy = (y - reference.origin.y) / reference.v_interval;
    const int c = std::clamp(static_cast<int>(std::floor(gx)), 0, control.cols() - 2);
    const int r = std::clamp(static_cast<int>(std::floor(gy)), 0, control.rows() - 2);
    const double u = gx - c;
    const double v = gy - r;
    const Point2& p00 = control.at(r, c);
    const Point2& p01 = control.at(r, c + 1);
    const Point2& p10 = control.at(r + 1, c);
    const Point2& p11 = control.at(r + 1, c + 1);
    const double w00 = (1.0 - u) * (1.0 - v);
    const double w01 = u * (1.0 - v);
    const double w10 = (1.0 - u) * v;
    const double w11 = u * v;
    return {w00 * p00.x + w01 * p01.x + w10 * p10.x + w11 * p11.x,
            w00 * p00.y + w01 * p01.y + w10 * p10.y + w11 * p11.y};
}

void tps_row(const TpsModel& model, int i, std::span<Point2> row) {
    const auto& frame = model.site_frame();
    const double inv = 1.0 / frame.scale;
    const double uy = (i - frame.offset.y) * inv;
    const auto& a = model.affine();
    const int n = static_cast<int>(row.size());
    std::vector<double> buf(3 * row.size());
    double* ux = buf.data();
    double* fx = ux + n;
    double* fy = fx + n;
    for (int j = 0; j < n; ++j) {
        ux[j] = (j - frame.offset.x) * inv;
        fx[j] = a[0][0] + a[0][1] * ux[j] + a[0][2] * uy;
        fy[j] = a[1][0] + a[1][1] * ux[j] + a[1][2] * uy;
    }
    accumulate_sites(ux, n, model.unit_sites().data(), model.weights().data(), model.weights().size(), uy,
                     fx, fy);
    const auto& target = model.target_frame();
    for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = target.from_unit({fx[j], fy[j]});
}

void mesh_row(const ReferenceSpec& reference, const ControlGrid& control, int i, std::span<Point2> row) {
    const double gy = (i - reference.origin.y) / reference.v_interval;
    const int r = std::clamp(static_cast<int>(std::floor(gy)), 0, control.rows() - 2);
    const double v = gy - r;
    const int last_c = control.cols() - 2;
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double gx = (static_cast<double>(j) - reference.origin.x) / reference.h_interval;
        const int c = std::clamp(static_cast<int>(std::floor(gx)), 0, last_c);
        const double u = gx - c;
        const Point2& p00 = control.at(r, c);
        const Point2& p01 = control.at(r, c + 1);
        const Point2& p10 = control.at(r + 1, c);
        const Point2& p11 = control.at(r + 1, c + 1);
        const double w00 = (1.0 - u) * (1.0 - v);
        const double w01 = u * (1.0 - v);
        const double w10 = (1.0 - u) * v;
        const double w11 = u * v;
        row[j] = {w00 * p00.x + w01 * p01.x + w10 * p10.x + w11 * p11.x,
                  w00 * p00.y + w01 * p01.y + w10 * p10.y + w11 * p11.y};
    }
}

void sample_bilinear(const ImageBuffer& src, double x, double y, std::array<std::uint8_t, 3> fill,
                     std::uint8_t* out) {
    const int ch = src.channels();
    const int w = src.width();
    const int h = src.height();
    if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) {
        for (int k = 0; k < ch; ++k) out[k] = fill[static_cast<std::size_t>(k)];
        return;
    }
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const double ax = x - x0;
    const double ay = y - y0;
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const std::uint8_t* a = src.pixel(y0, x0);
    const std::uint8_t* b = src.pixel(y0, x1);
    const std::uint8_t* c = src.pixel(y1, x0);
    const std::uint8_t* d = src.pixel(y1, x1);
    for (int k = 0; k < ch; ++k) {
        const double top = (1.0 - ax) * a[k] + ax * b[k];
        const double bottom = (1.0 - ax) * c[k] + ax * d[k];
        const double v = (1.0 - ay) * top + ay * bottom;
        out[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
}

namespace serial {

void tps_evaluate(const TpsModel& model, BackwardMap& out) {
    for (int i = 0; i < out.height(); ++i) tps_row(model, i, out.row(i));
}

void mesh_map(const ReferenceSpec& reference, const ControlGrid& control, BackwardMap& out) {
    for (int i = 0; i < out.height(); ++i) mesh_row(reference, control, i, out.row(i));
}

void remap(const ImageBuffer& src, const BackwardMap& map, std::array<std::uint8_t, 3> fill,
           ImageBuffer& out) {
    for (int i = 0; i < map.height(); ++i) {
        for (int j = 0; j < map.width(); ++j) {
            const Point2& p = map.at(i, j);
            sample_bilinear(src, p.x, p.y, fill, out.pixel(i, j));
        }
    }
}

}  // namespace serial
}  // namespace cpd::kernels
