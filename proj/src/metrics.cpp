#include "cpdewarp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpdewarp/image_io.hpp"

namespace cpd::metrics {

namespace {

struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;
    double at(int r, int c) const {
        return v[static_cast<std::size_t>(r) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(c)];
    }
};

std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> g(static_cast<std::size_t>(size));
    const double centre = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - centre;
        g[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (auto& x : g) x /= sum;
    return g;
}

// Separable filtering keeping only fully covered positions.
Plane filter_valid(const Plane& in, const std::vector<double>& taps) {
    const int k = static_cast<int>(taps.size());
    Plane tmp{in.width - k + 1, in.height, {}};
    tmp.v.resize(static_cast<std::size_t>(tmp.width) * static_cast<std::size_t>(tmp.height));
    for (int r = 0; r < tmp.height; ++r) {
        for (int c = 0; c < tmp.width; ++c) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += taps[static_cast<std::size_t>(t)] * in.at(r, c + t);
            tmp.v[static_cast<std::size_t>(r) * static_cast<std::size_t>(tmp.width) +
                  static_cast<std::size_t>(c)] = acc;
        }
    }
    Plane out{tmp.width, in.height - k + 1, {}};
    out.v.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += taps[static_cast<std::size_t>(t)] * tmp.at(r + t, c);
            out.v[static_cast<std::size_t>(r) * static_cast<std::size_t>(out.width) +
                  static_cast<std::size_t>(c)] = acc;
        }
    }
    return out;
}

struct SsimTerms {
    double ssim = 0.0;  // mean of luminance * contrast-structure
    double cs = 0.0;    // mean of contrast-structure
};

SsimTerms ssim_terms(const Plane& x, const Plane& y, const SsimParams& p) {
    if (x.width < p.window || x.height < p.window) {
        throw Error(ErrorCode::InvalidArgument, "image is smaller than the SSIM window");
    }
    const auto taps = gaussian_taps(p.window, p.sigma);
    Plane xy{x.width, x.height, std::vector<double>(x.v.size())};
    Plane sq{x.width, x.height, std::vector<double>(x.v.size())};
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        xy.v[i] = x.v[i] * y.v[i];
        sq.v[i] = x.v[i] * x.v[i] + y.v[i] * y.v[i];
    }
    const Plane mx = filter_valid(x, taps);
    const Plane my = filter_valid(y, taps);
    const Plane mxy = filter_valid(xy, taps);
    const Plane msq = filter_valid(sq, taps);

    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double sum_ssim = 0.0;
    double sum_cs = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
        const double num0 = mx.v[i] * my.v[i] * 2.0;
        const double den0 = mx.v[i] * mx.v[i] + my.v[i] * my.v[i];
        const double lum = (num0 + c1) / (den0 + c1);
        const double cs = (mxy.v[i] * 2.0 - num0 + c2) / (msq.v[i] - den0 + c2);
        sum_ssim += lum * cs;
        sum_cs += cs;
    }
    const double n = static_cast<double>(mx.v.size());
    return {sum_ssim / n, sum_cs / n};
}

// 2x2 average pooling; odd sizes first repeat their last row / column.
Plane downsample(const Plane& in) {
    const int w = (in.width + 1) / 2;
    const int h = (in.height + 1) / 2;
    Plane out{w, h, std::vector<double>(static_cast<std::size_t>(w) * static_cast<std::size_t>(h))};
    for (int r = 0; r < h; ++r) {
        const int r0 = 2 * r;
        const int r1 = std::min(2 * r + 1, in.height - 1);
        for (int c = 0; c < w; ++c) {
            const int c0 = 2 * c;
            const int c1 = std::min(2 * c + 1, in.width - 1);
            out.v[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                  static_cast<std::size_t>(c)] =
                (in.at(r0, c0) + in.at(r0, c1) + in.at(r1, c0) + in.at(r1, c1)) / 4.0;
        }
    }
    return out;
}

std::pair<Plane, Plane> planes(const std::vector<double>& a, const std::vector<double>& b,
                               int width, int height) {
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (width < 1 || height < 1 || a.size() != n || b.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "image planes differ in size");
    }
    return {Plane{width, height, a}, Plane{width, height, b}};
}

void check_same_size(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "images differ in size: " + std::to_string(a.width()) + "x" +
                        std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                        std::to_string(b.height()));
    }
}

}  // namespace

void SsimParams::validate() const {
    if (window < 1 || window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "SSIM window must be odd");
    if (!(sigma > 0.0) || !(dynamic_range > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "SSIM sigma and dynamic range must be positive");
    }
    if (scale_weights.empty()) throw Error(ErrorCode::InvalidArgument, "MS-SSIM needs scale weights");
    for (double w : scale_weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw Error(ErrorCode::InvalidArgument, "MS-SSIM weights must be positive and finite");
        }
    }
}

double ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
            const SsimParams& params) {
    params.validate();
    auto [x, y] = planes(a, b, width, height);
    return ssim_terms(x, y, params).ssim;
}

double ms_ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
               const SsimParams& params) {
    params.validate();
    auto [x, y] = planes(a, b, width, height);
    const int scales = static_cast<int>(params.scale_weights.size());
    const long need = (1L << (scales - 1)) * params.window;
    if (width < need || height < need) {
        throw Error(ErrorCode::InvalidArgument,
                    "image too small for " + std::to_string(scales) + "-scale MS-SSIM: need at least " +
                        std::to_string(need) + " px per side");
    }
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        if (s > 0) {
            x = downsample(x);
            y = downsample(y);
        }
        const SsimTerms t = ssim_terms(x, y, params);
        const double term = s + 1 < scales ? t.cs : t.ssim;
        result *= std::pow(std::max(term, 0.0), params.scale_weights[static_cast<std::size_t>(s)]);
    }
    return result;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
    check_same_size(a, b);
    return ssim(luminance(a), luminance(b), a.width(), a.height(), params);
}

double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& params) {
    check_same_size(a, b);
    return ms_ssim(luminance(a), luminance(b), a.width(), a.height(), params);
}

EndpointError map_endpoint_error(const BackwardMap& pred, const BackwardMap& gt) {
    if (pred.size() != gt.size()) {
        throw Error(ErrorCode::DimensionMismatch, "backward maps differ in size");
    }
    EndpointError e;
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const double d = norm(pred.data()[i] - gt.data()[i]);
        sum += d;
        e.max_px = std::max(e.max_px, d);
    }
    e.mean_px = sum / static_cast<double>(pred.data().size());
    return e;
}

}  // namespace cpd::metrics
