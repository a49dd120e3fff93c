#include "cpdewarp/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <opencv2/imgproc.hpp>
#include <system_error>

#include "cpdewarp/dewarp.hpp"
#include "cpdewarp/grid.hpp"
#include "cpdewarp/image_io.hpp"
#include "cpdewarp/kernels.hpp"
#include "cpdewarp/map_io.hpp"
#include "cv_bridge.hpp"

namespace cpd::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kCanvasMargin = 2.0;
constexpr Color kBlack{0, 0, 0};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

Point2 unit_direction(Point2 d) {
    const double n = norm(d);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw Error(ErrorCode::InvalidArgument, "perturbation direction must be a non-zero vector");
    }
    return d * (1.0 / n);
}

void check_range(Range r, const char* what, double min_lo = -INFINITY) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi || r.lo < min_lo) {
        throw Error(ErrorCode::InvalidArgument, std::string("invalid range for ") + what);
    }
}

void check_range(IntRange r, const char* what) {
    if (r.lo < 0 || r.lo > r.hi) {
        throw Error(ErrorCode::InvalidArgument, std::string("invalid range for ") + what);
    }
}

struct Box {
    double min_x, min_y, max_x, max_y;
};

Box bounds(const ControlGrid& g) {
    Box b{INFINITY, INFINITY, -INFINITY, -INFINITY};
    for (const auto& p : g.points()) {
        b.min_x = std::min(b.min_x, p.x);
        b.min_y = std::min(b.min_y, p.y);
        b.max_x = std::max(b.max_x, p.x);
        b.max_y = std::max(b.max_y, p.y);
    }
    return b;
}

// Shrinks and shifts the grid when its bounding box leaves the canvas.
ControlGrid fit_to_canvas(const ControlGrid& grid, Size canvas, double* applied_scale) {
    const Box b = bounds(grid);
    const double avail_w = canvas.width - 1 - 2 * kCanvasMargin;
    const double avail_h = canvas.height - 1 - 2 * kCanvasMargin;
    const double bw = b.max_x - b.min_x;
    const double bh = b.max_y - b.min_y;
    const double s = std::min({1.0, avail_w / bw, avail_h / bh});
    const Point2 centre{(b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2};
    const double half_w = bw * s / 2;
    const double half_h = bh * s / 2;
    const Point2 target{
        std::clamp(centre.x, kCanvasMargin + half_w, canvas.width - 1 - kCanvasMargin - half_w),
        std::clamp(centre.y, kCanvasMargin + half_h, canvas.height - 1 - kCanvasMargin - half_h)};
    *applied_scale = s;
    if (s == 1.0 && target == centre) return grid;
    std::vector<Point2> pts(grid.points().begin(), grid.points().end());
    for (auto& p : pts) p = target + (p - centre) * s;
    return ControlGrid(grid.rows(), grid.cols(), std::move(pts));
}

// (u, v) with q = a + u (b - a) + v (d - a) + u v (a - b + c - d), quad a b c d
// in ring order. Empty when q lies outside the quad.
std::optional<Point2> inverse_bilinear(Point2 a, Point2 b, Point2 c, Point2 d, Point2 q) {
    const Point2 e = b - a;
    const Point2 f = d - a;
    const Point2 g = a - b + c - d;
    const Point2 h = q - a;
    const double k2 = cross(g, f);
    const double k1 = cross(e, f) + cross(h, g);
    const double k0 = cross(h, e);
    const double disc = k1 * k1 - 4.0 * k0 * k2;
    if (disc < 0.0) return std::nullopt;
    const double w = std::sqrt(disc);
    const double qq = -0.5 * (k1 + (k1 >= 0.0 ? w : -w));

    auto solve_u = [&](double v) {
        const double dx = e.x + g.x * v;
        const double dy = e.y + g.y * v;
        return std::abs(dx) >= std::abs(dy) ? (h.x - f.x * v) / dx : (h.y - f.y * v) / dy;
    };
    auto distance_outside = [](Point2 uv) {
        auto out = [](double t) { return t < 0.0 ? -t : (t > 1.0 ? t - 1.0 : 0.0); };
        return out(uv.x) + out(uv.y);
    };

    std::optional<Point2> best;
    auto consider = [&](double v) {
        if (!std::isfinite(v)) return;
        const Point2 uv{solve_u(v), v};
        if (!std::isfinite(uv.x)) return;
        if (!best || distance_outside(uv) < distance_outside(*best)) best = uv;
    };
    if (qq != 0.0) consider(k0 / qq);
    if (k2 != 0.0) consider(qq / k2);
    if (!best) return std::nullopt;

    // Newton polish on the forward bilinear map.
    Point2 uv = *best;
    for (int it = 0; it < 2; ++it) {
        const Point2 r = a + e * uv.x + f * uv.y + g * (uv.x * uv.y) - q;
        const Point2 ju = e + g * uv.y;
        const Point2 jv = f + g * uv.x;
        const double det = cross(ju, jv);
        if (det == 0.0) break;
        uv = {uv.x - cross(r, jv) / det, uv.y - cross(ju, r) / det};
    }
    constexpr double tol = 1e-7;
    if (uv.x < -tol || uv.x > 1.0 + tol || uv.y < -tol || uv.y > 1.0 + tol) return std::nullopt;
    return uv;
}

ImageBuffer procedural_background(Size canvas, Rng& rng) {
    const double base[3] = {rng.uniform(50, 200), rng.uniform(50, 200), rng.uniform(50, 200)};
    const double fx = rng.uniform(0.005, 0.05);
    const double fy = rng.uniform(0.005, 0.05);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double amp = rng.uniform(5, 30);
    const std::uint64_t noise_seed = rng.next();
    ImageBuffer bg(canvas.width, canvas.height, 3);
    for (int i = 0; i < canvas.height; ++i) {
        for (int j = 0; j < canvas.width; ++j) {
            const double wave = amp * std::sin(fx * j + fy * i + phase);
            const std::uint64_t h = splitmix64(noise_seed ^ (static_cast<std::uint64_t>(i) << 32 |
                                                             static_cast<std::uint64_t>(j)));
            std::uint8_t* p = bg.pixel(i, j);
            for (int k = 0; k < 3; ++k) {
                const double noise = static_cast<double>((h >> (16 * k)) & 0xFF) / 255.0 * 16.0 - 8.0;
                p[k] = static_cast<std::uint8_t>(std::clamp(std::lround(base[k] + wave + noise), 0L, 255L));
            }
        }
    }
    return bg;
}

ImageBuffer apply_photometric(const ImageBuffer& image, const PhotometricConfig& cfg, Rng& rng,
                              json& params) {
    cv::Mat m = to_mat(to_rgb(image));
    if (cfg.shadow) {
        const double strength = rng.uniform(cfg.shadow_strength);
        const double angle = rng.uniform(0, 2 * std::numbers::pi);
        const double dx = std::cos(angle);
        const double dy = std::sin(angle);
        // t runs 0..1 across the canvas along the shadow direction
        const double span = std::abs(dx) * (m.cols - 1) + std::abs(dy) * (m.rows - 1);
        const double t0 = std::min(0.0, dx * (m.cols - 1)) + std::min(0.0, dy * (m.rows - 1));
        for (int i = 0; i < m.rows; ++i) {
            auto* row = m.ptr<std::uint8_t>(i);
            for (int j = 0; j < m.cols; ++j) {
                const double t = span > 0 ? (dx * j + dy * i - t0) / span : 0.0;
                const double gain = 1.0 - strength * t;
                for (int k = 0; k < 3; ++k) {
                    row[3 * j + k] = static_cast<std::uint8_t>(
                        std::clamp(std::lround(row[3 * j + k] * gain), 0L, 255L));
                }
            }
        }
        params["shadow"] = {{"strength", strength}, {"angle", angle}};
    }

    const double hue = rng.uniform(cfg.hue_shift_deg);
    const double sat = rng.uniform(cfg.saturation_scale);
    const double val = rng.uniform(cfg.value_scale);
    cv::Mat hsv;
    cv::cvtColor(m, hsv, cv::COLOR_RGB2HSV_FULL);
    for (int i = 0; i < hsv.rows; ++i) {
        auto* row = hsv.ptr<std::uint8_t>(i);
        for (int j = 0; j < hsv.cols; ++j) {
            // hue is 0..255 for a full turn in the _FULL conversions
            const long h = std::lround(row[3 * j] + hue * 256.0 / 360.0);
            row[3 * j] = static_cast<std::uint8_t>(((h % 256) + 256) % 256);
            row[3 * j + 1] = static_cast<std::uint8_t>(std::clamp(std::lround(row[3 * j + 1] * sat), 0L, 255L));
            row[3 * j + 2] = static_cast<std::uint8_t>(std::clamp(std::lround(row[3 * j + 2] * val), 0L, 255L));
        }
    }
    cv::cvtColor(hsv, m, cv::COLOR_HSV2RGB_FULL);
    params["hsv"] = {{"hue_deg", hue}, {"saturation", sat}, {"value", val}};

    const double sigma = rng.uniform(cfg.blur_sigma);
    if (sigma > 0.05) cv::GaussianBlur(m, m, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
    params["blur_sigma"] = sigma;
    return from_mat(m);
}

json point_json(Point2 p) { return {p.x, p.y}; }

Range range_from(const json& j, Range fallback) {
    if (!j.is_array() || j.size() != 2) {
        throw Error(ErrorCode::Format, "config ranges must be [lo, hi]");
    }
    (void)fallback;
    return {j[0].get<double>(), j[1].get<double>()};
}

IntRange int_range_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::Format, "config ranges must be [lo, hi]");
    return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

void SynthConfig::validate() const {
    if (rows < 2 || cols < 2) throw Error(ErrorCode::InvalidArgument, "synthetic grid needs rows, cols >= 2");
    if (canvas < 16) throw Error(ErrorCode::InvalidArgument, "canvas must be at least 16 px");
    check_range(fold_count, "fold_count");
    check_range(curve_count, "curve_count");
    check_range(fold_strength, "fold_strength", 0.0);
    check_range(fold_alpha, "fold_alpha");
    if (!(fold_alpha.lo > 0.0)) throw Error(ErrorCode::InvalidArgument, "fold_alpha must be > 0");
    check_range(curve_strength, "curve_strength", 0.0);
    check_range(curve_exponent, "curve_exponent");
    if (!(curve_exponent.lo > 0.0)) throw Error(ErrorCode::InvalidArgument, "curve_exponent must be > 0");
    check_range(rotation_deg, "rotation_deg");
    check_range(scale, "scale");
    if (!(scale.lo > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be > 0");
    check_range(translation_px, "translation_px");
    check_range(photometric.blur_sigma, "blur_sigma", 0.0);
    check_range(photometric.shadow_strength, "shadow_strength", 0.0);
    if (photometric.shadow_strength.hi > 1.0) throw Error(ErrorCode::InvalidArgument, "shadow_strength must be <= 1");
    check_range(photometric.hue_shift_deg, "hue_shift_deg");
    check_range(photometric.saturation_scale, "saturation_scale", 0.0);
    check_range(photometric.value_scale, "value_scale", 0.0);
}

SynthConfig config_from_json(const json& j, SynthConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::Format, "synth config must be a JSON object");
    try {
        if (j.contains("rows")) c.rows = j["rows"].get<int>();
        if (j.contains("cols")) c.cols = j["cols"].get<int>();
        if (j.contains("canvas")) c.canvas = j["canvas"].get<int>();
        if (j.contains("fold_count")) c.fold_count = int_range_from(j["fold_count"]);
        if (j.contains("fold_strength")) c.fold_strength = range_from(j["fold_strength"], c.fold_strength);
        if (j.contains("fold_alpha")) c.fold_alpha = range_from(j["fold_alpha"], c.fold_alpha);
        if (j.contains("curve_count")) c.curve_count = int_range_from(j["curve_count"]);
        if (j.contains("curve_strength")) c.curve_strength = range_from(j["curve_strength"], c.curve_strength);
        if (j.contains("curve_exponent")) c.curve_exponent = range_from(j["curve_exponent"], c.curve_exponent);
        if (j.contains("rotation_deg")) c.rotation_deg = range_from(j["rotation_deg"], c.rotation_deg);
        if (j.contains("scale")) c.scale = range_from(j["scale"], c.scale);
        if (j.contains("translation_px")) c.translation_px = range_from(j["translation_px"], c.translation_px);
        if (j.contains("background_dir")) c.background_dir = fs::path(j["background_dir"].get<std::string>());
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("photometric")) {
            const json& p = j["photometric"];
            auto& ph = c.photometric;
            if (p.contains("enabled")) ph.enabled = p["enabled"].get<bool>();
            if (p.contains("blur_sigma")) ph.blur_sigma = range_from(p["blur_sigma"], ph.blur_sigma);
            if (p.contains("shadow")) ph.shadow = p["shadow"].get<bool>();
            if (p.contains("shadow_strength")) ph.shadow_strength = range_from(p["shadow_strength"], ph.shadow_strength);
            if (p.contains("hue_shift_deg")) ph.hue_shift_deg = range_from(p["hue_shift_deg"], ph.hue_shift_deg);
            if (p.contains("saturation_scale")) ph.saturation_scale = range_from(p["saturation_scale"], ph.saturation_scale);
            if (p.contains("value_scale")) ph.value_scale = range_from(p["value_scale"], ph.value_scale);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, std::string("invalid synth config: ") + e.what());
    }
    c.validate();
    return c;
}

json to_json(const SynthConfig& c) {
    auto r = [](Range x) { return json::array({x.lo, x.hi}); };
    auto ir = [](IntRange x) { return json::array({x.lo, x.hi}); };
    json j = {
        {"rows", c.rows},
        {"cols", c.cols},
        {"canvas", c.canvas},
        {"fold_count", ir(c.fold_count)},
        {"fold_strength", r(c.fold_strength)},
        {"fold_alpha", r(c.fold_alpha)},
        {"curve_count", ir(c.curve_count)},
        {"curve_strength", r(c.curve_strength)},
        {"curve_exponent", r(c.curve_exponent)},
        {"rotation_deg", r(c.rotation_deg)},
        {"scale", r(c.scale)},
        {"translation_px", r(c.translation_px)},
        {"seed", c.seed},
        {"photometric",
         {{"enabled", c.photometric.enabled},
          {"blur_sigma", r(c.photometric.blur_sigma)},
          {"shadow", c.photometric.shadow},
          {"shadow_strength", r(c.photometric.shadow_strength)},
          {"hue_shift_deg", r(c.photometric.hue_shift_deg)},
          {"saturation_scale", r(c.photometric.saturation_scale)},
          {"value_scale", r(c.photometric.value_scale)}}},
    };
    if (c.background_dir) j["background_dir"] = c.background_dir->string();
    return j;
}

double Rng::uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

int Rng::integer(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt) {
    return splitmix64(splitmix64(splitmix64(master) ^ index) ^ (attempt * 0xD1B54A32D192ED03ull));
}

std::pair<ControlGrid, ReferenceSpec> make_base_grid(int scan_w, int scan_h, int rows, int cols) {
    if (scan_w < 1 || scan_h < 1) throw Error(ErrorCode::InvalidArgument, "scan dimensions must be positive");
    ReferenceSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.origin = {0.0, 0.0};
    spec.h_interval = static_cast<double>(scan_w) / (cols - 1);
    spec.v_interval = static_cast<double>(scan_h) / (rows - 1);
    spec.validate();
    return {build_reference_grid(spec), spec};
}

ControlGrid perturb_fold(const ControlGrid& grid, Point2 center, Point2 direction, double strength,
                         double alpha) {
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "fold alpha must be > 0");
    const Point2 dir = unit_direction(direction);
    std::vector<Point2> pts(grid.points().begin(), grid.points().end());
    for (auto& p : pts) {
        const Point2 rel = p - center;
        const double d = std::abs(rel.x * dir.x + rel.y * dir.y);
        p = p + dir * (strength * alpha / (d + alpha));
    }
    return ControlGrid(grid.rows(), grid.cols(), std::move(pts));
}

ControlGrid perturb_curve(const ControlGrid& grid, Point2 center, Point2 direction,
                          double strength, double exponent) {
    if (!(exponent > 0.0)) throw Error(ErrorCode::InvalidArgument, "curve exponent must be > 0");
    const Point2 dir = unit_direction(direction);
    std::vector<Point2> pts(grid.points().begin(), grid.points().end());
    std::vector<double> dist(pts.size());
    double d_max = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point2 rel = pts[i] - center;
        dist[i] = std::abs(rel.x * dir.x + rel.y * dir.y);
        d_max = std::max(d_max, dist[i]);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double falloff = d_max > 0.0 ? 1.0 - std::pow(dist[i] / d_max, exponent) : 1.0;
        pts[i] = pts[i] + dir * (strength * falloff);
    }
    return ControlGrid(grid.rows(), grid.cols(), std::move(pts));
}

ControlGrid apply_affine(const ControlGrid& grid, double rotation_deg, double scale,
                         Point2 translation) {
    if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "affine scale must be > 0");
    Point2 centroid;
    for (const auto& p : grid.points()) centroid = centroid + p;
    centroid = centroid * (1.0 / static_cast<double>(grid.size()));
    const double t = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t) * scale;
    const double s = std::sin(t) * scale;
    std::vector<Point2> pts(grid.points().begin(), grid.points().end());
    for (auto& p : pts) {
        const Point2 r = p - centroid;
        p = centroid + Point2{c * r.x - s * r.y, s * r.x + c * r.y} + translation;
    }
    return ControlGrid(grid.rows(), grid.cols(), std::move(pts));
}

PaddedImage resize_with_padding(const ImageBuffer& image, const ControlGrid& grid, int target) {
    if (target < 1) throw Error(ErrorCode::InvalidArgument, "padding target must be positive");
    const double s = static_cast<double>(target) / std::max(image.width(), image.height());
    const int w = std::clamp(static_cast<int>(std::lround(image.width() * s)), 1, target);
    const int h = std::clamp(static_cast<int>(std::lround(image.height() * s)), 1, target);
    const ImageBuffer resized = resize_image(image, {w, h});

    PaddedImage out;
    out.scale_x = static_cast<double>(w) / image.width();
    out.scale_y = static_cast<double>(h) / image.height();
    const int pad_x = (target - w) / 2;
    const int pad_y = (target - h) / 2;
    out.offset = {static_cast<double>(pad_x), static_cast<double>(pad_y)};
    out.image = ImageBuffer(target, target, image.channels(), std::uint8_t{0});
    const std::size_t row_bytes = static_cast<std::size_t>(w) * static_cast<std::size_t>(image.channels());
    for (int i = 0; i < h; ++i) {
        std::copy_n(resized.pixel(i, 0), row_bytes, out.image.pixel(i + pad_y, pad_x));
    }
    std::vector<Point2> pts;
    pts.reserve(grid.size());
    for (const auto& p : grid.points()) pts.push_back(out.transform(p));
    out.grid = ControlGrid(grid.rows(), grid.cols(), std::move(pts));
    return out;
}

bool mesh_is_valid(const ControlGrid& grid) {
    for (int r = 0; r + 1 < grid.rows(); ++r) {
        for (int c = 0; c + 1 < grid.cols(); ++c) {
            const Point2 q[4] = {grid.at(r, c), grid.at(r, c + 1), grid.at(r + 1, c + 1),
                                 grid.at(r + 1, c)};
            for (int k = 0; k < 4; ++k) {
                const Point2 e0 = q[(k + 1) % 4] - q[k];
                const Point2 e1 = q[(k + 2) % 4] - q[(k + 1) % 4];
                if (!(cross(e0, e1) > 0.0)) return false;
            }
        }
    }
    return true;
}

RenderResult render_distorted(const ImageBuffer& flat, const ReferenceSpec& reference,
                              const ControlGrid& warped, Size canvas,
                              const ImageBuffer& background, const PhotometricConfig& photometric,
                              Rng& rng) {
    reference.validate();
    if (warped.rows() != reference.rows || warped.cols() != reference.cols) {
        throw Error(ErrorCode::ShapeMismatch, "warped grid does not match the reference lattice");
    }
    if (canvas.width < 1 || canvas.height < 1) {
        throw Error(ErrorCode::InvalidArgument, "canvas must be positive");
    }
    if (!mesh_is_valid(warped)) {
        throw Error(ErrorCode::RetryableDegenerate, "warped mesh folds over itself");
    }

    RenderResult res;
    res.clean_image = to_rgb(background.size() == canvas ? background : resize_image(background, canvas));
    res.coverage.assign(static_cast<std::size_t>(canvas.width) * static_cast<std::size_t>(canvas.height), 0);
    const ImageBuffer source = to_rgb(flat);

    // cells touching each canvas row, in lattice order
    std::vector<std::vector<int>> rows_to_cells(static_cast<std::size_t>(canvas.height));
    const int cell_cols = warped.cols() - 1;
    for (int r = 0; r + 1 < warped.rows(); ++r) {
        for (int c = 0; c < cell_cols; ++c) {
            const double lo = std::min({warped.at(r, c).y, warped.at(r, c + 1).y,
                                        warped.at(r + 1, c).y, warped.at(r + 1, c + 1).y});
            const double hi = std::max({warped.at(r, c).y, warped.at(r, c + 1).y,
                                        warped.at(r + 1, c).y, warped.at(r + 1, c + 1).y});
            const int y0 = std::max(0, static_cast<int>(std::ceil(lo)));
            const int y1 = std::min(canvas.height - 1, static_cast<int>(std::floor(hi)));
            for (int y = y0; y <= y1; ++y) rows_to_cells[static_cast<std::size_t>(y)].push_back(r * cell_cols + c);
        }
    }

    for (int y = 0; y < canvas.height; ++y) {
        for (int cell : rows_to_cells[static_cast<std::size_t>(y)]) {
            const int r = cell / cell_cols;
            const int c = cell % cell_cols;
            const Point2 a = warped.at(r, c);
            const Point2 b = warped.at(r, c + 1);
            const Point2 cc = warped.at(r + 1, c + 1);
            const Point2 d = warped.at(r + 1, c);
            const double lo = std::min({a.x, b.x, cc.x, d.x});
            const double hi = std::max({a.x, b.x, cc.x, d.x});
            const int x0 = std::max(0, static_cast<int>(std::ceil(lo)));
            const int x1 = std::min(canvas.width - 1, static_cast<int>(std::floor(hi)));
            for (int x = x0; x <= x1; ++x) {
                auto& covered = res.coverage[static_cast<std::size_t>(y) * static_cast<std::size_t>(canvas.width) +
                                             static_cast<std::size_t>(x)];
                if (covered) continue;
                const auto uv = inverse_bilinear(a, b, cc, d, {static_cast<double>(x), static_cast<double>(y)});
                if (!uv) continue;
                const double sx = reference.origin.x + (c + uv->x) * reference.h_interval;
                const double sy = reference.origin.y + (r + uv->y) * reference.v_interval;
                kernels::sample_bilinear(source, sx, sy, kBlack, res.clean_image.pixel(y, x));
                covered = 1;
            }
        }
    }

    DewarpOptions opts;
    opts.method = Method::Linear;
    res.ground_truth = dewarp_map(warped, reference, opts);

    if (photometric.enabled) {
        json ignored;
        res.image = apply_photometric(res.clean_image, photometric, rng, ignored);
    } else {
        res.image = res.clean_image;
    }
    return res;
}

ImageBuffer flat_target(const ImageBuffer& flat, const ReferenceSpec& reference) {
    DewarpOptions opts;
    opts.method = Method::Linear;
    opts.fill = kBlack;
    return dewarp(flat, build_reference_grid(reference), reference, opts);
}

SynthSample generate_sample(const ImageBuffer& scan, const std::string& source_id,
                            const SynthConfig& config, std::uint64_t sample_seed,
                            const std::vector<ImageBuffer>& backgrounds) {
    config.validate();
    const Size canvas{config.canvas, config.canvas};
    const ImageBuffer scan_rgb = to_rgb(scan);
    const auto [base_grid, base_spec] = make_base_grid(scan.width(), scan.height(), config.rows, config.cols);
    const PaddedImage padded = resize_with_padding(scan_rgb, base_grid, config.canvas);

    ReferenceSpec reference = base_spec;
    reference.origin = padded.transform(base_spec.origin);
    reference.h_interval = base_spec.h_interval * padded.scale_x;
    reference.v_interval = base_spec.v_interval * padded.scale_y;

    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(derive_seed(sample_seed, 0, static_cast<std::uint64_t>(attempt)));
        json params;
        ControlGrid warped = padded.grid;
        const Box page = bounds(warped);

        json folds = json::array();
        const int n_folds = rng.integer(config.fold_count.lo, config.fold_count.hi);
        for (int k = 0; k < n_folds; ++k) {
            const Point2 centre{rng.uniform(page.min_x, page.max_x), rng.uniform(page.min_y, page.max_y)};
            const double angle = rng.uniform(0, 2 * std::numbers::pi);
            const double strength = rng.uniform(config.fold_strength);
            const double alpha = rng.uniform(config.fold_alpha);
            warped = perturb_fold(warped, centre, {std::cos(angle), std::sin(angle)}, strength, alpha);
            folds.push_back({{"center", point_json(centre)}, {"angle", angle}, {"strength", strength}, {"alpha", alpha}});
        }
        json curves = json::array();
        const int n_curves = rng.integer(config.curve_count.lo, config.curve_count.hi);
        for (int k = 0; k < n_curves; ++k) {
            const Point2 centre{rng.uniform(page.min_x, page.max_x), rng.uniform(page.min_y, page.max_y)};
            const double angle = rng.uniform(0, 2 * std::numbers::pi);
            const double strength = rng.uniform(config.curve_strength);
            const double exponent = rng.uniform(config.curve_exponent);
            warped = perturb_curve(warped, centre, {std::cos(angle), std::sin(angle)}, strength, exponent);
            curves.push_back({{"center", point_json(centre)}, {"angle", angle}, {"strength", strength}, {"exponent", exponent}});
        }
        const double rotation = rng.uniform(config.rotation_deg);
        const double scale = rng.uniform(config.scale);
        const Point2 shift{rng.uniform(config.translation_px), rng.uniform(config.translation_px)};
        warped = apply_affine(warped, rotation, scale, shift);
        double fit_scale = 1.0;
        warped = fit_to_canvas(warped, canvas, &fit_scale);

        ImageBuffer background;
        if (!backgrounds.empty()) {
            const int pick = rng.integer(0, static_cast<int>(backgrounds.size()) - 1);
            background = backgrounds[static_cast<std::size_t>(pick)];
            params["background"] = pick;
        } else {
            background = procedural_background(canvas, rng);
            params["background"] = "procedural";
        }

        RenderResult render;
        PhotometricConfig no_photo = config.photometric;
        no_photo.enabled = false;
        try {
            render = render_distorted(padded.image, reference, warped, canvas, background, no_photo, rng);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::RetryableDegenerate) continue;
            throw;
        }

        SynthSample s;
        s.clean_image = render.clean_image;
        if (config.photometric.enabled) {
            json photo;
            s.image = apply_photometric(render.clean_image, config.photometric, rng, photo);
            params["photometric"] = std::move(photo);
        } else {
            s.image = render.clean_image;
        }
        s.flat = padded.image;
        s.ground_truth = std::move(render.ground_truth);
        s.annotation.image_size = canvas;
        s.annotation.control = warped;
        s.annotation.reference = reference;
        s.annotation.provenance = {sample_seed, source_id};
        params["folds"] = std::move(folds);
        params["curves"] = std::move(curves);
        params["affine"] = {{"rotation_deg", rotation}, {"scale", scale}, {"translation", point_json(shift)}, {"fit_scale", fit_scale}};
        params["padding"] = {{"scale", {padded.scale_x, padded.scale_y}}, {"offset", point_json(padded.offset)}};
        s.params = std::move(params);
        s.attempts = attempt + 1;
        return s;
    }
    throw Error(ErrorCode::RetryableDegenerate,
                "no valid warp after " + std::to_string(kMaxAttempts) + " attempts");
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
    }
    if (ec) throw Error(ErrorCode::Io, "cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<json> synthesize_dataset(const fs::path& scans_dir, const SynthConfig& config, int count,
                                     const fs::path& out_dir) {
    config.validate();
    if (count < 0) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 0");
    const auto scan_paths = list_images(scans_dir);
    if (scan_paths.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no PNG/JPEG scans in " + scans_dir.string());
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw Error(ErrorCode::Io, "cannot create output directory " + out_dir.string());
    }

    std::vector<ImageBuffer> scans;
    scans.reserve(scan_paths.size());
    for (const auto& p : scan_paths) scans.push_back(read_image(p));
    std::vector<ImageBuffer> backgrounds;
    if (config.background_dir) {
        for (const auto& p : list_images(*config.background_dir)) backgrounds.push_back(read_image(p));
    }

    std::vector<json> manifest(static_cast<std::size_t>(count));
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < count; ++i) {
        try {
            const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
            Rng pick(seed);
            const auto scan_idx = static_cast<std::size_t>(pick.integer(0, static_cast<int>(scans.size()) - 1));
            const std::string source = scan_paths[scan_idx].filename().string();
            SynthSample s = generate_sample(scans[scan_idx], source, config, seed, backgrounds);

            char stem[32];
            std::snprintf(stem, sizeof stem, "sample_%05d", i);
            const std::string name(stem);
            s.annotation.image = name + ".png";
            write_png(out_dir / (name + ".png"), s.image);
            write_annotation(out_dir / (name + ".json"), s.annotation);
            write_backward_map(out_dir / (name + ".cpbm"), s.ground_truth);
            manifest[static_cast<std::size_t>(i)] = {
                {"index", i},
                {"seed", seed},
                {"source", source},
                {"image", name + ".png"},
                {"annotation", name + ".json"},
                {"ground_truth_map", name + ".cpbm"},
                {"attempts", s.attempts},
                {"params", s.params},
            };
        } catch (...) {
            failures[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    std::string lines;
    for (const auto& m : manifest) lines += m.dump() + "\n";
    write_file_atomic(out_dir / "manifest.jsonl", lines);
    return manifest;
}

}  // namespace cpd::synth
