#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "cpdewarp/annotation.hpp"
#include "cpdewarp/types.hpp"

namespace cpd::synth {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct IntRange {
    int lo = 0;
    int hi = 0;
};

struct PhotometricConfig {
    bool enabled = true;
    Range blur_sigma{0.0, 1.2};
    bool shadow = true;
    Range shadow_strength{0.0, 0.35};  // fraction of brightness removed at the dark end
    Range hue_shift_deg{-8.0, 8.0};
    Range saturation_scale{0.85, 1.15};
    Range value_scale{0.9, 1.08};
};

struct SynthConfig {
    int rows = 61;
    int cols = 61;
    int canvas = 992;
    IntRange fold_count{0, 2};
    Range fold_strength{4.0, 30.0};  // px
    Range fold_alpha{80.0, 240.0};   // px, decay distance
    IntRange curve_count{1, 2};
    Range curve_strength{6.0, 40.0};  // px
    Range curve_exponent{1.5, 3.0};
    Range rotation_deg{-6.0, 6.0};
    Range scale{0.72, 0.88};
    Range translation_px{-25.0, 25.0};
    PhotometricConfig photometric;
    std::optional<std::filesystem::path> background_dir;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Applies the keys present in `j` on top of `base` (see README for keys).
SynthConfig config_from_json(const nlohmann::json& j, SynthConfig base = {});
nlohmann::json to_json(const SynthConfig& config);

/// Deterministic random stream; identical on every platform for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi);
    double uniform(Range r) { return uniform(r.lo, r.hi); }
    int integer(int lo, int hi);  // inclusive
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Per-sample seed derived from the master seed, sample index and attempt.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt = 0);

/// Lattice spanning [0, w] x [0, h] and its reference description.
std::pair<ControlGrid, ReferenceSpec> make_base_grid(int scan_w, int scan_h, int rows, int cols);

/// Crease: every vertex moves by direction * strength * alpha / (d + alpha),
/// d being |(p - center) . direction|.
ControlGrid perturb_fold(const ControlGrid& grid, Point2 center, Point2 direction, double strength,
                         double alpha);

/// Bend: displacement direction * strength * (1 - (d / d_max)^exponent).
ControlGrid perturb_curve(const ControlGrid& grid, Point2 center, Point2 direction,
                          double strength, double exponent);

/// Rotation (degrees) and scale about the grid centroid, then translation.
ControlGrid apply_affine(const ControlGrid& grid, double rotation_deg, double scale,
                         Point2 translation);

struct PaddedImage {
    ImageBuffer image;  // target x target
    ControlGrid grid;
    double scale_x = 1.0;
    double scale_y = 1.0;
    Point2 offset;  // top-left of the resized content inside the canvas

    /// Map a coordinate of the input image into the padded canvas.
    Point2 transform(Point2 p) const {
        return {(p.x + 0.5) * scale_x - 0.5 + offset.x, (p.y + 0.5) * scale_y - 0.5 + offset.y};
    }
};

/// Scale the longest side to `target`, keep the aspect ratio and centre the
/// result on a zero-filled target x target canvas.
PaddedImage resize_with_padding(const ImageBuffer& image, const ControlGrid& grid, int target);

/// True when every lattice cell is a convex quad with the same orientation
/// as the reference lattice.
bool mesh_is_valid(const ControlGrid& grid);

struct RenderResult {
    ImageBuffer image;        // after photometric augmentation
    ImageBuffer clean_image;  // geometry only
    BackwardMap ground_truth; // rectified pixel -> distorted canvas coordinate
    std::vector<std::uint8_t> coverage;  // 1 where the page was rendered
};

/// Render `flat` (whose lattice is `reference`) deformed so that reference
/// vertices land on `warped`, composited over `background` of `canvas` size.
/// Throws RetryableDegenerate when the warped mesh folds over itself.
RenderResult render_distorted(const ImageBuffer& flat, const ReferenceSpec& reference,
                              const ControlGrid& warped, Size canvas,
                              const ImageBuffer& background, const PhotometricConfig& photometric,
                              Rng& rng);

/// Rectified view of the flat page: `flat` sampled on the reference lattice
/// span, the target that a perfect dewarp reproduces.
ImageBuffer flat_target(const ImageBuffer& flat, const ReferenceSpec& reference);

struct SynthSample {
    ImageBuffer image;
    ImageBuffer clean_image;
    ImageBuffer flat;  // padded scan on the canvas
    AnnotationRecord annotation;
    BackwardMap ground_truth;
    nlohmann::json params;
    int attempts = 1;
};

/// One sample; retried with fresh random streams on degenerate warps (at most
/// 10 attempts).
SynthSample generate_sample(const ImageBuffer& scan, const std::string& source_id,
                            const SynthConfig& config, std::uint64_t sample_seed,
                            const std::vector<ImageBuffer>& backgrounds = {});

inline constexpr int kMaxAttempts = 10;

/// Writes sample_NNNNN.{png,json,cpbm} plus manifest.jsonl into `out_dir`.
/// Output is identical for any thread count. Returns the manifest records.
std::vector<nlohmann::json> synthesize_dataset(const std::filesystem::path& scans_dir,
                                               const SynthConfig& config, int count,
                                               const std::filesystem::path& out_dir);

/// PNG/JPEG files of a directory in name order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace cpd::synth
