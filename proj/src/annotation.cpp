#include "cpdewarp/annotation.hpp"

#include "cpdewarp/image_io.hpp"

namespace cpd {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) {
    throw Error(ErrorCode::Format, "invalid annotation: " + what);
}

double finite_number(const json& j, const char* what) {
    if (!j.is_number()) bad(std::string(what) + " must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) bad(std::string(what) + " must be finite");
    return v;
}

Point2 point(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2) bad(std::string(what) + " must be [x, y]");
    return {finite_number(j[0], what), finite_number(j[1], what)};
}

const json& field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) bad(std::string("missing field '") + key + "'");
    return *it;
}

int positive_int(const json& j, const char* what) {
    if (!j.is_number_integer()) bad(std::string(what) + " must be an integer");
    const auto v = j.get<std::int64_t>();
    if (v < 1 || v > (1 << 24)) bad(std::string(what) + " out of range");
    return static_cast<int>(v);
}

}  // namespace

json to_json(const AnnotationRecord& r) {
    json pts = json::array();
    for (const auto& p : r.control.points()) pts.push_back({p.x, p.y});
    return {
        {"version", kAnnotationVersion},
        {"image", r.image},
        {"image_size", {r.image_size.width, r.image_size.height}},
        {"grid", {{"rows", r.control.rows()}, {"cols", r.control.cols()}}},
        {"control_points", std::move(pts)},
        {"reference",
         {{"v_interval", r.reference.v_interval},
          {"h_interval", r.reference.h_interval},
          {"origin", {r.reference.origin.x, r.reference.origin.y}}}},
        {"provenance", {{"seed", r.provenance.seed}, {"source", r.provenance.source}}},
    };
}

AnnotationRecord annotation_from_json(const json& j) {
    if (!j.is_object()) bad("top level must be an object");
    const json& version = field(j, "version");
    if (!version.is_number_integer() || version.get<int>() != kAnnotationVersion) {
        bad("unsupported version");
    }
    AnnotationRecord r;
    const json& image = field(j, "image");
    if (!image.is_string()) bad("image must be a string");
    r.image = image.get<std::string>();

    const json& size = field(j, "image_size");
    if (!size.is_array() || size.size() != 2) bad("image_size must be [w, h]");
    r.image_size = {positive_int(size[0], "image width"), positive_int(size[1], "image height")};

    const json& grid = field(j, "grid");
    const int rows = positive_int(field(grid, "rows"), "grid rows");
    const int cols = positive_int(field(grid, "cols"), "grid cols");
    if (rows < 2 || cols < 2) bad("grid must be at least 2x2");

    const json& pts = field(j, "control_points");
    if (!pts.is_array() || pts.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        bad("control_points must hold rows*cols entries");
    }
    std::vector<Point2> points;
    points.reserve(pts.size());
    for (const auto& p : pts) points.push_back(point(p, "control point"));
    r.control = ControlGrid(rows, cols, std::move(points));

    const json& ref = field(j, "reference");
    r.reference.v_interval = finite_number(field(ref, "v_interval"), "v_interval");
    r.reference.h_interval = finite_number(field(ref, "h_interval"), "h_interval");
    r.reference.origin = point(field(ref, "origin"), "reference origin");
    r.reference.rows = rows;
    r.reference.cols = cols;
    if (!(r.reference.v_interval > 0.0) || !(r.reference.h_interval > 0.0)) {
        bad("reference intervals must be positive");
    }

    if (auto it = j.find("provenance"); it != j.end()) {
        if (!it->is_object()) bad("provenance must be an object");
        if (auto s = it->find("seed"); s != it->end()) {
            if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0)) {
                bad("provenance.seed must be a non-negative integer");
            }
            r.provenance.seed = s->get<std::uint64_t>();
        }
        if (auto s = it->find("source"); s != it->end()) {
            if (!s->is_string()) bad("provenance.source must be a string");
            r.provenance.source = s->get<std::string>();
        }
    }
    return r;
}

AnnotationRecord read_annotation(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Format, "annotation is not valid JSON: " + path.string());
    return annotation_from_json(j);
}

void write_annotation(const std::filesystem::path& path, const AnnotationRecord& record) {
    write_file_atomic(path, to_json(record).dump(1) + "\n");
}

}  // namespace cpd
